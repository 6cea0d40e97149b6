//! Packs a batch of hierarchical graphs into flat per-level arrays.

use std::ops::Range;

use hfr_core::hiergraph::{GraphBatch, HierGraph, FACET_FEATURES, FACE_FEATURES};

use crate::matrix::Matrix;
use crate::GcnnError;

/// One level of the hierarchy in compressed sparse row form. Every
/// undirected link appears as two directed edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub feats: Matrix,
    pub offsets: Vec<usize>,
    pub nbr: Vec<u32>,
    pub class: Vec<u8>,
    /// `p[nbr] - p[v]` per directed edge.
    pub dp: Vec<[f64; 3]>,
    /// Index of the opposite directed edge.
    pub rev: Vec<u32>,
}

impl Level {
    pub fn new(feats: Matrix, pos: &[[f64; 3]], links: &[(u32, u32, u8)]) -> Result<Self, GcnnError> {
        let n = feats.rows;
        let mut adj: Vec<Vec<(u32, u8)>> = vec![Vec::new(); n];
        for &(a, b, c) in links {
            if a as usize >= n || b as usize >= n || a == b {
                return Err(GcnnError::Input(format!("bad link ({a}, {b}) for {n} vertices")));
            }
            adj[a as usize].push((b, c));
            adj[b as usize].push((a, c));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let (mut nbr, mut class, mut dp) = (Vec::new(), Vec::new(), Vec::new());
        offsets.push(0);
        for (v, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup_by_key(|x| x.0);
            for &(u, c) in list.iter() {
                nbr.push(u);
                class.push(c);
                let (p, q) = (pos[v], pos[u as usize]);
                dp.push([q[0] - p[0], q[1] - p[1], q[2] - p[2]]);
            }
            offsets.push(nbr.len());
        }
        let mut rev = vec![0u32; nbr.len()];
        for v in 0..n {
            for e in offsets[v]..offsets[v + 1] {
                let u = nbr[e] as usize;
                let back = (offsets[u]..offsets[u + 1])
                    .find(|&k| nbr[k] as usize == v)
                    .expect("adjacency is symmetric");
                rev[e] = back as u32;
            }
        }
        Ok(Level { feats, offsets, nbr, class, dp, rev })
    }

    pub fn n(&self) -> usize {
        self.feats.rows
    }

    pub fn edges(&self, v: usize) -> Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedBatch {
    pub facets: Level,
    pub faces: Level,
    /// Parent face (batch-global index) of every facet.
    pub facet_face: Vec<u32>,
    pub facets_per_face: Vec<u32>,
    pub labels: Vec<u8>,
    pub names: Vec<String>,
    /// Face index range of each graph.
    pub graph_faces: Vec<Range<usize>>,
}

fn check_unit(g: &HierGraph, what: &str, xs: &[f64]) -> Result<(), GcnnError> {
    if xs.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(GcnnError::Input(format!("{}: {what} centroid outside the unit box; graph is not normalized", g.name)));
    }
    Ok(())
}

impl PackedBatch {
    pub fn from_graphs(graphs: &[HierGraph]) -> Result<Self, GcnnError> {
        let nf: usize = graphs.iter().map(|g| g.faces.len()).sum();
        let nt: usize = graphs.iter().map(|g| g.facets.len()).sum();
        let mut face_feats = Matrix::zeros(nf, FACE_FEATURES);
        let mut facet_feats = Matrix::zeros(nt, FACET_FEATURES);
        let (mut face_pos, mut facet_pos) = (Vec::with_capacity(nf), Vec::with_capacity(nt));
        let (mut face_links, mut facet_links) = (Vec::new(), Vec::new());
        let mut facet_face = Vec::with_capacity(nt);
        let mut labels = Vec::with_capacity(nf);
        let mut graph_faces = Vec::with_capacity(graphs.len());
        let (mut f0, mut t0) = (0usize, 0usize);
        for g in graphs {
            if !g.normalized {
                return Err(GcnnError::Input(format!("{}: graph is not normalized", g.name)));
            }
            for i in 0..g.faces.len() {
                let r = g.face_features(i);
                check_unit(g, "face", &r[3..])?;
                face_feats.row_mut(f0 + i).copy_from_slice(&r);
                face_pos.push([r[3], r[4], r[5]]);
                labels.push(g.faces[i].label);
            }
            for i in 0..g.facets.len() {
                let r = g.facet_features(i);
                check_unit(g, "facet", &r[4..])?;
                facet_feats.row_mut(t0 + i).copy_from_slice(&r);
                facet_pos.push([r[4], r[5], r[6]]);
                facet_face.push((f0 + g.facets[i].face as usize) as u32);
            }
            for l in &g.links {
                face_links.push((f0 as u32 + l.a, f0 as u32 + l.b, l.convexity.index() as u8));
            }
            for &(a, b) in &g.facet_links {
                facet_links.push((t0 as u32 + a, t0 as u32 + b, 0));
            }
            graph_faces.push(f0..f0 + g.faces.len());
            f0 += g.faces.len();
            t0 += g.facets.len();
        }
        if face_feats.data.iter().chain(&facet_feats.data).any(|x| !x.is_finite()) {
            return Err(GcnnError::Input("non-finite input feature".into()));
        }
        let mut facets_per_face = vec![0u32; nf];
        for &f in &facet_face {
            facets_per_face[f as usize] += 1;
        }
        if let Some(f) = facets_per_face.iter().position(|&c| c == 0) {
            return Err(GcnnError::Input(format!("face {f} has no facets")));
        }
        Ok(PackedBatch {
            facets: Level::new(facet_feats, &facet_pos, &facet_links)?,
            faces: Level::new(face_feats, &face_pos, &face_links)?,
            facet_face,
            facets_per_face,
            labels,
            names: graphs.iter().map(|g| g.name.clone()).collect(),
            graph_faces,
        })
    }

    pub fn from_batch(b: &GraphBatch) -> Result<Self, GcnnError> {
        Self::from_graphs(&b.graphs)
    }

    pub fn n_faces(&self) -> usize {
        self.faces.n()
    }
}
