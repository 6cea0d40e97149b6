//! Two-level hierarchical graphs (faces over mesh facets), per-model
//! normalization, batching, and the `HGB1` batch container.
//!
//! Container layout, all integers and reals little-endian:
//!
//! ```text
//! header   "HGB1" | version u32 | batch count u64 | crc32 of the preceding bytes
//! index    per batch: section offset u64, section length u64 | crc32 of the index
//! sections per batch: graph records | crc32 of the section
//! ```
//!
//! A graph record is: name (u32 length + UTF-8), normalized flag u8, then
//! counts u32 for faces, links, facets and facet links, followed by the
//! arrays in that order. Faces: id u64, label u8, type one-hot 2×f64, area
//! f64, centroid 3×f64. Links: a u32, b u32, convexity u8. Facets: plane
//! 4×f64, centroid 3×f64, parent face u32. Facet links: a u32, b u32.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::brep::{triangulate, EdgeConvexity, Solid, SurfaceKind, TriMesh, DEFAULT_ANGULAR_STEP};
use crate::geom::{Aabb, Vec3};

pub const MAGIC: &[u8; 4] = b"HGB1";
pub const VERSION: u32 = 1;
pub const VERTEX_CAP: usize = 5000;
pub const FACE_FEATURES: usize = 6;
pub const FACET_FEATURES: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("face {0} has no label")]
    MissingLabel(usize),
    #[error("face {0} has no facets")]
    FaceWithoutFacets(usize),
    #[error("degenerate bounding box in {0}")]
    Degenerate(String),
    #[error("graph {name} has {vertices} vertices, cap is {cap}")]
    Oversize { name: String, vertices: usize, cap: usize },
    #[error("bad container: {0}")]
    Format(String),
    #[error("checksum mismatch in {0}")]
    Checksum(String),
    #[error("container truncated at byte {0}")]
    Truncated(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceNode {
    pub face_id: u64,
    pub label: u8,
    /// One-hot over {plane, cylinder}.
    pub face_type: [f64; 2],
    pub area: f64,
    pub centroid: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceLink {
    pub a: u32,
    pub b: u32,
    pub convexity: EdgeConvexity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacetNode {
    /// `(a, b, c, d)` with unit normal `(a, b, c)` and `a·x + b·y + c·z = d`.
    pub plane: [f64; 4],
    pub centroid: Vec3,
    pub face: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierGraph {
    pub name: String,
    pub faces: Vec<FaceNode>,
    pub links: Vec<FaceLink>,
    pub facets: Vec<FacetNode>,
    pub facet_links: Vec<(u32, u32)>,
    pub normalized: bool,
}

impl HierGraph {
    pub fn vertex_count(&self) -> usize {
        self.faces.len() + self.facets.len()
    }

    /// Network input row for face `i`: type one-hot, area, centroid.
    pub fn face_features(&self, i: usize) -> [f64; FACE_FEATURES] {
        let f = &self.faces[i];
        [f.face_type[0], f.face_type[1], f.area, f.centroid.x, f.centroid.y, f.centroid.z]
    }

    /// Network input row for facet `i`: plane coefficients, centroid.
    pub fn facet_features(&self, i: usize) -> [f64; FACET_FEATURES] {
        let f = &self.facets[i];
        [f.plane[0], f.plane[1], f.plane[2], f.plane[3], f.centroid.x, f.centroid.y, f.centroid.z]
    }

    pub fn labels(&self) -> Vec<u8> {
        self.faces.iter().map(|f| f.label).collect()
    }
}

/// Builds the face adjacency level (one link per adjacent face pair, with
/// the convexity of the lowest-numbered shared edge) and the facet level.
pub fn build_hier_graph(name: &str, solid: &Solid, mesh: &TriMesh, labels: &[u8]) -> Result<HierGraph, GraphError> {
    if labels.len() < solid.faces.len() {
        return Err(GraphError::MissingLabel(labels.len()));
    }
    let mut facet_count = vec![0usize; solid.faces.len()];
    for &f in &mesh.facet_face {
        facet_count[f] += 1;
    }
    if let Some(f) = facet_count.iter().position(|&c| c == 0) {
        return Err(GraphError::FaceWithoutFacets(f));
    }
    let faces = solid
        .faces
        .iter()
        .enumerate()
        .map(|(i, f)| FaceNode {
            face_id: i as u64,
            label: labels[i],
            face_type: match f.surface {
                SurfaceKind::Plane { .. } => [1.0, 0.0],
                SurfaceKind::Cylinder { .. } => [0.0, 1.0],
            },
            area: solid.face_area(i),
            centroid: solid.face_centroid(i),
        })
        .collect();
    let mut pairs: BTreeMap<(usize, usize), EdgeConvexity> = BTreeMap::new();
    for (e, (a, b)) in solid.face_adjacency() {
        if a != b {
            if let std::collections::btree_map::Entry::Vacant(v) = pairs.entry((a, b)) {
                v.insert(solid.edge_convexity(e).map_err(|_| GraphError::Degenerate(name.into()))?);
            }
        }
    }
    let links = pairs.into_iter().map(|((a, b), c)| FaceLink { a: a as u32, b: b as u32, convexity: c }).collect();
    let facets = (0..mesh.facets.len())
        .map(|i| {
            let n = mesh.facet_normal(i);
            let c = mesh.facet_centroid(i);
            FacetNode { plane: [n.x, n.y, n.z, n.dot(c)], centroid: c, face: mesh.facet_face[i] as u32 }
        })
        .collect();
    let mut facet_links = Vec::new();
    for (i, nb) in mesh.facet_adjacency().iter().enumerate() {
        for &j in nb {
            if i < j {
                facet_links.push((i as u32, j as u32));
            }
        }
    }
    Ok(HierGraph { name: name.to_string(), faces, links, facets, facet_links, normalized: false })
}

/// Maps centroids into the unit bounding box of the facet centroids' parent
/// mesh, divides areas by the total, and expresses plane offsets relative
/// to the box minimum over its diagonal. A no-op on normalized graphs.
pub fn normalize(g: &HierGraph, bounds: &Aabb) -> Result<HierGraph, GraphError> {
    if g.normalized {
        return Ok(g.clone());
    }
    let d = bounds.dims();
    let diag = bounds.diagonal();
    if !(d.x > 0.0 && d.y > 0.0 && d.z > 0.0 && diag.is_finite()) {
        return Err(GraphError::Degenerate(g.name.clone()));
    }
    let total: f64 = g.faces.iter().map(|f| f.area).sum();
    if !(total > 0.0) {
        return Err(GraphError::Degenerate(g.name.clone()));
    }
    let unit = |p: Vec3| {
        let q = p - bounds.min;
        Vec3::new((q.x / d.x).clamp(0.0, 1.0), (q.y / d.y).clamp(0.0, 1.0), (q.z / d.z).clamp(0.0, 1.0))
    };
    let mut out = g.clone();
    for f in &mut out.faces {
        f.area /= total;
        f.centroid = unit(f.centroid);
    }
    for f in &mut out.facets {
        let n = Vec3::new(f.plane[0], f.plane[1], f.plane[2]);
        f.plane[3] = (f.plane[3] - n.dot(bounds.min)) / diag;
        f.centroid = unit(f.centroid);
    }
    out.normalized = true;
    Ok(out)
}

/// Triangulates `solid` at the default angular step and returns the
/// normalized graph.
pub fn graph_from_solid(name: &str, solid: &Solid, labels: &[u8]) -> Result<HierGraph, GraphError> {
    let mesh = triangulate(solid, DEFAULT_ANGULAR_STEP).map_err(|e| GraphError::Degenerate(format!("{name}: {e}")))?;
    normalize(&build_hier_graph(name, solid, &mesh, labels)?, &mesh_bounds(&mesh))
}

/// Bounding box of every mesh point.
pub fn mesh_bounds(mesh: &TriMesh) -> Aabb {
    Aabb::from_points(mesh.points.iter().copied())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphBatch {
    pub graphs: Vec<HierGraph>,
}

impl GraphBatch {
    pub fn total_vertices(&self) -> usize {
        self.graphs.iter().map(HierGraph::vertex_count).sum()
    }

    /// Starting face and facet index of each graph in the packed arrays.
    pub fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.graphs.len());
        let (mut f, mut t) = (0, 0);
        for g in &self.graphs {
            out.push((f, t));
            f += g.faces.len();
            t += g.facets.len();
        }
        out
    }
}

/// Seeded shuffle followed by first-fit packing with every batch total
/// strictly below `cap`.
pub fn make_batches(graphs: Vec<HierGraph>, cap: usize, seed: u64) -> Result<Vec<GraphBatch>, GraphError> {
    if let Some(g) = graphs.iter().find(|g| g.vertex_count() >= cap) {
        return Err(GraphError::Oversize { name: g.name.clone(), vertices: g.vertex_count(), cap });
    }
    let mut graphs = graphs;
    graphs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut batches: Vec<GraphBatch> = Vec::new();
    let mut totals: Vec<usize> = Vec::new();
    for g in graphs {
        let n = g.vertex_count();
        match totals.iter().position(|&t| t + n < cap) {
            Some(i) => {
                totals[i] += n;
                batches[i].graphs.push(g);
            }
            None => {
                totals.push(n);
                batches.push(GraphBatch { graphs: vec![g] });
            }
        }
    }
    Ok(batches)
}

fn put_u32(b: &mut Vec<u8>, x: u32) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, x: u64) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(b: &mut Vec<u8>, x: f64) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_vec3(b: &mut Vec<u8>, p: Vec3) {
    for x in p.to_array() {
        put_f64(b, x);
    }
}

fn convexity_code(c: EdgeConvexity) -> u8 {
    c.index() as u8
}

fn convexity_from(code: u8) -> Result<EdgeConvexity, GraphError> {
    match code {
        0 => Ok(EdgeConvexity::Convex),
        1 => Ok(EdgeConvexity::Concave),
        2 => Ok(EdgeConvexity::Smooth),
        _ => Err(GraphError::Format(format!("convexity code {code}"))),
    }
}

fn write_graph(b: &mut Vec<u8>, g: &HierGraph) {
    put_u32(b, g.name.len() as u32);
    b.extend_from_slice(g.name.as_bytes());
    b.push(g.normalized as u8);
    for n in [g.faces.len(), g.links.len(), g.facets.len(), g.facet_links.len()] {
        put_u32(b, n as u32);
    }
    for f in &g.faces {
        put_u64(b, f.face_id);
        b.push(f.label);
        put_f64(b, f.face_type[0]);
        put_f64(b, f.face_type[1]);
        put_f64(b, f.area);
        put_vec3(b, f.centroid);
    }
    for l in &g.links {
        put_u32(b, l.a);
        put_u32(b, l.b);
        b.push(convexity_code(l.convexity));
    }
    for f in &g.facets {
        for x in f.plane {
            put_f64(b, x);
        }
        put_vec3(b, f.centroid);
        put_u32(b, f.face);
    }
    for &(a, c) in &g.facet_links {
        put_u32(b, a);
        put_u32(b, c);
    }
}

pub fn serialize_batches(batches: &[GraphBatch]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u64(&mut out, batches.len() as u64);
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);

    let sections: Vec<Vec<u8>> = batches
        .iter()
        .map(|bt| {
            let mut s = Vec::new();
            put_u32(&mut s, bt.graphs.len() as u32);
            for g in &bt.graphs {
                write_graph(&mut s, g);
            }
            let crc = crc32fast::hash(&s);
            put_u32(&mut s, crc);
            s
        })
        .collect();
    let index_len = batches.len() * 16 + 4;
    let mut offset = (out.len() + index_len) as u64;
    let mut index = Vec::with_capacity(index_len);
    for s in &sections {
        put_u64(&mut index, offset);
        put_u64(&mut index, s.len() as u64);
        offset += s.len() as u64;
    }
    let crc = crc32fast::hash(&index);
    put_u32(&mut index, crc);
    out.extend_from_slice(&index);
    for s in sections {
        out.extend_from_slice(&s);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GraphError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(GraphError::Truncated(self.buf.len()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, GraphError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, GraphError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, GraphError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, GraphError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn vec3(&mut self) -> Result<Vec3, GraphError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    /// Guards element counts against the bytes actually left.
    fn count(&mut self, elem_size: usize) -> Result<usize, GraphError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem_size) > self.buf.len() - self.pos {
            return Err(GraphError::Truncated(self.buf.len()));
        }
        Ok(n)
    }
}

fn read_graph(r: &mut Reader) -> Result<HierGraph, GraphError> {
    let name_len = r.count(1)?;
    let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| GraphError::Format("graph name is not UTF-8".into()))?;
    let normalized = r.u8()? != 0;
    let nf = r.count(0)?;
    let nl = r.count(0)?;
    let nt = r.count(0)?;
    let ntl = r.count(0)?;
    let need = nf * 57 + nl * 9 + nt * 60 + ntl * 8;
    if need > r.buf.len() - r.pos {
        return Err(GraphError::Truncated(r.buf.len()));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        faces.push(FaceNode {
            face_id: r.u64()?,
            label: r.u8()?,
            face_type: [r.f64()?, r.f64()?],
            area: r.f64()?,
            centroid: r.vec3()?,
        });
    }
    let mut links = Vec::with_capacity(nl);
    for _ in 0..nl {
        links.push(FaceLink { a: r.u32()?, b: r.u32()?, convexity: convexity_from(r.u8()?)? });
    }
    let mut facets = Vec::with_capacity(nt);
    for _ in 0..nt {
        facets.push(FacetNode { plane: [r.f64()?, r.f64()?, r.f64()?, r.f64()?], centroid: r.vec3()?, face: r.u32()? });
    }
    let mut facet_links = Vec::with_capacity(ntl);
    for _ in 0..ntl {
        facet_links.push((r.u32()?, r.u32()?));
    }
    let g = HierGraph { name, faces, links, facets, facet_links, normalized };
    let (f, t) = (g.faces.len() as u32, g.facets.len() as u32);
    if g.links.iter().any(|l| l.a >= f || l.b >= f)
        || g.facets.iter().any(|x| x.face >= f)
        || g.facet_links.iter().any(|&(a, b)| a >= t || b >= t)
    {
        return Err(GraphError::Format(format!("index out of range in graph {}", g.name)));
    }
    Ok(g)
}

fn check_crc(bytes: &[u8], what: &str) -> Result<(), GraphError> {
    if bytes.len() < 4 {
        return Err(GraphError::Truncated(bytes.len()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().expect("4 bytes")) {
        return Err(GraphError::Checksum(what.into()));
    }
    Ok(())
}

pub fn deserialize_batches(bytes: &[u8]) -> Result<Vec<GraphBatch>, GraphError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(GraphError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    let n = r.u64()? as usize;
    r.u32()?;
    check_crc(&bytes[..20], "header")?;
    if version != VERSION {
        return Err(GraphError::Format(format!("unsupported version {version}")));
    }
    let index_len = n.checked_mul(16).and_then(|x| x.checked_add(4)).ok_or(GraphError::Truncated(bytes.len()))?;
    let index = r.take(index_len)?;
    check_crc(index, "index")?;
    let mut batches = Vec::with_capacity(n);
    for i in 0..n {
        let mut ir = Reader { buf: index, pos: i * 16 };
        let (off, len) = (ir.u64()? as usize, ir.u64()? as usize);
        let end = off.checked_add(len).filter(|&e| e <= bytes.len()).ok_or(GraphError::Truncated(bytes.len()))?;
        let section = &bytes[off..end];
        check_crc(section, &format!("batch {i}"))?;
        let mut sr = Reader { buf: &section[..section.len() - 4], pos: 0 };
        let count = sr.count(0)?;
        let mut graphs = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            graphs.push(read_graph(&mut sr)?);
        }
        if sr.pos != sr.buf.len() {
            return Err(GraphError::Format(format!("trailing bytes in batch {i}")));
        }
        batches.push(GraphBatch { graphs });
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy(name: &str, faces: usize, facets: usize) -> HierGraph {
        HierGraph {
            name: name.into(),
            faces: (0..faces)
                .map(|i| FaceNode { face_id: i as u64, label: 29, face_type: [1.0, 0.0], area: 1.0, centroid: Vec3::ZERO })
                .collect(),
            links: vec![],
            facets: (0..facets).map(|_| FacetNode { plane: [0.0, 0.0, 1.0, 0.0], centroid: Vec3::ZERO, face: 0 }).collect(),
            facet_links: vec![],
            normalized: true,
        }
    }

    #[test]
    fn packing_examples() {
        let b = make_batches(vec![dummy("a", 10, 2990), dummy("b", 10, 2490)], VERTEX_CAP, 1).unwrap();
        assert_eq!(b.len(), 2);
        let b = make_batches(vec![dummy("a", 10, 1990), dummy("b", 10, 2890)], VERTEX_CAP, 1).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].total_vertices(), 4900);
        assert!(matches!(make_batches(vec![dummy("big", 10, 4990)], VERTEX_CAP, 1), Err(GraphError::Oversize { .. })));
    }

    #[test]
    fn empty_container_round_trips() {
        let bytes = serialize_batches(&[]);
        assert_eq!(bytes.len(), 24);
        assert_eq!(deserialize_batches(&bytes).unwrap(), vec![]);
    }

    #[test]
    fn corrupt_tail_is_rejected() {
        let mut bytes = serialize_batches(&[GraphBatch { graphs: vec![dummy("a", 3, 4)] }]);
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        assert!(matches!(deserialize_batches(&bytes), Err(GraphError::Checksum(_))));
    }
}
