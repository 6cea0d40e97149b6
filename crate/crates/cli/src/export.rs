//! Wavefront OBJ + MTL export with one material per feature class.

use std::fmt::Write as _;

use hfr_core::brep::TriMesh;
use hfr_core::featuregen::{class, N_CLASSES};

/// Fixed per-class colors (sRGB), indexed by class.
pub const PALETTE: [[u8; 3]; N_CLASSES] = [
    [31, 119, 180],
    [174, 199, 232],
    [255, 127, 14],
    [255, 187, 120],
    [44, 160, 44],
    [152, 223, 138],
    [214, 39, 40],
    [255, 152, 150],
    [148, 103, 189],
    [197, 176, 213],
    [140, 86, 75],
    [196, 156, 148],
    [227, 119, 194],
    [247, 182, 210],
    [188, 189, 34],
    [219, 219, 141],
    [23, 190, 207],
    [158, 218, 229],
    [57, 59, 121],
    [99, 121, 57],
    [140, 109, 49],
    [132, 60, 57],
    [123, 65, 115],
    [82, 84, 163],
    [181, 207, 107],
    [231, 186, 82],
    [214, 97, 107],
    [206, 109, 189],
    [107, 110, 207],
    [199, 199, 199],
];

fn material(c: u8) -> String {
    let name = class(c).map_or("unknown", |k| k.name);
    format!("c{c:02}_{name}")
}

pub fn write_mtl() -> String {
    let mut s = String::new();
    for c in 0..N_CLASSES as u8 {
        let [r, g, b] = PALETTE[c as usize].map(|x| x as f64 / 255.0);
        writeln!(s, "newmtl {}\nKd {r:.4} {g:.4} {b:.4}\n", material(c)).unwrap();
    }
    s
}

/// Facets grouped by the class of their parent face.
pub fn write_obj(mesh: &TriMesh, classes: &[u8], mtl_file: &str) -> String {
    let mut s = format!("mtllib {mtl_file}\n");
    for p in &mesh.points {
        writeln!(s, "v {} {} {}", p.x, p.y, p.z).unwrap();
    }
    for c in 0..N_CLASSES as u8 {
        let tris: Vec<&[usize; 3]> =
            mesh.facets.iter().zip(&mesh.facet_face).filter(|(_, &f)| classes[f] == c).map(|(t, _)| t).collect();
        if tris.is_empty() {
            continue;
        }
        writeln!(s, "g {}\nusemtl {}", material(c), material(c)).unwrap();
        for t in tris {
            writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_colors_are_distinct() {
        let mut p = PALETTE.to_vec();
        p.sort();
        p.dedup();
        assert_eq!(p.len(), N_CLASSES);
        assert_eq!(write_mtl().matches("newmtl").count(), N_CLASSES);
    }
}
