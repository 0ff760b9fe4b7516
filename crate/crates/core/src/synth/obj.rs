//! Wavefront OBJ meshes (vertex and face records only).

use std::fmt::Write as _;
use std::path::Path;

use crate::diff::Vec3;
use crate::error::{Error, Result};

pub fn obj_string(vertices: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(vertices.len() * 40 + faces.len() * 20);
    for v in vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn write_obj(path: &Path, vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    std::fs::write(path, obj_string(vertices, faces)).map_err(|e| Error::io(path, e))
}

/// Parses `v` and triangular `f` records; other records are skipped. Face
/// entries may carry `/vt/vn` suffixes, which are ignored.
pub fn parse_obj(text: &str) -> std::result::Result<(Vec<Vec3>, Vec<[usize; 3]>), String> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1)))
                    .collect::<std::result::Result<_, _>>()?;
                if c.len() != 3 {
                    return Err(format!("line {}: vertex needs three coordinates", n + 1));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|t| {
                        let i: usize =
                            t.split('/').next().unwrap_or("").parse().map_err(|e| format!("line {}: {e}", n + 1))?;
                        if i == 0 {
                            return Err(format!("line {}: OBJ indices start at 1", n + 1));
                        }
                        Ok(i - 1)
                    })
                    .collect::<std::result::Result<_, String>>()?;
                if idx.len() != 3 {
                    return Err(format!("line {}: only triangles are supported", n + 1));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    if let Some(bad) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
        return Err(format!("face index {} exceeds {} vertices", bad + 1, vertices.len()));
    }
    Ok((vertices, faces))
}

pub fn read_obj(path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text).map_err(|m| Error::parse(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let v = vec![Vec3::new(0.1, -2.5e-7, 3.0), Vec3::new(1.0 / 3.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0)];
        let f = vec![[0, 1, 2]];
        let (v2, f2) = parse_obj(&obj_string(&v, &f)).unwrap();
        assert_eq!(v, v2);
        assert_eq!(f, f2);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj("v 0 0\n").is_err());
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n").is_err());
        let (_, f) = parse_obj("# c\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n").unwrap();
        assert_eq!(f, vec![[0, 1, 2]]);
    }
}
