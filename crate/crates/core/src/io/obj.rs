//! Wavefront OBJ meshes: vertex and face records only.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{ParseError, Result};
use crate::geometry::Vec3;
use crate::model::Mesh;

/// Parsed mesh plus human-readable warnings about skipped content.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjMesh {
    pub mesh: Mesh,
    pub warnings: Vec<String>,
}

fn parse_index(token: &str, vertex_count: usize, line: usize) -> Result<usize, ParseError> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head
        .parse()
        .map_err(|_| ParseError::at_line(line, format!("bad face index {token:?}")))?;
    let resolved = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        vertex_count as i64 + raw
    } else {
        return Err(ParseError::at_line(line, "face index 0 is not valid"));
    };
    if resolved < 0 || resolved >= vertex_count as i64 {
        return Err(ParseError::at_line(
            line,
            format!("face index {raw} out of range for {vertex_count} vertices"),
        ));
    }
    Ok(resolved as usize)
}

/// Parses `v` and `f` records. Polygons are fan-triangulated; other records
/// are skipped and counted in the warnings.
pub fn parse_obj(bytes: &[u8]) -> Result<ObjMesh> {
    let text = String::from_utf8_lossy(bytes);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        let Some(kind) = fields.next() else { continue };
        match kind {
            "v" => {
                let coords = fields
                    .take(3)
                    .map(|f| {
                        f.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| ParseError::at_line(line, format!("bad coordinate {f:?}")))
                    })
                    .collect::<Result<Vec<f64>, ParseError>>()?;
                if coords.len() < 3 {
                    return Err(ParseError::at_line(line, "vertex needs three coordinates").into());
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let idx = fields
                    .map(|t| parse_index(t, vertices.len(), line))
                    .collect::<Result<Vec<usize>, ParseError>>()?;
                if idx.len() < 3 {
                    return Err(ParseError::at_line(line, "face needs at least three vertices").into());
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            other => *skipped.entry(other.to_string()).or_default() += 1,
        }
    }
    let warnings = skipped
        .into_iter()
        .map(|(kind, count)| format!("skipped {count} {kind:?} record(s)"))
        .collect();
    Ok(ObjMesh {
        mesh: Mesh::new(vertices, faces),
        warnings,
    })
}

/// Serializes vertices and faces with shortest round-trip float formatting.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::RigError;

    #[test]
    fn triangle_and_quad() {
        let obj = parse_obj(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        assert_eq!(obj.mesh.vertices.len(), 4);
        assert_eq!(obj.mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);

        let obj = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(obj.mesh.faces.len(), 1);
    }

    #[test]
    fn index_forms_and_skips() {
        let src = b"# cube corner\nv 0 0 0\nv 1 0 0\nvt 0 0\nvn 0 0 1\nv 0 1 0\nf -3/1/1 -2//1 -1/1\ng part\n";
        let obj = parse_obj(src).unwrap();
        assert_eq!(obj.mesh.faces, vec![[0, 1, 2]]);
        assert_eq!(obj.warnings.len(), 3);
    }

    #[test]
    fn out_of_range_reports_line() {
        let err = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap_err();
        match err {
            RigError::Parse(p) => assert_eq!(p.location, "line 4"),
            other => panic!("{other:?}"),
        }
        assert!(parse_obj(b"v 0 0\n").is_err());
        assert!(parse_obj(b"v 0 0 0\nf 1 1\n").is_err());
        assert!(parse_obj(b"v nan 0 0\n").is_err());
    }

    #[test]
    fn write_then_parse() {
        let mesh = Mesh::new(vec![Vec3::new(0.1, 0.2, 0.3), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]);
        assert_eq!(parse_obj(write_obj(&mesh).as_bytes()).unwrap().mesh, mesh);
    }
}
