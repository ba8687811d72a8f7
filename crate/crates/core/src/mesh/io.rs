use std::fmt::Write as _;

use super::{ElementId, Mesh};
use crate::error::{Error, Result};

/// Parse the line-oriented `rdmesh 1` format:
///
/// ```text
/// rdmesh 1
/// v x y            # one per vertex
/// t i j k r        # one per root element, r = refinement edge (opposite vertex r)
/// b id             # optional bisection log, replayed in order
/// ```
///
/// Blank lines and `#` comments are ignored.
pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut tris = Vec::new();
    let mut log = Vec::new();
    let mut header = false;
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let mut it = line.split_whitespace();
        let tag = it.next().unwrap();
        let rest: Vec<&str> = it.collect();
        if !header {
            if tag != "rdmesh" || rest != ["1"] {
                return Err(err("expected header `rdmesh 1`"));
            }
            header = true;
            continue;
        }
        match tag {
            "v" => {
                if rest.len() != 2 {
                    return Err(err("vertex needs two coordinates"));
                }
                let x: f64 = rest[0].parse().map_err(|_| err("bad x coordinate"))?;
                let y: f64 = rest[1].parse().map_err(|_| err("bad y coordinate"))?;
                vertices.push([x, y]);
            }
            "t" => {
                if !log.is_empty() {
                    return Err(err("element after bisection log"));
                }
                if rest.len() != 4 {
                    return Err(err("element needs three vertex ids and a refinement edge"));
                }
                let mut ids = [0usize; 4];
                for (slot, s) in ids.iter_mut().zip(&rest) {
                    *slot = s.parse().map_err(|_| err("bad integer"))?;
                }
                tris.push(([ids[0], ids[1], ids[2]], ids[3]));
            }
            "b" => {
                if rest.len() != 1 {
                    return Err(err("bisection needs one element id"));
                }
                log.push(ElementId(
                    rest[0].parse().map_err(|_| err("bad element id"))?,
                ));
            }
            _ => return Err(err("unknown record")),
        }
    }
    if !header {
        return Err(Error::Parse {
            line: 0,
            msg: "empty input".into(),
        });
    }
    let root = Mesh::from_roots(vertices, &tris)?;
    root.replay(&log)
}

/// Serialise the root mesh and bisection log.
pub fn write_mesh(mesh: &Mesh) -> String {
    let root = mesh.root_mesh();
    let mut out = String::from("rdmesh 1\n");
    for p in root.vertices() {
        let _ = writeln!(out, "v {:?} {:?}", p[0], p[1]);
    }
    for k in root.roots() {
        let el = &root.nodes()[k.0];
        let _ = writeln!(
            out,
            "t {} {} {} {}",
            el.vertices[0], el.vertices[1], el.vertices[2], el.refinement_edge
        );
    }
    for k in mesh.bisection_log() {
        let _ = writeln!(out, "b {}", k.0);
    }
    out
}
