//! ASCII Gmsh MSH 2.2 subset: `$MeshFormat`, optional `$PhysicalNames`,
//! `$Nodes`, and `$Elements` with 2-node lines (type 1) and 3-node triangles
//! (type 2). Other element types are skipped.
//!
//! Physical groups map onto tags either by name (`$PhysicalNames` entries named
//! after a [`BoundaryTag`] or `Porous`/`Fluid`) or, failing that, by the fixed
//! numbering below.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{build_mesh, BoundaryTag, Mesh, MeshError, Point, Subdomain};

pub const PHYS_POROUS: i64 = 10;
pub const PHYS_FLUID: i64 = 11;

fn tag_number(tag: BoundaryTag) -> i64 {
    match tag {
        BoundaryTag::PorousWall => 1,
        BoundaryTag::FluidWall => 2,
        BoundaryTag::Inflow => 3,
        BoundaryTag::Outflow => 4,
        BoundaryTag::Interface => 5,
        BoundaryTag::Free => 6,
    }
}

fn tag_from_number(n: i64) -> Option<BoundaryTag> {
    BoundaryTag::ALL.into_iter().find(|&t| tag_number(t) == n)
}

#[derive(Debug, thiserror::Error)]
pub enum MshError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported MSH version {0} (expected 2.2 ASCII)")]
    Version(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, MshError> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let t = l.trim();
                    if !t.is_empty() {
                        return Ok(t);
                    }
                }
                None => {
                    return Err(MshError::Parse {
                        line: self.line + 1,
                        msg: "unexpected end of file".into(),
                    })
                }
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> MshError {
        MshError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), MshError> {
        let l = self.next()?;
        if l == token {
            Ok(())
        } else {
            Err(self.err(format!("expected `{token}`, found `{l}`")))
        }
    }

    fn fields<T: std::str::FromStr>(&mut self) -> Result<Vec<T>, MshError> {
        let l = self.next()?;
        l.split_whitespace()
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| self.err(format!("cannot parse `{s}`")))
            })
            .collect()
    }
}

enum Physical {
    Boundary(BoundaryTag),
    Region(Subdomain),
}

fn physical_from_name(name: &str) -> Option<Physical> {
    match name {
        "Porous" => Some(Physical::Region(Subdomain::Porous)),
        "Fluid" => Some(Physical::Region(Subdomain::Fluid)),
        other => other.parse().ok().map(Physical::Boundary),
    }
}

pub fn read_msh(text: &str) -> Result<Mesh, MshError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    lines.expect("$MeshFormat")?;
    let header: Vec<String> = lines.fields()?;
    if header.first().map(String::as_str) != Some("2.2")
        || header.get(1).map(String::as_str) != Some("0")
    {
        return Err(MshError::Version(header.join(" ")));
    }
    lines.expect("$EndMeshFormat")?;

    let mut names: HashMap<i64, String> = HashMap::new();
    let mut section = lines.next()?;
    if section == "$PhysicalNames" {
        let n: Vec<usize> = lines.fields()?;
        for _ in 0..n[0] {
            let l = lines.next()?;
            let mut parts = l.splitn(3, char::is_whitespace);
            let _dim = parts.next();
            let id: i64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| lines.err("bad physical name entry"))?;
            let name = parts
                .next()
                .unwrap_or("")
                .trim()
                .trim_matches('"')
                .to_string();
            names.insert(id, name);
        }
        lines.expect("$EndPhysicalNames")?;
        section = lines.next()?;
    }
    if section != "$Nodes" {
        return Err(lines.err(format!("expected `$Nodes`, found `{section}`")));
    }
    let n_nodes: Vec<usize> = lines.fields()?;
    let mut node_index: HashMap<i64, usize> = HashMap::with_capacity(n_nodes[0]);
    let mut vertices = Vec::with_capacity(n_nodes[0]);
    for _ in 0..n_nodes[0] {
        let f: Vec<f64> = lines.fields()?;
        if f.len() < 3 {
            return Err(lines.err("node line needs id x y [z]"));
        }
        node_index.insert(f[0] as i64, vertices.len());
        vertices.push(Point::new(f[1], f[2]));
    }
    lines.expect("$EndNodes")?;
    lines.expect("$Elements")?;
    let n_el: Vec<usize> = lines.fields()?;

    let resolve = |id: i64| -> Option<Physical> {
        match names.get(&id) {
            Some(name) => physical_from_name(name),
            None if id == PHYS_POROUS => Some(Physical::Region(Subdomain::Porous)),
            None if id == PHYS_FLUID => Some(Physical::Region(Subdomain::Fluid)),
            None => tag_from_number(id).map(Physical::Boundary),
        }
    };

    let mut elements = Vec::new();
    let mut subdomains = Vec::new();
    let mut edge_tags: HashMap<[usize; 2], BoundaryTag> = HashMap::new();
    for _ in 0..n_el[0] {
        let f: Vec<i64> = lines.fields()?;
        if f.len() < 3 {
            return Err(lines.err("element line too short"));
        }
        let (etype, ntags) = (f[1], f[2] as usize);
        let phys = if ntags > 0 { f.get(3).copied() } else { None };
        let nodes = &f[3 + ntags..];
        let map_node = |n: i64| {
            node_index
                .get(&n)
                .copied()
                .ok_or_else(|| lines.err(format!("unknown node {n}")))
        };
        match etype {
            1 => {
                if nodes.len() != 2 {
                    return Err(lines.err("line element needs 2 nodes"));
                }
                let (a, b) = (map_node(nodes[0])?, map_node(nodes[1])?);
                if let Some(Physical::Boundary(tag)) = phys.and_then(resolve) {
                    edge_tags.insert(if a < b { [a, b] } else { [b, a] }, tag);
                }
            }
            2 => {
                if nodes.len() != 3 {
                    return Err(lines.err("triangle needs 3 nodes"));
                }
                let tri = [
                    map_node(nodes[0])?,
                    map_node(nodes[1])?,
                    map_node(nodes[2])?,
                ];
                let sub = match phys.and_then(resolve) {
                    Some(Physical::Region(s)) => s,
                    _ => Subdomain::Porous,
                };
                elements.push(tri);
                subdomains.push(sub);
            }
            _ => {}
        }
    }
    lines.expect("$EndElements")?;
    Ok(build_mesh(vertices, elements, subdomains, |key, _| {
        edge_tags.get(&key).copied()
    })?)
}

/// Writes the mesh with boundary and interface faces as tagged line elements.
pub fn write_msh(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$PhysicalNames\n");
    s.push_str(&format!("{}\n", BoundaryTag::ALL.len() + 2));
    for t in BoundaryTag::ALL {
        let _ = writeln!(s, "1 {} \"{}\"", tag_number(t), t.name());
    }
    let _ = writeln!(s, "2 {PHYS_POROUS} \"Porous\"");
    let _ = writeln!(s, "2 {PHYS_FLUID} \"Fluid\"");
    s.push_str("$EndPhysicalNames\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.n_vertices());
    for (i, v) in mesh.vertices.iter().enumerate() {
        let _ = writeln!(s, "{} {:e} {:e} 0", i + 1, v.x, v.y);
    }
    s.push_str("$EndNodes\n$Elements\n");
    let tagged: Vec<_> = mesh.faces.iter().filter(|f| f.tag.is_some()).collect();
    let _ = writeln!(s, "{}", tagged.len() + mesh.n_elements());
    let mut id = 1;
    for f in tagged {
        let t = tag_number(f.tag.unwrap());
        let _ = writeln!(
            s,
            "{id} 1 2 {t} {t} {} {}",
            f.vertices[0] + 1,
            f.vertices[1] + 1
        );
        id += 1;
    }
    for (el, sub) in mesh.elements.iter().zip(&mesh.subdomains) {
        let p = match sub {
            Subdomain::Porous => PHYS_POROUS,
            Subdomain::Fluid => PHYS_FLUID,
        };
        let _ = writeln!(
            s,
            "{id} 2 2 {p} {p} {} {} {}",
            el[0] + 1,
            el[1] + 1,
            el[2] + 1
        );
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_generator, GeometrySpec};

    #[test]
    fn round_trip_preserves_tags_and_subdomains() {
        let m = structured_generator(4, 6, &GeometrySpec::channel_default(3)).unwrap();
        let text = write_msh(&m);
        let r = read_msh(&text).unwrap();
        assert_eq!(r.n_elements(), m.n_elements());
        assert_eq!(r.subdomains, m.subdomains);
        for t in BoundaryTag::ALL {
            assert_eq!(
                r.faces_with_tag(t).count(),
                m.faces_with_tag(t).count(),
                "{t}"
            );
        }
        assert_eq!(r.fingerprint(), m.fingerprint());
    }

    #[test]
    fn numeric_physical_ids_without_names() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n3\n1 0 0 0\n2 1 0 0\n3 0 1 0\n$EndNodes\n\
                    $Elements\n2\n1 1 2 3 1 1 2\n2 2 2 10 1 1 2 3\n$EndElements\n";
        let m = read_msh(text).unwrap();
        assert_eq!(m.faces_with_tag(BoundaryTag::Inflow).count(), 1);
        assert_eq!(m.faces_with_tag(BoundaryTag::Free).count(), 2);
    }

    #[test]
    fn parse_errors_report_line() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 zero 0 0\n";
        match read_msh(text) {
            Err(MshError::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_msh("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n"),
            Err(MshError::Version(_))
        ));
    }
}
