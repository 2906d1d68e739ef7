use std::collections::HashMap;

use super::{build_mesh, BoundaryTag, Mesh};

/// Red refinement: every triangle is split into four similar children.
/// Children of a boundary face keep the parent's tag.
pub fn uniform_refine(mesh: &Mesh) -> Mesh {
    let nv = mesh.n_vertices();
    let mut vertices = mesh.vertices.clone();
    vertices.reserve(mesh.n_faces());
    // midpoint vertex of face f is nv + f
    for f in &mesh.faces {
        vertices.push(f.midpoint(mesh));
    }
    let mut elements = Vec::with_capacity(4 * mesh.n_elements());
    let mut subdomains = Vec::with_capacity(4 * mesh.n_elements());
    for (e, el) in mesh.elements.iter().enumerate() {
        let m = mesh.element_faces[e].map(|f| nv + f);
        let [v0, v1, v2] = *el;
        // m[i] sits on the edge opposite v_i
        elements.push([v0, m[2], m[1]]);
        elements.push([m[2], v1, m[0]]);
        elements.push([m[1], m[0], v2]);
        elements.push([m[0], m[1], m[2]]);
        subdomains.extend([mesh.subdomains[e]; 4]);
    }
    let mut tags: HashMap<[usize; 2], BoundaryTag> = HashMap::new();
    for (f, face) in mesh.faces.iter().enumerate() {
        if let (Some(tag), true) = (face.tag, face.is_boundary()) {
            for &v in &face.vertices {
                let mid = nv + f;
                tags.insert(if v < mid { [v, mid] } else { [mid, v] }, tag);
            }
        }
    }
    build_mesh(vertices, elements, subdomains, |key, _| {
        tags.get(&key).copied()
    })
    .expect("refinement of a valid mesh is valid")
}
