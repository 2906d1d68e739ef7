use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{build_mesh, BoundaryTag, Mesh, MeshError, Point, Subdomain};

/// Geometry recipes for structured triangulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeometrySpec {
    /// `[0,1]^2`, porous, every boundary face `PorousWall`.
    UnitSquarePorous,
    /// Rectangular fluid channel stacked on a rectangular porous block.
    /// `ny` rows are split as `porous_rows` below and `ny - porous_rows` above.
    ChannelOverPorous {
        length: f64,
        porous_height: f64,
        fluid_height: f64,
        porous_rows: usize,
    },
    /// Axis-aligned rectangle of one subdomain with a tag per side.
    Rectangle {
        origin: [f64; 2],
        width: f64,
        height: f64,
        subdomain: Subdomain,
        left: BoundaryTag,
        right: BoundaryTag,
        bottom: BoundaryTag,
        top: BoundaryTag,
    },
}

impl GeometrySpec {
    pub fn channel_default(porous_rows: usize) -> Self {
        GeometrySpec::ChannelOverPorous {
            length: 1.0,
            porous_height: 0.5,
            fluid_height: 0.5,
            porous_rows,
        }
    }

    pub fn rectangle(width: f64, height: f64, tag: BoundaryTag) -> Self {
        GeometrySpec::Rectangle {
            origin: [0.0, 0.0],
            width,
            height,
            subdomain: Subdomain::Porous,
            left: tag,
            right: tag,
            bottom: tag,
            top: tag,
        }
    }
}

impl FromStr for GeometrySpec {
    type Err = MeshError;

    /// Parses the named geometries; the channel defaults to half of the rows porous.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit-square-porous" => Ok(GeometrySpec::UnitSquarePorous),
            "channel-over-porous" => Ok(GeometrySpec::channel_default(0)),
            other => Err(MeshError::UnknownGeometry(other.to_string())),
        }
    }
}

/// Triangulates an `nx` by `ny` grid of cells, each split along its SW-NE diagonal.
pub fn structured_generator(nx: usize, ny: usize, spec: &GeometrySpec) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidSize { nx, ny });
    }
    match spec {
        GeometrySpec::UnitSquarePorous => grid(
            nx,
            ny,
            [0.0, 0.0],
            1.0,
            &|_| 1.0 / ny as f64,
            &|_| Subdomain::Porous,
            |_| Some(BoundaryTag::PorousWall),
        ),
        GeometrySpec::Rectangle {
            origin,
            width,
            height,
            subdomain,
            left,
            right,
            bottom,
            top,
        } => {
            let (x0, y0, w, h) = (origin[0], origin[1], *width, *height);
            let tol = 1e-9 * w.max(h);
            let dy = h / ny as f64;
            grid(nx, ny, *origin, w, &|_| dy, &|_| *subdomain, |p: Point| {
                Some(if (p.x - x0).abs() < tol {
                    *left
                } else if (p.x - x0 - w).abs() < tol {
                    *right
                } else if (p.y - y0).abs() < tol {
                    *bottom
                } else if (p.y - y0 - h).abs() < tol {
                    *top
                } else {
                    BoundaryTag::Free
                })
            })
        }
        GeometrySpec::ChannelOverPorous {
            length,
            porous_height,
            fluid_height,
            porous_rows,
        } => {
            let porous_rows = if *porous_rows == 0 {
                ny / 2
            } else {
                *porous_rows
            };
            if porous_rows == 0 || porous_rows >= ny {
                return Err(MeshError::InvalidSize { nx, ny });
            }
            let (hp, hf, l) = (*porous_height, *fluid_height, *length);
            let fluid_rows = ny - porous_rows;
            let row_height = move |row: usize| {
                if row < porous_rows {
                    hp / porous_rows as f64
                } else {
                    hf / fluid_rows as f64
                }
            };
            let tol = 1e-9 * l.max(hp + hf);
            grid(
                nx,
                ny,
                [0.0, 0.0],
                l,
                &row_height,
                &|row| {
                    if row < porous_rows {
                        Subdomain::Porous
                    } else {
                        Subdomain::Fluid
                    }
                },
                |p: Point| {
                    let in_fluid = p.y > hp + tol;
                    Some(if in_fluid {
                        if p.x.abs() < tol {
                            BoundaryTag::Inflow
                        } else if (p.x - l).abs() < tol {
                            BoundaryTag::Outflow
                        } else {
                            BoundaryTag::FluidWall
                        }
                    } else {
                        BoundaryTag::PorousWall
                    })
                },
            )
        }
    }
}

fn grid(
    nx: usize,
    ny: usize,
    origin: [f64; 2],
    width: f64,
    row_height: &dyn Fn(usize) -> f64,
    row_subdomain: &dyn Fn(usize) -> Subdomain,
    tag: impl Fn(Point) -> Option<BoundaryTag>,
) -> Result<Mesh, MeshError> {
    let mut ys = Vec::with_capacity(ny + 1);
    let mut y = origin[1];
    ys.push(y);
    for row in 0..ny {
        y += row_height(row);
        ys.push(y);
    }
    let dx = width / nx as f64;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for &yj in &ys {
        for i in 0..=nx {
            vertices.push(Point::new(origin[0] + i as f64 * dx, yj));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    let mut subdomains = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
            subdomains.push(row_subdomain(j));
            subdomains.push(row_subdomain(j));
        }
    }
    build_mesh(vertices, elements, subdomains, |_, mid| tag(mid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_area_and_tags() {
        for n in [1, 3, 8] {
            let m = structured_generator(n, n, &GeometrySpec::UnitSquarePorous).unwrap();
            assert_eq!(m.n_elements(), 2 * n * n);
            assert!((m.total_area() - 1.0).abs() < 1e-12);
        }
        let m = structured_generator(4, 4, &GeometrySpec::UnitSquarePorous).unwrap();
        assert_eq!(m.n_elements(), 32);
        assert!(m
            .boundary_faces()
            .all(|(_, f)| f.tag == Some(BoundaryTag::PorousWall)));
    }

    #[test]
    fn left_edge_inflow_count() {
        let spec = GeometrySpec::Rectangle {
            origin: [0.0, 0.0],
            width: 1.0,
            height: 1.0,
            subdomain: Subdomain::Porous,
            left: BoundaryTag::Inflow,
            right: BoundaryTag::PorousWall,
            bottom: BoundaryTag::PorousWall,
            top: BoundaryTag::PorousWall,
        };
        let m = structured_generator(8, 8, &spec).unwrap();
        assert_eq!(m.faces_with_tag(BoundaryTag::Inflow).count(), 8);
    }

    #[test]
    fn channel_interface() {
        let m = structured_generator(8, 8, &GeometrySpec::channel_default(4)).unwrap();
        let iface: Vec<_> = m.faces_with_tag(BoundaryTag::Interface).collect();
        assert_eq!(iface.len(), 8);
        for (_, f) in iface {
            let r = f.right.expect("interface faces are interior");
            assert_ne!(m.subdomains[f.left], m.subdomains[r]);
        }
        assert_eq!(m.faces_with_tag(BoundaryTag::Inflow).count(), 4);
        assert_eq!(m.faces_with_tag(BoundaryTag::Outflow).count(), 4);
        assert_eq!(m.faces_with_tag(BoundaryTag::FluidWall).count(), 8);
        assert_eq!(m.faces_with_tag(BoundaryTag::PorousWall).count(), 16);
        assert!((m.subdomain_area(Subdomain::Fluid) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_names_and_sizes() {
        assert!("unit-square-porous".parse::<GeometrySpec>().is_ok());
        assert!(matches!(
            "torus".parse::<GeometrySpec>(),
            Err(MeshError::UnknownGeometry(_))
        ));
        assert!(structured_generator(0, 3, &GeometrySpec::UnitSquarePorous).is_err());
    }
}
