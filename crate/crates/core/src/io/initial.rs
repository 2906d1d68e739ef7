//! Closed-form initial conditions in `x`, `y`, parsed with `evalexpr`.
//!
//! Integer literals stay integers in `evalexpr` (`1/2` is `0`); write `1.0/2.0`.

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};
use serde::{Deserialize, Serialize};

use crate::mesh::Point;
use crate::validate::ValidationError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConditions {
    pub c1: String,
    pub c2: String,
    pub h: String,
    pub k: String,
}

impl Default for InitialConditions {
    /// Stem cells seeded in a band along the boundary, hyaluron impregnated
    /// uniformly, no chondrocytes or cartilage.
    fn default() -> Self {
        InitialConditions {
            c1: "0.5 * math::exp(-min(min(x, 1.0 - x), min(y, 1.0 - y)) / 0.05)".into(),
            c2: "0.0".into(),
            h: "1.0".into(),
            k: "0.0".into(),
        }
    }
}

pub struct CompiledInitial {
    nodes: [Node<DefaultNumericTypes>; 4],
}

impl std::fmt::Debug for CompiledInitial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("CompiledInitial")
    }
}

const NAMES: [&str; 4] = ["c1", "c2", "h", "k"];

impl InitialConditions {
    pub fn compile(&self) -> Result<CompiledInitial, ValidationError> {
        let exprs = [&self.c1, &self.c2, &self.h, &self.k];
        let mut nodes = Vec::with_capacity(4);
        for (name, e) in NAMES.iter().zip(exprs) {
            let node = build_operator_tree::<DefaultNumericTypes>(e).map_err(|err| {
                ValidationError::new(
                    *name,
                    format!("{e:?}"),
                    format!("a valid expression in x, y ({err})"),
                )
            })?;
            nodes.push(node);
        }
        let compiled = CompiledInitial {
            nodes: nodes.try_into().expect("four expressions"),
        };
        // probe once so that unknown variables surface at load time
        compiled.eval(Point::new(0.5, 0.5))?;
        Ok(compiled)
    }
}

impl CompiledInitial {
    pub fn eval(&self, x: Point) -> Result<[f64; 4], ValidationError> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        ctx.set_value("x".into(), Value::Float(x.x))
            .expect("fresh context");
        ctx.set_value("y".into(), Value::Float(x.y))
            .expect("fresh context");
        let mut out = [0.0; 4];
        for (i, node) in self.nodes.iter().enumerate() {
            let v = node.eval_number_with_context(&ctx).map_err(|err| {
                ValidationError::new(
                    NAMES[i],
                    format!("at ({}, {})", x.x, x.y),
                    format!("evaluates to a number ({err})"),
                )
            })?;
            if !v.is_finite() {
                return Err(ValidationError::new(NAMES[i], v, "finite"));
            }
            out[i] = v;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_seed_the_boundary() {
        let ic = InitialConditions::default().compile().unwrap();
        let edge = ic.eval(Point::new(0.0, 0.5)).unwrap();
        let centre = ic.eval(Point::new(0.5, 0.5)).unwrap();
        assert!((edge[0] - 0.5).abs() < 1e-15);
        assert!(centre[0] < 1e-4);
        assert_eq!(&edge[1..], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn integer_literals_are_accepted() {
        let ic = InitialConditions {
            c1: "x + 2 * y".into(),
            c2: "0".into(),
            ..Default::default()
        };
        let v = ic.compile().unwrap().eval(Point::new(0.25, 1.0)).unwrap();
        assert_eq!(v[0], 2.25);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn bad_expressions_name_the_field() {
        let bad = InitialConditions {
            h: "1 +".into(),
            ..Default::default()
        };
        assert_eq!(bad.compile().unwrap_err().key, "h");
        let unknown = InitialConditions {
            k: "z * 2.0".into(),
            ..Default::default()
        };
        assert_eq!(unknown.compile().unwrap_err().key, "k");
    }
}
