//! Closed-form inverse kinematics for the two-motor planar leg.
//!
//! Each leg has an x and a y prismatic motor driving a linkage with lengths
//! `l_x` and `l_y`. The policy emits joint angles; the host converts them to
//! motor positions.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv;
use crate::policy::Action;

pub const NUM_LEGS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegGeometry {
    pub l_x: f64,
    pub l_y: f64,
    pub x_motor_ref: f64,
    pub y_motor_ref: f64,
}

impl LegGeometry {
    pub fn new(l_x: f64, l_y: f64, x_motor_ref: f64, y_motor_ref: f64) -> Result<Self> {
        let g = LegGeometry {
            l_x,
            l_y,
            x_motor_ref,
            y_motor_ref,
        };
        g.validate()?;
        Ok(g)
    }

    /// Millimetre-scale placeholder geometry, not a measured robot.
    pub fn illustrative() -> Self {
        LegGeometry {
            l_x: 2.0e-3,
            l_y: 2.0e-3,
            x_motor_ref: 0.0,
            y_motor_ref: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_x > 0.0 && self.l_y > 0.0 && self.l_x.is_finite() && self.l_y.is_finite()) {
            return Err(Error::invalid(
                "leg geometry",
                format!("link lengths l_x={} l_y={} must be finite and > 0", self.l_x, self.l_y),
            ));
        }
        if !(self.x_motor_ref.is_finite() && self.y_motor_ref.is_finite()) {
            return Err(Error::invalid("leg geometry", "motor reference must be finite"));
        }
        Ok(())
    }

    /// Parse a `key=value` geometry file into four legs.
    ///
    /// Bare keys (`l_x`, `l_y`, `x_motor_ref`, `y_motor_ref`) apply to every
    /// leg; `legN.key` (N in 0..4) overrides one leg.
    pub fn parse_set(text: &str) -> Result<[LegGeometry; NUM_LEGS]> {
        let mut vals = [[None::<f64>; 4]; NUM_LEGS + 1];
        for (key, value, line) in kv::pairs(text)? {
            let (slot, name) = match key.split_once('.') {
                Some((leg, name)) => {
                    let n = leg
                        .strip_prefix("leg")
                        .and_then(|n| n.parse::<usize>().ok())
                        .filter(|&n| n < NUM_LEGS)
                        .ok_or_else(|| Error::Parse {
                            line,
                            reason: format!("bad leg prefix {leg:?}"),
                        })?;
                    (n + 1, name)
                }
                None => (0, key),
            };
            let field = match name {
                "l_x" => 0,
                "l_y" => 1,
                "x_motor_ref" => 2,
                "y_motor_ref" => 3,
                other => {
                    return Err(Error::Parse {
                        line,
                        reason: format!("unknown key {other:?}"),
                    })
                }
            };
            let v = value.parse::<f64>().map_err(|_| Error::Parse {
                line,
                reason: format!("{value:?} is not a number"),
            })?;
            vals[slot][field] = Some(v);
        }
        let mut out = [LegGeometry::illustrative(); NUM_LEGS];
        for (leg, g) in out.iter_mut().enumerate() {
            let get = |f: usize| {
                vals[leg + 1][f].or(vals[0][f]).ok_or_else(|| {
                    Error::invalid(
                        "geometry file",
                        format!("leg {leg} has no {}", ["l_x", "l_y", "x_motor_ref", "y_motor_ref"][f]),
                    )
                })
            };
            *g = LegGeometry::new(get(0)?, get(1)?, get(2)?, get(3)?)?;
        }
        Ok(out)
    }

    pub fn load_set(path: impl AsRef<Path>) -> Result<[LegGeometry; NUM_LEGS]> {
        Self::parse_set(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndEffector {
    pub x_end: f64,
    pub y_end: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkSolution {
    pub theta_x: f64,
    pub theta_y: f64,
    pub x_motor: f64,
    pub y_motor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotorTarget {
    pub x_motor: f64,
    pub y_motor: f64,
}

fn checked_asin(equation: &'static str, argument: f64) -> Result<f64> {
    if (-1.0..=1.0).contains(&argument) {
        Ok(argument.asin())
    } else {
        Err(Error::OutOfWorkspace { equation, argument })
    }
}

/// Joint angles and motor positions reaching `e`, principal branch.
pub fn ik(g: &LegGeometry, e: EndEffector) -> Result<IkSolution> {
    let theta_y = checked_asin("theta_y", (e.x_end - g.x_motor_ref) / g.l_y)?;
    let (sy, cy) = theta_y.sin_cos();
    let theta_x = checked_asin("theta_x", (e.y_end + 0.5 * g.l_y * cy - g.y_motor_ref) / g.l_x)?;
    Ok(IkSolution {
        theta_x,
        theta_y,
        x_motor: e.x_end - 0.5 * g.l_y * sy - g.l_x * theta_x.cos(),
        y_motor: e.y_end + g.l_y * cy,
    })
}

/// End effector for given joint angles; exact inverse of the angle part of [`ik`].
pub fn fk_oracle(g: &LegGeometry, theta_x: f64, theta_y: f64) -> EndEffector {
    EndEffector {
        x_end: g.x_motor_ref + g.l_y * theta_y.sin(),
        y_end: g.y_motor_ref + g.l_x * theta_x.sin() - 0.5 * g.l_y * theta_y.cos(),
    }
}

/// Motor targets for all four legs of a policy action.
pub fn action_to_motor_targets(a: &Action, geoms: &[LegGeometry; NUM_LEGS]) -> Result<[MotorTarget; NUM_LEGS]> {
    if a.len() != 2 * NUM_LEGS {
        return Err(Error::Shape {
            context: "action",
            expected: 2 * NUM_LEGS,
            got: a.len(),
        });
    }
    let mut out = [MotorTarget {
        x_motor: 0.0,
        y_motor: 0.0,
    }; NUM_LEGS];
    for (leg, (g, slot)) in geoms.iter().zip(out.iter_mut()).enumerate() {
        let wrap = |source| Error::Leg {
            leg,
            source: Box::new(source),
        };
        let (tx, ty) = a.leg(leg);
        let (tx, ty) = (tx as f64, ty as f64);
        for (name, t) in [("theta_x", tx), ("theta_y", ty)] {
            if t.abs() > FRAC_PI_2 {
                return Err(wrap(Error::OutOfWorkspace {
                    equation: name,
                    argument: t,
                }));
            }
        }
        let sol = ik(g, fk_oracle(g, tx, ty)).map_err(wrap)?;
        *slot = MotorTarget {
            x_motor: sol.x_motor,
            y_motor: sol.y_motor,
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit() -> LegGeometry {
        LegGeometry::new(1.0, 1.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn golden_unit_leg() {
        let s = ik(&unit(), EndEffector { x_end: 0.0, y_end: 0.0 }).unwrap();
        assert_eq!(s.theta_y, 0.0);
        assert!((s.theta_x - PI / 6.0).abs() < 1e-15);
        assert!((s.x_motor + (PI / 6.0).cos()).abs() < 1e-15);
        assert!((s.x_motor + 0.8660).abs() < 1e-4);
        assert_eq!(s.y_motor, 1.0);
    }

    #[test]
    fn theta_y_zero_at_reference() {
        let g = LegGeometry::new(0.3, 0.7, 0.25, -0.1).unwrap();
        let s = ik(
            &g,
            EndEffector {
                x_end: 0.25,
                y_end: -0.3,
            },
        )
        .unwrap();
        assert_eq!(s.theta_y, 0.0);
    }

    #[test]
    fn workspace_boundary_is_inclusive() {
        let g = unit();
        assert!(ik(&g, EndEffector { x_end: 1.0, y_end: 0.0 }).is_ok());
        let err = ik(
            &g,
            EndEffector {
                x_end: 1.0 + 1e-12,
                y_end: 0.0,
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::OutOfWorkspace {
                equation: "theta_y",
                ..
            }
        ));
        // theta_y = 0 so the second argument is y_end + 0.5
        assert!(ik(&g, EndEffector { x_end: 0.0, y_end: 0.5 }).is_ok());
        let err = ik(&g, EndEffector { x_end: 0.0, y_end: 0.6 }).unwrap_err();
        assert!(matches!(
            err,
            Error::OutOfWorkspace {
                equation: "theta_x",
                ..
            }
        ));
        assert!(err.is_domain());
    }

    #[test]
    fn round_trip_grid() {
        let g = LegGeometry::new(0.8, 1.3, 0.1, -0.2).unwrap();
        for i in 0..=40 {
            for j in 0..=40 {
                let tx = -1.5 + 3.0 * i as f64 / 40.0;
                let ty = -1.5 + 3.0 * j as f64 / 40.0;
                let s = ik(&g, fk_oracle(&g, tx, ty)).unwrap();
                assert!((s.theta_x - tx).abs() < 1e-9 && (s.theta_y - ty).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn action_mapping_and_leg_errors() {
        let geoms = [unit(); NUM_LEGS];
        let a = Action::zeros(8);
        let t = action_to_motor_targets(&a, &geoms).unwrap();
        // theta = 0: x_motor = -l_x, y_motor = y_end + l_y = -0.5 + 1
        for m in t {
            assert!((m.x_motor + 1.0).abs() < 1e-15);
            assert!((m.y_motor - 0.5).abs() < 1e-15);
        }
        let mut v = vec![0.0f32; 8];
        v[5] = 2.0;
        let err = action_to_motor_targets(&Action::new(v).unwrap(), &geoms).unwrap_err();
        assert!(matches!(err, Error::Leg { leg: 2, .. }));
        assert!(err.is_domain());
        assert!(action_to_motor_targets(&Action::zeros(6), &geoms).is_err());
    }

    #[test]
    fn geometry_file() {
        let text = "# shared\nl_x = 1\nl_y=2\nx_motor_ref=0\ny_motor_ref=0\nleg3.l_x=5 # override\n";
        let set = LegGeometry::parse_set(text).unwrap();
        assert_eq!(set[0].l_x, 1.0);
        assert_eq!(set[3].l_x, 5.0);
        assert_eq!(set[3].l_y, 2.0);
        assert!(LegGeometry::parse_set("l_x=1\nl_y=1\nx_motor_ref=0\n").is_err());
        assert!(LegGeometry::parse_set("leg4.l_x=1").is_err());
        assert!(LegGeometry::parse_set("l_z=1").is_err());
        assert!(LegGeometry::parse_set("l_x=-1\nl_y=1\nx_motor_ref=0\ny_motor_ref=0").is_err());
    }
}
