//! Inverse kinematics for one leg and motor targets for a whole action.

use microgait::kinematics::{action_to_motor_targets, fk_oracle, ik, EndEffector, LegGeometry};
use microgait::Action;

fn main() -> microgait::Result<()> {
    let g = LegGeometry::illustrative();
    for (x, y) in [(0.0, -1.0e-3), (1.0e-3, -0.5e-3), (-1.5e-3, 0.5e-3)] {
        let s = ik(&g, EndEffector { x_end: x, y_end: y })?;
        let back = fk_oracle(&g, s.theta_x, s.theta_y);
        println!(
            "end ({x:+.4}, {y:+.4}) -> theta ({:+.4}, {:+.4}) motors ({:+.6}, {:+.6}) fk ({:+.4}, {:+.4})",
            s.theta_x, s.theta_y, s.x_motor, s.y_motor, back.x_end, back.y_end
        );
    }

    match ik(
        &g,
        EndEffector {
            x_end: 3e-3,
            y_end: 0.0,
        },
    ) {
        Err(e) => println!("unreachable target: {e}"),
        Ok(s) => println!("unexpected solution {s:?}"),
    }

    let a = Action::new(vec![0.1, -0.2, 0.0, 0.3, -0.1, 0.2, 0.05, -0.05])?;
    let targets = action_to_motor_targets(&a, &[g; 4])?;
    for (leg, t) in targets.iter().enumerate() {
        println!("leg {leg}: x_motor {:+.6} y_motor {:+.6}", t.x_motor, t.y_motor);
    }
    Ok(())
}
