//! Which gait should the robot use at a given update rate or power cap?

use microgait::cost::PowerParams;
use microgait::gait::{classify_gait, select_gait, select_gait_for_power};
use microgait::{GaitRegime, GaitTable};

fn main() -> microgait::Result<()> {
    let table = GaitTable::bundled();
    println!("{:>8}  {:>6} {:>6} {:>6}  best", "f (Hz)", "trot", "inter", "gallop");
    for f in [10.0, 30.0, 47.62, 60.0, 75.0, 90.0, 120.0] {
        let r = GaitRegime::ALL.map(|g| table.curve(g).reward_at(f));
        let (g, _) = select_gait(&table, f);
        println!("{f:>8.2}  {:>6.3} {:>6.3} {:>6.3}  {g}", r[0], r[1], r[2]);
    }

    for g in GaitRegime::ALL {
        let f = table.curve(g).min_frequency_for(0.95)?;
        println!("{g:<12} reaches 0.95 at {f:.1} Hz");
    }

    let cycles = 104_998.0;
    for p_max_uw in [150.0, 250.0, 350.0, 500.0] {
        let p = PowerParams::new(1.0, 50e-6, p_max_uw * 1e-6)?;
        let s = select_gait_for_power(&table, &p, cycles)?;
        println!(
            "{p_max_uw:>5} uW -> {:6.2} Hz -> {} ({:.3})",
            s.f_update_max_hz, s.gait, s.reward
        );
    }

    for v in [0.01, 0.05, 0.1] {
        println!("command {v} m/s -> {}", classify_gait(v, &table)?);
    }
    Ok(())
}
