//! Draw per-episode perturbations and see how they change the plant.

use microgait::harness::{sample_dr, DRConfig, PlantParams};

fn main() -> microgait::Result<()> {
    let cfg = DRConfig::default();
    let nominal = PlantParams::default();
    println!("{cfg:#?}\n");
    for seed in 0..4 {
        let p = sample_dr(&cfg, seed)?;
        let plant = nominal.perturbed(&cfg, &p);
        println!(
            "seed {seed}: mass x{:.3} friction x{:.3} gravity [{:+.3} {:+.3} {:+.3}] -> slip speed {:.3}, tilt bias [{:+.3} {:+.3}]",
            p.mass, p.friction, p.gravity[0], p.gravity[1], p.gravity[2], plant.slip_speed, plant.tilt_bias[0], plant.tilt_bias[1]
        );
    }
    Ok(())
}
