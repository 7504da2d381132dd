//! Closed-loop episodes on the toy plant at several update rates.
//!
//! The scripted gait controller stands in for a trained policy; lower update
//! rates hold each action longer and the reward drops.

use microgait::harness::{run_episodes, Command, DRConfig, GaitController, PlantParams, SimConfig};
use microgait::GaitTable;

fn main() -> microgait::Result<()> {
    let table = GaitTable::bundled();
    let pp = PlantParams::default();
    let dr = DRConfig::default();
    let seeds: Vec<u64> = (0..8).collect();

    for v in [0.02, 0.08] {
        let cmd = Command::forward(v);
        let ctl = GaitController::new(cmd, &table, &pp)?;
        println!("command {v} m/s ({} at {} Hz stride)", ctl.regime, ctl.stride_hz);
        let mut baseline = None;
        for f in [120.0, 60.0, 30.0, 20.0, 10.0] {
            let sim = SimConfig::new(f, 0)?;
            let eps = run_episodes(|_| GaitController::new(cmd, &table, &pp), &sim, &dr, &pp, cmd, &seeds)
                .into_iter()
                .collect::<microgait::Result<Vec<_>>>()?;
            let mean = eps.iter().map(|e| e.total_reward()).sum::<f64>() / eps.len() as f64;
            let base = *baseline.get_or_insert(mean);
            let falls = eps.iter().filter(|e| e.terminated).count();
            let vx = eps.iter().map(|e| e.mean_vx()).sum::<f64>() / eps.len() as f64;
            println!(
                "  {f:>5} Hz  reward {mean:7.3}  ratio {:.3}  mean vx {vx:.4}  falls {falls}/{}",
                mean / base,
                eps.len()
            );
        }
    }
    Ok(())
}
