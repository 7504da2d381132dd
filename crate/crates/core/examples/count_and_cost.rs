//! Operation counts for the quadruped policy and what they mean for clock
//! and power on a small microcontroller.

use microgait::cost::{
    feasible_update_rate, max_clock, measured_cycles, power_at_clock, required_clock, PowerParams, RateMeasurement,
};
use microgait::{PolicySpec, QuantScheme};

fn main() -> microgait::Result<()> {
    let spec = PolicySpec::quadruped();
    println!("layers        {:?}", spec.layer_dims());
    println!("MACs/update   {}", spec.mac_count());
    println!("parameters    {}", spec.param_count());
    println!("activations   {}", spec.activation_count());
    println!("neurons       {}", spec.neuron_count());

    // two measured update rates at a 5 MHz clock
    for f_up in [47.62, 52.63] {
        let m = RateMeasurement::new(5e6, f_up, QuantScheme::PerFeature, spec.clone())?;
        println!("\n{f_up} Hz at 5 MHz -> {:.0} cycles/update", measured_cycles(&m));
    }

    let cycles = 104_998.0;
    for target in [60.0, 85.0, 120.0] {
        println!("{target:>5} Hz needs {:.3} MHz", required_clock(cycles, target) / 1e6);
    }

    let p = PowerParams::illustrative();
    println!(
        "\nillustrative budget: {:.0} uW cap -> {:.2} MHz max clock -> {:.2} Hz",
        p.p_max_watts * 1e6,
        max_clock(&p) / 1e6,
        feasible_update_rate(&p, cycles)
    );
    println!("power at 8 MHz: {:.1} uW", power_at_clock(&p, 8e6) * 1e6);
    Ok(())
}
