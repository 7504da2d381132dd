//! Run the integer kernel directly and look at its operation counters.

use microgait::kernel::{quantize_obs, OpCounters};
use microgait::quant::dequantize_action;
use microgait::{infer_int8, quantize_policy, Fp32Policy, Observation, PolicySpec, QuantScheme};

fn main() -> microgait::Result<()> {
    let p = Fp32Policy::random(PolicySpec::quadruped(), 7);
    let calib: Vec<Observation> = (0..64)
        .map(|k| Observation::new((0..24).map(|i| ((k * 24 + i) as f32 * 0.37).sin()).collect()))
        .collect::<microgait::Result<_>>()?;

    for scheme in [QuantScheme::PerTensor, QuantScheme::PerFeature] {
        let q = quantize_policy(&p, scheme, &calib)?;
        let (s_in, z_in) = q.observation_params();
        let (s_out, z_out) = q.output_params();
        let x = quantize_obs(&calib[0], s_in, z_in);
        let (y, c): (Vec<i8>, OpCounters) = infer_int8(&q, &x)?;
        println!("{scheme}");
        println!("  input  q  {x:?}");
        println!("  output q  {y:?}");
        println!("  output    {:?}", dequantize_action(&y, s_out, z_out));
        println!("  fp32      {:?}", p.forward(calib[0].as_slice())?);
        println!(
            "  macs {} activations {} requants {} extra param loads {}",
            c.macs, c.activations, c.requants, c.param_loads
        );
    }
    Ok(())
}
