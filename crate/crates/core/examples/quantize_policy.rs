//! Quantize a policy both ways and compare accuracy and size.

use microgait::kernel::fused_infer_dequant;
use microgait::quant::sqnr_db;
use microgait::{quantize_policy, Fp32Policy, Observation, PolicySpec, QuantScheme};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> microgait::Result<()> {
    let p = Fp32Policy::random(PolicySpec::quadruped(), 42);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let normal = Normal::new(0.0f32, 0.5).unwrap();
    let calib: Vec<Observation> = (0..1024)
        .map(|_| Observation::new((0..24).map(|_| normal.sample(&mut rng)).collect()))
        .collect::<microgait::Result<_>>()?;

    let reference: Vec<Vec<f32>> = calib
        .iter()
        .map(|o| p.forward(o.as_slice()))
        .collect::<microgait::Result<_>>()?;
    println!("fp32 payload: {} bytes", p.payload_bytes());
    for scheme in [QuantScheme::PerTensor, QuantScheme::PerFeature] {
        let q = quantize_policy(&p, scheme, &calib)?;
        let out: Vec<Vec<f32>> = calib
            .iter()
            .map(|o| fused_infer_dequant(&q, o).map(|a| a.into_inner()))
            .collect::<microgait::Result<_>>()?;
        let mae = reference
            .iter()
            .flatten()
            .zip(out.iter().flatten())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / (reference.len() * 8) as f64;
        println!(
            "{scheme:<12} SQNR {:6.2} dB  mean |err| {mae:.5}  int8 payload {} bytes ({:.2}x smaller)",
            sqnr_db(&reference, &out)?,
            q.payload_bytes(),
            p.payload_bytes() as f64 / q.payload_bytes() as f64
        );
    }

    let q = quantize_policy(&p, QuantScheme::PerFeature, &calib)?;
    let back = microgait::QuantizedPolicy::from_bytes(&q.to_bytes())?;
    println!(
        "TGQ1 file: {} bytes, reload identical: {}",
        q.to_bytes().len(),
        back == q
    );
    Ok(())
}
