//! Recover per-operation cycle costs from timing several policy shapes.
//!
//! The "measurements" here are synthesized from known coefficients plus a
//! little jitter, so the fit can be checked against the truth.

use microgait::cost::{cycles_decomposed, fit_coeffs, CycleCoeffs, CycleObservation};
use microgait::policy::ActivationSpec;
use microgait::{PolicySpec, QuantScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> microgait::Result<()> {
    let truth = CycleCoeffs {
        c_mac: 7.5,
        c_phi: 40.0,
        c_q: 25.0,
        c_load: 6.0,
        c0: 2_000.0,
    };
    let shapes = [
        vec![24, 128, 64, 8],
        vec![24, 64, 64, 8],
        vec![24, 256, 8],
        vec![24, 32, 32, 32, 8],
        vec![24, 128, 4],
        vec![48, 96, 12],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut obs = Vec::new();
    for dims in shapes {
        let spec = PolicySpec::new(dims, ActivationSpec::leaky_relu())?;
        for scheme in [QuantScheme::PerTensor, QuantScheme::PerFeature] {
            let cycles = cycles_decomposed(&truth, &spec, scheme) * (1.0 + rng.gen_range(-0.002..0.002));
            obs.push(CycleObservation {
                spec: spec.clone(),
                scheme,
                cycles,
            });
        }
    }
    let fit = fit_coeffs(&obs)?;
    println!("true   {truth:?}");
    println!("fitted {:?}", fit.coeffs);
    println!("rms residual {:.1} cycles", fit.rms_residual());

    // with one output width the requantize count is the activation count plus
    // a constant, so a single shape cannot separate c_q, c_phi and c0
    match fit_coeffs(&obs[..2]) {
        Err(e) => println!("\none shape only: {e}"),
        Ok(f) => println!("\none shape only fitted {:?}", f.coeffs),
    }
    Ok(())
}
