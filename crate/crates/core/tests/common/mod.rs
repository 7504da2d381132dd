//! Reference implementations shared by the integration tests. None of these
//! call into the code they check.

#![allow(dead_code)]

use microgait::policy::Observation;
use microgait::quant::{IntActivation, QuantizedPolicy, RequantParams};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Observations with a per-slot spread drawn log-uniformly from [0.05, 2].
pub fn gaussian_calib(seed: u64, n: usize) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCA11_B8A7);
    let spread: Vec<f64> = (0..24).map(|_| 0.05 * 40f64.powf(rng.gen::<f64>())).collect();
    (0..n)
        .map(|_| {
            let v = spread
                .iter()
                .map(|&s| Normal::new(0.0, s).unwrap().sample(&mut rng) as f32)
                .collect();
            Observation::new(v).unwrap()
        })
        .collect()
}

fn pow2(s: u8) -> BigInt {
    BigInt::from(1) << (s as usize)
}

fn clip_i8(v: BigInt) -> BigInt {
    v.clamp(BigInt::from(-128), BigInt::from(127))
}

/// `clip(floor((m * a + 2^(s-1)) / 2^s) + z)` in unbounded integers.
pub fn requant_big(a: &BigInt, rp: &RequantParams) -> BigInt {
    let half = if rp.shift == 0 {
        BigInt::zero()
    } else {
        pow2(rp.shift - 1)
    };
    let q = (BigInt::from(rp.multiplier) * a + half).div_floor(&pow2(rp.shift));
    clip_i8(q + BigInt::from(rp.zero_point))
}

/// Same formula in i128 for bulk sweeps.
pub fn requant_i128(a: i128, m: i32, s: u8, z: i8) -> i128 {
    let half = if s == 0 { 0 } else { 1i128 << (s - 1) };
    ((m as i128 * a + half).div_euclid(1i128 << s) + z as i128).clamp(-128, 127)
}

/// Forward pass over the quantized tensors in arbitrary precision, using
/// the unfolded bias `b + z_in * sum(row)` and explicit `(x - z_in)` terms.
pub fn bigint_infer(qp: &QuantizedPolicy, x: &[i8]) -> Vec<i8> {
    let mut cur: Vec<BigInt> = x.iter().map(|&v| BigInt::from(v)).collect();
    for layer in qp.layers() {
        let zin = BigInt::from(layer.input_zero_point);
        let mut next = Vec::with_capacity(layer.fan_out);
        for o in 0..layer.fan_out {
            let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
            let row_sum: BigInt = row.iter().map(|&w| BigInt::from(w)).sum();
            let bias = BigInt::from(layer.biases[o]) + &zin * &row_sum;
            let mut acc = bias;
            for (w, xv) in row.iter().zip(&cur) {
                acc += BigInt::from(*w) * (xv - &zin);
            }
            let rp = if layer.requant.len() == 1 {
                &layer.requant[0]
            } else {
                &layer.requant[o]
            };
            let mut y = requant_big(&acc, rp);
            if let Some(act) = &layer.activation {
                let z = BigInt::from(layer.output_zero_point);
                y = match act {
                    IntActivation::LeakyRelu { multiplier, shift } => {
                        let d = &y - &z;
                        if d >= BigInt::zero() {
                            y
                        } else {
                            let half = if *shift == 0 { BigInt::zero() } else { pow2(shift - 1) };
                            let d = (BigInt::from(*multiplier) * d + half).div_floor(&pow2(*shift));
                            clip_i8(z + d)
                        }
                    }
                    IntActivation::Table(t) => BigInt::from(t[(y.to_i32().unwrap() + 128) as usize]),
                };
            }
            next.push(y);
        }
        cur = next;
    }
    cur.iter().map(|v| v.to_i8().expect("clipped to i8")).collect()
}

/// Per-term reward, written straight from the reward table.
pub struct RewardTerms {
    pub lin: f64,
    pub ang: f64,
    pub pen_lin: f64,
    pub pen_ang: f64,
    pub air: f64,
}

pub fn reward_oracle(
    vx: f64,
    vy: f64,
    wx: f64,
    wy: f64,
    wz: f64,
    landed_air: &[f64],
    cmd_vx: f64,
    cmd_wz: f64,
    dt: f64,
) -> RewardTerms {
    let kernel = |e: f64| (-(e * e) / 0.25).exp();
    RewardTerms {
        lin: kernel(cmd_vx - vx) * 1.0 * dt,
        ang: kernel(cmd_wz - wz) * 0.5 * dt,
        pen_lin: -(vy * vy) * 0.5 * dt,
        pen_ang: -(wx * wx + wy * wy) * 0.05 * dt,
        air: landed_air.iter().map(|t| t - 0.5).sum::<f64>() * 1.0 * dt,
    }
}

/// Gait curves read from CSV text by hand: `[trot, intermediate, gallop]`.
pub fn curves_by_hand(text: &str) -> [Vec<(f64, f64)>; 3] {
    let mut out: [Vec<(f64, f64)>; 3] = Default::default();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let g = match cols[0] {
            "trot" => 0,
            "intermediate" => 1,
            "gallop" => 2,
            other => panic!("unexpected gait {other}"),
        };
        out[g].push((cols[1].parse().unwrap(), cols[2].parse().unwrap()));
    }
    out
}

/// Piecewise-linear interpolation, clamped at both ends.
pub fn interp(points: &[(f64, f64)], f: f64) -> f64 {
    if f <= points[0].0 {
        return points[0].1;
    }
    for w in points.windows(2) {
        let ((f0, r0), (f1, r1)) = (w[0], w[1]);
        if f <= f1 {
            return r0 + (r1 - r0) * (f - f0) / (f1 - f0);
        }
    }
    points.last().unwrap().1
}
