//! Integer-only forward pass with exact operation counters.
//!
//! Mirrors a scalar microcontroller loop: Int8 x Int8 products accumulate in
//! Int32 on top of a pre-folded Int32 bias, the accumulator is requantized to
//! Int8, and hidden layers then apply the integer activation.

use crate::error::{Error, Result};
use crate::policy::{Action, Observation};
use crate::quant::{dequantize_action, QuantScheme, QuantizedPolicy};

/// Operations executed by one or more forward passes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub macs: u64,
    pub activations: u64,
    pub requants: u64,
    /// Extra requantizer-parameter loads; nonzero only for per-feature.
    pub param_loads: u64,
}

impl std::ops::AddAssign for OpCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.macs += rhs.macs;
        self.activations += rhs.activations;
        self.requants += rhs.requants;
        self.param_loads += rhs.param_loads;
    }
}

/// Run `qp` on a quantized observation.
///
/// Accumulator overflow cannot occur: [`QuantizedPolicy::new`] rejects any
/// layer whose worst-case accumulator exceeds `i32`.
pub fn infer_int8(qp: &QuantizedPolicy, obs_q: &[i8]) -> Result<(Vec<i8>, OpCounters)> {
    let n0 = qp.spec().input_dim();
    if obs_q.len() != n0 {
        return Err(Error::Shape {
            context: "quantized observation",
            expected: n0,
            got: obs_q.len(),
        });
    }
    let per_feature = qp.scheme() == QuantScheme::PerFeature;
    let mut counters = OpCounters::default();
    let mut cur = obs_q.to_vec();
    let mut next = Vec::new();

    for layer in qp.layers() {
        next.clear();
        let shared = &layer.requant[0];
        for (o, row) in layer.weights.chunks_exact(layer.fan_in).enumerate() {
            let mut acc = layer.biases[o];
            for (&w, &x) in row.iter().zip(&cur) {
                acc += w as i32 * x as i32;
            }
            let rp = if per_feature {
                counters.param_loads += 1;
                &layer.requant[o]
            } else {
                shared
            };
            let mut y = rp.apply(acc);
            counters.requants += 1;
            if let Some(act) = &layer.activation {
                y = act.apply(y, layer.output_zero_point);
                counters.activations += 1;
            }
            next.push(y);
        }
        counters.macs += (layer.fan_in * layer.fan_out) as u64;
        std::mem::swap(&mut cur, &mut next);
    }
    Ok((cur, counters))
}

/// `clip(round(obs / scale) + zero_point)` into `[-128, 127]`.
pub fn quantize_obs(obs: &Observation, scale: f32, zero_point: i8) -> Vec<i8> {
    obs.as_slice()
        .iter()
        .map(|&v| ((v / scale).round() + zero_point as f32).clamp(-128.0, 127.0) as i8)
        .collect()
}

/// Quantize, run the integer kernel, dequantize.
pub fn fused_infer_dequant(qp: &QuantizedPolicy, obs: &Observation) -> Result<Action> {
    let (scale, zp) = qp.observation_params();
    let (yq, _) = infer_int8(qp, &quantize_obs(obs, scale, zp))?;
    let (out_scale, out_zp) = qp.output_params();
    Action::new(dequantize_action(&yq, out_scale, out_zp))
}
