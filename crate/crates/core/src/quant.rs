//! Post-training Int8 quantization of an [`Fp32Policy`].
//!
//! Weights are symmetric signed Int8 (`[-127, 127]`, no zero-point) with one
//! scale per tensor or one per output row. Activations are asymmetric Int8
//! with a zero-point, calibrated from min/max over an observation set
//! propagated through the FP32 network. Each layer's Int32 accumulator is
//! brought back to Int8 by an integer multiplier, an arithmetic right shift
//! with round-half-up, and a zero-point, then saturated.

use std::path::Path;
use std::str::FromStr;

use crate::binio::{put_f32s, put_i32s, put_i8s, Reader};
use crate::error::{Error, Result};
use crate::policy::{
    read_spec_header, write_spec_header, ActivationKind, ActivationSpec, Fp32Policy, Observation, PolicySpec,
};

pub const QUANT_MAGIC: [u8; 4] = *b"TGQ1";

/// Weight-scale granularity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuantScheme {
    /// One scale for the whole weight tensor, one requantizer per layer.
    PerTensor,
    /// One scale and one requantizer per output feature.
    PerFeature,
}

impl QuantScheme {
    pub fn name(self) -> &'static str {
        match self {
            QuantScheme::PerTensor => "per-tensor",
            QuantScheme::PerFeature => "per-feature",
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            QuantScheme::PerTensor => 0,
            QuantScheme::PerFeature => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(QuantScheme::PerTensor),
            1 => Ok(QuantScheme::PerFeature),
            other => Err(Error::invalid("quantization scheme", format!("byte {other}"))),
        }
    }
}

impl FromStr for QuantScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-tensor" => Ok(QuantScheme::PerTensor),
            "per-feature" => Ok(QuantScheme::PerFeature),
            other => Err(Error::invalid("quantization scheme", other.to_string())),
        }
    }
}

impl std::fmt::Display for QuantScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed-point requantizer `clip(((multiplier * a + r) >> shift) + zero_point)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RequantParams {
    pub multiplier: i32,
    pub shift: u8,
    pub zero_point: i8,
}

impl RequantParams {
    pub fn new(multiplier: i32, shift: u8, zero_point: i8) -> Result<Self> {
        if multiplier < 0 {
            return Err(Error::invalid("requant multiplier", format!("{multiplier} < 0")));
        }
        if shift > 31 {
            return Err(Error::invalid("requant shift", format!("{shift} > 31")));
        }
        Ok(RequantParams {
            multiplier,
            shift,
            zero_point,
        })
    }

    pub fn with_zero_point(self, zero_point: i8) -> Self {
        RequantParams { zero_point, ..self }
    }

    /// Round-half-up term `2^(shift-1)`, zero when `shift == 0`.
    #[inline]
    pub fn rounding(&self) -> i64 {
        if self.shift == 0 {
            0
        } else {
            1i64 << (self.shift - 1)
        }
    }

    /// The real ratio `multiplier / 2^shift`.
    pub fn ratio(&self) -> f64 {
        self.multiplier as f64 / (1u64 << self.shift) as f64
    }

    #[inline]
    pub fn apply(&self, acc: i32) -> i8 {
        let scaled = (self.multiplier as i64 * acc as i64 + self.rounding()) >> self.shift;
        (scaled + self.zero_point as i64).clamp(-128, 127) as i8
    }
}

pub fn requantize(a: i32, rp: &RequantParams) -> i8 {
    rp.apply(a)
}

/// Encode a positive real `ratio` as `(multiplier, shift)` with
/// `multiplier < 2^31`, `shift <= 31`, choosing the largest shift that fits.
///
/// For `ratio >= 2^-8` the relative error is at most `2^-24`. Smaller ratios
/// are limited by the 31-bit shift to an absolute error of `2^-32`.
pub fn fixed_point_multiplier(ratio: f64) -> Result<(i32, u8)> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::invalid(
            "requant ratio",
            format!("{ratio} must be finite and > 0"),
        ));
    }
    const LIMIT: f64 = 2_147_483_648.0;
    for shift in (0..=31u8).rev() {
        let m = (ratio * (1u64 << shift) as f64).round();
        if m < LIMIT {
            return Ok((m as i32, shift));
        }
    }
    Err(Error::RequantOverflow { ratio })
}

/// Requantizer for `input_scale * weight_scale / output_scale`, zero-point 0.
pub fn derive_requant(input_scale: f64, weight_scale: f64, output_scale: f64) -> Result<RequantParams> {
    for (name, s) in [
        ("input", input_scale),
        ("weight", weight_scale),
        ("output", output_scale),
    ] {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid("requant scale", format!("{name} scale {s}")));
        }
    }
    let (multiplier, shift) = fixed_point_multiplier(input_scale * weight_scale / output_scale)?;
    RequantParams::new(multiplier, shift, 0)
}

/// Hidden-layer activation evaluated on the Int8 grid of the layer output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IntActivation {
    /// Negative offsets from the zero-point are scaled by `multiplier >> shift`.
    LeakyRelu { multiplier: i32, shift: u8 },
    /// Full 256-entry lookup, indexed by `value + 128`.
    Table(Box<[i8; 256]>),
}

impl IntActivation {
    pub fn derive(act: &ActivationSpec, scale: f32, zero_point: i8) -> Result<Self> {
        match act.kind {
            ActivationKind::LeakyRelu => {
                let (multiplier, shift) = fixed_point_multiplier(act.alpha as f64)?;
                Ok(IntActivation::LeakyRelu { multiplier, shift })
            }
            ActivationKind::Elu => {
                let mut table = [0i8; 256];
                for (i, t) in table.iter_mut().enumerate() {
                    let q = i as i32 - 128;
                    let x = scale * (q - zero_point as i32) as f32;
                    let y = (act.apply(x) / scale).round() as i32 + zero_point as i32;
                    *t = y.clamp(-128, 127) as i8;
                }
                Ok(IntActivation::Table(Box::new(table)))
            }
        }
    }

    #[inline]
    pub fn apply(&self, y: i8, zero_point: i8) -> i8 {
        match self {
            IntActivation::LeakyRelu { multiplier, shift } => {
                let d = y as i64 - zero_point as i64;
                if d >= 0 {
                    return y;
                }
                let r = if *shift == 0 { 0 } else { 1i64 << (shift - 1) };
                let d = (*multiplier as i64 * d + r) >> shift;
                (zero_point as i64 + d).clamp(-128, 127) as i8
            }
            IntActivation::Table(t) => t[(y as i32 + 128) as usize],
        }
    }

    /// Bytes the activation parameters occupy on the device.
    pub fn payload_bytes(&self) -> usize {
        match self {
            IntActivation::LeakyRelu { .. } => 5,
            IntActivation::Table(_) => 256,
        }
    }
}

/// Asymmetric Int8 parameters covering `[min, max]` (widened to include 0).
pub fn activation_params(min: f32, max: f32) -> (f32, i8) {
    let lo = min.min(0.0);
    let hi = max.max(0.0);
    let span = hi - lo;
    if !(span.is_finite() && span > 0.0) {
        return (1.0, 0);
    }
    let scale = span / 255.0;
    let zp = (-128.0 - lo / scale).round().clamp(-128.0, 127.0) as i8;
    (scale, zp)
}

/// Symmetric Int8 weights and their scales (one per tensor or per row).
/// An all-zero tensor or row gets scale 1.
pub fn quantize_weights(weights: &[f32], fan_in: usize, fan_out: usize, scheme: QuantScheme) -> (Vec<i8>, Vec<f32>) {
    debug_assert_eq!(weights.len(), fan_in * fan_out);
    let scale_of = |w: &[f32]| {
        let m = w.iter().fold(0f32, |m, v| m.max(v.abs()));
        if m > 0.0 {
            m / 127.0
        } else {
            1.0
        }
    };
    let scales = match scheme {
        QuantScheme::PerTensor => vec![scale_of(weights)],
        QuantScheme::PerFeature => weights.chunks_exact(fan_in).map(scale_of).collect(),
    };
    let q = weights
        .chunks_exact(fan_in)
        .enumerate()
        .flat_map(|(o, row)| {
            let s = scales[if scales.len() == 1 { 0 } else { o }];
            row.iter().map(move |&w| (w / s).round().clamp(-127.0, 127.0) as i8)
        })
        .collect();
    (q, scales)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major, `[-127, 127]`.
    pub weights: Vec<i8>,
    /// Bias at scale `input_scale * weight_scale`, with the input
    /// zero-point correction `-input_zero_point * sum(row)` folded in.
    pub biases: Vec<i32>,
    pub input_scale: f32,
    pub input_zero_point: i8,
    pub weight_scales: Vec<f32>,
    pub output_scale: f32,
    pub output_zero_point: i8,
    /// One entry (per-tensor) or `fan_out` entries (per-feature).
    pub requant: Vec<RequantParams>,
    /// `None` on the output layer.
    pub activation: Option<IntActivation>,
}

impl QuantizedLayer {
    pub fn weight_scale(&self, o: usize) -> f32 {
        self.weight_scales[if self.weight_scales.len() == 1 { 0 } else { o }]
    }

    pub fn requant_for(&self, o: usize) -> &RequantParams {
        &self.requant[if self.requant.len() == 1 { 0 } else { o }]
    }

    pub fn row(&self, o: usize) -> &[i8] {
        &self.weights[o * self.fan_in..(o + 1) * self.fan_in]
    }

    /// Worst case `|acc| <= fan_in * 127 * 255 + max |bias|`.
    pub fn accumulator_bound(&self) -> i128 {
        let max_bias = self.biases.iter().map(|b| (*b as i128).abs()).max().unwrap_or(0);
        self.fan_in as i128 * 127 * 255 + max_bias
    }

    /// Real-valued weights reconstructed from the Int8 tensor.
    pub fn dequantized_weights(&self) -> Vec<f32> {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, &q)| q as f32 * self.weight_scale(k / self.fan_in))
            .collect()
    }

    fn payload_bytes(&self) -> usize {
        self.weights.len()
            + 4 * self.biases.len()
            + 6 * self.requant.len()
            + 2
            + self.activation.as_ref().map_or(0, IntActivation::payload_bytes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedPolicy {
    spec: PolicySpec,
    scheme: QuantScheme,
    layers: Vec<QuantizedLayer>,
}

impl QuantizedPolicy {
    pub fn new(spec: PolicySpec, scheme: QuantScheme, layers: Vec<QuantizedLayer>) -> Result<Self> {
        if layers.len() != spec.num_layers() {
            return Err(Error::Shape {
                context: "quantized layer count",
                expected: spec.num_layers(),
                got: layers.len(),
            });
        }
        let per_layer = |scheme, fan_out| match scheme {
            QuantScheme::PerTensor => 1,
            QuantScheme::PerFeature => fan_out,
        };
        let last = layers.len() - 1;
        for (l, ((fan_in, fan_out), layer)) in spec.layer_shapes().zip(&layers).enumerate() {
            let checks = [
                ("quantized weights", fan_in * fan_out, layer.weights.len()),
                ("quantized biases", fan_out, layer.biases.len()),
                ("weight scales", per_layer(scheme, fan_out), layer.weight_scales.len()),
                ("requant params", per_layer(scheme, fan_out), layer.requant.len()),
                ("layer fan-in", fan_in, layer.fan_in),
                ("layer fan-out", fan_out, layer.fan_out),
            ];
            for (context, expected, got) in checks {
                if expected != got {
                    return Err(Error::Shape { context, expected, got });
                }
            }
            if layer.weights.contains(&i8::MIN) {
                return Err(Error::invalid("quantized weights", "-128 outside symmetric range"));
            }
            let scales_ok = layer
                .weight_scales
                .iter()
                .chain([&layer.input_scale, &layer.output_scale])
                .all(|s| s.is_finite() && *s > 0.0);
            if !scales_ok {
                return Err(Error::invalid("quantization scales", format!("layer {l}")));
            }
            if layer.requant.iter().any(|r| r.multiplier < 0 || r.shift > 31) {
                return Err(Error::invalid("requant params", format!("layer {l}")));
            }
            if (l < last) != layer.activation.is_some() {
                return Err(Error::invalid("activation", format!("layer {l}")));
            }
            if l > 0 {
                let prev = &layers[l - 1];
                if prev.output_scale != layer.input_scale || prev.output_zero_point != layer.input_zero_point {
                    return Err(Error::invalid("activation grid", format!("layer {l} input")));
                }
            }
            let bound = layer.accumulator_bound();
            if bound >= 1i128 << 31 {
                return Err(Error::AccumulatorBound { layer: l, bound });
            }
        }
        Ok(QuantizedPolicy { spec, scheme, layers })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn scheme(&self) -> QuantScheme {
        self.scheme
    }

    pub fn layers(&self) -> &[QuantizedLayer] {
        &self.layers
    }

    pub fn observation_params(&self) -> (f32, i8) {
        let l = &self.layers[0];
        (l.input_scale, l.input_zero_point)
    }

    pub fn output_params(&self) -> (f32, i8) {
        let l = self.layers.last().unwrap();
        (l.output_scale, l.output_zero_point)
    }

    /// Device-resident bytes: Int8 weights, Int32 biases, requantizer
    /// tables (`i32, u8, i8` each), per-layer zero-points and activation
    /// parameters. Float scales are host-side metadata and not counted.
    pub fn payload_bytes(&self) -> usize {
        self.layers.iter().map(QuantizedLayer::payload_bytes).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&QUANT_MAGIC);
        out.push(self.scheme.to_byte());
        write_spec_header(&mut out, &self.spec);
        for layer in &self.layers {
            put_i8s(&mut out, &layer.weights);
            put_i32s(&mut out, &layer.biases);
            put_f32s(&mut out, &[layer.input_scale, layer.output_scale]);
            put_f32s(&mut out, &layer.weight_scales);
            put_i8s(&mut out, &[layer.input_zero_point, layer.output_zero_point]);
            for rp in &layer.requant {
                out.extend_from_slice(&rp.multiplier.to_le_bytes());
                out.push(rp.shift);
                out.push(rp.zero_point as u8);
            }
        }
        out
    }

    /// Parse a `TGQ1` file. Integer activation parameters are re-derived
    /// from the header's activation and the stored output grid.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(QUANT_MAGIC)?;
        let scheme = QuantScheme::from_byte(r.u8("scheme")?)?;
        let spec = read_spec_header(&mut r)?;
        let last = spec.num_layers() - 1;
        let layers = spec
            .layer_shapes()
            .enumerate()
            .map(|(l, (fan_in, fan_out))| {
                let groups = match scheme {
                    QuantScheme::PerTensor => 1,
                    QuantScheme::PerFeature => fan_out,
                };
                let weights = r.i8_vec(fan_in * fan_out, "quantized weights")?;
                let biases = r.i32_vec(fan_out, "quantized biases")?;
                let input_scale = r.f32("input scale")?;
                let output_scale = r.f32("output scale")?;
                let weight_scales = r.f32_vec(groups, "weight scales")?;
                let input_zero_point = r.i8("input zero-point")?;
                let output_zero_point = r.i8("output zero-point")?;
                let requant = (0..groups)
                    .map(|_| {
                        let m = r.i32("requant multiplier")?;
                        let s = r.u8("requant shift")?;
                        let z = r.i8("requant zero-point")?;
                        RequantParams::new(m, s, z)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let activation = if l < last {
                    if !(output_scale.is_finite() && output_scale > 0.0) {
                        return Err(Error::invalid("quantization scales", format!("layer {l}")));
                    }
                    Some(IntActivation::derive(
                        &spec.hidden_activation,
                        output_scale,
                        output_zero_point,
                    )?)
                } else {
                    None
                };
                Ok(QuantizedLayer {
                    fan_in,
                    fan_out,
                    weights,
                    biases,
                    input_scale,
                    input_zero_point,
                    weight_scales,
                    output_scale,
                    output_zero_point,
                    requant,
                    activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish("quantized policy file")?;
        QuantizedPolicy::new(spec, scheme, layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        QuantizedPolicy::from_bytes(&std::fs::read(path)?)
    }
}

/// Quantize `p` to Int8 under `scheme`, calibrating activation ranges on
/// `calib`.
pub fn quantize_policy(p: &Fp32Policy, scheme: QuantScheme, calib: &[Observation]) -> Result<QuantizedPolicy> {
    if calib.is_empty() {
        return Err(Error::invalid("calibration set", "empty"));
    }
    let spec = p.spec();
    let n_layers = spec.num_layers();

    let mut in_range = (f32::INFINITY, f32::NEG_INFINITY);
    let mut out_ranges = vec![(f32::INFINITY, f32::NEG_INFINITY); n_layers];
    for obs in calib {
        for &v in obs.as_slice() {
            in_range = (in_range.0.min(v), in_range.1.max(v));
        }
        for (range, pre) in out_ranges.iter_mut().zip(p.forward_trace(obs.as_slice())?) {
            for v in pre {
                *range = (range.0.min(v), range.1.max(v));
            }
        }
    }

    let (mut in_scale, mut in_zp) = activation_params(in_range.0, in_range.1);
    let mut layers = Vec::with_capacity(n_layers);
    for (l, layer) in p.layers().iter().enumerate() {
        let (weights, weight_scales) = quantize_weights(&layer.weights, layer.fan_in, layer.fan_out, scheme);
        let (out_scale, out_zp) = activation_params(out_ranges[l].0, out_ranges[l].1);

        let mut biases = Vec::with_capacity(layer.fan_out);
        for (o, &b) in layer.biases.iter().enumerate() {
            let ws = weight_scales[if weight_scales.len() == 1 { 0 } else { o }];
            let bq = (b as f64 / (in_scale as f64 * ws as f64)).round() as i64;
            let row_sum: i64 = weights[o * layer.fan_in..(o + 1) * layer.fan_in]
                .iter()
                .map(|&w| w as i64)
                .sum();
            let folded = bq - in_zp as i64 * row_sum;
            let folded = i32::try_from(folded).map_err(|_| Error::AccumulatorBound {
                layer: l,
                bound: folded as i128,
            })?;
            biases.push(folded);
        }

        let requant = weight_scales
            .iter()
            .map(|&ws| {
                derive_requant(in_scale as f64, ws as f64, out_scale as f64).map(|rp| rp.with_zero_point(out_zp))
            })
            .collect::<Result<Vec<_>>>()?;

        let activation = if l + 1 < n_layers {
            Some(IntActivation::derive(&spec.hidden_activation, out_scale, out_zp)?)
        } else {
            None
        };

        layers.push(QuantizedLayer {
            fan_in: layer.fan_in,
            fan_out: layer.fan_out,
            weights,
            biases,
            input_scale: in_scale,
            input_zero_point: in_zp,
            weight_scales,
            output_scale: out_scale,
            output_zero_point: out_zp,
            requant,
            activation,
        });
        in_scale = out_scale;
        in_zp = out_zp;
    }
    QuantizedPolicy::new(spec.clone(), scheme, layers)
}

/// `10 log10(sum |ref|^2 / sum |ref - test|^2)` in dB over all vectors;
/// `f64::INFINITY` when the two are identical.
pub fn sqnr_db(reference: &[Vec<f32>], test: &[Vec<f32>]) -> Result<f64> {
    if reference.len() != test.len() {
        return Err(Error::Shape {
            context: "SQNR vector count",
            expected: reference.len(),
            got: test.len(),
        });
    }
    let mut signal = 0f64;
    let mut noise = 0f64;
    for (r, t) in reference.iter().zip(test) {
        if r.len() != t.len() {
            return Err(Error::Shape {
                context: "SQNR vector width",
                expected: r.len(),
                got: t.len(),
            });
        }
        for (&a, &b) in r.iter().zip(t) {
            signal += (a as f64).powi(2);
            noise += (a as f64 - b as f64).powi(2);
        }
    }
    if signal == 0.0 {
        return Err(Error::ZeroReference);
    }
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// `(q - zero_point) * scale`, elementwise.
pub fn dequantize_action(q: &[i8], scale: f32, zero_point: i8) -> Vec<f32> {
    q.iter()
        .map(|&v| (v as i32 - zero_point as i32) as f32 * scale)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ActivationSpec;

    #[test]
    fn requantize_examples() {
        let any = RequantParams::new(123_456, 17, 0).unwrap();
        assert_eq!(requantize(0, &any), 0);
        let unit = RequantParams::new(1, 0, 0).unwrap();
        assert_eq!(requantize(1 << 30, &unit), 127);
        assert_eq!(requantize(-(1 << 30), &unit), -128);
        // ((3 * 5 + 1) >> 1) - 2 = 6
        let rp = RequantParams::new(3, 1, -2).unwrap();
        assert_eq!(rp.rounding(), 1);
        assert_eq!(requantize(5, &rp), 6);
    }

    #[test]
    fn requant_param_validation() {
        assert!(RequantParams::new(-1, 0, 0).is_err());
        assert!(RequantParams::new(1, 32, 0).is_err());
        assert_eq!(RequantParams::new(1, 0, 0).unwrap().rounding(), 0);
        assert_eq!(RequantParams::new(1, 31, 0).unwrap().rounding(), 1 << 30);
    }

    #[test]
    fn canonical_dyadic_multipliers() {
        assert_eq!(fixed_point_multiplier(0.5).unwrap(), (1 << 30, 31));
        assert_eq!(fixed_point_multiplier(1.0).unwrap(), (1 << 30, 30));
        assert_eq!(fixed_point_multiplier(2.0).unwrap(), (1 << 30, 29));
        let rp = derive_requant(0.5, 1.0, 1.0).unwrap();
        assert_eq!((rp.multiplier, rp.shift, rp.zero_point), (1 << 30, 31, 0));
    }

    #[test]
    fn multiplier_precision_for_point_three() {
        let (m, s) = fixed_point_multiplier(0.3).unwrap();
        let approx = m as f64 / (1u64 << s) as f64;
        assert!((approx - 0.3).abs() <= 0.3 * 2f64.powi(-24));
    }

    #[test]
    fn multiplier_overflow_and_bad_input() {
        assert!(matches!(
            fixed_point_multiplier(2f64.powi(31)),
            Err(Error::RequantOverflow { .. })
        ));
        assert!(fixed_point_multiplier(2f64.powi(31) - 1.0).is_ok());
        assert!(fixed_point_multiplier(0.0).is_err());
        assert!(fixed_point_multiplier(f64::NAN).is_err());
        assert!(derive_requant(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn constant_tensor_quantizes_to_full_scale() {
        let w = vec![-0.37f32; 12];
        let (q, s) = quantize_weights(&w, 4, 3, QuantScheme::PerTensor);
        assert_eq!(s.len(), 1);
        assert!((s[0] - 0.37 / 127.0).abs() < 1e-9);
        assert!(q.iter().all(|&v| v == -127));
    }

    #[test]
    fn per_feature_row_scales_track_row_magnitude() {
        let w = vec![0.5f32, -0.25, 0.005, 0.0015];
        let (_, pf) = quantize_weights(&w, 2, 2, QuantScheme::PerFeature);
        assert!((pf[0] / pf[1] - 100.0).abs() < 1e-3);
        let (q, pt) = quantize_weights(&w, 2, 2, QuantScheme::PerTensor);
        assert_eq!(pt.len(), 1);
        // shared scale crushes the small row to one level
        assert_eq!(&q[2..], &[1, 0]);
    }

    #[test]
    fn zero_tensor_gets_unit_scale() {
        let (q, s) = quantize_weights(&[0.0; 6], 3, 2, QuantScheme::PerFeature);
        assert_eq!(s, vec![1.0, 1.0]);
        assert!(q.iter().all(|&v| v == 0));
    }

    #[test]
    fn activation_params_cover_range() {
        let (s, z) = activation_params(-1.0, 3.0);
        assert!((s - 4.0 / 255.0).abs() < 1e-7);
        assert_eq!(z, -64);
        assert_eq!(activation_params(0.0, 0.0), (1.0, 0));
        // positive-only range still includes 0 at -128
        assert_eq!(activation_params(1.0, 2.0).1, -128);
    }

    #[test]
    fn int_leaky_relu_is_monotone_and_identity_above_zero_point() {
        let act = IntActivation::derive(&ActivationSpec::leaky_relu(), 0.02, 5).unwrap();
        let mut prev = i8::MIN;
        for y in i8::MIN..=i8::MAX {
            let v = act.apply(y, 5);
            assert!(v >= prev);
            if y >= 5 {
                assert_eq!(v, y);
            }
            prev = v;
        }
    }

    #[test]
    fn sqnr_cases() {
        let r = vec![vec![1.0f32, -2.0], vec![0.5, 0.0]];
        assert_eq!(sqnr_db(&r, &r).unwrap(), f64::INFINITY);
        let zero = vec![vec![0.0f32, 0.0], vec![0.0, 0.0]];
        assert!(sqnr_db(&r, &zero).unwrap().abs() < 1e-12);
        assert!(matches!(sqnr_db(&zero, &r), Err(Error::ZeroReference)));
        assert!(matches!(sqnr_db(&r, &r[..1]), Err(Error::Shape { .. })));
    }

    #[test]
    fn dequantize_is_affine() {
        assert_eq!(dequantize_action(&[-3, 0, 4], 0.5, 1), vec![-2.0, -0.5, 1.5]);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("per-tensor".parse::<QuantScheme>().unwrap(), QuantScheme::PerTensor);
        assert_eq!("per-feature".parse::<QuantScheme>().unwrap(), QuantScheme::PerFeature);
        assert!("per-row".parse::<QuantScheme>().is_err());
    }
}
