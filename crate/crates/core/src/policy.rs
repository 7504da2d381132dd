//! MLP policy structure, FP32 reference inference and operation accounting.
//!
//! A policy maps a fixed-width observation vector to joint-angle targets
//! through dense layers. Hidden layers share one activation; the output layer
//! is linear.

use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{put_f32s, Reader};
use crate::error::{Error, Result};

pub const POLICY_MAGIC: [u8; 4] = *b"TGP1";

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Elu,
    LeakyRelu,
}

impl ActivationKind {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            ActivationKind::Elu => 0,
            ActivationKind::LeakyRelu => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(ActivationKind::Elu),
            1 => Ok(ActivationKind::LeakyRelu),
            other => Err(Error::invalid("activation kind", format!("byte {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub alpha: f32,
}

impl ActivationSpec {
    pub fn new(kind: ActivationKind, alpha: f32) -> Result<Self> {
        let spec = ActivationSpec { kind, alpha };
        spec.validate()?;
        Ok(spec)
    }

    /// ELU with `alpha = 1.0`.
    pub fn elu() -> Self {
        ActivationSpec {
            kind: ActivationKind::Elu,
            alpha: 1.0,
        }
    }

    /// LeakyReLU with `alpha = 0.01`.
    pub fn leaky_relu() -> Self {
        ActivationSpec {
            kind: ActivationKind::LeakyRelu,
            alpha: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(
                "activation alpha",
                format!("{} must be > 0", self.alpha),
            ));
        }
        if self.kind == ActivationKind::LeakyRelu && self.alpha > 1.0 {
            return Err(Error::invalid(
                "activation alpha",
                format!("LeakyReLU slope {} must be <= 1", self.alpha),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, x: f32) -> f32 {
        if x >= 0.0 {
            return x;
        }
        match self.kind {
            ActivationKind::Elu => self.alpha * x.exp_m1(),
            ActivationKind::LeakyRelu => self.alpha * x,
        }
    }
}

/// Evaluate `a` at `x`.
pub fn activate(a: &ActivationSpec, x: f32) -> f32 {
    a.apply(x)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputActivation {
    #[default]
    Identity,
}

/// Layer widths and activation of a dense policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySpec {
    layer_dims: Vec<usize>,
    pub hidden_activation: ActivationSpec,
    pub output_activation: OutputActivation,
}

impl PolicySpec {
    pub fn new(layer_dims: Vec<usize>, hidden_activation: ActivationSpec) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::invalid("layer dims", "need at least input and output widths"));
        }
        if layer_dims.len() > u8::MAX as usize {
            return Err(Error::invalid("layer dims", "more than 255 widths"));
        }
        if let Some(d) = layer_dims.iter().find(|&&d| d == 0 || d > u16::MAX as usize) {
            return Err(Error::invalid("layer dims", format!("width {d} outside 1..=65535")));
        }
        hidden_activation.validate()?;
        Ok(PolicySpec {
            layer_dims,
            hidden_activation,
            output_activation: OutputActivation::Identity,
        })
    }

    /// The 24 -> 128 -> 64 -> 8 quadruped locomotion policy with LeakyReLU hidden layers.
    pub fn quadruped() -> Self {
        Self::quadruped_with(ActivationSpec::leaky_relu())
    }

    pub fn quadruped_with(hidden_activation: ActivationSpec) -> Self {
        PolicySpec::new(vec![24, 128, 64, 8], hidden_activation).expect("static spec is valid")
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// `(fan_in, fan_out)` of every layer.
    pub fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layer_dims.windows(2).map(|w| (w[0], w[1]))
    }

    /// Multiply-accumulates per forward pass, `sum n_{l-1} * n_l`.
    pub fn mac_count(&self) -> u64 {
        self.layer_shapes().map(|(i, o)| (i * o) as u64).sum()
    }

    /// Weights plus biases.
    pub fn param_count(&self) -> u64 {
        self.mac_count() + self.neuron_count()
    }

    /// Nonlinear activations per forward pass (sum of hidden widths).
    pub fn activation_count(&self) -> u64 {
        let d = &self.layer_dims;
        d[1..d.len() - 1].iter().map(|&n| n as u64).sum()
    }

    /// Neuron outputs per forward pass (sum of hidden and output widths).
    pub fn neuron_count(&self) -> u64 {
        self.layer_dims[1..].iter().map(|&n| n as u64).sum()
    }
}

pub fn mac_count(spec: &PolicySpec) -> u64 {
    spec.mac_count()
}

pub fn param_count(spec: &PolicySpec) -> u64 {
    spec.param_count()
}

/// One named, contiguous block of observation slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObsSlot {
    pub name: &'static str,
    pub len: usize,
}

/// Named ordering of the observation vector.
///
/// The default instantiation is `base_lin_vel(3), base_ang_vel(3),
/// projected_gravity(3), joint_pos(8), prev_action(7)`: 24 slots, with the
/// previous action truncated to its first seven components. Any other
/// layout summing to the policy's input width is equally valid; only the
/// loop harness needs to agree with it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationLayout {
    slots: Vec<ObsSlot>,
}

impl Default for ObservationLayout {
    fn default() -> Self {
        ObservationLayout {
            slots: vec![
                ObsSlot {
                    name: "base_lin_vel",
                    len: 3,
                },
                ObsSlot {
                    name: "base_ang_vel",
                    len: 3,
                },
                ObsSlot {
                    name: "projected_gravity",
                    len: 3,
                },
                ObsSlot {
                    name: "joint_pos",
                    len: 8,
                },
                ObsSlot {
                    name: "prev_action",
                    len: 7,
                },
            ],
        }
    }
}

impl ObservationLayout {
    pub fn new(slots: Vec<ObsSlot>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for s in &slots {
            if s.len == 0 || !seen.insert(s.name) {
                return Err(Error::invalid("observation layout", format!("slot {:?}", s.name)));
            }
        }
        Ok(ObservationLayout { slots })
    }

    pub fn slots(&self) -> &[ObsSlot] {
        &self.slots
    }

    pub fn width(&self) -> usize {
        self.slots.iter().map(|s| s.len).sum()
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        let mut start = 0;
        for s in &self.slots {
            if s.name == name {
                return Some(start..start + s.len);
            }
            start += s.len;
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation(Vec<f32>);

impl Observation {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation", "non-finite component"));
        }
        Ok(Observation(values))
    }

    pub fn zeros(n: usize) -> Self {
        Observation(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// Target joint angles in radians, `[theta_x, theta_y]` for each leg in turn.
#[derive(Clone, Debug, PartialEq)]
pub struct Action(Vec<f32>);

impl Action {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("action", "non-finite component"));
        }
        Ok(Action(values))
    }

    pub fn zeros(n: usize) -> Self {
        Action(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_legs(&self) -> usize {
        self.0.len() / 2
    }

    /// `(theta_x, theta_y)` of leg `i`.
    pub fn leg(&self, i: usize) -> (f32, f32) {
        (self.0[2 * i], self.0[2 * i + 1])
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// Row-major dense layer, `weights[o * fan_in + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl DenseLayer {
    pub fn row(&self, o: usize) -> &[f32] {
        &self.weights[o * self.fan_in..(o + 1) * self.fan_in]
    }

    fn forward_into(&self, x: &[f32], out: &mut Vec<f32>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.fan_in)
                .zip(&self.biases)
                .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (w, v)| acc + w * v)),
        );
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fp32Policy {
    spec: PolicySpec,
    layers: Vec<DenseLayer>,
}

impl Fp32Policy {
    /// `layers` holds `(weights, biases)` per layer, row-major.
    pub fn new(spec: PolicySpec, layers: Vec<(Vec<f32>, Vec<f32>)>) -> Result<Self> {
        if layers.len() != spec.num_layers() {
            return Err(Error::Shape {
                context: "policy layer count",
                expected: spec.num_layers(),
                got: layers.len(),
            });
        }
        let layers = spec
            .layer_shapes()
            .zip(layers)
            .map(|((fan_in, fan_out), (weights, biases))| {
                if weights.len() != fan_in * fan_out {
                    return Err(Error::Shape {
                        context: "layer weights",
                        expected: fan_in * fan_out,
                        got: weights.len(),
                    });
                }
                if biases.len() != fan_out {
                    return Err(Error::Shape {
                        context: "layer biases",
                        expected: fan_out,
                        got: biases.len(),
                    });
                }
                if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
                    return Err(Error::invalid("policy parameters", "non-finite value"));
                }
                Ok(DenseLayer {
                    fan_in,
                    fan_out,
                    weights,
                    biases,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fp32Policy { spec, layers })
    }

    /// Seeded random initialisation: uniform weights in `±sqrt(6 / fan_in)`
    /// scaled per output row by a gain drawn log-uniformly from `[1/8, 1]`,
    /// biases uniform in `±0.1`. Per-row gain spread is typical of trained
    /// policies and is what separates the two quantization schemes.
    pub fn random(spec: PolicySpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_shapes()
            .map(|(fan_in, fan_out)| {
                let bound = (6.0 / fan_in as f32).sqrt();
                let mut weights = Vec::with_capacity(fan_in * fan_out);
                for _ in 0..fan_out {
                    let gain = (rng.gen_range(-3.0f32..=0.0) * std::f32::consts::LN_2).exp();
                    weights.extend((0..fan_in).map(|_| gain * rng.gen_range(-bound..=bound)));
                }
                let biases = (0..fan_out).map(|_| rng.gen_range(-0.1f32..=0.1)).collect();
                (weights, biases)
            })
            .collect();
        Fp32Policy::new(spec, layers).expect("random layers match spec")
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Forward pass on a raw slice.
    pub fn forward(&self, x: &[f32]) -> Result<Vec<f32>> {
        self.check_input(x.len())?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            if l < last {
                let act = self.spec.hidden_activation;
                next.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass returning the pre-activation output of every layer.
    pub fn forward_trace(&self, x: &[f32]) -> Result<Vec<Vec<f32>>> {
        self.check_input(x.len())?;
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut pre = Vec::new();
            layer.forward_into(&cur, &mut pre);
            cur = pre.iter().map(|&v| self.spec.hidden_activation.apply(v)).collect();
            trace.push(pre);
        }
        Ok(trace)
    }

    pub fn infer(&self, obs: &Observation) -> Result<Action> {
        Ok(Action(self.forward(obs.as_slice())?))
    }

    fn check_input(&self, n: usize) -> Result<()> {
        if n != self.spec.input_dim() {
            return Err(Error::Shape {
                context: "observation",
                expected: self.spec.input_dim(),
                got: n,
            });
        }
        Ok(())
    }

    /// Bytes of raw FP32 weights and biases, excluding any header.
    pub fn payload_bytes(&self) -> usize {
        4 * self.spec.param_count() as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload_bytes() + 64);
        out.extend_from_slice(&POLICY_MAGIC);
        write_spec_header(&mut out, &self.spec);
        for layer in &self.layers {
            put_f32s(&mut out, &layer.weights);
            put_f32s(&mut out, &layer.biases);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(POLICY_MAGIC)?;
        let spec = read_spec_header(&mut r)?;
        let layers = spec
            .layer_shapes()
            .map(|(fan_in, fan_out)| {
                Ok((
                    r.f32_vec(fan_in * fan_out, "layer weights")?,
                    r.f32_vec(fan_out, "layer biases")?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish("policy file")?;
        Fp32Policy::new(spec, layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Fp32Policy::from_bytes(&std::fs::read(path)?)
    }
}

pub fn infer_fp32(p: &Fp32Policy, obs: &Observation) -> Result<Action> {
    p.infer(obs)
}

pub fn save_policy(p: &Fp32Policy, path: impl AsRef<Path>) -> Result<()> {
    p.save(path)
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<Fp32Policy> {
    Fp32Policy::load(path)
}

/// `u8 count, u16 dims[count], u8 activation kind, f32 alpha`.
pub(crate) fn write_spec_header(out: &mut Vec<u8>, spec: &PolicySpec) {
    out.push(spec.layer_dims.len() as u8);
    for &d in &spec.layer_dims {
        out.extend_from_slice(&(d as u16).to_le_bytes());
    }
    out.push(spec.hidden_activation.kind.to_byte());
    out.extend_from_slice(&spec.hidden_activation.alpha.to_le_bytes());
}

pub(crate) fn read_spec_header(r: &mut Reader<'_>) -> Result<PolicySpec> {
    let count = r.u8("layer count")? as usize;
    let dims = (0..count)
        .map(|_| r.u16("layer dims").map(usize::from))
        .collect::<Result<Vec<_>>>()?;
    let kind = ActivationKind::from_byte(r.u8("activation kind")?)?;
    let alpha = r.f32("activation alpha")?;
    PolicySpec::new(dims, ActivationSpec::new(kind, alpha)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dims: &[usize]) -> PolicySpec {
        PolicySpec::new(dims.to_vec(), ActivationSpec::leaky_relu()).unwrap()
    }

    #[test]
    fn counts_for_quadruped_policy() {
        let s = PolicySpec::quadruped();
        assert_eq!(s.mac_count(), 11776);
        assert_eq!(s.param_count(), 11976);
        assert_eq!(s.activation_count(), 192);
        assert_eq!(s.neuron_count(), 200);
    }

    #[test]
    fn counts_for_tiny_specs() {
        assert_eq!(mac_count(&spec(&[24, 8])), 192);
        assert_eq!(param_count(&spec(&[24, 8])), 200);
        assert_eq!(mac_count(&spec(&[2, 2])), 4);
        assert_eq!(param_count(&spec(&[1, 1])), 2);
        assert_eq!(spec(&[24, 8]).activation_count(), 0);
    }

    #[test]
    fn spec_rejects_degenerate_dims() {
        assert!(PolicySpec::new(vec![24], ActivationSpec::elu()).is_err());
        assert!(PolicySpec::new(vec![24, 0, 8], ActivationSpec::elu()).is_err());
        assert!(PolicySpec::new(vec![70000, 8], ActivationSpec::elu()).is_err());
    }

    #[test]
    fn activation_alpha_bounds() {
        assert!(ActivationSpec::new(ActivationKind::Elu, 0.0).is_err());
        assert!(ActivationSpec::new(ActivationKind::Elu, 2.0).is_ok());
        assert!(ActivationSpec::new(ActivationKind::LeakyRelu, 1.5).is_err());
        assert!(ActivationSpec::new(ActivationKind::LeakyRelu, 1.0).is_ok());
    }

    #[test]
    fn activation_values() {
        let elu = ActivationSpec::elu();
        assert_eq!(activate(&elu, 0.0), 0.0);
        assert!((activate(&elu, -1.0) - (-0.632_120_6)).abs() < 1e-6);
        assert_eq!(activate(&elu, 2.5), 2.5);
        let leaky = ActivationSpec::leaky_relu();
        assert!((activate(&leaky, -2.0) + 0.02).abs() < 1e-9);
        assert_eq!(activate(&leaky, 3.0), 3.0);
    }

    #[test]
    fn activations_continuous_and_monotone() {
        for alpha in [0.01f32, 0.1, 0.5, 1.0] {
            for kind in [ActivationKind::Elu, ActivationKind::LeakyRelu] {
                let a = ActivationSpec::new(kind, alpha).unwrap();
                assert!(a.apply(-1e-7).abs() < 1e-6);
                let mut prev = f32::NEG_INFINITY;
                for i in -4000..=4000 {
                    let y = a.apply(i as f32 * 1e-3);
                    assert!(y >= prev, "{kind:?} alpha={alpha} not monotone at {i}");
                    prev = y;
                }
            }
        }
    }

    #[test]
    fn zero_weights_output_last_bias() {
        let s = spec(&[3, 4, 2]);
        let p = Fp32Policy::new(s, vec![(vec![0.0; 12], vec![1.0; 4]), (vec![0.0; 8], vec![0.25, -0.5])]).unwrap();
        assert_eq!(p.forward(&[5.0, -1.0, 2.0]).unwrap(), vec![0.25, -0.5]);
    }

    #[test]
    fn identity_net_with_leaky_hidden() {
        // [2, 2, 2]: hidden layer applies LeakyReLU(0.5), output is linear.
        let s = PolicySpec::new(
            vec![2, 2, 2],
            ActivationSpec::new(ActivationKind::LeakyRelu, 0.5).unwrap(),
        )
        .unwrap();
        let eye = vec![1.0, 0.0, 0.0, 1.0];
        let p = Fp32Policy::new(s, vec![(eye.clone(), vec![0.0; 2]), (eye, vec![0.0; 2])]).unwrap();
        assert_eq!(p.forward(&[-1.0, 3.0]).unwrap(), vec![-0.5, 3.0]);
    }

    #[test]
    fn shape_errors() {
        let p = Fp32Policy::random(PolicySpec::quadruped(), 1);
        assert!(matches!(p.forward(&[0.0; 23]), Err(Error::Shape { .. })));
        let bad = Fp32Policy::new(spec(&[2, 2]), vec![(vec![0.0; 3], vec![0.0; 2])]);
        assert!(matches!(bad, Err(Error::Shape { .. })));
        let nan = Fp32Policy::new(spec(&[1, 1]), vec![(vec![f32::NAN], vec![0.0])]);
        assert!(nan.is_err());
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let p = Fp32Policy::random(PolicySpec::quadruped_with(ActivationSpec::elu()), 9);
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"TGP1");
        // magic + count + 4 dims + kind + alpha
        assert_eq!(bytes.len(), 4 + 1 + 8 + 1 + 4 + 47_904);
        let q = Fp32Policy::from_bytes(&bytes).unwrap();
        for (a, b) in p.layers().iter().zip(q.layers()) {
            assert!(a
                .weights
                .iter()
                .zip(&b.weights)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a.biases.iter().zip(&b.biases).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(p, q);
    }

    #[test]
    fn file_errors() {
        let bytes = Fp32Policy::random(spec(&[3, 2]), 2).to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Fp32Policy::from_bytes(&bad), Err(Error::BadMagic { .. })));
        assert!(matches!(
            Fp32Policy::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Fp32Policy::from_bytes(&long), Err(Error::Shape { .. })));
    }

    #[test]
    fn default_layout_fills_input_width() {
        let layout = ObservationLayout::default();
        assert_eq!(layout.width(), 24);
        assert_eq!(layout.range("joint_pos"), Some(9..17));
        assert_eq!(layout.range("prev_action"), Some(17..24));
        assert_eq!(layout.range("nope"), None);
    }
}
