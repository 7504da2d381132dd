//! Int8 locomotion-policy inference for microcontroller-class legged robots.
//!
//! The crate covers the whole path from a trained FP32 policy to a
//! resource-aware controller:
//!
//! - [`policy`]: the 24-128-64-8 MLP, its MAC/parameter accounting and the
//!   `TGP1` weight file.
//! - [`quant`] and [`kernel`]: Int8 post-training quantization (per-tensor or
//!   per-feature), fixed-point requantization and an integer-only forward pass.
//! - [`cost`]: cycle and power models, and a least-squares fit of the cycle
//!   coefficients from measured update rates.
//! - [`gait`]: pick the gait regime that a given update rate supports best.
//! - [`kinematics`]: closed-form inverse kinematics of the two-motor
//!   planar leg.
//! - [`wire`]: the framed host/device protocol with CRC-8.
//! - [`harness`]: a closed-loop runner with zero-order hold, reward terms and
//!   domain randomization over a toy plant.
//! - [`cli`]: the `microgait` command-line front end.
//!
//! Each capability has a runnable program under `examples/`.

pub mod cli;
pub mod cost;
pub mod error;
pub mod gait;
pub mod harness;
pub mod kernel;
pub mod kinematics;
pub mod kv;
pub mod policy;
pub mod quant;
pub mod wire;

mod binio;

pub use error::{Error, Result};
pub use gait::{GaitRegime, GaitTable};
pub use kernel::{infer_int8, OpCounters};
pub use policy::{Action, Fp32Policy, Observation, PolicySpec};
pub use quant::{quantize_policy, QuantScheme, QuantizedPolicy};
