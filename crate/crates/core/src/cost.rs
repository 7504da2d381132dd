//! Cycles-per-update, clock, update-rate and power conversions.
//!
//! Two routes give cycles per update: a decomposition over operation counts
//! (`c_mac * N_mac + c_q * N_neurons + c_phi * N_phi + c0`, plus
//! `c_load * N_neurons` for per-feature requantizers), and the end-to-end
//! measurement `f_clk / f_update`. Active power is modeled as linear in
//! clock, `V * I_MHz * f_clk / 1e6`.

use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::policy::PolicySpec;
use crate::quant::QuantScheme;

/// Per-operation cycle costs (`c0` is per update).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CycleCoeffs {
    pub c_mac: f64,
    pub c_phi: f64,
    pub c_q: f64,
    pub c_load: f64,
    pub c0: f64,
}

pub const COEFF_NAMES: [&str; 5] = ["c_mac", "c_q", "c_phi", "c_load", "c0"];

impl CycleCoeffs {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c_mac, self.c_phi, self.c_q, self.c_load, self.c0];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err(Error::invalid("cycle coefficients", format!("{self:?} must be >= 0")))
        }
    }

    fn as_array(&self) -> [f64; 5] {
        [self.c_mac, self.c_q, self.c_phi, self.c_load, self.c0]
    }

    fn from_array(a: [f64; 5]) -> Self {
        CycleCoeffs {
            c_mac: a[0],
            c_q: a[1],
            c_phi: a[2],
            c_load: a[3],
            c0: a[4],
        }
    }
}

/// Electrical budget: supply voltage, active current per MHz, power cap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerParams {
    pub volts: f64,
    pub amps_per_mhz: f64,
    pub p_max_watts: f64,
}

impl PowerParams {
    pub fn new(volts: f64, amps_per_mhz: f64, p_max_watts: f64) -> Result<Self> {
        for (name, v) in [
            ("voltage", volts),
            ("current per MHz", amps_per_mhz),
            ("power cap", p_max_watts),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid("power params", format!("{name} {v} must be > 0")));
            }
        }
        Ok(PowerParams {
            volts,
            amps_per_mhz,
            p_max_watts,
        })
    }

    /// Illustrative values, not measurements of any particular part:
    /// 1 V, 50 uA/MHz, 250 uW (which sustains exactly 5 MHz).
    pub fn illustrative() -> Self {
        PowerParams {
            volts: 1.0,
            amps_per_mhz: 50e-6,
            p_max_watts: 250e-6,
        }
    }

    pub fn with_p_max(self, p_max_watts: f64) -> Result<Self> {
        PowerParams::new(self.volts, self.amps_per_mhz, p_max_watts)
    }
}

/// An observed update rate at a known clock.
#[derive(Clone, Debug, PartialEq)]
pub struct RateMeasurement {
    pub f_clk_hz: f64,
    pub f_update_hz: f64,
    pub scheme: QuantScheme,
    pub spec: PolicySpec,
}

impl RateMeasurement {
    pub fn new(f_clk_hz: f64, f_update_hz: f64, scheme: QuantScheme, spec: PolicySpec) -> Result<Self> {
        if !(f_update_hz > 0.0 && f_clk_hz >= f_update_hz && f_clk_hz.is_finite()) {
            return Err(Error::invalid(
                "rate measurement",
                format!("need f_clk >= f_update > 0, got {f_clk_hz} / {f_update_hz}"),
            ));
        }
        Ok(RateMeasurement {
            f_clk_hz,
            f_update_hz,
            scheme,
            spec,
        })
    }
}

/// Operation counts multiplying each coefficient, in [`COEFF_NAMES`] order.
fn design_row(spec: &PolicySpec, scheme: QuantScheme) -> [f64; 5] {
    let neurons = spec.neuron_count() as f64;
    let load = match scheme {
        QuantScheme::PerTensor => 0.0,
        QuantScheme::PerFeature => neurons,
    };
    [
        spec.mac_count() as f64,
        neurons,
        spec.activation_count() as f64,
        load,
        1.0,
    ]
}

/// Modeled cycles per update for `spec` under `scheme`.
pub fn cycles_decomposed(c: &CycleCoeffs, spec: &PolicySpec, scheme: QuantScheme) -> f64 {
    design_row(spec, scheme)
        .iter()
        .zip(c.as_array())
        .map(|(n, c)| n * c)
        .sum()
}

/// `f_clk / f_update`.
pub fn measured_cycles(m: &RateMeasurement) -> f64 {
    m.f_clk_hz / m.f_update_hz
}

pub fn max_update_rate(f_clk_hz: f64, cycles: f64) -> f64 {
    f_clk_hz / cycles
}

/// Active power in watts at `f_clk_hz`.
pub fn power_at_clock(p: &PowerParams, f_clk_hz: f64) -> f64 {
    p.volts * p.amps_per_mhz * (f_clk_hz / 1e6)
}

/// Highest clock sustainable under `p.p_max_watts`.
pub fn max_clock(p: &PowerParams) -> f64 {
    1e6 * p.p_max_watts / (p.volts * p.amps_per_mhz)
}

pub fn feasible_update_rate(p: &PowerParams, cycles: f64) -> f64 {
    max_clock(p) / cycles
}

/// Clock needed to run `cycles` per update at `f_target_hz`.
pub fn required_clock(cycles: f64, f_target_hz: f64) -> f64 {
    cycles * f_target_hz
}

/// Power cap needed to sustain `f_clk_hz` (inverse of [`max_clock`]).
pub fn required_power(volts: f64, amps_per_mhz: f64, f_clk_hz: f64) -> f64 {
    volts * amps_per_mhz * f_clk_hz / 1e6
}

/// One observed `(spec, scheme, cycles per update)` triple.
#[derive(Clone, Debug)]
pub struct CycleObservation {
    pub spec: PolicySpec,
    pub scheme: QuantScheme,
    pub cycles: f64,
}

#[derive(Clone, Debug)]
pub struct CycleFit {
    pub coeffs: CycleCoeffs,
    /// `observed - modeled`, one per observation.
    pub residuals: Vec<f64>,
}

impl CycleFit {
    pub fn rms_residual(&self) -> f64 {
        let n = self.residuals.len().max(1) as f64;
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt()
    }
}

/// Nonnegative least-squares fit of [`CycleCoeffs`] to observed cycles.
///
/// Fails with [`Error::Underdetermined`] naming every coefficient that lies
/// in the null space of the design matrix, e.g. `c_load` when no per-feature
/// observation is present or `c_mac` and `c0` when all observations share
/// one layer shape.
pub fn fit_coeffs(observations: &[CycleObservation]) -> Result<CycleFit> {
    const N: usize = COEFF_NAMES.len();
    if let Some(o) = observations.iter().find(|o| !(o.cycles.is_finite() && o.cycles >= 0.0)) {
        return Err(Error::invalid("cycle observation", format!("cycles {}", o.cycles)));
    }
    let rows: Vec<[f64; N]> = observations.iter().map(|o| design_row(&o.spec, o.scheme)).collect();
    let m = rows.len();

    let norms: Vec<f64> = (0..N)
        .map(|j| rows.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt())
        .collect();

    // Pad to at least N rows so the SVD exposes the full null space.
    let padded = m.max(N);
    let scaled = DMatrix::from_fn(padded, N, |i, j| {
        if i < m && norms[j] > 0.0 {
            rows[i][j] / norms[j]
        } else {
            0.0
        }
    });
    let svd = scaled.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let s_max = svd.singular_values.max();
    let tol = 1e-9 * s_max.max(f64::MIN_POSITIVE);
    let mut null_weight = [0f64; N];
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            for (j, w) in null_weight.iter_mut().enumerate() {
                *w += v_t[(k, j)].powi(2);
            }
        }
    }
    let unidentifiable: Vec<&'static str> = (0..N)
        .filter(|&j| null_weight[j] > 1e-8 || norms[j] == 0.0)
        .map(|j| COEFF_NAMES[j])
        .collect();
    if !unidentifiable.is_empty() {
        return Err(Error::Underdetermined(unidentifiable));
    }

    let a = Array2::from_shape_fn((m, N), |(i, j)| rows[i][j] / norms[j]);
    let b = Array1::from_iter(observations.iter().map(|o| o.cycles));
    let (y, _) = nnls::nnls(a.view(), b.view());
    let mut x = [0f64; N];
    for j in 0..N {
        x[j] = (y[j] / norms[j]).max(0.0);
    }
    let coeffs = CycleCoeffs::from_array(x);
    let residuals = observations
        .iter()
        .map(|o| o.cycles - cycles_decomposed(&coeffs, &o.spec, o.scheme))
        .collect();
    Ok(CycleFit { coeffs, residuals })
}

/// Budget file: `key=value` lines, `#` comments. Every key is optional.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BudgetConfig {
    pub f_clk_hz: Option<f64>,
    pub v_volts: Option<f64>,
    pub i_per_mhz_amps: Option<f64>,
    pub p_max_watts: Option<f64>,
    pub cycles_per_update: Option<f64>,
}

impl BudgetConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = BudgetConfig::default();
        for (key, value, line) in crate::kv::pairs(text)? {
            let v: f64 = value.parse().map_err(|_| Error::Parse {
                line,
                reason: format!("{key}: {value:?} is not a number"),
            })?;
            let slot = match key {
                "f_clk_hz" => &mut cfg.f_clk_hz,
                "v_volts" => &mut cfg.v_volts,
                "i_per_mhz_amps" => &mut cfg.i_per_mhz_amps,
                "p_max_watts" => &mut cfg.p_max_watts,
                "cycles_per_update" => &mut cfg.cycles_per_update,
                other => {
                    return Err(Error::Parse {
                        line,
                        reason: format!("unknown key {other:?}"),
                    })
                }
            };
            *slot = Some(v);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        BudgetConfig::parse(&std::fs::read_to_string(path)?)
    }

    /// Power parameters, if all three electrical keys are present.
    pub fn power(&self) -> Result<Option<PowerParams>> {
        match (self.v_volts, self.i_per_mhz_amps, self.p_max_watts) {
            (Some(v), Some(i), Some(p)) => PowerParams::new(v, i, p).map(Some),
            (None, None, None) => Ok(None),
            _ => Err(Error::invalid(
                "budget",
                "v_volts, i_per_mhz_amps and p_max_watts must be given together",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ActivationSpec;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn decomposition_examples() {
        let spec = PolicySpec::quadruped();
        let zero = CycleCoeffs::default();
        assert_eq!(cycles_decomposed(&zero, &spec, QuantScheme::PerFeature), 0.0);
        let mac_only = CycleCoeffs {
            c_mac: 1.0,
            ..Default::default()
        };
        assert_eq!(cycles_decomposed(&mac_only, &spec, QuantScheme::PerTensor), 11776.0);
        let c = CycleCoeffs {
            c_mac: 8.0,
            c_phi: 4.0,
            c_q: 20.0,
            c_load: 3.5,
            c0: 900.0,
        };
        let diff = cycles_decomposed(&c, &spec, QuantScheme::PerFeature)
            - cycles_decomposed(&c, &spec, QuantScheme::PerTensor);
        assert_eq!(diff, 3.5 * 200.0);
    }

    #[test]
    fn measured_cycles_from_reported_rates() {
        let spec = PolicySpec::quadruped();
        let pf = RateMeasurement::new(5e6, 47.62, QuantScheme::PerFeature, spec.clone()).unwrap();
        assert!((measured_cycles(&pf) - 104_998.0).abs() <= 1.0);
        let pt = RateMeasurement::new(5e6, 52.63, QuantScheme::PerTensor, spec.clone()).unwrap();
        assert!((measured_cycles(&pt) - 95_003.0).abs() <= 1.0);
        let unit = RateMeasurement::new(7.0, 7.0, QuantScheme::PerTensor, spec.clone()).unwrap();
        assert_eq!(measured_cycles(&unit), 1.0);
        assert!(RateMeasurement::new(1.0, 2.0, QuantScheme::PerTensor, spec).is_err());
    }

    #[test]
    fn update_rate_inverts_measurement() {
        assert!(rel(max_update_rate(5e6, 5e6 / 47.62), 47.62) < 1e-12);
        assert!(rel(max_update_rate(5e6, 5e6 / 52.63), 52.63) < 1e-12);
        assert_eq!(max_update_rate(5e6, 1.0), 5e6);
    }

    #[test]
    fn power_model() {
        let p = PowerParams::illustrative();
        assert!(rel(power_at_clock(&p, 5e6), 250e-6) < 1e-12);
        assert_eq!(power_at_clock(&p, 0.0), 0.0);
        assert!(rel(power_at_clock(&p, 10e6), 2.0 * power_at_clock(&p, 5e6)) < 1e-15);
        assert!(rel(max_clock(&p), 5e6) < 1e-12);
        assert!(rel(max_clock(&p.with_p_max(442.5e-6).unwrap()), 8.85e6) < 1e-12);
        assert!(PowerParams::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn required_clock_for_gait_thresholds() {
        let f60 = required_clock(104_998.0, 60.0);
        assert!((f60 - 6.29988e6).abs() < 1.0);
        assert!(rel(f60, 6.25e6) < 0.02);
        let f85 = required_clock(104_998.0, 85.0);
        assert!(rel(f85, 8.85e6) < 0.01);
        assert_eq!(required_clock(104_998.0, 0.0), 0.0);
    }

    fn obs(dims: &[usize], scheme: QuantScheme, c: &CycleCoeffs) -> CycleObservation {
        let spec = PolicySpec::new(dims.to_vec(), ActivationSpec::leaky_relu()).unwrap();
        CycleObservation {
            cycles: cycles_decomposed(c, &spec, scheme),
            spec,
            scheme,
        }
    }

    #[test]
    fn fit_recovers_known_coefficients() {
        let truth = CycleCoeffs {
            c_mac: 7.5,
            c_phi: 12.0,
            c_q: 30.0,
            c_load: 4.0,
            c0: 1500.0,
        };
        let data = vec![
            obs(&[24, 128, 64, 8], QuantScheme::PerTensor, &truth),
            obs(&[24, 128, 64, 8], QuantScheme::PerFeature, &truth),
            obs(&[24, 64, 8], QuantScheme::PerTensor, &truth),
            obs(&[24, 8], QuantScheme::PerFeature, &truth),
            obs(&[16, 32, 32, 4], QuantScheme::PerTensor, &truth),
            obs(&[48, 256, 8], QuantScheme::PerFeature, &truth),
        ];
        let fit = fit_coeffs(&data).unwrap();
        let got = fit.coeffs.as_array();
        for (g, t) in got.iter().zip(truth.as_array()) {
            assert!(rel(*g, t) < 1e-6, "{got:?} vs {truth:?}");
        }
        assert!(fit.rms_residual() < 1e-6);
    }

    #[test]
    fn fit_names_unidentifiable_coefficients() {
        let c = CycleCoeffs {
            c_mac: 1.0,
            ..Default::default()
        };
        // one shape, both schemes: only c_load separates from the rest
        let data = vec![
            obs(&[24, 128, 64, 8], QuantScheme::PerTensor, &c),
            obs(&[24, 128, 64, 8], QuantScheme::PerFeature, &c),
        ];
        match fit_coeffs(&data) {
            Err(Error::Underdetermined(names)) => {
                assert!(names.contains(&"c_mac") && names.contains(&"c0"));
                assert!(!names.contains(&"c_load"));
            }
            other => panic!("expected underdetermined, got {other:?}"),
        }
        // no per-feature data: c_load column is all zero
        let data: Vec<_> = [[24usize, 8], [8, 8], [3, 5]]
            .iter()
            .map(|d| obs(d, QuantScheme::PerTensor, &c))
            .collect();
        match fit_coeffs(&data) {
            Err(Error::Underdetermined(names)) => assert!(names.contains(&"c_load")),
            other => panic!("expected underdetermined, got {other:?}"),
        }
    }

    #[test]
    fn budget_file() {
        let cfg = BudgetConfig::parse(
            "# board budget\nf_clk_hz = 5e6\nv_volts=1\ni_per_mhz_amps=5e-5\np_max_watts=2.5e-4\n\ncycles_per_update=104998\n",
        )
        .unwrap();
        assert_eq!(cfg.f_clk_hz, Some(5e6));
        assert_eq!(cfg.cycles_per_update, Some(104_998.0));
        let p = cfg.power().unwrap().unwrap();
        assert!(rel(max_clock(&p), 5e6) < 1e-12);
        assert!(BudgetConfig::parse("v_volts=1\n").unwrap().power().is_err());
        assert!(matches!(
            BudgetConfig::parse("bogus=1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(BudgetConfig::parse("f_clk_hz=fast"), Err(Error::Parse { .. })));
    }
}
