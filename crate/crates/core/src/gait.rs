//! Resource-aware gait selection.
//!
//! Each gait regime has a reward-ratio curve over policy update frequency.
//! Given the update rate a device can sustain, pick the regime whose curve
//! is highest there; given a power budget, derive that rate first.

use std::path::Path;

use crate::cost::{feasible_update_rate, PowerParams};
use crate::error::{Error, Result};

/// Ordered from slowest to fastest; ties resolve toward the earlier variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GaitRegime {
    Trot,
    Intermediate,
    Gallop,
}

impl GaitRegime {
    pub const ALL: [GaitRegime; 3] = [GaitRegime::Trot, GaitRegime::Intermediate, GaitRegime::Gallop];

    pub fn name(self) -> &'static str {
        match self {
            GaitRegime::Trot => "trot",
            GaitRegime::Intermediate => "intermediate",
            GaitRegime::Gallop => "gallop",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for GaitRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "trot" => Ok(GaitRegime::Trot),
            "intermediate" => Ok(GaitRegime::Intermediate),
            "gallop" => Ok(GaitRegime::Gallop),
            other => Err(Error::invalid("gait", other.to_string())),
        }
    }
}

impl std::fmt::Display for GaitRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Piecewise-linear reward ratio over update frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardCurve {
    points: Vec<(f64, f64)>,
}

impl RewardCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("reward curve", "need at least 2 points"));
        }
        if points
            .iter()
            .any(|&(f, r)| !(f.is_finite() && r.is_finite() && r >= 0.0))
        {
            return Err(Error::invalid("reward curve", "non-finite or negative point"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("reward curve", "frequencies must strictly increase"));
        }
        Ok(RewardCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Highest reward on the curve.
    pub fn saturation(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation, clamped to the end values outside the domain.
    pub fn reward_at(&self, f: f64) -> f64 {
        let pts = &self.points;
        if f <= pts[0].0 {
            return pts[0].1;
        }
        if f >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let k = pts.partition_point(|p| p.0 <= f);
        let (f0, r0) = pts[k - 1];
        let (f1, r1) = pts[k];
        r0 + (r1 - r0) * (f - f0) / (f1 - f0)
    }

    /// Lowest frequency in the domain where the curve reaches `r_min`.
    pub fn min_frequency_for(&self, r_min: f64) -> Result<f64> {
        let pts = &self.points;
        if pts[0].1 >= r_min {
            return Ok(pts[0].0);
        }
        for w in pts.windows(2) {
            let ((f0, r0), (f1, r1)) = (w[0], w[1]);
            if r1 >= r_min {
                // r0 < r_min <= r1
                return Ok(f0 + (f1 - f0) * (r_min - r0) / (r1 - r0));
            }
        }
        Err(Error::RewardUnreachable { target: r_min })
    }
}

pub fn reward_at(curve: &RewardCurve, f_update_hz: f64) -> f64 {
    curve.reward_at(f_update_hz)
}

pub fn min_frequency_for(curve: &RewardCurve, r_min: f64) -> Result<f64> {
    curve.min_frequency_for(r_min)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaitTable {
    curves: [RewardCurve; 3],
    /// Command speed (m/s) below which the policy trots.
    pub v_trot_max: f64,
    /// Command speed (m/s) below which the policy uses the intermediate gait.
    pub v_int_max: f64,
}

const BUNDLED: &str = include_str!("../data/gait_curves.csv");

impl GaitTable {
    /// Curves in `[trot, intermediate, gallop]` order with thresholds
    /// 0.025 / 0.075 m/s.
    pub fn new(curves: [RewardCurve; 3]) -> Self {
        GaitTable {
            curves,
            v_trot_max: 0.025,
            v_int_max: 0.075,
        }
    }

    pub fn with_thresholds(mut self, v_trot_max: f64, v_int_max: f64) -> Result<Self> {
        if !(v_trot_max > 0.0 && v_int_max > v_trot_max && v_int_max.is_finite()) {
            return Err(Error::invalid(
                "gait thresholds",
                format!("need 0 < {v_trot_max} < {v_int_max}"),
            ));
        }
        self.v_trot_max = v_trot_max;
        self.v_int_max = v_int_max;
        Ok(self)
    }

    /// The synthetic dataset shipped in `data/gait_curves.csv`.
    pub fn bundled() -> Self {
        GaitTable::from_csv_str(BUNDLED).expect("bundled gait curves are valid")
    }

    pub fn curve(&self, g: GaitRegime) -> &RewardCurve {
        &self.curves[g.index()]
    }

    /// Parse `gait,f_update_hz,reward_ratio` rows. Rows for one gait must
    /// have strictly increasing frequency; all three gaits must appear.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    fn from_reader(r: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["gait", "f_update_hz", "reward_ratio"] {
            return Err(Error::Parse {
                line: 1,
                reason: format!("header must be gait,f_update_hz,reward_ratio, got {headers:?}"),
            });
        }
        let mut points: [Vec<(f64, f64)>; 3] = Default::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let gait: GaitRegime = field(0).parse().map_err(|_| Error::Parse {
                line,
                reason: format!("unknown gait {:?}", field(0)),
            })?;
            let num = |k: usize| {
                field(k).parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    reason: format!("{:?} is not a number", field(k)),
                })
            };
            let pts = &mut points[gait.index()];
            let f = num(1)?;
            if pts.last().is_some_and(|&(prev, _)| f <= prev) {
                return Err(Error::Parse {
                    line,
                    reason: format!("{gait} frequency {f} does not increase"),
                });
            }
            pts.push((f, num(2)?));
        }
        let [t, i, g] = points;
        Ok(GaitTable::new([
            RewardCurve::new(t)?,
            RewardCurve::new(i)?,
            RewardCurve::new(g)?,
        ]))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("gait,f_update_hz,reward_ratio\n");
        for g in GaitRegime::ALL {
            for (f, r) in self.curve(g).points() {
                s.push_str(&format!("{g},{f},{r}\n"));
            }
        }
        s
    }
}

/// Gait a policy adopts at command speed `v_cmd` (m/s).
pub fn classify_gait(v_cmd: f64, table: &GaitTable) -> Result<GaitRegime> {
    if !(v_cmd >= 0.0 && v_cmd.is_finite()) {
        return Err(Error::invalid("command velocity", format!("{v_cmd} must be >= 0")));
    }
    Ok(if v_cmd < table.v_trot_max {
        GaitRegime::Trot
    } else if v_cmd < table.v_int_max {
        GaitRegime::Intermediate
    } else {
        GaitRegime::Gallop
    })
}

/// Regime with the highest interpolated reward at `f_update_hz`.
pub fn select_gait(table: &GaitTable, f_update_hz: f64) -> (GaitRegime, f64) {
    let mut best = (GaitRegime::Trot, table.curve(GaitRegime::Trot).reward_at(f_update_hz));
    for g in [GaitRegime::Intermediate, GaitRegime::Gallop] {
        let r = table.curve(g).reward_at(f_update_hz);
        if r > best.1 {
            best = (g, r);
        }
    }
    best
}

/// Selection under a power cap, for a policy costing `cycles` per update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerSelection {
    pub gait: GaitRegime,
    pub f_update_max_hz: f64,
    pub reward: f64,
}

pub fn select_gait_for_power(table: &GaitTable, p: &PowerParams, cycles: f64) -> Result<PowerSelection> {
    if !(cycles.is_finite() && cycles > 0.0) {
        return Err(Error::invalid("cycles per update", format!("{cycles} must be > 0")));
    }
    let f_update_max_hz = feasible_update_rate(p, cycles);
    let (gait, reward) = select_gait(table, f_update_max_hz);
    Ok(PowerSelection {
        gait,
        f_update_max_hz,
        reward,
    })
}
