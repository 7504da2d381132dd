//! Command-line front end. The binary is a thin wrapper around [`main`].
//!
//! Every subcommand prints `key=value` lines on success; `--pretty` switches
//! to an aligned table. Exit codes: 0 ok, 2 usage, 3 data error, 4 domain
//! error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{
    feasible_update_rate, max_clock, max_update_rate, measured_cycles, power_at_clock, required_clock, required_power,
    BudgetConfig, PowerParams, RateMeasurement,
};
use crate::error::Error;
use crate::gait::{select_gait, select_gait_for_power, GaitRegime, GaitTable};
use crate::harness::{
    run_episode, run_episodes, CodecRuntime, Command, DRConfig, Device, Episode, Fp32Runtime, GaitController,
    Int8Runtime, PlantParams, Runtime, SimConfig,
};
use crate::kernel::fused_infer_dequant;
use crate::kinematics::{ik, EndEffector, LegGeometry, NUM_LEGS};
use crate::policy::{Action, ActivationSpec, Fp32Policy, Observation, PolicySpec, POLICY_MAGIC};
use crate::quant::{quantize_policy, sqnr_db, QuantScheme, QuantizedPolicy, QUANT_MAGIC};
use crate::wire::{
    decode_action, decode_observation, encode_action, encode_observation, parse_hex, to_hex, Frame, FrameReader,
    WireVector,
};

/// Model sizes reported for the deployed policy (kB) and the reduction
/// quoted alongside them. The quoted ratio is rounded; 204.54 / 51.136 is
/// 3.99992.
const REFERENCE_FP32_KB: f64 = 204.54;
const REFERENCE_INT8_KB: f64 = 51.136;
const REFERENCE_RATIO: f64 = 4.0;

#[derive(Debug, Parser)]
#[command(
    name = "microgait",
    version,
    about = "Int8 policy deployment and gait budgeting toolkit"
)]
pub struct Cli {
    /// Aligned table instead of key=value lines.
    #[arg(long, global = true)]
    pub pretty: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Write a seeded random FP32 policy file.
    InitPolicy(InitPolicyArgs),
    /// Quantize an FP32 policy and report SQNR and model sizes.
    Quantize(QuantizeArgs),
    /// Cycle, clock and power budget arithmetic.
    Cost(CostArgs),
    /// Pick the gait with the highest reward at a feasible update rate.
    SelectGait(SelectGaitArgs),
    /// Run closed-loop episodes on the toy plant.
    RunLoop(RunLoopArgs),
    /// Solve leg inverse kinematics.
    Ik(IkArgs),
    /// Wire codec self test or frame decoding.
    Codec(CodecArgs),
}

#[derive(Debug, Args)]
pub struct InitPolicyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hidden activation: leaky-relu or elu.
    #[arg(long, default_value = "leaky-relu")]
    pub activation: String,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// FP32 policy file (TGP1).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "per-feature")]
    pub scheme: String,
    /// Calibration observations, one per line, comma or space separated.
    /// Defaults to observations recorded from scripted-controller rollouts.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Where to write the quantized policy (TGQ1).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for the default calibration rollouts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Cycles per update.
    #[arg(long, conflicts_with = "measured")]
    pub cycles: Option<f64>,
    /// Measured rate as `f_clk_hz,f_update_hz`; cycles are derived from it.
    #[arg(long)]
    pub measured: Option<String>,
    /// Operating clock in Hz.
    #[arg(long)]
    pub clock: Option<f64>,
    /// Power model as `volts,amps_per_mhz,p_max_watts`.
    #[arg(long)]
    pub power: Option<String>,
    /// Update rate to size the clock for, in Hz.
    #[arg(long)]
    pub target_hz: Option<f64>,
    /// Budget file with optional defaults.
    #[arg(long)]
    pub budget: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectGaitArgs {
    /// Gait curve CSV; the bundled dataset when omitted.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[arg(long, conflicts_with = "power")]
    pub f_update: Option<f64>,
    /// Power model as `volts,amps_per_mhz,p_max_watts`.
    #[arg(long)]
    pub power: Option<String>,
    #[arg(long)]
    pub cycles: Option<f64>,
    #[arg(long)]
    pub budget: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunLoopArgs {
    /// Policy file (TGP1 or TGQ1). The scripted gait controller runs when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Run the Int8 kernel; a TGP1 model is quantized per-feature first.
    #[arg(long)]
    pub quantized: bool,
    /// Route every update through the framed wire protocol.
    #[arg(long)]
    pub codec: bool,
    #[arg(long, default_value_t = 120.0)]
    pub f_update: f64,
    /// Forward velocity command in m/s.
    #[arg(long, default_value_t = 0.08)]
    pub command: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub episodes: u64,
    /// Trajectory CSV of the first episode.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
    /// Disable domain randomization and noise.
    #[arg(long)]
    pub no_dr: bool,
    #[arg(long, default_value_t = 10.0)]
    pub episode_s: f64,
}

#[derive(Debug, Args)]
pub struct IkArgs {
    /// Geometry file; illustrative geometry when omitted.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub x: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub y: f64,
    #[arg(long, default_value_t = 0)]
    pub leg: usize,
}

#[derive(Debug, Args)]
pub struct CodecArgs {
    #[arg(long, conflicts_with = "decode")]
    pub selftest: bool,
    /// Hex dump of a byte stream to decode.
    #[arg(long)]
    pub decode: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub cases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) if e.is_domain() => 4,
            CliError::Lib(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Ordered `key=value` output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report(pub Vec<(String, String)>);

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl std::fmt::Display) {
        self.0.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self, pretty: bool) -> String {
        if !pretty {
            return crate::kv::render(&self.0);
        }
        let w = self.0.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = String::new();
        for (k, v) in &self.0 {
            s.push_str(&format!("{k:<w$}  {v}\n"));
        }
        s
    }
}

/// Parse, run and print; returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(report) => {
            print!("{}", report.render(cli.pretty));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<Report> {
    match &cli.command {
        Cmd::InitPolicy(a) => cmd_init_policy(a),
        Cmd::Quantize(a) => cmd_quantize(a),
        Cmd::Cost(a) => cmd_cost(a),
        Cmd::SelectGait(a) => cmd_select_gait(a),
        Cmd::RunLoop(a) => cmd_run_loop(a),
        Cmd::Ik(a) => cmd_ik(a),
        Cmd::Codec(a) => cmd_codec(a),
    }
}

fn parse_list<const N: usize>(flag: &str, text: &str) -> CliResult<[f64; N]> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--{flag} expects {N} comma-separated numbers, got {text:?}")))?;
    vals.try_into()
        .map_err(|_| usage(format!("--{flag} expects {N} comma-separated numbers, got {text:?}")))
}

fn positive(flag: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(usage(format!("--{flag} must be a positive number, got {v}")))
    }
}

fn power_from(flag: Option<&str>, budget: &BudgetConfig) -> CliResult<Option<PowerParams>> {
    match flag {
        Some(text) => {
            let [v, i, p] = parse_list::<3>("power", text)?;
            Ok(Some(PowerParams::new(v, i, p)?))
        }
        None => Ok(budget.power()?),
    }
}

fn load_budget(path: Option<&Path>) -> CliResult<BudgetConfig> {
    Ok(path.map(BudgetConfig::load).transpose()?.unwrap_or_default())
}

pub fn cmd_init_policy(a: &InitPolicyArgs) -> CliResult<Report> {
    let act = match a.activation.as_str() {
        "elu" => ActivationSpec::elu(),
        "leaky-relu" | "leaky_relu" => ActivationSpec::leaky_relu(),
        other => return Err(usage(format!("unknown activation {other:?}"))),
    };
    let spec = PolicySpec::quadruped_with(act);
    let p = Fp32Policy::random(spec, a.seed);
    p.save(&a.out)?;
    let mut r = Report::default();
    r.push("out", a.out.display());
    r.push("layer_dims", dims(p.spec()));
    r.push("params", p.spec().param_count());
    r.push("macs", p.spec().mac_count());
    r.push("payload_bytes", p.payload_bytes());
    Ok(r)
}

fn dims(spec: &PolicySpec) -> String {
    spec.layer_dims()
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Observations, one per line; `#` starts a comment.
pub fn parse_observations(text: &str, width: usize) -> crate::Result<Vec<Observation>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f32>().map_err(|_| Error::Parse {
                    line: i + 1,
                    reason: format!("{s:?} is not a number"),
                })
            })
            .collect::<crate::Result<Vec<_>>>()?;
        if vals.len() != width {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("expected {width} values, got {}", vals.len()),
            });
        }
        out.push(Observation::new(vals)?);
    }
    Ok(out)
}

/// Wraps a runtime and keeps every observation it is shown.
struct Recorder<R> {
    inner: R,
    seen: Vec<Observation>,
}

impl<R: Runtime> Runtime for Recorder<R> {
    fn act(&mut self, t: f64, obs: &Observation) -> crate::Result<Action> {
        self.seen.push(obs.clone());
        self.inner.act(t, obs)
    }
}

/// Observations visited by the scripted controller across the three gait
/// regimes, under domain randomization.
pub fn rollout_calibration(seed: u64) -> crate::Result<Vec<Observation>> {
    let table = GaitTable::bundled();
    let pp = PlantParams::default();
    let dr = DRConfig::default();
    let mut out = Vec::new();
    for (i, v) in [0.02, 0.05, 0.08].into_iter().enumerate() {
        let cmd = Command::forward(v);
        let mut rec = Recorder {
            inner: GaitController::new(cmd, &table, &pp)?,
            seen: Vec::new(),
        };
        let mut sim = SimConfig::new(60.0, seed.wrapping_add(i as u64))?;
        sim.episode_s = 2.0;
        run_episode(&mut rec, &sim, &dr, &pp, cmd)?;
        out.extend(rec.seen);
    }
    Ok(out)
}

fn sqnr_on(p: &Fp32Policy, q: &QuantizedPolicy, calib: &[Observation]) -> crate::Result<f64> {
    let mut reference = Vec::with_capacity(calib.len());
    let mut test = Vec::with_capacity(calib.len());
    for obs in calib {
        reference.push(p.forward(obs.as_slice())?);
        test.push(fused_infer_dequant(q, obs)?.into_inner());
    }
    sqnr_db(&reference, &test)
}

pub fn cmd_quantize(a: &QuantizeArgs) -> CliResult<Report> {
    let scheme: QuantScheme = a
        .scheme
        .parse()
        .map_err(|_| usage(format!("unknown scheme {:?}", a.scheme)))?;
    let p = Fp32Policy::load(&a.model)?;
    let calib = match &a.calib {
        Some(path) => parse_observations(&std::fs::read_to_string(path)?, p.spec().input_dim())?,
        None => rollout_calibration(a.seed)?,
    };
    let q = quantize_policy(&p, scheme, &calib)?;
    let sqnr = sqnr_on(&p, &q, &calib)?;
    if let Some(out) = &a.out {
        q.save(out)?;
    }
    let fp32 = p.payload_bytes();
    let int8 = q.payload_bytes();
    let mut r = Report::default();
    r.push("scheme", scheme);
    r.push("calibration_samples", calib.len());
    r.push("sqnr_db", format!("{sqnr:.4}"));
    r.push("fp32_payload_bytes", fp32);
    r.push("int8_payload_bytes", int8);
    r.push("size_ratio", format!("{:.4}", fp32 as f64 / int8 as f64));
    r.push("reference_fp32_kb", REFERENCE_FP32_KB);
    r.push("reference_int8_kb", REFERENCE_INT8_KB);
    r.push("reference_ratio", format!("{REFERENCE_RATIO:.4}"));
    if let Some(out) = &a.out {
        r.push("out", out.display());
    }
    Ok(r)
}

pub fn cmd_cost(a: &CostArgs) -> CliResult<Report> {
    let budget = load_budget(a.budget.as_deref())?;
    let mut clock = a.clock.or(budget.f_clk_hz);
    let cycles = match (&a.measured, a.cycles.or(budget.cycles_per_update)) {
        (Some(text), _) => {
            let [f_clk, f_up] = parse_list::<2>("measured", text)?;
            let m = RateMeasurement::new(f_clk, f_up, QuantScheme::PerFeature, PolicySpec::quadruped())?;
            clock = clock.or(Some(f_clk));
            measured_cycles(&m)
        }
        (None, Some(c)) => positive("cycles", c)?,
        (None, None) => {
            return Err(usage(
                "one of --cycles, --measured or a budget cycles_per_update is required",
            ))
        }
    };
    let power = power_from(a.power.as_deref(), &budget)?;

    let mut r = Report::default();
    r.push("cycles_per_update", format!("{cycles:.3}"));
    if let Some(f) = clock {
        let f = positive("clock", f)?;
        r.push("f_clk_hz", f);
        r.push("f_update_max_hz", format!("{:.4}", max_update_rate(f, cycles)));
        if let Some(p) = &power {
            r.push("power_at_clock_w", format!("{:.6e}", power_at_clock(p, f)));
        }
    }
    if let Some(p) = &power {
        r.push("f_clk_max_hz", format!("{:.1}", max_clock(p)));
        r.push(
            "f_update_feasible_hz",
            format!("{:.4}", feasible_update_rate(p, cycles)),
        );
    }
    if let Some(t) = a.target_hz {
        let t = positive("target-hz", t)?;
        let req = required_clock(cycles, t);
        r.push("target_hz", t);
        r.push("f_clk_req_hz", format!("{req:.1}"));
        if let Some(p) = &power {
            let pw = required_power(p.volts, p.amps_per_mhz, req);
            r.push("p_req_w", format!("{pw:.6e}"));
            r.push("within_budget", pw <= p.p_max_watts);
        }
    }
    Ok(r)
}

pub fn cmd_select_gait(a: &SelectGaitArgs) -> CliResult<Report> {
    let table = match &a.curves {
        Some(p) => GaitTable::from_csv_path(p)?,
        None => GaitTable::bundled(),
    };
    let budget = load_budget(a.budget.as_deref())?;
    let f_update = match a.f_update {
        Some(f) => positive("f-update", f)?,
        None => {
            let p = power_from(a.power.as_deref(), &budget)?
                .ok_or_else(|| usage("one of --f-update or --power (or a budget file) is required"))?;
            let cycles = a
                .cycles
                .or(budget.cycles_per_update)
                .ok_or_else(|| usage("--power needs --cycles"))?;
            select_gait_for_power(&table, &p, positive("cycles", cycles)?)?.f_update_max_hz
        }
    };
    let (gait, reward) = select_gait(&table, f_update);
    let mut r = Report::default();
    r.push("f_update_hz", format!("{f_update:.4}"));
    r.push("gait", gait);
    r.push("reward", format!("{reward:.6}"));
    for g in GaitRegime::ALL {
        r.push(
            format!("reward_{}", g.name()),
            format!("{:.6}", table.curve(g).reward_at(f_update)),
        );
    }
    Ok(r)
}

enum Model {
    Fp32(Fp32Policy),
    Int8(QuantizedPolicy),
}

fn load_model(path: &Path) -> CliResult<Model> {
    let bytes = std::fs::read(path)?;
    match bytes.get(..4) {
        Some(m) if m == QUANT_MAGIC => Ok(Model::Int8(QuantizedPolicy::from_bytes(&bytes)?)),
        Some(m) if m == POLICY_MAGIC => Ok(Model::Fp32(Fp32Policy::from_bytes(&bytes)?)),
        _ => Err(Error::BadMagic {
            expected: POLICY_MAGIC,
            found: bytes.iter().take(4).copied().collect(),
        }
        .into()),
    }
}

type BoxedRuntime = Box<dyn Runtime + Send>;

pub fn cmd_run_loop(a: &RunLoopArgs) -> CliResult<Report> {
    if a.episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    let cmd = Command::forward(a.command);
    let pp = PlantParams::default();
    let dr = if a.no_dr {
        DRConfig::disabled()
    } else {
        DRConfig::default()
    };
    let mut sim = SimConfig::new(a.f_update, a.seed)?;
    sim.episode_s = positive("episode-s", a.episode_s)?;
    let table = GaitTable::bundled();

    let model = match &a.model {
        None if a.quantized => return Err(usage("--quantized needs --model")),
        None => None,
        Some(p) => Some(match load_model(p)? {
            Model::Fp32(fp) if a.quantized => Model::Int8(quantize_policy(
                &fp,
                QuantScheme::PerFeature,
                &rollout_calibration(a.seed)?,
            )?),
            m => m,
        }),
    };
    let runtime_name = match (&model, a.codec) {
        (None, _) => "scripted",
        (Some(Model::Fp32(_)), false) => "fp32",
        (Some(Model::Int8(_)), false) => "int8",
        (Some(Model::Fp32(_)), true) => "fp32+codec",
        (Some(Model::Int8(_)), true) => "int8+codec",
    };
    let make = |_seed: u64| -> crate::Result<BoxedRuntime> {
        let base: BoxedRuntime = match &model {
            None => Box::new(GaitController::new(cmd, &table, &pp)?),
            Some(Model::Fp32(p)) => Box::new(Fp32Runtime(p.clone())),
            Some(Model::Int8(q)) => Box::new(Int8Runtime(q.clone())),
        };
        Ok(match (&model, a.codec) {
            (_, false) => base,
            (Some(Model::Int8(q)), true) => Box::new(CodecRuntime::new(Device::Int8(q.clone()))),
            (_, true) => Box::new(CodecRuntime::new(Device::Fp32(base))),
        })
    };

    let seeds: Vec<u64> = (0..a.episodes).map(|i| a.seed.wrapping_add(i)).collect();
    let runs = run_episodes(make, &sim, &dr, &pp, cmd, &seeds)
        .into_iter()
        .collect::<crate::Result<Vec<Episode>>>()?;
    let baseline_sim = SimConfig {
        f_update_hz: sim.f_sim_hz,
        ..sim
    };
    let baseline = run_episodes(make, &baseline_sim, &dr, &pp, cmd, &seeds)
        .into_iter()
        .collect::<crate::Result<Vec<Episode>>>()?;

    if let Some(path) = &a.csv_out {
        std::fs::write(path, runs[0].to_csv())?;
    }

    let n = runs.len() as f64;
    let mean = runs.iter().map(Episode::total_reward).sum::<f64>() / n;
    let base_mean = baseline.iter().map(Episode::total_reward).sum::<f64>() / n;
    let mut r = Report::default();
    r.push("runtime", runtime_name);
    r.push("dr", !a.no_dr);
    r.push("episodes", runs.len());
    if runs.len() == 1 {
        for (k, v) in runs[0].summary() {
            r.push(k, v);
        }
    } else {
        r.push("f_update_hz", sim.f_update_hz);
        r.push("command_vx", a.command);
        for (i, e) in runs.iter().enumerate() {
            r.push(format!("episode_{}_seed", i), e.config.seed);
            r.push(
                format!("episode_{}_reward_total", i),
                format!("{:.6}", e.total_reward()),
            );
            r.push(format!("episode_{}_terminated", i), e.terminated);
        }
        r.push("terminated", runs.iter().filter(|e| e.terminated).count());
    }
    r.push("mean_reward_total", format!("{mean:.6}"));
    r.push("baseline_f_update_hz", baseline_sim.f_update_hz);
    r.push("baseline_mean_reward_total", format!("{base_mean:.6}"));
    let ratio = if base_mean != 0.0 { mean / base_mean } else { f64::NAN };
    r.push("reward_ratio", format!("{ratio:.6}"));
    if let Some(path) = &a.csv_out {
        r.push("csv_out", path.display());
    }
    Ok(r)
}

pub fn cmd_ik(a: &IkArgs) -> CliResult<Report> {
    if a.leg >= NUM_LEGS {
        return Err(usage(format!("--leg must be below {NUM_LEGS}")));
    }
    let geoms = match &a.geometry {
        Some(p) => LegGeometry::load_set(p)?,
        None => [LegGeometry::illustrative(); NUM_LEGS],
    };
    let s = ik(&geoms[a.leg], EndEffector { x_end: a.x, y_end: a.y })?;
    let mut r = Report::default();
    r.push("leg", a.leg);
    r.push("theta_x", s.theta_x);
    r.push("theta_y", s.theta_y);
    r.push("x_motor", s.x_motor);
    r.push("y_motor", s.y_motor);
    Ok(r)
}

pub fn cmd_codec(a: &CodecArgs) -> CliResult<Report> {
    match (&a.decode, a.selftest) {
        (Some(path), _) => decode_stream(&parse_hex(&std::fs::read_to_string(path)?)?),
        (None, true) => Ok(selftest(a.cases, a.seed)?),
        (None, false) => Err(usage("one of --selftest or --decode is required")),
    }
}

fn decode_stream(bytes: &[u8]) -> CliResult<Report> {
    let mut reader = FrameReader::new();
    reader.push(bytes);
    let mut r = Report::default();
    let mut n = 0;
    while let Some(frame) = reader.next_frame() {
        let f: Frame = frame?;
        let values = match f.vector() {
            WireVector::Fp32(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
            WireVector::Int8(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
        };
        r.push(format!("frame_{n}_type"), format!("{:?}", f.msg_type));
        r.push(format!("frame_{n}_seq"), f.seq);
        r.push(format!("frame_{n}_values"), values.join(","));
        n += 1;
    }
    if reader.buffered() > 0 {
        return Err(Error::Truncated("frame stream").into());
    }
    r.push("frames", n);
    Ok(r)
}

fn random_vector(rng: &mut ChaCha8Rng, int8: bool, width: usize) -> WireVector {
    if int8 {
        WireVector::Int8((0..width).map(|_| rng.gen()).collect())
    } else {
        // arbitrary bit patterns, NaNs included
        WireVector::Fp32((0..width).map(|_| f32::from_bits(rng.gen())).collect())
    }
}

/// Round trips, single-byte corruptions and the golden frame.
fn selftest(cases: usize, seed: u64) -> crate::Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut round_trip_ok = 0;
    let mut corruptions_detected = 0;
    for i in 0..cases {
        let int8 = rng.gen::<bool>();
        let obs = i % 2 == 0;
        let seq: u8 = rng.gen();
        let v = random_vector(&mut rng, int8, if obs { 24 } else { 8 });
        let bytes = if obs {
            encode_observation(&v, seq)?
        } else {
            encode_action(&v, seq)?
        };
        let back = if obs {
            decode_observation(&bytes)
        } else {
            decode_action(&bytes)
        };
        if matches!(&back, Ok((s, b)) if *s == seq && b.bit_eq(&v)) {
            round_trip_ok += 1;
        }
        let mut bad = bytes.clone();
        let at = rng.gen_range(0..bad.len());
        bad[at] ^= rng.gen_range(1..=255u8);
        if Frame::from_bytes(&bad).is_err() {
            corruptions_detected += 1;
        }
    }
    let golden = encode_observation(&WireVector::Int8(vec![0; 24]), 0)?;
    let mut r = Report::default();
    r.push("cases", cases);
    r.push("round_trip_ok", round_trip_ok);
    r.push("corruptions_detected", corruptions_detected);
    r.push("golden_frame", to_hex(&golden));
    if round_trip_ok != cases || corruptions_detected != cases {
        return Err(Error::Protocol(format!(
            "self test failed: {round_trip_ok}/{cases} round trips, {corruptions_detected}/{cases} corruptions detected"
        )));
    }
    Ok(r)
}
