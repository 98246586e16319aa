//! Monte-Carlo experiment runner for the starcr optimizer.
//!
//! An experiment sweeps one scenario variable (transmit power budget,
//! surface element count, interference threshold, or user count) over a
//! value list, solving `trials` seeded instances per (scheme, value) cell.
//! Trial i of every cell derives its channels from `seed + i`, so schemes
//! and sweep values are compared on matched channel draws. Results are
//! emitted as CSV with a fixed column set and summarized as mean and
//! standard error per cell; reruns of the same spec are byte-identical.

use std::fmt::Write as _;
use std::time::Duration;

use serde::Deserialize;

use starcr::bcd::{
    baseline_conventional_ris, baseline_equal_splitting, baseline_traditional_cr, run_bcd,
    BcdError, BcdOptions, BcdState, SolveReport, Termination,
};
use starcr::scene::{dbm_to_watts, generate_channels, Geometry, SystemConfig};
use starcr::star::{PhaseModel, StarCoefficients};

/// Salt mixed into the trial seed for the channel draw stream.
const CHANNEL_SALT: u64 = 0x517c_c1b7_2722_0a95;
/// Salt mixed into the trial seed for the initial surface phases.
const INIT_SALT: u64 = 0x2545_f491_4f6c_dd1d;

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("spec parse error: {0}")]
    Parse(String),
    #[error("invalid spec: {0}")]
    Invalid(String),
}

/// The scenario variable an experiment sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// SBS transmit power budget, watts.
    PS,
    /// Surface element count.
    N,
    /// Interference-temperature threshold (uniform over PUs), watts.
    Gamma,
    /// Secondary user count.
    L,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::PS => "p_s",
            SweepVariable::N => "n",
            SweepVariable::Gamma => "gamma",
            SweepVariable::L => "l",
        }
    }

    pub fn parse(s: &str) -> Result<Self, SpecError> {
        match s.to_ascii_lowercase().as_str() {
            "p_s" => Ok(SweepVariable::PS),
            "n" => Ok(SweepVariable::N),
            "gamma" => Ok(SweepVariable::Gamma),
            "l" => Ok(SweepVariable::L),
            other => Err(SpecError::Invalid(format!(
                "unknown sweep variable {other:?}; expected p_s, n, gamma, or l"
            ))),
        }
    }

    fn takes_power_values(self) -> bool {
        matches!(self, SweepVariable::PS | SweepVariable::Gamma)
    }
}

/// A solve strategy to benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SchemeId {
    StarIndependent,
    StarCoupled,
    EqualSplitting,
    ConventionalRis,
    TraditionalCr,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [
        SchemeId::StarIndependent,
        SchemeId::StarCoupled,
        SchemeId::EqualSplitting,
        SchemeId::ConventionalRis,
        SchemeId::TraditionalCr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::StarIndependent => "star-independent",
            SchemeId::StarCoupled => "star-coupled",
            SchemeId::EqualSplitting => "equal-splitting",
            SchemeId::ConventionalRis => "conventional-ris",
            SchemeId::TraditionalCr => "traditional-cr",
        }
    }

    pub fn parse(s: &str) -> Result<Self, SpecError> {
        Self::ALL
            .iter()
            .copied()
            .find(|scheme| scheme.as_str() == s)
            .ok_or_else(|| {
                SpecError::Invalid(format!(
                    "unknown scheme {s:?}; expected one of {}",
                    Self::ALL.map(|s| s.as_str()).join(", ")
                ))
            })
    }
}

/// A fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub sweep: SweepVariable,
    /// Sweep values in run order (watts for p_s/gamma, counts for n/l).
    pub values: Vec<f64>,
    /// Seeded instances per (scheme, value) cell.
    pub trials: usize,
    pub schemes: Vec<SchemeId>,
    /// Master seed; trial i uses seed + i.
    pub seed: u64,
    /// Scenario the sweep perturbs.
    pub base: SystemConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.values.is_empty() {
            return Err(SpecError::Invalid("value list must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(SpecError::Invalid("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(SpecError::Invalid("scheme list must be nonempty".into()));
        }
        let mut seen = Vec::new();
        for scheme in &self.schemes {
            if seen.contains(scheme) {
                return Err(SpecError::Invalid(format!(
                    "scheme {} listed twice",
                    scheme.as_str()
                )));
            }
            seen.push(*scheme);
        }
        for &value in &self.values {
            if !(value > 0.0) || !value.is_finite() {
                return Err(SpecError::Invalid(format!(
                    "sweep values must be positive and finite, got {value}"
                )));
            }
            if !self.sweep.takes_power_values() && value.fract() != 0.0 {
                return Err(SpecError::Invalid(format!(
                    "sweep {} takes integer values, got {value}",
                    self.sweep.as_str()
                )));
            }
        }
        for &value in &self.values {
            configure(&self.base, self.sweep, value)
                .validate()
                .map_err(|e| SpecError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    sweep: String,
    values: Vec<toml::Value>,
    trials: usize,
    schemes: Vec<String>,
    seed: u64,
    base: Option<RawBase>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBase {
    m_s: Option<usize>,
    m_p: Option<usize>,
    u_s: Option<usize>,
    u_p: Option<usize>,
    n: Option<usize>,
    l: Option<usize>,
    k: Option<usize>,
    p_s: Option<toml::Value>,
    p_p: Option<toml::Value>,
    sigma_s_sq: Option<toml::Value>,
    /// Uniform interference threshold applied to every PU.
    gamma: Option<toml::Value>,
    kappa_r: Option<f64>,
    kappa_d: Option<f64>,
    c_0: Option<f64>,
    alpha_sr: Option<f64>,
    alpha_pr: Option<f64>,
    alpha_ru: Option<f64>,
    alpha_su: Option<f64>,
    alpha_pu: Option<f64>,
    pbs_position: Option<[f64; 2]>,
    sbs_position: Option<[f64; 2]>,
    star_position: Option<[f64; 2]>,
    user_radius: Option<f64>,
    noise_uses_pbs_ris_loss: Option<bool>,
}

/// Parse "<x> dBm" (case-insensitive, space optional) or a plain number
/// in watts.
pub fn parse_power(value: &toml::Value) -> Result<f64, SpecError> {
    match value {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::String(s) => {
            let lower = s.trim().to_ascii_lowercase();
            let Some(number) = lower.strip_suffix("dbm") else {
                return Err(SpecError::Parse(format!(
                    "power string {s:?} must end in \"dBm\""
                )));
            };
            let dbm: f64 = number
                .trim()
                .parse()
                .map_err(|_| SpecError::Parse(format!("cannot parse power value {s:?}")))?;
            Ok(dbm_to_watts(dbm))
        }
        other => Err(SpecError::Parse(format!(
            "power values must be numbers or dBm strings, got {other:?}"
        ))),
    }
}

fn parse_count(value: &toml::Value, what: &str) -> Result<f64, SpecError> {
    match value {
        toml::Value::Integer(i) if *i > 0 => Ok(*i as f64),
        other => Err(SpecError::Parse(format!(
            "{what} values must be positive integers, got {other:?}"
        ))),
    }
}

/// Parse a TOML experiment spec. Power-valued fields (p_s, p_p,
/// sigma_s_sq, gamma, and sweep values for p_s/gamma sweeps) accept plain
/// watts or "<x> dBm" strings.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec, SpecError> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
    let sweep = SweepVariable::parse(&raw.sweep)?;
    let values = raw
        .values
        .iter()
        .map(|v| {
            if sweep.takes_power_values() {
                parse_power(v)
            } else {
                parse_count(v, sweep.as_str())
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let schemes = raw
        .schemes
        .iter()
        .map(|s| SchemeId::parse(s))
        .collect::<Result<Vec<_>, _>>()?;

    let mut base = SystemConfig::default();
    if let Some(rb) = raw.base {
        if let Some(v) = rb.m_s {
            base.m_s = v;
        }
        if let Some(v) = rb.m_p {
            base.m_p = v;
        }
        if let Some(v) = rb.u_s {
            base.u_s = v;
        }
        if let Some(v) = rb.u_p {
            base.u_p = v;
        }
        if let Some(v) = rb.n {
            base.n = v;
        }
        if let Some(v) = rb.l {
            base.l = v;
        }
        if let Some(v) = rb.k {
            base.k = v;
        }
        if let Some(v) = &rb.p_s {
            base.p_s = parse_power(v)?;
        }
        if let Some(v) = &rb.p_p {
            base.p_p = parse_power(v)?;
        }
        if let Some(v) = &rb.sigma_s_sq {
            base.sigma_s_sq = parse_power(v)?;
        }
        // Keep the threshold list consistent with K, then apply a uniform
        // override if one was given.
        let uniform = base.gamma.first().copied().unwrap_or(0.0);
        base.gamma.resize(base.k, uniform);
        if let Some(v) = &rb.gamma {
            base.set_uniform_gamma(parse_power(v)?);
        }
        if let Some(v) = rb.kappa_r {
            base.kappa_r = v;
        }
        if let Some(v) = rb.kappa_d {
            base.kappa_d = v;
        }
        if let Some(v) = rb.c_0 {
            base.c_0 = v;
        }
        if let Some(v) = rb.alpha_sr {
            base.alpha_sr = v;
        }
        if let Some(v) = rb.alpha_pr {
            base.alpha_pr = v;
        }
        if let Some(v) = rb.alpha_ru {
            base.alpha_ru = v;
        }
        if let Some(v) = rb.alpha_su {
            base.alpha_su = v;
        }
        if let Some(v) = rb.alpha_pu {
            base.alpha_pu = v;
        }
        if let Some(v) = rb.pbs_position {
            base.pbs_position = v;
        }
        if let Some(v) = rb.sbs_position {
            base.sbs_position = v;
        }
        if let Some(v) = rb.star_position {
            base.star_position = v;
        }
        if let Some(v) = rb.user_radius {
            base.user_radius = v;
        }
        if let Some(v) = rb.noise_uses_pbs_ris_loss {
            base.noise_uses_pbs_ris_loss = v;
        }
    }

    let spec = ExperimentSpec {
        sweep,
        values,
        trials: raw.trials,
        schemes,
        seed: raw.seed,
        base,
    };
    spec.validate()?;
    Ok(spec)
}

/// Apply a sweep value to the base scenario.
pub fn configure(base: &SystemConfig, sweep: SweepVariable, value: f64) -> SystemConfig {
    let mut config = base.clone();
    match sweep {
        SweepVariable::PS => config.p_s = value,
        SweepVariable::Gamma => config.set_uniform_gamma(value),
        SweepVariable::N => config.n = value as usize,
        SweepVariable::L => config.l = value as usize,
    }
    config
}

/// One solved (scheme, value, trial) cell.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub scheme: SchemeId,
    pub sweep: SweepVariable,
    pub value: f64,
    pub trial: usize,
    /// The trial seed (master + trial index).
    pub seed: u64,
    /// Termination word, with failure detail appended when present.
    pub status: String,
    /// True when the solve produced a usable optimum (converged or hit the
    /// sweep cap); false rows carry whatever partial data exists.
    pub ok: bool,
    pub sum_rate_bits: f64,
    pub iterations: usize,
    /// Tightest final interference slack min_k (Gamma_k - IT_k); +inf when
    /// there are no primary users.
    pub it_slack: f64,
    /// Not emitted to CSV (it would break byte-identical reruns).
    pub wall_time: Duration,
}

/// Seed for trial `trial` under master seed `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

/// Solve one scheme on the scenario drawn from `seed`.
pub fn solve_scheme(
    config: &SystemConfig,
    scheme: SchemeId,
    seed: u64,
) -> Result<(BcdState, SolveReport), BcdError> {
    let geometry = Geometry::generate(config, seed);
    let channels = generate_channels(config, &geometry, seed ^ CHANNEL_SALT)
        .map_err(|e| BcdError::BadInput(e.to_string()))?;
    let options = BcdOptions {
        init_seed: seed ^ INIT_SALT,
        ..BcdOptions::default()
    };
    match scheme {
        SchemeId::StarIndependent => {
            run_bcd(&channels, &geometry, config, PhaseModel::Independent, &options)
        }
        SchemeId::StarCoupled => {
            run_bcd(&channels, &geometry, config, PhaseModel::Coupled, &options)
        }
        SchemeId::EqualSplitting => {
            baseline_equal_splitting(&channels, &geometry, config, PhaseModel::Coupled, &options)
        }
        SchemeId::ConventionalRis => {
            baseline_conventional_ris(&channels, &geometry, config, &options)
        }
        SchemeId::TraditionalCr => baseline_traditional_cr(&channels, &geometry, config, &options),
    }
}

fn run_cell(spec: &ExperimentSpec, scheme: SchemeId, value: f64, trial: usize) -> ResultRow {
    let seed = trial_seed(spec.seed, trial);
    let config = configure(&spec.base, spec.sweep, value);
    match solve_scheme(&config, scheme, seed) {
        Ok((_, report)) => {
            let (word, ok) = match report.termination {
                Termination::Converged => ("converged", true),
                Termination::MaxIterations => ("max-iterations", true),
                Termination::Infeasible => ("infeasible", false),
                Termination::SolverFailure => ("solver-failure", false),
            };
            let status = match &report.failure {
                Some(detail) => format!("{word}: {detail}"),
                None => word.to_string(),
            };
            ResultRow {
                scheme,
                sweep: spec.sweep,
                value,
                trial,
                seed,
                status,
                ok,
                sum_rate_bits: report.sum_rate_bits,
                iterations: report.iterations,
                it_slack: report.it_slack_trace.last().copied().unwrap_or(f64::NAN),
                wall_time: report.wall_time,
            }
        }
        Err(error) => ResultRow {
            scheme,
            sweep: spec.sweep,
            value,
            trial,
            seed,
            status: format!("error: {error}"),
            ok: false,
            sum_rate_bits: f64::NAN,
            iterations: 0,
            it_slack: f64::NAN,
            wall_time: Duration::ZERO,
        },
    }
}

/// All rows of an experiment plus the partial-failure flag.
#[derive(Debug)]
pub struct RunOutput {
    /// Sorted by (scheme name, value, trial), independent of completion order.
    pub rows: Vec<ResultRow>,
    pub any_failed: bool,
}

/// Run every (scheme, value, trial) cell, optionally capping the rayon
/// worker count. Failures are recorded in their rows; the run continues.
pub fn run_experiment(spec: &ExperimentSpec, workers: Option<usize>) -> RunOutput {
    use rayon::prelude::*;

    let mut cells = Vec::new();
    for &scheme in &spec.schemes {
        for &value in &spec.values {
            for trial in 0..spec.trials {
                cells.push((scheme, value, trial));
            }
        }
    }
    let solve_all = || {
        cells
            .par_iter()
            .map(|&(scheme, value, trial)| run_cell(spec, scheme, value, trial))
            .collect::<Vec<_>>()
    };
    let mut rows = match workers {
        Some(limit) => rayon::ThreadPoolBuilder::new()
            .num_threads(limit)
            .build()
            .expect("thread pool")
            .install(solve_all),
        None => solve_all(),
    };
    rows.sort_by(|a, b| {
        a.scheme
            .as_str()
            .cmp(b.scheme.as_str())
            .then(a.value.total_cmp(&b.value))
            .then(a.trial.cmp(&b.trial))
    });
    let any_failed = rows.iter().any(|r| !r.ok);
    RunOutput { rows, any_failed }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Fixed-column CSV (wall time intentionally omitted so reruns are
/// byte-identical).
pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("scheme,sweep,value,trial,seed,status,sum_rate_bits,iterations,it_slack\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.scheme.as_str(),
            row.sweep.as_str(),
            row.value,
            row.trial,
            row.seed,
            csv_field(&row.status),
            row.sum_rate_bits,
            row.iterations,
            row.it_slack
        );
    }
    out
}

/// Mean and standard error of the successful rows per (scheme, value).
pub fn summarize(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:>14} {:>6} {:>12} {:>12}",
        "scheme", "value", "ok", "mean_bits", "stderr"
    );
    let mut index = 0;
    while index < rows.len() {
        let scheme = rows[index].scheme;
        let value = rows[index].value;
        let mut samples = Vec::new();
        while index < rows.len() && rows[index].scheme == scheme && rows[index].value == value {
            if rows[index].ok {
                samples.push(rows[index].sum_rate_bits);
            }
            index += 1;
        }
        let n = samples.len();
        let mean = if n > 0 {
            samples.iter().sum::<f64>() / n as f64
        } else {
            f64::NAN
        };
        let stderr = if n > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        let _ = writeln!(
            out,
            "{:<18} {:>14.6e} {:>6} {:>12.6} {:>12.3e}",
            scheme.as_str(),
            value,
            n,
            mean,
            stderr
        );
    }
    out
}

/// Mean final sum rate of the successful rows for one (scheme, value) cell.
pub fn mean_rate(rows: &[ResultRow], scheme: SchemeId, value: f64) -> f64 {
    let samples: Vec<f64> = rows
        .iter()
        .filter(|r| r.scheme == scheme && r.value == value && r.ok)
        .map(|r| r.sum_rate_bits)
        .collect();
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Per-iteration convergence CSV: one row per completed sweep (so the row
/// count equals the reported iteration count), with consensus-violation
/// and per-element phase-difference columns for coupled runs.
pub fn emit_convergence_trace(report: &SolveReport) -> String {
    let phase_width = report
        .phase_trace
        .as_ref()
        .and_then(|t| t.first())
        .map_or(0, Vec::len);
    let mut out = String::from("iteration,objective_nats,objective_bits,power,it_slack");
    if report.violation_trace.is_some() {
        out.push_str(",violation");
    }
    for i in 1..=phase_width {
        let _ = write!(out, ",phase_diff_{i}");
    }
    out.push('\n');
    for i in 1..=report.iterations {
        let objective = report.objective_trace[i];
        let _ = write!(
            out,
            "{},{},{},{},{}",
            i,
            objective,
            objective / std::f64::consts::LN_2,
            report.power_trace[i],
            report.it_slack_trace[i]
        );
        if let Some(trace) = &report.violation_trace {
            let _ = write!(out, ",{}", trace[i - 1]);
        }
        if let Some(trace) = &report.phase_trace {
            for diff in &trace[i - 1] {
                let _ = write!(out, ",{diff}");
            }
        }
        out.push('\n');
    }
    out
}

/// Final surface coefficients, one row per element.
pub fn emit_star_csv(star: &StarCoefficients) -> String {
    let mut out = String::from("element,rho_t,rho_r,theta_t,theta_r,phase_diff\n");
    let tau = std::f64::consts::TAU;
    for i in 0..star.len() {
        let diff = (star.theta_t[i] - star.theta_r[i]).rem_euclid(tau);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            i + 1,
            star.rho_t[i],
            star.rho_r[i],
            star.theta_t[i],
            star.theta_r[i],
            diff
        );
    }
    out
}

/// One traced solve (first sweep value, trial 0) per scheme.
pub struct TraceBundle {
    pub scheme: SchemeId,
    pub state: BcdState,
    pub report: SolveReport,
}

/// Solve trial 0 at the first sweep value for every scheme in the spec.
/// Solver errors abort the trace (there is nothing to plot).
pub fn run_trace(spec: &ExperimentSpec) -> Result<Vec<TraceBundle>, BcdError> {
    let value = spec.values[0];
    let config = configure(&spec.base, spec.sweep, value);
    let seed = trial_seed(spec.seed, 0);
    spec.schemes
        .iter()
        .map(|&scheme| {
            let (state, report) = solve_scheme(&config, scheme, seed)?;
            Ok(TraceBundle {
                scheme,
                state,
                report,
            })
        })
        .collect()
}
