//! Experiment orchestration: configuration, seeded runs of every algorithm
//! on one scenario, metrics and their emission.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmarks::{
    dynamic_regret, max_sinr_policy, oracle_dp, random_policy, OracleBudget,
    OraclePath,
};
use crate::error::{Error, Result};
use crate::lda::{
    derive_params, regret_bound, Forecaster, Lda, RegretBound, Rounding, SequenceForecaster,
};
use crate::net_model::{
    g_value, slot_throughput, Association, DelayModel, ScenarioTrace,
};
use crate::scenarios::{build_scenario, IngestReport, Scenario, ScenarioConfig};

/// Version of the emitted CSV/JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Lda,
    /// LDA with the switching cost measured in the plain 2-norm.
    #[serde(alias = "lda_2norm", alias = "lda-2norm")]
    Lda2,
    #[serde(alias = "maxsinr")]
    MaxSinr,
    Random,
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Lda,
        Algorithm::Lda2,
        Algorithm::MaxSinr,
        Algorithm::Random,
        Algorithm::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Lda => "lda",
            Algorithm::Lda2 => "lda2",
            Algorithm::MaxSinr => "max_sinr",
            Algorithm::Random => "random",
            Algorithm::Oracle => "oracle",
        }
    }

    pub fn is_lda(self) -> bool {
        matches!(self, Algorithm::Lda | Algorithm::Lda2)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lda" => Ok(Algorithm::Lda),
            "lda2" | "lda_2norm" | "lda-2norm" => Ok(Algorithm::Lda2),
            "maxsinr" | "max_sinr" => Ok(Algorithm::MaxSinr),
            "random" => Ok(Algorithm::Random),
            "oracle" => Ok(Algorithm::Oracle),
            other => Err(Error::config("run.algorithms", format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Extra expert fed to the LDA variants.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ForecasterSpec {
    #[default]
    None,
    /// The exact offline optimum, as an upper reference.
    Oracle,
    /// A `slot,ue_id,bs_id` file of integral decisions.
    File(PathBuf),
}

impl FromStr for ForecasterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(ForecasterSpec::None),
            "oracle" => Ok(ForecasterSpec::Oracle),
            other => match other.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(ForecasterSpec::File(PathBuf::from(p))),
                _ => Err(Error::config(
                    "run.forecaster",
                    format!("expected none, oracle or file:<path>, got `{other}`"),
                )),
            },
        }
    }
}

impl TryFrom<String> for ForecasterSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ForecasterSpec> for String {
    fn from(f: ForecasterSpec) -> String {
        match f {
            ForecasterSpec::None => "none".into(),
            ForecasterSpec::Oracle => "oracle".into(),
            ForecasterSpec::File(p) => format!("file:{}", p.display()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config("run.format", format!("expected csv or json, got `{other}`"))),
        }
    }
}

/// Either a count (`seeds = 20` means `0..20`) or an explicit list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

impl FromStr for SeedSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |p: &str| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| Error::config("run.seeds", format!("not a seed: `{p}`")))
        };
        if s.contains(',') {
            s.split(',').map(parse).collect::<Result<_>>().map(SeedSpec::List)
        } else {
            parse(s).map(SeedSpec::Count)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub algorithms: Vec<Algorithm>,
    pub seeds: SeedSpec,
    pub out_dir: Option<PathBuf>,
    pub format: OutputFormat,
    pub forecaster: ForecasterSpec,
    /// Shift log-capacities so the smallest is zero before the learner sees
    /// them. Decisions are unaffected; gradient norms shrink.
    pub normalize_capacity: bool,
    /// How LDA turns its mixed decision into an integral one.
    pub rounding: Rounding,
    pub oracle_max_states: u64,
    pub oracle_max_state_slots: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let budget = OracleBudget::default();
        RunConfig {
            algorithms: vec![Algorithm::Lda, Algorithm::MaxSinr, Algorithm::Random],
            seeds: SeedSpec::Count(20),
            out_dir: None,
            format: OutputFormat::Csv,
            forecaster: ForecasterSpec::None,
            normalize_capacity: true,
            rounding: Rounding::default(),
            oracle_max_states: budget.max_states as u64,
            oracle_max_state_slots: budget.max_state_slots as u64,
        }
    }
}

impl RunConfig {
    pub fn budget(&self) -> OracleBudget {
        OracleBudget {
            max_states: self.oracle_max_states.into(),
            max_state_slots: self.oracle_max_state_slots.into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    /// Parse TOML text. Unknown or mistyped keys are reported with their
    /// dotted path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            Error::config(key, inner.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.run.algorithms.is_empty() {
            return Err(Error::config("run.algorithms", "need at least one algorithm"));
        }
        if self.run.seeds.seeds().is_empty() {
            return Err(Error::config("run.seeds", "need at least one seed"));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Per-slot and per-run results of one `(algorithm, seed)` run.
///
/// `g` uses raw capacities; `h` is the switching cost magnitude
/// `gamma ||x_t - x_{t-1}||_{A_t}` under the scenario's delays, whatever
/// norm the algorithm optimised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub gamma: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub f: Vec<f64>,
    pub cum_g: Vec<f64>,
    pub cum_h: Vec<f64>,
    pub cum_f: Vec<f64>,
    /// `||x_t - x_{t-1}||_{A_t}` without gamma.
    pub a_norm: Vec<f64>,
    /// UEs that changed station.
    pub switches: Vec<usize>,
    /// Equal-share rate sum in bit/s.
    pub throughput: Vec<f64>,
    /// `f_t` of the fractional mix, LDA variants only.
    pub f_mixed: Option<Vec<f64>>,
    /// Average dynamic regret up to each slot, when an oracle ran.
    pub regret: Option<Vec<f64>>,
    pub total_g: f64,
    pub total_ho_cost: f64,
    pub total_f: f64,
    pub total_throughput: f64,
    pub total_switches: usize,
    /// `(sum f(x_m) - sum f(x)) / |sum f(x_m)|`.
    pub discretization_error: Option<f64>,
    /// `max_t ||grad g_t||_2 + gamma sqrt(a_max)` as seen by the learner.
    pub measured_g_f: Option<f64>,
    pub capacity_log_scale: f64,
    pub expert_movement: Option<Vec<f64>>,
    /// `theta_k T G_A` per learning expert.
    pub expert_movement_bound: Option<Vec<f64>>,
    pub regret_bound: Option<RegretBound>,
}

impl RunMetrics {
    fn from_series(
        algorithm: Algorithm,
        seed: u64,
        gamma: f64,
        capacity_log_scale: f64,
        series: Series,
    ) -> Self {
        let prefix = |v: &[f64]| {
            let mut acc = 0.0;
            v.iter()
                .map(|x| {
                    acc += x;
                    acc
                })
                .collect::<Vec<_>>()
        };
        let cum_g = prefix(&series.g);
        let cum_h = prefix(&series.h);
        let cum_f = prefix(&series.f);
        let discretization_error = series.f_mixed.as_ref().map(|fm| {
            let mixed: f64 = fm.iter().sum();
            let implemented: f64 = series.f.iter().sum();
            (mixed - implemented) / mixed.abs()
        });
        RunMetrics {
            algorithm,
            seed,
            gamma,
            total_g: cum_g.last().copied().unwrap_or(0.0),
            total_ho_cost: cum_h.last().copied().unwrap_or(0.0),
            total_f: cum_f.last().copied().unwrap_or(0.0),
            total_throughput: series.throughput.iter().sum(),
            total_switches: series.switches.iter().sum(),
            g: series.g,
            h: series.h,
            f: series.f,
            cum_g,
            cum_h,
            cum_f,
            a_norm: series.a_norm,
            switches: series.switches,
            throughput: series.throughput,
            f_mixed: series.f_mixed,
            regret: None,
            discretization_error,
            measured_g_f: None,
            capacity_log_scale,
            expert_movement: None,
            expert_movement_bound: None,
            regret_bound: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.g.len()
    }
}

#[derive(Default)]
struct Series {
    g: Vec<f64>,
    h: Vec<f64>,
    f: Vec<f64>,
    a_norm: Vec<f64>,
    switches: Vec<usize>,
    throughput: Vec<f64>,
    f_mixed: Option<Vec<f64>>,
}

impl Series {
    fn push(
        &mut self,
        trace: &ScenarioTrace,
        delay: &DelayModel,
        t: usize,
        x: &Association,
        prev: &Association,
    ) {
        let g = g_value(&trace.slot_capacity(t), x);
        let norm = delay.a_norm(t, x, prev);
        let h = delay.gamma * norm;
        self.g.push(g);
        self.h.push(h);
        self.f.push(g - h);
        self.a_norm.push(norm);
        self.switches.push(x.changed_rows(prev));
        self.throughput.push(slot_throughput(trace, delay, t, x, prev));
    }
}

/// Score a fixed decision sequence.
fn score_decisions(trace: &ScenarioTrace, delay: &DelayModel, path: &[Association]) -> Series {
    let mut s = Series::default();
    for (t, x) in path.iter().enumerate() {
        let prev = if t == 0 { x } else { &path[t - 1] };
        s.push(trace, delay, t, x, prev);
    }
    s
}

/// Inputs shared by every run of one experiment.
pub struct RunContext<'a> {
    pub trace: &'a ScenarioTrace,
    pub delay: &'a DelayModel,
    pub normalize_capacity: bool,
    pub rounding: Rounding,
    pub oracle: Option<&'a OraclePath>,
    /// Fixed forecaster path for the LDA variants.
    pub forecast: Option<&'a [Association]>,
}

impl RunContext<'_> {
    fn log_scale(&self) -> f64 {
        if self.normalize_capacity {
            self.trace.capacity_log_scale()
        } else {
            0.0
        }
    }
}

/// One full horizon of `algorithm` under `seed`.
pub fn run_single(ctx: &RunContext<'_>, algorithm: Algorithm, seed: u64) -> Result<RunMetrics> {
    let trace = ctx.trace;
    let delay = ctx.delay;
    let (ues, bss, horizon) = (trace.ues, trace.bss, trace.horizon);
    let scale = ctx.log_scale();

    let mut metrics = match algorithm {
        Algorithm::MaxSinr => {
            let path: Vec<Association> = (0..horizon).map(|t| max_sinr_policy(trace, t)).collect();
            let s = score_decisions(trace, delay, &path);
            RunMetrics::from_series(algorithm, seed, delay.gamma, scale, s)
        }
        Algorithm::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let path: Vec<Association> =
                (0..horizon).map(|_| random_policy(ues, bss, &mut rng)).collect();
            let s = score_decisions(trace, delay, &path);
            RunMetrics::from_series(algorithm, seed, delay.gamma, scale, s)
        }
        Algorithm::Oracle => {
            let oracle = ctx.oracle.ok_or_else(|| {
                Error::InvalidParameter("oracle run requested without an oracle path".into())
            })?;
            let s = score_decisions(trace, delay, &oracle.associations());
            RunMetrics::from_series(algorithm, seed, delay.gamma, scale, s)
        }
        Algorithm::Lda | Algorithm::Lda2 => run_lda(ctx, algorithm, seed, scale)?,
    };
    if let Some(oracle) = ctx.oracle {
        metrics.regret = Some(dynamic_regret(&metrics.f, oracle));
    }
    Ok(metrics)
}

fn run_lda(ctx: &RunContext<'_>, algorithm: Algorithm, seed: u64, scale: f64) -> Result<RunMetrics> {
    let trace = ctx.trace;
    let delay = ctx.delay;
    let (ues, bss, horizon) = (trace.ues, trace.bss, trace.horizon);
    // The 2-norm variant learns against identity weights but is scored with
    // the true delays like everyone else.
    let learner_delay = match algorithm {
        Algorithm::Lda2 => DelayModel::unit(ues, bss, delay.gamma),
        _ => delay.clone(),
    };
    let params = derive_params(ues, bss, horizon, learner_delay.a_max, delay.gamma)?;
    let mut forecaster = ctx
        .forecast
        .map(|p| SequenceForecaster::new(p.to_vec()))
        .transpose()?;
    let mut lda = Lda::new(params.clone(), seed, forecaster.is_some())
        .with_rounding(ctx.rounding);

    let mut s = Series::default();
    let mut f_mixed = Vec::with_capacity(horizon);
    let mut prev: Option<Association> = None;
    let mut prev_mixed: Option<Association> = None;
    let mut max_grad = 0.0f64;
    for t in 0..horizon {
        let cap = trace.slot_capacity(t).rescaled(scale);
        let forecast = forecaster.as_mut().map(|f| f.forecast(t));
        let d = lda.step(&cap, &learner_delay, t, forecast)?;
        max_grad = max_grad.max(d.gradient_norm);

        let x_prev = prev.as_ref().unwrap_or(&d.implemented);
        s.push(trace, delay, t, &d.implemented, x_prev);
        let xm_prev = prev_mixed.as_ref().unwrap_or(&d.mixed);
        let raw = trace.slot_capacity(t);
        f_mixed.push(g_value(&raw, &d.mixed) - delay.switching_cost(t, &d.mixed, xm_prev));
        prev = Some(d.implemented);
        prev_mixed = Some(d.mixed);
    }
    s.f_mixed = Some(f_mixed);

    let mut m = RunMetrics::from_series(algorithm, seed, delay.gamma, scale, s);
    let g_f = max_grad + delay.gamma * learner_delay.a_max.sqrt();
    m.measured_g_f = Some(g_f);
    let k = params.experts;
    m.expert_movement = Some(lda.expert_movement()[..k].to_vec());
    m.expert_movement_bound = Some(
        params
            .thetas
            .iter()
            .map(|th| th * horizon as f64 * params.g_a)
            .collect(),
    );
    if let (Algorithm::Lda, Some(oracle)) = (algorithm, ctx.oracle) {
        m.regret_bound = Some(regret_bound(&params, g_f, oracle.path_length));
    }
    Ok(m)
}

/// Summary of the exact oracle, or why it did not run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OracleStatus {
    NotRequested,
    Solved { total_f: f64, path_length: f64 },
    Refused { message: String },
}

/// Mean over seeds of one algorithm's run totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub mean_total_g: f64,
    pub mean_total_ho_cost: f64,
    pub mean_total_f: f64,
    pub mean_total_throughput: f64,
    pub mean_switches_per_ue: f64,
    /// `(E sum f(x_m) - E sum f(x)) / |E sum f(x_m)|` over seeds.
    pub discretization_error: Option<f64>,
    pub mean_final_regret: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub ues: usize,
    pub bss: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub a_max: f64,
    pub capacity_log_scale: f64,
    pub ingest: Option<IngestReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub scenario: ScenarioSummary,
    pub oracle: OracleStatus,
    pub summaries: Vec<AlgorithmSummary>,
    pub runs: Vec<RunMetrics>,
}

impl ExperimentReport {
    pub fn runs_of(&self, algorithm: Algorithm) -> impl Iterator<Item = &RunMetrics> {
        self.runs.iter().filter(move |r| r.algorithm == algorithm)
    }

    pub fn summary(&self, algorithm: Algorithm) -> Option<&AlgorithmSummary> {
        self.summaries.iter().find(|s| s.algorithm == algorithm)
    }

    pub fn oracle_refused(&self) -> bool {
        matches!(self.oracle, OracleStatus::Refused { .. })
    }
}

fn summarize(algorithm: Algorithm, runs: &[&RunMetrics], ues: usize) -> AlgorithmSummary {
    let n = runs.len() as f64;
    let mean = |f: &dyn Fn(&RunMetrics) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
    let discretization_error = runs.iter().all(|r| r.f_mixed.is_some()).then(|| {
        let mixed = mean(&|r| r.f_mixed.as_ref().unwrap().iter().sum());
        let implemented = mean(&|r| r.total_f);
        (mixed - implemented) / mixed.abs()
    });
    let mean_final_regret = runs
        .iter()
        .all(|r| r.regret.is_some())
        .then(|| mean(&|r| *r.regret.as_ref().unwrap().last().unwrap_or(&0.0)));
    AlgorithmSummary {
        algorithm,
        runs: runs.len(),
        mean_total_g: mean(&|r| r.total_g),
        mean_total_ho_cost: mean(&|r| r.total_ho_cost),
        mean_total_f: mean(&|r| r.total_f),
        mean_total_throughput: mean(&|r| r.total_throughput),
        mean_switches_per_ue: mean(&|r| r.total_switches as f64) / ues as f64,
        discretization_error,
        mean_final_regret,
    }
}

/// Read a forecast file `slot,ue_id,bs_id`. A UE missing from a slot keeps
/// its previous station; every UE must appear in slot 0.
pub fn read_forecast(path: &Path, ues: usize, bss: usize) -> Result<Vec<Association>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(0, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != ["slot", "ue_id", "bs_id"] {
        return Err(Error::Schema(format!(
            "{}: expected header `slot,ue_id,bs_id`, found `{}`",
            path.display(),
            header.join(",")
        )));
    }
    let mut rows: Vec<Vec<Option<usize>>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize, name: &str| -> Result<usize> {
            let raw = record.get(k).unwrap_or("");
            raw.parse()
                .map_err(|_| parse_err(line, format!("invalid {name} `{raw}`")))
        };
        let (t, i, j) = (field(0, "slot")?, field(1, "ue_id")?, field(2, "bs_id")?);
        if i >= ues || j >= bss {
            return Err(parse_err(line, format!("(ue {i}, bs {j}) outside {ues}x{bss}")));
        }
        if rows.len() <= t {
            rows.resize(t + 1, vec![None; ues]);
        }
        rows[t][i] = Some(j);
    }
    let mut out = Vec::with_capacity(rows.len());
    let mut last: Option<Vec<usize>> = None;
    for (t, row) in rows.into_iter().enumerate() {
        let choices = row
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.or_else(|| last.as_ref().map(|l| l[i])).ok_or_else(|| {
                    Error::Schema(format!("{}: UE {i} has no forecast in slot {t}", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Association::from_choices(&choices, bss));
        last = Some(choices);
    }
    if out.is_empty() {
        return Err(Error::Schema(format!("{}: no forecast rows", path.display())));
    }
    Ok(out)
}

/// Run every configured `(algorithm, seed)` pair on a prepared scenario.
///
/// An oracle that exceeds the budget is recorded as refused and the other
/// algorithms still run, unless the oracle is also the forecaster, in which
/// case the budget error is returned.
pub fn run_on_scenario(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    base_dir: &Path,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let trace = &scenario.trace;
    let delay = &scenario.delay;
    let wants_oracle = cfg.run.algorithms.contains(&Algorithm::Oracle)
        || cfg.run.forecaster == ForecasterSpec::Oracle;

    let (oracle, status) = if wants_oracle {
        match oracle_dp(trace, delay, &cfg.run.budget()) {
            Ok(p) => {
                let status = OracleStatus::Solved {
                    total_f: p.total_f,
                    path_length: p.path_length,
                };
                (Some(p), status)
            }
            Err(e @ Error::BudgetExceeded { .. }) => {
                if cfg.run.forecaster == ForecasterSpec::Oracle {
                    return Err(e);
                }
                (None, OracleStatus::Refused { message: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    } else {
        (None, OracleStatus::NotRequested)
    };

    let forecast = match &cfg.run.forecaster {
        ForecasterSpec::None => None,
        ForecasterSpec::Oracle => oracle.as_ref().map(|o| o.associations()),
        ForecasterSpec::File(p) => {
            let p = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
            Some(read_forecast(&p, trace.ues, trace.bss)?)
        }
    };

    let ctx = RunContext {
        trace,
        delay,
        normalize_capacity: cfg.run.normalize_capacity,
        rounding: cfg.run.rounding,
        oracle: oracle.as_ref(),
        forecast: forecast.as_deref(),
    };
    let seeds = cfg.run.seeds.seeds();
    let mut algorithms: Vec<Algorithm> = cfg.run.algorithms.clone();
    algorithms.dedup();
    if oracle.is_none() {
        algorithms.retain(|a| *a != Algorithm::Oracle);
    }
    let jobs: Vec<(Algorithm, u64)> = algorithms
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(a, s)| run_single(&ctx, a, s))
        .collect::<Result<Vec<_>>>()?;

    let summaries = algorithms
        .iter()
        .map(|&a| {
            let mine: Vec<&RunMetrics> = runs.iter().filter(|r| r.algorithm == a).collect();
            summarize(a, &mine, trace.ues)
        })
        .collect();

    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        config_digest: cfg.digest(),
        config: cfg.clone(),
        scenario: ScenarioSummary {
            ues: trace.ues,
            bss: trace.bss,
            horizon: trace.horizon,
            gamma: delay.gamma,
            a_max: delay.a_max,
            capacity_log_scale: ctx.log_scale(),
            ingest: scenario.ingest.clone(),
        },
        oracle: status,
        summaries,
        runs,
    })
}

/// Build the scenario from `cfg` and run it.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let scenario = build_scenario(&cfg.scenario, base_dir)?;
    run_on_scenario(cfg, &scenario, base_dir)
}

/// One row of the gamma comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub algorithm: Algorithm,
    pub cum_g: f64,
    pub neg_cum_h: f64,
    pub cum_f: f64,
    pub switches_per_ue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub experiments: Vec<ExperimentReport>,
}

/// Rerun the same scenario (same trace and delays) for each gamma.
pub fn gamma_sweep(cfg: &ExperimentConfig, gammas: &[f64], base_dir: &Path) -> Result<SweepReport> {
    if gammas.is_empty() {
        return Err(Error::config("gamma", "need at least one gamma"));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
        return Err(Error::config("gamma", format!("must be finite and nonnegative, got {g}")));
    }
    cfg.validate()?;
    let base = build_scenario(&cfg.scenario, base_dir)?;
    let mut experiments = Vec::with_capacity(gammas.len());
    let mut rows = Vec::new();
    for &gamma in gammas {
        let mut c = cfg.clone();
        c.scenario.gamma = gamma;
        let scenario = Scenario {
            trace: base.trace.clone(),
            delay: base.delay.with_gamma(gamma),
            ingest: base.ingest.clone(),
        };
        let report = run_on_scenario(&c, &scenario, base_dir)?;
        rows.extend(report.summaries.iter().map(|s| SweepRow {
            gamma,
            algorithm: s.algorithm,
            cum_g: s.mean_total_g,
            neg_cum_h: -s.mean_total_ho_cost,
            cum_f: s.mean_total_f,
            switches_per_ue: s.mean_switches_per_ue,
        }));
        experiments.push(report);
    }
    Ok(SweepReport { rows, experiments })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Write `slots.csv` (or `slots.json`) and `summary.json` into `dir`.
/// Returns the paths written.
pub fn emit_metrics(report: &ExperimentReport, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let path = dir.join("slots.csv");
            let mut out = writer(&path)?;
            let io = |e| Error::io(&path, e);
            writeln!(
                out,
                "slot,algorithm,seed,g,h,f,cum_g,cum_h,cum_f,a_norm,switches,throughput,f_mixed,regret"
            )
            .map_err(io)?;
            for r in &report.runs {
                for t in 0..r.horizon() {
                    writeln!(
                        out,
                        "{t},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        r.algorithm,
                        r.seed,
                        r.g[t],
                        r.h[t],
                        r.f[t],
                        r.cum_g[t],
                        r.cum_h[t],
                        r.cum_f[t],
                        r.a_norm[t],
                        r.switches[t],
                        r.throughput[t],
                        fmt_opt(r.f_mixed.as_ref().map(|v| v[t])),
                        fmt_opt(r.regret.as_ref().map(|v| v[t])),
                    )
                    .map_err(io)?;
                }
            }
            out.flush().map_err(io)?;
            written.push(path);
        }
        OutputFormat::Json => {
            let path = dir.join("slots.json");
            let out = writer(&path)?;
            #[derive(Serialize)]
            struct Slots<'a> {
                schema_version: u32,
                runs: &'a [RunMetrics],
            }
            serde_json::to_writer(
                out,
                &Slots {
                    schema_version: report.schema_version,
                    runs: &report.runs,
                },
            )
            .map_err(|e| Error::io(&path, e.into()))?;
            written.push(path);
        }
    }
    let path = dir.join("summary.json");
    write_summary(report, &path)?;
    written.push(path);
    Ok(written)
}

/// The summary document: everything except the per-slot series.
#[derive(Serialize, Deserialize)]
pub struct SummaryDocument {
    pub schema_version: u32,
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub scenario: ScenarioSummary,
    pub oracle: OracleStatus,
    pub summaries: Vec<AlgorithmSummary>,
    pub runs: Vec<RunSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub total_g: f64,
    pub total_ho_cost: f64,
    pub total_f: f64,
    pub total_throughput: f64,
    pub total_switches: usize,
    pub discretization_error: Option<f64>,
    pub measured_g_f: Option<f64>,
    pub final_regret: Option<f64>,
    pub expert_movement: Option<Vec<f64>>,
    pub expert_movement_bound: Option<Vec<f64>>,
    pub regret_bound: Option<RegretBound>,
}

impl SummaryDocument {
    pub fn from_report(report: &ExperimentReport) -> Self {
        SummaryDocument {
            schema_version: report.schema_version,
            config_digest: report.config_digest.clone(),
            config: report.config.clone(),
            scenario: report.scenario.clone(),
            oracle: report.oracle.clone(),
            summaries: report.summaries.clone(),
            runs: report
                .runs
                .iter()
                .map(|r| RunSummary {
                    algorithm: r.algorithm,
                    seed: r.seed,
                    total_g: r.total_g,
                    total_ho_cost: r.total_ho_cost,
                    total_f: r.total_f,
                    total_throughput: r.total_throughput,
                    total_switches: r.total_switches,
                    discretization_error: r.discretization_error,
                    measured_g_f: r.measured_g_f,
                    final_regret: r.regret.as_ref().and_then(|v| v.last().copied()),
                    expert_movement: r.expert_movement.clone(),
                    expert_movement_bound: r.expert_movement_bound.clone(),
                    regret_bound: r.regret_bound.clone(),
                })
                .collect(),
        }
    }
}

fn write_summary(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut out = writer(path)?;
    serde_json::to_writer_pretty(&mut out, &SummaryDocument::from_report(report))
        .map_err(|e| Error::io(path, e.into()))?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Write `sweep.csv` plus one metrics directory per gamma.
pub fn emit_sweep(report: &SweepReport, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("sweep.csv");
    let mut out = writer(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(out, "gamma,algorithm,cum_g,neg_cum_h,cum_f,switches_per_ue").map_err(io)?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.gamma, r.algorithm, r.cum_g, r.neg_cum_h, r.cum_f, r.switches_per_ue
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)?;
    let mut written = vec![path];
    for exp in &report.experiments {
        let sub = dir.join(format!("gamma_{}", exp.scenario.gamma));
        written.extend(emit_metrics(exp, &sub, format)?);
    }
    Ok(written)
}
