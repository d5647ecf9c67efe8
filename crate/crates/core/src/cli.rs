//! `seqfuse` command line: load a scenario, simulate and/or analyse it, and
//! write one table.
//!
//! Columns per mode (CSV header order; JSON objects use the same keys):
//!
//! - `simulate`, `sweep`: scenario, algorithm, hypothesis, beta, trials, seed,
//!   edd, edd_se, p_error, p_error_se, n_correct, n_wrong, n_truncated,
//!   truncation_rate
//! - `analyze`: scenario, hypothesis, beta, quantity, tag, value
//! - `compare`: scenario, algorithm, hypothesis, beta, trials, seed,
//!   edd_theory, edd_sim, edd_se, edd_rel_err, pe_theory, pe_theory_upper,
//!   pe_sim, pe_se, pe_rel_err, truncation_rate
//!
//! Missing values are empty CSV cells and JSON `null`. Relative errors are
//! `(theory − sim)/sim`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::analysis::{
    asymptotic_constants, csprt_edd_approx, csprt_epochs, csprt_error_approx, dualsprt_edd_approx, dualsprt_epochs,
    dualsprt_error_bounds, exponent_condition_gaussian, EpochTable, SeriesForm,
};
use crate::config::{load_scenario_file, ScenarioFile};
use crate::distributions::Hypothesis;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fusion::FusionAlgorithm;
use crate::montecarlo::{default_max_steps, estimate_with, PerformanceEstimate};
use crate::scenario::{NodeTest, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Simulate,
    Analyze,
    Compare,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HypothesisArg {
    H0,
    H1,
    Both,
}

impl HypothesisArg {
    fn list(self) -> Vec<Hypothesis> {
        match self {
            HypothesisArg::H0 => vec![Hypothesis::H0],
            HypothesisArg::H1 => vec![Hypothesis::H1],
            HypothesisArg::Both => vec![Hypothesis::H0, Hypothesis::H1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "seqfuse", version, about = "Sequential detection over a Gaussian MAC: simulation and analysis")]
pub struct RunSpec {
    #[arg(value_enum)]
    pub mode: Mode,
    /// Scenario JSON file or preset name (example1, example2, csprt-fig3, glr-fading).
    #[arg(long)]
    pub scenario: String,
    #[arg(long, value_enum, default_value = "h1")]
    pub hypothesis: HypothesisArg,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// FC thresholds β1 = β0 = β to evaluate (required for sweep).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub beta_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Worker threads for simulation; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

impl RunSpec {
    fn execution(&self) -> Execution {
        match self.workers {
            0 => Execution::Auto,
            n => Execution::workers(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub scenario: String,
    pub algorithm: &'static str,
    pub hypothesis: &'static str,
    pub beta: f64,
    pub trials: u64,
    pub seed: u64,
    pub edd: f64,
    pub edd_se: f64,
    pub p_error: f64,
    pub p_error_se: f64,
    pub n_correct: u64,
    pub n_wrong: u64,
    pub n_truncated: u64,
    pub truncation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeRow {
    pub scenario: String,
    pub hypothesis: Option<&'static str>,
    pub beta: Option<f64>,
    pub quantity: String,
    pub tag: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub scenario: String,
    pub algorithm: &'static str,
    pub hypothesis: &'static str,
    pub beta: f64,
    pub trials: u64,
    pub seed: u64,
    pub edd_theory: Option<f64>,
    pub edd_sim: f64,
    pub edd_se: f64,
    pub edd_rel_err: Option<f64>,
    /// DualSPRT: lower bound of the error series; SPRT-CSPRT: series value.
    pub pe_theory: Option<f64>,
    pub pe_theory_upper: Option<f64>,
    pub pe_sim: f64,
    pub pe_se: f64,
    pub pe_rel_err: Option<f64>,
    pub truncation_rate: f64,
}

/// Machine-readable tags on analyze rows, one per approximation.
pub mod tags {
    pub const ORDER_STATISTICS: &str = "order_statistics";
    pub const EDD_DUAL: &str = "edd_mean_path_dual";
    pub const EDD_CSPRT: &str = "edd_mean_path_csprt";
    pub const PE_DUAL: &str = "pe_series_dual";
    pub const FALSE_CROSSING_RATE: &str = "false_crossing_rate";
    pub const PE_CSPRT: &str = "pe_series_csprt";
    pub const KL_TOTAL: &str = "kl_total";
    pub const FC_DRIFT_ALL_CORRECT: &str = "fc_drift_all_correct";
    pub const WRONG_REPORT_INCREMENT: &str = "wrong_report_increment";
    pub const ASYMPTOTIC_EDD: &str = "asymptotic_edd";
    pub const EXPONENT_CONDITION: &str = "error_exponent_condition";
}

fn algorithm_label(a: FusionAlgorithm, scenario: &Scenario) -> &'static str {
    let glr = scenario.nodes.iter().any(|n| matches!(n.test, NodeTest::Glr(_)));
    match (a, glr) {
        (FusionAlgorithm::DualSprt, false) => "dual_sprt",
        (FusionAlgorithm::Csprt, false) => "sprt_csprt",
        (FusionAlgorithm::DualSprt, true) => "glr_sprt",
        (FusionAlgorithm::Csprt, true) => "glr_csprt",
    }
}

fn default_beta(scenario: &Scenario, h: Hypothesis) -> f64 {
    match h {
        Hypothesis::H1 => scenario.fusion.beta1,
        Hypothesis::H0 => scenario.fusion.beta0,
    }
}

/// Scenario plus whether its horizon follows β (no explicit `max_steps`).
struct Loaded {
    scenario: Scenario,
    auto_horizon: bool,
}

impl Loaded {
    fn load(spec: &str) -> Result<Self> {
        let file: ScenarioFile = load_scenario_file(spec)?;
        Ok(Self { scenario: file.build()?, auto_horizon: file.max_steps.is_none() })
    }

    /// `(β, scenario)` pairs for `h`: the grid if given, else the configured β.
    fn at_betas(&self, h: Hypothesis, grid: Option<&[f64]>) -> Result<Vec<(f64, Scenario)>> {
        match grid {
            None => Ok(vec![(default_beta(&self.scenario, h), self.scenario.clone())]),
            Some(g) => g
                .iter()
                .map(|&b| {
                    if !(b > 0.0 && b.is_finite()) {
                        return Err(Error::Usage(format!("beta grid values must be positive, got {b}")));
                    }
                    let mut s = self.scenario.with_beta(b);
                    if self.auto_horizon {
                        s.max_steps = default_max_steps(&s);
                    }
                    Ok((b, s))
                })
                .collect(),
        }
    }
}

fn sim_row(s: &Scenario, h: Hypothesis, beta: f64, spec: &RunSpec, est: &PerformanceEstimate) -> SimRow {
    SimRow {
        scenario: s.name.clone(),
        algorithm: algorithm_label(s.algorithm(), s),
        hypothesis: h.label(),
        beta,
        trials: spec.trials,
        seed: spec.seed,
        edd: est.edd,
        edd_se: est.edd_se,
        p_error: est.p_error,
        p_error_se: est.p_error_se,
        n_correct: est.n_correct,
        n_wrong: est.n_wrong,
        n_truncated: est.n_truncated,
        truncation_rate: est.truncation_rate,
    }
}

fn simulate_rows(spec: &RunSpec, loaded: &Loaded, grid: Option<&[f64]>) -> Result<Vec<SimRow>> {
    let mut rows = Vec::new();
    for h in spec.hypothesis.list() {
        for (beta, s) in loaded.at_betas(h, grid)? {
            let est = estimate_with(&s, h, spec.trials, spec.seed, spec.execution())?;
            rows.push(sim_row(&s, h, beta, spec, &est));
        }
    }
    Ok(rows)
}

fn epochs_for(s: &Scenario, h: Hypothesis) -> Result<EpochTable> {
    match s.algorithm() {
        FusionAlgorithm::DualSprt => dualsprt_epochs(s, h),
        FusionAlgorithm::Csprt => csprt_epochs(s, h),
    }
}

/// Theory for one (hypothesis, β): E_DD approximation and error series.
struct Theory {
    edd: f64,
    pe: f64,
    pe_upper: Option<f64>,
    l0: Option<f64>,
    lambda: Option<f64>,
}

fn theory(s: &Scenario, h: Hypothesis, beta: f64, table: &EpochTable) -> Result<Theory> {
    match s.algorithm() {
        FusionAlgorithm::DualSprt => {
            let edd = dualsprt_edd_approx(table, beta)?;
            let b = dualsprt_error_bounds(s, h, beta, None)?;
            Ok(Theory { edd, pe: b.lower, pe_upper: Some(b.upper), l0: None, lambda: None })
        }
        FusionAlgorithm::Csprt => {
            let edd = csprt_edd_approx(table, beta)?;
            let (f, p) = csprt_error_approx(s, h, beta, SeriesForm::default())?;
            Ok(Theory { edd, pe: p.value, pe_upper: None, l0: Some(f.l0), lambda: Some(f.lambda) })
        }
    }
}

fn analyze_rows(spec: &RunSpec, loaded: &Loaded, grid: Option<&[f64]>) -> Result<Vec<AnalyzeRow>> {
    let s = &loaded.scenario;
    let row = |h: Option<Hypothesis>, beta: Option<f64>, quantity: String, tag: &'static str, value: f64| AnalyzeRow {
        scenario: s.name.clone(),
        hypothesis: h.map(Hypothesis::label),
        beta,
        quantity,
        tag,
        value,
    };
    let (edd_tag, pe_tag) = match s.algorithm() {
        FusionAlgorithm::DualSprt => (tags::EDD_DUAL, tags::PE_DUAL),
        FusionAlgorithm::Csprt => (tags::EDD_CSPRT, tags::PE_CSPRT),
    };
    let mut rows = Vec::new();
    for h in spec.hypothesis.list() {
        let table = epochs_for(s, h)?;
        for (j, e) in table.epochs.iter().enumerate() {
            rows.push(row(Some(h), None, format!("epoch_time_{}", j + 1), tags::ORDER_STATISTICS, e.time_mean));
        }
        for (beta, sb) in loaded.at_betas(h, grid)? {
            let t = theory(&sb, h, beta, &table)?;
            rows.push(row(Some(h), Some(beta), "edd_approx".into(), edd_tag, t.edd));
            match t.pe_upper {
                Some(up) => {
                    rows.push(row(Some(h), Some(beta), "pe_lower".into(), pe_tag, t.pe));
                    rows.push(row(Some(h), Some(beta), "pe_upper".into(), pe_tag, up));
                }
                None => rows.push(row(Some(h), Some(beta), "pe_approx".into(), pe_tag, t.pe)),
            }
            if let (Some(l0), Some(lambda)) = (t.l0, t.lambda) {
                rows.push(row(Some(h), Some(beta), "l0".into(), tags::FALSE_CROSSING_RATE, l0));
                rows.push(row(Some(h), Some(beta), "lambda_beta".into(), tags::FALSE_CROSSING_RATE, lambda));
            }
        }
    }
    // scenario-wide constants exist only for binary SPRT-node DualSPRT
    if s.algorithm() == FusionAlgorithm::DualSprt && s.all_binary() {
        let c = asymptotic_constants(s)?;
        rows.push(row(Some(Hypothesis::H0), None, "d_tot".into(), tags::KL_TOTAL, c.d_tot0));
        rows.push(row(Some(Hypothesis::H1), None, "d_tot".into(), tags::KL_TOTAL, c.d_tot1));
        rows.push(row(Some(Hypothesis::H0), None, "delta_a".into(), tags::FC_DRIFT_ALL_CORRECT, c.delta_a0));
        rows.push(row(Some(Hypothesis::H1), None, "delta_a".into(), tags::FC_DRIFT_ALL_CORRECT, c.delta_a1));
        rows.push(row(Some(Hypothesis::H0), None, "e_abs_xi_star".into(), tags::WRONG_REPORT_INCREMENT, c.exi_star0));
        rows.push(row(Some(Hypothesis::H1), None, "e_abs_xi_star".into(), tags::WRONG_REPORT_INCREMENT, c.exi_star1));
        rows.push(row(Some(Hypothesis::H0), None, "m".into(), tags::ASYMPTOTIC_EDD, c.m0));
        rows.push(row(Some(Hypothesis::H1), None, "m".into(), tags::ASYMPTOTIC_EDD, c.m1));
        for h in [Hypothesis::H0, Hypothesis::H1] {
            rows.push(row(Some(h), None, "edd_slope_bound".into(), tags::ASYMPTOTIC_EDD, c.edd_slope(h)));
        }
        match exponent_condition_gaussian(s, None) {
            Ok(v) => {
                rows.push(row(None, None, "holds".into(), tags::EXPONENT_CONDITION, f64::from(u8::from(v.holds))));
                rows.push(row(None, None, "best_value".into(), tags::EXPONENT_CONDITION, v.best_value));
                if let Some(eta) = v.witness_eta {
                    rows.push(row(None, None, "witness_eta".into(), tags::EXPONENT_CONDITION, eta));
                }
            }
            Err(Error::Unsupported(m)) => log::info!("exponent condition skipped: {m}"),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

fn rel_err(theory: f64, sim: f64) -> Option<f64> {
    (sim != 0.0 && sim.is_finite() && theory.is_finite()).then(|| (theory - sim) / sim)
}

fn compare_rows(spec: &RunSpec, loaded: &Loaded, grid: Option<&[f64]>) -> Result<Vec<CompareRow>> {
    let s = &loaded.scenario;
    let mut rows = Vec::new();
    for h in spec.hypothesis.list() {
        let table = match epochs_for(s, h) {
            Ok(t) => Some(t),
            Err(Error::Unsupported(m)) => {
                log::info!("{}: no theory ({m})", s.name);
                None
            }
            Err(e) => return Err(e),
        };
        for (beta, sb) in loaded.at_betas(h, grid)? {
            let t = table.as_ref().map(|t| theory(&sb, h, beta, t)).transpose()?;
            let est = estimate_with(&sb, h, spec.trials, spec.seed, spec.execution())?;
            rows.push(CompareRow {
                scenario: sb.name.clone(),
                algorithm: algorithm_label(sb.algorithm(), &sb),
                hypothesis: h.label(),
                beta,
                trials: spec.trials,
                seed: spec.seed,
                edd_theory: t.as_ref().map(|t| t.edd),
                edd_sim: est.edd,
                edd_se: est.edd_se,
                edd_rel_err: t.as_ref().and_then(|t| rel_err(t.edd, est.edd)),
                pe_theory: t.as_ref().map(|t| t.pe),
                pe_theory_upper: t.as_ref().and_then(|t| t.pe_upper),
                pe_sim: est.p_error,
                pe_se: est.p_error_se,
                pe_rel_err: t.as_ref().and_then(|t| rel_err(t.pe, est.p_error)),
                truncation_rate: est.truncation_rate,
            });
        }
    }
    Ok(rows)
}

fn render<T: Serialize>(rows: &[T], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| Error::Numeric(format!("csv encoding: {e}")))?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
        Format::Json => {
            let mut buf = serde_json::to_vec_pretty(rows).map_err(|e| Error::Numeric(format!("json encoding: {e}")))?;
            buf.push(b'\n');
            Ok(buf)
        }
    }
}

/// Writes `bytes` to a temp file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let usage = |e: std::io::Error| Error::Usage(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(usage)?;
    tmp.write_all(bytes).map_err(usage)?;
    tmp.as_file().sync_all().map_err(usage)?;
    tmp.persist(path).map_err(|e| usage(e.error))?;
    Ok(())
}

/// Runs a parsed spec to completion; nothing is written on error.
pub fn run(spec: &RunSpec) -> Result<()> {
    if spec.trials == 0 && spec.mode != Mode::Analyze {
        return Err(Error::Usage("--trials must be at least 1".into()));
    }
    let grid = spec.beta_grid.as_deref();
    match (spec.mode, grid) {
        (Mode::Sweep, None) | (Mode::Sweep, Some([])) => {
            return Err(Error::Usage("sweep needs a non-empty --beta-grid".into()))
        }
        (Mode::Simulate, Some(_)) => {
            return Err(Error::Usage("--beta-grid applies to sweep, compare and analyze".into()))
        }
        _ => {}
    }
    let loaded = Loaded::load(&spec.scenario)?;
    let bytes = match spec.mode {
        Mode::Simulate | Mode::Sweep => render(&simulate_rows(spec, &loaded, grid)?, spec.format)?,
        Mode::Analyze => render(&analyze_rows(spec, &loaded, grid)?, spec.format)?,
        Mode::Compare => render(&compare_rows(spec, &loaded, grid)?, spec.format)?,
    };
    write_atomic(&spec.out, &bytes)
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Io(_) => EXIT_USAGE,
        Error::Schema(_) | Error::Invariant(_) | Error::InvalidParameter(_) | Error::Unsupported(_) => EXIT_CONFIG,
        Error::Numeric(_) => EXIT_NUMERIC,
    }
}

/// Parses `args` (program name first), runs, reports errors on stderr and
/// returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let spec = match RunSpec::try_parse_from(args) {
        Ok(s) => s,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&spec) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("seqfuse: {e}");
            exit_code(&e)
        }
    }
}
