//! Command-line front end.
//!
//! Replay options may come from a JSON config file (`--config`); flags given
//! on the command line take precedence over file values, which take
//! precedence over built-in defaults. The resolved command is recorded in
//! the run manifest written next to every output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc_space::{
    enumerate_all, filter_balanced, filter_reflections, sample_candidates, AllocationSet,
};
use crate::harness::{
    calibration_experiment, improvement, opportunity_report, read_series_csv,
    round_half_up_percent, summarize_series, train_test_experiment, write_series_csv,
    ExperimentConfig, ResultTable, SeriesRecord,
};
use crate::manifest::{sha256_file, RunManifest, Verification};
use crate::netsim::simulate_slot;
use crate::scenario::Scenario;
use crate::synth::{generate_synthetic, SyntheticParams};
use crate::trace::{
    aggregate_streams, drop_direction, load_csv, preprocess_dominant_with, scale_volume,
    select_top_by_volume, Direction,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "WLAN_ASSOC_OUT";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Parser)]
#[command(
    name = "wlan-assoc",
    version,
    about = "Workload-aware AP-STA association: simulate, learn, replay",
    args_conflicts_with_subcommands = true
)]
pub struct Cli {
    /// Re-run the command recorded in a manifest and compare output digests.
    #[arg(long, value_name = "MANIFEST")]
    pub verify_manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic per-minute workload trace.
    GenTrace(GenTraceArgs),
    /// Transform a trace: top-k selection, dominant direction, aggregation,
    /// scaling and direction dropping, applied in that order.
    PrepTrace(PrepTraceArgs),
    /// Throughput table for a built-in sample workload.
    Sample(SampleArgs),
    /// Replay a trace under an experiment protocol.
    Replay(ReplayArgs),
    /// Re-render per-policy means from a series CSV.
    Report(ReportArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenTraceArgs {
    #[arg(long)]
    pub stas: usize,
    #[arg(long)]
    pub slots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides `target_acf` from the parameter file.
    #[arg(long)]
    pub target_acf: Option<f64>,
    /// JSON file with generator parameters.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Output CSV; defaults to `trace.csv` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PrepTraceArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the k stations with the most traffic.
    #[arg(long)]
    pub top: Option<usize>,
    /// Keep only the dominant direction per station and slot.
    #[arg(long)]
    pub dominant: bool,
    /// Jitter the idle noise floor (implies --dominant).
    #[arg(long)]
    pub jitter_seed: Option<u64>,
    /// Merge stations into k streams.
    #[arg(long)]
    pub aggregate: Option<usize>,
    /// Multiply every rate by this factor.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Zero one direction (up or down).
    #[arg(long)]
    pub drop: Option<Direction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleScenario {
    Backhaul,
    Airtime,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    #[arg(value_enum)]
    pub scenario: SampleScenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    TrainTest,
    Calibration,
    Opportunity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateMode {
    /// The scenario's named allocations.
    Named,
    /// Every balanced allocation, one per reflection class.
    Balanced,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayArgs {
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Built-in scenario name (backhaul, airtime) or scenario JSON path.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub cycles: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Candidate set for train-test and calibration.
    #[arg(long, value_enum)]
    pub candidates: Option<CandidateMode>,
    /// Decide only through models observed under the SINR allocation.
    #[arg(long)]
    pub restrict_sinr: bool,
    /// JSON file with any of these options.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub series: PathBuf,
    /// Also write the summary as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.1, 0.3, 0.9];
pub const DEFAULT_CYCLES: [usize; 3] = [10, 100, 170];

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match (cli.verify_manifest, cli.command) {
        (Some(path), _) => {
            let v = verify_manifest(&path)?;
            for p in &v.changed_inputs {
                eprintln!("input changed: {}", p.display());
            }
            for p in &v.mismatched_outputs {
                eprintln!("output differs: {}", p.display());
            }
            if v.is_ok() {
                println!("manifest verified: {}", path.display());
                Ok(())
            } else {
                Err(anyhow!("manifest verification failed").into())
            }
        }
        (None, Some(cmd)) => {
            let out = execute(&cmd)?;
            print!("{}", out.text);
            std::io::stdout().flush().ok();
            Ok(())
        }
        (None, None) => usage("no command given (see --help)"),
    }
}

/// What a command produced: its manifest, if it writes files, and the text
/// meant for standard output.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: Option<RunManifest>,
    pub text: String,
}

pub fn execute(cmd: &Command) -> Result<RunOutput, CliError> {
    let (manifest, text) = match cmd {
        Command::GenTrace(a) => gen_trace(a).map(|(m, t)| (Some(m), t))?,
        Command::PrepTrace(a) => prep_trace(a).map(|(m, t)| (Some(m), t))?,
        Command::Sample(a) => (None, sample_table(a.scenario)?),
        Command::Replay(a) => replay(a).map(|(m, t)| (Some(m), t))?,
        Command::Report(a) => (None, report(a)?),
    };
    Ok(RunOutput { manifest, text })
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn sidecar_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn gen_trace(a: &GenTraceArgs) -> Result<(RunManifest, String), CliError> {
    if a.stas == 0 {
        return usage("--stas must be at least 1");
    }
    if a.slots < 2 {
        return usage("--slots must be at least 2");
    }
    let mut params = match &a.params {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SyntheticParams>(&text)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => SyntheticParams::default(),
    };
    if let Some(acf) = a.target_acf {
        params.target_acf = acf;
    }
    if let Err(e) = params.validate() {
        return usage(e.to_string());
    }
    let mut resolved = a.clone();
    resolved.out = Some(
        a.out
            .clone()
            .unwrap_or_else(|| default_out_dir().join("trace.csv")),
    );
    let out = resolved.out.clone().expect("set above");

    let trace = generate_synthetic(a.stas, a.slots, a.seed, &params)
        .context("synth::generate_synthetic")?;
    ensure_parent(&out)?;
    trace.save(&out).context("trace::save")?;

    let mut m = RunManifest::new(Command::GenTrace(resolved), Some(a.seed));
    if let Some(p) = &a.params {
        m.add_input(p).context("hashing inputs")?;
    }
    m.add_output(&out).context("hashing outputs")?;
    m.save(sidecar_manifest(&out)).context("writing manifest")?;
    Ok((
        m,
        format!("wrote {} ({} rates)\n", out.display(), trace.rate_count()),
    ))
}

fn prep_trace(a: &PrepTraceArgs) -> Result<(RunManifest, String), CliError> {
    if a.top == Some(0) || a.aggregate == Some(0) {
        return usage("--top and --aggregate need a positive count");
    }
    if let Some(f) = a.scale {
        if !(f.is_finite() && f >= 0.0) {
            return usage("--scale must be a finite non-negative factor");
        }
    }
    let mut t = load_csv(&a.input).context("trace::load_csv")?;
    if let Some(k) = a.top {
        t = select_top_by_volume(&t, k).context("trace::select_top_by_volume")?;
    }
    if a.dominant || a.jitter_seed.is_some() {
        t = preprocess_dominant_with(&t, a.jitter_seed);
    }
    if let Some(k) = a.aggregate {
        t = aggregate_streams(&t, k).context("trace::aggregate_streams")?;
    }
    if let Some(f) = a.scale {
        t = scale_volume(&t, f).context("trace::scale_volume")?;
    }
    if let Some(d) = a.drop {
        t = drop_direction(&t, d);
    }
    ensure_parent(&a.out)?;
    t.save(&a.out).context("trace::save")?;
    let mut m = RunManifest::new(Command::PrepTrace(a.clone()), a.jitter_seed);
    m.add_input(&a.input).context("hashing inputs")?;
    m.add_output(&a.out).context("hashing outputs")?;
    m.save(sidecar_manifest(&a.out))
        .context("writing manifest")?;
    Ok((
        m,
        format!(
            "wrote {} ({} stations, {} slots)\n",
            a.out.display(),
            t.n_stas(),
            t.len()
        ),
    ))
}

/// Throughput of each named allocation on the scenario's sample demand, with
/// the improvement over the SINR allocation.
pub fn sample_table(which: SampleScenario) -> Result<String, CliError> {
    let sc = match which {
        SampleScenario::Backhaul => Scenario::backhaul_sample(),
        SampleScenario::Airtime => Scenario::airtime_sample(),
    };
    let demand = sc
        .sample_demand
        .clone()
        .expect("built-in scenarios carry a sample");
    let mut rows = Vec::new();
    for named in &sc.allocations {
        let a = sc.allocation(&named.name).context("scenario::allocation")?;
        let r = simulate_slot(&a, &demand, &sc.aps).context("netsim::simulate_slot")?;
        rows.push((named.name.clone(), r.system_total));
    }
    let base = rows
        .iter()
        .find(|r| r.0 == sc.sinr)
        .map(|r| r.1)
        .expect("sinr allocation is named");
    let mut out = format!("Sample workload: {}\n", sc.name);
    out.push_str(&format!(
        "{:<12}{:>16}{:>14}\n",
        "allocation", "throughput_mbps", "improvement"
    ));
    for (name, total) in rows {
        let impr = if name == sc.sinr {
            "(SINR)".to_string()
        } else {
            let f = improvement(total, base).context("harness::improvement")?;
            format!("{}%", round_half_up_percent(f))
        };
        out.push_str(&format!("{name:<12}{total:>16.1}{impr:>14}\n"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
struct ResolvedReplay {
    experiment: Experiment,
    trace: PathBuf,
    scenario: String,
    fractions: Vec<f64>,
    cycles: Vec<usize>,
    seed: u64,
    candidates: CandidateMode,
    restrict_sinr: bool,
    out_dir: PathBuf,
}

impl ResolvedReplay {
    fn to_args(&self) -> ReplayArgs {
        ReplayArgs {
            experiment: Some(self.experiment),
            trace: Some(self.trace.clone()),
            scenario: Some(self.scenario.clone()),
            fractions: Some(self.fractions.clone()),
            cycles: Some(self.cycles.clone()),
            seed: Some(self.seed),
            candidates: Some(self.candidates),
            restrict_sinr: self.restrict_sinr,
            config: None,
            out_dir: Some(self.out_dir.clone()),
        }
    }
}

fn resolve_replay(a: &ReplayArgs) -> Result<(ResolvedReplay, Option<PathBuf>), CliError> {
    let file = match &a.config {
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            match serde_json::from_str::<ReplayArgs>(&text) {
                Ok(c) => c,
                Err(e) => return usage(format!("config {}: {e}", p.display())),
            }
        }
        None => ReplayArgs::default(),
    };
    let Some(experiment) = a.experiment.or(file.experiment) else {
        return usage("--experiment is required");
    };
    let Some(trace) = a.trace.clone().or(file.trace) else {
        return usage("--trace is required");
    };
    let r = ResolvedReplay {
        experiment,
        trace,
        scenario: a
            .scenario
            .clone()
            .or(file.scenario)
            .unwrap_or_else(|| "airtime".into()),
        fractions: a
            .fractions
            .clone()
            .or(file.fractions)
            .unwrap_or(DEFAULT_FRACTIONS.to_vec()),
        cycles: a
            .cycles
            .clone()
            .or(file.cycles)
            .unwrap_or(DEFAULT_CYCLES.to_vec()),
        seed: a.seed.or(file.seed).unwrap_or(0),
        candidates: a
            .candidates
            .or(file.candidates)
            .unwrap_or(CandidateMode::Named),
        restrict_sinr: a.restrict_sinr || file.restrict_sinr,
        out_dir: a
            .out_dir
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(default_out_dir),
    };
    if r.fractions.is_empty() || r.fractions.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return usage("--fractions must be non-empty and lie strictly between 0 and 1");
    }
    if r.cycles.is_empty() || r.cycles.contains(&0) {
        return usage("--cycles must be non-empty and positive");
    }
    Ok((r, a.config.clone()))
}

/// Every balanced allocation of the scenario's stations, one per reflection class.
pub fn balanced_candidates(scenario: &Scenario) -> anyhow::Result<AllocationSet> {
    let all = enumerate_all(scenario.aps.len(), scenario.stations.len())
        .context("alloc_space::enumerate_all")?;
    Ok(filter_reflections(&filter_balanced(&all)))
}

/// Config over `set`, using the scenario's SINR allocation (or its mirror
/// image) when present and the first member otherwise.
pub fn config_for_set(
    scenario: &Scenario,
    set: AllocationSet,
    seed: u64,
) -> anyhow::Result<ExperimentConfig> {
    let sinr = scenario.sinr_allocation()?;
    let idx = set
        .index_of(&sinr)
        .or_else(|| set.iter().position(|a| a.canonical() == sinr.canonical()))
        .unwrap_or(0);
    Ok(ExperimentConfig::new(scenario.clone(), set, idx, seed)?)
}

fn write_table(
    dir: &Path,
    stem: &str,
    table: &ResultTable,
    m: &mut RunManifest,
) -> anyhow::Result<()> {
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, table.to_csv())?;
    let txt = dir.join(format!("{stem}.txt"));
    fs::write(&txt, table.render_text())?;
    m.add_output(&csv)?;
    m.add_output(&txt)?;
    Ok(())
}

fn write_series(dir: &Path, series: &[SeriesRecord], m: &mut RunManifest) -> anyhow::Result<()> {
    let p = dir.join("series.csv");
    let f = std::io::BufWriter::new(fs::File::create(&p)?);
    write_series_csv(series, f)?;
    m.add_output(&p)?;
    Ok(())
}

fn replay(a: &ReplayArgs) -> Result<(RunManifest, String), CliError> {
    let (r, config_path) = resolve_replay(a)?;
    let trace = load_csv(&r.trace).context("trace::load_csv")?;
    let scenario = Scenario::resolve(&r.scenario).context("scenario::resolve")?;
    fs::create_dir_all(&r.out_dir).with_context(|| format!("creating {}", r.out_dir.display()))?;

    let mut m = RunManifest::new(Command::Replay(r.to_args()), Some(r.seed));
    m.add_input(&r.trace).context("hashing inputs")?;
    if Path::new(&r.scenario).exists() {
        m.add_input(&r.scenario).context("hashing inputs")?;
    }
    if let Some(p) = config_path {
        m.add_input(p).context("hashing inputs")?;
    }

    let named = || -> anyhow::Result<ExperimentConfig> {
        let set = match r.candidates {
            CandidateMode::Named => scenario.candidate_set()?,
            CandidateMode::Balanced => balanced_candidates(&scenario)?,
        };
        let mut cfg = config_for_set(&scenario, set, r.seed)?;
        cfg.restrict_observed_state = r.restrict_sinr;
        Ok(cfg)
    };

    let text = match r.experiment {
        Experiment::TrainTest => {
            let cfg = named().context("harness::ExperimentConfig")?;
            let out = train_test_experiment(&trace, &cfg, &r.fractions)
                .context("harness::train_test_experiment")?;
            let t = out.improvement_table();
            write_table(&r.out_dir, "improvement", &t, &mut m)?;
            write_table(&r.out_dir, "means", &out.means_table(), &mut m)?;
            write_series(&r.out_dir, &out.series, &mut m)?;
            t.render_text()
        }
        Experiment::Calibration => {
            let cfg = named().context("harness::ExperimentConfig")?;
            let out = calibration_experiment(&trace, &cfg, &r.cycles)
                .context("harness::calibration_experiment")?;
            let t = out.ratio_table();
            write_table(&r.out_dir, "calibration", &t, &mut m)?;
            write_series(&r.out_dir, &out.series, &mut m)?;
            t.render_text()
        }
        Experiment::Opportunity => {
            let large_set = balanced_candidates(&scenario)?;
            let small_set = sample_candidates(&large_set, 3.min(large_set.len()), r.seed)
                .context("alloc_space::sample_candidates")?;
            let large = config_for_set(&scenario, large_set, r.seed)
                .context("harness::ExperimentConfig")?;
            let small = config_for_set(&scenario, small_set, r.seed)
                .context("harness::ExperimentConfig")?;
            let out = opportunity_report(&trace, &small, &large)
                .context("harness::opportunity_report")?;
            let t = out.summary_table();
            write_table(&r.out_dir, "opportunity", &t, &mut m)?;
            write_series(&r.out_dir, &out.series, &mut m)?;
            t.render_text()
        }
    };
    m.save(r.out_dir.join(MANIFEST_FILE))
        .context("writing manifest")?;
    Ok((m, text))
}

fn report(a: &ReportArgs) -> Result<String, CliError> {
    let f = fs::File::open(&a.series).with_context(|| format!("opening {}", a.series.display()))?;
    let records = read_series_csv(f).context("harness::read_series_csv")?;
    if records.is_empty() {
        return Err(anyhow!("{} holds no series rows", a.series.display()).into());
    }
    let t = summarize_series(&records);
    if let Some(out) = &a.out {
        ensure_parent(out)?;
        fs::write(out, t.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(t.render_text())
}

/// The command with every output path moved under `root`.
fn redirect_outputs(cmd: &Command, root: &Path) -> Command {
    let rehome = |p: &Path| root.join(p.file_name().unwrap_or_default());
    let mut c = cmd.clone();
    match &mut c {
        Command::GenTrace(a) => a.out = a.out.as_deref().map(rehome),
        Command::PrepTrace(a) => a.out = rehome(&a.out),
        Command::Replay(a) => a.out_dir = Some(root.to_path_buf()),
        Command::Sample(_) | Command::Report(_) => {}
    }
    c
}

/// Re-runs the manifest's command into a scratch directory and compares
/// every output digest, matched by file name.
pub fn verify_manifest(path: &Path) -> Result<Verification, CliError> {
    let m =
        RunManifest::load(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let mut changed_inputs = Vec::new();
    for input in &m.inputs {
        match sha256_file(&input.path) {
            Ok(d) if d == input.sha256 => {}
            _ => changed_inputs.push(input.path.clone()),
        }
    }
    let scratch = tempfile::tempdir().context("creating scratch directory")?;
    let rerun = execute(&redirect_outputs(&m.command, scratch.path()))?
        .manifest
        .ok_or_else(|| anyhow!("manifest command writes no outputs"))?;
    let mut mismatched_outputs = Vec::new();
    for out in &m.outputs {
        let name = out.path.file_name();
        let same = rerun
            .outputs
            .iter()
            .find(|o| o.path.file_name() == name)
            .is_some_and(|o| o.sha256 == out.sha256);
        if !same {
            mismatched_outputs.push(out.path.clone());
        }
    }
    Ok(Verification {
        changed_inputs,
        mismatched_outputs,
    })
}
