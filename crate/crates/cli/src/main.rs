use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kikuchi::bounds::{calc_bounds, TradeoffQuery};
use kikuchi::experiment::{
    check_walk_window, emit_report, records_to_csv, run_attack, run_experiment, Attack, ExperimentConfig, JsonReport,
    ReportFormat, SCHEMA,
};
use kikuchi::instance::generate;
use kikuchi::kikuchi::theta;
use kikuchi::oracle::{brute_force_edge_count, dense_spectral_norm};
use kikuchi::spectral::estimate_spectral_norm;
use kikuchi::{AttackParams, Error, LinInstance, Mode, NoiseSpec, Tunables};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "kikuchi", version, about = "Kikuchi-graph distinguishers for sparse LWE and LPN")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a planted or random instance and write it in the text format.
    Gen(GenArgs),
    /// Spectral distinguisher: one instance file, or paired trials.
    Spectral(AttackArgs),
    /// Cover attack with the LWE test (prime q only).
    CoverLwe(AttackArgs),
    /// Cover attack with the randomized LPN test (prime q only).
    CoverLpn(AttackArgs),
    /// Paired trials over a range of m or l values; one summary row per value.
    Sweep(SweepArgs),
    /// Closed-form sample and time bounds.
    Calc(CalcArgs),
    /// Cross-check power iteration and θ against brute force on a small instance.
    OracleCheck(OracleArgs),
}

#[derive(Args, Clone)]
struct ParamArgs {
    #[arg(long, default_value_t = 12)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    q: u32,
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Kikuchi level.
    #[arg(long, default_value_t = 2)]
    l: usize,
    /// `gaussian:<r>`, `lpn:<mu>`, `uniform` or `none`.
    #[arg(long, default_value = "none")]
    noise: NoiseSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    tunables: TunableArgs,
}

#[derive(Args, Clone, Default)]
struct TunableArgs {
    /// JSON file with tunables; the flags below override it.
    #[arg(long)]
    tunables: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    power_iters: Option<usize>,
    #[arg(long)]
    power_tol: Option<f64>,
    #[arg(long)]
    power_restarts: Option<usize>,
    #[arg(long)]
    vertex_cap: Option<u128>,
    #[arg(long)]
    dense_cap: Option<u128>,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    walk_cap: Option<usize>,
    #[arg(long)]
    cover_eps: Option<f64>,
    #[arg(long)]
    round_cap: Option<usize>,
    #[arg(long)]
    cover_target: Option<usize>,
    #[arg(long)]
    lwe_a: Option<f64>,
    /// Raw LPN floor and threshold instead of the calibrated ones.
    #[arg(long)]
    strict_paper_constants: bool,
    #[arg(long)]
    lpn_floor_fraction: Option<f64>,
    #[arg(long)]
    lpn_threshold_factor: Option<f64>,
    #[arg(long)]
    lpn_scale: Option<f64>,
    #[arg(long)]
    allow_duplicate_scopes: bool,
}

impl TunableArgs {
    fn build(&self) -> Result<Tunables, Error> {
        let mut t = match &self.tunables {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
                serde_json::from_str(&text)?
            }
            None => Tunables::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { t.$f = v; } )* };
        }
        set!(alpha, power_iters, power_tol, power_restarts, vertex_cap, dense_cap, c1, walk_cap, cover_eps, round_cap);
        set!(lwe_a, lpn_floor_fraction, lpn_threshold_factor, lpn_scale);
        if self.walk_length.is_some() {
            t.walk_length = self.walk_length;
        }
        if self.cover_target.is_some() {
            t.cover_target = self.cover_target;
        }
        t.strict_paper_constants |= self.strict_paper_constants;
        t.allow_duplicate_scopes |= self.allow_duplicate_scopes;
        t.validate()?;
        Ok(t)
    }
}

impl ParamArgs {
    fn build(&self) -> Result<AttackParams, Error> {
        let p = AttackParams::new(self.n, self.k, self.q, self.m, self.l, self.noise)
            .with_seed(self.seed)
            .with_tunables(self.tunables.build()?);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GenMode {
    Planted,
    Random,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum, default_value = "planted")]
    mode: GenMode,
    /// Leave the secret and noise lines out of the file.
    #[arg(long)]
    no_truth: bool,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Attack this instance file instead of running paired trials.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Run only the planted or only the random twin of each trial.
    #[arg(long, value_enum)]
    only: Option<GenMode>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the JSON summary here.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Record wall-clock time per run (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepOver {
    M,
    L,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum, default_value = "spectral")]
    attack: AttackKind,
    #[arg(long, value_enum, default_value = "m")]
    over: SweepOver,
    /// Comma-separated values for the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    Spectral,
    CoverLwe,
    CoverLpn,
}

impl From<AttackKind> for Attack {
    fn from(a: AttackKind) -> Self {
        match a {
            AttackKind::Spectral => Attack::Spectral,
            AttackKind::CoverLwe => Attack::CoverLwe,
            AttackKind::CoverLpn => Attack::CoverLpn,
        }
    }
}

#[derive(Args)]
struct CalcArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    q: u32,
    #[arg(long, default_value = "none")]
    noise: NoiseSpec,
    #[arg(long)]
    l: Option<usize>,
    /// Largest allowed log2(C(n,l) q^l); picks the largest fitting l.
    #[arg(long)]
    time_budget_log2: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// LPN exponent d in μ = (q-1)/q - n^{-d}.
    #[arg(long)]
    d: Option<f64>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io { path: path.into(), source }),
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(|source| Error::Io { path: "<stdout>".into(), source })
        }
    }
}

fn gen(a: &GenArgs) -> Result<(), Error> {
    let p = a.params.build()?;
    let mode = match a.mode {
        GenMode::Planted => Mode::Planted,
        GenMode::Random => Mode::Random,
    };
    let mut inst = generate(&p, mode, &mut ChaCha8Rng::seed_from_u64(p.seed))?;
    if a.no_truth {
        inst = inst.without_ground_truth();
    }
    write_out(a.out.as_deref(), &inst.to_text())
}

/// Params describing a loaded instance: dimensions from the file, the rest from flags.
fn params_for(inst: &LinInstance, a: &ParamArgs) -> Result<AttackParams, Error> {
    let p = AttackParams::new(inst.n(), inst.k(), inst.q(), inst.m(), a.l, a.noise)
        .with_seed(a.seed)
        .with_tunables(a.tunables.build()?);
    p.validate()?;
    Ok(p)
}

fn attack(a: &AttackArgs, kind: Attack) -> Result<(), Error> {
    if let Some(path) = &a.input {
        let inst = LinInstance::load(path)?.without_ground_truth();
        let p = params_for(&inst, &a.params)?;
        if kind != Attack::Spectral {
            check_walk_window(&p)?;
        }
        let out = run_attack(&inst, &p, kind, &mut ChaCha8Rng::seed_from_u64(p.seed))?;
        return write_out(a.out.as_deref(), &(serde_json::to_string_pretty(&out)? + "\n"));
    }
    let cfg = ExperimentConfig {
        params: a.params.build()?,
        attack: kind,
        trials: a.trials,
        record_timing: a.timing,
        only_mode: a.only.map(|m| match m {
            GenMode::Planted => Mode::Planted,
            GenMode::Random => Mode::Random,
        }),
    };
    let (records, summary) = run_experiment(&cfg)?;
    match &a.out {
        Some(path) => emit_report(&records, Some(&summary), a.format.into(), path)?,
        None => match a.format {
            Format::Csv => write_out(None, &records_to_csv(&records))?,
            Format::Json => {
                let report =
                    JsonReport { schema: SCHEMA.into(), records: records.clone(), summary: Some(summary.clone()) };
                write_out(None, &(serde_json::to_string_pretty(&report)? + "\n"))?
            }
        },
    }
    if let Some(path) = &a.summary {
        write_out(Some(path), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    }
    let acc = &summary.paired_accuracy;
    eprintln!(
        "paired accuracy {:.3} ({}/{}), 95% Wilson [{:.3}, {:.3}], {} errors",
        acc.value, acc.successes, acc.total, acc.wilson95.0, acc.wilson95.1, summary.errors
    );
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<(), Error> {
    let mut text = String::from("# schema: kikuchi-sweep/1\n");
    text.push_str("value,attack,trials,paired_accuracy,wilson_lo,wilson_hi,planted_accuracy,random_accuracy,mean_statistic_planted,mean_statistic_random,errors\n");
    let f = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for &v in &a.values {
        let mut params = a.params.build()?;
        match a.over {
            SweepOver::M => params.m = v,
            SweepOver::L => params.l = v,
        }
        let cfg = ExperimentConfig {
            params,
            attack: a.attack.into(),
            trials: a.trials,
            record_timing: false,
            only_mode: None,
        };
        let (_, s) = run_experiment(&cfg)?;
        text.push_str(&format!(
            "{v},{},{},{},{},{},{},{},{},{},{}\n",
            cfg.attack.as_str(),
            s.trials,
            f(Some(s.paired_accuracy.value)),
            f(Some(s.paired_accuracy.wilson95.0)),
            f(Some(s.paired_accuracy.wilson95.1)),
            f(Some(s.planted_accuracy.value)),
            f(Some(s.random_accuracy.value)),
            f(s.mean_statistic_planted),
            f(s.mean_statistic_random),
            s.errors
        ));
    }
    write_out(a.out.as_deref(), &text)
}

fn calc(a: &CalcArgs) -> Result<(), Error> {
    let mut qy = TradeoffQuery::new(a.n, a.k, a.q, a.noise);
    qy.l = a.l;
    qy.time_budget_log2 = a.time_budget_log2;
    qy.alpha = a.alpha;
    qy.eps = a.eps;
    qy.d = a.d;
    let table = calc_bounds(&qy)?;
    write_out(None, &(serde_json::to_string_pretty(&table)? + "\n"))
}

/// Returns whether every check agreed.
fn oracle_check(a: &OracleArgs) -> Result<bool, Error> {
    let (inst, p) = match &a.input {
        Some(path) => {
            let inst = LinInstance::load(path)?;
            let p = params_for(&inst, &a.params)?;
            (inst, p)
        }
        None => {
            let p = a.params.build()?;
            (generate(&p, Mode::Random, &mut ChaCha8Rng::seed_from_u64(p.seed))?, p)
        }
    };
    let dense = dense_spectral_norm(&inst, p.l, p.tunables.dense_cap)?;
    let est = estimate_spectral_norm(&inst, p.l, &p.tunables, &mut ChaCha8Rng::seed_from_u64(p.seed))?;
    let gap = if dense == 0.0 { est.estimate.abs() } else { (est.estimate - dense).abs() / dense };
    let th = theta(inst.n(), p.l, inst.k(), inst.q())?;
    let mut theta_ok = true;
    for c in inst.constraints().iter().take(5) {
        let count = brute_force_edge_count(&c.scope, inst.n(), p.l, inst.q(), p.tunables.dense_cap)?;
        theta_ok &= count == th;
    }
    let ok = gap <= a.tol && theta_ok;
    let report = serde_json::json!({
        "dense_norm": dense,
        "power_estimate": est.estimate,
        "power_iterations": est.iterations,
        "relative_gap": gap,
        "tolerance": a.tol,
        "theta": th.to_string(),
        "theta_matches_brute_force": theta_ok,
        "ok": ok,
    });
    write_out(None, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(ok)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Scale { .. } => 3,
        Error::Parameter(_) | Error::UnsupportedModulus(_) | Error::Parse { .. } | Error::Json(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Spectral(a) => attack(a, Attack::Spectral),
        Cmd::CoverLwe(a) => attack(a, Attack::CoverLwe),
        Cmd::CoverLpn(a) => attack(a, Attack::CoverLpn),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Calc(a) => calc(a),
        Cmd::OracleCheck(a) => match oracle_check(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
