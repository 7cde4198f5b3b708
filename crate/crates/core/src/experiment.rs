//! Paired planted/random experiments and their CSV/JSON reports.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::{
    find_distinct_nontrivial_covers, lpn_cover_distinguish, lwe_cover_distinguish, walk_length, CoverReport,
};
use crate::error::{param, Error, Result};
use crate::instance::{generate, LinInstance, Mode};
use crate::kikuchi::KikuchiGraph;
use crate::params::AttackParams;
use crate::ring::{is_prime, NoiseSpec};
use crate::spectral::{spectral_distinguish, SpectralReport};
use crate::{stream_rng, Verdict};

pub const SCHEMA: &str = "kikuchi-trials/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attack {
    Spectral,
    CoverLwe,
    CoverLpn,
}

impl Attack {
    pub fn as_str(self) -> &'static str {
        match self {
            Attack::Spectral => "spectral",
            Attack::CoverLwe => "cover-lwe",
            Attack::CoverLpn => "cover-lpn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: AttackParams,
    pub attack: Attack,
    pub trials: usize,
    /// Record wall-clock time per run; off by default so reports are reproducible.
    #[serde(default)]
    pub record_timing: bool,
    /// Run only the planted or only the random member of each pair.
    #[serde(default)]
    pub only_mode: Option<Mode>,
}

/// Noise width used by the LWE test: `r` for Gaussian noise, 0 when noiseless.
fn lwe_width(noise: &NoiseSpec) -> Result<f64> {
    match *noise {
        NoiseSpec::Gaussian { r } => Ok(r),
        NoiseSpec::Noiseless => Ok(0.0),
        _ => Err(param("the LWE cover test needs gaussian or no noise")),
    }
}

impl ExperimentConfig {
    /// Rejects configurations that would fail on every trial.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.trials == 0 {
            return Err(param("need at least one trial"));
        }
        if self.only_mode == Some(Mode::Unknown) {
            return Err(param("a mode override must be planted or random"));
        }
        match self.attack {
            Attack::Spectral => {
                if self.params.rho()? <= 0.0 {
                    return Err(param("noise bias is zero; the spectral test cannot separate"));
                }
                let size = crate::kikuchi::VertexSpace::new(self.params.n, self.params.l, self.params.q)?.size();
                if size > self.params.tunables.vertex_cap {
                    return Err(Error::Scale { what: "vertex space", size, cap: self.params.tunables.vertex_cap });
                }
            }
            Attack::CoverLwe | Attack::CoverLpn => {
                if !is_prime(self.params.q) {
                    return Err(Error::UnsupportedModulus(self.params.q));
                }
                if self.attack == Attack::CoverLwe {
                    lwe_width(&self.params.noise)?;
                }
                check_walk_window(&self.params)?;
            }
        }
        Ok(())
    }
}

/// Refuses cover runs whose average degree does not exceed the walk length.
pub fn check_walk_window(params: &AttackParams) -> Result<()> {
    let theta = crate::kikuchi::theta_f64(params.n, params.l, params.k, params.q)?;
    let n = crate::combin::binom_f64(params.n as u64, params.l as u64) * (params.q as f64).powi(params.l as i32);
    let delta = params.m as f64 * theta / n;
    let t = params.tunables.walk_length.unwrap_or_else(|| ((params.tunables.c_t * n.ln()).ceil() as usize).max(1));
    if delta <= t as f64 {
        return Err(param(format!(
            "average degree {delta:.3} does not exceed the walk length {t}; raise m or shorten the walk"
        )));
    }
    Ok(())
}

/// What a single attack run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "attack", rename_all = "kebab-case")]
pub enum AttackOutcome {
    Spectral(SpectralReport),
    Cover { walk_length: usize, rounds: usize, report: CoverReport },
}

impl AttackOutcome {
    pub fn verdict(&self) -> Verdict {
        match self {
            AttackOutcome::Spectral(r) => r.verdict,
            AttackOutcome::Cover { report, .. } => report.verdict,
        }
    }
}

/// Runs `attack` on `inst`, which must not carry ground truth the attack could read.
pub fn run_attack<R: Rng + ?Sized>(
    inst: &LinInstance,
    params: &AttackParams,
    attack: Attack,
    rng: &mut R,
) -> Result<AttackOutcome> {
    let rho = params.rho()?;
    match attack {
        Attack::Spectral => Ok(AttackOutcome::Spectral(spectral_distinguish(inst, params, rho, rng)?)),
        Attack::CoverLwe | Attack::CoverLpn => {
            let g = KikuchiGraph::new(inst, params.l)?;
            let search = find_distinct_nontrivial_covers(&g, &params.tunables, rng)?;
            let t = walk_length(&g, &params.tunables);
            let report = if search.covers.is_empty() {
                CoverReport {
                    covers_found: 0,
                    covers_used: 0,
                    statistic: f64::NAN,
                    threshold: f64::NAN,
                    verdict: Verdict::Fail,
                    psi: None,
                    partitions: None,
                }
            } else if attack == Attack::CoverLwe {
                lwe_cover_distinguish(inst, &search.covers, lwe_width(&params.noise)?, params.tunables.lwe_a)?
            } else {
                let n = g.space().size() as f64;
                lpn_cover_distinguish(inst, &search.covers, t, n, rho, &params.tunables, rng)?
            };
            Ok(AttackOutcome::Cover { walk_length: t, rounds: search.rounds, report })
        }
    }
}

/// One row of the trial table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub mode: Mode,
    pub attack: Attack,
    pub verdict: Option<Verdict>,
    pub correct: Option<bool>,
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    pub delta_avg: Option<f64>,
    pub rho: Option<f64>,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    pub covers_found: Option<usize>,
    pub covers_used: Option<usize>,
    pub walk_length: Option<usize>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

pub const CSV_COLUMNS: [&str; 17] = [
    "trial",
    "seed",
    "mode",
    "attack",
    "verdict",
    "correct",
    "statistic",
    "threshold",
    "delta_avg",
    "rho",
    "iterations",
    "residual",
    "covers_found",
    "covers_used",
    "walk_length",
    "wall_ms",
    "error",
];

impl TrialRecord {
    fn new(trial: usize, seed: u64, mode: Mode, attack: Attack) -> Self {
        TrialRecord {
            trial,
            seed,
            mode,
            attack,
            verdict: None,
            correct: None,
            statistic: None,
            threshold: None,
            delta_avg: None,
            rho: None,
            iterations: None,
            residual: None,
            covers_found: None,
            covers_used: None,
            walk_length: None,
            wall_ms: None,
            error: None,
        }
    }

    fn fill(&mut self, out: &AttackOutcome) {
        let v = out.verdict();
        self.verdict = Some(v);
        self.correct =
            Some(matches!((self.mode, v), (Mode::Planted, Verdict::Planted) | (Mode::Random, Verdict::Random)));
        match out {
            AttackOutcome::Spectral(r) => {
                self.statistic = Some(r.estimate);
                self.threshold = Some(r.threshold);
                self.delta_avg = Some(r.delta_avg);
                self.rho = Some(r.rho);
                self.iterations = Some(r.iterations);
                self.residual = Some(r.residual);
            }
            AttackOutcome::Cover { walk_length, report, .. } => {
                self.statistic = Some(report.statistic).filter(|s| s.is_finite());
                self.threshold = Some(report.threshold).filter(|s| s.is_finite());
                self.covers_found = Some(report.covers_found);
                self.covers_used = Some(report.covers_used);
                self.walk_length = Some(*walk_length);
            }
        }
    }

    fn csv_row(&self) -> String {
        fn f(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.16e}")).unwrap_or_default()
        }
        fn u<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let err = self.error.as_deref().map(|e| format!("\"{}\"", e.replace('"', "\"\""))).unwrap_or_default();
        [
            self.trial.to_string(),
            self.seed.to_string(),
            self.mode.as_str().to_string(),
            self.attack.as_str().to_string(),
            u(self.verdict.map(Verdict::as_str)),
            u(self.correct),
            f(self.statistic),
            f(self.threshold),
            f(self.delta_avg),
            f(self.rho),
            u(self.iterations),
            f(self.residual),
            u(self.covers_found),
            u(self.covers_used),
            u(self.walk_length),
            f(self.wall_ms),
            err,
        ]
        .join(",")
    }
}

/// 95% Wilson score interval for `successes / n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054f64;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: usize,
    pub total: usize,
    pub value: f64,
    pub wilson95: (f64, f64),
}

impl Rate {
    fn new(successes: usize, total: usize) -> Rate {
        let value = if total == 0 { f64::NAN } else { successes as f64 / total as f64 };
        Rate { successes, total, value, wilson95: wilson_interval(successes, total) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub attack: Attack,
    pub params: AttackParams,
    pub trials: usize,
    /// Trials where every run (both twins, unless one mode is skipped) was classified correctly.
    pub paired_accuracy: Rate,
    pub planted_accuracy: Rate,
    pub random_accuracy: Rate,
    pub mean_statistic_planted: Option<f64>,
    pub mean_statistic_random: Option<f64>,
    pub errors: usize,
}

/// Summarizes the rows of a finished experiment.
pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Summary {
    let by_mode = |mode: Mode| records.iter().filter(move |r| r.mode == mode);
    let rate = |mode: Mode| {
        let ok = by_mode(mode).filter(|r| r.correct == Some(true)).count();
        Rate::new(ok, by_mode(mode).count())
    };
    let mean = |mode: Mode| {
        let v: Vec<f64> = by_mode(mode).filter_map(|r| r.statistic).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let paired = (0..cfg.trials)
        .filter(|&t| {
            let rows: Vec<_> = records.iter().filter(|r| r.trial == t).collect();
            !rows.is_empty() && rows.iter().all(|r| r.correct == Some(true))
        })
        .count();
    Summary {
        schema: SCHEMA.to_string(),
        attack: cfg.attack,
        params: cfg.params.clone(),
        trials: cfg.trials,
        paired_accuracy: Rate::new(paired, cfg.trials),
        planted_accuracy: rate(Mode::Planted),
        random_accuracy: rate(Mode::Random),
        mean_statistic_planted: mean(Mode::Planted),
        mean_statistic_random: mean(Mode::Random),
        errors: records.iter().filter(|r| r.error.is_some()).count(),
    }
}

/// Seed of trial `t`, derived from the master seed.
pub fn trial_seed(master: u64, t: usize) -> u64 {
    stream_rng(master, t as u64).gen()
}

fn run_trial(cfg: &ExperimentConfig, t: usize) -> Vec<TrialRecord> {
    let seed = trial_seed(cfg.params.seed, t);
    let mut planted_row = TrialRecord::new(t, seed, Mode::Planted, cfg.attack);
    let mut random_row = TrialRecord::new(t, seed, Mode::Random, cfg.attack);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted = match generate(&cfg.params, Mode::Planted, &mut rng) {
        Ok(inst) => inst,
        Err(e) => {
            planted_row.error = Some(e.to_string());
            random_row.error = Some(e.to_string());
            return keep(cfg, vec![planted_row, random_row]);
        }
    };
    let random = planted.random_twin(&mut rng);
    let planted = planted.without_ground_truth();
    for (stream, inst, row) in [(1u64, &planted, &mut planted_row), (2, &random, &mut random_row)] {
        if cfg.only_mode.is_some_and(|m| m != row.mode) {
            continue;
        }
        let mut r = stream_rng(seed, stream);
        let start = Instant::now();
        match run_attack(inst, &cfg.params, cfg.attack, &mut r) {
            Ok(out) => row.fill(&out),
            Err(e) => row.error = Some(e.to_string()),
        }
        if cfg.record_timing {
            row.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    keep(cfg, vec![planted_row, random_row])
}

fn keep(cfg: &ExperimentConfig, rows: Vec<TrialRecord>) -> Vec<TrialRecord> {
    rows.into_iter().filter(|r| cfg.only_mode.is_none_or(|m| m == r.mode)).collect()
}

/// Runs every trial (in parallel, reported in trial order) and summarizes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Summary)> {
    cfg.validate()?;
    let records: Vec<TrialRecord> = (0..cfg.trials).into_par_iter().flat_map_iter(|t| run_trial(cfg, t)).collect();
    let summary = summarize(cfg, &records);
    Ok((records, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// CSV with a schema comment line and fixed columns; floats at 17 significant digits.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    writeln!(out, "# schema: {SCHEMA}").unwrap();
    writeln!(out, "{}", CSV_COLUMNS.join(",")).unwrap();
    for r in records {
        writeln!(out, "{}", r.csv_row()).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub schema: String,
    pub records: Vec<TrialRecord>,
    pub summary: Option<Summary>,
}

pub fn emit_report(
    records: &[TrialRecord],
    summary: Option<&Summary>,
    format: ReportFormat,
    path: &Path,
) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => records_to_csv(records),
        ReportFormat::Json => {
            let report =
                JsonReport { schema: SCHEMA.to_string(), records: records.to_vec(), summary: summary.cloned() };
            serde_json::to_string_pretty(&report)? + "\n"
        }
    };
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.into(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectral_cfg(trials: usize) -> ExperimentConfig {
        let params = AttackParams::new(8, 2, 3, 60, 2, NoiseSpec::Noiseless).with_seed(5);
        ExperimentConfig { params, attack: Attack::Spectral, trials, record_timing: false, only_mode: None }
    }

    #[test]
    fn single_noiseless_trial_is_correct() {
        let (records, summary) = run_experiment(&spectral_cfg(1)).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(summary.planted_accuracy.value, 1.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = spectral_cfg(3);
        let a = records_to_csv(&run_experiment(&cfg).unwrap().0);
        let b = records_to_csv(&run_experiment(&cfg).unwrap().0);
        assert_eq!(a, b);
    }

    #[test]
    fn mode_override_keeps_one_twin() {
        let mut cfg = spectral_cfg(2);
        cfg.only_mode = Some(Mode::Random);
        let (records, summary) = run_experiment(&cfg).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.mode == Mode::Random));
        assert_eq!(summary.planted_accuracy.total, 0);
    }

    #[test]
    fn composite_modulus_rejected_up_front() {
        let mut cfg = spectral_cfg(1);
        cfg.attack = Attack::CoverLwe;
        cfg.params.q = 4;
        assert!(matches!(run_experiment(&cfg), Err(Error::UnsupportedModulus(4))));
    }

    #[test]
    fn oversized_spectral_run_refused_up_front() {
        let mut cfg = spectral_cfg(1);
        cfg.params.tunables.vertex_cap = 10;
        assert!(matches!(run_experiment(&cfg), Err(Error::Scale { .. })));
    }

    #[test]
    fn csv_shape() {
        assert_eq!(records_to_csv(&[]).lines().count(), 2);
        let (records, _) = run_experiment(&spectral_cfg(2)).unwrap();
        let mut err = TrialRecord::new(9, 1, Mode::Random, Attack::CoverLpn);
        err.error = Some("boom, \"quoted\"".into());
        let mut all = records.clone();
        all.push(err);
        let csv = records_to_csv(&all);
        for line in csv.lines().skip(1).take(3) {
            assert_eq!(line.split(',').count(), CSV_COLUMNS.len());
        }
        let json = serde_json::to_string(&records).unwrap();
        let back: Vec<TrialRecord> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn wilson_known_values() {
        let (lo, hi) = wilson_interval(18, 20);
        assert!((lo - 0.6990).abs() < 1e-3 && (hi - 0.9721).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }
}
