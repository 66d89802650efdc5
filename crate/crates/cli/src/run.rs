//! Running one experiment and writing its output directory.
//!
//! A training run writes four files:
//!
//! * `run.toml`: code version and the fully resolved configuration
//! * `diagnostics.csv`: one row per iteration, written as the run goes
//! * `walkers.csv`: final walker positions and log-weights
//! * `summary.toml`: final parameters, mode mass, errors and KL estimate
//!
//! A reduced-dynamics run writes `run.toml`, one `reduced_<regime>.csv` per
//! regime and `summary.toml`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smc_ebm::analysis::{
    classify_trajectory, empirical_1d_dynamics, jarzynski_fixed_point, reduced_ode_trajectory,
    EmpiricalConfig, ReducedState, Regime,
};
use smc_ebm::energy::Dataset;
use smc_ebm::training::train;
use smc_ebm::{EnergyModel, ModelKind, TrainRecord};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, Result};

pub const RUN_FILE: &str = "run.toml";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const WALKERS_FILE: &str = "walkers.csv";
pub const SUMMARY_FILE: &str = "summary.toml";

/// Models with at most this many parameters get θ columns in the diagnostics.
pub const MAX_THETA_COLUMNS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub algorithm: String,
    /// Diagnostics rows written, including `k = 0`.
    pub records: usize,
    pub resample_count: usize,
    pub theta: Vec<f64>,
    /// `‖θ_K − θ*‖` over all parameters.
    pub theta_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_error: Option<f64>,
    /// Exact-`Z` cross-entropy minus that of the teacher on the same data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_z_est_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_z_final: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: String,
    /// `collapsed`, `frozen`, `settled` or `other`.
    pub outcome: String,
    pub z_end: f64,
    pub q_end: f64,
    pub q_hat0: f64,
    pub q_hat_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_point: Option<f64>,
    pub hops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSummary {
    pub regimes: Vec<RegimeSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunReport {
    Train(TrainSummary),
    Reduced(ReducedSummary),
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let meta = RunMetadata { version: env!("CARGO_PKG_VERSION").to_string(), config: cfg.clone() };
    let meta_text = toml::to_string(&meta)
        .map_err(|e| CliError::Config(format!("cannot encode config: {e}")))?;
    write_file(&dir.join(RUN_FILE), meta_text.as_bytes())?;
    match cfg.experiment {
        ExperimentKind::Train => run_training(cfg).map(RunReport::Train),
        ExperimentKind::Reduced1d => run_reduced(cfg).map(RunReport::Reduced),
    }
}

fn run_training(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let model = cfg.model()?;
    let data = cfg.dataset()?;
    let theta0 = cfg.initial_theta();
    let train_cfg = cfg.train_config();
    train_cfg.validate(model.as_ref(), &theta0, &data)?;
    let teacher = cfg.teacher_theta();
    let reference_ce = model
        .log_partition(&teacher)
        .map(|log_z| log_z + mean_energy(model.as_ref(), &teacher, &data));

    let path = cfg.out_dir.join(DIAGNOSTICS_FILE);
    let mut out = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
    let theta_columns = model.num_params() <= MAX_THETA_COLUMNS;
    let mut write_err = write_header(&mut out, model.num_params(), theta_columns).err();
    let mut observer = |r: &TrainRecord| {
        if write_err.is_none() {
            write_err = write_row(&mut out, r, reference_ce, theta_columns).err();
        }
    };
    let result = train(model.as_ref(), &theta0, &data, &train_cfg, &mut observer);
    if let Some(e) = write_err {
        return Err(CliError::Io { path, source: e });
    }
    out.flush().map_err(CliError::io(&path))?;
    drop(out);

    let (theta, history, failure) = match result {
        Ok(done) => {
            let wpath = cfg.out_dir.join(WALKERS_FILE);
            let mut w = BufWriter::new(File::create(&wpath).map_err(CliError::io(&wpath))?);
            done.population
                .write_dump(&mut w)
                .and_then(|_| w.flush())
                .map_err(CliError::io(&wpath))?;
            (done.theta, done.history, None)
        }
        Err(abort) => (abort.theta, abort.history, Some(abort.error)),
    };
    let summary = summarize(cfg, model.as_ref(), &theta, &history, reference_ce, failure.as_ref());
    let text = toml::to_string(&summary)
        .map_err(|e| CliError::Config(format!("cannot encode summary: {e}")))?;
    write_file(&cfg.out_dir.join(SUMMARY_FILE), text.as_bytes())?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(summary),
    }
}

fn summarize(
    cfg: &ExperimentConfig,
    model: &dyn EnergyModel,
    theta: &[f64],
    history: &[TrainRecord],
    reference_ce: Option<f64>,
    failure: Option<&smc_ebm::Error>,
) -> TrainSummary {
    let teacher = cfg.teacher_theta();
    let last = history.last();
    let (a_error, b_error) = if cfg.model.kind == ModelKind::Gmm {
        let d = cfg.model.dim;
        (
            Some(distance(&theta[..d], &teacher[..d])),
            Some(distance(&theta[d..2 * d], &teacher[d..2 * d])),
        )
    } else {
        (None, None)
    };
    TrainSummary {
        status: if failure.is_some() { RunStatus::Aborted } else { RunStatus::Completed },
        error: failure.map(|e| e.to_string()),
        algorithm: cfg.train.algorithm.to_string(),
        records: history.len(),
        resample_count: history.iter().filter(|r| r.resampled).count(),
        theta: theta.to_vec(),
        theta_error: distance(theta, &teacher),
        p_final: model.mode_mass(theta),
        a_error,
        b_error,
        kl_final: last.and_then(|r| r.ce_exact).zip(reference_ce).map(|(ce, h)| ce - h),
        log_z_est_final: last.and_then(|r| r.log_z_est),
        log_z_final: model.log_partition(theta),
    }
}

fn run_reduced(cfg: &ExperimentConfig) -> Result<ReducedSummary> {
    let r = &cfg.reduced;
    let runs: Vec<Result<RegimeSummary>> = r
        .regimes
        .par_iter()
        .map(|&regime| {
            let ecfg = EmpiricalConfig {
                a: r.a,
                b: r.b,
                z0: r.z0,
                z_star: r.z_star,
                walkers: r.walkers,
                dt: r.dt,
                t_end: r.t_end,
                alpha: r.alpha,
                regime,
                record_every: r.record_every,
                seed: cfg.seed,
            };
            let out = empirical_1d_dynamics(&ecfg)?;
            let state = ReducedState {
                z: r.z0,
                regime,
                q0: out.q_hat0,
                z_star_hat: out.z_star_hat(),
            };
            // The reduced ODE needs both modes populated; skip it otherwise.
            let ode = reduced_ode_trajectory(&state, r.dt, r.t_end).ok();
            write_reduced_csv(&cfg.out_dir, regime, &out, ode.as_deref(), r.record_every)?;
            let z_end = *out.z.last().unwrap_or(&r.z0);
            let q = out.q_model();
            Ok(RegimeSummary {
                regime: regime.to_string(),
                outcome: format!("{:?}", classify_trajectory(&out.z, out.q_hat_star)).to_lowercase(),
                z_end,
                q_end: *q.last().unwrap_or(&f64::NAN),
                q_hat0: out.q_hat0,
                q_hat_star: out.q_hat_star,
                fixed_point: (regime == Regime::Jarzynski && ode.is_some())
                    .then(|| jarzynski_fixed_point(out.q_hat0, out.z_star_hat())),
                hops: out.hops.len(),
            })
        })
        .collect();
    let summary = ReducedSummary { regimes: runs.into_iter().collect::<Result<_>>()? };
    let text = toml::to_string(&summary)
        .map_err(|e| CliError::Config(format!("cannot encode summary: {e}")))?;
    write_file(&cfg.out_dir.join(SUMMARY_FILE), text.as_bytes())?;
    Ok(summary)
}

/// File name of the trajectory of one reduced-dynamics regime.
pub fn reduced_file(regime: Regime) -> String {
    format!("reduced_{regime}.csv")
}

fn write_reduced_csv(
    dir: &Path,
    regime: Regime,
    out: &smc_ebm::analysis::EmpiricalOutput,
    ode: Option<&[f64]>,
    every: usize,
) -> Result<()> {
    let path = dir.join(reduced_file(regime));
    let mut text = String::from("t,z,q,weighted_fraction_b,z_ode\n");
    let q = out.q_model();
    for (i, t) in out.times.iter().enumerate() {
        let z_ode = ode.and_then(|o| o.get(i * every)).copied();
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            num(*t),
            num(out.z[i]),
            num(q[i]),
            num(out.weighted_fraction_b[i]),
            opt(z_ode)
        ));
    }
    write_file(&path, text.as_bytes())
}

fn mean_energy(model: &dyn EnergyModel, theta: &[f64], data: &Dataset) -> f64 {
    data.iter().map(|x| model.energy(theta, x)).sum::<f64>() / data.len() as f64
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Column names of `diagnostics.csv`.
pub fn diagnostics_header(num_params: usize, theta_columns: bool) -> String {
    let mut cols = vec!["k", "ess", "log_z_est", "ce_est", "ce_exact", "kl", "p_k", "resampled"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    if theta_columns {
        cols.extend((1..=num_params).map(|j| format!("theta_{j}")));
    }
    cols.join(",")
}

fn write_header<W: Write>(out: &mut W, num_params: usize, theta_columns: bool) -> std::io::Result<()> {
    writeln!(out, "{}", diagnostics_header(num_params, theta_columns))
}

fn write_row<W: Write>(
    out: &mut W,
    r: &TrainRecord,
    reference_ce: Option<f64>,
    theta_columns: bool,
) -> std::io::Result<()> {
    let kl = r.ce_exact.zip(reference_ce).map(|(ce, h)| ce - h);
    write!(
        out,
        "{},{},{},{},{},{},{},{}",
        r.k,
        opt(r.ess),
        opt(r.log_z_est),
        opt(r.ce_est),
        opt(r.ce_exact),
        opt(kl),
        opt(r.p_k),
        u8::from(r.resampled)
    )?;
    if theta_columns {
        for t in &r.theta {
            write!(out, ",{}", num(*t))?;
        }
    }
    writeln!(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(CliError::io(path))
}

/// One parsed row of `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub k: usize,
    pub ess: Option<f64>,
    pub log_z_est: Option<f64>,
    pub ce_est: Option<f64>,
    pub ce_exact: Option<f64>,
    pub kl: Option<f64>,
    pub p_k: Option<f64>,
    pub resampled: bool,
    pub theta: Vec<f64>,
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let bad = |line: usize, what: &str| {
        CliError::Usage(format!("{}: line {line}: {what}", path.display()))
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    if !header.starts_with("k,ess,log_z_est,ce_est,ce_exact,kl,p_k,resampled") {
        return Err(bad(1, "unexpected header"));
    }
    let parse_opt = |s: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(line, "bad number"))
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 8 {
            return Err(bad(n, "too few columns"));
        }
        rows.push(DiagnosticsRow {
            k: f[0].parse().map_err(|_| bad(n, "bad iteration"))?,
            ess: parse_opt(f[1], n)?,
            log_z_est: parse_opt(f[2], n)?,
            ce_est: parse_opt(f[3], n)?,
            ce_exact: parse_opt(f[4], n)?,
            kl: parse_opt(f[5], n)?,
            p_k: parse_opt(f[6], n)?,
            resampled: f[7] == "1",
            theta: f[8..]
                .iter()
                .map(|s| s.parse().map_err(|_| bad(n, "bad parameter")))
                .collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// Reads `run.toml` from a run directory.
pub fn read_metadata(dir: &Path) -> Result<RunMetadata> {
    read_toml(&dir.join(RUN_FILE))
}

pub fn read_train_summary(dir: &Path) -> Result<TrainSummary> {
    read_toml(&dir.join(SUMMARY_FILE))
}

pub fn read_reduced_summary(dir: &Path) -> Result<ReducedSummary> {
    read_toml(&dir.join(SUMMARY_FILE))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DataSection, ModelSection, Overrides, ReducedSection, TrainSection};
    use smc_ebm::Algorithm;

    fn small(dir: &Path, algorithm: Algorithm) -> ExperimentConfig {
        ExperimentConfig {
            out_dir: dir.to_path_buf(),
            model: ModelSection { dim: 2, ..ModelSection::default() },
            data: DataSection { n: 300, path: None },
            train: TrainSection { algorithm, iterations: 20, walkers: 200, ..TrainSection::default() },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn training_run_writes_all_files() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small(tmp.path(), Algorithm::Jarzynski);
        let RunReport::Train(summary) = run_experiment(&cfg).unwrap() else { panic!() };
        assert_eq!(summary.status, RunStatus::Completed);
        assert_eq!(summary.records, 21);
        for f in [RUN_FILE, DIAGNOSTICS_FILE, WALKERS_FILE, SUMMARY_FILE] {
            assert!(tmp.path().join(f).exists(), "{f}");
        }
        assert_eq!(read_train_summary(tmp.path()).unwrap(), summary);
        let meta = read_metadata(tmp.path()).unwrap();
        assert_eq!(meta.config, cfg);
        assert_eq!(meta.version, env!("CARGO_PKG_VERSION"));
        let rows = read_diagnostics(&tmp.path().join(DIAGNOSTICS_FILE)).unwrap();
        assert_eq!(rows.len(), 21);
        assert_eq!(rows[0].ess, Some(1.0));
        assert_eq!(rows[20].theta, summary.theta);
        assert_eq!(rows[20].kl, summary.kl_final);
        let walkers = std::io::BufReader::new(File::open(tmp.path().join(WALKERS_FILE)).unwrap());
        assert_eq!(smc_ebm::Population::read_dump(walkers).unwrap().len(), 200);
    }

    #[test]
    fn kl_is_zero_at_the_teacher() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small(tmp.path(), Algorithm::Pcd);
        cfg.train.iterations = 0;
        cfg.train.theta0 = Some(cfg.teacher_theta());
        let RunReport::Train(s) = run_experiment(&cfg).unwrap() else { panic!() };
        assert!(s.kl_final.unwrap().abs() < 1e-12);
        assert_eq!(s.a_error, Some(0.0));
        assert!((s.p_final.unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn baselines_leave_weighted_columns_empty() {
        let tmp = tempfile::tempdir().unwrap();
        run_experiment(&small(tmp.path(), Algorithm::Cd)).unwrap();
        let rows = read_diagnostics(&tmp.path().join(DIAGNOSTICS_FILE)).unwrap();
        assert!(rows.iter().all(|r| r.ess.is_none() && r.log_z_est.is_none() && r.kl.is_some()));
    }

    #[test]
    fn high_dimensional_runs_omit_theta_columns() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small(tmp.path(), Algorithm::Jarzynski);
        cfg.model.dim = 5;
        cfg.train.iterations = 2;
        run_experiment(&cfg).unwrap();
        let rows = read_diagnostics(&tmp.path().join(DIAGNOSTICS_FILE)).unwrap();
        assert!(rows[0].theta.is_empty());
    }

    #[test]
    fn divergence_flushes_diagnostics_and_reports_exit_code_three() {
        let tmp = tempfile::tempdir().unwrap();
        let text = format!(
            "out_dir = {:?}\n[model]\nkind = \"gaussian\"\n[data]\nn = 10\n[train]\nstep_size = 10.0\nwalkers = 10\nlearning_rates = [0.01]\n",
            tmp.path()
        );
        let cfg = ExperimentConfig::resolve(Some(&text), "t", &Overrides::default()).unwrap();
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let rows = read_diagnostics(&tmp.path().join(DIAGNOSTICS_FILE)).unwrap();
        assert!(!rows.is_empty());
        let s = read_train_summary(tmp.path()).unwrap();
        assert_eq!(s.status, RunStatus::Aborted);
        assert_eq!(s.records, rows.len());
        assert!(!tmp.path().join(WALKERS_FILE).exists());
    }

    #[test]
    fn config_errors_found_at_run_time_exit_with_two() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small(tmp.path(), Algorithm::Jarzynski);
        cfg.train.walker_batch = Some(1000);
        assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn reduced_run_writes_one_trajectory_per_regime() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::Reduced1d,
            out_dir: tmp.path().to_path_buf(),
            reduced: ReducedSection { t_end: 20.0, walkers: 50, alpha: 0.01, ..ReducedSection::default() },
            ..ExperimentConfig::default()
        };
        let RunReport::Reduced(s) = run_experiment(&cfg).unwrap() else { panic!() };
        assert_eq!(s.regimes.len(), 3);
        assert_eq!(read_reduced_summary(tmp.path()).unwrap(), s);
        for r in [Regime::Unweighted, Regime::Pcd, Regime::Jarzynski] {
            let text = fs::read_to_string(tmp.path().join(reduced_file(r))).unwrap();
            assert_eq!(text.lines().count(), 1 + 21);
            let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
            assert_eq!(first[1], first[4], "ODE and empirical run share z(0)");
        }
        let pcd = s.regimes.iter().find(|r| r.regime == "pcd").unwrap();
        assert_eq!(pcd.outcome, "frozen");
    }
}
