//! Side-by-side summary of finished training runs.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use crate::config::ExperimentKind;
use crate::error::{CliError, Result};
use crate::run::{read_metadata, read_train_summary, RunStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub run: String,
    pub algorithm: String,
    pub status: RunStatus,
    pub p_final: Option<f64>,
    pub a_error: Option<f64>,
    pub b_error: Option<f64>,
    pub kl_final: Option<f64>,
}

/// Reads each run directory. All runs must share the model and teacher.
pub fn compare_runs<P: AsRef<Path>>(dirs: &[P]) -> Result<Vec<ComparisonRow>> {
    if dirs.is_empty() {
        return Err(CliError::Usage("no run directories to compare".into()));
    }
    let mut reference = None;
    let mut rows = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let dir = dir.as_ref();
        let meta = read_metadata(dir)?;
        if meta.config.experiment != ExperimentKind::Train {
            return Err(CliError::Usage(format!("{} is not a training run", dir.display())));
        }
        match &reference {
            None => reference = Some((dir.to_path_buf(), meta.config.model.clone())),
            Some((first, model)) if *model != meta.config.model => {
                return Err(CliError::Usage(format!(
                    "{} and {} have different models or teachers",
                    first.display(),
                    dir.display()
                )));
            }
            Some(_) => {}
        }
        let s = read_train_summary(dir)?;
        rows.push(ComparisonRow {
            run: label(dir),
            algorithm: s.algorithm,
            status: s.status,
            p_final: s.p_final,
            a_error: s.a_error,
            b_error: s.b_error,
            kl_final: s.kl_final,
        });
    }
    Ok(rows)
}

fn label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| PathBuf::from(dir).display().to_string())
}

pub fn render_table(rows: &[ComparisonRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let width = rows.iter().map(|r| r.run.len()).max().unwrap_or(0).max(3);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:<9}  {:<9}  {:>8}  {:>9}  {:>9}  {:>9}",
        "run", "algorithm", "status", "p_K", "|a-a*|", "|b-b*|", "KL"
    );
    for r in rows {
        let status = match r.status {
            RunStatus::Completed => "completed",
            RunStatus::Aborted => "aborted",
        };
        let _ = writeln!(
            out,
            "{:<width$}  {:<9}  {:<9}  {:>8}  {:>9}  {:>9}  {:>9}",
            r.run,
            r.algorithm,
            status,
            cell(r.p_final),
            cell(r.a_error),
            cell(r.b_error),
            cell(r.kl_final)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DataSection, ExperimentConfig, ModelSection, TrainSection};
    use crate::run::run_experiment;
    use smc_ebm::Algorithm;

    fn run(dir: &Path, algorithm: Algorithm, dim: usize) {
        let cfg = ExperimentConfig {
            out_dir: dir.to_path_buf(),
            model: ModelSection { dim, ..ModelSection::default() },
            data: DataSection { n: 100, path: None },
            train: TrainSection { algorithm, iterations: 5, walkers: 100, ..TrainSection::default() },
            ..ExperimentConfig::default()
        };
        run_experiment(&cfg).unwrap();
    }

    #[test]
    fn one_row_per_run() {
        let tmp = tempfile::tempdir().unwrap();
        let dirs: Vec<PathBuf> = [Algorithm::Jarzynski, Algorithm::Pcd, Algorithm::Cd]
            .into_iter()
            .map(|alg| {
                let d = tmp.path().join(alg.as_str());
                run(&d, alg, 1);
                d
            })
            .collect();
        let rows = compare_runs(&dirs).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].algorithm, "pcd");
        assert_eq!(rows[2].run, "cd");
        let table = render_table(&rows);
        assert_eq!(table.lines().count(), 4);
        assert!(table.contains("jarzynski") && table.contains("|a-a*|"));
        assert_eq!(compare_runs(&dirs[..1]).unwrap().len(), 1);
    }

    #[test]
    fn empty_and_mismatched_inputs_are_usage_errors() {
        let none: [PathBuf; 0] = [];
        assert!(matches!(compare_runs(&none), Err(CliError::Usage(_))));
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        run(&a, Algorithm::Pcd, 1);
        run(&b, Algorithm::Pcd, 2);
        let err = compare_runs(&[a, b]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("different"));
        assert!(matches!(compare_runs(&[tmp.path().join("missing")]), Err(CliError::Io { .. })));
    }
}
