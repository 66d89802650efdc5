//! Experiment configuration files.
//!
//! A run is described by a TOML document. Every key is optional: a missing
//! key takes its value from the selected preset, or from
//! [`ExperimentConfig::default`] when there is none. Unknown keys are errors.
//! Command-line flags override both.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smc_ebm::analysis::Regime;
use smc_ebm::energy::{gmm_sample_target, Dataset};
use smc_ebm::rng::{stream_rng, Stream};
use smc_ebm::training::gmm_initial_theta;
use smc_ebm::{
    Algorithm, EnergyModel, GaussianModel, GmmModel, GmmParams, GmmZOnly, ModelKind,
    OptimizerKind, Resampler, TrainConfig,
};

use crate::error::{CliError, Result};
use crate::presets;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// Train a model on data with one of the three algorithms.
    #[default]
    #[serde(rename = "train")]
    Train,
    /// The one-dimensional reduced learning dynamics.
    #[serde(rename = "reduced-1d")]
    Reduced1d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub reduced: ReducedSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: None,
            experiment: ExperimentKind::Train,
            seed: 0,
            out_dir: PathBuf::from("run"),
            model: ModelSection::default(),
            data: DataSection::default(),
            train: TrainSection::default(),
            reduced: ReducedSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    #[serde(with = "named")]
    pub kind: ModelKind,
    pub dim: usize,
    pub teacher: TeacherSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { kind: ModelKind::Gmm, dim: 1, teacher: TeacherSection::default() }
    }
}

/// Parameters of the data-generating model. Vectors shorter than the
/// dimension are padded with zeros, so `a = [-10.0]` puts the mode on the
/// first axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherSection {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub z: f64,
    /// Mean of the Gaussian model.
    pub mean: Vec<f64>,
}

impl Default for TeacherSection {
    fn default() -> Self {
        Self { a: vec![-10.0], b: vec![6.0], z: -(3f64.ln()), mean: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Points drawn from the teacher when no file is given.
    pub n: usize,
    /// Comma-separated file with one point per line and an optional header.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { n: 10_000, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    #[serde(with = "named")]
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub step_size: f64,
    pub learning_rates: Vec<f64>,
    #[serde(with = "named")]
    pub optimizer: OptimizerKind,
    pub walkers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walker_batch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_batch: Option<usize>,
    #[serde(with = "named")]
    pub resampler: Resampler,
    /// Resample when the normalised ESS drops below this value. A threshold
    /// written as `ESS < N/(1+c)` corresponds to `1/(1+c)`.
    pub ess_threshold: f64,
    pub resample_from: usize,
    pub cd_steps: usize,
    /// Initial parameters. The default is model specific.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            algorithm: base.algorithm,
            iterations: base.iterations,
            step_size: base.step_size,
            learning_rates: vec![0.2, 0.2, 1.0],
            optimizer: base.optimizer,
            walkers: base.walkers,
            walker_batch: None,
            data_batch: None,
            resampler: base.resampler,
            ess_threshold: base.ess_threshold,
            resample_from: base.resample_from,
            cd_steps: base.cd_steps,
            theta0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReducedSection {
    pub a: f64,
    pub b: f64,
    pub z0: f64,
    pub z_star: f64,
    pub walkers: usize,
    pub dt: f64,
    pub t_end: f64,
    pub alpha: f64,
    pub record_every: usize,
    #[serde(with = "named_list")]
    pub regimes: Vec<Regime>,
}

impl Default for ReducedSection {
    fn default() -> Self {
        let base = smc_ebm::analysis::EmpiricalConfig::default();
        Self {
            a: base.a,
            b: base.b,
            z0: base.z0,
            z_star: base.z_star,
            walkers: base.walkers,
            dt: base.dt,
            t_end: base.t_end,
            alpha: base.alpha,
            record_every: base.record_every,
            regimes: vec![Regime::Unweighted, Regime::Pcd, Regime::Jarzynski],
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub algorithm: Option<Algorithm>,
    pub resampler: Option<Resampler>,
}

impl ExperimentConfig {
    /// Reads `path` (if any), layers it over the preset and applies the
    /// overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let text = path
            .map(|p| fs::read_to_string(p).map_err(CliError::io(p)))
            .transpose()?;
        let origin = path.map_or_else(|| "<config>".to_string(), |p| p.display().to_string());
        Self::resolve(text.as_deref(), &origin, overrides)
    }

    /// Same as [`load`](Self::load) with the file contents given directly.
    pub fn resolve(text: Option<&str>, origin: &str, overrides: &Overrides) -> Result<Self> {
        let file_table = match text {
            Some(t) => {
                // Parsing the file on its own gives errors with its line numbers.
                let own: ExperimentConfig = toml::from_str(t)
                    .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
                let table: toml::Table = toml::from_str(t)
                    .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
                Some((own.preset, table))
            }
            None => None,
        };
        let preset = overrides
            .preset
            .clone()
            .or_else(|| file_table.as_ref().and_then(|(p, _)| p.clone()));
        let base = match &preset {
            Some(name) => presets::preset(name)?,
            None => ExperimentConfig::default(),
        };
        let mut merged = toml::Table::try_from(&base)
            .map_err(|e| CliError::Config(format!("cannot encode preset: {e}")))?;
        if let Some((_, table)) = file_table {
            merge(&mut merged, table);
        }
        let mut cfg: ExperimentConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        cfg.preset = preset;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &overrides.out_dir {
            cfg.out_dir = dir.clone();
        }
        if let Some(alg) = overrides.algorithm {
            cfg.train.algorithm = alg;
        }
        if let Some(r) = overrides.resampler {
            cfg.train.resampler = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot encode config: {e}")))
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let m = &self.model;
        if m.dim == 0 {
            return bad("model.dim must be at least 1".into());
        }
        let t = &m.teacher;
        for (key, v) in [("a", &t.a), ("b", &t.b), ("mean", &t.mean)] {
            if v.len() > m.dim {
                return bad(format!("model.teacher.{key} has {} entries for dimension {}", v.len(), m.dim));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return bad(format!("model.teacher.{key} must be finite"));
            }
        }
        if !t.z.is_finite() {
            return bad("model.teacher.z must be finite".into());
        }
        if self.data.path.is_none() && self.data.n == 0 {
            return bad("data.n must be at least 1".into());
        }
        if let Some(theta0) = &self.train.theta0 {
            let np = self.model()?.num_params();
            if theta0.len() != np {
                return bad(format!("train.theta0 needs {np} entries, got {}", theta0.len()));
            }
        }
        if self.experiment == ExperimentKind::Reduced1d && self.reduced.regimes.is_empty() {
            return bad("reduced.regimes must name at least one regime".into());
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Box<dyn EnergyModel>> {
        let d = self.model.dim;
        let t = &self.model.teacher;
        Ok(match self.model.kind {
            ModelKind::Gmm => Box::new(GmmModel::new(d)),
            ModelKind::Gaussian => Box::new(GaussianModel::new(d)),
            ModelKind::GmmZOnly => Box::new(GmmZOnly::new(pad(&t.a, d), pad(&t.b, d))?),
        })
    }

    /// Flat teacher parameters in the model's layout.
    pub fn teacher_theta(&self) -> Vec<f64> {
        let d = self.model.dim;
        let t = &self.model.teacher;
        match self.model.kind {
            ModelKind::Gmm => [pad(&t.a, d), pad(&t.b, d), vec![t.z]].concat(),
            ModelKind::Gaussian => pad(&t.mean, d),
            ModelKind::GmmZOnly => vec![t.z],
        }
    }

    pub fn initial_theta(&self) -> Vec<f64> {
        if let Some(theta0) = &self.train.theta0 {
            return theta0.clone();
        }
        match self.model.kind {
            ModelKind::Gmm => gmm_initial_theta(self.model.dim, self.seed),
            ModelKind::Gaussian => vec![0.0; self.model.dim],
            ModelKind::GmmZOnly => vec![0.0],
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            algorithm: t.algorithm,
            iterations: t.iterations,
            step_size: t.step_size,
            learning_rates: t.learning_rates.clone(),
            optimizer: t.optimizer,
            walkers: t.walkers,
            walker_batch: t.walker_batch,
            data_batch: t.data_batch,
            resampler: t.resampler,
            ess_threshold: t.ess_threshold,
            resample_from: t.resample_from,
            cd_steps: t.cd_steps,
            seed: self.seed,
        }
    }

    /// Training data: read from `data.path`, or drawn from the teacher.
    pub fn dataset(&self) -> Result<Dataset> {
        if let Some(path) = &self.data.path {
            let text = fs::read_to_string(path).map_err(CliError::io(path))?;
            return parse_points(&text, self.model.dim)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
        }
        let mut rng = stream_rng(self.seed, Stream::Data);
        let teacher = self.teacher_theta();
        if self.model.kind == ModelKind::Gmm {
            let params = GmmParams::from_flat(self.model.dim, &teacher)?;
            return Ok(gmm_sample_target(&params, self.data.n, &mut rng)?);
        }
        let model = self.model()?;
        let d = self.model.dim;
        let mut points = vec![0.0; self.data.n * d];
        for row in points.chunks_exact_mut(d) {
            if !model.sample(&teacher, &mut rng, row) {
                return Err(CliError::Config(format!(
                    "model {} cannot generate data; set data.path",
                    self.model.kind
                )));
            }
        }
        Ok(Dataset::new(d, points)?)
    }
}

fn pad(v: &[f64], d: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    out.resize(d, 0.0);
    out
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Parses comma-separated rows. A first line that is not numeric is taken as
/// a header.
pub fn parse_points(text: &str, dim: usize) -> std::result::Result<Dataset, String> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match row {
            Ok(row) if row.len() == dim => points.extend(row),
            Ok(row) => {
                return Err(format!("line {}: expected {dim} values, found {}", i + 1, row.len()))
            }
            Err(_) if i == 0 => continue,
            Err(e) => return Err(format!("line {}: {e}", i + 1)),
        }
    }
    Dataset::new(dim, points).map_err(|e| e.to_string())
}

/// Serde adapter for types with `Display` and `FromStr`.
mod named {
    use super::*;

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> std::result::Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

mod named_list {
    use super::*;

    pub fn serialize<T: Display, S: Serializer>(v: &[T], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, T, D>(d: D) -> std::result::Result<Vec<T>, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::resolve(Some(""), "t", &Overrides::default()).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = r#"
preset = "gmm-scaled"
seed = 7
[train]
walker_batch = 500
learning_rates = [0.1, 0.2, 0.30000000000000004]
theta0 = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0, 1e-17]
"#;
        let cfg = ExperimentConfig::resolve(Some(text), "t", &Overrides::default()).unwrap();
        assert_eq!(cfg.model.dim, 10);
        assert_eq!(cfg.seed, 7);
        let again =
            ExperimentConfig::resolve(Some(&cfg.to_toml().unwrap()), "t", &Overrides::default())
                .unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_reported_with_their_line() {
        let err = ExperimentConfig::resolve(Some("seed = 1\n[train]\nwalkerz = 3\n"), "cfg.toml", &Overrides::default())
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cfg.toml") && msg.contains("line 3") && msg.contains("walkerz"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_names_are_config_errors() {
        for text in ["[train]\nalgorithm = \"sgld\"", "[model]\nkind = \"mlp\"", "[reduced]\nregimes = [\"pcd\", \"x\"]"] {
            let err = ExperimentConfig::resolve(Some(text), "t", &Overrides::default()).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{text}");
        }
        let err = ExperimentConfig::resolve(None, "t", &Overrides { preset: Some("nope".into()), ..Default::default() })
            .unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn flags_override_file_and_preset() {
        let overrides = Overrides {
            preset: Some("gmm-scaled".into()),
            seed: Some(9),
            out_dir: Some("elsewhere".into()),
            algorithm: Some(Algorithm::Pcd),
            resampler: Some(Resampler::Multinomial),
        };
        let cfg = ExperimentConfig::resolve(Some("seed = 1\n[train]\nalgorithm = \"cd\"\niterations = 5"), "t", &overrides)
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(cfg.train.algorithm, Algorithm::Pcd);
        assert_eq!(cfg.train.resampler, Resampler::Multinomial);
        assert_eq!(cfg.train.iterations, 5);
        assert_eq!(cfg.train.walkers, 10_000);
        assert_eq!(cfg.preset.as_deref(), Some("gmm-scaled"));
    }

    #[test]
    fn static_validation() {
        for text in [
            "[model]\ndim = 0",
            "[model]\ndim = 1\nteacher = { a = [1.0, 2.0] }",
            "[data]\nn = 0",
            "[train]\ntheta0 = [1.0]",
            "experiment = \"reduced-1d\"\n[reduced]\nregimes = []",
        ] {
            assert!(ExperimentConfig::resolve(Some(text), "t", &Overrides::default()).is_err(), "{text}");
        }
    }

    #[test]
    fn teacher_vectors_are_padded() {
        let cfg = ExperimentConfig::resolve(Some("[model]\ndim = 3"), "t", &Overrides::default()).unwrap();
        let z = -(3f64.ln());
        assert_eq!(cfg.teacher_theta(), vec![-10.0, 0.0, 0.0, 6.0, 0.0, 0.0, z]);
        let g = ExperimentConfig::resolve(
            Some("[model]\nkind = \"gaussian\"\ndim = 2\nteacher = { mean = [1.5] }"),
            "t",
            &Overrides::default(),
        )
        .unwrap();
        assert_eq!(g.teacher_theta(), vec![1.5, 0.0]);
        assert_eq!(g.initial_theta(), vec![0.0, 0.0]);
    }

    #[test]
    fn generated_data_follow_the_seed() {
        let mut cfg = ExperimentConfig { data: DataSection { n: 50, path: None }, ..Default::default() };
        let a = cfg.dataset().unwrap();
        assert_eq!(a, cfg.dataset().unwrap());
        cfg.seed = 1;
        assert_ne!(a, cfg.dataset().unwrap());
        cfg.model.kind = ModelKind::Gaussian;
        assert_eq!(cfg.dataset().unwrap().len(), 50);
    }

    #[test]
    fn point_files() {
        let d = parse_points("x_1,x_2\n1,2\n\n3.5, -4\n", 2).unwrap();
        assert_eq!(d.as_flat(), &[1.0, 2.0, 3.5, -4.0]);
        assert!(parse_points("1,2\n3\n", 2).unwrap_err().contains("line 2"));
        assert!(parse_points("1,2\nx,3\n", 2).unwrap_err().contains("line 2"));
        assert!(parse_points("header\n", 2).is_err());
    }
}
