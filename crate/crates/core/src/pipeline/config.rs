//! Flat `key = value` configuration with `[section]` headers.
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Relative paths resolve against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::error::{ensure, Error, Result};
use crate::fractional::FractionalOrder;
use crate::graphdiff::{BrainGraph, DiffusionParams};
use crate::model::{EntropySign, ExtractorSpec, LossWeights};

/// Biomarker names in the order used for risk weights, the baseline feature
/// vector and the CSV export.
pub const BIOMARKERS: [&str; 11] = [
    "latent_energy_entropy",
    "attention_entropy",
    "geodesic_mean",
    "geodesic_max",
    "curvature_mean",
    "memory_EEG",
    "memory_ECG",
    "memory_Resp",
    "memory_SpO2",
    "memory_EMG",
    "memory_fMRI-BOLD",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PathsConfig {
    /// Cohort manifest; defaults to `<out>/cohort/manifest.json`.
    pub cohort: Option<PathBuf>,
    /// Region graph JSON; defaults to the bundled 16-region graph.
    pub graph: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub n_subjects: usize,
    pub positive_fraction: f64,
    pub effect_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub eeg_low: f64,
    pub eeg_high: f64,
    pub eeg_rate: f64,
    pub ecg_low: f64,
    pub ecg_high: f64,
    pub ecg_rate: f64,
    pub emg_low: f64,
    pub emg_high: f64,
    /// Covariance window and stride in seconds.
    pub window: f64,
    pub stride: f64,
    /// Diagonal loading; `None` picks it from the data.
    pub shrinkage: Option<f64>,
    /// Covariance windows with a z-scored sample beyond this are skipped.
    pub artifact_z: f64,
    /// Beat detection threshold on the z-scored ECG.
    pub rr_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub d_k: usize,
    pub epochs: usize,
    pub lr: f64,
    pub patience: usize,
    pub train_projections: bool,
    pub threshold: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub baseline_l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub lambda_att: f64,
    pub lambda_stroke: f64,
    pub entropy_sign: EntropySign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub step: f64,
    pub seed_region: String,
    pub snapshot_every: usize,
    pub centrality_beta: f64,
    pub centrality_horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeConfig {
    pub alpha: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianConfig {
    pub step: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub seed: u64,
    /// Worker threads for per-subject stages; 0 uses all cores.
    pub workers: usize,
    pub simulate: SimulateConfig,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub diffusion: DiffusionConfig,
    pub stroke: StrokeConfig,
    pub hamiltonian: HamiltonianConfig,
    /// Nonnegative weight per entry of [`BIOMARKERS`].
    pub risk_weights: BTreeMap<String, f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig {
                cohort: None,
                graph: None,
                out: PathBuf::from("out"),
            },
            seed: 7,
            workers: 0,
            simulate: SimulateConfig {
                n_subjects: 60,
                positive_fraction: 0.5,
                effect_size: 2.0,
            },
            preprocess: PreprocessConfig {
                eeg_low: 0.5,
                eeg_high: 30.0,
                eeg_rate: 64.0,
                ecg_low: 0.5,
                ecg_high: 40.0,
                ecg_rate: 128.0,
                emg_low: 10.0,
                emg_high: 100.0,
                window: 1.0,
                stride: 0.5,
                shrinkage: None,
                artifact_z: 8.0,
                rr_threshold: 3.0,
            },
            model: ModelConfig {
                d_model: 8,
                heads: 2,
                d_k: 16,
                epochs: 300,
                lr: 0.05,
                patience: 60,
                train_projections: true,
                threshold: 0.5,
                val_fraction: 0.15,
                test_fraction: 0.15,
                baseline_l2: 1e-2,
            },
            loss: LossConfig {
                lambda_att: 0.01,
                lambda_stroke: 0.1,
                entropy_sign: EntropySign::Minimize,
            },
            diffusion: DiffusionConfig {
                alpha: 0.8,
                beta: 0.4,
                gamma: 0.9,
                horizon: 30.0,
                step: 0.02,
                seed_region: "LC".into(),
                snapshot_every: 50,
                centrality_beta: 0.1,
                centrality_horizon: 10,
            },
            stroke: StrokeConfig { alpha: 0.8, steps: 10 },
            hamiltonian: HamiltonianConfig { step: 0.05, steps: 400 },
            risk_weights: BIOMARKERS.iter().map(|b| (b.to_string(), 0.0)).collect(),
        }
    }
}

trait ConfigValue: Sized {
    fn parse(s: &str) -> Option<Self>;
    fn render(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl ConfigValue for usize {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for bool {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Some(true),
            "false" | "no" | "0" => Some(false),
            _ => None,
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for String {
    fn parse(s: &str) -> Option<Self> {
        Some(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl ConfigValue for PathBuf {
    fn parse(s: &str) -> Option<Self> {
        Some(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for Option<PathBuf> {
    fn parse(s: &str) -> Option<Self> {
        Some((!s.is_empty()).then(|| PathBuf::from(s)))
    }
    fn render(&self) -> String {
        self.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

/// `auto` or a number.
impl ConfigValue for Option<f64> {
    fn parse(s: &str) -> Option<Self> {
        if s.eq_ignore_ascii_case("auto") {
            Some(None)
        } else {
            s.parse().ok().map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "auto".into(), |v| format!("{v:?}"))
    }
}

impl ConfigValue for EntropySign {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minimize" => Some(EntropySign::Minimize),
            "maximize" => Some(EntropySign::Maximize),
            _ => None,
        }
    }
    fn render(&self) -> String {
        match self {
            EntropySign::Minimize => "minimize".into(),
            EntropySign::Maximize => "maximize".into(),
        }
    }
}

fn parse_value<T: ConfigValue>(section: &str, key: &str, value: &str) -> Result<T> {
    T::parse(value.trim()).ok_or_else(|| Error::Config(format!("[{section}] {key}: cannot parse '{value}'")))
}

macro_rules! config_fields {
    ($( $section:literal $key:literal => $($field:ident).+ ),* $(,)?) => {
        impl PipelineConfig {
            fn set_field(&mut self, section: &str, key: &str, value: &str) -> Result<bool> {
                match (section, key) {
                    $( ($section, $key) => self.$($field).+ = parse_value(section, key, value)?, )*
                    _ => return Ok(false),
                }
                Ok(true)
            }

            fn field_entries(&self) -> Vec<(String, String)> {
                vec![$( (concat!($section, ".", $key).to_string(), ConfigValue::render(&self.$($field).+)) ),*]
            }
        }
    };
}

config_fields! {
    "paths" "cohort" => paths.cohort,
    "paths" "graph" => paths.graph,
    "paths" "out" => paths.out,
    "run" "seed" => seed,
    "run" "workers" => workers,
    "simulate" "n_subjects" => simulate.n_subjects,
    "simulate" "positive_fraction" => simulate.positive_fraction,
    "simulate" "effect_size" => simulate.effect_size,
    "preprocess" "eeg_low" => preprocess.eeg_low,
    "preprocess" "eeg_high" => preprocess.eeg_high,
    "preprocess" "eeg_rate" => preprocess.eeg_rate,
    "preprocess" "ecg_low" => preprocess.ecg_low,
    "preprocess" "ecg_high" => preprocess.ecg_high,
    "preprocess" "ecg_rate" => preprocess.ecg_rate,
    "preprocess" "emg_low" => preprocess.emg_low,
    "preprocess" "emg_high" => preprocess.emg_high,
    "preprocess" "window" => preprocess.window,
    "preprocess" "stride" => preprocess.stride,
    "preprocess" "shrinkage" => preprocess.shrinkage,
    "preprocess" "artifact_z" => preprocess.artifact_z,
    "preprocess" "rr_threshold" => preprocess.rr_threshold,
    "model" "d_model" => model.d_model,
    "model" "heads" => model.heads,
    "model" "d_k" => model.d_k,
    "model" "epochs" => model.epochs,
    "model" "lr" => model.lr,
    "model" "patience" => model.patience,
    "model" "train_projections" => model.train_projections,
    "model" "threshold" => model.threshold,
    "model" "val_fraction" => model.val_fraction,
    "model" "test_fraction" => model.test_fraction,
    "model" "baseline_l2" => model.baseline_l2,
    "loss" "lambda_att" => loss.lambda_att,
    "loss" "lambda_stroke" => loss.lambda_stroke,
    "loss" "entropy_sign" => loss.entropy_sign,
    "diffusion" "alpha" => diffusion.alpha,
    "diffusion" "beta" => diffusion.beta,
    "diffusion" "gamma" => diffusion.gamma,
    "diffusion" "horizon" => diffusion.horizon,
    "diffusion" "step" => diffusion.step,
    "diffusion" "seed_region" => diffusion.seed_region,
    "diffusion" "snapshot_every" => diffusion.snapshot_every,
    "diffusion" "centrality_beta" => diffusion.centrality_beta,
    "diffusion" "centrality_horizon" => diffusion.centrality_horizon,
    "stroke" "alpha" => stroke.alpha,
    "stroke" "steps" => stroke.steps,
    "hamiltonian" "step" => hamiltonian.step,
    "hamiltonian" "steps" => hamiltonian.steps,
}

/// Keys that identify where things live or how fast they run, not what is
/// computed; they are left out of the config hash.
const UNHASHED: [&str; 5] = ["paths.cohort", "paths.graph", "paths.out", "run.seed", "run.workers"];

impl PipelineConfig {
    /// Parses config text. Relative paths are joined onto `base`.
    pub fn from_str_with_base(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let Some(section) = section else {
                    return Err(Error::Config(format!("key '{key}' appears before any [section]")));
                };
                cfg.set(section, key, value)?;
            }
        }
        for p in [&mut cfg.paths.cohort, &mut cfg.paths.graph].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.paths.out.is_relative() {
            cfg.paths.out = base.join(&cfg.paths.out);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_str_with_base(&text, base)
    }

    /// Sets one `[section] key` from its text form.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        if section == "risk" {
            ensure!(
                self.risk_weights.contains_key(key),
                Config,
                "[risk] unknown biomarker '{key}' (expected one of {})",
                BIOMARKERS.join(", ")
            );
            let w: f64 = parse_value(section, key, value)?;
            self.risk_weights.insert(key.to_string(), w);
            return Ok(());
        }
        if !self.set_field(section, key, value)? {
            return Err(Error::Config(format!("unknown key [{section}] {key}")));
        }
        Ok(())
    }

    /// Every setting as `section.key` and its canonical text.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e = self.field_entries();
        for (k, w) in &self.risk_weights {
            e.push((format!("risk.{k}"), w.render()));
        }
        e.sort();
        e
    }

    /// SHA-256 over the canonical settings, excluding paths, seed and worker
    /// count.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !UNHASHED.contains(&k.as_str()) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The configuration as loadable text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = String::new();
        for (k, v) in self.entries() {
            let (section, key) = k.split_once('.').expect("entries are section.key");
            if section != current {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{section}]\n"));
                current = section.to_string();
            }
            out.push_str(&format!("{key} = {v}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.preprocess;
        let positive = [
            ("preprocess.eeg_rate", p.eeg_rate),
            ("preprocess.ecg_rate", p.ecg_rate),
            ("preprocess.window", p.window),
            ("preprocess.stride", p.stride),
            ("preprocess.artifact_z", p.artifact_z),
            ("diffusion.horizon", self.diffusion.horizon),
            ("diffusion.step", self.diffusion.step),
            ("hamiltonian.step", self.hamiltonian.step),
        ];
        for (name, v) in positive {
            ensure!(v > 0.0 && v.is_finite(), Config, "{name} must be positive, got {v}");
        }
        for (name, lo, hi) in [
            ("eeg", p.eeg_low, p.eeg_high),
            ("ecg", p.ecg_low, p.ecg_high),
            ("emg", p.emg_low, p.emg_high),
        ] {
            ensure!(lo > 0.0 && lo < hi, Config, "{name} band needs 0 < low < high, got {lo}..{hi}");
        }
        ensure!(p.eeg_high < p.eeg_rate / 2.0, Config, "eeg_high must lie below half of eeg_rate");
        ensure!(p.ecg_high < p.ecg_rate / 2.0, Config, "ecg_high must lie below half of ecg_rate");
        if let Some(s) = p.shrinkage {
            ensure!(s >= 0.0 && s.is_finite(), Config, "shrinkage must be >= 0");
        }

        let m = &self.model;
        ensure!(m.heads >= 1 && m.d_k >= 1, Config, "model.heads and model.d_k must be positive");
        ensure!(m.lr >= 0.0 && m.lr.is_finite(), Config, "model.lr must be >= 0");
        ensure!(m.baseline_l2 >= 0.0, Config, "model.baseline_l2 must be >= 0");
        ensure!((0.0..=1.0).contains(&m.threshold), Config, "model.threshold must lie in [0, 1]");
        ensure!(
            m.val_fraction >= 0.0 && m.test_fraction > 0.0 && m.val_fraction + m.test_fraction < 1.0,
            Config,
            "split fractions must leave a training set"
        );
        self.extractor_spec().validate().map_err(config_error)?;
        self.loss_weights(true).map_err(config_error)?;
        self.diffusion_params().map_err(config_error)?;
        self.stroke_params().map_err(config_error)?;
        ensure!(self.stroke.steps >= 2, Config, "stroke.steps must be >= 2");
        ensure!(self.diffusion.snapshot_every >= 1, Config, "diffusion.snapshot_every must be >= 1");
        ensure!(
            self.diffusion.centrality_beta >= 0.0,
            Config,
            "diffusion.centrality_beta must be >= 0"
        );

        let s = &self.simulate;
        ensure!(s.n_subjects >= 2, Config, "simulate.n_subjects must be >= 2");
        ensure!(
            (0.0..=1.0).contains(&s.positive_fraction),
            Config,
            "simulate.positive_fraction must lie in [0, 1]"
        );
        ensure!(
            s.effect_size >= 0.0 && s.effect_size.is_finite(),
            Config,
            "simulate.effect_size must be >= 0"
        );
        for (k, w) in &self.risk_weights {
            ensure!(*w >= 0.0 && w.is_finite(), Config, "risk weight {k} must be >= 0");
        }
        if let Some(g) = &self.paths.graph {
            ensure!(g.is_file(), Config, "graph file {} does not exist", g.display());
            let graph = BrainGraph::read(g)?;
            graph
                .region_index(&self.diffusion.seed_region)
                .ok_or_else(|| Error::Config(format!("seed region '{}' is not in the graph", self.diffusion.seed_region)))?;
        } else {
            ensure!(
                BrainGraph::default_graph().region_index(&self.diffusion.seed_region).is_some(),
                Config,
                "seed region '{}' is not in the bundled graph",
                self.diffusion.seed_region
            );
        }
        Ok(())
    }

    pub fn cohort_manifest(&self) -> PathBuf {
        self.paths
            .cohort
            .clone()
            .unwrap_or_else(|| self.paths.out.join("cohort").join("manifest.json"))
    }

    pub fn graph(&self) -> Result<BrainGraph> {
        match &self.paths.graph {
            Some(p) => BrainGraph::read(p),
            None => Ok(BrainGraph::default_graph()),
        }
    }

    pub fn extractor_spec(&self) -> ExtractorSpec {
        ExtractorSpec {
            d_model: self.model.d_model,
            ..ExtractorSpec::default()
        }
    }

    /// Loss weights for the stroke head (`with_stroke`) or the SUDEP head.
    pub fn loss_weights(&self, with_stroke: bool) -> Result<LossWeights> {
        let stroke = if with_stroke { self.loss.lambda_stroke } else { 0.0 };
        LossWeights::new(self.loss.lambda_att, stroke, self.loss.entropy_sign)
    }

    pub fn diffusion_params(&self) -> Result<DiffusionParams> {
        let d = &self.diffusion;
        DiffusionParams::new(FractionalOrder::new(d.alpha)?, d.beta, d.gamma)
    }

    pub fn stroke_params(&self) -> Result<DiffusionParams> {
        let d = &self.diffusion;
        DiffusionParams::new(FractionalOrder::new(self.stroke.alpha)?, d.beta, d.gamma)
    }

    pub fn risk_weight_vector(&self) -> Vec<f64> {
        BIOMARKERS.iter().map(|b| self.risk_weights[*b]).collect()
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) => Error::Config(m),
        other => other,
    }
}
