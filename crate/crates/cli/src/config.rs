//! Experiment configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdae_ivs::dae::{Activation, DaeTrainConfig, LossKind};
use sdae_ivs::ivs::IvsConfig;
use sdae_ivs::mlr::TrainConfig;
use sdae_ivs::stack::{LayerConfig, StackConfig};
use sdae_ivs::{LabelBase, SyntheticSpec};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Relative to the config file; `--out` overrides it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub ivs: IvsSection,
    pub dae: DaeSection,
    pub top: TrainSection,
    pub fine_tune: TrainSection,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub amat: Option<AmatSource>,
    /// `(height, width)` for rendering variables as images.
    #[serde(default)]
    pub image_shape: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmatSource {
    pub train: PathBuf,
    pub test: PathBuf,
    /// Separate validation file. Without it, `split` carves train and
    /// validation rows from the front of the training file; with it, only
    /// the first `split[0]` training rows are used.
    #[serde(default)]
    pub valid: Option<PathBuf>,
    #[serde(default)]
    pub split: Option<(usize, usize)>,
    #[serde(default)]
    pub label_base: LabelBase,
    /// Keep only the first rows of the test file.
    #[serde(default)]
    pub test_limit: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Sdae,
    SdaeIvs,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Sdae => "sdae",
            Pipeline::SdaeIvs => "sdae-ivs",
        }
    }

    pub fn ivs_enabled(self) -> bool {
        self == Pipeline::SdaeIvs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    #[serde(default = "default_pipelines")]
    pub pipelines: Vec<Pipeline>,
    /// Test examples shown in the reconstruction grid.
    #[serde(default = "default_reconstructions")]
    pub reconstruction_examples: usize,
    /// Weight rows shown in each pattern image.
    #[serde(default = "default_patterns")]
    pub pattern_tiles: usize,
}

fn default_depths() -> Vec<usize> {
    vec![1]
}

fn default_pipelines() -> Vec<Pipeline> {
    vec![Pipeline::Sdae, Pipeline::SdaeIvs]
}

fn default_reconstructions() -> usize {
    10
}

fn default_patterns() -> usize {
    100
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            depths: default_depths(),
            pipelines: default_pipelines(),
            reconstruction_examples: default_reconstructions(),
            pattern_tiles: default_patterns(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvsSection {
    pub threshold: f64,
    pub max_iterations: usize,
    /// Pre-classifier training.
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    #[serde(default = "one")]
    pub minibatch_size: usize,
    /// Also select hidden units of the last layer before the top classifier.
    #[serde(default)]
    pub top_layer: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaeSection {
    /// One entry per layer; a single entry is used for every layer.
    pub hidden_units: Vec<usize>,
    pub noise_sd: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_decoder")]
    pub decoder: Activation,
}

fn default_loss() -> LossKind {
    LossKind::CrossEntropy
}

fn default_decoder() -> Activation {
    Activation::Sigmoid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    #[serde(default = "one")]
    pub minibatch_size: usize,
    #[serde(default)]
    pub l2: f64,
}

fn one() -> usize {
    1
}

impl TrainSection {
    /// The seed is filled in from the master stream by the caller.
    pub fn train_config(&self, seed: u64) -> TrainConfig<f64> {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            minibatch_size: self.minibatch_size,
            l2: self.l2,
        }
    }
}

impl IvsSection {
    pub fn ivs_config(&self) -> IvsConfig<f64> {
        IvsConfig {
            threshold: self.threshold,
            max_iterations: self.max_iterations,
            mlr: TrainConfig {
                minibatch_size: self.minibatch_size,
                ..TrainConfig::new(self.learning_rate, self.max_epochs, self.patience, 0)
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn max_depth(&self) -> usize {
        self.experiment.depths.iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        match (&self.data.synthetic, &self.data.amat) {
            (Some(s), None) => s.validate().map_err(|e| CliError::Config(e.to_string()))?,
            (None, Some(a)) => {
                if a.valid.is_none() && a.split.is_none() {
                    return bad("data.amat: give either `valid` or `split`".into());
                }
            }
            _ => return bad("data: exactly one of [data.synthetic] or [data.amat] is required".into()),
        }
        if let (Some((h, w)), Some(s)) = (self.data.image_shape, &self.data.synthetic) {
            if h * w != s.num_vars() {
                return bad(format!(
                    "data.image_shape {h}x{w} does not match {} variables",
                    s.num_vars()
                ));
            }
        }
        let e = &self.experiment;
        if e.depths.is_empty() || e.depths.iter().any(|d| !(1..=3).contains(d)) {
            return bad("experiment.depths: each depth must be 1, 2 or 3".into());
        }
        if e.pipelines.is_empty() {
            return bad("experiment.pipelines must not be empty".into());
        }
        let h = &self.dae.hidden_units;
        if h.len() != 1 && h.len() < self.max_depth() {
            return bad(format!(
                "dae.hidden_units has {} entries but depth {} is requested",
                h.len(),
                self.max_depth()
            ));
        }
        self.stack_config(self.max_depth(), true)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    fn hidden_units(&self, layer: usize) -> usize {
        let h = &self.dae.hidden_units;
        h[layer.min(h.len() - 1)]
    }

    /// Stack settings for one pipeline. Seeds for the top and fine-tuning
    /// classifiers are placeholders; the run derives them from the master seed.
    pub fn stack_config(&self, depth: usize, ivs_enabled: bool) -> StackConfig<f64> {
        let ivs = self.ivs.ivs_config();
        StackConfig {
            layers: (0..depth)
                .map(|l| LayerConfig {
                    dae: DaeTrainConfig {
                        hidden_units: self.hidden_units(l),
                        noise_sd: self.dae.noise_sd,
                        learning_rate: self.dae.learning_rate,
                        epochs: self.dae.epochs,
                        loss: self.dae.loss,
                        decoder: self.dae.decoder,
                    },
                    ivs: ivs.clone(),
                })
                .collect(),
            top: self.top.train_config(0),
            fine_tune: self.fine_tune.train_config(0),
            ivs_enabled,
            top_ivs: self.ivs.top_layer.then(|| ivs.clone()),
        }
    }

    /// Rejects hyper-parameters outside the standard candidate grids.
    pub fn check_paper_grid(&self) -> Result<(), CliError> {
        const PRE_CLASSIFIER_LR: [f64; 4] = [0.01, 0.02, 0.05, 0.1];
        const TRAINING_LR: [f64; 4] = [0.01, 0.05, 0.1, 0.2];
        const EPOCHS: [usize; 5] = [60, 120, 180, 240, 300];
        let on_grid = |v: f64, lo: f64, hi: f64| {
            let steps = (v - lo) / 0.05;
            v >= lo - 1e-9 && v <= hi + 1e-9 && (steps - steps.round()).abs() < 1e-6
        };
        let member = |v: f64, set: &[f64]| set.iter().any(|&c| (v - c).abs() < 1e-9);
        let mut errors = Vec::new();
        if !member(self.ivs.learning_rate, &PRE_CLASSIFIER_LR) {
            errors.push(format!("ivs.learning_rate = {} not in {PRE_CLASSIFIER_LR:?}", self.ivs.learning_rate));
        }
        if !on_grid(self.ivs.threshold, 0.2, 0.5) {
            errors.push(format!("ivs.threshold = {} not in 0.2..=0.5 step 0.05", self.ivs.threshold));
        }
        for (name, lr) in [
            ("dae.learning_rate", self.dae.learning_rate),
            ("fine_tune.learning_rate", self.fine_tune.learning_rate),
        ] {
            if !member(lr, &TRAINING_LR) {
                errors.push(format!("{name} = {lr} not in {TRAINING_LR:?}"));
            }
        }
        if !on_grid(self.dae.noise_sd, 0.1, 0.4) {
            errors.push(format!("dae.noise_sd = {} not in 0.1..=0.4 step 0.05", self.dae.noise_sd));
        }
        if !EPOCHS.contains(&self.dae.epochs) {
            errors.push(format!("dae.epochs = {} not in {EPOCHS:?}", self.dae.epochs));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!("--paper-grid: {}", errors.join("; "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3

[data.synthetic]
num_relevant = 4
num_irrelevant = 12
num_classes = 3
class_separation = 3.0
noise_sd = 0.5
examples_per_split = [60, 40, 40]

[ivs]
threshold = 0.3
max_iterations = 5
learning_rate = 0.05
max_epochs = 60
patience = 5

[dae]
hidden_units = [8]
noise_sd = 0.2
learning_rate = 0.05
epochs = 60

[top]
learning_rate = 0.05
max_epochs = 20
patience = 5

[fine_tune]
learning_rate = 0.05
max_epochs = 5
patience = 5
"#;

    fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.experiment.depths, vec![1]);
        assert_eq!(cfg.experiment.pipelines, vec![Pipeline::Sdae, Pipeline::SdaeIvs]);
        assert_eq!(cfg.dae.loss, LossKind::CrossEntropy);
        assert_eq!(cfg.ivs.minibatch_size, 1);
        cfg.check_paper_grid().unwrap();
    }

    #[test]
    fn missing_field_is_named() {
        let text = MINIMAL.replace("threshold = 0.3\n", "");
        let err = parse(&text).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("threshold"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = MINIMAL.replace("patience = 5\n", "patience = 5\nlearnig_rate = 1.0\n");
        assert!(parse(&text).unwrap_err().to_string().contains("learnig_rate"));
    }

    #[test]
    fn paper_grid_rejects_off_grid_values() {
        for (from, to, field) in [
            ("threshold = 0.3", "threshold = 0.33", "ivs.threshold"),
            ("\nepochs = 60", "\nepochs = 50", "dae.epochs"),
            ("noise_sd = 0.2\nlearning_rate = 0.05\nepochs", "noise_sd = 0.45\nlearning_rate = 0.05\nepochs", "dae.noise_sd"),
        ] {
            let cfg = parse(&MINIMAL.replacen(from, to, 1)).unwrap();
            let err = cfg.check_paper_grid().unwrap_err().to_string();
            assert!(err.contains(field), "{err}");
        }
        let mut cfg = parse(MINIMAL).unwrap();
        cfg.ivs.learning_rate = 0.2;
        assert!(cfg.check_paper_grid().is_err());
        cfg.ivs.learning_rate = 0.02;
        cfg.fine_tune.learning_rate = 0.02;
        assert!(cfg.check_paper_grid().unwrap_err().to_string().contains("fine_tune"));
    }

    #[test]
    fn depth_and_width_checks() {
        let text = MINIMAL.replace("seed = 3\n", "seed = 3\n[experiment]\ndepths = [1, 3]\n");
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.stack_config(3, true).layers.len(), 3);
        let text = text.replace("hidden_units = [8]", "hidden_units = [8, 6]");
        assert!(parse(&text).is_err());
        let text = MINIMAL.replace("seed = 3\n", "seed = 3\n[experiment]\ndepths = [4]\n");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn exactly_one_data_source() {
        let text = MINIMAL.replace("[data.synthetic]", "[data.amat]\ntrain = \"a\"\ntest = \"b\"\nsplit = [1, 1]\n[data.synthetic]");
        assert!(parse(&text).is_err());
    }
}
