//! The CLI verbs.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use sdae_ivs::data::{gen_synthetic, load_amat, split};
use sdae_ivs::ivs::{run_ivs, IvsResult};
use sdae_ivs::mlr::evaluate;
use sdae_ivs::stack::{count_task_relevant_extractors, fine_tune_with_history, pretrain_all_depths, StackModel};
use sdae_ivs::{Dataset, ErrorReport, Rng};

use crate::artifacts::{history_csv, reconstruction_image, tile_image, write_bytes, write_image, write_json};
use crate::config::{ExperimentConfig, Pipeline};
use crate::report::{DataSummary, HistoryRow, IvsSummary, ResultRow, RunReport};
use crate::CliError;

/// Fork labels of the master seed.
mod streams {
    pub const DATA: u64 = 100;
    pub const PRETRAIN: u64 = 200;
    pub const IVS: u64 = 400;
    pub const PATTERNS: u64 = 500;

    pub fn fine_tune(depth: usize) -> u64 {
        300 + depth as u64
    }
}

pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

impl Splits {
    fn summary(&self) -> DataSummary {
        DataSummary {
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
            num_vars: self.train.num_vars(),
            num_classes: self.train.num_classes(),
        }
    }
}

/// Synthesizes or loads the three splits. Synthetic data depends only on the
/// master seed, so every verb sees the same examples.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Splits, CliError> {
    let (train, valid, test) = if let Some(spec) = &cfg.data.synthetic {
        let mut rng = Rng::new(cfg.seed).fork(streams::DATA);
        let (d, _) = gen_synthetic::<f64>(spec, &mut rng).map_err(CliError::data)?;
        let (a, b, _) = spec.examples_per_split;
        split(&d, a, b).map_err(CliError::data)?
    } else {
        let src = cfg.data.amat.as_ref().expect("validated data source");
        let load = |p: &Path| load_amat::<f64>(cfg.resolve(p), src.label_base).map_err(CliError::data);
        let full = load(&src.train)?;
        let (train, valid) = match (&src.valid, src.split) {
            (Some(v), split_sizes) => {
                let full = match split_sizes {
                    Some((a, _)) => split(&full, a, 0).map_err(CliError::data)?.0,
                    None => full,
                };
                (full, load(v)?)
            }
            (None, Some((a, b))) => {
                let (t, v, _) = split(&full, a, b).map_err(CliError::data)?;
                (t, v)
            }
            (None, None) => unreachable!("validated data source"),
        };
        let mut test = load(&src.test)?;
        if let Some(n) = src.test_limit {
            test = test.slice(0, n.min(test.len()));
        }
        (train, valid, test)
    };
    if train.is_empty() || valid.is_empty() || test.is_empty() {
        return Err(CliError::Data("train, validation and test splits must be non-empty".into()));
    }
    for d in [&valid, &test] {
        if d.num_vars() != train.num_vars() {
            return Err(CliError::Data(format!(
                "splits disagree on width: {} vs {} variables",
                train.num_vars(),
                d.num_vars()
            )));
        }
    }
    let k = train.num_classes().max(valid.num_classes()).max(test.num_classes());
    let finish = |d: Dataset| -> Result<Dataset, CliError> {
        let d = d.with_num_classes(k).map_err(CliError::data)?;
        match cfg.data.image_shape {
            Some(shape) => d.with_variable_shape(shape).map_err(CliError::data),
            None => Ok(d),
        }
    };
    Ok(Splits {
        train: finish(train)?,
        valid: finish(valid)?,
        test: finish(test)?,
    })
}

fn ivs_summary(
    out: &Path,
    cfg: &ExperimentConfig,
    pipeline: Pipeline,
    layer: usize,
    prefix: &str,
    r: &IvsResult<f64>,
    artifacts: &mut Vec<String>,
) -> Result<IvsSummary, CliError> {
    let history_csv_path = write_bytes(out, &format!("{prefix}history.csv"), history_csv(&r.history).as_bytes())?;
    // the first pre-classifier sees every variable
    let first = &r.history[0].importance;
    let importance_csv = write_bytes(out, &format!("{prefix}importance.csv"), first.to_csv().as_bytes())?;
    artifacts.push(history_csv_path.clone());
    artifacts.push(importance_csv.clone());
    let importance_pgm = match (cfg.data.image_shape, layer <= 1) {
        (Some(shape), true) => {
            let img = first.to_image(shape).map_err(CliError::runtime)?;
            let p = write_image(out, &format!("{prefix}importance.pgm"), &img)?;
            artifacts.push(p.clone());
            Some(p)
        }
        _ => None,
    };
    Ok(IvsSummary {
        pipeline,
        layer,
        input_width: r.mask.len(),
        final_popcount: r.mask.popcount(),
        stop: r.stop,
        history: r
            .history
            .iter()
            .map(|s| HistoryRow {
                iteration: s.iteration,
                popcount: s.popcount,
                valid_error: s.valid_error,
            })
            .collect(),
        history_csv: history_csv_path,
        importance_csv,
        importance_pgm,
    })
}

fn error_report(m: &StackModel<f64>, d: &Dataset) -> Result<ErrorReport, CliError> {
    evaluate(|x| m.predict(x), d).map_err(CliError::runtime)
}

fn save_model(out: &Path, rel: &str, m: &StackModel<f64>) -> Result<String, CliError> {
    let bytes = serde_json::to_vec(m).map_err(CliError::runtime)?;
    write_bytes(out, rel, &bytes)
}

pub fn load_model(path: &Path) -> Result<StackModel<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Pre-trains, fine-tunes and evaluates every requested pipeline and depth.
/// Both pipelines draw from the same master streams, so their runs are paired.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let data = load_data(cfg)?;
    let master = Rng::new(cfg.seed);
    let mut depths = cfg.experiment.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    let max_depth = cfg.max_depth();

    let mut results = Vec::new();
    let mut ivs = Vec::new();
    let mut artifacts = Vec::new();

    for &pipeline in &cfg.experiment.pipelines {
        let name = pipeline.name();
        let scfg = cfg.stack_config(max_depth, pipeline.ivs_enabled());
        let pre = pretrain_all_depths(&data.train, &data.valid, &scfg, &master.fork(streams::PRETRAIN))
            .map_err(CliError::runtime)?;
        let deepest = pre.last().expect("depth at least 1");

        for (l, r) in deepest.layer_ivs.iter().enumerate() {
            if let Some(r) = r {
                let prefix = format!("ivs/{name}-layer{}-", l + 1);
                ivs.push(ivs_summary(out, cfg, pipeline, l + 1, &prefix, r, &mut artifacts)?);
            }
        }
        artifacts.push(save_model(out, &format!("models/{name}-pretrained.json"), &deepest.model)?);

        for &depth in &depths {
            let ft = cfg.fine_tune.train_config(master.fork(streams::fine_tune(depth)).next_u64());
            let fit = fine_tune_with_history(&pre[depth - 1].model, &data.train, &data.valid, &ft)
                .map_err(CliError::runtime)?;
            let test = error_report(&fit.model, &data.test)?;
            let model = save_model(out, &format!("models/{name}-depth{depth}.json"), &fit.model)?;
            artifacts.push(model.clone());
            results.push(ResultRow {
                pipeline,
                depth,
                layer_popcounts: fit.model.layers().iter().map(|l| l.mask.popcount()).collect(),
                fine_tune_best_epoch: fit.best_epoch,
                valid: error_report(&fit.model, &data.valid)?,
                test,
                test_percent: test.to_percent_string(),
                model,
            });
        }

        if let Some(shape) = cfg.data.image_shape {
            let rows = deepest.model.layer_patterns(1).map_err(CliError::runtime)?;
            let n = cfg.experiment.pattern_tiles.min(rows.len());
            artifacts.push(write_image(out, &format!("patterns/{name}-layer1.pgm"), &tile_image(&rows[..n], shape)?)?);

            let n = cfg.experiment.reconstruction_examples.min(data.test.len());
            let inputs: Vec<&[f64]> = (0..n).map(|i| data.test.example(i)).collect();
            let img = reconstruction_image(&deepest.model, &inputs, shape)?;
            artifacts.push(write_image(out, &format!("reconstructions/{name}.pgm"), &img)?);
        }
    }

    let mut report = RunReport {
        seed: cfg.seed,
        data: data.summary(),
        results,
        ivs,
        artifacts,
        config: cfg.clone(),
        wall_seconds: 0.0,
    };
    report.artifacts.push(write_bytes(out, "table.csv", report.table_csv().as_bytes())?);
    report.artifacts.push("report.json".into());
    write_json(out, "report.json", &report)?;
    report.wall_seconds = started.elapsed().as_secs_f64();
    write_json(out, "timing.json", &Timing { wall_seconds: report.wall_seconds })?;
    Ok(report)
}

#[derive(Serialize, Deserialize)]
struct Timing {
    wall_seconds: f64,
}

/// Standalone selection on the raw input.
pub fn cmd_ivs(cfg: &ExperimentConfig, out: &Path) -> Result<IvsSummary, CliError> {
    let data = load_data(cfg)?;
    let mut rng = Rng::new(cfg.seed).fork(streams::IVS);
    let r = run_ivs(&data.train, &data.valid, &cfg.ivs.ivs_config(), &mut rng).map_err(CliError::runtime)?;
    let mut artifacts = Vec::new();
    let summary = ivs_summary(out, cfg, Pipeline::SdaeIvs, 0, "", &r, &mut artifacts)?;
    write_json(out, "mask.json", &r.mask)?;
    write_json(out, "ivs.json", &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub valid: ErrorReport,
    pub test: ErrorReport,
    pub test_percent: String,
}

/// Re-evaluates a serialized stack on the configured splits.
pub fn cmd_eval(cfg: &ExperimentConfig, model: &Path) -> Result<EvalReport, CliError> {
    let data = load_data(cfg)?;
    let m = load_model(model)?;
    check_width(&m, &data)?;
    let test = error_report(&m, &data.test)?;
    Ok(EvalReport {
        valid: error_report(&m, &data.valid)?,
        test,
        test_percent: test.to_percent_string(),
    })
}

fn check_width(m: &StackModel<f64>, data: &Splits) -> Result<(), CliError> {
    if m.input_width() != data.train.num_vars() {
        return Err(CliError::Data(format!(
            "model reads {} variables but the data has {}",
            m.input_width(),
            data.train.num_vars()
        )));
    }
    Ok(())
}

fn image_shape(cfg: &ExperimentConfig) -> Result<(usize, usize), CliError> {
    cfg.data
        .image_shape
        .ok_or_else(|| CliError::Config("data.image_shape is required for image output".into()))
}

/// Writes `reconstruction.pgm`: test inputs on the first row, then one row per depth.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, model: &Path, out: &Path) -> Result<String, CliError> {
    let shape = image_shape(cfg)?;
    let data = load_data(cfg)?;
    let m = load_model(model)?;
    check_width(&m, &data)?;
    let n = cfg.experiment.reconstruction_examples.min(data.test.len());
    let inputs: Vec<&[f64]> = (0..n).map(|i| data.test.example(i)).collect();
    write_image(out, "reconstruction.pgm", &reconstruction_image(&m, &inputs, shape)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    pub layer: usize,
    pub threshold: f64,
    pub hidden_units: usize,
    /// Task-relevant feature extractors: hidden units kept by selection on the layer's code.
    pub count: usize,
    pub relevant: Vec<usize>,
    pub irrelevant: Vec<usize>,
    pub images: Vec<String>,
}

/// Splits one layer's hidden units into task-relevant and task-irrelevant
/// extractors and renders their weight patterns (first layer only).
pub fn cmd_export_patterns(
    cfg: &ExperimentConfig,
    model: &Path,
    layer: usize,
    out: &Path,
) -> Result<PatternSummary, CliError> {
    let data = load_data(cfg)?;
    let m = load_model(model)?;
    check_width(&m, &data)?;
    let mut rng = Rng::new(cfg.seed).fork(streams::PATTERNS);
    let c = count_task_relevant_extractors(&m, layer, &data.train, &data.valid, &cfg.ivs.ivs_config(), &mut rng)
        .map_err(|e| match e {
            sdae_ivs::Error::InvalidParameter(msg) => CliError::Config(msg),
            e => CliError::runtime(e),
        })?;
    let mut images = Vec::new();
    if let (Some(shape), 1) = (cfg.data.image_shape, layer) {
        let rows = m.layer_patterns(1).map_err(CliError::runtime)?;
        for (name, set) in [("relevant", &c.relevant), ("irrelevant", &c.irrelevant)] {
            if set.is_empty() {
                continue;
            }
            let picked: Vec<Vec<f64>> = set
                .iter()
                .take(cfg.experiment.pattern_tiles)
                .map(|&q| rows[q].clone())
                .collect();
            images.push(write_image(out, &format!("patterns-{name}.pgm"), &tile_image(&picked, shape)?)?);
        }
    }
    let summary = PatternSummary {
        layer,
        threshold: cfg.ivs.threshold,
        hidden_units: c.ivs.mask.len(),
        count: c.count,
        relevant: c.relevant,
        irrelevant: c.irrelevant,
        images,
    };
    write_json(out, "extractors.json", &summary)?;
    Ok(summary)
}
