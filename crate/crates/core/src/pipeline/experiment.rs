//! Experiment orchestration: preprocess, base augmentation, patient split,
//! training with online augmentation, test evaluation, Grad-CAM export and
//! sweep summaries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::RunConfig;
use super::manifest::{load_manifest, Sample, NUM_GRADES};
use super::preprocess::{load_preprocessed, sanitize};
use super::split::split_indices;
use crate::augment::{apply_condition, AugmentationCondition, ConditionName};
use crate::error::{Error, Result};
use crate::gradcam::{compute_gradcam, render_overlay};
use crate::imagecore::{save_rgb_png, GrayImage};
use crate::metrics::{confusion, prf1, roc_one_vs_all, ConfusionMatrix, MetricsReport, RocCurve};
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint};
use crate::nn::{
    argmax, compound_scale, predict_proba, standard_architecture, train, LabeledImage, LayerStack,
    TrainConfig, TrainState, TrainingLog,
};
use crate::seed::{derive_seed, fnv1a};

const OFFLINE_STREAM: u64 = 0x4f46_464c;

/// Preprocessed images and the patient split, shared by every condition of
/// a sweep.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub samples: Vec<Sample>,
    pub images: Vec<GrayImage>,
    /// Sample indices of the train, validation and test splits.
    pub split: [Vec<usize>; 3],
    pub inverted: usize,
}

pub fn prepare(cfg: &RunConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let samples = load_manifest(&cfg.manifest).map_err(|e| e.in_step("load_manifest"))?;
    let (images, inverted) = load_preprocessed(&samples).map_err(|e| e.in_step("preprocess"))?;
    log::info!(
        "preprocess: inverted {inverted} negative-channel images out of {}",
        samples.len()
    );
    let split =
        split_indices(&samples, cfg.fractions, cfg.split_seed).map_err(|e| e.in_step("split"))?;
    Ok(PreparedData {
        samples,
        images,
        split,
        inverted,
    })
}

/// Base-augmented images of one split with the sample index each came from.
#[derive(Clone, Debug)]
pub struct AugmentedSplit {
    pub items: Vec<LabeledImage>,
    pub origins: Vec<usize>,
}

fn knee_id(s: &Sample) -> u64 {
    fnv1a(s.knee_key().as_bytes())
}

/// Applies `condition` to every sample in `indices`. Each knee gets its own
/// seed stream and each output piece its own online-augmentation identity.
pub fn augment_split(
    prep: &PreparedData,
    indices: &[usize],
    condition: ConditionName,
    cfg: &RunConfig,
) -> Result<AugmentedSplit> {
    let pieces: Vec<Vec<(usize, LabeledImage)>> = indices
        .par_iter()
        .map(|&i| {
            let s = &prep.samples[i];
            let id = knee_id(s);
            let cond = AugmentationCondition {
                name: condition,
                roi: cfg.roi,
                seed: derive_seed(cfg.augment_seed, &[OFFLINE_STREAM, id]),
            };
            let outs = apply_condition(&prep.images[i], &cond)?;
            Ok(outs
                .into_iter()
                .enumerate()
                .map(|(j, image)| {
                    (
                        i,
                        LabeledImage {
                            image,
                            label: s.kl_grade as usize,
                            sample_id: derive_seed(id, &[j as u64]),
                        },
                    )
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let (origins, items) = pieces.into_iter().flatten().unzip();
    Ok(AugmentedSplit { items, origins })
}

pub fn build_network(cfg: &RunConfig) -> Result<LayerStack> {
    let dims = compound_scale(&cfg.scaling);
    let blocks = standard_architecture(&dims, NUM_GRADES);
    LayerStack::from_blocks(
        (1, dims.resolution, dims.resolution),
        &blocks,
        cfg.init_seed,
    )
}

pub fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        optimizer: cfg.optimizer,
        policy: cfg.policy,
        order_seed: cfg.order_seed,
        augment_seed: cfg.augment_seed,
        patience: (cfg.patience > 0).then_some(cfg.patience),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub probabilities: Vec<Vec<f64>>,
    pub predictions: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    /// `None` for classes absent from (or covering all of) the test set.
    pub rocs: Vec<Option<RocCurve>>,
}

pub fn evaluate_items(
    net: &LayerStack,
    items: &[LabeledImage],
    batch_size: usize,
) -> Result<Evaluation> {
    let images: Vec<&GrayImage> = items.iter().map(|s| &s.image).collect();
    let truth: Vec<usize> = items.iter().map(|s| s.label).collect();
    let probabilities = predict_proba(net, &images, batch_size)?;
    let predictions: Vec<usize> = probabilities.iter().map(|p| argmax(p)).collect();
    let cm = confusion(&truth, &predictions, NUM_GRADES)?;
    let metrics = prf1(&cm)?;
    let rocs = (0..NUM_GRADES)
        .map(|k| match roc_one_vs_all(&probabilities, &truth, k) {
            Ok(r) => Ok(Some(r)),
            Err(Error::DegenerateClass(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok(Evaluation {
        probabilities,
        predictions,
        confusion: cm,
        metrics,
        rocs,
    })
}

/// One row of a metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub condition: String,
    pub kind: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub const SUMMARY_HEADER: &str = "condition,kind,accuracy,precision,recall,f1";

impl SummaryRow {
    pub fn new(condition: ConditionName, m: &MetricsReport) -> Self {
        Self {
            condition: condition.to_string(),
            kind: condition.kind().to_string(),
            accuracy: m.accuracy,
            precision: m.macro_precision,
            recall: m.macro_recall,
            f1: m.macro_f1,
        }
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            self.condition, self.kind, self.accuracy, self.precision, self.recall, self.f1
        )
    }
}

/// Accuracy descending, ties broken by condition name.
pub fn sort_rows(rows: &mut [SummaryRow]) {
    rows.sort_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then_with(|| a.condition.cmp(&b.condition))
    });
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    rows.iter().for_each(|r| {
        let _ = writeln!(s, "{}", r.to_csv_line());
    });
    s
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub condition: ConditionName,
    pub row: SummaryRow,
    pub evaluation: Evaluation,
    pub log: TrainingLog,
    pub state: TrainState,
    /// Image counts after base augmentation: train, validation, test.
    pub sizes: [usize; 3],
    pub run_dir: PathBuf,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Runs one condition on prepared data and writes its report into
/// `cfg.output_dir`.
pub fn run_prepared(prep: &PreparedData, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let eval_condition = if cfg.augment_eval {
        cfg.condition
    } else {
        ConditionName::Baseline
    };
    let augment = |split: usize, cond| {
        augment_split(prep, &prep.split[split], cond, cfg).map_err(|e| e.in_step("augment"))
    };
    let train_set = augment(0, cfg.condition)?;
    let val_set = augment(1, eval_condition)?;
    let test_set = augment(2, eval_condition)?;
    let sizes = [
        train_set.items.len(),
        val_set.items.len(),
        test_set.items.len(),
    ];
    log::info!("{}: train/val/test images {sizes:?}", cfg.condition);

    let net = build_network(cfg).map_err(|e| e.in_step("build_network"))?;
    let (state, log) = train(net, &train_set.items, &val_set.items, &train_config(cfg))
        .map_err(|e| e.in_step("train"))?;
    let evaluation = evaluate_items(&state.net, &test_set.items, cfg.batch_size)
        .map_err(|e| e.in_step("evaluate"))?;
    let row = SummaryRow::new(cfg.condition, &evaluation.metrics);

    write_reports(cfg, prep, &evaluation, &log, &row, sizes)
        .map_err(|e| e.in_step("write_reports"))?;
    save_checkpoint(&dir.join("checkpoint.bin"), &state).map_err(|e| e.in_step("write_reports"))?;
    write_gradcams(cfg, prep, &state.net, &test_set, &evaluation)
        .map_err(|e| e.in_step("gradcam"))?;
    Ok(RunOutcome {
        condition: cfg.condition,
        row,
        evaluation,
        log,
        state,
        sizes,
        run_dir: dir.clone(),
    })
}

fn write_reports(
    cfg: &RunConfig,
    prep: &PreparedData,
    ev: &Evaluation,
    log: &TrainingLog,
    row: &SummaryRow,
    sizes: [usize; 3],
) -> Result<()> {
    let dir = &cfg.output_dir;
    write(
        &dir.join("metrics.csv"),
        format!("{SUMMARY_HEADER}\n{}\n", row.to_csv_line()),
    )?;
    write(&dir.join("per_class.csv"), ev.metrics.to_csv())?;
    write(&dir.join("confusion.csv"), ev.confusion.to_csv())?;
    let mut aucs = String::from("class,auc\n");
    for (k, roc) in ev.rocs.iter().enumerate() {
        match roc {
            Some(r) => {
                write(&dir.join(format!("roc_class{k}.csv")), r.to_csv())?;
                let _ = writeln!(aucs, "{k},{:.6}", r.auc);
            }
            None => {
                let _ = writeln!(aucs, "{k},");
            }
        }
    }
    write(&dir.join("auc.csv"), aucs)?;
    write(&dir.join("training_log.csv"), log.to_csv())?;
    let mut prov = cfg.to_config_string();
    let _ = writeln!(prov, "# averaging = macro");
    let _ = writeln!(
        prov,
        "# samples = {}, inverted = {}",
        prep.samples.len(),
        prep.inverted
    );
    let _ = writeln!(
        prov,
        "# images train/val/test = {}/{}/{}",
        sizes[0], sizes[1], sizes[2]
    );
    let _ = writeln!(prov, "# best_epoch = {}", log.best_epoch);
    write(&dir.join("provenance.cfg"), prov)
}

/// Overlays for the `gradcam_top_n` most confident test images of each
/// predicted class, with a text sidecar per image.
fn write_gradcams(
    cfg: &RunConfig,
    prep: &PreparedData,
    net: &LayerStack,
    test: &AugmentedSplit,
    ev: &Evaluation,
) -> Result<()> {
    if cfg.gradcam_top_n == 0 {
        return Ok(());
    }
    let dir = cfg.output_dir.join("gradcam");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for class in 0..NUM_GRADES {
        let mut ranked: Vec<usize> = (0..test.items.len())
            .filter(|&i| ev.predictions[i] == class)
            .collect();
        ranked.sort_by(|&a, &b| {
            ev.probabilities[b][class]
                .total_cmp(&ev.probabilities[a][class])
                .then(a.cmp(&b))
        });
        for (rank, &i) in ranked.iter().take(cfg.gradcam_top_n).enumerate() {
            let item = &test.items[i];
            let cam = compute_gradcam(net, &item.image, class)?;
            let overlay = render_overlay(&cam, &item.image)?;
            let stem = format!("class{class}_rank{:02}", rank + 1);
            save_rgb_png(&overlay, dir.join(format!("{stem}.png")))?;
            let s = &prep.samples[test.origins[i]];
            let sidecar = format!(
                "class = {class}\nconfidence = {:.6}\ncondition = {}\ntrue_class = {}\nknee = {}\n",
                cam.confidence,
                cfg.condition,
                item.label,
                sanitize(&s.knee_key())
            );
            write(&dir.join(format!("{stem}.txt")), sidecar)?;
        }
    }
    Ok(())
}

/// Full single-condition experiment described by `cfg`.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome> {
    let prep = prepare(cfg)?;
    run_prepared(&prep, cfg)
}

#[derive(Debug)]
pub struct SweepReport {
    /// Successful conditions, sorted for the summary.
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<(ConditionName, Error)>,
    pub summary_path: PathBuf,
}

/// Runs every condition with shared seeds into `output_dir/<condition>`
/// and writes `output_dir/summary.csv`. Per-condition failures are
/// collected instead of aborting the sweep.
pub fn run_sweep(cfg: &RunConfig, conditions: &[ConditionName]) -> Result<SweepReport> {
    let prep = prepare(cfg)?;
    let results: Vec<(ConditionName, Result<RunOutcome>)> = conditions
        .par_iter()
        .map(|&condition| {
            let run_cfg = RunConfig {
                condition,
                output_dir: cfg.output_dir.join(condition.as_str()),
                ..cfg.clone()
            };
            (condition, run_prepared(&prep, &run_cfg))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (condition, r) in results {
        match r {
            Ok(o) => rows.push(o.row),
            Err(e) => {
                log::error!("condition {condition} failed: {e}");
                failures.push((condition, e));
            }
        }
    }
    sort_rows(&mut rows);
    let summary_path = cfg.output_dir.join("summary.csv");
    write(&summary_path, summary_csv(&rows))?;
    if !failures.is_empty() {
        let text: String = failures
            .iter()
            .map(|(c, e)| format!("{c},{}\n", e.to_string().replace('\n', " ")))
            .collect();
        write(
            &cfg.output_dir.join("failures.csv"),
            format!("condition,error\n{text}"),
        )?;
    }
    Ok(SweepReport {
        rows,
        failures,
        summary_path,
    })
}

/// Rebuilds `summary.csv` from the `metrics.csv` of every run directory
/// directly under `dir`.
pub fn report(dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path().join("metrics.csv")))
        .collect();
    paths.sort();
    for path in paths.into_iter().filter(|p| p.is_file()) {
        let mut reader = csv::Reader::from_path(&path)
            .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line: 2,
                        message: format!("{}: bad column {i}", path.display()),
                    })
            };
            rows.push(SummaryRow {
                condition: rec.get(0).unwrap_or_default().to_string(),
                kind: rec.get(1).unwrap_or_default().to_string(),
                accuracy: num(2)?,
                precision: num(3)?,
                recall: num(4)?,
                f1: num(5)?,
            });
        }
    }
    sort_rows(&mut rows);
    write(&dir.join("summary.csv"), summary_csv(&rows))?;
    Ok(rows)
}

/// Re-evaluates a finished run from its provenance and checkpoint.
pub fn evaluate_run(run_dir: &Path) -> Result<Evaluation> {
    let cfg = RunConfig::load(&run_dir.join("provenance.cfg"))?;
    let state = load_checkpoint(&run_dir.join("checkpoint.bin"))?;
    let prep = prepare(&cfg)?;
    let condition = if cfg.augment_eval {
        cfg.condition
    } else {
        ConditionName::Baseline
    };
    let test = augment_split(&prep, &prep.split[2], condition, &cfg)?;
    evaluate_items(&state.net, &test.items, cfg.batch_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(c: &str, acc: f64) -> SummaryRow {
        SummaryRow {
            condition: c.into(),
            kind: "positive".into(),
            accuracy: acc,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        }
    }

    #[test]
    fn rows_sort_by_accuracy_then_name() {
        let mut rows = vec![row("roi", 0.5), row("cube2", 0.7), row("baseline", 0.5)];
        sort_rows(&mut rows);
        let names: Vec<_> = rows.iter().map(|r| r.condition.as_str()).collect();
        assert_eq!(names, ["cube2", "baseline", "roi"]);
        assert!(summary_csv(&rows)
            .starts_with("condition,kind,accuracy,precision,recall,f1\ncube2,positive,0.700000"));
    }
}
