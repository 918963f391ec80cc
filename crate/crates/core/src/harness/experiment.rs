//! End-to-end runs: separation (1-d and 2-d), transfer to a higher conductor
//! band, and the rank task.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ectwist_nn::checkpoint;
use ectwist_nn::{Adam, Arch, Sequential, Spatial};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::Config;
use super::dataset::{assemble_1d, assemble_2d, assemble_rank_2d, split, AssemblyReport, LabeledDataset, CURVE};
use super::metrics::{write_accuracy_csv, write_metrics_csv, MetricsRecord};
use super::saliency::{saliency, SaliencyMap};
use super::train::{evaluate, train_loop, Task, TrainConfig};
use crate::characters::enumerate_primitive;
use crate::curve::{read_curves, TraceVector, WeierstrassCurve};
use crate::encode::TwistBasis;
use crate::error::{Error, Result};
use crate::primes::first_primes;
use crate::sampler::{random_dataset_from, RandomTraceVector};

/// First random-vector index used for transfer data, far from the training range.
pub const TRANSFER_FIRST_INDEX: u64 = 1 << 40;

pub fn load_curves(path: &Path) -> Result<Vec<WeierstrassCurve>> {
    read_curves(File::open(path).map_err(|e| Error::io(path, e))?)
}

/// Trace vectors and ranks of the non-CM curves with conductor in `[lo, hi]`.
pub fn band_traces(curves: &[WeierstrassCurve], lo: u64, hi: u64, n: usize) -> Result<Vec<(TraceVector, u32)>> {
    let primes = first_primes(n);
    curves
        .par_iter()
        .filter(|c| (lo..=hi).contains(&c.conductor))
        .map(|c| {
            (!c.is_cm()?)
                .then(|| c.trace_vector_at(&primes).map(|t| (t, c.rank)))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

pub fn twist_basis(n: usize) -> Arc<TwistBasis> {
    Arc::new(TwistBasis::new(&first_primes(n), &enumerate_primitive(n)))
}

/// Everything the runs share: training-band curves, random vectors and the character basis.
pub struct Prepared {
    pub config: Config,
    pub curves: Vec<WeierstrassCurve>,
    pub band: Vec<(TraceVector, u32)>,
    pub random: Vec<RandomTraceVector>,
    pub basis: Arc<TwistBasis>,
}

impl Prepared {
    pub fn new(config: &Config) -> Result<Self> {
        let curves = load_curves(&config.curves)?;
        Prepared::from_curves(config, curves)
    }

    pub fn from_curves(config: &Config, curves: Vec<WeierstrassCurve>) -> Result<Self> {
        config.validate()?;
        let band = band_traces(&curves, config.conductor_min, config.conductor_max, config.n)?;
        let random = random_dataset_from(config.seed, 0, config.random_count, config.n)?;
        Ok(Prepared {
            config: config.clone(),
            curves,
            band,
            random,
            basis: twist_basis(config.n),
        })
    }

    pub fn band_vectors(&self) -> Vec<TraceVector> {
        self.band.iter().map(|(t, _)| t.clone()).collect()
    }

    pub fn binary_dataset(&self, spatial: Spatial) -> Result<(LabeledDataset, AssemblyReport)> {
        let mode = self.config.input_mode()?;
        match spatial {
            Spatial::OneD => assemble_1d(&self.band_vectors(), &self.random, self.config.n, mode),
            Spatial::TwoD => assemble_2d(&self.band_vectors(), &self.random, self.basis.clone(), mode),
        }
    }
}

pub fn arch_for(spatial: Spatial, n: usize, outputs: usize) -> Arch {
    Arch {
        spatial,
        in_channels: match spatial {
            Spatial::OneD => 1,
            Spatial::TwoD => 2,
        },
        n,
        outputs,
    }
}

pub struct Run {
    pub model: Sequential<f32>,
    pub adam: Adam,
    pub data: LabeledDataset,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub records: Vec<MetricsRecord>,
    pub task: Task,
    pub report: AssemblyReport,
}

impl Run {
    pub fn final_test(&self) -> Option<&MetricsRecord> {
        self.records.iter().rev().find(|r| r.split == "test")
    }
}

fn write_file(path: &Path, f: impl FnOnce(BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    f(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_file(path, |w| Ok(serde_json::to_writer_pretty(w, value)?))
}

/// Manifest body shared by every run.
pub fn manifest(config: &Config, extra: Value) -> Value {
    json!({
        "config": config.to_json(),
        "fixed": super::config::FIXED.iter().map(|(k, v)| (k.to_string(), Value::from(*v))).collect::<serde_json::Map<_, _>>(),
        "run": extra,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_and_record(
    config: &Config,
    data: LabeledDataset,
    report: AssemblyReport,
    arch: Arch,
    task: Task,
    out: Option<&Path>,
    tag: &str,
    verbose: bool,
) -> Result<Run> {
    let (train, test) = split(&data.labels, config.train_percent, config.seed);
    let mut model = Sequential::table_cnn(&arch, config.seed)?;
    let mut adam = Adam::new(config.adam());
    let mut tc = TrainConfig::new(task, config.epochs, config.seed ^ 0x5eed);
    tc.batch_size = config.batch_size;
    tc.adam = config.adam();
    tc.verbose = verbose;
    let meta = manifest(
        config,
        json!({
            "tag": tag,
            "arch": arch,
            "task": task,
            "dataset_digest": data.digest(),
            "label_counts": data.label_counts(),
            "train": train.len(),
            "test": test.len(),
            "hasse_violations": report.hasse_violations,
        }),
    );
    let ckpt: Option<PathBuf> = out.map(|d| d.join(format!("{tag}.ckpt")));
    let mut records = Vec::new();
    // resume when a checkpoint of the same run (up to the epoch count) exists
    if let Some(p) = ckpt.as_ref().filter(|p| p.exists()) {
        let ck = checkpoint::load_file(p)?;
        let mut same = meta.clone();
        same["config"]["epochs"] = ck.meta["manifest"]["config"]["epochs"].clone();
        let epoch = ck.meta["epoch"].as_u64().unwrap_or(0) as usize;
        if ck.meta["manifest"] == same && epoch <= config.epochs {
            if let (Some(a), Ok(r)) = (ck.adam, serde_json::from_value(ck.meta["records"].clone())) {
                model = ck.model;
                adam = a;
                records = r;
                tc.completed_epochs = epoch;
                if verbose {
                    eprintln!("resuming {tag} after epoch {epoch}");
                }
            }
        }
    }
    if let Some(dir) = out {
        write_json(&dir.join(format!("{tag}_manifest.json")), &meta)?;
    }
    let write_metrics = |recs: &[MetricsRecord]| -> Result<()> {
        if let Some(dir) = out {
            write_file(&dir.join(format!("{tag}_metrics.csv")), |w| match task {
                Task::Binary { .. } => write_metrics_csv(w, recs),
                Task::Classes { .. } => write_accuracy_csv(w, recs),
            })?;
        }
        Ok(())
    };
    train_loop(
        &mut model,
        &mut adam,
        &data,
        &train,
        &test,
        &tc,
        &mut records,
        |epoch, m, a, recs| {
            if let Some(p) = &ckpt {
                checkpoint::save_file(
                    p,
                    m,
                    Some(a),
                    json!({ "epoch": epoch, "manifest": meta, "records": recs }),
                )?;
            }
            write_metrics(recs)
        },
    )?;
    write_metrics(&records)?;
    Ok(Run {
        model,
        adam,
        data,
        train,
        test,
        records,
        task,
        report,
    })
}

/// Rebuilds the dataset and split of a binary run around a trained model.
pub fn restore_binary(prepared: &Prepared, spatial: Spatial, model: Sequential<f32>) -> Result<Run> {
    let config = &prepared.config;
    let (data, report) = prepared.binary_dataset(spatial)?;
    let (train, test) = split(&data.labels, config.train_percent, config.seed);
    Ok(Run {
        model,
        adam: Adam::new(config.adam()),
        data,
        train,
        test,
        records: Vec::new(),
        task: Task::Binary {
            pos_weight: config.pos_weight,
        },
        report,
    })
}

/// Curve-vs-random classifier in one or two dimensions.
pub fn run_binary(prepared: &Prepared, spatial: Spatial, out: Option<&Path>, verbose: bool) -> Result<Run> {
    let config = &prepared.config;
    let (data, report) = prepared.binary_dataset(spatial)?;
    let tag = match spatial {
        Spatial::OneD => "cnn1d",
        Spatial::TwoD => "cnn2d",
    };
    let task = Task::Binary {
        pos_weight: config.pos_weight,
    };
    train_and_record(
        config,
        data,
        report,
        arch_for(spatial, config.n, 1),
        task,
        out,
        tag,
        verbose,
    )
}

pub struct TransferResult {
    pub in_band: MetricsRecord,
    pub transfer: MetricsRecord,
    pub curves: usize,
    pub random: usize,
    /// No provenance key of the transfer set occurs in the training dataset.
    pub disjoint: bool,
}

/// Evaluates a trained 2-d (or 1-d) run on the transfer band plus fresh random
/// vectors, keeping the training ratio of random vectors to curves.
pub fn transfer_eval(prepared: &Prepared, run: &mut Run, spatial: Spatial) -> Result<TransferResult> {
    let config = &prepared.config;
    let band: Vec<TraceVector> = band_traces(&prepared.curves, config.transfer_min, config.transfer_max, config.n)?
        .into_iter()
        .map(|(t, _)| t)
        .collect();
    let ratio = prepared.random.len() as f64 / prepared.band.len().max(1) as f64;
    let count = (band.len() as f64 * ratio).round() as usize;
    let random = random_dataset_from(config.seed, TRANSFER_FIRST_INDEX, count, config.n)?;
    let mode = config.input_mode()?;
    let (data, _) = match spatial {
        Spatial::OneD => assemble_1d(&band, &random, config.n, mode)?,
        Spatial::TwoD => assemble_2d(&band, &random, prepared.basis.clone(), mode)?,
    };
    let train_keys: std::collections::HashSet<&String> = run.data.keys.iter().collect();
    let disjoint = data.keys.iter().all(|k| !train_keys.contains(k));
    let all: Vec<usize> = (0..data.len()).collect();
    let transfer = evaluate(&mut run.model, &data, &all, run.task, config.batch_size, 0, "transfer")?;
    let in_band = evaluate(
        &mut run.model,
        &run.data,
        &run.test,
        run.task,
        config.batch_size,
        0,
        "test",
    )?;
    Ok(TransferResult {
        in_band,
        transfer,
        curves: band.len(),
        random: random.len(),
        disjoint,
    })
}

pub struct RankRun {
    pub run: Run,
    pub baseline: f64,
    pub saliency: SaliencyMap,
}

/// Three-class rank classifier on twist fields, with saliency on the test split.
pub fn run_rank(prepared: &Prepared, out: Option<&Path>, verbose: bool) -> Result<RankRun> {
    let config = &prepared.config;
    let data = assemble_rank_2d(&prepared.band, prepared.basis.clone(), config.max_rank)?;
    let classes = config.max_rank as usize + 1;
    if let Some(dir) = out {
        write_json(&dir.join("rank_classes.json"), &data.label_counts())?;
    }
    let task = Task::Classes { classes };
    let mut run = train_and_record(
        config,
        data,
        AssemblyReport::default(),
        arch_for(Spatial::TwoD, config.n, classes),
        task,
        out,
        "rank",
        verbose,
    )?;
    let counts = run.data.label_counts();
    let test_counts = {
        let mut c = vec![0usize; classes];
        for &i in &run.test {
            c[run.data.labels[i] as usize] += 1;
        }
        c
    };
    let baseline = *test_counts.iter().max().unwrap_or(&0) as f64 / run.test.len().max(1) as f64;
    let mut map = saliency(
        &mut run.model,
        &run.data,
        &run.test,
        task,
        config.saliency_target()?,
        config.batch_size,
    )?;
    map.epoch = config.epochs;
    if let Some(dir) = out {
        map.export(&dir.join("rank_saliency"))?;
        write_json(
            &dir.join("rank_summary.json"),
            &json!({
                "class_counts": counts,
                "majority_baseline": baseline,
                "final_test": run.final_test(),
                "first_column_ratio": map.first_column_ratio(),
            }),
        )?;
    }
    Ok(RankRun {
        run,
        baseline,
        saliency: map,
    })
}

/// Saliency of a binary model over the genuine curves of its test split.
pub fn curve_saliency(run: &mut Run, config: &Config) -> Result<SaliencyMap> {
    let positives: Vec<usize> = run
        .test
        .iter()
        .copied()
        .filter(|&i| run.data.labels[i] == CURVE)
        .collect();
    let mut map = saliency(
        &mut run.model,
        &run.data,
        &positives,
        run.task,
        config.saliency_target()?,
        config.batch_size,
    )?;
    map.epoch = config.epochs;
    Ok(map)
}
