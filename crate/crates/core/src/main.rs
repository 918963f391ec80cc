use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ectwist::curve::{write_curves, write_traces, TraceVector};
use ectwist::encode::cvtf::{read_dataset_file, CvtfHeader, CvtfWriter};
use ectwist::encode::{quantize, write_png_file, ColorKind, Image, GREEN};
use ectwist::harness::config::Config;
use ectwist::harness::experiment::{
    band_traces, curve_saliency, load_curves, manifest, restore_binary, run_binary, run_rank, transfer_eval,
    write_json, Prepared,
};
use ectwist::harness::metrics::read_metrics_csv;
use ectwist::harness::train::evaluate;
use ectwist::primes::first_primes;
use ectwist::sampler::{random_dataset, RandomManifest};
use ectwist::{Error, Result};
use ectwist_nn::checkpoint;
use ectwist_nn::Spatial;
use serde_json::json;

#[derive(Parser)]
#[command(
    version,
    about = "Elliptic-curve trace and twist datasets, CNN classifiers and saliency maps"
)]
struct Cli {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of primes (and characters): 100, 200 or 300.
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(["100", "200", "300"]))]
    n: Option<String>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Use the continuous surrogate traces for random data, as literally described.
    #[arg(long, global = true)]
    literal_paper_mode: bool,
    /// Any other config key, as `key=value` (repeatable).
    #[arg(long = "set", global = true)]
    set: Vec<String>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dim {
    #[value(name = "1d")]
    One,
    #[value(name = "2d")]
    Two,
}

impl From<Dim> for Spatial {
    fn from(d: Dim) -> Self {
        match d {
            Dim::One => Spatial::OneD,
            Dim::Two => Spatial::TwoD,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a curve CSV (label,conductor,rank,w1,w2,w3,w4,w6) and keep the usable rows.
    IngestCurves { input: PathBuf },
    /// Write a_p for the curves of a conductor band.
    GenTraces {
        #[arg(long)]
        min: Option<u64>,
        #[arg(long)]
        max: Option<u64>,
    },
    /// Draw Sato–Tate surrogate vectors.
    GenRandom {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Export the 1-d dataset as CVTF.
    #[command(name = "build-1d")]
    Build1d,
    /// Export the 2-d twist dataset as CVTF (streamed).
    #[command(name = "build-2d")]
    Build2d,
    /// Train the curve-vs-random classifier.
    Train {
        #[arg(long, value_enum, default_value = "2d")]
        dim: Dim,
    },
    /// Evaluate a checkpoint on the test split of its dataset.
    Evaluate {
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "2d")]
        dim: Dim,
    },
    /// Evaluate a checkpoint on the transfer conductor band plus fresh random data.
    TransferEval {
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "2d")]
        dim: Dim,
    },
    /// Train the three-class rank model and export its saliency.
    Rank,
    /// Saliency of a 2-d binary checkpoint over the genuine curves of its test split.
    Saliency { checkpoint: PathBuf },
    /// Render a CVTF sample or a metrics CSV as PNG.
    Render {
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn config_from(cli: &Cli) -> Result<Config> {
    let mut text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    if let Some(seed) = cli.seed {
        text.push_str(&format!("\nseed = {seed}"));
    }
    if let Some(n) = &cli.n {
        text.push_str(&format!("\nn = {n}"));
    }
    if cli.literal_paper_mode {
        text.push_str("\ninput_mode = literal");
    }
    for kv in &cli.set {
        text.push('\n');
        text.push_str(kv);
    }
    Config::parse(&text)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn ingest(cli: &Cli, input: &Path) -> Result<()> {
    let curves = load_curves(input)?;
    let total = curves.len();
    let (mut kept, mut cm, mut inconsistent, mut singular) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for c in curves {
        match c.conductor_consistent() {
            Err(Error::SingularModel) => singular.push(c.label),
            Err(e) => return Err(e),
            Ok(false) => inconsistent.push(c.label),
            Ok(true) if c.is_cm()? => cm.push(c.label),
            Ok(true) => kept.push(c),
        }
    }
    write_curves(create(&cli.out.join("curves.csv"))?, &kept)?;
    let report = json!({
        "input": input,
        "rows": total,
        "accepted": kept.len(),
        "cm_excluded": cm,
        "conductor_inconsistent": inconsistent,
        "singular": singular,
    });
    write_json(&cli.out.join("ingest_report.json"), &report)?;
    print_json(&json!({ "rows": total, "accepted": kept.len() }));
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<ectwist_nn::Sequential<f32>> {
    Ok(checkpoint::load_file(path)?.model)
}

fn run(cli: Cli) -> Result<()> {
    let config = config_from(&cli)?;
    let out = cli.out.clone();
    match &cli.command {
        Command::IngestCurves { input } => ingest(&cli, input)?,
        Command::GenTraces { min, max } => {
            let curves = load_curves(&config.curves)?;
            let (lo, hi) = (min.unwrap_or(config.conductor_min), max.unwrap_or(config.conductor_max));
            let traces: Vec<TraceVector> = band_traces(&curves, lo, hi, config.n)?
                .into_iter()
                .map(|(t, _)| t)
                .collect();
            let path = out.join(format!("traces_{lo}_{hi}_n{}.csv", config.n));
            write_traces(create(&path)?, &traces)?;
            println!("{} curves -> {}", traces.len(), path.display());
        }
        Command::GenRandom { count } => {
            let count = count.unwrap_or(config.random_count);
            let data = random_dataset(count, config.n, config.seed)?;
            let ints: Vec<TraceVector> = data.iter().map(|r| r.to_trace_vector()).collect();
            write_traces(create(&out.join(format!("random_n{}.csv", config.n)))?, &ints)?;
            let mut w = csv::Writer::from_writer(create(&out.join(format!("random_tilde_n{}.csv", config.n)))?);
            let mut header = vec!["label".to_string()];
            header.extend(first_primes(config.n).iter().map(u64::to_string));
            w.write_record(&header)?;
            for r in &data {
                let mut rec = vec![r.source().key()];
                rec.extend(r.tilde_values.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
            w.flush()?;
            let m = RandomManifest::describe(config.seed, 0, config.n, &data);
            write_json(
                &out.join(format!("random_n{}_manifest.json", config.n)),
                &manifest(&config, serde_json::to_value(&m)?),
            )?;
            print_json(&serde_json::to_value(&m)?);
        }
        Command::Build1d => {
            let prepared = Prepared::new(&config)?;
            let (data, report) = prepared.binary_dataset(Spatial::OneD)?;
            let header = CvtfHeader {
                count: data.len() as u64,
                channels: 1,
                rows: 1,
                cols: config.n as u16,
            };
            let path = out.join(format!("d1d_n{}.cvtf", config.n));
            let mut w = CvtfWriter::new(create(&path)?, header)?;
            for i in 0..data.len() {
                w.push(&data.sample(i)?, data.labels[i])?;
            }
            w.finish()?;
            let meta = json!({ "file": path, "digest": data.digest(), "label_counts": data.label_counts(), "hasse_violations": report.hasse_violations });
            write_json(&path.with_extension("json"), &manifest(&config, meta.clone()))?;
            print_json(&meta);
        }
        Command::Build2d => {
            let prepared = Prepared::new(&config)?;
            let (data, report) = prepared.binary_dataset(Spatial::TwoD)?;
            let header = CvtfHeader {
                count: data.len() as u64,
                channels: 2,
                rows: config.n as u16,
                cols: config.n as u16,
            };
            let path = out.join(format!("d2d_n{}.cvtf", config.n));
            let mut w = CvtfWriter::new(create(&path)?, header)?;
            let mut buf = vec![0.0f32; data.sample_len()];
            for i in 0..data.len() {
                data.fill_sample(i, &mut buf)?;
                w.push(&buf, data.labels[i])?;
            }
            w.finish()?;
            let meta = json!({ "file": path, "digest": data.digest(), "label_counts": data.label_counts(), "hasse_violations": report.hasse_violations });
            write_json(&path.with_extension("json"), &manifest(&config, meta.clone()))?;
            print_json(&meta);
        }
        Command::Train { dim } => {
            let prepared = Prepared::new(&config)?;
            let run = run_binary(&prepared, (*dim).into(), Some(&out), cli.verbose)?;
            print_json(&json!({ "final_test": run.final_test() }));
        }
        Command::Evaluate { checkpoint, dim } => {
            let prepared = Prepared::new(&config)?;
            let mut run = restore_binary(&prepared, (*dim).into(), load_checkpoint(checkpoint)?)?;
            let test = run.test.clone();
            let rec = evaluate(&mut run.model, &run.data, &test, run.task, config.batch_size, 0, "test")?;
            write_json(&out.join("evaluate.json"), &rec)?;
            print_json(&serde_json::to_value(&rec)?);
        }
        Command::TransferEval { checkpoint, dim } => {
            let prepared = Prepared::new(&config)?;
            let mut run = restore_binary(&prepared, (*dim).into(), load_checkpoint(checkpoint)?)?;
            let t = transfer_eval(&prepared, &mut run, (*dim).into())?;
            let v = json!({
                "in_band": t.in_band,
                "transfer": t.transfer,
                "transfer_curves": t.curves,
                "transfer_random": t.random,
                "provenance_disjoint": t.disjoint,
                "band": [config.transfer_min, config.transfer_max],
            });
            write_json(&out.join("transfer.json"), &v)?;
            print_json(&v);
        }
        Command::Rank => {
            let prepared = Prepared::new(&config)?;
            let r = run_rank(&prepared, Some(&out), cli.verbose)?;
            print_json(&json!({
                "final_test": r.run.final_test(),
                "majority_baseline": r.baseline,
                "first_column_ratio": r.saliency.first_column_ratio(),
            }));
        }
        Command::Saliency { checkpoint } => {
            let prepared = Prepared::new(&config)?;
            let mut run = restore_binary(&prepared, Spatial::TwoD, load_checkpoint(checkpoint)?)?;
            let map = curve_saliency(&mut run, &config)?;
            map.export(&out.join("saliency"))?;
            println!(
                "saliency over {} curves -> {}",
                map.samples,
                out.join("saliency").display()
            );
        }
        Command::Render { input, index, output } => {
            let output = output.clone().unwrap_or_else(|| input.with_extension("png"));
            let image = if input.extension().is_some_and(|e| e == "csv") {
                render_metrics(input)?
            } else {
                render_sample(input, *index)?
            };
            write_png_file(&output, &image)?;
            println!("{}", output.display());
        }
    }
    Ok(())
}

/// Train (blue) and test (red) F1 per epoch.
fn render_metrics(path: &Path) -> Result<Image> {
    let rows = read_metrics_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
    let series = |split: &str| {
        rows.iter()
            .filter(|r| r.1 == split)
            .map(|r| r.2[3])
            .collect::<Vec<f64>>()
    };
    Ok(Image::line_plot(
        &[(series("train"), [0, 0, 255]), (series("test"), [255, 0, 0])],
        400,
        300,
    ))
}

/// A 2-channel sample as a 24-bit twist image; a 1-channel one as a grey strip.
fn render_sample(path: &Path, index: usize) -> Result<Image> {
    let data = read_dataset_file(path)?;
    if index >= data.header.count as usize {
        return Err(Error::Format(format!("index {index} out of range")));
    }
    let s = data.sample(index);
    let (rows, cols) = (data.header.rows as usize, data.header.cols as usize);
    match data.header.channels {
        1 => {
            // traces are integers in the Hasse range; map to 1/2 - a/(4 sqrt p)
            let primes = first_primes(cols);
            let px = s
                .iter()
                .zip(primes.iter().cycle())
                .map(|(&a, &p)| quantize(0.5 - a as f64 / (4.0 * (p as f64).sqrt())))
                .collect();
            Ok(Image {
                width: cols as u32,
                height: rows as u32,
                color: ColorKind::Grey,
                data: px,
            })
        }
        2 => {
            let plane = rows * cols;
            let px = (0..plane)
                .flat_map(|i| [quantize(s[i] as f64), GREEN, quantize(s[plane + i] as f64)])
                .collect();
            Ok(Image {
                width: cols as u32,
                height: rows as u32,
                color: ColorKind::Rgb,
                data: px,
            })
        }
        c => Err(Error::Format(format!("cannot render {c} channels"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
