//! Acceptance suite. Each criterion prints one `criterion N ...: PASS|FAIL` line
//! (written straight to stderr so it shows without `--nocapture`) and then
//! asserts.
//!
//! Criteria 7 to 9 need the full training protocol (three seeds, 20 epochs at
//! N = 100). It runs under `cargo test --test acceptance -- --ignored`, caches
//! per-seed results and resumes from per-epoch checkpoints. The default run
//! judges whatever results are cached and reports the rest as NOT RUN.

use std::f64::consts::{LN_2, PI};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ectwist::characters::{characters_mod, enumerate_primitive};
use ectwist::curve::{read_curves, TraceVector, WeierstrassCurve};
use ectwist::encode::cvtf::{read_dataset, write_dataset};
use ectwist::encode::{
    conductor_matrix, curve_sequence, grey_quantize, read_png, real_sequence, twist_field, write_png, TwistBasis, GREEN,
};
use ectwist::harness::config::Config;
use ectwist::harness::dataset::{assemble_2d, split, InputMode};
use ectwist::harness::experiment::{arch_for, band_traces, run_binary, run_rank, transfer_eval, twist_basis, Prepared};
use ectwist::harness::metrics::Confusion;
use ectwist::harness::saliency::{saliency, SaliencyMap, SaliencyTarget};
use ectwist::harness::train::{train_loop, Task, TrainConfig};
use ectwist::primes::first_primes;
use ectwist::sampler::{random_dataset, sample_theta_counted, vector_rng, ProposalStats};
use ectwist_nn::gradcheck::{self, LossFn};
use ectwist_nn::layers::LayerSpec;
use ectwist_nn::loss::{cross_entropy_with_logits, weighted_bce, weighted_bce_with_logits};
use ectwist_nn::{Adam, AdamConfig, Layer, Mode, Sequential, Spatial, Tensor};
use num_bigint::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion} {name}: {status} ({detail})\n");
    // bypasses the test harness's output capture
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn curves() -> Vec<WeierstrassCurve> {
    let path = workspace().join("data/curves.csv");
    read_curves(std::fs::File::open(&path).expect("data/curves.csv")).unwrap()
}

// ---------------------------------------------------------------- criterion 1

/// `p + 1 - #E(F_p)` by counting every affine `(x, y)` on the reduced model.
fn brute_ap(c: [i64; 5], p: i64) -> i64 {
    let [a1, a2, a3, a4, a6] = c.map(|v| v.rem_euclid(p));
    let mut affine = 0;
    for x in 0..p {
        let rhs = (((x + a2) * x % p + a4) * x % p + a6) % p;
        for y in 0..p {
            let lhs = (y * y + a1 * x % p * y + a3 * y) % p;
            if lhs == rhs {
                affine += 1;
            }
        }
    }
    p - affine
}

#[test]
fn criterion_01_arithmetic_oracle() {
    let start = Instant::now();
    let all = curves();
    let mut chosen: Vec<&WeierstrassCurve> = all.iter().filter(|c| c.coeffs == [0, -1, 1, 0, 0]).take(1).collect();
    let step = all.len() / 19;
    chosen.extend((0..19).map(|i| &all[i * step + 7]));
    assert_eq!(chosen.len(), 20);

    let primes: Vec<u64> = (2..1000u64)
        .filter(|&n| (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0))
        .collect();
    let mut mismatches = Vec::new();
    let mut bad_out_of_range = Vec::new();
    for c in &chosen {
        for &p in &primes {
            let got = c.ap(p).unwrap();
            if got != brute_ap(c.coeffs, p as i64) {
                mismatches.push(format!("{} p={p}", c.label));
            }
            if c.conductor % p == 0 && !(-1..=1).contains(&got) {
                bad_out_of_range.push(format!("{} p={p}", c.label));
            }
        }
    }
    let a11 = chosen[0].ap(11).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = mismatches.is_empty() && bad_out_of_range.is_empty() && a11 == 1 && secs < 60.0;
    report(
        1,
        "arithmetic oracle",
        pass,
        &format!(
            "20 curves x {} primes, {} mismatches, {} bad-prime a_p outside [-1,1], a_11(y^2+y=x^3-x^2) = {a11}, {secs:.1}s",
            primes.len(),
            mismatches.len(),
            bad_out_of_range.len()
        ),
    );
    assert!(pass, "{mismatches:?} {bad_out_of_range:?}");
}

// ---------------------------------------------------------------- criterion 2

fn oracle_discriminant(c: [i64; 5]) -> BigInt {
    let [a1, a2, a3, a4, a6] = c.map(BigInt::from);
    let b2: BigInt = &a1 * &a1 + 4 * &a2;
    let b4: BigInt = 2 * &a4 + &a1 * &a3;
    let b6: BigInt = &a3 * &a3 + 4 * &a6;
    let b8: BigInt = &a1 * &a1 * &a6 + 4 * &a2 * &a6 - &a1 * &a3 * &a4 + &a2 * &a3 * &a3 - &a4 * &a4;
    let b2b2b8: BigInt = &b2 * &b2 * &b8;
    -b2b2b8 - 8 * b4.pow(3) - 27 * &b6 * &b6 + 9 * &b2 * &b4 * &b6
}

fn prime_divisors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

#[test]
fn criterion_02_conductor_consistency() {
    let all = curves();
    let mut exceptions = Vec::new();
    for c in &all {
        let conductor_primes = prime_divisors(c.conductor);
        // production route
        let model_primes = c.discriminant_primes().unwrap();
        // oracle route: every conductor prime divides the discriminant and
        // nothing else is left once they are divided out
        let mut d = oracle_discriminant(c.coeffs);
        let mut oracle_ok = d != BigInt::from(0);
        for &p in &conductor_primes {
            let p = BigInt::from(p);
            oracle_ok &= (&d % &p) == BigInt::from(0);
            while oracle_ok && (&d % &p) == BigInt::from(0) {
                d /= &p;
            }
        }
        oracle_ok &= d == BigInt::from(1) || d == BigInt::from(-1);
        if model_primes != conductor_primes || !oracle_ok {
            exceptions.push(c.label.clone());
        }
    }
    let pass = exceptions.is_empty();
    report(
        2,
        "conductor consistency",
        pass,
        &format!("{} curves, {} exceptions", all.len(), exceptions.len()),
    );
    assert!(pass, "{exceptions:?}");
}

// ---------------------------------------------------------------- criterion 3

/// Semicircle CDF by composite Simpson integration of `(2/pi) sqrt(1 - t^2)`.
fn integrated_cdf(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    let steps = 2000;
    let h = (x + 1.0) / steps as f64;
    let f = |t: f64| 2.0 / PI * (1.0 - t * t).max(0.0).sqrt();
    let mut s = f(-1.0) + f(x);
    for i in 1..steps {
        s += f(-1.0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn criterion_03_sampler_statistics() {
    let start = Instant::now();
    let count = 100_000;
    let mut rng = vector_rng(2024, 0);
    let mut stats = ProposalStats::default();
    let mut xs: Vec<f64> = (0..count)
        .map(|_| sample_theta_counted(&mut rng, &mut stats).unwrap().cos())
        .collect();
    let rate = stats.accepted as f64 / stats.proposals as f64;
    let n = count as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mean_abs = xs.iter().map(|x| x.abs()).sum::<f64>() / n;
    let second = xs.iter().map(|x| x * x).sum::<f64>() / n;
    // E|x| under the semicircle law is 4 / (3 pi)
    let abs_bias = (mean_abs - 4.0 / (3.0 * PI)).abs();
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = integrated_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let pass = (rate - 0.5).abs() <= 0.01
        && mean.abs() < 0.01
        && abs_bias < 0.01
        && (second - 0.25).abs() <= 0.01
        && ks < 0.01
        && secs < 10.0;
    report(
        3,
        "sampler statistics",
        pass,
        &format!(
            "acceptance {rate:.4}, mean {mean:+.4}, |mean |x| - 4/(3pi)| {abs_bias:.4}, E[x^2] {second:.4}, KS {ks:.4}, {secs:.1}s"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 4

fn totient(n: u64) -> u64 {
    (1..=n).filter(|&k| gcd(k, n) == 1).count() as u64
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn moebius(n: u64) -> i64 {
    let ps = prime_divisors(n);
    if ps.iter().any(|p| n.is_multiple_of(p * p)) {
        0
    } else if ps.len().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

fn listing_digest(count: usize) -> String {
    let mut h = Sha256::new();
    for c in enumerate_primitive(count) {
        h.update(format!("{}:{:?}\n", c.modulus(), c.exponents()).as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of the `modulus:exponents` listing of the first 300 primitive characters.
const PRIMITIVE_300_DIGEST: &str = "36853073a1a06b2bc720b3b520eb980a9230358658e7c2751e1f870cd7bb1b3f";

#[test]
fn criterion_04_character_suite() {
    let mut worst = 0.0f64;
    for m in 1..=53u64 {
        for chi in characters_mod(m).unwrap().iter().filter(|c| !c.is_principal()) {
            let s: num_complex::Complex64 = (0..m as i64).map(|a| chi.evaluate_complex(a)).sum();
            worst = worst.max(s.norm());
        }
    }
    let mut count_errors = Vec::new();
    for m in 1..=100u64 {
        let got = characters_mod(m).unwrap().iter().filter(|c| c.is_primitive()).count() as i64;
        let expected: i64 = (1..=m)
            .filter(|d| m % d == 0)
            .map(|d| moebius(m / d) * totient(d) as i64)
            .sum();
        if got != expected {
            count_errors.push((m, got, expected));
        }
    }
    // the listing walks moduli upwards and takes every primitive character of each
    let listing = enumerate_primitive(300);
    let moduli: Vec<u64> = listing.iter().map(|c| c.modulus()).collect();
    let last = *moduli.last().unwrap();
    let listing_ok = moduli.windows(2).all(|w| w[0] <= w[1])
        && (1..last).all(|m| {
            let expected: i64 = (1..=m)
                .filter(|d| m % d == 0)
                .map(|d| moebius(m / d) * totient(d) as i64)
                .sum();
            moduli.iter().filter(|&&x| x == m).count() as i64 == expected
        })
        && listing.iter().all(|c| c.is_primitive());
    let (a, b) = (listing_digest(300), listing_digest(300));
    let pinned = a == PRIMITIVE_300_DIGEST;
    let pass = worst < 1e-9 && count_errors.is_empty() && listing_ok && a == b && pinned;
    report(
        4,
        "character suite",
        pass,
        &format!(
            "max |sum chi| {worst:.2e} over M <= 53, {} primitive-count mismatches for M <= 100, enumerate_primitive(300) up to modulus {last} ordered {listing_ok}, digest {} {}",
            count_errors.len(),
            &a[..16],
            if pinned { "matches pin" } else { "DIFFERS from pin" }
        ),
    );
    assert!(pass, "{count_errors:?} digest {a}");
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_05_encoding_bit_exactness() {
    let n = 100;
    let primes = first_primes(n);
    let all = curves();
    let traces: Vec<TraceVector> = all
        .iter()
        .step_by(37)
        .map(|c| c.trace_vector_at(&primes).unwrap())
        .collect();
    let mut failures = Vec::new();

    // greyscale conductor matrix
    let m = conductor_matrix(&traces).unwrap();
    let grey = grey_quantize(&m);
    let mut zeros = 0;
    let mut max_loss = 0.0f64;
    for (r, t) in traces.iter().enumerate() {
        for (c, (&a, &p)) in t.values.iter().zip(&primes).enumerate() {
            let v = 0.5 - a as f64 / (4.0 * (p as f64).sqrt());
            let px = grey.pixel(c as u32, r as u32)[0];
            if px as f64 != (255.0 * v).floor() {
                failures.push(format!("grey {r},{c}"));
            }
            if a == 0 {
                zeros += 1;
                if px != 127 {
                    failures.push(format!("a_p = 0 at {r},{c} gives {px}"));
                }
            }
            max_loss = max_loss.max(v - px as f64 / 255.0);
        }
    }

    // twist images of curves and of random vectors
    let basis = TwistBasis::new(&primes, &enumerate_primitive(n));
    let real_cols = basis.real_columns();
    let mut images = Vec::new();
    for t in traces.iter().take(40) {
        images.push((twist_field(&curve_sequence(t).unwrap(), &basis).unwrap(), true));
    }
    for r in random_dataset(40, n, 5).unwrap() {
        images.push((twist_field(&real_sequence(&r.tilde_values), &basis).unwrap(), true));
    }
    let mut real_checked = 0;
    for (field, real_input) in &images {
        let img = field.quantized();
        for row in 0..field.rows {
            for col in 0..field.cols {
                let px = img.pixel(col as u32, row as u32);
                if px[1] != GREEN {
                    failures.push(format!("green {row},{col}"));
                }
                for (v, q) in [(field.red_at(row, col), px[0]), (field.blue_at(row, col), px[2])] {
                    if q as f64 != (255.0 * v).floor() {
                        failures.push(format!("twist quantisation {row},{col}"));
                    }
                    max_loss = max_loss.max(v - q as f64 / 255.0);
                }
            }
            for &col in &real_cols {
                if *real_input && basis.values[row * field.cols + col].norm() != 0.0 {
                    real_checked += 1;
                    if px_blue(&img, row, col) != 127 {
                        failures.push(format!("real column {col} row {row} blue {}", px_blue(&img, row, col)));
                    }
                }
            }
        }
    }

    // CVTF round trip
    let (shape, values) = images[0].0.to_tensor();
    let mut all_values = values.clone();
    all_values.extend(images[41].0.to_tensor().1);
    let labels = [1u8, 0];
    let dims = [shape[0] as u16, shape[1] as u16, shape[2] as u16];
    let mut bytes = Vec::new();
    write_dataset(&mut bytes, dims, &all_values, &labels).unwrap();
    let back = read_dataset(bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    write_dataset(&mut again, dims, &back.values, &back.labels).unwrap();
    let cvtf_ok = bytes == again
        && back.labels == labels
        && back
            .values
            .iter()
            .zip(&all_values)
            .all(|(a, b)| a.to_bits() == b.to_bits());

    // PNG round trips, grey and RGB
    let mut png_ok = true;
    for img in [grey.clone(), images[0].0.quantized()] {
        let mut buf = Vec::new();
        write_png(&mut buf, &img).unwrap();
        let read = read_png(std::io::Cursor::new(&buf)).unwrap();
        let mut buf2 = Vec::new();
        write_png(&mut buf2, &read).unwrap();
        png_ok &= read == img && buf == buf2;
    }

    let pass = failures.is_empty() && (0.0..1.0 / 255.0).contains(&max_loss) && cvtf_ok && png_ok;
    report(
        5,
        "encoding bit-exactness",
        pass,
        &format!(
            "{} pixel failures, {zeros} a_p = 0 cells, {real_checked} real-character cells, max quantisation loss {:.9} (< 1/255 = {:.9}), CVTF {} PNG {}",
            failures.len(),
            max_loss,
            1.0 / 255.0,
            if cvtf_ok { "bit-identical" } else { "MISMATCH" },
            if png_ok { "bit-identical" } else { "MISMATCH" }
        ),
    );
    assert!(pass, "{:?}", &failures[..failures.len().min(10)]);
}

fn px_blue(img: &ectwist::encode::Image, row: usize, col: usize) -> u8 {
    img.pixel(col as u32, row as u32)[2]
}

// ---------------------------------------------------------------- criterion 6

fn conv(cin: usize, cout: usize, twod: bool) -> LayerSpec {
    LayerSpec::Conv {
        in_channels: cin,
        out_channels: cout,
        kernel: if twod { [3, 3] } else { [1, 3] },
        padding: if twod { [1, 1] } else { [0, 1] },
    }
}

fn bn(c: usize) -> LayerSpec {
    LayerSpec::BatchNorm {
        channels: c,
        eps: 1e-5,
        momentum: 0.1,
    }
}

#[test]
fn criterion_06_neural_engine() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let projection = gradcheck::projection(6);
    let bce_labels = vec![1.0, 0.0, 1.0];
    let bce = move |out: &Tensor<f64>| weighted_bce_with_logits(out, &bce_labels, 3.0);
    let ce_classes = vec![0, 2, 1];
    let ce = move |out: &Tensor<f64>| cross_entropy_with_logits(out, &ce_classes);
    type Case<'a> = (&'static str, Vec<usize>, Vec<LayerSpec>, Mode, &'a LossFn<'a>);
    let cases: Vec<Case> = vec![
        (
            "conv 1-d",
            vec![2, 1, 7],
            vec![conv(2, 3, false)],
            Mode::Train,
            &projection,
        ),
        (
            "conv 2-d",
            vec![2, 5, 4],
            vec![conv(2, 3, true)],
            Mode::Train,
            &projection,
        ),
        (
            "batch norm (train)",
            vec![2, 3, 3],
            vec![bn(2)],
            Mode::Train,
            &projection,
        ),
        ("batch norm (eval)", vec![2, 3, 3], vec![bn(2)], Mode::Eval, &projection),
        ("relu", vec![3, 2, 2], vec![LayerSpec::Relu], Mode::Train, &projection),
        (
            "max pool",
            vec![2, 5, 5],
            vec![LayerSpec::MaxPool { window: [2, 2] }],
            Mode::Train,
            &projection,
        ),
        (
            "global average pool",
            vec![2, 3, 4],
            vec![LayerSpec::GlobalAvgPool],
            Mode::Train,
            &projection,
        ),
        (
            "flatten",
            vec![2, 2, 3],
            vec![LayerSpec::Flatten],
            Mode::Train,
            &projection,
        ),
        (
            "dense",
            vec![6],
            vec![LayerSpec::Dense { inputs: 6, outputs: 4 }],
            Mode::Train,
            &projection,
        ),
        (
            "dropout",
            vec![6],
            vec![LayerSpec::Dropout { rate: 0.5 }],
            Mode::Train,
            &projection,
        ),
        (
            "weighted BCE",
            vec![4],
            vec![LayerSpec::Dense { inputs: 4, outputs: 1 }],
            Mode::Train,
            &bce,
        ),
        (
            "cross-entropy",
            vec![4],
            vec![LayerSpec::Dense { inputs: 4, outputs: 3 }],
            Mode::Train,
            &ce,
        ),
    ];
    let mut worst = (0.0f64, "");
    for (name, shape, specs, mode, loss) in &cases {
        let model: Sequential<f64> = Sequential::new(shape, specs, 3).unwrap();
        let mut full = vec![3];
        full.extend(shape);
        let x = gradcheck::random_tensor(&mut rng, &full);
        for e in gradcheck::check(&model, &x, *mode, *loss).unwrap() {
            if e > worst.0 {
                worst = (e, name);
            }
        }
    }

    // shape ladder, against halving with floor
    let mut ladder_ok = true;
    for (n, last) in [(100, 3), (200, 6), (300, 9)] {
        for spatial in [Spatial::OneD, Spatial::TwoD] {
            let arch = arch_for(spatial, n, 1);
            let m: Sequential<f32> = Sequential::table_cnn(&arch, 0).unwrap();
            let pools: Vec<Vec<usize>> = m
                .shape_ladder()
                .into_iter()
                .filter(|(name, _)| *name == "maxpool")
                .map(|(_, s)| s)
                .collect();
            let mut side = n;
            let expected: Vec<Vec<usize>> = [64, 128, 256, 512, 512]
                .iter()
                .map(|&c| {
                    side /= 2;
                    match spatial {
                        Spatial::OneD => vec![c, 1, side],
                        Spatial::TwoD => vec![c, side, side],
                    }
                })
                .collect();
            ladder_ok &= pools == expected && side == last && m.output_len() == 1;
        }
    }

    let bce0 = weighted_bce(0.0, 1.0, 3.0);
    let bce_ok = (bce0 - 3.0 * LN_2).abs() <= 1e-12;
    let pass = worst.0 < 1e-4 && ladder_ok && bce_ok;
    report(
        6,
        "neural engine",
        pass,
        &format!(
            "{} gradient checks, worst relative error {:.2e} ({}), shape ladder N=100/200/300 {}, BCE(0,1,3) - 3 ln 2 = {:.1e}",
            cases.len(),
            worst.0,
            worst.1,
            if ladder_ok { "matches" } else { "MISMATCH" },
            bce0 - 3.0 * LN_2
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 10

fn parse_csv(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn criterion_10_saliency_oracle() {
    // hand-built linear probe: saliency is |w| exactly
    let n = 6;
    let mut probe: Sequential<f32> = Sequential::new(
        &[2, n, n],
        &[
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: 2 * n * n,
                outputs: 1,
            },
        ],
        0,
    )
    .unwrap();
    let w: Vec<f32> = (0..2 * n * n).map(|i| ((i * 7919) % 23) as f32 / 4.0 - 2.5).collect();
    if let Layer::Dense(d) = &mut probe.layers[1] {
        d.weight = w.clone();
    }
    let curves = curves();
    let band: Vec<TraceVector> = band_traces(&curves, 1, 400, n)
        .unwrap()
        .into_iter()
        .map(|(t, _)| t)
        .collect();
    let random = random_dataset(band.len(), n, 10).unwrap();
    let (data, _) = assemble_2d(&band, &random, twist_basis(n), InputMode::AntiLeak).unwrap();
    let task = Task::Binary { pos_weight: 3.0 };
    let idx: Vec<usize> = (0..data.len()).step_by(5).collect();
    let map = saliency(&mut probe, &data, &idx, task, SaliencyTarget::Predicted, 16).unwrap();
    let probe_dev = (0..n * n)
        .map(|i| {
            (map.s_r[i] - w[i].abs() as f64)
                .abs()
                .max((map.s_b[i] - w[n * n + i].abs() as f64).abs())
        })
        .fold(0.0, f64::max);

    // a briefly trained table CNN
    let n = 32;
    let band: Vec<TraceVector> = band_traces(&curves, 1, 300, n)
        .unwrap()
        .into_iter()
        .map(|(t, _)| t)
        .collect();
    let random = random_dataset(band.len(), n, 11).unwrap();
    let (data, _) = assemble_2d(&band, &random, twist_basis(n), InputMode::AntiLeak).unwrap();
    let (train, test) = split(&data.labels, 80, 1);
    let mut model = Sequential::table_cnn(&arch_for(Spatial::TwoD, n, 1), 1).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    let mut cfg = TrainConfig::new(task, 1, 1);
    cfg.batch_size = 16;
    let train: Vec<usize> = train.into_iter().take(160).collect();
    let mut records = Vec::new();
    train_loop(
        &mut model,
        &mut adam,
        &data,
        &train,
        &[],
        &cfg,
        &mut records,
        |_, _, _, _| Ok(()),
    )
    .unwrap();
    let test: Vec<usize> = test.into_iter().take(48).collect();
    let map = saliency(&mut model, &data, &test, task, SaliencyTarget::Predicted, 16).unwrap();
    let nonneg = map.s_r.iter().chain(&map.s_b).all(|&v| v >= 0.0 && v.is_finite());
    let shape_ok = map.rows == n && map.cols == n && map.s_r.len() == n * n && map.s_b.len() == n * n;

    // exported marginals against means computed here
    let dir = tempfile::tempdir().unwrap();
    map.export(dir.path()).unwrap();
    let marg = parse_csv(&std::fs::read_to_string(dir.path().join("saliency_marginals.csv")).unwrap());
    let mut marg_dev = 0.0f64;
    let mean: Vec<f64> = map.s_r.iter().zip(&map.s_b).map(|(r, b)| (r + b) / 2.0).collect();
    for row in &marg {
        let i: usize = row[1].parse().unwrap();
        let cells: Vec<usize> = match row[0].as_str() {
            "prime" => (0..n).map(|c| i * n + c).collect(),
            "twist" => (0..n).map(|r| r * n + i).collect(),
            other => panic!("axis {other}"),
        };
        for (k, plane) in [(2, &map.s_r), (3, &map.s_b), (4, &mean)] {
            let expected = cells.iter().map(|&j| plane[j]).sum::<f64>() / n as f64;
            let got: f64 = row[k].parse().unwrap();
            marg_dev = marg_dev.max((got - expected).abs());
        }
    }
    let marg_count_ok = marg.len() == 2 * n;
    let heatmaps = ["saliency_r.png", "saliency_b.png", "saliency_mean.png"]
        .iter()
        .all(|f| dir.path().join(f).exists());
    let _: &SaliencyMap = &map;
    let pass = probe_dev <= 1e-12 && nonneg && shape_ok && marg_count_ok && marg_dev <= 1e-12 && heatmaps;
    report(
        10,
        "saliency oracle",
        pass,
        &format!(
            "probe deviation {probe_dev:.1e}, trained map {n}x{n} non-negative {nonneg}, marginal deviation {marg_dev:.1e}, heatmaps {heatmaps}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------- criteria 7 to 9

const SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SeedResult {
    seed: u64,
    f1_2d: f64,
    f1_1d: f64,
    in_band_f1: f64,
    transfer_f1: f64,
    transfer_confusion: Vec<Vec<u64>>,
    transfer_curves: usize,
    transfer_random: usize,
    rank_accuracy: f64,
    rank_baseline: f64,
    first_column_ratio: f64,
    hours: f64,
}

fn protocol_dir() -> PathBuf {
    std::env::var_os("ECTWIST_PROTOCOL_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("long-protocol"))
}

fn protocol_config(seed: u64) -> Config {
    Config {
        seed,
        curves: workspace().join("data/curves.csv"),
        ..Config::default()
    }
}

fn result_path(seed: u64) -> PathBuf {
    protocol_dir().join(format!("seed{seed}")).join("result.json")
}

fn cached(seed: u64) -> Option<SeedResult> {
    let text = std::fs::read_to_string(result_path(seed)).ok()?;
    serde_json::from_str(&text).ok()
}

fn run_seed(seed: u64) -> SeedResult {
    if let Some(r) = cached(seed) {
        return r;
    }
    let start = Instant::now();
    let config = protocol_config(seed);
    let dir = protocol_dir().join(format!("seed{seed}"));
    let prepared = Prepared::new(&config).unwrap();
    let f1 = |run: &ectwist::harness::experiment::Run| run.final_test().expect("20 epochs").f1;

    let run_1d = run_binary(&prepared, Spatial::OneD, Some(&dir), true).unwrap();
    let f1_1d = f1(&run_1d);
    drop(run_1d);
    let mut run_2d = run_binary(&prepared, Spatial::TwoD, Some(&dir), true).unwrap();
    let f1_2d = f1(&run_2d);
    let t = transfer_eval(&prepared, &mut run_2d, Spatial::TwoD).unwrap();
    assert!(t.disjoint, "transfer set shares provenance with training data");
    drop(run_2d);
    let rank = run_rank(&prepared, Some(&dir), true).unwrap();
    let acc = rank.run.final_test().expect("20 epochs").accuracy;

    let r = SeedResult {
        seed,
        f1_2d,
        f1_1d,
        in_band_f1: t.in_band.f1,
        transfer_f1: t.transfer.f1,
        transfer_confusion: t.transfer.confusion.counts.clone(),
        transfer_curves: t.curves,
        transfer_random: t.random,
        rank_accuracy: acc,
        rank_baseline: rank.baseline,
        first_column_ratio: rank.saliency.first_column_ratio(),
        hours: start.elapsed().as_secs_f64() / 3600.0,
    };
    std::fs::write(result_path(seed), serde_json::to_string_pretty(&r).unwrap()).unwrap();
    r
}

/// Per-criterion verdicts over whichever seeds have finished. A criterion
/// passes when it holds for at least two of the three seeds.
type Check = (u32, &'static str, fn(&SeedResult) -> bool, fn(&SeedResult) -> String);

fn judge(results: &[SeedResult]) -> [Option<bool>; 3] {
    let checks: [Check; 3] = [
        (
            7,
            "separation trend",
            |r| r.f1_2d >= 0.6 && r.f1_2d - r.f1_1d >= 0.05,
            |r| format!("seed {}: 2-d F1 {:.3}, 1-d F1 {:.3}", r.seed, r.f1_2d, r.f1_1d),
        ),
        (
            8,
            "transfer trend",
            |r| (r.transfer_f1 - r.in_band_f1).abs() <= 0.15,
            |r| {
                format!(
                    "seed {}: in-band F1 {:.3}, transfer F1 {:.3} on {} curves + {} random, confusion {:?}",
                    r.seed, r.in_band_f1, r.transfer_f1, r.transfer_curves, r.transfer_random, r.transfer_confusion
                )
            },
        ),
        (
            9,
            "rank trend",
            |r| r.rank_accuracy >= r.rank_baseline + 0.15 && r.first_column_ratio > 2.0,
            |r| {
                format!(
                    "seed {}: accuracy {:.3} vs baseline {:.3}, column-0 ratio {:.2}",
                    r.seed, r.rank_accuracy, r.rank_baseline, r.first_column_ratio
                )
            },
        ),
    ];
    let mut out = [None; 3];
    for (k, (criterion, name, holds, describe)) in checks.iter().enumerate() {
        let passed = results.iter().filter(|r| holds(r)).count();
        let details: Vec<String> = results
            .iter()
            .map(|r| format!("{} [{}]", describe(r), if holds(r) { "holds" } else { "fails" }))
            .collect();
        let verdict = if passed >= 2 {
            Some(true)
        } else if passed + (SEEDS.len() - results.len()) < 2 {
            Some(false)
        } else {
            None
        };
        let detail = format!("{passed}/{} seeds hold; {}", results.len(), details.join("; "));
        match verdict {
            Some(pass) => report(*criterion, name, pass, &detail),
            None => {
                let line = format!(
                    "criterion {criterion} {name}: NOT RUN (long protocol, {} of {} seeds cached in {}; run `cargo test --test acceptance -- --ignored`){}\n",
                    results.len(),
                    SEEDS.len(),
                    protocol_dir().display(),
                    if results.is_empty() { String::new() } else { format!(" partial: {detail}") }
                );
                let _ = std::io::stderr().write_all(line.as_bytes());
            }
        }
        out[k] = verdict;
    }
    out
}

#[test]
fn criteria_07_to_09_cached_results() {
    let results: Vec<SeedResult> = SEEDS.iter().filter_map(|&s| cached(s)).collect();
    let verdicts = judge(&results);
    assert!(verdicts.iter().all(|v| *v != Some(false)), "{results:?}");
}

#[test]
#[ignore = "full training protocol: many hours on a single core"]
fn criteria_07_to_09_long_protocol() {
    let mut results = Vec::new();
    for seed in SEEDS {
        results.push(run_seed(seed));
        if judge(&results).iter().all(Option::is_some) {
            break;
        }
    }
    let verdicts = judge(&results);
    assert!(verdicts.iter().all(|v| *v == Some(true)), "{results:?}");
}

#[test]
fn confusion_counts_layout() {
    // the transfer report relies on counts[truth][prediction]
    let c = Confusion::from_pairs(2, &[1, 1, 0], &[1, 0, 0]);
    assert_eq!(c.counts, vec![vec![1, 0], vec![1, 1]]);
}
