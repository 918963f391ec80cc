//! Times one training step of the tabulated classifier.
//!
//! `cargo run --release -p ectwist-nn --example throughput -- 2d 100 64`

use std::time::Instant;

use ectwist_nn::loss::weighted_bce_with_logits;
use ectwist_nn::{Adam, AdamConfig, Arch, Mode, Sequential, Spatial, Tensor};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let spatial = match args.get(1).map(String::as_str) {
        Some("1d") => Spatial::OneD,
        _ => Spatial::TwoD,
    };
    let n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100);
    let batch: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(64);
    let arch = Arch {
        spatial,
        in_channels: if spatial == Spatial::TwoD { 2 } else { 1 },
        n,
        outputs: 1,
    };
    let mut model: Sequential<f32> = Sequential::table_cnn(&arch, 0).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    let per: usize = arch.input_shape().iter().product();
    let x: Vec<f32> = (0..batch * per).map(|i| ((i * 7919) % 255) as f32 / 255.0).collect();
    let labels: Vec<f64> = (0..batch).map(|i| (i % 2) as f64).collect();
    for step in 0..3 {
        let t = Instant::now();
        let mut shape = vec![batch];
        shape.extend(arch.input_shape());
        let out = model.forward(Tensor::from_vec(&shape, x.clone()), Mode::Train).unwrap();
        let t_fwd = t.elapsed();
        let (loss, g) = weighted_bce_with_logits(&out, &labels, 3.0);
        model.zero_grad();
        model.backward(g, false).unwrap();
        adam.step(model.params_mut()).unwrap();
        let total = t.elapsed();
        println!(
            "step {step}: loss {loss:.4} ({:x}) forward {:.3}s total {:.3}s ({:.2} ms/sample)",
            loss.to_bits(),
            t_fwd.as_secs_f64(),
            total.as_secs_f64(),
            1e3 * total.as_secs_f64() / batch as f64
        );
    }
}
