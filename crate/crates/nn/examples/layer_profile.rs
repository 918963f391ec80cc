//! Per-layer forward/backward timings of the 2-d classifier.
//!
//! `cargo run --release -p ectwist-nn --example layer_profile -- 100 64`

use std::time::Instant;

use ectwist_nn::{Arch, Mode, Sequential, Spatial, Tensor};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let batch: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(64);
    let arch = Arch {
        spatial: Spatial::TwoD,
        in_channels: 2,
        n,
        outputs: 1,
    };
    let mut model: Sequential<f32> = Sequential::table_cnn(&arch, 0).unwrap();
    let mut shape = vec![batch];
    shape.extend(arch.input_shape());
    let per: usize = arch.input_shape().iter().product();
    let mut h = Tensor::from_vec(
        &shape,
        (0..batch * per).map(|i| ((i * 7919) % 255) as f32 / 255.0).collect(),
    );
    let mut fwd = Vec::new();
    for layer in &mut model.layers {
        let t = Instant::now();
        h = layer.forward(h, Mode::Train).unwrap();
        fwd.push(t.elapsed().as_secs_f64());
    }
    let mut g = Tensor::from_vec(&h.shape.clone(), vec![1.0; h.data.len()]);
    let mut bwd = vec![0.0; fwd.len()];
    for (i, layer) in model.layers.iter_mut().enumerate().rev() {
        let t = Instant::now();
        g = layer.backward(g, i > 0).unwrap().unwrap_or_else(|| Tensor::zeros(&[1]));
        bwd[i] = t.elapsed().as_secs_f64();
    }
    for (i, layer) in model.layers.iter().enumerate() {
        println!(
            "{:>2} {:<10} fwd {:.3}s bwd {:.3}s",
            i,
            layer.spec().name(),
            fwd[i],
            bwd[i]
        );
    }
    println!(
        "total fwd {:.3}s bwd {:.3}s",
        fwd.iter().sum::<f64>(),
        bwd.iter().sum::<f64>()
    );
}
