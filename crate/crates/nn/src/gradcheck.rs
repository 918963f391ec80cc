//! Finite-difference gradient checks (central differences, binary64).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Mode, Sequential};
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-4;

pub type LossFn<'a> = dyn Fn(&Tensor<f64>) -> (f64, Tensor<f64>) + 'a;

/// Below this combined norm a gradient counts as identically zero (for
/// example a conv bias feeding a training-mode batch norm), and the error is
/// measured against the floor instead of the vanishing norm.
pub const NORM_FLOOR: f64 = 1e-6;

/// `|a - n| / (|a| + |n|)` in the Euclidean norm.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(NORM_FLOOR)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// `sum(r * out)` with a fixed random `r`, so every output entry matters.
pub fn projection(seed: u64) -> impl Fn(&Tensor<f64>) -> (f64, Tensor<f64>) {
    move |out: &Tensor<f64>| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = (0..out.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = out.data.iter().zip(&r).map(|(a, b)| a * b).sum();
        (loss, Tensor::from_vec(&out.shape, r))
    }
}

fn loss_of(model: &Sequential<f64>, x: &Tensor<f64>, mode: Mode, loss: &LossFn) -> Result<f64> {
    // a fresh clone per evaluation keeps dropout masks identical
    let mut m = model.clone();
    Ok(loss(&m.forward(x.clone(), mode)?).0)
}

/// Relative errors of every parameter tensor's gradient, then of the input gradient.
pub fn check(model: &Sequential<f64>, x: &Tensor<f64>, mode: Mode, loss: &LossFn) -> Result<Vec<f64>> {
    let mut m = model.clone();
    let out = m.forward(x.clone(), mode)?;
    let (_, g) = loss(&out);
    m.zero_grad();
    let dx = m.backward(g, true)?.expect("input gradient requested");
    let analytic: Vec<Vec<f64>> = m.params_mut().into_iter().map(|(_, g)| g.clone()).collect();

    let mut errors = Vec::new();
    for (t, a) in analytic.iter().enumerate() {
        let mut numeric = Vec::with_capacity(a.len());
        for j in 0..a.len() {
            let mut plus = model.clone();
            plus.params_mut()[t].0[j] += STEP;
            let mut minus = model.clone();
            minus.params_mut()[t].0[j] -= STEP;
            numeric.push((loss_of(&plus, x, mode, loss)? - loss_of(&minus, x, mode, loss)?) / (2.0 * STEP));
        }
        errors.push(rel_err(a, &numeric));
    }
    let mut numeric = Vec::with_capacity(x.data.len());
    for j in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[j] += STEP;
        let mut xm = x.clone();
        xm.data[j] -= STEP;
        numeric.push((loss_of(model, &xp, mode, loss)? - loss_of(model, &xm, mode, loss)?) / (2.0 * STEP));
    }
    errors.push(rel_err(&dx.data, &numeric));
    Ok(errors)
}
