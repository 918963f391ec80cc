//! Losses, each returning the batch-mean loss and the gradient w.r.t. the logits.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-[w y log s(l) + (1 - y) log(1 - s(l))]` for one logit.
pub fn weighted_bce(logit: f64, label: f64, pos_weight: f64) -> f64 {
    // -log s(l) = softplus(-l), -log(1 - s(l)) = softplus(l)
    pos_weight * label * softplus(-logit) + (1.0 - label) * softplus(logit)
}

/// Mean weighted BCE over a `(batch, 1)` tensor of logits.
pub fn weighted_bce_with_logits<T: Scalar>(logits: &Tensor<T>, labels: &[f64], pos_weight: f64) -> (f64, Tensor<T>) {
    assert_eq!(logits.data.len(), labels.len());
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&logits.shape);
    for ((g, &l), &y) in grad.data.iter_mut().zip(&logits.data).zip(labels) {
        let l = l.as_f64();
        loss += weighted_bce(l, y, pos_weight);
        let s = sigmoid(l);
        // d/dl = -w y (1 - s) + (1 - y) s
        *g = T::of((-pos_weight * y * (1.0 - s) + (1.0 - y) * s) / n);
    }
    (loss / n, grad)
}

/// `-log softmax(logits)[class]`.
pub fn cross_entropy(logits: &[f64], class: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
    lse - logits[class]
}

/// Mean softmax cross-entropy over a `(batch, classes)` tensor.
pub fn cross_entropy_with_logits<T: Scalar>(logits: &Tensor<T>, classes: &[usize]) -> (f64, Tensor<T>) {
    let k = logits.item_len();
    assert_eq!(logits.batch(), classes.len());
    let n = classes.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&logits.shape);
    for (b, &c) in classes.iter().enumerate() {
        let row: Vec<f64> = logits.item(b).iter().map(|v| v.as_f64()).collect();
        loss += cross_entropy(&row, c);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&l| (l - m).exp()).sum();
        for (j, &l) in row.iter().enumerate() {
            let p = (l - m).exp() / z;
            grad.data[b * k + j] = T::of((p - f64::from(j == c)) / n);
        }
    }
    (loss / n, grad)
}

/// Index of the largest value; the first one on ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
