use ectwist_nn::loss::{cross_entropy, weighted_bce};
use ectwist_nn::{LayerSpec, Mode, Sequential, Tensor};
use proptest::prelude::*;

proptest! {
    #[test]
    fn bce_is_nonnegative_and_monotone(z in -30.0f64..30.0, w in 0.1f64..10.0) {
        let pos = weighted_bce(z, 1.0, w);
        let neg = weighted_bce(z, 0.0, w);
        prop_assert!(pos >= 0.0 && neg >= 0.0);
        prop_assert!(weighted_bce(z + 0.5, 1.0, w) <= pos);
        prop_assert!(weighted_bce(z + 0.5, 0.0, w) >= neg);
    }

    #[test]
    fn cross_entropy_is_shift_invariant(logits in prop::collection::vec(-20.0f64..20.0, 2..6), shift in -50.0f64..50.0) {
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        for c in 0..logits.len() {
            prop_assert!((cross_entropy(&logits, c) - cross_entropy(&shifted, c)).abs() < 1e-9);
        }
    }

    #[test]
    fn pool_output_is_floor_half(h in 1usize..12, w in 1usize..12) {
        let mut m: Sequential<f64> = Sequential::new(&[1, h, w], &[LayerSpec::MaxPool { window: [2, 2] }], 0).unwrap();
        let y = m.forward(Tensor::zeros(&[1, 1, h, w]), Mode::Eval);
        if h >= 2 && w >= 2 {
            prop_assert_eq!(y.unwrap().shape, vec![1, 1, h / 2, w / 2]);
        }
    }

    #[test]
    fn relu_output_is_nonnegative(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let n = v.len();
        let mut m: Sequential<f64> = Sequential::new(&[1, 1, n], &[LayerSpec::Relu], 0).unwrap();
        let y = m.forward(Tensor::from_vec(&[1, 1, 1, n], v.clone()), Mode::Eval).unwrap();
        for (a, b) in y.data.iter().zip(&v) {
            prop_assert_eq!(*a, b.max(0.0));
        }
    }
}
