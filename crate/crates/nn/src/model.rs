use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layers::{Layer, LayerSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spatial {
    /// Input `(channels, n)`, handled internally as `(channels, 1, n)`.
    OneD,
    /// Input `(channels, n, n)`.
    TwoD,
}

/// Parameters of the tabulated classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub spatial: Spatial,
    pub in_channels: usize,
    pub n: usize,
    /// 1 for the binary head, 3 for rank.
    pub outputs: usize,
}

pub const CHANNEL_LADDER: [usize; 5] = [64, 128, 256, 512, 512];
pub const HIDDEN: usize = 256;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const DROPOUT: f64 = 0.5;

impl Arch {
    /// Per-sample input shape in internal `(C, H, W)` form.
    pub fn input_shape(&self) -> Vec<usize> {
        match self.spatial {
            Spatial::OneD => vec![self.in_channels, 1, self.n],
            Spatial::TwoD => vec![self.in_channels, self.n, self.n],
        }
    }

    /// Five conv/BN/ReLU/pool blocks, GAP, dense 512->256 with BN, ReLU and
    /// dropout, then the output head.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let (kernel, padding, window) = match self.spatial {
            Spatial::OneD => ([1, 3], [0, 1], [1, 2]),
            Spatial::TwoD => ([3, 3], [1, 1], [2, 2]),
        };
        let mut specs = Vec::new();
        let mut c = self.in_channels;
        for &out in &CHANNEL_LADDER {
            specs.push(LayerSpec::Conv {
                in_channels: c,
                out_channels: out,
                kernel,
                padding,
            });
            specs.push(LayerSpec::BatchNorm {
                channels: out,
                eps: BN_EPS,
                momentum: BN_MOMENTUM,
            });
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::MaxPool { window });
            c = out;
        }
        specs.extend([
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense {
                inputs: c,
                outputs: HIDDEN,
            },
            LayerSpec::BatchNorm {
                channels: HIDDEN,
                eps: BN_EPS,
                momentum: BN_MOMENTUM,
            },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: DROPOUT },
            LayerSpec::Dense {
                inputs: HIDDEN,
                outputs: self.outputs,
            },
        ]);
        specs
    }
}

/// A feed-forward stack of layers.
#[derive(Debug, Clone)]
pub struct Sequential<T> {
    input_shape: Vec<usize>,
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    /// Builds and initialises a model; `seed` fixes the weights and dropout streams.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        for spec in specs {
            shape = spec.output_shape(&shape)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Sequential {
            input_shape: input_shape.to_vec(),
            layers: specs.iter().map(|s| Layer::from_spec(s, &mut rng)).collect(),
        })
    }

    pub fn table_cnn(arch: &Arch, seed: u64) -> Result<Self> {
        Self::new(&arch.input_shape(), &arch.layer_specs(), seed)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Output shape (without batch) after every layer.
    pub fn shape_ladder(&self) -> Vec<(&'static str, Vec<usize>)> {
        let mut shape = self.input_shape.clone();
        self.specs()
            .iter()
            .map(|s| {
                shape = s.output_shape(&shape).expect("validated at construction");
                (s.name(), shape.clone())
            })
            .collect()
    }

    pub fn output_len(&self) -> usize {
        self.shape_ladder()
            .last()
            .map_or(self.input_shape.iter().product(), |(_, s)| s.iter().product())
    }

    /// Accepts any batch whose items have as many elements as the input shape.
    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let per: usize = self.input_shape.iter().product();
        if x.shape.is_empty() || x.item_len() != per {
            return Err(NnError::Shape {
                layer: "input",
                expected: self.input_shape.clone(),
                got: x.shape.get(1..).unwrap_or_default().to_vec(),
            });
        }
        let mut shape = vec![x.batch()];
        shape.extend_from_slice(&self.input_shape);
        let mut h = Tensor::from_vec(&shape, x.data);
        for layer in &mut self.layers {
            h = layer.forward(h, mode)?;
        }
        Ok(h)
    }

    /// Backpropagates `grad` (gradient of the loss w.r.t. the output),
    /// accumulating parameter gradients. Returns the input gradient when asked.
    pub fn backward(&mut self, grad: Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let mut g = grad;
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            match layer.backward(g, i > 0 || need_input_grad)? {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(need_input_grad.then_some(g))
    }

    pub fn zero_grad(&mut self) {
        for (_, g) in self.params_mut() {
            g.fill(T::zero());
        }
    }

    pub fn params_mut(&mut self) -> Vec<(&mut Vec<T>, &mut Vec<T>)> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Conv(c) => vec![c.weight.len(), c.bias.len()],
                Layer::BatchNorm(b) => vec![b.gamma.len(), b.beta.len()],
                Layer::Dense(d) => vec![d.weight.len(), d.bias.len()],
                _ => Vec::new(),
            })
            .sum()
    }

    pub fn clear_cache(&mut self) {
        for l in &mut self.layers {
            l.clear_cache();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_2d() {
        for (n, last) in [(100, 3), (200, 6), (300, 9)] {
            let arch = Arch {
                spatial: Spatial::TwoD,
                in_channels: 2,
                n,
                outputs: 1,
            };
            let m: Sequential<f32> = Sequential::table_cnn(&arch, 0).unwrap();
            let pools: Vec<Vec<usize>> = m
                .shape_ladder()
                .into_iter()
                .filter(|(name, _)| *name == "maxpool")
                .map(|(_, s)| s)
                .collect();
            let expected: Vec<Vec<usize>> = (1..=5).map(|k| vec![CHANNEL_LADDER[k - 1], n >> k, n >> k]).collect();
            assert_eq!(pools, expected);
            assert_eq!(pools[4], vec![512, last, last]);
            assert_eq!(m.output_len(), 1);
        }
    }

    #[test]
    fn ladder_1d() {
        let arch = Arch {
            spatial: Spatial::OneD,
            in_channels: 1,
            n: 100,
            outputs: 3,
        };
        let m: Sequential<f32> = Sequential::table_cnn(&arch, 0).unwrap();
        let ladder = m.shape_ladder();
        assert_eq!(ladder[3].1, vec![64, 1, 50]);
        assert_eq!(ladder[19].1, vec![512, 1, 3]);
        assert_eq!(ladder[20].1, vec![512]);
        assert_eq!(ladder.last().unwrap().1, vec![3]);
    }

    #[test]
    fn same_seed_same_weights() {
        let arch = Arch {
            spatial: Spatial::OneD,
            in_channels: 1,
            n: 40,
            outputs: 1,
        };
        let mut a: Sequential<f32> = Sequential::table_cnn(&arch, 5).unwrap();
        let mut b: Sequential<f32> = Sequential::table_cnn(&arch, 5).unwrap();
        let mut c: Sequential<f32> = Sequential::table_cnn(&arch, 6).unwrap();
        let pa: Vec<Vec<f32>> = a.params_mut().into_iter().map(|(p, _)| p.clone()).collect();
        let pb: Vec<Vec<f32>> = b.params_mut().into_iter().map(|(p, _)| p.clone()).collect();
        let pc: Vec<Vec<f32>> = c.params_mut().into_iter().map(|(p, _)| p.clone()).collect();
        assert_eq!(pa, pb);
        assert_ne!(pa, pc);
    }

    #[test]
    fn rejects_wrong_input() {
        let arch = Arch {
            spatial: Spatial::TwoD,
            in_channels: 2,
            n: 32,
            outputs: 1,
        };
        let mut m: Sequential<f32> = Sequential::table_cnn(&arch, 0).unwrap();
        assert!(m.forward(Tensor::zeros(&[2, 2, 31, 32]), Mode::Eval).is_err());
        assert_eq!(
            m.forward(Tensor::zeros(&[2, 2, 32, 32]), Mode::Eval).unwrap().shape,
            vec![2, 1]
        );
    }
}
