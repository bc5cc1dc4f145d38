//! One-hidden-layer perceptron with `tanh` activation and optional
//! inverted dropout on the hidden layer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{matvec_acc, matvec_t_acc, outer_acc, Tensor};

/// Dropout applied during training forward passes.
#[derive(Debug)]
pub struct Dropout {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

impl Dropout {
    /// Per-unit scale factors: `0` for dropped units, `1/(1−rate)` otherwise.
    pub(crate) fn mask(&mut self, n: usize) -> Option<Vec<f64>> {
        if self.rate <= 0.0 {
            return None;
        }
        let keep = 1.0 - self.rate;
        Some(
            (0..n)
                .map(|_| {
                    if self.rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// `[hidden, input]`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `[output, hidden]`
    pub w2: Tensor,
    /// Output bias. Left out where the outputs feed a softmax across items,
    /// since a shared shift is invisible there.
    pub b2: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    pub input: Vec<f64>,
    /// `tanh` of the hidden pre-activation.
    pub act: Vec<f64>,
    pub mask: Option<Vec<f64>>,
}

impl Mlp {
    pub fn init(input: usize, hidden: usize, output: usize, out_bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let w1 = gaussian(&[hidden, input], 1.0 / (input as f64).sqrt(), rng);
        let w2 = gaussian(&[output, hidden], 1.0 / (hidden as f64).sqrt(), rng);
        Mlp {
            w1,
            b1: Tensor::zeros(&[hidden]),
            w2,
            b2: out_bias.then(|| Tensor::zeros(&[output])),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            w1: Tensor::zeros(self.w1.shape()),
            b1: Tensor::zeros(self.b1.shape()),
            w2: Tensor::zeros(self.w2.shape()),
            b2: self.b2.as_ref().map(|b| Tensor::zeros(b.shape())),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.w1"), &self.w1));
        out.push((format!("{prefix}.b1"), &self.b1));
        out.push((format!("{prefix}.w2"), &self.w2));
        if let Some(b2) = &self.b2 {
            out.push((format!("{prefix}.b2"), b2));
        }
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.w1"), &mut self.w1));
        out.push((format!("{prefix}.b1"), &mut self.b1));
        out.push((format!("{prefix}.w2"), &mut self.w2));
        if let Some(b2) = &mut self.b2 {
            out.push((format!("{prefix}.b2"), b2));
        }
    }

    pub fn forward(&self, x: &[f64], dropout: Option<&mut Dropout>) -> (Vec<f64>, MlpCache) {
        let (h, i, o) = (self.hidden_dim(), self.input_dim(), self.output_dim());
        let mut act = self.b1.values().to_vec();
        matvec_acc(self.w1.values(), h, i, x, &mut act);
        act.iter_mut().for_each(|a| *a = a.tanh());
        let mask = dropout.and_then(|d| d.mask(h));
        let mut out = match &self.b2 {
            Some(b) => b.values().to_vec(),
            None => vec![0.0; o],
        };
        match &mask {
            Some(m) => {
                let dropped: Vec<f64> = act.iter().zip(m).map(|(a, m)| a * m).collect();
                matvec_acc(self.w2.values(), o, h, &dropped, &mut out);
            }
            None => matvec_acc(self.w2.values(), o, h, &act, &mut out),
        }
        let cache = MlpCache {
            input: x.to_vec(),
            act,
            mask,
        };
        (out, cache)
    }

    pub fn infer(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x, None).0
    }

    /// Accumulates parameter gradients into `grad` and returns `d out / d x`.
    pub fn backward(&self, cache: &MlpCache, dout: &[f64], grad: &mut Mlp) -> Vec<f64> {
        let (h, i, o) = (self.hidden_dim(), self.input_dim(), self.output_dim());
        let used: Vec<f64> = match &cache.mask {
            Some(m) => cache.act.iter().zip(m).map(|(a, m)| a * m).collect(),
            None => cache.act.clone(),
        };
        outer_acc(grad.w2.values_mut(), h, dout, &used);
        if let Some(b2) = grad.b2.as_mut() {
            b2.values_mut().iter_mut().zip(dout).for_each(|(g, d)| *g += d);
        }
        let mut dact = vec![0.0; h];
        matvec_t_acc(self.w2.values(), o, h, dout, &mut dact);
        if let Some(m) = &cache.mask {
            dact.iter_mut().zip(m).for_each(|(d, m)| *d *= m);
        }
        let dpre: Vec<f64> = dact.iter().zip(&cache.act).map(|(d, a)| d * (1.0 - a * a)).collect();
        outer_acc(grad.w1.values_mut(), i, &dpre, &cache.input);
        grad.b1.values_mut().iter_mut().zip(&dpre).for_each(|(g, d)| *g += d);
        let mut dx = vec![0.0; i];
        matvec_t_acc(self.w1.values(), h, i, &dpre, &mut dx);
        dx
    }
}

pub(crate) fn gaussian(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let normal = Normal::new(0.0, std).expect("finite standard deviation");
    let mut t = Tensor::zeros(shape);
    t.values_mut().iter_mut().for_each(|v| *v = normal.sample(rng));
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mlp = Mlp::init(3, 5, 2, true, &mut rng);
        let x = [0.2, -0.7, 1.1];
        let dout = [0.3, -1.2];
        let loss = |m: &Mlp, x: &[f64]| -> f64 { m.infer(x).iter().zip(&dout).map(|(a, b)| a * b).sum() };
        let (_, cache) = mlp.forward(&x, None);
        let mut grad = mlp.zeros_like();
        let dx = mlp.backward(&cache, &dout, &mut grad);
        let h = 1e-6;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (loss(&mlp, &xp) - loss(&mlp, &xm)) / (2.0 * h);
            assert!((fd - dx[k]).abs() < 1e-8);
        }
        for idx in [0, 7, 14] {
            let mut p = mlp.clone();
            let mut m = mlp.clone();
            p.w1.values_mut()[idx] += h;
            m.w1.values_mut()[idx] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!((fd - grad.w1.values()[idx]).abs() < 1e-8);
        }
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::init(2, 4, 2, false, &mut rng);
        let mut d = Dropout {
            rate: 0.0,
            rng: ChaCha8Rng::seed_from_u64(3),
        };
        assert_eq!(mlp.forward(&[0.1, 0.2], Some(&mut d)).0, mlp.infer(&[0.1, 0.2]));
    }
}
