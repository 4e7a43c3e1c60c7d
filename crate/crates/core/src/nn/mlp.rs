use super::{NnError, Real};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    GaussianMean,
    ScalarValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize, head: Head) -> Result<Self, NnError> {
        if input == 0 || output == 0 || hidden.contains(&0) {
            return Err(NnError::DimMismatch("layer sizes must be positive".into()));
        }
        if head == Head::ScalarValue && output != 1 {
            return Err(NnError::DimMismatch("a value head has one output".into()));
        }
        Ok(Self { input, hidden: hidden.to_vec(), output, head })
    }

    /// `(fan_in, fan_out)` of each affine layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input];
        dims.extend(&self.hidden);
        dims.push(self.output);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Activations recorded by a forward pass; `acts[0]` is the input and the
/// last entry the (linear) output.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    pub acts: Vec<Vec<T>>,
}

impl<T> Tape<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("tape has an output")
    }
}

/// Tanh MLP over a flat parameter slice laid out layer by layer as a
/// row-major `fan_out × fan_in` weight block followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    n_params: usize,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Self {
        let layers = spec.layers();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut n = 0;
        for &(i, o) in &layers {
            offsets.push(n);
            n += i * o + o;
        }
        Self { spec, layers, offsets, n_params: n }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Orthogonal weights (gain 1, last layer `final_gain`) and zero biases.
    pub fn init<R: Rng>(&self, rng: &mut R, final_gain: f64) -> Vec<f64> {
        let mut params = vec![0.0; self.n_params];
        let last = self.layers.len() - 1;
        for (l, &(fan_in, fan_out)) in self.layers.iter().enumerate() {
            let gain = if l == last { final_gain } else { 1.0 };
            let w = orthogonal(fan_out, fan_in, rng);
            let off = self.offsets[l];
            for (k, v) in w.into_iter().enumerate() {
                params[off + k] = gain * v;
            }
        }
        params
    }

    pub fn forward<T: Real>(&self, params: &[T], x: &[T]) -> Result<Tape<T>, NnError> {
        if params.len() < self.n_params {
            return Err(NnError::DimMismatch(format!("{} params for a {}-param net", params.len(), self.n_params)));
        }
        if x.len() != self.spec.input {
            return Err(NnError::DimMismatch(format!("input of {} for a net expecting {}", x.len(), self.spec.input)));
        }
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (l, &(fan_in, fan_out)) in self.layers.iter().enumerate() {
            let off = self.offsets[l];
            let input = &acts[l];
            let bias = off + fan_in * fan_out;
            let mut out = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let row = &params[off + o * fan_in..off + (o + 1) * fan_in];
                let mut z = params[bias + o];
                for (w, a) in row.iter().zip(input) {
                    z += *w * *a;
                }
                out.push(if l == last { z } else { z.tanh() });
            }
            acts.push(out);
        }
        Ok(Tape { acts })
    }

    /// Accumulates `grad_out · ∂output/∂params` into `grad_params`; returns
    /// the gradient with respect to the input.
    pub fn backward<T: Real>(&self, params: &[T], tape: &Tape<T>, grad_out: &[T], grad_params: &mut [T]) -> Vec<T> {
        let mut delta = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let (fan_in, fan_out) = self.layers[l];
            let off = self.offsets[l];
            let bias = off + fan_in * fan_out;
            let input = &tape.acts[l];
            let mut d_in = vec![T::zero(); fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                grad_params[bias + o] += d;
                let row = off + o * fan_in;
                for i in 0..fan_in {
                    grad_params[row + i] += d * input[i];
                    d_in[i] += params[row + i] * d;
                }
            }
            if l > 0 {
                for (d, a) in d_in.iter_mut().zip(input) {
                    *d = *d * (T::from_f64(1.0) - *a * *a);
                }
            }
            delta = d_in;
        }
        delta
    }

    pub fn predict(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(params, x)?.acts.pop().expect("output"))
    }
}

/// `rows × cols` matrix with orthonormal rows (or columns when rows > cols).
fn orthogonal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (n, m) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            w[r * cols + c] = if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    w
}
