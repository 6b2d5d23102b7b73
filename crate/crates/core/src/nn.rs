//! Small fully-connected networks with hand-written reverse mode and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Checkpoint layout version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Softplus,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Softplus => softplus(z),
        }
    }

    /// Derivative given the pre-activation `z` and output `h`.
    fn derivative<T: Scalar>(self, z: T, h: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - h * h,
            Activation::Softplus => sigmoid(z),
        }
    }
}

pub fn softplus<T: Scalar>(z: T) -> T {
    // max(z, 0) + log1p(exp(-|z|)) avoids overflow on both tails.
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// One affine layer followed by an activation. `weight` is `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameter-shaped buffer: one `(weight, bias)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &DenseNet<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.raw_dim())))
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    /// First non-finite entry as `(layer, is_bias, flat index)`.
    pub fn first_non_finite(&self) -> Option<(usize, bool, usize)> {
        for (l, (w, b)) in self.layers.iter().enumerate() {
            if let Some(i) = w.iter().position(|x| !x.is_finite()) {
                return Some((l, false, i));
            }
            if let Some(i) = b.iter().position(|x| !x.is_finite()) {
                return Some((l, true, i));
            }
        }
        None
    }
}

/// Values recorded by [`DenseNet::forward_trace`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    inputs: Vec<Array2<T>>,
    pre: Vec<Array2<T>>,
    output: Array2<T>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> DenseNet<T> {
    /// Builds an MLP with `sizes = [in, h1, .., out]`, `hidden` activations
    /// between layers and `head` on the output. Weights and biases are drawn
    /// uniformly in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, head: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::param("sizes", format!("need at least two nonzero sizes, got {sizes:?}")));
        }
        let count = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = || T::lit(rng.random_range(-bound..bound));
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), &mut draw);
                let bias = Array1::from_shape_simple_fn(fan_out, &mut draw);
                Dense {
                    weight,
                    bias,
                    activation: if i + 1 == count { head } else { hidden },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("layers", "empty network"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::param(
                    "layers",
                    format!("layer {i} outputs {} but layer {} takes {}", pair[0].output_dim(), i + 1, pair[1].input_dim()),
                ));
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Shape {
                    expected: l.output_dim(),
                    got: l.bias.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() == self.input_dim() {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: self.input_dim(),
                got: x.ncols(),
            })
        }
    }

    /// Batch forward; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for l in &self.layers {
            let mut z = h.dot(&l.weight.t());
            z += &l.bias;
            let act = l.activation;
            z.mapv_inplace(|v| act.apply(v));
            h = z;
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[T]) -> Result<Vec<T>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_trace(&self, x: ArrayView2<T>) -> Result<Trace<T>> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for l in &self.layers {
            let mut z = h.dot(&l.weight.t());
            z += &l.bias;
            let act = l.activation;
            let out = z.mapv(|v| act.apply(v));
            inputs.push(h);
            pre.push(z);
            h = out;
        }
        Ok(Trace { inputs, pre, output: h })
    }

    /// Reverse pass for the loss whose gradient w.r.t. the output is
    /// `grad_out`. Returns parameter gradients and the input gradient.
    pub fn backward(&self, trace: &Trace<T>, grad_out: ArrayView2<T>) -> Result<(Gradients<T>, Array2<T>)> {
        if grad_out.dim() != trace.output.dim() {
            return Err(Error::Shape {
                expected: trace.output.len(),
                got: grad_out.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_out.to_owned();
        let mut post = trace.output.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre[i];
            let act = l.activation;
            let mut dz = upstream;
            Zip::from(&mut dz).and(z).and(&post).for_each(|d, &zv, &hv| *d *= act.derivative(zv, hv));
            let dw = dz.t().dot(&trace.inputs[i]).as_standard_layout().into_owned();
            let db = dz.sum_axis(Axis(0));
            upstream = dz.dot(&l.weight);
            grads.push((dw, db));
            post = trace.inputs[i].clone();
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, upstream))
    }

    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
            l.bias.iter_mut().for_each(|b| *b = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// `self <- rho * online + (1 - rho) * self`.
    pub fn soft_update_from(&mut self, online: &Self, rho: T) -> Result<()> {
        if !(rho > T::zero() && rho <= T::one()) {
            return Err(Error::param("rho_polyak", "must lie in (0, 1]"));
        }
        let keep = T::one() - rho;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.weight).and(&o.weight).for_each(|t, &o| *t = rho * o + keep * *t);
            Zip::from(&mut t.bias).and(&o.bias).for_each(|t, &o| *t = rho * o + keep * *t);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|x| x.is_finite()) && l.bias.iter().all(|x| x.is_finite()))
    }

    pub fn to_checkpoint(&self) -> NetCheckpoint {
        NetCheckpoint {
            version: CHECKPOINT_VERSION,
            scalar: T::NAME.to_string(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerCheckpoint {
                    inputs: l.input_dim(),
                    outputs: l.output_dim(),
                    activation: l.activation,
                    weight: l.weight.iter().map(|w| w.to_f64_lossy()).collect(),
                    bias: l.bias.iter().map(|b| b.to_f64_lossy()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &NetCheckpoint) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        let layers = ck
            .layers
            .iter()
            .map(|l| {
                let weight = Array2::from_shape_vec((l.outputs, l.inputs), l.weight.iter().map(|&w| T::lit(w)).collect())
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                if l.bias.len() != l.outputs {
                    return Err(Error::Checkpoint(format!("bias length {} != {}", l.bias.len(), l.outputs)));
                }
                Ok(Dense {
                    weight,
                    bias: l.bias.iter().map(|&b| T::lit(b)).collect(),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// Structured-text network dump. Parameters are stored as `f64` in
/// row-major `(outputs, inputs)` order; `scalar` names the width they were
/// trained at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub version: u32,
    pub scalar: String,
    pub layers: Vec<LayerCheckpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Adam optimizer over a fixed-size parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn adam(num_params: usize, lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
        }
    }

    pub fn for_net(net: &DenseNet<T>, lr: T) -> Self {
        Self::adam(net.num_params(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments_finite(&self) -> bool {
        self.m.iter().chain(&self.v).all(|x| x.is_finite())
    }

    fn begin(&mut self, len: usize) -> Result<(T, T)> {
        if len != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                got: len,
            });
        }
        self.step += 1;
        let t = self.step as i32;
        Ok((T::one() - self.beta1.powi(t), T::one() - self.beta2.powi(t)))
    }

    fn apply(&mut self, offset: usize, params: &mut [T], grads: &[T], c1: T, c2: T) {
        let (b1, b2) = (self.beta1, self.beta2);
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[offset + i];
            let v = &mut self.v[offset + i];
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    /// One update of a flat parameter vector.
    pub fn step_slice(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape {
                expected: params.len(),
                got: grads.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient {:?} at index {i} (step {})",
                grads[i], self.step
            )));
        }
        let (c1, c2) = self.begin(params.len())?;
        self.apply(0, params, grads, c1, c2);
        Ok(())
    }

    /// One update of every layer of `net`.
    pub fn step_net(&mut self, net: &mut DenseNet<T>, grads: &Gradients<T>) -> Result<()> {
        if let Some((layer, bias, index)) = grads.first_non_finite() {
            let kind = if bias { "bias" } else { "weight" };
            return Err(Error::Training(format!(
                "non-finite gradient in layer {layer} {kind} at index {index} (step {})",
                self.step
            )));
        }
        if grads.layers.len() != net.layers.len() {
            return Err(Error::Shape {
                expected: net.layers.len(),
                got: grads.layers.len(),
            });
        }
        let (c1, c2) = self.begin(net.num_params())?;
        let mut offset = 0;
        for (l, (gw, gb)) in net.layers.iter_mut().zip(&grads.layers) {
            let gw = gw.as_standard_layout();
            for (p, g) in [
                (l.weight.as_slice_mut().expect("standard layout"), gw.as_slice().expect("standard layout")),
                (l.bias.as_slice_mut().expect("standard layout"), gb.as_slice().expect("standard layout")),
            ] {
                if p.len() != g.len() {
                    return Err(Error::Shape {
                        expected: p.len(),
                        got: g.len(),
                    });
                }
                self.apply(offset, p, g, c1, c2);
                offset += p.len();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input() {
        let net = DenseNet::from_layers(vec![Dense {
            weight: Array2::<f64>::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(net.forward_one(&[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn zero_weights_give_activated_bias() {
        let net = DenseNet::from_layers(vec![Dense {
            weight: Array2::<f64>::zeros((2, 4)),
            bias: array![-1.0, 0.5],
            activation: Activation::Tanh,
        }])
        .unwrap();
        let out = net.forward_one(&[9.0, 9.0, 9.0, 9.0]).unwrap();
        assert_eq!(out, vec![(-1.0f64).tanh(), 0.5f64.tanh()]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DenseNet::<f32>::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(net.forward_one(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn linear_gradient_is_input() {
        let net = DenseNet::from_layers(vec![Dense {
            weight: array![[0.3, -0.2]],
            bias: array![0.1],
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = array![[2.0, 5.0]];
        let trace = net.forward_trace(x.view()).unwrap();
        let (g, gx) = net.backward(&trace, array![[1.0]].view()).unwrap();
        assert_eq!(g.layers[0].0, x);
        assert_eq!(g.layers[0].1, array![1.0]);
        assert_eq!(gx, array![[0.3, -0.2]]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = DenseNet::<f64>::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = array![[0.1, 0.2, 0.3]];
        let trace = net.forward_trace(x.view()).unwrap();
        let (g, gx) = net.backward(&trace, Array2::zeros((1, 2)).view()).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut opt = OptimizerState::adam(3, 0.1f64);
        let mut p = [1.0, -2.0, 3.0];
        opt.step_slice(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut opt = OptimizerState::adam(1, 0.01f64);
        let mut p = [0.0];
        for _ in 0..100 {
            opt.step_slice(&mut p, &[2.0]).unwrap();
        }
        assert!(p[0] < 0.0);
        assert_eq!(opt.steps(), 100);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut opt = OptimizerState::adam(2, 0.01f64);
        let mut p = [0.0, 0.0];
        assert!(matches!(opt.step_slice(&mut p, &[f64::NAN, 0.0]), Err(Error::Training(_))));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn soft_update_blends() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let online = DenseNet::<f64>::new(&[2, 2], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let mut target = online.clone();
        target.set_params_flat(&[0.0; 6]).unwrap();
        let mut hard = target.clone();
        hard.soft_update_from(&online, 1.0).unwrap();
        assert_eq!(hard, online);
        target.soft_update_from(&online, 0.005).unwrap();
        for (t, o) in target.params_flat().iter().zip(online.params_flat()) {
            assert!((t - 0.005 * o).abs() < 1e-15);
        }
        assert!(target.soft_update_from(&online, 0.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::<f32>::new(&[4, 8, 3], Activation::Relu, Activation::Softplus, &mut rng).unwrap();
        let json = serde_json::to_string(&net.to_checkpoint()).unwrap();
        let back = DenseNet::<f32>::from_checkpoint(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, net);
        let x = [0.3f32, -1.0, 2.0, 0.5];
        assert_eq!(back.forward_one(&x).unwrap(), net.forward_one(&x).unwrap());
    }
}
