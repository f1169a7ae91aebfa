//! Layer definitions and a sequential network with per-sample forward and
//! reverse-mode passes.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
    },
    /// Cross-correlation over `[channels, length]` inputs with zero padding.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    Relu,
    Flatten,
}

impl LayerSpec {
    pub fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, output } => input * output,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => in_channels * out_channels * kernel,
            LayerSpec::Relu | LayerSpec::Flatten => 0,
        }
    }

    pub fn bias_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { output, .. } => output,
            LayerSpec::Conv1d { out_channels, .. } => out_channels,
            LayerSpec::Relu | LayerSpec::Flatten => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { input: n_in, output } => {
                if input != [n_in] {
                    return Err(Error::ShapeMismatch(format!("dense expects [{n_in}], got {input:?}")));
                }
                Ok(vec![output])
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                if kernel == 0 {
                    return Err(Error::InvalidParameter("kernel must be at least 1".into()));
                }
                match input {
                    [c, len] if *c == in_channels && len + 2 * padding >= kernel => {
                        Ok(vec![out_channels, len + 2 * padding - kernel + 1])
                    }
                    _ => Err(Error::ShapeMismatch(format!(
                        "conv1d expects [{in_channels}, L] with L + 2*{padding} >= {kernel}, got {input:?}"
                    ))),
                }
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { input, output } => (input, output),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (in_channels * kernel, out_channels * kernel),
            LayerSpec::Relu | LayerSpec::Flatten => (0, 0),
        }
    }
}

/// Sequential network. Each layer's parameters are stored as one flat
/// vector: weights (row-major, `[out][in]` or `[out][in][k]`) then biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    params: Vec<Vec<T>>,
    // shapes[i] is the input shape of layer i; the last entry is the output.
    shapes: Vec<Vec<usize>>,
}

fn infer_shapes(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = vec![input_shape.to_vec()];
    for s in specs {
        let next = s.output_shape(shapes.last().expect("non-empty"))?;
        shapes.push(next);
    }
    Ok(shapes)
}

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(input_shape: Vec<usize>, specs: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let shapes = infer_shapes(&input_shape, &specs)?;
        let params = specs
            .iter()
            .map(|s| {
                let (fan_in, fan_out) = s.fans();
                let mut p = Vec::with_capacity(s.param_count());
                if s.weight_count() > 0 {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                    p.extend((0..s.weight_count()).map(|_| T::lit(dist.sample(rng))));
                }
                p.extend(std::iter::repeat_n(T::zero(), s.bias_count()));
                p
            })
            .collect();
        Ok(Self {
            input_shape,
            specs,
            params,
            shapes,
        })
    }

    pub fn from_parts(input_shape: Vec<usize>, specs: Vec<LayerSpec>, params: Vec<Vec<T>>) -> Result<Self> {
        let shapes = infer_shapes(&input_shape, &specs)?;
        if params.len() != specs.len() {
            return Err(Error::ShapeMismatch(format!("{} parameter blocks for {} layers", params.len(), specs.len())));
        }
        for (i, (s, p)) in specs.iter().zip(&params).enumerate() {
            if p.len() != s.param_count() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} needs {} parameters, got {}",
                    s.param_count(),
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self {
            input_shape,
            specs,
            params,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().expect("non-empty").iter().product()
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Per-sample shapes: input of each layer, then the final output.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn params(&self) -> &[Vec<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            specs: self.specs.clone(),
            params: self
                .params
                .iter()
                .map(|p| p.iter().map(|v| U::lit(v.as_f64())).collect())
                .collect(),
            shapes: self.shapes.clone(),
        }
    }

    /// Activations for one sample: `acts[0]` is the input, `acts[i + 1]` the
    /// output of layer `i`.
    pub fn forward_sample(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        if x.len() != self.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "input of length {} for shape {:?}",
                x.len(),
                self.input_shape
            )));
        }
        let mut acts = Vec::with_capacity(self.specs.len() + 1);
        acts.push(x.to_vec());
        for (i, spec) in self.specs.iter().enumerate() {
            let out = layer_forward(spec, &self.params[i], &self.shapes[i], &acts[i]);
            acts.push(out);
        }
        Ok(acts)
    }

    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_sample(x)?.pop().expect("non-empty"))
    }

    /// Batched forward pass; returns every layer's output with the batch
    /// dimension leading.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if batch.shape().get(1..) != Some(&self.input_shape[..]) {
            return Err(Error::ShapeMismatch(format!(
                "batch shape {:?} does not match input {:?}",
                batch.shape(),
                self.input_shape
            )));
        }
        let n = batch.batch_len();
        let mut outs: Vec<Vec<T>> = vec![Vec::new(); self.specs.len()];
        for i in 0..n {
            let acts = self.forward_sample(batch.sample(i))?;
            for (o, a) in outs.iter_mut().zip(acts.into_iter().skip(1)) {
                o.extend(a);
            }
        }
        outs.into_iter()
            .zip(&self.shapes[1..])
            .map(|(data, shape)| {
                let mut s = vec![n];
                s.extend_from_slice(shape);
                Tensor::new(s, data)
            })
            .collect()
    }

    /// Accumulates parameter gradients for one sample into `grads` and
    /// returns the gradient with respect to the input.
    pub fn backward_sample(&self, acts: &[Vec<T>], grad_out: &[T], grads: &mut [Vec<T>]) -> Result<Vec<T>> {
        if acts.len() != self.specs.len() + 1 || grads.len() != self.specs.len() {
            return Err(Error::ShapeMismatch("activation or gradient block count".into()));
        }
        if grad_out.len() != self.output_len() {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient of length {}, output has {}",
                grad_out.len(),
                self.output_len()
            )));
        }
        let mut g = grad_out.to_vec();
        for i in (0..self.specs.len()).rev() {
            g = layer_backward(&self.specs[i], &self.params[i], &self.shapes[i], &acts[i], &acts[i + 1], &g, &mut grads[i]);
        }
        Ok(g)
    }
}

// Dot product with eight independent accumulators, in a fixed order.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for j in chunks * 8..a.len() {
        tail += a[j] * b[j];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn layer_forward<T: Scalar>(spec: &LayerSpec, p: &[T], in_shape: &[usize], x: &[T]) -> Vec<T> {
    match *spec {
        LayerSpec::Dense { input, output } => {
            let (w, b) = p.split_at(input * output);
            (0..output).map(|o| dot(&w[o * input..(o + 1) * input], x) + b[o]).collect()
        }
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            padding,
        } => {
            let len = in_shape[1];
            let out_len = len + 2 * padding - kernel + 1;
            let (w, b) = p.split_at(in_channels * out_channels * kernel);
            let mut y = vec![T::zero(); out_channels * out_len];
            for o in 0..out_channels {
                let row = &mut y[o * out_len..(o + 1) * out_len];
                row.iter_mut().for_each(|v| *v = b[o]);
                for c in 0..in_channels {
                    let xc = &x[c * len..(c + 1) * len];
                    for j in 0..kernel {
                        let wv = w[(o * in_channels + c) * kernel + j];
                        // Output t reads input t + j - padding.
                        let lo = padding.saturating_sub(j);
                        let hi = (len + padding).saturating_sub(j).min(out_len);
                        for t in lo..hi {
                            row[t] += wv * xc[t + j - padding];
                        }
                    }
                }
            }
            y
        }
        LayerSpec::Relu => x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
        LayerSpec::Flatten => x.to_vec(),
    }
}

fn layer_backward<T: Scalar>(
    spec: &LayerSpec,
    p: &[T],
    in_shape: &[usize],
    x: &[T],
    _y: &[T],
    g: &[T],
    grad: &mut [T],
) -> Vec<T> {
    match *spec {
        LayerSpec::Dense { input, output } => {
            let (w, _) = p.split_at(input * output);
            let (gw, gb) = grad.split_at_mut(input * output);
            let mut dx = vec![T::zero(); input];
            for o in 0..output {
                let go = g[o];
                if go == T::zero() {
                    continue;
                }
                axpy(go, x, &mut gw[o * input..(o + 1) * input]);
                gb[o] += go;
                axpy(go, &w[o * input..(o + 1) * input], &mut dx);
            }
            dx
        }
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            padding,
        } => {
            let len = in_shape[1];
            let out_len = len + 2 * padding - kernel + 1;
            let (w, _) = p.split_at(in_channels * out_channels * kernel);
            let (gw, gb) = grad.split_at_mut(in_channels * out_channels * kernel);
            let mut dx = vec![T::zero(); in_channels * len];
            for o in 0..out_channels {
                let go = &g[o * out_len..(o + 1) * out_len];
                gb[o] += go.iter().copied().sum::<T>();
                for c in 0..in_channels {
                    let xc = &x[c * len..(c + 1) * len];
                    let dxc = &mut dx[c * len..(c + 1) * len];
                    for j in 0..kernel {
                        let wi = (o * in_channels + c) * kernel + j;
                        let wv = w[wi];
                        let lo = padding.saturating_sub(j);
                        let hi = (len + padding).saturating_sub(j).min(out_len);
                        let mut acc = T::zero();
                        for t in lo..hi {
                            acc += go[t] * xc[t + j - padding];
                            dxc[t + j - padding] += wv * go[t];
                        }
                        gw[wi] += acc;
                    }
                }
            }
            dx
        }
        LayerSpec::Relu => x
            .iter()
            .zip(g)
            .map(|(&xi, &gi)| if xi > T::zero() { gi } else { T::zero() })
            .collect(),
        LayerSpec::Flatten => g.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_dense_passes_input_through() {
        let spec = LayerSpec::Dense { input: 3, output: 3 };
        let mut p = vec![0.0; 12];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        let net = Network::from_parts(vec![3], vec![spec], vec![p]).unwrap();
        assert_eq!(net.logits(&[0.5, -2.0, 7.0]).unwrap(), vec![0.5, -2.0, 7.0]);
    }

    #[test]
    fn conv_same_padding_keeps_length() {
        let spec = LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            padding: 1,
        };
        assert_eq!(spec.output_shape(&[1, 31]).unwrap(), vec![1, 31]);
        let net = Network::from_parts(vec![1, 5], vec![spec], vec![vec![0.0, 1.0, 0.0, 0.0]]).unwrap();
        let x = [1.0, -2.0, 3.0, 4.5, 0.25];
        assert_eq!(net.logits(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn conv_cross_correlation_by_hand() {
        // Kernel (1, 2, 3) over (1, 1, 1) with padding 1: edges see a zero.
        let spec = LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            padding: 1,
        };
        let net = Network::from_parts(vec![1, 3], vec![spec], vec![vec![1.0, 2.0, 3.0, 0.5]]).unwrap();
        assert_eq!(net.logits(&[1.0, 1.0, 1.0]).unwrap(), vec![5.5, 6.5, 3.5]);
    }

    #[test]
    fn flatten_width_of_conv_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs = vec![
            LayerSpec::Conv1d {
                in_channels: 1,
                out_channels: 16,
                kernel: 3,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Conv1d {
                in_channels: 16,
                out_channels: 32,
                kernel: 3,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
        ];
        let net: Network<f64> = Network::new(vec![1, 31], specs, &mut rng).unwrap();
        assert_eq!(net.output_len(), 992);
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = Network::<f64>::new(vec![4], vec![LayerSpec::Dense { input: 3, output: 2 }], &mut rng);
        assert!(matches!(bad, Err(Error::ShapeMismatch(_))));
        let net: Network<f64> = Network::new(vec![3], vec![LayerSpec::Dense { input: 3, output: 2 }], &mut rng).unwrap();
        assert!(matches!(net.logits(&[1.0]), Err(Error::ShapeMismatch(_))));
        let zero_kernel = LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel: 0,
            padding: 0,
        };
        assert!(zero_kernel.output_shape(&[1, 3]).is_err());
    }

    #[test]
    fn dense_gradient_matches_hand_formula() {
        // y = Wx + b with loss ½‖y − t‖²: dW = (y − t) xᵀ, db = y − t.
        let p = vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5];
        let net = Network::from_parts(vec![2], vec![LayerSpec::Dense { input: 2, output: 2 }], vec![p]).unwrap();
        let x = [1.0, -1.0];
        let acts = net.forward_sample(&x).unwrap();
        assert_eq!(acts[1], vec![-0.5, -1.5]);
        let target = [0.0, 1.0];
        let r: Vec<f64> = acts[1].iter().zip(target).map(|(y, t)| y - t).collect();
        let mut grads = net.zero_grads();
        let dx = net.backward_sample(&acts, &r, &mut grads).unwrap();
        assert_eq!(grads[0], vec![-0.5, 0.5, -2.5, 2.5, -0.5, -2.5]);
        assert_eq!(dx, vec![-0.5 * 1.0 - 2.5 * 3.0, -0.5 * 2.0 - 2.5 * 4.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net: Network<f64> = Network::new(
            vec![4],
            vec![LayerSpec::Dense { input: 4, output: 5 }, LayerSpec::Relu, LayerSpec::Dense { input: 5, output: 2 }],
            &mut rng,
        )
        .unwrap();
        let acts = net.forward_sample(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        let mut grads = net.zero_grads();
        net.backward_sample(&acts, &[0.0, 0.0], &mut grads).unwrap();
        assert!(grads.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net: Network<f64> = Network::new(vec![31], vec![LayerSpec::Dense { input: 31, output: 80 }], &mut rng).unwrap();
        let limit = (6.0f64 / 111.0).sqrt();
        let (w, b) = net.params()[0].split_at(31 * 80);
        assert!(w.iter().all(|v| v.abs() <= limit));
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_forward_matches_per_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net: Network<f64> = Network::new(vec![3], vec![LayerSpec::Dense { input: 3, output: 2 }, LayerSpec::Relu], &mut rng).unwrap();
        let rows = [vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]];
        let outs = net.forward(&Tensor::stack(&rows, &[3]).unwrap()).unwrap();
        assert_eq!(outs[1].shape(), &[2, 2]);
        assert_eq!(outs[1].sample(1), &net.logits(&rows[1]).unwrap()[..]);
    }
}
