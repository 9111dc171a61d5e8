//! Dense feed-forward network with ReLU hidden layers and a linear head.
//!
//! Batches are flat row-major buffers of shape `(batch, dim)`. Layer weights are
//! row-major `(out_dim, in_dim)`, which is also the on-disk checkpoint order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scalar::{dot, Scalar};
use crate::error::{Error, Result};

/// Batches at or below this size use the row-dot kernel instead of packed GEMM.
const GEMV_MAX_BATCH: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Scalar = f32> {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
    dropout_rate: f64,
}

/// Everything the backward pass needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Scalar = f32> {
    batch: usize,
    layer_dims: Vec<usize>,
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<T>>,
    /// Hidden-layer pre-activations.
    pre: Vec<Vec<T>>,
    /// Inverted-dropout masks (entries are 0 or 1/(1-p)), one per hidden layer.
    masks: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn masks(&self) -> &[Option<Vec<T>>] {
        &self.masks
    }
}

/// Parameter gradients, same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Scalar = f32> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Flattened view in checkpoint order: per layer, weights then biases.
    pub fn slices(&self) -> Vec<&[T]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::config(format!(
            "an MLP needs at least input and output dims, got {layer_dims:?}"
        )));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::config(format!(
            "layer dims must be positive, got {layer_dims:?}"
        )));
    }
    Ok(())
}

impl<T: Scalar> Mlp<T> {
    /// Fan-in scaled uniform init: `W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    ///
    /// The per-weight variance is therefore `1 / (3 * fan_in)`.
    pub fn new(layer_dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let layer: Vec<T> = (0..fan_in * fan_out)
                .map(|_| T::from_f64(rng.random_range(-bound..bound)))
                .collect();
            weights.push(layer);
            biases.push(vec![T::ZERO; fan_out]);
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            dropout_rate: 0.0,
        })
    }

    /// A network whose parameters are all exactly zero.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights: layer_dims
                .windows(2)
                .map(|w| vec![T::ZERO; w[0] * w[1]])
                .collect(),
            biases: layer_dims[1..].iter().map(|&d| vec![T::ZERO; d]).collect(),
            dropout_rate: 0.0,
        })
    }

    /// Builds a network from explicit parameters, checking every shape.
    pub fn from_parts(
        layer_dims: &[usize],
        weights: Vec<Vec<T>>,
        biases: Vec<Vec<T>>,
        dropout_rate: f64,
    ) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::shape(format!(
                "expected {layers} weight and bias tensors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for (l, w) in layer_dims.windows(2).enumerate() {
            if weights[l].len() != w[0] * w[1] || biases[l].len() != w[1] {
                return Err(Error::shape(format!(
                    "layer {l}: expected weight {}x{} and bias {}, got {} and {}",
                    w[1],
                    w[0],
                    w[1],
                    weights[l].len(),
                    biases[l].len()
                )));
            }
        }
        let net = Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            dropout_rate: 0.0,
        };
        net.with_dropout(dropout_rate)
    }

    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        self.dropout_rate = rate;
        Ok(self)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn weights(&self, layer: usize) -> &[T] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[T] {
        &self.biases[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [T] {
        &mut self.weights[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [T] {
        &mut self.biases[layer]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Parameter slices in checkpoint order: per layer, weights then biases.
    pub fn param_slices(&self) -> Vec<&[T]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// Converts the parameters to another precision.
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::from_f64(x.to_f64())).collect();
        Mlp {
            layer_dims: self.layer_dims.clone(),
            weights: self.weights.iter().map(conv).collect(),
            biases: self.biases.iter().map(conv).collect(),
            dropout_rate: self.dropout_rate,
        }
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            weights: self.weights.iter().map(|w| vec![T::ZERO; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![T::ZERO; b.len()]).collect(),
        }
    }

    fn check_input(&self, x: &[T], batch: usize) -> Result<()> {
        if batch == 0 || x.len() != batch * self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} values, expected batch {batch} x {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// `out = x * W^T + b` for one layer.
    fn affine(&self, layer: usize, x: &[T], batch: usize, out: &mut Vec<T>) {
        let (fan_in, fan_out) = (self.layer_dims[layer], self.layer_dims[layer + 1]);
        let w = &self.weights[layer];
        let b = &self.biases[layer];
        out.clear();
        out.reserve(batch * fan_out);
        if batch <= GEMV_MAX_BATCH {
            for row in x.chunks_exact(fan_in) {
                out.extend(
                    w.chunks_exact(fan_in)
                        .zip(b)
                        .map(|(wr, &bo)| bo + dot(wr, row)),
                );
            }
            return;
        }
        for _ in 0..batch {
            out.extend_from_slice(b);
        }
        // SAFETY: x is (batch, fan_in) dense, w is (fan_out, fan_in) dense read
        // transposed, out is (batch, fan_out) dense.
        unsafe {
            T::gemm(
                batch,
                fan_in,
                fan_out,
                T::ONE,
                x.as_ptr(),
                fan_in as isize,
                1,
                w.as_ptr(),
                1,
                fan_in as isize,
                T::ONE,
                out.as_mut_ptr(),
                fan_out as isize,
                1,
            );
        }
    }

    /// Inference forward pass. Dropout is never applied.
    pub fn forward(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(x, batch)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.num_layers() - 1;
        for l in 0..=last {
            self.affine(l, &cur, batch, &mut next);
            if l < last {
                relu_in_place(&mut next);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Training-mode forward pass.
    ///
    /// Dropout masks are drawn from `rng` when the dropout rate is positive; an
    /// rng is required in that case. With a zero rate the output equals
    /// [`Mlp::forward`].
    pub fn forward_train<R: Rng + ?Sized>(
        &self,
        x: &[T],
        batch: usize,
        rng: Option<&mut R>,
    ) -> Result<(Vec<T>, ForwardCache<T>)> {
        let hidden = self.num_layers() - 1;
        let masks = if self.dropout_rate > 0.0 {
            let rng = rng.ok_or_else(|| {
                Error::config("dropout is active but no random stream was supplied")
            })?;
            let keep_scale = T::from_f64(1.0 / (1.0 - self.dropout_rate));
            (0..hidden)
                .map(|l| {
                    let n = batch * self.layer_dims[l + 1];
                    Some(
                        (0..n)
                            .map(|_| {
                                if rng.random::<f64>() < self.dropout_rate {
                                    T::ZERO
                                } else {
                                    keep_scale
                                }
                            })
                            .collect(),
                    )
                })
                .collect()
        } else {
            vec![None; hidden]
        };
        self.forward_with_masks(x, batch, masks)
    }

    /// Training-mode forward pass with caller-supplied dropout masks.
    pub fn forward_with_masks(
        &self,
        x: &[T],
        batch: usize,
        masks: Vec<Option<Vec<T>>>,
    ) -> Result<(Vec<T>, ForwardCache<T>)> {
        self.check_input(x, batch)?;
        let hidden = self.num_layers() - 1;
        if masks.len() != hidden {
            return Err(Error::shape(format!(
                "expected {hidden} dropout masks, got {}",
                masks.len()
            )));
        }
        for (l, m) in masks.iter().enumerate() {
            if let Some(m) = m {
                if m.len() != batch * self.layer_dims[l + 1] {
                    return Err(Error::shape(format!("dropout mask {l} has wrong length")));
                }
            }
        }
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut pre = Vec::with_capacity(hidden);
        inputs.push(x.to_vec());
        let mut out = Vec::new();
        for l in 0..self.num_layers() {
            self.affine(l, &inputs[l], batch, &mut out);
            if l < hidden {
                pre.push(out.clone());
                relu_in_place(&mut out);
                if let Some(m) = &masks[l] {
                    for (h, &k) in out.iter_mut().zip(m) {
                        *h *= k;
                    }
                }
                inputs.push(std::mem::take(&mut out));
            }
        }
        let cache = ForwardCache {
            batch,
            layer_dims: self.layer_dims.clone(),
            inputs,
            pre,
            masks,
        };
        Ok((out, cache))
    }

    /// Exact gradients of `sum(d_out * output)` with respect to every parameter.
    ///
    /// Mean reduction is the loss function's job: pass the loss gradient as `d_out`.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &[T]) -> Result<Gradients<T>> {
        if cache.layer_dims != self.layer_dims {
            return Err(Error::shape(format!(
                "cache was produced by a {:?} network, this one is {:?}",
                cache.layer_dims, self.layer_dims
            )));
        }
        let batch = cache.batch;
        if d_out.len() != batch * self.output_dim() {
            return Err(Error::shape(format!(
                "output gradient has {} values, expected {}",
                d_out.len(),
                batch * self.output_dim()
            )));
        }
        let mut grads = self.zero_gradients();
        let mut dz = d_out.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let a = &cache.inputs[l];
            // dW = dz^T * a : (fan_out, batch) x (batch, fan_in)
            // SAFETY: dz is (batch, fan_out) read transposed, a is (batch, fan_in).
            unsafe {
                T::gemm(
                    fan_out,
                    batch,
                    fan_in,
                    T::ONE,
                    dz.as_ptr(),
                    1,
                    fan_out as isize,
                    a.as_ptr(),
                    fan_in as isize,
                    1,
                    T::ZERO,
                    grads.weights[l].as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            let db = &mut grads.biases[l];
            for row in dz.chunks_exact(fan_out) {
                for (g, &d) in db.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            // da = dz * W : (batch, fan_out) x (fan_out, fan_in)
            let mut da = vec![T::ZERO; batch * fan_in];
            // SAFETY: all three operands are dense row-major.
            unsafe {
                T::gemm(
                    batch,
                    fan_out,
                    fan_in,
                    T::ONE,
                    dz.as_ptr(),
                    fan_out as isize,
                    1,
                    self.weights[l].as_ptr(),
                    fan_in as isize,
                    1,
                    T::ZERO,
                    da.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            if let Some(m) = &cache.masks[l - 1] {
                for (g, &k) in da.iter_mut().zip(m) {
                    *g *= k;
                }
            }
            for (g, &z) in da.iter_mut().zip(&cache.pre[l - 1]) {
                if z <= T::ZERO {
                    *g = T::ZERO;
                }
            }
            dz = da;
        }
        Ok(grads)
    }
}

#[inline]
fn relu_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::ZERO {
            *x = T::ZERO;
        }
    }
}
