//! Dense ReLU network `A_L ∘ σ ∘ … ∘ σ ∘ A₁` on row-major batches, with exact
//! reverse-mode gradients and Adam.
//!
//! Weights of layer `l` are stored row-major as an `n_out × n_in` matrix so
//! that a batch `X` (`N × n_in`) maps to `X·Wᵀ + b`. Layer products go through
//! `matrixmultiply::dgemm`, which is single-threaded and therefore
//! bit-reproducible for a given input.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl Default for MlpArchitecture {
    /// `5 → 32⁵ → 1`.
    fn default() -> Self {
        Self {
            input_dim: 5,
            hidden: vec![32; 5],
            output_dim: 1,
        }
    }
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden,
            output_dim,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `(n_in, n_out)` per affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn glorot_bound(n_in: usize, n_out: usize) -> f64 {
        (6.0 / (n_in + n_out) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.n_in + inp]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: MlpArchitecture,
    layers: Vec<Layer>,
}

/// Gradients share the parameter layout.
pub type Gradients = MlpParams;

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Default)]
pub struct ForwardCache {
    /// `acts[l]` is the input to layer `l` (post-ReLU for `l ≥ 1`), `N × n_in(l)`.
    acts: Vec<Vec<f64>>,
    output: Vec<f64>,
    rows: usize,
    delta: Vec<f64>,
    prev: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// `out = x·Wᵀ + b` for `n` rows, reusing `out`'s allocation.
fn affine_into(layer: &Layer, x: &[f64], n: usize, out: &mut Vec<f64>) {
    let (ni, no) = (layer.n_in, layer.n_out);
    out.clear();
    out.reserve(n * no);
    for _ in 0..n {
        out.extend_from_slice(&layer.biases);
    }
    gemm(
        n,
        ni,
        no,
        1.0,
        x,
        ni as isize,
        1,
        &layer.weights,
        1,
        ni as isize,
        1.0,
        out,
        no as isize,
        1,
    );
}

/// `C = alpha·A·B + beta·C` over strided row/column layouts.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
        (rows.saturating_sub(1) as isize * rs + cols.saturating_sub(1) as isize * cs) as usize + 1
    };
    assert!(a.len() >= span(m, k, rsa, csa) || k == 0);
    assert!(b.len() >= span(k, n, rsb, csb) || k == 0);
    assert!(c.len() >= span(m, n, rsc, csc));
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

impl MlpParams {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(i, o)| Layer::zeros(i, o))
            .collect();
        Self {
            arch: arch.clone(),
            layers,
        }
    }

    /// Glorot-uniform weights on `±√(6/(n_in+n_out))`, zero biases. Entries are
    /// drawn layer by layer in row-major order.
    pub fn glorot_init<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        for layer in &mut p.layers {
            let bound = MlpArchitecture::glorot_bound(layer.n_in, layer.n_out);
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for w in &mut layer.weights {
                *w = dist.sample(rng);
            }
        }
        p
    }

    pub fn from_layers(arch: MlpArchitecture, layers: Vec<Layer>) -> Result<Self> {
        arch.validate()?;
        let dims = arch.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::Shape(format!(
                "architecture has {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for (l, ((i, o), layer)) in dims.iter().zip(&layers).enumerate() {
            if layer.n_in != *i
                || layer.n_out != *o
                || layer.weights.len() != i * o
                || layer.biases.len() != *o
            {
                return Err(Error::Shape(format!("layer {l} does not match {i}->{o}")));
            }
            if layer
                .weights
                .iter()
                .chain(&layer.biases)
                .any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite(format!("layer {l} parameters")));
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// `θ = (vec(W₁)ᵀ, b₁ᵀ, …, vec(W_L)ᵀ, b_Lᵀ)` with `vec` stacking columns.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for c in 0..layer.n_in {
                for r in 0..layer.n_out {
                    out.push(layer.weight(r, c));
                }
            }
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    /// Inverse of [`MlpParams::flatten`].
    pub fn unflatten(arch: &MlpArchitecture, theta: &[f64]) -> Result<Self> {
        if theta.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                theta.len()
            )));
        }
        let mut p = Self::zeros(arch);
        let mut it = theta.iter().copied();
        for layer in &mut p.layers {
            for c in 0..layer.n_in {
                for r in 0..layer.n_out {
                    layer.weights[r * layer.n_in + c] = it.next().unwrap();
                }
            }
            for b in &mut layer.biases {
                *b = it.next().unwrap();
            }
        }
        Ok(p)
    }

    /// Storage-order view over every scalar parameter.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn scale_output_layer(&mut self, alpha: f64) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.weights.iter_mut().for_each(|w| *w *= alpha);
        last.biases.iter_mut().for_each(|b| *b *= alpha);
    }

    fn check_batch(&self, inputs: &[f64]) -> Result<usize> {
        let d = self.arch.input_dim;
        if !inputs.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "batch of {} values is not a multiple of input width {d}",
                inputs.len()
            )));
        }
        Ok(inputs.len() / d)
    }

    /// Output rows (`N × output_dim`, row-major) for a row-major input batch.
    pub fn forward(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let n = self.check_batch(inputs)?;
        let last = self.layers.len() - 1;
        let mut cur = Vec::new();
        let mut next = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let x = if l == 0 { inputs } else { &cur[..] };
            affine_into(layer, x, n, &mut next);
            if l < last {
                relu(&mut next);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        check_finite(&cur)?;
        Ok(cur)
    }

    /// Forward pass that keeps every layer input for [`MlpParams::backward_cached`].
    /// Buffers in `cache` are reused across calls.
    pub fn forward_cached(&self, inputs: &[f64], cache: &mut ForwardCache) -> Result<()> {
        let n = self.check_batch(inputs)?;
        let nl = self.layers.len();
        cache.rows = n;
        cache.acts.resize_with(nl, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(inputs);
        for (l, layer) in self.layers.iter().enumerate() {
            if l + 1 < nl {
                let (done, rest) = cache.acts.split_at_mut(l + 1);
                affine_into(layer, &done[l], n, &mut rest[0]);
                relu(&mut rest[0]);
            } else {
                affine_into(layer, &cache.acts[l], n, &mut cache.output);
            }
        }
        check_finite(&cache.output)
    }

    /// Gradient of `Σ_r ⟨grad_out[r], f(x_r)⟩` with respect to all parameters,
    /// given the cache of a forward pass on the same batch.
    pub fn backward_cached(&self, cache: &mut ForwardCache, grad_out: &[f64]) -> Result<Gradients> {
        let n = cache.rows;
        if grad_out.len() != n * self.arch.output_dim {
            return Err(Error::Shape(format!(
                "output gradient has {} entries, expected {}",
                grad_out.len(),
                n * self.arch.output_dim
            )));
        }
        let mut grads = Self::zeros(&self.arch);
        let mut delta = std::mem::take(&mut cache.delta);
        let mut prev = std::mem::take(&mut cache.prev);
        delta.clear();
        delta.extend_from_slice(grad_out);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (ni, no) = (layer.n_in, layer.n_out);
            let a = &cache.acts[l];
            let g = &mut grads.layers[l];
            // dW = δᵀ·A
            gemm(
                no,
                n,
                ni,
                1.0,
                &delta,
                1,
                no as isize,
                a,
                ni as isize,
                1,
                0.0,
                &mut g.weights,
                ni as isize,
                1,
            );
            for row in delta.chunks_exact(no) {
                for (gb, d) in g.biases.iter_mut().zip(row) {
                    *gb += d;
                }
            }
            if l > 0 {
                // δ_prev = (δ·W) ⊙ 1{a > 0}; the ReLU derivative at 0 is 0.
                prev.clear();
                prev.resize(n * ni, 0.0);
                gemm(
                    n,
                    no,
                    ni,
                    1.0,
                    &delta,
                    no as isize,
                    1,
                    &layer.weights,
                    ni as isize,
                    1,
                    0.0,
                    &mut prev,
                    ni as isize,
                    1,
                );
                for (p, &av) in prev.iter_mut().zip(a) {
                    if av <= 0.0 {
                        *p = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut prev);
            }
        }
        cache.delta = delta;
        cache.prev = prev;
        Ok(grads)
    }

    /// Gradient of the mean squared error `(1/N) Σ ‖f(x_n) − y_n‖²`.
    pub fn backward(&self, inputs: &[f64], targets: &[f64]) -> Result<Gradients> {
        let mut cache = ForwardCache::default();
        self.forward_cached(inputs, &mut cache)?;
        if targets.len() != cache.output.len() {
            return Err(Error::Shape(format!(
                "{} targets for {} outputs",
                targets.len(),
                cache.output.len()
            )));
        }
        let scale = 2.0 / cache.rows as f64;
        let grad_out: Vec<f64> = cache
            .output
            .iter()
            .zip(targets)
            .map(|(o, y)| scale * (o - y))
            .collect();
        self.backward_cached(&mut cache, &grad_out)
    }

    pub fn mse(&self, inputs: &[f64], targets: &[f64]) -> Result<f64> {
        let out = self.forward(inputs)?;
        if targets.len() != out.len() {
            return Err(Error::Shape("targets/outputs length mismatch".into()));
        }
        let n = out.len() / self.arch.output_dim;
        Ok(out
            .iter()
            .zip(targets)
            .map(|(o, y)| (o - y) * (o - y))
            .sum::<f64>()
            / n as f64)
    }
}

#[inline]
fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("network output row {i}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, param_count: usize) -> Self {
        Self {
            config,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// One bias-corrected Adam update of `params` in storage order.
    pub fn step(&mut self, params: &mut MlpParams, grads: &Gradients) -> Result<()> {
        if grads.arch != params.arch || self.m.len() != params.param_count() {
            return Err(Error::Shape("Adam state, parameters and gradients disagree".into()));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((theta, g), m), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Portable checkpoint: weights as nested row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: MlpArchitecture,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_state: Option<AdamState>,
    pub seed: u64,
    pub epoch: usize,
    /// Grid the kernel network was trained on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
}

impl Checkpoint {
    pub fn new(params: &MlpParams, adam: Option<&AdamState>, seed: u64, epoch: usize) -> Self {
        Self {
            arch: params.arch.clone(),
            weights: params
                .layers
                .iter()
                .map(|l| l.weights.chunks(l.n_in).map(|r| r.to_vec()).collect())
                .collect(),
            biases: params.layers.iter().map(|l| l.biases.clone()).collect(),
            adam_state: adam.cloned(),
            seed,
            epoch,
            grid_size: None,
        }
    }

    pub fn params(&self) -> Result<MlpParams> {
        if self.weights.len() != self.biases.len() {
            return Err(Error::Shape("weights/biases layer count mismatch".into()));
        }
        let layers = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| {
                let n_out = w.len();
                let n_in = w.first().map_or(0, |r| r.len());
                if w.iter().any(|r| r.len() != n_in) {
                    return Err(Error::Shape("ragged weight matrix".into()));
                }
                Ok(Layer {
                    n_in,
                    n_out,
                    weights: w.iter().flatten().copied().collect(),
                    biases: b.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MlpParams::from_layers(self.arch.clone(), layers)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_batch(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn default_architecture_parameter_count() {
        let arch = MlpArchitecture::default();
        assert_eq!(arch.num_layers(), 6);
        assert_eq!(arch.param_count(), 5 * 32 + 32 + 4 * (32 * 32 + 32) + 32 + 1);
        assert_eq!(arch.param_count(), 4449);
        let p = MlpParams::glorot_init(&arch, &mut rng(0));
        assert_eq!(p.flatten().len(), 4449);
    }

    #[test]
    fn glorot_bounds_and_zero_biases() {
        let arch = MlpArchitecture::default();
        assert!((MlpArchitecture::glorot_bound(5, 32) - (6.0f64 / 37.0).sqrt()).abs() < 1e-15);
        assert!((MlpArchitecture::glorot_bound(5, 32) - 0.402694).abs() < 1e-6);
        assert!((MlpArchitecture::glorot_bound(32, 1) - 0.426401).abs() < 1e-6);
        let p = MlpParams::glorot_init(&arch, &mut rng(1));
        for layer in p.layers() {
            let b = MlpArchitecture::glorot_bound(layer.n_in, layer.n_out);
            assert!(layer.weights.iter().all(|w| w.abs() <= b));
            assert!(layer.biases.iter().all(|&x| x == 0.0));
            // spread over the interval, not collapsed
            let max = layer.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
            assert!(max > 0.5 * b);
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&MlpArchitecture::default());
        let out = p.forward(&random_batch(7, 5, 2)).unwrap();
        assert_eq!(out, vec![0.0; 7]);
    }

    #[test]
    fn one_wide_chain_by_hand() {
        // 1-1-1-1: x=1 -> 2*1+1=3 -> relu 3 -> 2*3+1=7 -> relu 7 -> 2*7+1=15
        let arch = MlpArchitecture::new(1, vec![1, 1], 1).unwrap();
        let mut p = MlpParams::zeros(&arch);
        for l in p.layers_mut() {
            l.weights[0] = 2.0;
            l.biases[0] = 1.0;
        }
        assert_eq!(p.forward(&[1.0]).unwrap(), vec![15.0]);
        // negative pre-activation is cut: x=-3 -> -5 -> 0 -> 1 -> 1 -> 3
        assert_eq!(p.forward(&[-3.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let p = MlpParams::glorot_init(&MlpArchitecture::default(), &mut rng(3));
        let row = [0.1, 0.2, 0.3, 0.4, 0.5];
        let batch: Vec<f64> = row.iter().copied().cycle().take(5 * 9).collect();
        let out = p.forward(&batch).unwrap();
        assert!(out.iter().all(|&o| o.to_bits() == out[0].to_bits()));
    }

    #[test]
    fn output_layer_homogeneity() {
        let mut p = MlpParams::glorot_init(&MlpArchitecture::default(), &mut rng(4));
        let x = random_batch(11, 5, 5);
        let a = p.forward(&x).unwrap();
        p.scale_output_layer(-2.5);
        let b = p.forward(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((v + 2.5 * u).abs() < 1e-13);
        }
    }

    #[test]
    fn flatten_round_trip_and_column_order() {
        let arch = MlpArchitecture::new(2, vec![3], 1).unwrap();
        let p = MlpParams::glorot_init(&arch, &mut rng(6));
        let theta = p.flatten();
        // vec(W₁) stacks columns: W[0][0], W[1][0], W[2][0], W[0][1], ...
        assert_eq!(theta[1], p.layers()[0].weight(1, 0));
        assert_eq!(theta[3], p.layers()[0].weight(0, 1));
        assert_eq!(MlpParams::unflatten(&arch, &theta).unwrap(), p);
        assert!(MlpParams::unflatten(&arch, &theta[1..]).is_err());
    }

    #[test]
    fn zero_params_zero_targets_zero_gradient() {
        let p = MlpParams::zeros(&MlpArchitecture::default());
        let x = random_batch(4, 5, 7);
        let g = p.backward(&x, &[0.0; 4]).unwrap();
        assert!(g.values().all(|&v| v == 0.0));
        let g = p.backward(&x, &[1.0, 2.0, 0.0, -1.0]).unwrap();
        // only the final bias sees the residual: (2/N) Σ (0 − y) = −1
        assert!((g.layers().last().unwrap().biases[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_is_linear_in_residual() {
        let p = MlpParams::glorot_init(&MlpArchitecture::default(), &mut rng(8));
        let x = random_batch(6, 5, 9);
        let out = p.forward(&x).unwrap();
        let y: Vec<f64> = out.iter().map(|o| o - 0.3).collect();
        let y2: Vec<f64> = out.iter().map(|o| o - 0.6).collect();
        let g1 = p.backward(&x, &y).unwrap();
        let g2 = p.backward(&x, &y2).unwrap();
        for (a, b) in g1.values().zip(g2.values()) {
            assert!((b - 2.0 * a).abs() <= 1e-12 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn shape_errors() {
        let p = MlpParams::zeros(&MlpArchitecture::default());
        assert!(p.forward(&[0.0; 7]).is_err());
        assert!(p.backward(&[0.0; 10], &[0.0; 3]).is_err());
    }

    #[test]
    fn adam_closed_form_first_two_steps() {
        let arch = MlpArchitecture::new(1, vec![], 1).unwrap();
        let mut p = MlpParams::zeros(&arch);
        let mut g = MlpParams::zeros(&arch);
        g.layers_mut()[0].weights[0] = 1.0;
        let mut st = AdamState::new(AdamConfig::default(), arch.param_count());
        st.step(&mut p, &g).unwrap();
        let expect1 = -1e-3 / (1.0 + 1e-8);
        assert!((p.layers()[0].weights[0] - expect1).abs() < 1e-12);
        assert!((p.layers()[0].weights[0] + 0.000999999990).abs() < 1e-12);
        st.step(&mut p, &g).unwrap();
        assert!((st.m[0] - 0.19).abs() < 1e-15);
        assert!((st.v[0] - 0.001999).abs() < 1e-15);
        let expect2 = expect1 - 1e-3 / (1.0 + 1e-8);
        assert!((p.layers()[0].weights[0] - expect2).abs() < 1e-12);
        // untouched coordinate with zero gradient stays put
        assert_eq!(p.layers()[0].biases[0], 0.0);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let arch = MlpArchitecture::default();
        let mut p = MlpParams::glorot_init(&arch, &mut rng(10));
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), arch.param_count());
        st.step(&mut p, &MlpParams::zeros(&arch)).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn checkpoint_round_trip() {
        let arch = MlpArchitecture::default();
        let p = MlpParams::glorot_init(&arch, &mut rng(11));
        let st = AdamState::new(AdamConfig::default(), arch.param_count());
        let ck = Checkpoint::new(&p, Some(&st), 11, 3);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params().unwrap(), p);
        assert_eq!(back.weights[0].len(), 32);
        assert_eq!(back.weights[0][0].len(), 5);
    }
}
