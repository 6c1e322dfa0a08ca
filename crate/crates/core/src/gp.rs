//! Stationary Gaussian random fields on `[0,1)²` by circulant embedding.
//!
//! The kernel is wrapped onto a periodic `[0,2)²` torus sampled on a
//! `2S×2S` grid, its eigenvalues are the unnormalized forward DFT of the
//! wrapped values, and a field is synthesized as
//! `Re Σ_{p,q} (√λ_pq / 2S) z_pq e^{+2πi(pi+qj)/2S}` with `z_pq` complex
//! standard normal (independent unit-variance real and imaginary parts).
//! The `S×S` corner of the synthesized torus field is returned.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::{GridField, GridSpec};
use crate::seed::StreamRng;

/// Relative tolerance for negative or imaginary eigenvalue residue.
pub const EIGEN_TOLERANCE: f64 = 1e-9;

/// Period of the embedding torus in each axis.
pub const PERIOD: f64 = 2.0;

/// Gaussian covariance `K(h₁,h₂) = exp{−a(h₁²+h₂²)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryKernel {
    pub scale: f64,
}

impl Default for StationaryKernel {
    fn default() -> Self {
        Self { scale: 5.0 }
    }
}

impl StationaryKernel {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel scale must be positive, got {scale}"
            )));
        }
        Ok(Self { scale })
    }

    #[inline]
    pub fn eval(&self, h1: f64, h2: f64) -> f64 {
        (-self.scale * (h1 * h1 + h2 * h2)).exp()
    }

    /// `exp(−a h²)`, one factor of the separable kernel.
    #[inline]
    pub fn eval_1d(&self, h: f64) -> f64 {
        (-self.scale * h * h).exp()
    }

    /// The kernel folded onto the period-2 torus: `K(min(u₁, 2−u₁), min(u₂, 2−u₂))`.
    #[inline]
    pub fn circ(&self, u1: f64, u2: f64) -> f64 {
        self.eval(u1.min(PERIOD - u1), u2.min(PERIOD - u2))
    }

    /// Periodized kernel `Σ_{p,q} K(h₁ + 2p, h₂ + 2q)`, truncated at `|p|,|q| ≤ terms`.
    pub fn periodized(&self, h1: f64, h2: f64, terms: i64) -> f64 {
        let mut acc = 0.0;
        for p in -terms..=terms {
            for q in -terms..=terms {
                acc += self.eval(h1 + PERIOD * p as f64, h2 + PERIOD * q as f64);
            }
        }
        acc
    }
}

/// Wrapped kernel values on the `2S×2S` torus grid with spacing `1/S`.
///
/// `size` is the target grid size `S`; `S = 1` is accepted here so that the
/// smallest embedding can be inspected by hand.
pub fn wrap_kernel(kernel: &StationaryKernel, size: usize) -> Vec<f64> {
    let n = 2 * size;
    let h = 1.0 / size as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(kernel.circ(i as f64 * h, j as f64 * h));
        }
    }
    out
}

/// Handling of negative eigenvalues of the wrapped kernel.
///
/// The min-folded Gaussian kernel has a kink at the fold, so its spectrum
/// carries negative eigenvalues of relative size about `4e−4` at `a = 5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeEigenPolicy {
    /// Clamp every negative eigenvalue to zero and report the clamped mass.
    #[default]
    Clamp,
    /// Clamp only within `EIGEN_TOLERANCE·max|λ|`; fail beyond.
    Strict,
}

#[derive(Debug, Clone)]
pub struct CirculantSpectrum {
    size: usize,
    kernel: StationaryKernel,
    lambda: Vec<f64>,
    max_lambda: f64,
    min_lambda_raw: f64,
    max_imag_residue: f64,
    clamp_count: usize,
    clamped_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingReport {
    pub grid_size: usize,
    pub torus_size: usize,
    pub kernel_scale: f64,
    pub min_lambda: f64,
    pub max_lambda: f64,
    pub min_lambda_before_clamp: f64,
    /// `|min λ| / max λ` before clamping (zero when nothing was negative).
    pub clamp_ratio: f64,
    pub max_imag_residue: f64,
    pub clamp_count: usize,
    /// Variance added at every site by clamping: `Σ|λ⁻| / (2S)²`.
    pub clamped_mass: f64,
}

impl CirculantSpectrum {
    pub fn build(kernel: &StationaryKernel, grid: GridSpec) -> Result<Self> {
        Self::build_for_size(kernel, grid.size())
    }

    /// As [`CirculantSpectrum::build`], for any target size `S ≥ 1`.
    pub fn build_for_size(kernel: &StationaryKernel, size: usize) -> Result<Self> {
        Self::build_with_policy(kernel, size, NegativeEigenPolicy::Clamp)
    }

    pub fn build_with_policy(
        kernel: &StationaryKernel,
        size: usize,
        policy: NegativeEigenPolicy,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidGrid("grid size must be positive".into()));
        }
        let n = 2 * size;
        let mut buf: Vec<Complex64> = wrap_kernel(kernel, size)
            .into_iter()
            .map(|v| Complex64::new(v, 0.0))
            .collect();
        Fft2::new(n).forward(&mut buf);

        let max_abs = buf.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        let max_imag_residue = buf.iter().fold(0.0_f64, |m, c| m.max(c.im.abs()));
        if max_imag_residue > EIGEN_TOLERANCE * max_abs {
            return Err(Error::InvalidArgument(format!(
                "wrapped kernel spectrum has imaginary residue {max_imag_residue:e}"
            )));
        }
        let mut lambda: Vec<f64> = buf.iter().map(|c| c.re).collect();
        let min_lambda_raw = lambda.iter().copied().fold(f64::INFINITY, f64::min);
        let max_lambda = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = -EIGEN_TOLERANCE * max_abs;
        if policy == NegativeEigenPolicy::Strict && min_lambda_raw < floor {
            return Err(Error::Embedding {
                min_lambda: min_lambda_raw,
                max_lambda,
            });
        }
        let mut clamp_count = 0;
        let mut negative_sum = 0.0;
        for l in lambda.iter_mut() {
            if *l < 0.0 {
                negative_sum -= *l;
                *l = 0.0;
                clamp_count += 1;
            }
        }
        Ok(Self {
            size,
            kernel: *kernel,
            lambda,
            max_lambda,
            min_lambda_raw,
            max_imag_residue,
            clamp_count,
            clamped_mass: negative_sum / (n * n) as f64,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Side length of the torus grid, `2S`.
    pub fn torus_size(&self) -> usize {
        2 * self.size
    }

    pub fn kernel(&self) -> &StationaryKernel {
        &self.kernel
    }

    /// Eigenvalues, row-major over `(p, q)`, after clamping.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn lambda_at(&self, p: usize, q: usize) -> f64 {
        self.lambda[p * self.torus_size() + q]
    }

    pub fn report(&self) -> EmbeddingReport {
        EmbeddingReport {
            grid_size: self.size,
            torus_size: self.torus_size(),
            kernel_scale: self.kernel.scale,
            min_lambda: self.lambda.iter().copied().fold(f64::INFINITY, f64::min),
            max_lambda: self.max_lambda,
            min_lambda_before_clamp: self.min_lambda_raw,
            clamp_ratio: (-self.min_lambda_raw).max(0.0) / self.max_lambda,
            max_imag_residue: self.max_imag_residue,
            clamp_count: self.clamp_count,
            clamped_mass: self.clamped_mass,
        }
    }
}

/// Circulant-embedding spectrum for an `S×S` grid with negative eigenvalues clamped.
pub fn build_spectrum(kernel: &StationaryKernel, grid: GridSpec) -> Result<CirculantSpectrum> {
    CirculantSpectrum::build(kernel, grid)
}

/// Draws noise fields from a fixed spectrum. One sampler per worker.
#[derive(Debug)]
pub struct NoiseSampler {
    spectrum: Arc<CirculantSpectrum>,
    amplitude: Vec<f64>,
    fft: Fft2,
    rng: StreamRng,
    buf: Vec<Complex64>,
}

impl NoiseSampler {
    pub fn new(spectrum: Arc<CirculantSpectrum>, rng: StreamRng) -> Self {
        let n = spectrum.torus_size();
        let amplitude = spectrum.lambda.iter().map(|l| l.sqrt() / n as f64).collect();
        Self {
            fft: Fft2::new(n),
            amplitude,
            buf: vec![Complex64::new(0.0, 0.0); n * n],
            spectrum,
            rng,
        }
    }

    pub fn spectrum(&self) -> &CirculantSpectrum {
        &self.spectrum
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.spectrum.size).expect("sampler grid must have size >= 2")
    }

    /// One fresh zero-mean Gaussian field.
    pub fn sample_field(&mut self) -> GridField {
        for (slot, amp) in self.buf.iter_mut().zip(&self.amplitude) {
            let re: f64 = self.rng.sample(StandardNormal);
            let im: f64 = self.rng.sample(StandardNormal);
            *slot = Complex64::new(re, im) * *amp;
        }
        self.finish()
    }

    /// Synthesis from caller-supplied `z_pq` (row-major over the torus grid).
    pub fn synthesize(&mut self, z: &[Complex64]) -> Result<GridField> {
        if z.len() != self.buf.len() {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                self.buf.len(),
                z.len()
            )));
        }
        for ((slot, amp), zz) in self.buf.iter_mut().zip(&self.amplitude).zip(z) {
            *slot = zz * *amp;
        }
        Ok(self.finish())
    }

    fn finish(&mut self) -> GridField {
        self.fft.inverse_unnormalized(&mut self.buf);
        let n = self.spectrum.torus_size();
        let s = self.spectrum.size;
        let mut out = Vec::with_capacity(s * s);
        for i in 0..s {
            out.extend(self.buf[i * n..i * n + s].iter().map(|c| c.re));
        }
        GridField::from_raw(self.grid(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{stream, Role};

    #[test]
    fn wrap_kernel_smallest_case() {
        let k = StationaryKernel::default();
        let w = wrap_kernel(&k, 1);
        let e5 = (-5.0f64).exp();
        let expect = [1.0, e5, e5, e5 * e5];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn circ_folds_past_half_period() {
        let k = StationaryKernel::default();
        assert!((k.circ(1.5, 0.0) - (-1.25f64).exp()).abs() < 1e-15);
        assert_eq!(k.circ(0.0, 0.0), 1.0);
        let w = wrap_kernel(&k, 4);
        assert_eq!(w[0], 1.0);
        // index 6 on the 8-torus is u = 1.5
        assert!((w[6 * 8] - (-1.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn spectrum_smallest_case_by_hand() {
        let k = StationaryKernel::default();
        let s = CirculantSpectrum::build_for_size(&k, 1).unwrap();
        let e5 = (-5.0f64).exp();
        assert!((s.lambda_at(0, 0) - (1.0 + 2.0 * e5 + e5 * e5)).abs() < 1e-12);
        assert!((s.lambda_at(1, 1) - (1.0 - 2.0 * e5 + e5 * e5)).abs() < 1e-12);
        assert!((s.lambda_at(0, 1) - (1.0 - e5 * e5)).abs() < 1e-12);
    }

    fn dft_1d_real(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|p| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (2.0 * std::f64::consts::PI * (p * i) as f64 / n as f64).cos())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn spectrum_is_separable_product_and_clamped() {
        let k = StationaryKernel::default();
        for size in [2usize, 8, 25] {
            let s = CirculantSpectrum::build_for_size(&k, size).unwrap();
            let n = 2 * size;
            let row: Vec<f64> = (0..n)
                .map(|i| {
                    let u = i as f64 / size as f64;
                    k.eval_1d(u.min(PERIOD - u))
                })
                .collect();
            let l1 = dft_1d_real(&row);
            let max = l1.iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(2);
            let mut raw_min = f64::INFINITY;
            let mut neg = 0.0;
            for p in 0..n {
                for q in 0..n {
                    let v = l1[p] * l1[q];
                    raw_min = raw_min.min(v);
                    if v < 0.0 {
                        neg -= v;
                    }
                    assert!((s.lambda_at(p, q) - v.max(0.0)).abs() < 1e-10 * max);
                }
            }
            let r = s.report();
            assert!(r.min_lambda >= 0.0);
            assert!((r.min_lambda_before_clamp - raw_min).abs() < 1e-10 * max);
            assert!((r.clamped_mass - neg / (n * n) as f64).abs() < 1e-12);
            let sum: f64 = s.lambda().iter().sum();
            assert!((sum / (n * n) as f64 - 1.0 - r.clamped_mass).abs() < 1e-9, "size {size}");
        }
    }

    #[test]
    fn strict_policy_rejects_folded_gaussian() {
        let k = StationaryKernel::default();
        assert!(CirculantSpectrum::build_with_policy(&k, 1, NegativeEigenPolicy::Strict).is_ok());
        assert!(matches!(
            CirculantSpectrum::build_with_policy(&k, 8, NegativeEigenPolicy::Strict),
            Err(Error::Embedding { .. })
        ));
        let r = CirculantSpectrum::build_for_size(&k, 8).unwrap().report();
        assert!(r.clamp_ratio > 1e-4 && r.clamp_ratio < 1e-3);
        assert!(r.clamped_mass < 4e-3);
    }

    #[test]
    fn zero_coefficients_give_zero_field() {
        let k = StationaryKernel::default();
        let spec = Arc::new(CirculantSpectrum::build_for_size(&k, 6).unwrap());
        let mut sampler = NoiseSampler::new(spec, stream(0, &[], Role::Noise));
        let z = vec![Complex64::new(0.0, 0.0); 144];
        let f = sampler.synthesize(&z).unwrap();
        assert_eq!(f.sup_norm(), 0.0);
        assert!(sampler.synthesize(&z[..10]).is_err());
    }

    #[test]
    fn equal_seeds_give_identical_fields() {
        let k = StationaryKernel::default();
        let spec = Arc::new(CirculantSpectrum::build_for_size(&k, 8).unwrap());
        let mut a = NoiseSampler::new(spec.clone(), stream(5, &[1], Role::Noise));
        let mut b = NoiseSampler::new(spec, stream(5, &[1], Role::Noise));
        for _ in 0..5 {
            let (fa, fb) = (a.sample_field(), b.sample_field());
            assert!(fa.values().iter().zip(fb.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn periodized_kernel_at_origin_is_essentially_one() {
        let k = StationaryKernel::default();
        let v = k.periodized(0.0, 0.0, 4);
        assert!((v - 1.0).abs() < 1e-8);
        assert!(v >= 1.0);
    }
}
