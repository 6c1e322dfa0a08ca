//! Square 2-D discrete Fourier transforms on row-major buffers.
//!
//! Convention: the forward transform is `X[p,q] = Σ x[i,j] e^{−2πi(pi+qj)/N}`
//! with no prefactor; the inverse is `x[i,j] = (1/N²) Σ X[p,q] e^{+2πi(pi+qj)/N}`.
//! [`inverse_unnormalized`] omits the `1/N²`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn apply(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "buffer is not {n}x{n}");
        // rows
        plan.process(data);
        // columns, through a transpose
        transpose_square(data, n);
        plan.process(data);
        transpose_square(data, n);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(&self.forward, data);
    }

    pub fn inverse_unnormalized(&self, data: &mut [Complex64]) {
        self.apply(&self.inverse, data);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse_unnormalized(data);
        let scale = 1.0 / (self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn naive_dft(x: &[Complex64], n: usize, sign: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for p in 0..n {
            for q in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let ang = sign * 2.0 * PI * ((p * i + q * j) % n) as f64 / n as f64;
                        acc += x[i * n + j] * Complex64::from_polar(1.0, ang);
                    }
                }
                out[p * n + q] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for n in [2usize, 3, 6, 8] {
            let x: Vec<Complex64> = (0..n * n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let fft = Fft2::new(n);
            let mut y = x.clone();
            fft.forward(&mut y);
            let expect = naive_dft(&x, n, -1.0);
            for (a, b) in y.iter().zip(&expect) {
                assert!((a - b).norm() < 1e-12);
            }
            let mut z = x.clone();
            fft.inverse_unnormalized(&mut z);
            let expect = naive_dft(&x, n, 1.0);
            for (a, b) in z.iter().zip(&expect) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for n in [4usize, 32, 50] {
            let x: Vec<Complex64> = (0..n * n)
                .map(|_| Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
                .collect();
            let fft = Fft2::new(n);
            let mut y = x.clone();
            fft.forward(&mut y);
            fft.inverse(&mut y);
            let norm: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err / norm < 1e-12, "n={n}: rel err {}", err / norm);
        }
    }
}
