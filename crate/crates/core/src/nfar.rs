//! Discretized NFAR dynamics `Z_{t+1} = Ψ₀(Z_t) + ξ_t` with the Hammerstein
//! transition
//!
//! ```text
//! Ψ₀(z)[i₁,j₁] = (1/S²) Σ_{i₂,j₂} c·K((i₁−i₂)/S, (j₁−j₂)/S) · τ(z[i₂,j₂])
//! ```
//!
//! and optional sup-norm truncation `Ψ(z)·1{‖z‖_∞ ≤ M}`.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::gp::{NoiseSampler, StationaryKernel};
use crate::grid::{GridField, GridSpec};

/// Any simulated value beyond this magnitude aborts the run.
pub const OVERFLOW_GUARD: f64 = 1e6;

/// Direct summation is used up to this grid size under [`ConvolutionMethod::Auto`].
pub const DIRECT_MAX_SIZE: usize = 32;

/// Pointwise nonlinearity applied inside the integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tau {
    /// `1.5 + 2.5 cos x + 2 sin 2x`.
    #[default]
    Trig,
    Identity,
    Zero,
}

impl Tau {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Tau::Trig => 1.5 + 2.5 * x.cos() + 2.0 * (2.0 * x).sin(),
            Tau::Identity => x,
            Tau::Zero => 0.0,
        }
    }

    /// Analytic sup bound, `None` when unbounded.
    pub fn analytic_sup(self) -> Option<f64> {
        match self {
            Tau::Trig => Some(1.5 + 2.5 + 2.0),
            Tau::Identity => None,
            Tau::Zero => Some(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMethod {
    #[default]
    Auto,
    Direct,
    Fft,
}

/// Serializable model parameters; combine with a grid to get an [`NfarModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NfarParams {
    pub kernel_scale: f64,
    pub amplitude: f64,
    pub tau: Tau,
    /// Truncation level `M`; absent means no truncation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trunc_level: Option<f64>,
    pub convolution: ConvolutionMethod,
}

impl Default for NfarParams {
    fn default() -> Self {
        Self {
            kernel_scale: 5.0,
            amplitude: 5.0,
            tau: Tau::Trig,
            trunc_level: None,
            convolution: ConvolutionMethod::Auto,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NfarModel {
    params: NfarParams,
    kernel: StationaryKernel,
    grid: GridSpec,
    /// `c·K(di/S, dj/S)` for `di, dj ∈ 0..S`, row-major. The kernel is even in
    /// each argument so offsets are looked up by absolute value.
    table: Arc<Vec<f64>>,
    fft: Option<Arc<FftConvolver>>,
}

#[derive(Debug)]
struct FftConvolver {
    fft: Fft2,
    kernel_hat: Vec<Complex64>,
}

impl NfarModel {
    pub fn new(params: NfarParams, grid: GridSpec) -> Result<Self> {
        let kernel = StationaryKernel::new(params.kernel_scale)?;
        if !params.amplitude.is_finite() {
            return Err(Error::InvalidArgument("amplitude must be finite".into()));
        }
        if let Some(m) = params.trunc_level {
            if !(m > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "truncation level must be positive, got {m}"
                )));
            }
        }
        let s = grid.size();
        let mut table = Vec::with_capacity(s * s);
        for di in 0..s {
            for dj in 0..s {
                table.push(params.amplitude * kernel.eval(grid.coord(di), grid.coord(dj)));
            }
        }
        let use_fft = match params.convolution {
            ConvolutionMethod::Direct => false,
            ConvolutionMethod::Fft => true,
            ConvolutionMethod::Auto => s > DIRECT_MAX_SIZE,
        };
        let fft = use_fft.then(|| Arc::new(FftConvolver::new(&table, s)));
        Ok(Self {
            params,
            kernel,
            grid,
            table: Arc::new(table),
            fft,
        })
    }

    pub fn standard(grid: GridSpec) -> Self {
        Self::new(NfarParams::default(), grid).expect("default parameters are valid")
    }

    pub fn with_tau(&self, tau: Tau) -> Result<Self> {
        Self::new(NfarParams { tau, ..self.params }, self.grid)
    }

    pub fn with_grid(&self, grid: GridSpec) -> Result<Self> {
        Self::new(self.params, grid)
    }

    pub fn params(&self) -> &NfarParams {
        &self.params
    }

    pub fn kernel(&self) -> &StationaryKernel {
        &self.kernel
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn tau(&self) -> Tau {
        self.params.tau
    }

    pub fn amplitude(&self) -> f64 {
        self.params.amplitude
    }

    /// `ψ₀(u, v, x) = c·K(u₁−v₁, u₂−v₂)·τ(x)`.
    pub fn true_kernel(&self, u1: f64, u2: f64, v1: f64, v2: f64, x: f64) -> f64 {
        self.params.amplitude * self.kernel.eval(u1 - v1, u2 - v2) * self.params.tau.eval(x)
    }

    fn check_grid(&self, z: &GridField) -> Result<()> {
        if z.spec() != self.grid {
            return Err(Error::Shape(format!(
                "field on a {}-grid, model on a {}-grid",
                z.size(),
                self.grid.size()
            )));
        }
        Ok(())
    }

    /// `Ψ₀(z)` on the model grid, zero when truncation is active and `‖z‖_∞ > M`.
    pub fn apply_true_operator(&self, z: &GridField) -> Result<GridField> {
        self.check_grid(z)?;
        if let Some(m) = self.params.trunc_level {
            if z.sup_norm() > m {
                return Ok(GridField::zeros(self.grid));
            }
        }
        let tau = self.params.tau;
        let tz: Vec<f64> = z.values().iter().map(|&x| tau.eval(x)).collect();
        let out = match &self.fft {
            Some(conv) => conv.convolve(&tz, self.grid.size()),
            None => self.convolve_direct(&tz),
        };
        GridField::new(self.grid, out)
    }

    /// Lookup-table summation, `O(S⁴)`.
    fn convolve_direct(&self, tz: &[f64]) -> Vec<f64> {
        let s = self.grid.size();
        let w = self.grid.weight();
        let table = &self.table;
        let mut out = vec![0.0; s * s];
        for i1 in 0..s {
            for j1 in 0..s {
                let mut acc = 0.0;
                for i2 in 0..s {
                    let row = &table[i1.abs_diff(i2) * s..(i1.abs_diff(i2) + 1) * s];
                    let src = &tz[i2 * s..(i2 + 1) * s];
                    for j2 in 0..s {
                        acc += row[j1.abs_diff(j2)] * src[j2];
                    }
                }
                out[i1 * s + j1] = acc * w;
            }
        }
        out
    }

    pub fn step(&self, z: &GridField, noise: &GridField) -> Result<GridField> {
        if noise.spec() != self.grid {
            return Err(Error::Shape(format!(
                "noise on a {}-grid, model on a {}-grid",
                noise.size(),
                self.grid.size()
            )));
        }
        self.apply_true_operator(z)?.add(noise)
    }

    /// Iterates from the zero field for `burn_in + length` fields and keeps the last `length`.
    pub fn simulate_path(
        &self,
        sampler: &mut NoiseSampler,
        length: usize,
        burn_in: usize,
    ) -> Result<NfarPath> {
        if length == 0 {
            return Err(Error::InvalidArgument("path length must be >= 1".into()));
        }
        if sampler.grid() != self.grid {
            return Err(Error::Shape(format!(
                "sampler on a {}-grid, model on a {}-grid",
                sampler.grid().size(),
                self.grid.size()
            )));
        }
        let total = burn_in + length;
        let mut fields = Vec::with_capacity(length);
        let mut z = GridField::zeros(self.grid);
        if burn_in == 0 {
            fields.push(z.clone());
        }
        for t in 2..=total {
            let noise = sampler.sample_field();
            z = self.step(&z, &noise).map_err(|e| match e {
                Error::NonFinite(_) => Error::Overflow {
                    step: t,
                    value: f64::INFINITY,
                },
                other => other,
            })?;
            let sup = z.sup_norm();
            if sup > OVERFLOW_GUARD {
                return Err(Error::Overflow { step: t, value: sup });
            }
            if t > burn_in {
                fields.push(z.clone());
            }
        }
        Ok(NfarPath {
            fields,
            meta: PathMeta {
                seed: None,
                burn_in,
                grid_size: self.grid.size(),
                model: self.params,
            },
        })
    }
}

impl FftConvolver {
    fn new(table: &[f64], s: usize) -> Self {
        let n = 2 * s;
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); n * n];
        for di in -(s as isize - 1)..=(s as isize - 1) {
            for dj in -(s as isize - 1)..=(s as isize - 1) {
                let ii = di.rem_euclid(n as isize) as usize;
                let jj = dj.rem_euclid(n as isize) as usize;
                kernel_hat[ii * n + jj] =
                    Complex64::new(table[di.unsigned_abs() * s + dj.unsigned_abs()], 0.0);
            }
        }
        let fft = Fft2::new(n);
        fft.forward(&mut kernel_hat);
        Self { fft, kernel_hat }
    }

    fn convolve(&self, tz: &[f64], s: usize) -> Vec<f64> {
        let n = 2 * s;
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..s {
            for j in 0..s {
                buf[i * n + j] = Complex64::new(tz[i * s + j], 0.0);
            }
        }
        self.fft.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.fft.inverse(&mut buf);
        let w = 1.0 / (s * s) as f64;
        let mut out = Vec::with_capacity(s * s);
        for i in 0..s {
            out.extend(buf[i * n..i * n + s].iter().map(|c| c.re * w));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub seed: Option<u64>,
    pub burn_in: usize,
    pub grid_size: usize,
    pub model: NfarParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NfarPath {
    pub fields: Vec<GridField>,
    pub meta: PathMeta,
}

impl NfarPath {
    pub fn new(fields: Vec<GridField>, meta: PathMeta) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidArgument("a path needs at least one field".into()))?;
        let spec = first.spec();
        if fields.iter().any(|f| f.spec() != spec) {
            return Err(Error::Shape("path fields live on different grids".into()));
        }
        Ok(Self { fields, meta })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn grid(&self) -> GridSpec {
        self.fields[0].spec()
    }

    pub fn last(&self) -> &GridField {
        self.fields.last().expect("paths are non-empty")
    }

    pub fn downsample(&self, target: GridSpec) -> Result<Self> {
        let fields = self
            .fields
            .iter()
            .map(|f| f.downsample(target))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fields,
            meta: PathMeta {
                grid_size: target.size(),
                ..self.meta.clone()
            },
        })
    }

    /// Writes `frame_000001.csv, …` (1-based) plus `meta.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (t, f) in self.fields.iter().enumerate() {
            f.write_csv(&dir.join(frame_name(t + 1)))?;
        }
        let meta = DirMeta {
            length: self.fields.len(),
            meta: self.meta.clone(),
        };
        let path = dir.join("meta.json");
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("meta.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: DirMeta = serde_json::from_str(&text)?;
        let fields = (1..=meta.length)
            .map(|t| GridField::read_csv(&dir.join(frame_name(t))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(fields, meta.meta)
    }
}

fn frame_name(t: usize) -> String {
    format!("frame_{t:06}.csv")
}

#[derive(Debug, Serialize, Deserialize)]
struct DirMeta {
    length: usize,
    #[serde(flatten)]
    meta: PathMeta,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::CirculantSpectrum;
    use crate::seed::{stream, Role};
    use rand::{Rng, SeedableRng};

    fn g(s: usize) -> GridSpec {
        GridSpec::new(s).unwrap()
    }

    /// Quadruple loop with the kernel evaluated from scratch at every term.
    fn naive_operator(model: &NfarModel, z: &GridField) -> Vec<f64> {
        let s = z.size();
        let h = 1.0 / s as f64;
        let mut out = vec![0.0; s * s];
        for i1 in 0..s {
            for j1 in 0..s {
                let mut acc = 0.0;
                for i2 in 0..s {
                    for j2 in 0..s {
                        acc += model.true_kernel(
                            i1 as f64 * h,
                            j1 as f64 * h,
                            i2 as f64 * h,
                            j2 as f64 * h,
                            z.get(i2, j2),
                        );
                    }
                }
                out[i1 * s + j1] = acc / (s * s) as f64;
            }
        }
        out
    }

    fn random_field(s: usize, seed: u64, scale: f64) -> GridField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        GridField::new(g(s), (0..s * s).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    #[test]
    fn tau_and_true_kernel_values() {
        assert_eq!(Tau::Trig.eval(0.0), 4.0);
        let m = NfarModel::standard(g(4));
        assert_eq!(m.true_kernel(0.0, 0.0, 0.0, 0.0, 0.0), 20.0);
        let v = m.true_kernel(0.0, 0.0, 0.5, 0.0, 0.0);
        assert!((v - 20.0 * (-1.25f64).exp()).abs() < 1e-12);
        assert!((v - 5.7301).abs() < 1e-4);
        for x in [-10.0, -1.0, 0.3, 2.0, 100.0] {
            assert!(m.true_kernel(0.1, 0.9, 0.7, 0.2, x).abs() <= 30.0);
        }
    }

    #[test]
    fn operator_matches_naive_oracle() {
        for s in [2usize, 3, 5, 8] {
            for method in [ConvolutionMethod::Direct, ConvolutionMethod::Fft] {
                let params = NfarParams {
                    convolution: method,
                    ..Default::default()
                };
                let m = NfarModel::new(params, g(s)).unwrap();
                let z = random_field(s, s as u64, 4.0);
                let got = m.apply_true_operator(&z).unwrap();
                let expect = naive_operator(&m, &z);
                for (a, b) in got.values().iter().zip(&expect) {
                    assert!((a - b).abs() < 1e-12, "s={s} {method:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn zero_input_at_origin_is_twenty_times_kernel_mean() {
        let m = NfarModel::standard(g(4));
        let out = m.apply_true_operator(&GridField::zeros(g(4))).unwrap();
        let mut mean = 0.0;
        for k in 0..4 {
            for l in 0..4 {
                mean += (-5.0 * ((k * k + l * l) as f64) / 16.0).exp();
            }
        }
        mean /= 16.0;
        assert!((out.get(0, 0) - 20.0 * mean).abs() < 1e-12);
    }

    #[test]
    fn fft_path_matches_direct_at_larger_sizes() {
        for s in [16usize, 40] {
            let direct = NfarModel::new(
                NfarParams {
                    convolution: ConvolutionMethod::Direct,
                    ..Default::default()
                },
                g(s),
            )
            .unwrap();
            let fft = NfarModel::new(
                NfarParams {
                    convolution: ConvolutionMethod::Fft,
                    ..Default::default()
                },
                g(s),
            )
            .unwrap();
            let z = random_field(s, 3, 10.0);
            let a = direct.apply_true_operator(&z).unwrap();
            let b = fft.apply_true_operator(&z).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn truncation_zeroes_large_inputs() {
        let m = NfarModel::new(
            NfarParams {
                trunc_level: Some(1.0),
                ..Default::default()
            },
            g(4),
        )
        .unwrap();
        let out = m.apply_true_operator(&GridField::constant(g(4), 2.0)).unwrap();
        assert_eq!(out.sup_norm(), 0.0);
        let inside = m.apply_true_operator(&GridField::constant(g(4), 0.5)).unwrap();
        assert!(inside.sup_norm() > 0.0);
    }

    #[test]
    fn operator_output_bounded_by_thirty() {
        let m = NfarModel::standard(g(8));
        for seed in 0..20 {
            let z = random_field(8, seed, 50.0);
            assert!(m.apply_true_operator(&z).unwrap().sup_norm() <= 30.0);
        }
    }

    #[test]
    fn step_adds_noise() {
        let m = NfarModel::standard(g(5));
        let zero = GridField::zeros(g(5));
        let base = m.apply_true_operator(&zero).unwrap();
        assert_eq!(m.step(&zero, &zero).unwrap(), base);
        let n = random_field(5, 9, 1.0);
        let out = m.step(&zero, &n).unwrap();
        for k in 0..25 {
            assert!((out.values()[k] - base.values()[k] - n.values()[k]).abs() < 1e-15);
        }
        assert!(out.sup_norm() <= 30.0 + n.sup_norm());
        assert!(m.step(&zero, &GridField::zeros(g(4))).is_err());
    }

    fn sampler(s: usize, seed: u64) -> NoiseSampler {
        let spec = Arc::new(
            CirculantSpectrum::build(&StationaryKernel::default(), g(s)).unwrap(),
        );
        NoiseSampler::new(spec, stream(seed, &[], Role::Noise))
    }

    #[test]
    fn trivial_path_is_initial_value() {
        let m = NfarModel::standard(g(4));
        let p = m.simulate_path(&mut sampler(4, 1), 1, 0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.fields[0].sup_norm(), 0.0);
        assert!(m.simulate_path(&mut sampler(4, 1), 0, 10).is_err());
    }

    #[test]
    fn path_replays_with_equal_seed() {
        let m = NfarModel::standard(g(6));
        let a = m.simulate_path(&mut sampler(6, 11), 20, 30).unwrap();
        let b = m.simulate_path(&mut sampler(6, 11), 20, 30).unwrap();
        assert_eq!(a, b);
        let c = m.simulate_path(&mut sampler(6, 12), 20, 30).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unstable_dynamics_hit_overflow_guard() {
        let m = NfarModel::new(
            NfarParams {
                tau: Tau::Identity,
                amplitude: 1e3,
                ..Default::default()
            },
            g(4),
        )
        .unwrap();
        let err = m.simulate_path(&mut sampler(4, 2), 50, 0).unwrap_err();
        assert!(matches!(err, Error::Overflow { .. }), "{err}");
    }

    #[test]
    fn path_directory_round_trip() {
        let m = NfarModel::standard(g(4));
        let mut p = m.simulate_path(&mut sampler(4, 3), 5, 2).unwrap();
        p.meta.seed = Some(3);
        let dir = tempfile::tempdir().unwrap();
        p.write_dir(dir.path()).unwrap();
        let q = NfarPath::read_dir(dir.path()).unwrap();
        assert_eq!(p, q);
    }
}
