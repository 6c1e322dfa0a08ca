//! Numerical audit of the sufficient conditions for geometric ergodicity of
//! the NFAR chain, on the discretized covariance operator.
//!
//! Everything here is numerical evidence at grid resolution `S`, never a
//! proof: the conditions concern operators on `L²([0,1]²)` and the checks
//! below see only their quadrature discretizations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::StationaryKernel;
use crate::grid::GridSpec;
use crate::nfar::{NfarModel, NfarPath, Tau};

/// Dense `S²×S²` operators are refused beyond this grid size.
pub const MAX_DENSE_GRID: usize = 40;

/// Eigenvalues below this are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Autocorrelations at or below this magnitude are not used in decay fits.
pub const ACF_FIT_THRESHOLD: f64 = 0.02;

const TAU_SEARCH_HALF_WIDTH: f64 = 20.0;
const TAU_SEARCH_STEP: f64 = 1e-3;

fn resolution_note(grid: GridSpec) -> String {
    format!(
        "numerical evidence at grid resolution S={} (discretized operator, not a proof)",
        grid.size()
    )
}

/// Quadrature discretization of `(Qf)(u) = ∫ K(u−v) f(v) dv`:
/// the symmetric matrix `K((i−k)/S, (j−l)/S) / S²` with its eigenpairs.
#[derive(Debug, Clone)]
pub struct CovarianceOperatorDisc {
    grid: GridSpec,
    matrix: DMatrix<f64>,
    /// Nonincreasing.
    eigvals: Vec<f64>,
    /// Columns are Euclidean-unit eigenvectors matching `eigvals`.
    eigvecs: DMatrix<f64>,
}

/// Dense quadrature discretization of the noise covariance operator with its eigendecomposition.
pub fn discretize_covariance(kernel: &StationaryKernel, grid: GridSpec) -> Result<CovarianceOperatorDisc> {
    CovarianceOperatorDisc::new(kernel, grid)
}

impl CovarianceOperatorDisc {
    pub fn new(kernel: &StationaryKernel, grid: GridSpec) -> Result<Self> {
        let s = grid.size();
        if s > MAX_DENSE_GRID {
            return Err(Error::TooLarge(s, MAX_DENSE_GRID));
        }
        let n = grid.len();
        let w = grid.weight();
        let matrix = DMatrix::from_fn(n, n, |a, b| {
            let (i, j) = (a / s, a % s);
            let (k, l) = (b / s, b % s);
            kernel.eval(grid.coord(i) - grid.coord(k), grid.coord(j) - grid.coord(l)) * w
        });
        let eig = SymmetricEigen::new(matrix.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        let eigvals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let eigvecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self {
            grid,
            matrix,
            eigvals,
            eigvecs,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    /// Euclidean-unit eigenvector `k` (0-based, by decreasing eigenvalue).
    pub fn eigvec(&self, k: usize) -> DVector<f64> {
        self.eigvecs.column(k).into_owned()
    }

    /// Eigenfunction `k` normalized in the quadrature inner product `(1/S²) Σ f g`.
    pub fn eigenfunction(&self, k: usize) -> Vec<f64> {
        let s = self.grid.size() as f64;
        self.eigvecs.column(k).iter().map(|v| v * s).collect()
    }

    /// Operator norm `‖Q‖_L = λ₁`.
    pub fn lambda_max(&self) -> f64 {
        self.eigvals[0]
    }

    /// Trace `Σ λ_i`, computed from the diagonal.
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn eigval_sum(&self) -> f64 {
        self.eigvals.iter().sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in (a + 1)..n {
                worst = worst.max((self.matrix[(a, b)] - self.matrix[(b, a)]).abs());
            }
        }
        worst
    }

    /// `‖Qv − λv‖₂` for eigenpair `k`.
    pub fn residual(&self, k: usize) -> f64 {
        let v = self.eigvec(k);
        (&self.matrix * &v - &v * self.eigvals[k]).norm()
    }

    pub fn count_above(&self, floor: f64) -> usize {
        self.eigvals.iter().filter(|&&l| l > floor).count()
    }
}

/// Sup of `|τ|` by grid search on `[−20, 20]` with step `1e−3`, plus a growth test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TauBound {
    pub sup: f64,
    pub sup_inner: f64,
    pub bounded: bool,
    /// Linear growth rate `lim sup |τ(x)|/|x|` estimated on the outer half of the search domain.
    pub growth: f64,
    pub at_zero: f64,
}

pub fn tau_bound(tau: Tau) -> TauBound {
    let steps = (2.0 * TAU_SEARCH_HALF_WIDTH / TAU_SEARCH_STEP).round() as i64;
    let inner = TAU_SEARCH_HALF_WIDTH / 2.0;
    let at_zero = tau.eval(0.0).abs();
    let mut sup = 0.0f64;
    let mut sup_inner = 0.0f64;
    let mut growth = 0.0f64;
    for k in 0..=steps {
        let x = -TAU_SEARCH_HALF_WIDTH + k as f64 * TAU_SEARCH_STEP;
        let v = tau.eval(x).abs();
        sup = sup.max(v);
        if x.abs() <= inner {
            sup_inner = sup_inner.max(v);
        } else {
            growth = growth.max((v - at_zero) / x.abs());
        }
    }
    // still growing at the edge of the search domain => unbounded
    let bounded = sup <= sup_inner * (1.0 + 1e-9) + 1e-12;
    TauBound {
        sup,
        sup_inner,
        bounded,
        growth: if bounded { 0.0 } else { growth },
        at_zero,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub grid_size: usize,
    pub c1: f64,
    pub c2: f64,
    pub lambda_max: f64,
    pub trace: f64,
    /// `c₁‖Q‖_L`.
    pub rho: f64,
    /// `c₂‖Q‖_L + √‖Q‖_T`.
    pub kappa: f64,
    pub tau: TauBound,
    pub passes: bool,
    pub note: String,
}

/// Growth bound `‖m₀(x)‖ ≤ c₁‖x‖ + c₂` for `m₀(x) = c·τ∘x` and the drift
/// constants it implies: `ρ = c₁‖Q‖_L` must be below one.
pub fn check_assumption_m2(model: &NfarModel, q: &CovarianceOperatorDisc) -> DriftReport {
    let tb = tau_bound(model.tau());
    let amp = model.amplitude().abs();
    let (c1, c2) = if tb.bounded {
        (0.0, amp * tb.sup)
    } else {
        (amp * tb.growth, amp * tb.at_zero)
    };
    let lambda_max = q.lambda_max();
    let trace = q.trace();
    let rho = c1 * lambda_max;
    DriftReport {
        grid_size: q.grid().size(),
        c1,
        c2,
        lambda_max,
        trace,
        rho,
        kappa: c2 * lambda_max + trace.sqrt(),
        tau: tb,
        passes: (0.0..1.0).contains(&rho),
        note: resolution_note(q.grid()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleCondReport {
    pub grid_size: usize,
    /// `s_m = Σ_{i,j ≤ m} f_ij² / λ_i²` for `m = 1, 2, …`.
    pub partial_sums: Vec<f64>,
    pub diagonal_energy: f64,
    pub off_diagonal_energy: f64,
    /// Bound on `sup_x Σ_i τ_i²(x)` through `‖τ‖_∞²`.
    pub tau_sup_sq: f64,
    pub tau_bounded: bool,
    /// Partial sums keep growing linearly: the series condition fails.
    pub diverging: bool,
    pub series_condition_holds: bool,
    /// The transition factors as `Q ∘ m₀` with bounded `m₀ = c·τ∘x`.
    pub factorization_holds: bool,
    pub positive_eigenvalues: usize,
    pub warnings: Vec<String>,
    pub note: String,
}

impl ExampleCondReport {
    pub fn summary(&self) -> String {
        format!(
            "series condition Σ f_ij²/λ_i²: {} (s_{} = {:.4e}); factorization Ψ₀ = Q∘m₀ with bounded m₀: {}; {}",
            if self.series_condition_holds { "holds" } else { "fails (partial sums diverge)" },
            self.partial_sums.len(),
            self.partial_sums.last().copied().unwrap_or(0.0),
            if self.factorization_holds { "holds" } else { "not established" },
            self.note
        )
    }
}

/// Series condition for the Hammerstein kernel `f(u,v) = c·K(u−v)` of `model`.
pub fn check_example_condition(
    model: &NfarModel,
    q: &CovarianceOperatorDisc,
    m_terms: usize,
) -> Result<ExampleCondReport> {
    let grid = q.grid();
    if model.grid() != grid {
        return Err(Error::Shape("model and covariance operator grids differ".into()));
    }
    let s = grid.size();
    let kernel = model.kernel();
    let amp = model.amplitude();
    let f = DMatrix::from_fn(grid.len(), grid.len(), |a, b| {
        amp * kernel.eval(
            grid.coord(a / s) - grid.coord(b / s),
            grid.coord(a % s) - grid.coord(b % s),
        )
    });
    check_example_condition_with(&f, model.tau(), q, m_terms)
}

/// Series condition for an arbitrary kernel given by its grid values
/// `f_values[(a, b)] = f(u_a, v_b)`, with `τ` for the sup bound.
pub fn check_example_condition_with(
    f_values: &DMatrix<f64>,
    tau: Tau,
    q: &CovarianceOperatorDisc,
    m_terms: usize,
) -> Result<ExampleCondReport> {
    let grid = q.grid();
    let n = grid.len();
    if f_values.nrows() != n || f_values.ncols() != n {
        return Err(Error::Shape(format!("kernel matrix must be {n}x{n}")));
    }
    if m_terms == 0 || m_terms > n {
        return Err(Error::InvalidArgument(format!(
            "m_terms must be in 1..={n}, got {m_terms}"
        )));
    }
    let mut warnings = Vec::new();
    let mut m = m_terms;
    if let Some(k) = q.eigvals()[..m_terms].iter().position(|&l| l < EIGEN_FLOOR) {
        warnings.push(format!(
            "eigenvalue {} = {:e} below {EIGEN_FLOOR:e}; series truncated at m = {k}",
            k + 1,
            q.eigvals()[k]
        ));
        m = k;
    }
    if m == 0 {
        return Err(Error::InvalidArgument("no usable eigenvalues".into()));
    }
    // f_ij = (1/S⁴) e_iᵀ F e_j with quadrature-normalized e = S·v  ⇒  v_iᵀ F v_j / S²
    let v = q.eigvecs.columns(0, m);
    let coeffs = v.transpose() * f_values * v * grid.weight();
    let lam = &q.eigvals()[..m];

    let mut partial_sums = Vec::with_capacity(m);
    for k in 0..m {
        let prev = partial_sums.last().copied().unwrap_or(0.0);
        // add row k and column k of the leading (k+1)×(k+1) block
        let mut inc = 0.0;
        for j in 0..=k {
            inc += coeffs[(k, j)].powi(2) / lam[k].powi(2);
            if j < k {
                inc += coeffs[(j, k)].powi(2) / lam[j].powi(2);
            }
        }
        partial_sums.push(prev + inc);
    }
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                diag += coeffs[(i, j)].powi(2);
            } else {
                off += coeffs[(i, j)].powi(2);
            }
        }
    }
    let diverging = grows_linearly(&partial_sums);
    let tb = tau_bound(tau);
    Ok(ExampleCondReport {
        grid_size: grid.size(),
        partial_sums,
        diagonal_energy: diag,
        off_diagonal_energy: off,
        tau_sup_sq: tb.sup * tb.sup,
        tau_bounded: tb.bounded,
        diverging,
        series_condition_holds: !diverging,
        factorization_holds: tb.bounded,
        positive_eigenvalues: q.count_above(EIGEN_FLOOR),
        warnings,
        note: resolution_note(grid),
    })
}

/// Increments over the last quarter still at least half of those over the first quarter.
fn grows_linearly(partial: &[f64]) -> bool {
    if partial.len() < 4 {
        return false;
    }
    let inc: Vec<f64> = std::iter::once(partial[0])
        .chain(partial.windows(2).map(|w| w[1] - w[0]))
        .collect();
    let q = inc.len() / 4;
    let head = inc[..q].iter().sum::<f64>() / q as f64;
    let tail = inc[inc.len() - q..].iter().sum::<f64>() / q as f64;
    head > 0.0 && tail >= 0.5 * head
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftTestOutcome {
    pub passed: bool,
    /// `ρ ≥ 1` makes the inequality vacuous; such reports never pass.
    pub invalid_rho: bool,
    pub inequality_holds: bool,
    /// Mean of `‖X_{t+1}‖ − ρ‖X_t‖`.
    pub mean_statistic: f64,
    pub stderr: f64,
    pub kappa: f64,
    /// `κ + 3·stderr − mean`; nonnegative on a pass.
    pub margin: f64,
    pub pairs: usize,
    pub mean_norm: f64,
}

/// Empirical drift inequality `E[‖X_{t+1}‖ | X_t] ≤ ρ‖X_t‖ + κ` averaged over a path.
pub fn empirical_drift_test(path: &NfarPath, report: &DriftReport) -> Result<DriftTestOutcome> {
    empirical_drift_test_with(path, report.rho, report.kappa)
}

pub fn empirical_drift_test_with(path: &NfarPath, rho: f64, kappa: f64) -> Result<DriftTestOutcome> {
    if path.len() < 2 {
        return Err(Error::InvalidArgument("drift test needs at least two fields".into()));
    }
    let norms: Vec<f64> = path.fields.iter().map(|f| f.l2_norm()).collect();
    let stats: Vec<f64> = norms.windows(2).map(|w| w[1] - rho * w[0]).collect();
    let (mean, sd) = mean_sd(&stats);
    let stderr = sd / (stats.len() as f64).sqrt();
    let inequality_holds = mean <= kappa + 3.0 * stderr;
    let invalid_rho = !(0.0..1.0).contains(&rho);
    Ok(DriftTestOutcome {
        passed: inequality_holds && !invalid_rho,
        invalid_rho,
        inequality_holds,
        mean_statistic: mean,
        stderr,
        kappa,
        margin: kappa + 3.0 * stderr - mean,
        pairs: stats.len(),
        mean_norm: mean_sd(&norms).0,
    })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Sample autocorrelation `ρ̂(0..=max_lag)` with the biased (`1/T`) estimator.
/// `None` for a series with zero variance.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if !(c0 > 1e-300) || c0 <= 1e-24 * mean * mean {
        return None;
    }
    Some(
        (0..=max_lag.min(n - 1))
            .map(|j| {
                let c: f64 = series[..n - j]
                    .iter()
                    .zip(&series[j..])
                    .map(|(a, b)| (a - mean) * (b - mean))
                    .sum::<f64>()
                    / n as f64;
                c / c0
            })
            .collect(),
    )
}

/// Proxy for mixing speed: exponential fit to the autocorrelation of the spatial mean.
/// This is not an estimate of the β-mixing coefficients themselves.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecayEstimate {
    Fitted {
        rate: f64,
        intercept: f64,
        r2: f64,
        lags_used: usize,
        acf: Vec<f64>,
    },
    /// Autocorrelation falls to the noise floor before two lags: counted as fast decay.
    TooFastToFit { acf: Vec<f64> },
    /// Zero-variance functional; autocorrelation undefined.
    Degenerate,
}

impl DecayEstimate {
    pub fn acf(&self) -> Option<&[f64]> {
        match self {
            DecayEstimate::Fitted { acf, .. } | DecayEstimate::TooFastToFit { acf } => Some(acf),
            DecayEstimate::Degenerate => None,
        }
    }

    pub fn rate(&self) -> Option<f64> {
        match self {
            DecayEstimate::Fitted { rate, .. } => Some(*rate),
            _ => None,
        }
    }

    pub fn r2(&self) -> Option<f64> {
        match self {
            DecayEstimate::Fitted { r2, .. } => Some(*r2),
            _ => None,
        }
    }

    /// Fitted with positive rate, or too fast to fit.
    pub fn indicates_decay(&self) -> bool {
        match self {
            DecayEstimate::Fitted { rate, .. } => *rate > 0.0,
            DecayEstimate::TooFastToFit { .. } => true,
            DecayEstimate::Degenerate => false,
        }
    }
}

/// Fits `log|ρ̂(j)| ≈ a − c·j` over the leading run of lags `j ≥ 1` with
/// `|ρ̂(j)| > 0.02`, where `ρ̂` is the autocorrelation of `t ↦ mean(Z_t)`.
pub fn mixing_decay_estimate(path: &NfarPath, max_lag: usize) -> Result<DecayEstimate> {
    if max_lag == 0 {
        return Err(Error::InvalidArgument("max_lag must be >= 1".into()));
    }
    if path.len() < 20 * max_lag {
        return Err(Error::InvalidArgument(format!(
            "path of length {} too short for max_lag {max_lag} (needs {})",
            path.len(),
            20 * max_lag
        )));
    }
    let series: Vec<f64> = path.fields.iter().map(|f| f.mean()).collect();
    let Some(acf) = autocorrelation(&series, max_lag) else {
        return Ok(DecayEstimate::Degenerate);
    };
    let lags: Vec<usize> = (1..acf.len())
        .take_while(|&j| acf[j].abs() > ACF_FIT_THRESHOLD)
        .collect();
    if lags.len() < 2 {
        return Ok(DecayEstimate::TooFastToFit { acf });
    }
    let xs: Vec<f64> = lags.iter().map(|&j| j as f64).collect();
    let ys: Vec<f64> = lags.iter().map(|&j| acf[j].abs().ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(DecayEstimate::Fitted {
        rate: -slope,
        intercept,
        r2,
        lags_used: lags.len(),
        acf,
    })
}

/// Ordinary least squares `y ≈ intercept + slope·x`; returns `(slope, intercept, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}
