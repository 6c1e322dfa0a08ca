//! Urysohn operators with a network kernel and their training loop.
//!
//! For a kernel `ψ(u₁,u₂,v₁,v₂,x)` the discretized operator is
//!
//! ```text
//! Ψ_ψ(z)[i,j] = Σ_p w_p · ψ(i/S, j/S, v_p, z(v_p))
//! ```
//!
//! where `(v_p, w_p)` is a quadrature rule on the grid: every point with
//! weight `1/S²` ([`Integration::FullSum`]), or `S_MC` points drawn uniformly
//! with replacement, each carrying `1/S_MC` ([`Integration::MonteCarlo`]).
//! Repeated Monte Carlo draws are merged into one point with summed weight,
//! which leaves the estimator unchanged and evaluates the network once per
//! distinct point.

use std::ops::Range;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::mlp::{AdamConfig, AdamState, Checkpoint, ForwardCache, MlpArchitecture, MlpParams};
use crate::nfar::NfarPath;
use crate::seed::{stream, Role};

/// Kernel network input width: `(u₁, u₂, v₁, v₂, x)`.
pub const KERNEL_INPUT_DIM: usize = 5;

/// Upper bound on rows per forward pass when evaluating whole fields.
const EVAL_CHUNK_ROWS: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Integration {
    FullSum,
    MonteCarlo { s_mc: usize, seed: u64 },
}

/// Grid points (flat indices) with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<usize>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn full(grid: GridSpec) -> Self {
        Self {
            points: (0..grid.len()).collect(),
            weights: vec![grid.weight(); grid.len()],
        }
    }

    /// `s_mc` uniform draws with replacement; duplicates merged, ordered by index.
    pub fn monte_carlo<R: Rng + ?Sized>(grid: GridSpec, s_mc: usize, rng: &mut R) -> Result<Self> {
        if s_mc == 0 {
            return Err(Error::InvalidArgument("S_MC must be >= 1".into()));
        }
        let mut counts = vec![0u32; grid.len()];
        for _ in 0..s_mc {
            counts[rng.random_range(0..grid.len())] += 1;
        }
        let w = 1.0 / s_mc as f64;
        let (points, weights) = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(p, &c)| (p, c as f64 * w))
            .unzip();
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[inline]
fn push_row(buf: &mut Vec<f64>, grid: GridSpec, site: usize, point: usize, x: f64) {
    let s = grid.size();
    buf.extend_from_slice(&[
        grid.coord(site / s),
        grid.coord(site % s),
        grid.coord(point / s),
        grid.coord(point % s),
        x,
    ]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorModel {
    pub net: MlpParams,
    pub grid: GridSpec,
    pub integration: Integration,
    pub trunc_level: Option<f64>,
}

impl OperatorModel {
    pub fn new(net: MlpParams, grid: GridSpec, integration: Integration) -> Result<Self> {
        let arch = net.arch();
        if arch.input_dim != KERNEL_INPUT_DIM || arch.output_dim != 1 {
            return Err(Error::Shape(format!(
                "kernel network must map {KERNEL_INPUT_DIM} -> 1, got {} -> {}",
                arch.input_dim, arch.output_dim
            )));
        }
        if let Integration::MonteCarlo { s_mc: 0, .. } = integration {
            return Err(Error::InvalidArgument("S_MC must be >= 1".into()));
        }
        Ok(Self {
            net,
            grid,
            integration,
            trunc_level: None,
        })
    }

    pub fn with_truncation(mut self, level: Option<f64>) -> Self {
        self.trunc_level = level;
        self
    }

    /// Kernel value `ψ(u₁,u₂,v₁,v₂,x)` for a single point.
    pub fn kernel(&self, u1: f64, u2: f64, v1: f64, v2: f64, x: f64) -> Result<f64> {
        Ok(self.net.forward(&[u1, u2, v1, v2, x])?[0])
    }

    fn check_field(&self, z: &GridField) -> Result<()> {
        if z.spec() != self.grid {
            return Err(Error::Shape(format!(
                "field on a {}-grid, operator on a {}-grid",
                z.size(),
                self.grid.size()
            )));
        }
        Ok(())
    }

    /// The rule this model integrates with: all points, or the model's own
    /// fixed Monte Carlo point set.
    pub fn rule(&self) -> Result<QuadratureRule> {
        match self.integration {
            Integration::FullSum => Ok(QuadratureRule::full(self.grid)),
            Integration::MonteCarlo { s_mc, seed } => {
                QuadratureRule::monte_carlo(self.grid, s_mc, &mut stream(seed, &[], Role::McValidation))
            }
        }
    }

    pub fn apply(&self, z: &GridField) -> Result<GridField> {
        self.apply_with_rule(z, &self.rule()?)
    }

    /// Exact quadrature over all grid points regardless of `integration`.
    pub fn apply_full(&self, z: &GridField) -> Result<GridField> {
        self.apply_with_rule(z, &QuadratureRule::full(self.grid))
    }

    /// Fresh Monte Carlo point set drawn from `rng` and shared by all output sites.
    pub fn apply_mc<R: Rng + ?Sized>(&self, z: &GridField, s_mc: usize, rng: &mut R) -> Result<GridField> {
        self.apply_with_rule(z, &QuadratureRule::monte_carlo(self.grid, s_mc, rng)?)
    }

    pub fn apply_with_rule(&self, z: &GridField, rule: &QuadratureRule) -> Result<GridField> {
        self.check_field(z)?;
        if let Some(m) = self.trunc_level {
            if z.sup_norm() > m {
                return Ok(GridField::zeros(self.grid));
            }
        }
        let n_sites = self.grid.len();
        let n_pts = rule.len();
        let sites_per_chunk = (EVAL_CHUNK_ROWS / n_pts.max(1)).max(1);
        let zv = z.values();
        let mut out = Vec::with_capacity(n_sites);
        let mut rows = Vec::with_capacity(sites_per_chunk * n_pts * KERNEL_INPUT_DIM);
        for chunk_start in (0..n_sites).step_by(sites_per_chunk) {
            let chunk_end = (chunk_start + sites_per_chunk).min(n_sites);
            rows.clear();
            for site in chunk_start..chunk_end {
                for &p in &rule.points {
                    push_row(&mut rows, self.grid, site, p, zv[p]);
                }
            }
            let vals = self.net.forward(&rows)?;
            for site_vals in vals.chunks_exact(n_pts) {
                out.push(
                    site_vals
                        .iter()
                        .zip(&rule.weights)
                        .map(|(v, w)| v * w)
                        .sum::<f64>(),
                );
            }
        }
        GridField::new(self.grid, out)
    }

    pub fn checkpoint(&self, adam: Option<&AdamState>, seed: u64, epoch: usize) -> Checkpoint {
        let mut ck = Checkpoint::new(&self.net, adam, seed, epoch);
        ck.grid_size = Some(self.grid.size());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, grid: GridSpec) -> Result<Self> {
        Self::new(ck.params()?, grid, Integration::FullSum)
    }
}

/// Input/target field pairs `(Z_t, Z_{t+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    inputs: Vec<GridField>,
    targets: Vec<GridField>,
}

impl PairSet {
    pub fn new(inputs: Vec<GridField>, targets: Vec<GridField>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(first) = inputs.first() {
            let g = first.spec();
            if inputs.iter().chain(&targets).any(|f| f.spec() != g) {
                return Err(Error::Shape("pair fields live on different grids".into()));
            }
        }
        Ok(Self { inputs, targets })
    }

    /// Consecutive pairs `(fields[k], fields[k+1])` for `k` in `range`.
    pub fn from_path(path: &NfarPath, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end + 1 > path.len() {
            return Err(Error::InvalidArgument(format!(
                "pair range {range:?} exceeds path of length {}",
                path.len()
            )));
        }
        let inputs = path.fields[range.clone()].to_vec();
        let targets = path.fields[range.start + 1..range.end + 1].to_vec();
        Self::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn grid(&self) -> Option<GridSpec> {
        self.inputs.first().map(|f| f.spec())
    }

    pub fn inputs(&self) -> &[GridField] {
        &self.inputs
    }

    pub fn targets(&self) -> &[GridField] {
        &self.targets
    }
}

/// Mean over pairs of `(1/S²) Σ_{i,j} (target − Ψ(input))²` under `rule`.
pub fn pair_risk(model: &OperatorModel, pairs: &PairSet, rule: &QuadratureRule) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty pair set".into()));
    }
    let mut total = 0.0;
    for (x, y) in pairs.inputs.iter().zip(&pairs.targets) {
        total += y.dist_sq(&model.apply_with_rule(x, rule)?)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Empirical risk over the consecutive pairs whose inputs are indexed by
/// `range` (0-based), using the model's own integration rule.
pub fn empirical_risk(model: &OperatorModel, path: &NfarPath, range: Range<usize>) -> Result<f64> {
    if range.is_empty() {
        return Err(Error::InvalidArgument("empty index range".into()));
    }
    if path.len() < 2 {
        return Err(Error::InvalidArgument("path needs at least two fields".into()));
    }
    let pairs = PairSet::from_path(path, range)?;
    pair_risk(model, &pairs, &model.rule()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub train_fraction: f64,
    pub s_mc: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Return the best-validation weights instead of the final ones.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs_max: 200,
            patience: 20,
            batch_size: 128,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            train_fraction: 0.8,
            s_mc: 500,
            seed: 0,
            hidden: MlpArchitecture::default().hidden,
            restore_best: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs_max == 0 {
            return bad("epochs_max must be >= 1".into());
        }
        if self.patience > self.epochs_max {
            return bad(format!(
                "patience {} exceeds epochs_max {}",
                self.patience, self.epochs_max
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} not in (0, 1)", self.train_fraction));
        }
        if self.s_mc == 0 {
            return bad("s_mc must be >= 1".into());
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive".into());
        }
        self.arch().validate()
    }

    pub fn arch(&self) -> MlpArchitecture {
        MlpArchitecture {
            input_dim: KERNEL_INPUT_DIM,
            hidden: self.hidden.clone(),
            output_dim: 1,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// `T_train = ⌊fraction · T⌋`.
    pub fn train_len(&self, t: usize) -> usize {
        // the epsilon guards against 0.8·T landing just below an integer
        ((t as f64) * self.train_fraction + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub stop_epoch: usize,
    pub stopped_early: bool,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub seconds: f64,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,seconds\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{:.3}\n",
                r.epoch, r.train_loss, r.val_loss, r.seconds
            ));
        }
        out
    }

    /// Equality ignoring wall-clock fields.
    pub fn same_losses(&self, other: &Self) -> bool {
        self.stop_epoch == other.stop_epoch
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.val_loss.to_bits() == b.val_loss.to_bits()
            })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Learned operator, set to integrate with the full grid sum.
    pub model: OperatorModel,
    pub trace: TrainTrace,
    pub adam: AdamState,
}

impl TrainOutcome {
    pub fn checkpoint(&self, seed: u64) -> Checkpoint {
        self.model
            .checkpoint(Some(&self.adam), seed, self.trace.stop_epoch)
    }
}

/// Splits a path at `T_train = ⌊fraction·T⌋`. Training pairs use inputs
/// `t = 1..T_train−1`, validation pairs inputs `t = T_train+1..T−1` (1-based).
pub fn split_path(path: &NfarPath, cfg: &TrainConfig) -> Result<(PairSet, PairSet)> {
    let t = path.len();
    let t_train = cfg.train_len(t);
    if t_train < 2 || t_train + 1 >= t {
        return Err(Error::InvalidArgument(format!(
            "path of length {t} leaves an empty training or validation split (T_train = {t_train})"
        )));
    }
    let train = PairSet::from_path(path, 0..t_train - 1)?;
    let val = PairSet::from_path(path, t_train..t - 1)?;
    Ok((train, val))
}

pub fn train(path: &NfarPath, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (tr, va) = split_path(path, cfg)?;
    train_pairs(&tr, &va, cfg, |_| {})
}

/// Minibatch Adam over `(pair, site)` triples with Monte Carlo inner sums and
/// patience-based early stopping on the validation pairs.
///
/// Every epoch reshuffles all training triples; each minibatch draws a fresh
/// Monte Carlo point set shared by its triples. Validation uses one point set
/// fixed for the whole run. Training stops once the validation loss has not
/// strictly decreased for `patience` consecutive epochs, or at `epochs_max`.
pub fn train_pairs(
    train: &PairSet,
    val: &PairSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let grid = train
        .grid()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    if val.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    if val.grid() != Some(grid) {
        return Err(Error::Shape("training and validation grids differ".into()));
    }

    let started = Instant::now();
    let arch = cfg.arch();
    let net = MlpParams::glorot_init(&arch, &mut stream(cfg.seed, &[], Role::Init));
    let mut model = OperatorModel::new(net, grid, Integration::FullSum)?;
    let mut adam = AdamState::new(cfg.adam(), arch.param_count());
    let mut shuffle_rng = stream(cfg.seed, &[], Role::Shuffle);
    let mut mc_rng = stream(cfg.seed, &[], Role::McTrain);
    let val_rule = QuadratureRule::monte_carlo(
        grid,
        cfg.s_mc,
        &mut stream(cfg.seed, &[], Role::McValidation),
    )?;

    let n_sites = grid.len();
    let n_triples = train.len() * n_sites;
    let mut order: Vec<u32> = (0..n_triples as u32).collect();
    let mut cache = ForwardCache::default();
    let mut rows: Vec<f64> = Vec::new();

    let mut epochs = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_net: Option<MlpParams> = None;
    let mut wait = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs_max {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let rule = QuadratureRule::monte_carlo(grid, cfg.s_mc, &mut mc_rng)?;
            let fail = |reason: String| Error::Training {
                epoch,
                batch: batch_idx,
                reason,
            };
            let loss = minibatch_step(
                &mut model.net,
                &mut adam,
                train,
                grid,
                batch,
                &rule,
                &mut rows,
                &mut cache,
            )
            .map_err(|e| fail(e.to_string()))?;
            if !loss.is_finite() {
                return Err(fail(format!("loss = {loss}")));
            }
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / n_triples as f64;
        let val_loss = pair_risk(&model, val, &val_rule).map_err(|e| Error::Training {
            epoch,
            batch: usize::MAX,
            reason: format!("validation: {e}"),
        })?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                batch: usize::MAX,
                reason: format!("validation loss = {val_loss}"),
            });
        }
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        epochs.push(rec);

        if val_loss < best {
            best = val_loss;
            best_epoch = epoch;
            wait = 0;
            if cfg.restore_best {
                best_net = Some(model.net.clone());
            }
        } else {
            wait += 1;
        }
        if wait >= cfg.patience {
            stopped_early = epoch < cfg.epochs_max;
            break;
        }
    }

    if let Some(net) = best_net {
        model.net = net;
    }
    let stop_epoch = epochs.len();
    Ok(TrainOutcome {
        model,
        trace: TrainTrace {
            epochs,
            stop_epoch,
            stopped_early,
            best_epoch,
            best_val_loss: best,
            seconds: started.elapsed().as_secs_f64(),
        },
        adam,
    })
}

/// One Adam step on the minibatch loss `(1/B) Σ_k (y_k − Σ_p w_p ψ(u_k, v_p, x_k(v_p)))²`.
/// Returns the minibatch loss before the update.
#[allow(clippy::too_many_arguments)]
fn minibatch_step(
    net: &mut MlpParams,
    adam: &mut AdamState,
    data: &PairSet,
    grid: GridSpec,
    batch: &[u32],
    rule: &QuadratureRule,
    rows: &mut Vec<f64>,
    cache: &mut ForwardCache,
) -> Result<f64> {
    let n_sites = grid.len();
    let n_pts = rule.len();
    rows.clear();
    for &k in batch {
        let (pair, site) = (k as usize / n_sites, k as usize % n_sites);
        let x = data.inputs[pair].values();
        for &p in &rule.points {
            push_row(rows, grid, site, p, x[p]);
        }
    }
    net.forward_cached(rows, cache)?;
    let out = cache.output();
    let b = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad_out = vec![0.0; out.len()];
    for (i, &k) in batch.iter().enumerate() {
        let (pair, site) = (k as usize / n_sites, k as usize % n_sites);
        let vals = &out[i * n_pts..(i + 1) * n_pts];
        let pred: f64 = vals.iter().zip(&rule.weights).map(|(v, w)| v * w).sum();
        let resid = pred - data.targets[pair].values()[site];
        loss += resid * resid;
        let scale = 2.0 * resid / b;
        for (g, w) in grad_out[i * n_pts..(i + 1) * n_pts]
            .iter_mut()
            .zip(&rule.weights)
        {
            *g = scale * w;
        }
    }
    let grads = net.backward_cached(cache, &grad_out)?;
    adam.step(net, &grads)?;
    Ok(loss / b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nfar::{NfarModel, PathMeta};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(s: usize) -> GridSpec {
        GridSpec::new(s).unwrap()
    }

    fn constant_net(c: f64) -> MlpParams {
        let mut p = MlpParams::zeros(&MlpArchitecture::default());
        p.layers_mut().last_mut().unwrap().biases[0] = c;
        p
    }

    fn random_field(s: usize, seed: u64) -> GridField {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        GridField::new(g(s), (0..s * s).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
    }

    fn path_of(fields: Vec<GridField>) -> NfarPath {
        let s = fields[0].size();
        NfarPath::new(
            fields,
            PathMeta {
                seed: None,
                burn_in: 0,
                grid_size: s,
                model: Default::default(),
            },
        )
        .unwrap()
    }

    #[test]
    fn monte_carlo_rule_is_a_probability_vector() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let rule = QuadratureRule::monte_carlo(g(25), 500, &mut r).unwrap();
        assert!((rule.total_weight() - 1.0).abs() < 1e-12);
        assert!(rule.len() <= 500);
        assert!(rule.points().windows(2).all(|w| w[0] < w[1]));
        assert!(QuadratureRule::monte_carlo(g(4), 0, &mut r).is_err());
    }

    #[test]
    fn constant_kernel_gives_constant_field() {
        let m = OperatorModel::new(constant_net(1.75), g(6), Integration::FullSum).unwrap();
        let z = random_field(6, 1);
        let full = m.apply(&z).unwrap();
        assert!(full.values().iter().all(|v| (v - 1.75).abs() < 1e-14));
        let mc = OperatorModel::new(
            constant_net(1.75),
            g(6),
            Integration::MonteCarlo { s_mc: 500, seed: 3 },
        )
        .unwrap();
        let out = mc.apply(&z).unwrap();
        assert!(out.values().iter().all(|v| (v - 1.75).abs() < 1e-14));
    }

    #[test]
    fn full_sum_ignores_rng_stream() {
        let net = MlpParams::glorot_init(&MlpArchitecture::default(), &mut ChaCha8Rng::seed_from_u64(4));
        let z = random_field(5, 2);
        let a = OperatorModel::new(net.clone(), g(5), Integration::FullSum).unwrap();
        let b = OperatorModel::new(net, g(5), Integration::FullSum).unwrap();
        assert_eq!(a.apply(&z).unwrap(), b.apply(&z).unwrap());
    }

    #[test]
    fn rejects_wrong_network_shape_and_grid() {
        let arch = MlpArchitecture::new(4, vec![3], 1).unwrap();
        assert!(OperatorModel::new(MlpParams::zeros(&arch), g(4), Integration::FullSum).is_err());
        let m = OperatorModel::new(constant_net(0.0), g(4), Integration::FullSum).unwrap();
        assert!(m.apply(&random_field(5, 0)).is_err());
    }

    #[test]
    fn truncation_zeroes_output() {
        let m = OperatorModel::new(constant_net(2.0), g(4), Integration::FullSum)
            .unwrap()
            .with_truncation(Some(1.0));
        assert_eq!(m.apply(&GridField::constant(g(4), 3.0)).unwrap().sup_norm(), 0.0);
        assert_eq!(m.apply(&GridField::constant(g(4), 0.5)).unwrap().sup_norm(), 2.0);
    }

    #[test]
    fn zero_kernel_on_unit_targets_has_unit_risk() {
        let m = OperatorModel::new(constant_net(0.0), g(4), Integration::FullSum).unwrap();
        let path = path_of(vec![GridField::constant(g(4), 1.0); 5]);
        assert!((empirical_risk(&m, &path, 0..4).unwrap() - 1.0).abs() < 1e-15);
        assert!(empirical_risk(&m, &path, 2..2).is_err());
        assert!(empirical_risk(&m, &path, 0..5).is_err());
    }

    #[test]
    fn split_follows_floor_four_fifths() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.train_len(250), 200);
        assert_eq!(cfg.train_len(5), 4);
        assert_eq!(cfg.train_len(7), 5);
        let path = path_of((0..10).map(|k| GridField::constant(g(2), k as f64)).collect());
        let (tr, va) = split_path(&path, &cfg).unwrap();
        // T = 10, T_train = 8: training inputs t = 1..7, validation inputs t = 9
        assert_eq!(tr.len(), 7);
        assert_eq!(va.len(), 1);
        assert_eq!(va.inputs()[0].values()[0], 8.0);
        assert_eq!(va.targets()[0].values()[0], 9.0);
        let short = path_of((0..5).map(|k| GridField::constant(g(2), k as f64)).collect());
        assert!(split_path(&short, &cfg).is_err());
    }

    #[test]
    fn zero_patience_runs_one_epoch() {
        let model = NfarModel::standard(g(4));
        let fields: Vec<GridField> = (0..12).map(|k| random_field(4, k)).collect();
        let targets: Vec<GridField> = fields
            .iter()
            .map(|f| model.apply_true_operator(f).unwrap())
            .collect();
        let pairs = PairSet::new(fields, targets).unwrap();
        let cfg = TrainConfig {
            patience: 0,
            hidden: vec![4],
            s_mc: 8,
            ..Default::default()
        };
        let out = train_pairs(&pairs, &pairs, &cfg, |_| {}).unwrap();
        assert_eq!(out.trace.stop_epoch, 1);
        assert_eq!(out.trace.epochs.len(), 1);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            TrainConfig { patience: 300, ..Default::default() },
            TrainConfig { train_fraction: 1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { s_mc: 0, ..Default::default() },
            TrainConfig { hidden: vec![0], ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
