//! Replicated sample-size sweeps: simulate, downsample, train, score on an
//! independent test field, persist per cell, aggregate and plot.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gp::{CirculantSpectrum, NoiseSampler};
use crate::grid::{FieldJson, GridField};
use crate::learner::{self, Integration, OperatorModel, TrainTrace};
use crate::mlp::{Checkpoint, MlpParams};
use crate::nfar::NfarModel;
use crate::seed::{derive_seed, stream, Role};

/// Environment fallback for the worker count.
pub const WORKERS_ENV: &str = "NFAR_WORKERS";

/// Replaces the trained kernel, for checking the scoring path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LearnerOverride {
    #[default]
    Train,
    /// The learned operator is the reference operator itself.
    Truth,
    /// A network whose every weight and bias is zero.
    ZeroNet,
}

#[derive(Debug, Clone, Default)]
pub struct ReplicationHooks {
    pub learner: LearnerOverride,
    pub test_point: Option<GridField>,
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub g: f64,
    pub trace: Option<TrainTrace>,
    pub test_point: GridField,
    pub truth: GridField,
    pub predicted: GridField,
    pub checkpoint: Option<Checkpoint>,
}

/// Seed of the training streams (init, shuffle, Monte Carlo) for cell `(b, T)`.
pub fn train_seed(master: u64, b: usize, t: usize) -> u64 {
    derive_seed(master, &[b as u64, t as u64], Role::Init)
}

/// Final field of a fresh burn-in run at the simulation grid.
pub fn simulate_test_point(
    cfg: &ExperimentConfig,
    spectrum: &Arc<CirculantSpectrum>,
    rng_seed_master: u64,
    indices: &[u64],
) -> Result<GridField> {
    let model = NfarModel::new(cfg.model, cfg.sim_grid())?;
    let mut sampler = NoiseSampler::new(
        spectrum.clone(),
        stream(rng_seed_master, indices, Role::TestPoint),
    );
    let path = model.simulate_path(&mut sampler, 1, cfg.sim.burn_in)?;
    Ok(path.last().clone())
}

/// `Ψ̃_{ψ₀}(z)` with full quadrature, on the learning grid or computed on the
/// simulation grid and downsampled.
pub fn reference_output(cfg: &ExperimentConfig, z_sim: &GridField) -> Result<GridField> {
    let learn = cfg.learn_grid();
    if cfg.sim.truth_on_sim_grid {
        NfarModel::new(cfg.model, cfg.sim_grid())?
            .apply_true_operator(z_sim)?
            .downsample(learn)
    } else {
        NfarModel::new(cfg.model, learn)?.apply_true_operator(&z_sim.downsample(learn)?)
    }
}

/// `g = (1/S²) Σ (Ψ̃_{ψ̃}(Z̃) − Ψ̃_{ψ₀}(Z̃))²`.
pub fn generalization_error(predicted: &GridField, truth: &GridField) -> Result<f64> {
    predicted.dist_sq(truth)
}

pub fn run_replication(cfg: &ExperimentConfig, b: usize, t: usize) -> Result<Replication> {
    let spectrum = Arc::new(CirculantSpectrum::build(
        &crate::gp::StationaryKernel::new(cfg.model.kernel_scale)?,
        cfg.sim_grid(),
    )?);
    run_replication_with(cfg, b, t, &spectrum, &ReplicationHooks::default())
}

pub fn run_replication_with(
    cfg: &ExperimentConfig,
    b: usize,
    t: usize,
    spectrum: &Arc<CirculantSpectrum>,
    hooks: &ReplicationHooks,
) -> Result<Replication> {
    let wrap = |e: Error| Error::Cell {
        b,
        t,
        source: Box::new(e),
    };
    let inner = || -> Result<Replication> {
        let master = cfg.sweep.master_seed;
        let idx = [b as u64, t as u64];
        let learn = cfg.learn_grid();
        let z_sim = match &hooks.test_point {
            Some(z) if z.spec() == cfg.sim_grid() => z.clone(),
            Some(z) if z.spec() == learn && !cfg.sim.truth_on_sim_grid => z.clone(),
            Some(z) => {
                return Err(Error::Shape(format!(
                    "test point on a {}-grid",
                    z.size()
                )))
            }
            None => simulate_test_point(cfg, spectrum, master, &idx)?,
        };
        let z_learn = if z_sim.spec() == learn {
            z_sim.clone()
        } else {
            z_sim.downsample(learn)?
        };
        let truth = if z_sim.spec() == learn {
            NfarModel::new(cfg.model, learn)?.apply_true_operator(&z_learn)?
        } else {
            reference_output(cfg, &z_sim)?
        };

        let (predicted, trace, checkpoint) = match hooks.learner {
            LearnerOverride::Truth => (truth.clone(), None, None),
            LearnerOverride::ZeroNet => {
                let net = MlpParams::zeros(&cfg.train.arch());
                let m = OperatorModel::new(net, learn, Integration::FullSum)?
                    .with_truncation(cfg.model.trunc_level);
                (m.apply(&z_learn)?, None, None)
            }
            LearnerOverride::Train => {
                let model = NfarModel::new(cfg.model, cfg.sim_grid())?;
                let mut sampler =
                    NoiseSampler::new(spectrum.clone(), stream(master, &idx, Role::TrainPath));
                let path = model
                    .simulate_path(&mut sampler, t, cfg.sim.burn_in)?
                    .downsample(learn)?;
                let mut tc = cfg.train.clone();
                tc.seed = train_seed(master, b, t);
                let out = learner::train(&path, &tc)?;
                let m = out.model.clone().with_truncation(cfg.model.trunc_level);
                let pred = m.apply(&z_learn)?;
                let ck = out.checkpoint(tc.seed);
                (pred, Some(out.trace), Some(ck))
            }
        };
        let g = generalization_error(&predicted, &truth)?;
        Ok(Replication {
            g,
            trace,
            test_point: z_learn,
            truth,
            predicted,
            checkpoint,
        })
    };
    inner().map_err(wrap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surfaces {
    pub truth: FieldJson,
    pub predicted: FieldJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub b: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub g: f64,
    pub stop_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub surfaces: Option<Surfaces>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub b: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "G")]
    pub g_mean: f64,
    pub std: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by `(T, b)`.
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub t_values: Vec<usize>,
    pub replications: usize,
    pub designated_replication: usize,
}

impl SweepResult {
    pub fn from_cells(
        mut cells: Vec<CellResult>,
        mut failures: Vec<CellFailure>,
        t_values: Vec<usize>,
        replications: usize,
        designated_replication: usize,
    ) -> Self {
        cells.sort_by_key(|c| (c.t, c.b));
        failures.sort_by_key(|c| (c.t, c.b));
        Self {
            cells,
            failures,
            t_values,
            replications,
            designated_replication,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty() && self.cells.len() == self.replications * self.t_values.len()
    }

    /// Cells that were neither computed nor recorded as failed.
    pub fn missing(&self) -> Vec<(usize, usize)> {
        let done: std::collections::BTreeSet<_> = self
            .cells
            .iter()
            .map(|c| (c.b, c.t))
            .chain(self.failures.iter().map(|f| (f.b, f.t)))
            .collect();
        let mut out = Vec::new();
        for &t in &self.t_values {
            for b in 0..self.replications {
                if !done.contains(&(b, t)) {
                    out.push((b, t));
                }
            }
        }
        out
    }

    /// Per-`T` mean, sample standard deviation and standard error of `g`.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut by_t: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for c in &self.cells {
            by_t.entry(c.t).or_default().push(c.g);
        }
        by_t.into_iter()
            .map(|(t, gs)| {
                let n = gs.len();
                let mean = gs.iter().sum::<f64>() / n as f64;
                let std = if n > 1 {
                    (gs.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                SummaryRow {
                    t,
                    g_mean: mean,
                    std,
                    stderr: std / (n as f64).sqrt(),
                    n,
                }
            })
            .collect()
    }

    pub fn results_csv(&self) -> String {
        let mut out = String::from("b,T,g,stop_epoch\n");
        for c in &self.cells {
            out.push_str(&format!("{},{},{},{}\n", c.b, c.t, c.g, c.stop_epoch));
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("b,T,seconds\n");
        for c in &self.cells {
            out.push_str(&format!("{},{},{:.3}\n", c.b, c.t, c.seconds));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("T,G,std,stderr,n\n");
        for r in self.summary() {
            out.push_str(&format!("{},{},{},{},{}\n", r.t, r.g_mean, r.std, r.stderr, r.n));
        }
        out
    }

    /// Surfaces of the designated replication at the largest `T` that has them.
    pub fn designated_surfaces(&self) -> Option<&Surfaces> {
        self.cells
            .iter()
            .rev()
            .filter(|c| c.b == self.designated_replication)
            .find_map(|c| c.surfaces.as_ref())
    }
}

/// Least-squares slope of `log₁₀ G` against `log₁₀ T`.
pub fn loglog_slope(rows: &[SummaryRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.g_mean > 0.0)
        .map(|r| ((r.t as f64).log10(), r.g_mean.log10()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(crate::diagnostics::linear_fit(&xs, &ys).0)
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; falls back to `NFAR_WORKERS`, then to the available parallelism.
    pub workers: Option<usize>,
    /// Stop after this many newly computed cells (for interruption tests).
    pub max_new_cells: Option<usize>,
    pub hooks: ReplicationHooks,
    pub quiet: bool,
}

pub fn resolve_workers(explicit: Option<usize>) -> Result<usize> {
    if let Some(w) = explicit {
        return if w == 0 {
            Err(Error::Config("workers must be >= 1".into()))
        } else {
            Ok(w)
        };
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(Error::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn cell_stem(b: usize, t: usize) -> String {
    format!("b{b:04}_T{t:06}")
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Directory layout of a sweep run.
#[derive(Debug, Clone)]
pub struct SweepDir {
    pub root: PathBuf,
}

impl SweepDir {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn cells(&self) -> PathBuf {
        self.root.join("cells")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn cell_file(&self, b: usize, t: usize) -> PathBuf {
        self.cells().join(format!("{}.json", cell_stem(b, t)))
    }

    pub fn checkpoint_file(&self, b: usize, t: usize) -> PathBuf {
        self.checkpoints().join(format!("{}.json", cell_stem(b, t)))
    }

    pub fn index(&self) -> PathBuf {
        self.root.join("index.jsonl")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    fn prepare(&self, cfg: &ExperimentConfig) -> Result<()> {
        for d in [self.root.clone(), self.cells(), self.checkpoints()] {
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        let text = cfg.to_toml_string();
        let path = self.config();
        if path.exists() {
            let old = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let old_cfg = ExperimentConfig::from_toml_str(&old)?;
            if old_cfg != *cfg {
                return Err(Error::Config(format!(
                    "{} holds a sweep with a different configuration",
                    self.root.display()
                )));
            }
        } else {
            write_atomic(&path, text.as_bytes())?;
        }
        Ok(())
    }

    /// Completed cells currently on disk.
    pub fn load_cells(&self) -> Result<Vec<CellResult>> {
        let dir = self.cells();
        let mut out = Vec::new();
        if !dir.exists() {
            return Ok(out);
        }
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        for p in entries {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            out.push(serde_json::from_str(&text)?);
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct IndexLine<'a> {
    b: usize,
    #[serde(rename = "T")]
    t: usize,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Runs every pending `(b, T)` cell on a worker pool, persisting each cell as
/// soon as it finishes. Cells already on disk are reused, so an interrupted
/// sweep resumes where it stopped. Failed cells are reported and retried on
/// the next run.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path, opts: &SweepOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let dir = SweepDir::new(out_dir);
    dir.prepare(cfg)?;
    let mut done = dir.load_cells()?;
    done.retain(|c| c.b < cfg.sweep.replications && cfg.sweep.t_values.contains(&c.t));
    let have: std::collections::BTreeSet<_> = done.iter().map(|c| (c.b, c.t)).collect();
    let mut pending: Vec<(usize, usize)> = Vec::new();
    for &t in &cfg.sweep.t_values {
        for b in 0..cfg.sweep.replications {
            if !have.contains(&(b, t)) {
                pending.push((b, t));
            }
        }
    }
    if let Some(k) = opts.max_new_cells {
        pending.truncate(k);
    }

    let spectrum = Arc::new(CirculantSpectrum::build(
        &crate::gp::StationaryKernel::new(cfg.model.kernel_scale)?,
        cfg.sim_grid(),
    )?);
    let index_path = dir.index();
    let index = Mutex::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index_path)
            .map_err(|e| Error::io(&index_path, e))?,
    );
    let t_max = *cfg.sweep.t_values.last().expect("validated");
    let log_line = |line: &IndexLine| -> Result<()> {
        let mut f = index.lock().expect("index lock");
        let mut text = serde_json::to_string(line)?;
        text.push('\n');
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&index_path, e))
    };

    let run_cell = |&(b, t): &(usize, usize)| -> Result<std::result::Result<CellResult, CellFailure>> {
        let started = Instant::now();
        match run_replication_with(cfg, b, t, &spectrum, &opts.hooks) {
            Ok(rep) => {
                let surfaces = (b == cfg.sweep.designated_replication && t == t_max).then(|| Surfaces {
                    truth: FieldJson::from(&rep.truth),
                    predicted: FieldJson::from(&rep.predicted),
                });
                let cell = CellResult {
                    b,
                    t,
                    g: rep.g,
                    stop_epoch: rep.trace.as_ref().map_or(0, |tr| tr.stop_epoch),
                    best_val_loss: rep.trace.as_ref().map(|tr| tr.best_val_loss),
                    seconds: started.elapsed().as_secs_f64(),
                    surfaces,
                };
                if let Some(ck) = &rep.checkpoint {
                    write_atomic(&dir.checkpoint_file(b, t), ck.to_json().as_bytes())?;
                }
                write_atomic(
                    &dir.cell_file(b, t),
                    serde_json::to_string_pretty(&cell)?.as_bytes(),
                )?;
                log_line(&IndexLine {
                    b,
                    t,
                    status: "done",
                    g: Some(cell.g),
                    error: None,
                })?;
                if !opts.quiet {
                    eprintln!("cell b={b} T={t}: g={:.6e} ({:.1}s)", cell.g, cell.seconds);
                }
                Ok(Ok(cell))
            }
            Err(e) => {
                let failure = CellFailure {
                    b,
                    t,
                    error: e.to_string(),
                };
                log_line(&IndexLine {
                    b,
                    t,
                    status: "failed",
                    g: None,
                    error: Some(failure.error.clone()),
                })?;
                if !opts.quiet {
                    eprintln!("cell b={b} T={t} failed: {}", failure.error);
                }
                Ok(Err(failure))
            }
        }
    };

    let workers = resolve_workers(opts.workers)?;
    let outcomes: Vec<Result<std::result::Result<CellResult, CellFailure>>> = if workers == 1 {
        pending.iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| pending.par_iter().map(run_cell).collect())
    };

    let mut failures = Vec::new();
    for o in outcomes {
        match o? {
            Ok(cell) => done.push(cell),
            Err(f) => failures.push(f),
        }
    }
    Ok(SweepResult::from_cells(
        done,
        failures,
        cfg.sweep.t_values.clone(),
        cfg.sweep.replications,
        cfg.sweep.designated_replication,
    ))
}

/// Writes `results.csv`, `timings.csv`, `summary.csv`, `loglog.svg` and, when
/// available, `true.csv` / `predicted.csv` for the designated replication.
pub fn emit_artifacts(result: &SweepResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if result.cells.is_empty() {
        return Err(Error::InvalidArgument("sweep result has no completed cells".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = out_dir.join(name);
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
        Ok(())
    };
    put("results.csv", result.results_csv())?;
    put("timings.csv", result.timings_csv())?;
    put("summary.csv", result.summary_csv())?;
    put("loglog.svg", loglog_svg(&result.summary()))?;
    if !result.failures.is_empty() {
        put(
            "failures.json",
            serde_json::to_string_pretty(&result.failures)?,
        )?;
    }
    if let Some(s) = result.designated_surfaces() {
        put("true.csv", GridField::try_from(s.truth.clone())?.to_csv())?;
        put("predicted.csv", GridField::try_from(s.predicted.clone())?.to_csv())?;
    }
    Ok(written)
}

/// `log₁₀ T` against `log₁₀ G` with ±1 standard-error bars.
pub fn loglog_svg(rows: &[SummaryRow]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 60.0;
    let pts: Vec<&SummaryRow> = rows.iter().filter(|r| r.g_mean > 0.0).collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    if pts.is_empty() {
        svg.push_str("<text x=\"20\" y=\"40\">no positive G values</text>\n</svg>\n");
        return svg;
    }
    let lo = |r: &SummaryRow| {
        let v = r.g_mean - r.stderr;
        if v > 0.0 { v } else { r.g_mean }
    };
    let xs: Vec<f64> = pts.iter().map(|r| (r.t as f64).log10()).collect();
    let (mut x0, mut x1) = bounds(xs.iter().copied());
    let (mut y0, mut y1) = bounds(
        pts.iter()
            .flat_map(|r| [lo(r).log10(), (r.g_mean + r.stderr).log10()]),
    );
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    svg.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = H - M,
        r = W - M
    ));
    for k in 0..=4 {
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{x:.2}</text>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{y:.2}</text>\n",
            px(x),
            H - M + 18.0,
            M - 6.0,
            py(y) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">log10 T</text>\n\
         <text x=\"16\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">log10 G</text>\n",
        W / 2.0,
        H - 16.0,
        H / 2.0,
        H / 2.0
    ));
    let poly: Vec<String> = pts
        .iter()
        .map(|r| format!("{:.2},{:.2}", px((r.t as f64).log10()), py(r.g_mean.log10())))
        .collect();
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n",
        poly.join(" ")
    ));
    for r in &pts {
        let x = px((r.t as f64).log10());
        let (ya, yb) = (py(lo(r).log10()), py((r.g_mean + r.stderr).log10()));
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{ya:.2}\" x2=\"{x:.2}\" y2=\"{yb:.2}\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{ya:.2}\" x2=\"{:.2}\" y2=\"{ya:.2}\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{yb:.2}\" x2=\"{:.2}\" y2=\"{yb:.2}\" stroke=\"black\"/>\n\
             <circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"steelblue\"/>\n",
            x - 4.0,
            x + 4.0,
            x - 4.0,
            x + 4.0,
            py(r.g_mean.log10())
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn pad(lo: &mut f64, hi: &mut f64) {
    let span = (*hi - *lo).max(1e-3);
    *lo -= 0.05 * span;
    *hi += 0.05 * span;
}

/// Reads back a sweep directory without computing anything.
pub fn load_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SweepResult> {
    let cells = SweepDir::new(out_dir).load_cells()?;
    Ok(SweepResult::from_cells(
        cells,
        Vec::new(),
        cfg.sweep.t_values.clone(),
        cfg.sweep.replications,
        cfg.sweep.designated_replication,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            "[sim]\nsim_grid = 8\nlearn_grid = 4\nburn_in = 20\n\
             [train]\nepochs_max = 2\npatience = 1\nhidden = [4]\ns_mc = 8\n\
             [sweep]\nt_values = [10]\nreplications = 1\nmaster_seed = 7\n",
        )
        .unwrap()
    }

    fn cell(b: usize, t: usize, g: f64) -> CellResult {
        CellResult {
            b,
            t,
            g,
            stop_epoch: 1,
            best_val_loss: None,
            seconds: 0.0,
            surfaces: None,
        }
    }

    #[test]
    fn truth_hook_gives_zero() {
        let cfg = tiny();
        let spec = Arc::new(
            CirculantSpectrum::build(&Default::default(), cfg.sim_grid()).unwrap(),
        );
        let hooks = ReplicationHooks {
            learner: LearnerOverride::Truth,
            test_point: None,
        };
        let rep = run_replication_with(&cfg, 0, 10, &spec, &hooks).unwrap();
        assert_eq!(rep.g, 0.0);
    }

    #[test]
    fn zero_net_on_zero_field() {
        let cfg = tiny();
        let spec = Arc::new(
            CirculantSpectrum::build(&Default::default(), cfg.sim_grid()).unwrap(),
        );
        let hooks = ReplicationHooks {
            learner: LearnerOverride::ZeroNet,
            test_point: Some(GridField::zeros(cfg.sim_grid())),
        };
        let rep = run_replication_with(&cfg, 0, 10, &spec, &hooks).unwrap();
        let oracle = NfarModel::standard(cfg.learn_grid())
            .apply_true_operator(&GridField::zeros(cfg.learn_grid()))
            .unwrap()
            .l2_norm_sq();
        assert!((rep.g - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn summary_statistics() {
        let r = SweepResult::from_cells(
            vec![cell(1, 10, 3.0), cell(0, 10, 1.0), cell(0, 20, 0.5)],
            vec![],
            vec![10, 20],
            2,
            0,
        );
        let s = r.summary();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].g_mean, 2.0);
        assert!((s[0].std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s[1].n, 1);
        assert_eq!(s[1].std, 0.0);
        assert!(!r.is_complete());
        assert_eq!(r.missing(), vec![(1, 20)]);
        assert!(r.results_csv().starts_with("b,T,g,stop_epoch\n0,10,1,1\n1,10,3,1\n"));
        assert!(loglog_slope(&s).unwrap() < 0.0);
    }

    #[test]
    fn empty_result_is_an_error() {
        let r = SweepResult::from_cells(vec![], vec![], vec![10], 1, 0);
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_artifacts(&r, dir.path()).is_err());
    }

    #[test]
    fn svg_is_well_formed() {
        let rows = vec![
            SummaryRow { t: 250, g_mean: 0.1, std: 0.02, stderr: 0.01, n: 4 },
            SummaryRow { t: 1000, g_mean: 0.05, std: 0.2, stderr: 0.1, n: 4 },
        ];
        let svg = loglog_svg(&rows);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn worker_resolution() {
        assert_eq!(resolve_workers(Some(3)).unwrap(), 3);
        assert!(resolve_workers(Some(0)).is_err());
    }
}
