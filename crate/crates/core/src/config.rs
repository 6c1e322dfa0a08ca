//! TOML experiment configuration with `[model]`, `[sim]`, `[train]` and `[sweep]` sections.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::learner::TrainConfig;
use crate::nfar::NfarParams;

/// The reduced profile used for acceptance runs.
pub const DESK_TOML: &str = include_str!("../../../configs/desk.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub sim_grid: usize,
    pub learn_grid: usize,
    pub burn_in: usize,
    /// Compute the reference operator on the simulation grid and downsample,
    /// instead of evaluating it directly on the learning grid.
    pub truth_on_sim_grid: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sim_grid: 100,
            learn_grid: 25,
            burn_in: 500,
            truth_on_sim_grid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub t_values: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    /// Replication whose surfaces at the largest `T` are exported.
    pub designated_replication: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            t_values: vec![250, 500, 750, 1000, 1250, 1500, 1750, 2000, 3000, 4000, 5000],
            replications: 161,
            master_seed: 0,
            designated_replication: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: NfarParams,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        Self::from_toml_str(DESK_TOML).expect("bundled desk profile is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let sim = &self.sim;
        if sim.sim_grid < 2 || sim.learn_grid < 2 {
            return bad("grid sizes must be >= 2".into());
        }
        if !sim.sim_grid.is_multiple_of(sim.learn_grid) {
            return bad(format!(
                "learn_grid {} does not divide sim_grid {}",
                sim.learn_grid, sim.sim_grid
            ));
        }
        let sweep = &self.sweep;
        if sweep.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if sweep.t_values.is_empty() {
            return bad("t_values must not be empty".into());
        }
        if !sweep.t_values.windows(2).all(|w| w[0] < w[1]) {
            return bad("t_values must be strictly increasing".into());
        }
        if sweep.designated_replication >= sweep.replications {
            return bad(format!(
                "designated_replication {} out of range for {} replications",
                sweep.designated_replication, sweep.replications
            ));
        }
        self.train.validate()?;
        let t_min = sweep.t_values[0];
        let t_train = self.train.train_len(t_min);
        if t_train < 2 || t_train + 1 >= t_min {
            return bad(format!(
                "T = {t_min} leaves an empty training or validation split"
            ));
        }
        if self.model.kernel_scale <= 0.0 || !self.model.kernel_scale.is_finite() {
            return bad("model.kernel_scale must be positive".into());
        }
        Ok(())
    }

    pub fn sim_grid(&self) -> GridSpec {
        GridSpec::new(self.sim.sim_grid).expect("validated")
    }

    pub fn learn_grid(&self) -> GridSpec {
        GridSpec::new(self.sim.learn_grid).expect("validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_full_study() {
        let c = ExperimentConfig::default();
        assert_eq!(c.sim.sim_grid, 100);
        assert_eq!(c.sim.learn_grid, 25);
        assert_eq!(c.sweep.replications, 161);
        assert_eq!(c.sweep.t_values.len(), 11);
        c.validate().unwrap();
    }

    #[test]
    fn desk_profile() {
        let c = ExperimentConfig::desk();
        assert_eq!((c.sim.sim_grid, c.sim.learn_grid), (32, 16));
        assert_eq!(c.sweep.replications, 8);
        assert_eq!(c.sweep.t_values, vec![250, 1000, 2000]);
        assert_eq!(c.train.epochs_max, 60);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::desk();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_errors() {
        for text in [
            "[sim]\nsim_grids = 10\n",
            "[bogus]\nx = 1\n",
            "[train]\nlearning_rate = 0.1\n",
            "[model]\nscale = 1.0\n",
        ] {
            assert!(matches!(
                ExperimentConfig::from_toml_str(text),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn invariants_enforced() {
        for text in [
            "[sim]\nsim_grid = 30\nlearn_grid = 16\n",
            "[sweep]\nt_values = [10, 10]\n",
            "[sweep]\nt_values = [20, 10]\n",
            "[sweep]\nreplications = 0\n",
            "[sweep]\nt_values = [5]\n",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
