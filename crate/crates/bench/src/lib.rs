//! Shared fixtures for the planning benchmarks.

use capm_core::planner::{FeasibilityMap, TroiRegions};
use capm_core::sim::ExperimentConfig;
use capm_core::{Planner, SimError, TrialScene};

/// Planner, regions and feasibility map of one trial of the default experiment.
pub struct Fixture {
    pub cfg: ExperimentConfig,
    pub planner: Planner,
    pub scene: TrialScene,
    pub regions: TroiRegions,
    pub feas: FeasibilityMap,
}

impl Fixture {
    pub fn trial(trial: u64, path_length: f64) -> Result<Self, SimError> {
        let cfg = ExperimentConfig::default();
        let planner = cfg.planner()?;
        let (troi, mpoi) = cfg.draw_trial(trial)?;
        let regions = planner.regions(&troi)?;
        let feas = FeasibilityMap::new(&planner, &regions, cfg.draw_samples(trial, &troi)?);
        Ok(Self {
            scene: cfg.scene(troi, mpoi, path_length),
            cfg,
            planner,
            regions,
            feas,
        })
    }
}
