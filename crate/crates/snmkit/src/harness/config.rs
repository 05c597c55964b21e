use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::models::{CarModel, CarVariant, Environment, NoiseSpec, START};
use crate::planners::PlannerSpec;
use crate::pomdp::ParticleBelief;
use crate::{Error, Result};

/// Where a scenario's workspace comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvironmentRef {
    /// `"empty"`, `"maze"`, or a path to an environment JSON file, relative
    /// to the scenario file.
    Named(String),
    Inline(Environment),
}

impl EnvironmentRef {
    pub fn resolve(&self, base: &Path) -> Result<Environment> {
        let env = match self {
            EnvironmentRef::Inline(env) => env.clone(),
            EnvironmentRef::Named(name) if name == "empty" => Environment::empty(),
            EnvironmentRef::Named(name) if name == "maze" => Environment::maze(),
            EnvironmentRef::Named(file) => {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?
            }
        };
        env.validate().map_err(Error::InvalidScenario)?;
        Ok(env)
    }
}

/// Settings for the lookup tables an SNM planner needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableSettings {
    pub node_budget: usize,
    pub samples: usize,
    pub bins: usize,
    pub with_mong: bool,
    /// Directory for table files, relative to the scenario file.
    pub dir: PathBuf,
}

impl Default for TableSettings {
    fn default() -> Self {
        TableSettings {
            node_budget: 500,
            samples: 10_000,
            bins: 5,
            with_mong: true,
            dir: PathBuf::from("tables"),
        }
    }
}

fn default_max_steps() -> usize {
    100
}

fn default_particles() -> usize {
    200
}

fn default_start() -> Vec<f64> {
    START.to_vec()
}

/// One experiment: a workspace, a model variant, a list of noise levels and
/// the planners to compare on each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    pub environment: EnvironmentRef,
    /// Noise levels; each produces one result row per planner.
    pub noise: Vec<NoiseSpec>,
    #[serde(default)]
    pub variant: CarVariant,
    pub planners: Vec<PlannerSpec>,
    pub episodes: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Particle-filter size.
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Known start state; the initial belief is a point mass there.
    #[serde(default = "default_start")]
    pub start: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub tables: TableSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(format!("{}: {m}", self.id)));
        if self.episodes == 0 {
            return bad("episode count must be at least one".into());
        }
        if self.noise.is_empty() {
            return bad("no noise levels given".into());
        }
        if let Some(n) = self.noise.iter().find(|n| !(n.e_t >= 0.0 && n.e_z >= 0.0)) {
            return bad(format!("noise levels must be nonnegative, got {n:?}"));
        }
        if self.planners.is_empty() {
            return bad("no planners given".into());
        }
        if self.start.len() != 4 {
            return bad("start state needs four components".into());
        }
        if self.particles == 0 {
            return bad("particle count must be positive".into());
        }
        for p in &self.planners {
            p.validate()?;
        }
        Ok(())
    }

    pub fn model(&self, env: &Environment, noise: NoiseSpec) -> CarModel {
        CarModel::new(env.clone(), noise, self.variant)
    }

    pub fn initial_belief(&self) -> ParticleBelief {
        ParticleBelief::point(&self.start, self.particles)
    }

    /// Model tag stored in table metadata.
    pub fn model_tag(&self) -> String {
        format!(
            "car/{}/{}/{}",
            self.id,
            if self.variant.collision_dynamics {
                "bounce"
            } else {
                "terminal"
            },
            serde_json::to_value(self.variant.observation)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default()
        )
    }

    /// Table file for one noise level.
    pub fn table_path(&self, base: &Path, noise: NoiseSpec) -> PathBuf {
        base.join(&self.tables.dir)
            .join(format!("{}-et{}-ez{}.json", self.id, noise.e_t, noise.e_z))
    }
}
