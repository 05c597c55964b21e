use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ScenarioConfig;
use crate::models::{CarModel, NoiseSpec};
use crate::planners::{run_episode_with_planner, EpisodeRecord, Outcome, PlannerKind, PlannerSpec, SnmPlanner, Solver};
use crate::rng::{derive_seed, label};
use crate::snm::{build_lookup_table, SnmLookupTable, TableConfig};
use crate::{Error, Result};

/// One aggregated line of an experiment's CSV output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub planner: String,
    pub threshold: Option<f64>,
    pub e_t: f64,
    pub e_z: f64,
    pub episodes: usize,
    pub mean_return: f64,
    pub ci95: f64,
    pub goal_rate: f64,
    pub collision_rate: f64,
    pub mean_steps: f64,
    pub mean_snm: Option<f64>,
    pub mean_mong: Option<f64>,
    /// Share of planned steps handled by the general solver.
    pub general_fraction: f64,
    /// |(V_MCTS − V_MHFR) / V_MCTS| for this noise level; NaN when |V_MCTS| < 1.
    pub rel_value_diff: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Build missing lookup tables instead of failing.
    pub build_tables: bool,
}

pub(crate) fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::InvalidArgument(format!("cannot start {n} worker threads: {e}"))),
    }
}

/// Mean and 95% normal-approximation half-width of `xs`.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Relative value difference between the general and linearized solvers.
pub fn relative_value_difference(v_mcts: f64, v_mhfr: f64) -> f64 {
    if v_mcts.abs() < 1.0 {
        f64::NAN
    } else {
        ((v_mcts - v_mhfr) / v_mcts).abs()
    }
}

/// Build the table for one noise level.
pub fn build_table(cfg: &ScenarioConfig, model: &CarModel, noise: NoiseSpec) -> Result<SnmLookupTable> {
    let t = &cfg.tables;
    let config = TableConfig {
        model: cfg.model_tag(),
        e_t: noise.e_t,
        e_z: noise.e_z,
        node_budget: t.node_budget,
        samples: t.samples,
        bins: t.bins,
        seed: cfg.seed,
        with_mong: t.with_mong,
    };
    build_lookup_table(model, &cfg.initial_belief(), &config)
}

/// The table for one noise level: loaded from disk, built and saved when
/// allowed, or an error naming the command that builds it.
pub fn obtain_table(
    cfg: &ScenarioConfig,
    base: &Path,
    model: &CarModel,
    noise: NoiseSpec,
    build: bool,
) -> Result<SnmLookupTable> {
    let path = cfg.table_path(base, noise);
    if path.exists() {
        let table = SnmLookupTable::load(&path)?;
        let m = table.metadata();
        if m.e_t != noise.e_t || m.e_z != noise.e_z || m.model != cfg.model_tag() {
            return Err(Error::InvalidScenario(format!(
                "table {} was built for {} at e_T={}, e_Z={}",
                path.display(),
                m.model,
                m.e_t,
                m.e_z
            )));
        }
        return Ok(table);
    }
    if !build {
        return Err(Error::MissingTable {
            scenario: cfg.id.clone(),
            level: noise.e_t,
            command: format!(
                "snm table build <scenario.json> --e-t {} --e-z {}",
                noise.e_t, noise.e_z
            ),
        });
    }
    log::info!("building lookup table {}", path.display());
    let table = build_table(cfg, model, noise)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    table.save(&path)?;
    Ok(table)
}

fn episode_seed(cfg: &ScenarioConfig, noise_index: usize, planner: &PlannerSpec, episode: usize) -> u64 {
    derive_seed(
        cfg.seed,
        &[
            label(&cfg.id),
            noise_index as u64,
            planner.seed.unwrap_or(0),
            episode as u64,
        ],
    )
}

fn aggregate(
    cfg: &ScenarioConfig,
    spec: &PlannerSpec,
    noise: NoiseSpec,
    table: Option<&SnmLookupTable>,
    records: &[EpisodeRecord],
) -> ResultRow {
    let returns: Vec<f64> = records.iter().map(|r| r.discounted_return).collect();
    let (mean_return, ci95) = mean_ci95(&returns);
    let n = records.len() as f64;
    let rate = |f: &dyn Fn(&EpisodeRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / n;
    let planned: usize = records.iter().map(|r| r.diagnostics.len()).sum();
    let general: usize = records
        .iter()
        .flat_map(|r| &r.diagnostics)
        .filter(|d| d.solver == Solver::General)
        .count();
    ResultRow {
        scenario: cfg.id.clone(),
        planner: spec.id(),
        threshold: (spec.kind == PlannerKind::Snm).then(|| spec.threshold()),
        e_t: noise.e_t,
        e_z: noise.e_z,
        episodes: records.len(),
        mean_return,
        ci95,
        goal_rate: rate(&|r| r.outcome == Outcome::Goal),
        collision_rate: rate(&|r| r.collisions > 0),
        mean_steps: records.iter().map(|r| r.steps as f64).sum::<f64>() / n,
        mean_snm: table.map(SnmLookupTable::mean_snm),
        mean_mong: table.and_then(SnmLookupTable::mean_mong),
        general_fraction: if planned == 0 {
            0.0
        } else {
            general as f64 / planned as f64
        },
        rel_value_diff: None,
    }
}

/// Run every planner on every noise level for `cfg.episodes` seeded
/// episodes and aggregate one row per (noise level, planner).
///
/// Episodes run in parallel; each has its own seed derived from the master
/// seed, so the rows do not depend on the number of threads.
pub fn run_experiment(cfg: &ScenarioConfig, base: &Path, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let env = cfg.environment.resolve(base)?;
    let needs_table = cfg.planners.iter().any(|p| p.kind == PlannerKind::Snm);
    with_jobs(opts.jobs, || {
        let mut rows = Vec::new();
        for (ni, &noise) in cfg.noise.iter().enumerate() {
            let model = cfg.model(&env, noise);
            let table_path = cfg.table_path(base, noise);
            let table = if needs_table || table_path.exists() {
                Some(obtain_table(cfg, base, &model, noise, opts.build_tables)?)
            } else {
                None
            };
            let b0 = cfg.initial_belief();
            let first = rows.len();
            for spec in &cfg.planners {
                let records = (0..cfg.episodes)
                    .into_par_iter()
                    .map(|ep| {
                        let mut planner = SnmPlanner::new(&model, spec, table.as_ref())?;
                        let seed = episode_seed(cfg, ni, spec, ep);
                        run_episode_with_planner(&model, &mut planner, &b0, seed, cfg.max_steps, cfg.particles)
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(aggregate(cfg, spec, noise, table.as_ref(), &records));
            }
            let value_of = |kind: PlannerKind| {
                cfg.planners
                    .iter()
                    .position(|p| p.kind == kind)
                    .map(|i| rows[first + i].mean_return)
            };
            if let (Some(v_mcts), Some(v_mhfr)) = (value_of(PlannerKind::Mcts), value_of(PlannerKind::Mhfr)) {
                let d = relative_value_difference(v_mcts, v_mhfr);
                for row in &mut rows[first..] {
                    row.rel_value_diff = Some(d);
                }
            }
        }
        Ok(rows)
    })?
}

/// Re-run the SNM planners of `cfg` once per threshold.
pub fn sensitivity_sweep(
    cfg: &ScenarioConfig,
    base: &Path,
    thresholds: &[f64],
    opts: &RunOptions,
) -> Result<Vec<ResultRow>> {
    let template = cfg
        .planners
        .iter()
        .find(|p| p.kind == PlannerKind::Snm)
        .cloned()
        .unwrap_or_else(|| PlannerSpec::new(PlannerKind::Snm));
    let mut sweep = cfg.clone();
    sweep.planners = thresholds
        .iter()
        .map(|&mu| PlannerSpec {
            threshold: Some(mu),
            label: None,
            ..template.clone()
        })
        .collect();
    run_experiment(&sweep, base, opts)
}

/// Write rows as CSV with a header line.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn write_csv_file(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(rows, std::io::BufWriter::new(f))
}
