use std::path::Path;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{measure_state, rrt_state_samples};
use crate::pomdp::{ParticleBelief, PomdpModel, Space};
use crate::rng::{purpose, stream};
use crate::{Error, Result};

pub const TABLE_FORMAT_VERSION: u32 = 1;
/// Embedded states are zero-padded to this many coordinates for the index.
const INDEX_DIM: usize = 8;

/// Build parameters and provenance of a lookup table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub format_version: u32,
    /// Free-form model description, e.g. "car/maze/terminal/additive".
    pub model: String,
    pub e_t: f64,
    pub e_z: f64,
    pub node_budget: usize,
    pub samples: usize,
    pub bins: usize,
    pub actions: Vec<Vec<f64>>,
    pub seed: u64,
    /// Hex SHA-256 of the table contents with this field empty.
    #[serde(default)]
    pub content_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub state: Vec<f64>,
    pub psi_t: f64,
    pub psi_z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mong_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mong_z: Option<f64>,
}

impl TableRow {
    pub fn snm(&self) -> f64 {
        self.psi_t + self.psi_z
    }
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    metadata: TableMetadata,
    space: Space,
    rows: Vec<TableRow>,
}

/// Offline SNM values over sampled states, with a nearest-neighbour index
/// in the embedded state metric.
#[derive(Clone, Debug)]
pub struct SnmLookupTable {
    metadata: TableMetadata,
    space: Space,
    rows: Vec<TableRow>,
    index: ImmutableKdTree<f64, INDEX_DIM>,
}

fn index_point(space: &Space, s: &[f64]) -> [f64; INDEX_DIM] {
    let mut v = Vec::with_capacity(INDEX_DIM);
    space.embed(s, &mut v);
    let mut out = [0.0; INDEX_DIM];
    out[..v.len()].copy_from_slice(&v);
    out
}

fn content_hash(metadata: &TableMetadata, space: &Space, rows: &[TableRow]) -> String {
    let mut meta = metadata.clone();
    meta.content_hash.clear();
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&(&meta, space, rows)).expect("table serializes"));
    hex::encode(hasher.finalize())
}

impl SnmLookupTable {
    /// Assemble a table and stamp its content hash.
    pub fn new(mut metadata: TableMetadata, space: Space, rows: Vec<TableRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("lookup table needs at least one row".into()));
        }
        if space.embed_dim() > INDEX_DIM {
            return Err(Error::InvalidArgument(format!(
                "state embedding has {} coordinates, the index supports {INDEX_DIM}",
                space.embed_dim()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            let ok = |x: f64| (0.0..=1.0).contains(&x);
            if r.state.len() != space.dim() || !ok(r.psi_t) || !ok(r.psi_z) {
                return Err(Error::InvalidArgument(format!("row {i} is malformed")));
            }
        }
        metadata.content_hash = content_hash(&metadata, &space, &rows);
        let points: Vec<[f64; INDEX_DIM]> = rows.iter().map(|r| index_point(&space, &r.state)).collect();
        let index = ImmutableKdTree::new_from_slice(&points);
        Ok(SnmLookupTable {
            metadata,
            space,
            rows,
            index,
        })
    }

    pub fn metadata(&self) -> &TableMetadata {
        &self.metadata
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row of the table state nearest to `s`.
    pub fn nearest(&self, s: &[f64]) -> &TableRow {
        let hit = self.index.nearest_one::<SquaredEuclidean>(&index_point(&self.space, s));
        &self.rows[hit.item as usize]
    }

    pub fn mean_snm(&self) -> f64 {
        self.rows.iter().map(TableRow::snm).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_psi_t(&self) -> f64 {
        self.rows.iter().map(|r| r.psi_t).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_psi_z(&self) -> f64 {
        self.rows.iter().map(|r| r.psi_z).sum::<f64>() / self.rows.len() as f64
    }

    /// Mean of the clamped transition plus observation MoNG, when present.
    pub fn mean_mong(&self) -> Option<f64> {
        let mut sum = 0.0;
        for r in &self.rows {
            sum += r.mong_t?.max(0.0) + r.mong_z?.max(0.0);
        }
        Some(sum / self.rows.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TableFile {
            metadata: self.metadata.clone(),
            space: self.space.clone(),
            rows: self.rows.clone(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::json(path, e))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Read a table and check its content hash.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TableFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if file.metadata.format_version != TABLE_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "{}: table format {} is not supported",
                path.display(),
                file.metadata.format_version
            )));
        }
        let stored = file.metadata.content_hash.clone();
        let table = SnmLookupTable::new(file.metadata, file.space, file.rows)?;
        if table.metadata.content_hash != stored {
            return Err(Error::InvalidArgument(format!(
                "{}: content hash mismatch",
                path.display()
            )));
        }
        Ok(table)
    }
}

/// Build parameters for [`build_lookup_table`].
#[derive(Clone, Debug, PartialEq)]
pub struct TableConfig {
    pub model: String,
    pub e_t: f64,
    pub e_z: f64,
    pub node_budget: usize,
    pub samples: usize,
    pub bins: usize,
    pub seed: u64,
    pub with_mong: bool,
}

/// Sample states with RRTs from `b0`, then estimate the SNM components (and
/// optionally MoNG) at each of them in parallel. Every state has its own
/// random stream, so the result does not depend on the thread count.
pub fn build_lookup_table<M: PomdpModel + ?Sized>(
    model: &M,
    b0: &ParticleBelief,
    config: &TableConfig,
) -> Result<SnmLookupTable> {
    let mut rng = stream(config.seed, &[purpose::TABLE, 0]);
    let states = rrt_state_samples(model, b0, config.node_budget, &mut rng)?;
    let rows = states
        .into_par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(config.seed, &[purpose::TABLE, 1, i as u64]);
            let m = measure_state(
                model,
                &s,
                model.actions(),
                config.samples,
                config.bins,
                config.with_mong,
                &mut rng,
            )?;
            Ok(TableRow {
                state: s,
                psi_t: m.snm.psi_t,
                psi_z: m.snm.psi_z,
                mong_t: m.mong.map(|c| c.transition),
                mong_z: m.mong.map(|c| c.observation),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metadata = TableMetadata {
        format_version: TABLE_FORMAT_VERSION,
        model: config.model.clone(),
        e_t: config.e_t,
        e_z: config.e_z,
        node_budget: config.node_budget,
        samples: config.samples,
        bins: config.bins,
        actions: model.actions().to_vec(),
        seed: config.seed,
        content_hash: String::new(),
    };
    SnmLookupTable::new(metadata, model.state_space().clone(), rows)
}

/// Online estimate Ψ̂(b): the largest Ψ_T + Ψ_Z among the table states
/// nearest to each particle.
pub fn approximate_snm(belief: &ParticleBelief, table: &SnmLookupTable) -> f64 {
    belief
        .particles()
        .iter()
        .map(|p| table.nearest(p).snm())
        .fold(0.0, f64::max)
}
