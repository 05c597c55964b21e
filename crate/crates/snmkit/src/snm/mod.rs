//! The total-variation non-linearity measure: histogram estimator, state
//! sampling, the offline lookup table and its online query.

mod estimate;
mod histogram;
mod lipschitz;
mod rrt;
mod table;

pub use estimate::{measure_state, snm_components_at, SnmComponents, StateMeasures};
pub use histogram::{tv_histogram, tv_histogram_with_sink, HistogramGrid, MIN_WIDTH};
pub use lipschitz::{estimate_lipschitz_constants, lipschitz_gap_bound, LipschitzConstants};
pub(crate) use rrt::{embed, sq_dist};
pub use rrt::{rrt_state_samples, STALL_LIMIT};
pub use table::{
    approximate_snm, build_lookup_table, SnmLookupTable, TableConfig, TableMetadata, TableRow, TABLE_FORMAT_VERSION,
};
