//! Online algorithms for metrical task systems driven by entropic mirror
//! descent. The crate covers the fractional dynamics on uniform stars and
//! weighted trees, an exact offline work-function solver used as the
//! comparison baseline, unfair-cost star runs, and the recursive combiner
//! that glues per-node star strategies over a hierarchically separated tree.

pub mod combine;
pub mod dist;
pub mod error;
pub mod hst;
pub mod instances;
pub mod integrate;
pub mod oracle;
pub mod pwl;
pub mod report;
pub mod runs;
pub mod solver;
pub mod tree;
pub mod unfair;

pub use combine::{build_combiner, run_hst, Combiner, CombinerOutcome, NodeRecord};
pub use dist::{subtree_sums, w1_distance, LeafDistribution, MASS_FLOOR, MASS_SUM_TOL};
pub use error::{Error, Result};
pub use hst::{quantize_to_8hst, validate_hst, HstReport};
pub use instances::{
    gen_coupon_collector, gen_cruel, gen_random, parse_instance, serialize_instance,
    ContinuousInstance, CostPath, CostSegment, DiscreteInstance, Instance,
};
pub use integrate::{
    integrate_segment, integrate_segment_observed, Dynamics, SegmentLedger, StepPolicy,
    STATE_SNAP, STEP_FLOOR, STEP_MAX_ENV,
};
pub use oracle::{
    discretize_online, segment_opt, water_fill, work_function_dp, MetricSpace, OfflineSolution,
    ORACLE_MAX_POINTS, ORACLE_MAX_STEPS, ORACLE_MAX_WORK,
};
pub use pwl::PwlMonotone;
pub use report::{
    digest_bytes, CheckRecord, CostReport, CostSummary, RunDiagnostics, REPORT_SCHEMA,
};
pub use runs::{error_budget, run_star, run_star_observed, run_tree, run_tree_observed, RunConfig, RunOutcome, ERR_C};
pub use solver::{
    star_multiplier_solve, star_multiplier_solve_into, tree_multiplier_solve,
    EntropicRegularizer, MultiplierSolution, Residuals, DELTA_FLOOR,
};
pub use tree::{NodeIx, TreeFile, WeightedRootedTree};
pub use unfair::{
    check_general_bound, normalized_shift_rate, run_unfair, run_unfair_observed, UnfairLedger,
    UnfairOutcome, UnfairParams,
};
