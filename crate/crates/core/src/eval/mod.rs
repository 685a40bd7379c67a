//! Experiment protocol: splits, metrics, single runs, combined assembly and
//! ablation families.

mod experiment;
mod metrics;
mod split;

pub use metrics::{compute_metrics, Confusion, Metrics};
pub use split::{split, SplitSpec, Splits};
pub use experiment::{
    ablation_cells, ablation_csv, assemble_balanced, assemble_combined, assert_no_leakage, default_seeds,
    run_ablation, run_experiment, run_graph, run_single, sign_test, spec_hash, summarize, AblationCell,
    AblationFamily, AblationRow, ExperimentRow, ExperimentSpec, RunInputs, RunMetrics, RunOutput, RunSpec,
    SignTest, Summary,
};
