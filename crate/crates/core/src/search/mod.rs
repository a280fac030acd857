//! Bi-objective search over bitwidth, batch size, learning rate and depth.
//!
//! Each trial is QAT-trained and gated on early validation accuracy, then
//! quantized and simulated (latency gate), costed (resource gate) and
//! profiled (power and energy gate). Only trials that pass every gate are
//! eligible for the accuracy/energy Pareto front.

pub mod pareto;
pub mod space;
pub mod study;
pub mod trial;

pub use pareto::{crowding_distance, dominates, nondominated_sort, pareto_front, ParetoFront};
pub use space::{ConstraintSet, SearchSpace, TrialConfig, ACCURACY_THRESHOLDS};
pub use study::{read_study_log, replay, run_study, write_study_log, Study, StudySettings};
pub use trial::{evaluate_trial, staged_prune, Gate, Pruned, Stage, TrialMetrics, TrialResult, Verdict};
