//! Matching: score candidate policies with the weighted-sum function, keep
//! those meeting the bounds, and search the joint memory space.

mod aggregate;
mod controller;
mod result;
mod samples;
mod search;
mod space;
mod zf;

pub use aggregate::aggregate_composition;
pub use controller::{
    run_sizing, SearchChoice, SizingOptions, SizingRequest, SizingRun, TaskTimes, FIT_COST_MS,
};
pub use result::{
    ParetoPoint, SearchMethod, SearchStats, SizingProvenance, SizingResult, SizingStatus,
};
pub use samples::{match_samples, observed_qualities};
pub use search::{anneal_match, brute_force_match, AnnealSchedule, EVALUATION_COST_MS};
pub use space::SearchSpace;
pub use zf::{filter_bounds, penalty, violated, zf_score, Normalizer, ZfInput};
