//! Reference detectors: exact BCJR, damped SPA on FFG/UFG and block LMMSE,
//! plus the max* kernel.

mod bcjr;
mod lmmse;
pub mod max_star;
mod spa;

pub use bcjr::{
    bcjr_detect, bcjr_detect_with_budget, bcjr_extrinsic_omit_index, bcjr_raw, Trellis, DEFAULT_TRANSITION_BUDGET,
};
pub use lmmse::{lmmse_detect, LmmseOutput};
pub use max_star::{max_star, max_star2};
pub use spa::{spa_detect_ffg, spa_detect_ufg, SpaOptions, SpaOutput, TabulatedGraph, OVERFLOW_SPREAD};
