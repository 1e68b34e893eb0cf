//! The trajectory reconstruction loop.
//!
//! `x_T` comes from an uncoupled fit of the prior to the measurements. Each
//! later state `x_t`, `t = T−1..0`, perturbs `x_{t+1}` by `σ_t ε_t`, feeds the
//! result through the network warm-started from the previous step, and
//! minimizes `½‖A D(u) − y‖² + (β_t/2)‖D(u) − x_{t+1}‖²` for `K` Adam steps.

mod schedules;
mod trace;

pub use schedules::{beta_schedule, sigma_schedule};
pub use trace::{
    derive_seed, dip_initialize, run_trace, run_trace_observed, trace_step, training_loss, Ablation, DipInit, LossTerms,
    Problem, Schedules, StepEvent, StepOutcome, StepSettings, TraceConfig, TrajectoryRecord, Transition,
};
