//! Expected total time for a "special" customer who has to be served by two
//! independent M/M/1 queues and may visit them in either order.
//!
//! The crate is split into:
//!
//! * [`quadrature`]: adaptive Gauss–Kronrod integration on finite intervals and
//!   against Erlang densities on `[0, ∞)`.
//! * [`transient`]: exact transient quantities of one M/M/1 queue
//!   (`p_ij(t)`, `EL_i(t)`, Erlang densities).
//! * [`ett`]: expected total time for both visiting orders, order comparison,
//!   case classification, fluid approximations and `(a, b)` sweeps.
//! * [`sim`]: a seeded Monte Carlo oracle used to validate all of the above.

pub mod ett;
pub mod quadrature;
pub mod sim;
pub mod transient;

mod error;
mod poisson;

pub use error::{Error, Result};
pub use ett::{
    classify_case, compare_orders, ett, ett_sum_form, fluid_curve, fluid_linear, sweep, sweep_each,
    CaseLabel, EttReport, Recommendation, Scenario, SweepRow,
};
pub use quadrature::{
    integrate_erlang_weighted, integrate_finite, GrowthEnvelope, QuadConfig, QuadResult,
};
pub use sim::{simulate_ett, simulate_ett_with, simulate_pij, SimConfig, SimEstimate, SimMethod};
pub use transient::{
    a_kernel, erlang_pdf, expected_length, expected_length_by_sum, gamma_kernel, initial_slope,
    state_cap, steady_state_length, transient_prob, transient_prob_unclamped, transient_row,
    ErlangStage, Estimate, QueueParams, StateCap, TransientQuery,
};
