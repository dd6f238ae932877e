//! Discrete-time simulation of the distributed price-consensus algorithm.
//!
//! Every node `i` keeps its own price estimate `λ_i` and repeatedly applies the
//! forward-difference update
//!
//! ```text
//! λ_i ← λ_i + T_i·(d_i − x̂_i(λ_i) + φ_i(x̂_i(λ_i))) + T_i·k·Σ_{j∈N_i} (λ_j − λ_i)
//! ```
//!
//! using only its own data and the prices broadcast by its neighbors. With a
//! common sampling time all nodes update together ([`step_synchronous`]);
//! otherwise each node runs on its own clock and neighbors see a zero-order
//! hold of each other's prices ([`step_asynchronous`]). Scenario events change
//! demands, capacities and membership mid-run without re-initialization.

mod analysis;
mod config;
mod engine;
mod trace;

pub use analysis::{
    analytic_rate, detect_divergence, detect_divergence_between, diagnostics, numerical_instability, Classification,
    DiagnosticSeries, DivergenceOptions, DivergenceReport, Instability,
};
pub use config::{EventKind, ScenarioEvent, SimConfig};
pub use engine::{run, step_asynchronous, step_synchronous, AsyncClock, LambdaState};
pub use trace::{Segment, Snapshot, Trace, TraceRow, TRACE_HEADER};
