//! GAP and two-stage plug-and-play ADMM reconstruction.

pub mod admm;
pub mod gap;
pub mod schedule;
pub mod trace;

pub use admm::{
    default_init, q_update, q_update_from, two_stage_admm, u_update, u_update_from, v_update, w_update,
    x_update_closed, x_update_demosaic, AdmmEngine, AdmmOptions, Priors, SolveResult, SolverState, Step,
    StepRecord, Var, Versions,
};
pub use gap::{gap_color_baseline, gap_solve, GapOptions, GapResult};
pub use schedule::{Phase, Schedule};
pub use trace::{Trace, TraceRow, UpdateEvent};
