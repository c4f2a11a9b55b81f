//! AC unit commitment by temporal decomposition.
//!
//! A full-horizon copper-plate unit commitment fixes the binaries, a
//! per-period AC optimal power flow restores network feasibility, and one of
//! several reserve strategies assigns reserve products afterwards. The four
//! end-to-end pipelines live in [`orchestrator`]; [`evaluator`] scores any
//! solution independently of the solver that produced it.

pub mod model;
pub mod case_io;
pub mod acopf;
pub mod error;
pub mod evaluator;
pub mod lp;
pub mod mip;
pub mod orchestrator;
pub mod reserves;
pub mod testing;
pub mod uc;
