//! Experiment commands. Each takes a parsed config and a
//! [`RunContext`](crate::RunContext), writes data files plus a manifest into
//! the context's output directory, and reports whether any experiment-level
//! assertion failed.

mod dynamics;
mod hard_instance;
mod iterate;
mod spectral;
mod trap;

pub use dynamics::run_dynamics;
pub use hard_instance::run_hard_instance;
pub use iterate::run_iterate;
pub use spectral::run_spectral;
pub use trap::run_trap;
