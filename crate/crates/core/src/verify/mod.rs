//! Independent oracles: finite differences, Monte-Carlo checks of the
//! tracker error recursions, a second STORM implementation and a dense
//! minimizer.

mod consistency;
mod equiv;
mod fd;
mod mc;
mod minimum;

pub use consistency::estimator_gap;
pub use equiv::{check_storm_case, reference_storm_equiv, reference_storm_update, EquivReport, StormCase};
pub use fd::{finite_diff_grad, max_rel_err};
pub use mc::{mc_lemma_check, DriverPath, LemmaId, McAccumulator, McConfig, McReport, McSetup};
pub use minimum::{brute_force_minimum, descend_from};
