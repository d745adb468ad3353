//! Numerical versions of the limit objects: meander densities, bridge
//! positivity, the ladder constants and the laws `A1`, `A2`, `B`.

pub mod bridge;
pub mod constants;
pub mod laws;
pub mod local;
pub mod meander;

pub use bridge::{estimate_bridge_positivity, BridgeConfig, BridgeMethod, BridgePositivityTable};
pub use constants::{estimate_constants, ConstantsConfig, LadderProducts, LimitConstants, TwoRoute};
pub use laws::{eval_a1, eval_a2, eval_b, eval_b_both, eval_b_curve, CStarChoice, LawKind, LimitLawEval};
pub use local::{fit_domination_constant, local_limit_prediction, domination_bound, LocalCase, LocalContext};
pub use meander::{estimate_meander_density, MeanderConfig, MeanderTable, Sign};
