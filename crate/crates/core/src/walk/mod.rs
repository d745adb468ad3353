//! Increment families, paths, ladder variables, renewal functions and
//! conditioned walks.

pub mod cache;
pub mod conditioned;
pub mod family;
pub mod kernel;
pub mod ladder;
pub mod lattice;
pub mod path;
pub mod renewal;

pub use conditioned::{sample_conditioned, sample_h_transform, HMode, RejectionSampler, SampleMode};
pub use family::{make_family, scaling_constants, FamilyKind, IncrementFamily, ScalingLaw};
pub use kernel::{exact_kernel, ConditionKernel, EndSpec};
pub use ladder::{ladder_stats, LadderPoint, LadderStats};
pub use path::{simulate_path, WalkPath};
pub use renewal::{
    estimate_renewal, estimate_zeta, ladder_epoch_tail, RenewalBudget, RenewalKind, RenewalMethod, RenewalTable,
    TailEstimate, ZetaEstimate,
};
