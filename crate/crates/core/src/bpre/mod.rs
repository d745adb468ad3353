//! Branching processes in random environment driven by the walk families.

pub mod b2;
pub mod environment;
pub mod offspring;
pub mod regime;
pub mod theta;

pub use b2::{check_condition_b2, B2Budget, B2Report, Verdict};
pub use environment::{
    sample_environment, simulate_bpre, simulate_bpre_capped, survival_prob_given_env, BpreTrajectory, Environment,
    EnvironmentModel,
};
pub use offspring::{OffspringKind, OffspringLaw};
pub use regime::{
    run_regime_experiment, small_deviation_experiment, verify_tcond, AsymInputs, ReferenceLaw, Regime, RegimeBudget,
    RegimeReport, SamplerKind, TcondResult,
};
pub use theta::{estimate_theta, MinConvention, PoolConfig, ThetaConfig, ThetaEstimate, UpPool};
