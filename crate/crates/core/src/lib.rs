//! Identification toolkit for random-coefficient perturbed utility models.
//!
//! The pipeline evaluates an average structural function for a built-in model,
//! differentiates it at a centering point, and recovers moments of the random
//! slopes, derivatives of the integrated indirect utility `V`, welfare
//! differences and counterfactual demands.

pub mod asf;
pub mod diagnostics;
pub mod error;
pub mod index;
pub mod model;
pub mod numdiff;
pub mod quadrature;
pub mod recovery;
pub mod welfare;

pub use asf::{asf, ybar_at_index, ybar_given_beta, AsfEvaluator, Strategy};
pub use error::{Error, Result};
pub use index::{Coord, Layout, MomentIndex};
pub use model::{
    latent_utility, solve_choice, true_moment, BetaDistribution, BundleScenario, FiniteBundle,
    GenericFiniteEps, GenericScenario, IndexForm, ModelSpec, PairTerm, Univariate, Utility,
    Variant,
};
pub use numdiff::{derivative_table, mixed_partial, DerivativeTable, FdKind, FdScheme};
pub use recovery::{
    recover_moments, recover_v_derivatives, MomentTable, RecoveryConfig, RecoveryOutcome, Route,
    RouteConfig, VDerivTable, DEFAULT_RELEVANCE,
};
