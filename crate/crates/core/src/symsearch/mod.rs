//! Exact search over power-law Lyapunov ansätze.

mod collection;
mod interpolate;
mod linsolve;
mod powersum;
mod search;
mod threshold;

pub use collection::{
    derive_collection, derive_collection_frozen, Basis, BasisValues, DerivativeCollection,
    NumericCollection,
};
pub use interpolate::{
    reconstruct_parameter_dependence, ParameterDependence, Poly, RationalFunction,
    ReconstructedTerm,
};
pub use powersum::{Antiderivative, NumericAntiderivative, NumericPowerSum, PowerSum};
pub use search::{canonical_set, search, Candidate, SearchOptions};
pub use threshold::{frozen_g, principal_threshold, sign_change_threshold, Threshold};
