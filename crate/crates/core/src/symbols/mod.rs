//! Polynomial symbol matrices of first- and second-order systems resolved for
//! one slot per equation, their determinant and inverse factor, and the
//! integrability checks that fix the negative-norm order.

mod conditions;
mod factor;
mod matrix;
mod poly;
mod spec;

use thiserror::Error;

pub use conditions::{check_conditions, Condition, ConditionFlags, ConditionReport, SampleEvaluation, SobolevBudget};
pub use factor::{symbolic_det_and_inverse_factor, DetRoute, SymbolFactor};
pub use matrix::{PolyMatrix, RatMatrix};
pub use poly::{rat, rat_from_f64, Exponent, Poly};
pub use spec::{
    build_symbol_matrices, derive_parameters, parameter_stack, presets, stack_permutation, ParameterSet,
    ResolutionSpec, Slot, KIND_NAMES,
};

#[derive(Debug, Error)]
pub enum SymbolError {
    #[error("invalid resolution spec: {0}")]
    InvalidSpec(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("B₁ does not have the expected structure: {0}")]
    Structure(String),
    #[error("det(B₁) vanishes identically for this parameter choice")]
    SingularStructure,
    #[error("{0} is singular; this C′ choice is inadmissible")]
    NotInvertible(&'static str),
    #[error("condition {condition:?} failed with measured growth exponent {exponent}")]
    ConditionFailed { condition: Condition, exponent: f64, report: Box<ConditionReport> },
    #[error("verification failed: {0}")]
    Verification(String),
}

/// Full analysis of one system: symbol matrices, factorisation and budget.
#[derive(Clone, Debug)]
pub struct SymbolAnalysis {
    pub b1: PolyMatrix,
    pub b2: PolyMatrix,
    pub factor: SymbolFactor,
    pub a1_b1_inv_b2: PolyMatrix,
}

pub fn analyze(spec: &ResolutionSpec, params: &ParameterSet) -> Result<SymbolAnalysis, SymbolError> {
    let (b1, b2) = build_symbol_matrices(spec, params)?;
    let factor = symbolic_det_and_inverse_factor(&b1)?;
    let a1_b1_inv_b2 = factor.times(&b2);
    Ok(SymbolAnalysis { b1, b2, factor, a1_b1_inv_b2 })
}

#[cfg(test)]
mod tests;
