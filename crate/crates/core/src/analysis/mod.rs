//! Norm reports, G-norm estimation and executable optimality conditions.

mod gnorm;
mod theorem;

pub use gnorm::{
    duality_ratio, gnorm_estimate, gnorm_estimate_with, membership_residual, zero_mean_check, GNormEstimate,
    GNormOptions, GNormProbe, ZERO_MEAN_TOL,
};
pub use theorem::{
    check_optimality, check_optimality_with, classify_input, classify_input_with, lemma1_check, lemma4_check,
    norms, norms_with, AnalysisOptions, CaseFlags, CaseReport, Gap, Gaps, InequalityCheck, InputClass,
    IsoperimetricChain, NormReport, Thresholds,
};
