//! Multiplicative-weights solver over tree-level duals.

mod certify;
mod params;
mod search;
mod solver;

pub use certify::{
    certify, certify_exact, certify_from_samples, check_constraints, draw_from_table, transport_lambda, CertifyOutcome, ConstraintCheck,
    Drawn, ExplicitSource, LambdaSource, LevelScan, MwuInstance, OracleSource,
};
pub use params::{compute_params, width_reference, LevelRule, Mode, MwuParams, Relax};
pub use search::{
    approximate_emd, approximate_emd_observed, prepare_part, search_part, ApproxConfig, ApproxResult, PartReport, PreparedPart, SearchStep,
    SourceKind,
};
pub use solver::{
    dual_width, gamma_margin, mwu_run, mwu_run_observed, verify_certificate, Certificate, MwuOutcome, MwuReport, RoundRecord, RoundView,
    Verification,
};
