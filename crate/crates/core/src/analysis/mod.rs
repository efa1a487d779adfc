//! Integral identities, the quadratic form, thresholds, the coercivity
//! spectrum and the rigidity certificate.

pub mod certificate;
pub mod functionals;
pub mod spectrum;
pub mod threshold;

pub use certificate::{rigidity_certificate, CertificateConfig, RigidityCertificate, Verdict};
pub use functionals::{
    cubic_bound, deficit_mean, deficit_scalar, evaluate, functionals, identity_report,
    identity_report_from,
    quadratic_form, zero_divthm_identity, CubicBound, Domain, FieldSamples, Functionals,
    IdentityReport, IdentityTag, QuadraticFormBreakdown,
};
pub use spectrum::{assemble_q_matrix, min_eigenvalue, spectrum, SpectrumReport};
pub use threshold::{b2_coefficient, beta_threshold, cstar, threshold_report, ThresholdReport};
