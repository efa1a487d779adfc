use caprigid::analysis::{
    b2_coefficient, beta_threshold, cstar, cubic_bound, functionals, identity_report, quadratic_form,
    rigidity_certificate, spectrum, zero_divthm_identity, CertificateConfig, Domain, IdentityTag,
    Verdict,
};
use caprigid::fields::{eigen_divfree_field, make_admissible_field};
use caprigid::gauge::{build_gauge_basis, slice_project};
use caprigid::geometry::{ChartSpec, QuadParams};
use caprigid::SymTensorField;
use proptest::prelude::*;

const EPS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

fn domain(n: usize, c: f64) -> Domain {
    let spec = ChartSpec::new(n, c)
        .unwrap()
        .with_quad(QuadParams::coarse_for(n))
        .unwrap();
    Domain::new(&spec).unwrap()
}

#[test]
fn zero_divthm_holds_on_refined_grid() {
    for q in [QuadParams::coarse_for(2), QuadParams::default_for(2)] {
        let spec = ChartSpec::new(2, 0.88).unwrap().with_quad(q).unwrap();
        let d = Domain::new(&spec).unwrap();
        let h = make_admissible_field(&spec, 14, 0.1, 3).unwrap();
        let r = zero_divthm_identity(&d, &h).unwrap();
        let c1 = cubic_bound(&d, &h).unwrap().c1;
        assert!(r.abs() <= 1e-8 * c1, "residual {r:e}, C1 {c1}");
    }
}

#[test]
fn estimates_scale_cubically_after_correction() {
    let d = domain(2, 0.9);
    let basis = build_gauge_basis(&d.spec, 2).unwrap();
    let h = make_admissible_field(&d.spec, 31, 0.1, 2).unwrap();
    let hdf = slice_project(&h, &basis).unwrap().h_df;
    let r31 = identity_report(&d, &h, IdentityTag::Prop31, Some(&EPS)).unwrap();
    assert!((2.7..=3.3).contains(&r31.slope.unwrap().slope));
    for tag in [IdentityTag::Prop32, IdentityTag::Cor42, IdentityTag::Key] {
        let r = identity_report(&d, &hdf, tag, Some(&EPS)).unwrap();
        let s = r.corrected_slope.expect("leakage-corrected fit").slope;
        assert!((2.7..=3.3).contains(&s), "{}: corrected slope {s}", tag.name());
        // The raw residual carries the linear leakage of an approximate projection.
        assert!(r.slope.unwrap().slope < s);
    }
}

#[test]
fn exact_identities_ignore_eps() {
    let d = domain(3, 0.85);
    let h = make_admissible_field(&d.spec, 5, 0.1, 2).unwrap();
    for tag in [IdentityTag::ZeroDivthm, IdentityTag::OmegaClosed, IdentityTag::Prop41] {
        let r = identity_report(&d, &h, tag, Some(&EPS)).unwrap();
        assert!(r.slope.is_none() && r.ratio.is_none());
    }
    let r = identity_report(&d, &h, IdentityTag::Prop41, None).unwrap();
    assert!(r.corrected.unwrap() < 1e-10);
    assert!(r.residual <= r.leakage_bound);
}

#[test]
fn non_admissible_input_is_rejected() {
    // Eigen fields are divergence-free but change the boundary metric.
    let d = domain(2, 0.9);
    let h = eigen_divfree_field(2, 3).unwrap().normalized(&d.spec, 0.05).unwrap();
    let err = functionals(&d, &h).unwrap_err();
    assert!(matches!(err, caprigid::Error::Precondition(_)), "{err}");
}

#[test]
fn cubic_bound_trace_ratio_is_moderate() {
    for n in [2, 3] {
        let d = domain(n, 0.9);
        for seed in [1, 2, 3] {
            let h = make_admissible_field(&d.spec, seed, 0.1, 2).unwrap();
            let cb = cubic_bound(&d, &h).unwrap();
            assert!(cb.trace_ratio > 0.0 && cb.trace_ratio < 10.0, "ratio {}", cb.trace_ratio);
            let half = cubic_bound(&d, &h.scaled(0.5)).unwrap();
            assert!((half.trace_ratio - cb.trace_ratio).abs() < 1e-12 * cb.trace_ratio);
        }
    }
}

#[test]
fn spectrum_is_coercive_above_threshold() {
    let d = domain(2, 0.92);
    let r = spectrum(&d, 2, 2).unwrap();
    assert!(r.kappa >= 0.5, "κ = {}", r.kappa);
    assert!(r.min_excess >= -1e-10);
    assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(r.eigenvalues.len(), r.retained);
}

#[test]
fn certificate_reports_reasons() {
    let d = domain(3, 0.9);
    let h = make_admissible_field(&d.spec, 8, 0.05, 2).unwrap();
    let cert = rigidity_certificate(&d, &h, &CertificateConfig::default()).unwrap();
    assert_eq!(cert.verdict, Verdict::HypothesesViolated);
    assert!(!cert.reasons.is_empty());
    assert!(cert.margin.is_finite() && cert.observed_ratio < cert.config.c_fit);
    let zero = rigidity_certificate(&d, &SymTensorField::zero(3), &CertificateConfig::default()).unwrap();
    assert_eq!(zero.verdict, Verdict::RigidConsistent);
    let json = serde_json::to_value(&cert).unwrap();
    assert_eq!(json["verdict"], "hypotheses_violated");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_increase_in_height(n in 2usize..12, a in 0.01f64..0.98, gap in 1e-4f64..0.01) {
        let b = a + gap;
        prop_assert!(beta_threshold(n, b).unwrap() > beta_threshold(n, a).unwrap());
        prop_assert!(b2_coefficient(n, b).unwrap() > b2_coefficient(n, a).unwrap());
        // b2 turns positive before β does.
        if beta_threshold(n, a).unwrap() >= 0.0 {
            prop_assert!(b2_coefficient(n, a).unwrap() > 0.0);
        }
        let cs = cstar(n).unwrap();
        prop_assert_eq!(beta_threshold(n, a).unwrap() < 0.0, a < cs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn projected_fields_meet_half_mass(seed in 0u64..10_000, t in 0.0f64..1.0) {
        let c = cstar(2).unwrap() + t * (0.97 - cstar(2).unwrap());
        let d = domain(2, c);
        let basis = build_gauge_basis(&d.spec, 2).unwrap();
        let h = make_admissible_field(&d.spec, seed, 0.1, 2).unwrap();
        let hdf = slice_project(&h, &basis).unwrap().h_df;
        let q = quadratic_form(&d, &hdf).unwrap();
        let f = functionals(&d, &hdf).unwrap();
        prop_assert!(q.pair_normal >= -1e-12 && q.pair_tangential >= -1e-12);
        prop_assert!(q.t1 >= 0.0 && q.t2 >= 0.0 && q.t3 >= 0.0 && q.t4 >= 0.0);
        prop_assert!(q.q - 0.5 * f.mass >= -1e-10 * f.mass);
    }
}
