use caprigid::fields::{
    eigen_divfree_field, lie_derivative_metric, make_admissible_field, VectorField,
};
use caprigid::gauge::{build_gauge_basis, divergence_residual, inner_volume, slice_project};
use caprigid::geometry::{
    background_unchecked, build_quadrature, integrate_volume, ChartSpec, QuadParams,
};
use caprigid::jet::jet_at_order;

fn coarse(n: usize, c: f64) -> ChartSpec {
    ChartSpec::new(n, c)
        .unwrap()
        .with_quad(QuadParams::coarse_for(n))
        .unwrap()
}

#[test]
fn eigen_field_is_left_fixed() {
    for n in [2, 3] {
        let spec = coarse(n, 0.85);
        let basis = build_gauge_basis(&spec, 2).unwrap();
        let h = eigen_divfree_field(n, 2).unwrap().normalized(&spec, 0.1).unwrap();
        let p = slice_project(&h, &basis).unwrap();
        let amax = p.coefficients.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(amax <= 1e-8, "n = {n}: largest coefficient {amax:e}");
        assert!(p.div_sup <= 1e-6);
    }
}

#[test]
fn energy_split_and_idempotence() {
    let spec = coarse(3, 0.8);
    let basis = build_gauge_basis(&spec, 2).unwrap();
    let h = make_admissible_field(&spec, 12, 0.1, 2).unwrap();
    let p = slice_project(&h, &basis).unwrap();
    let split = p.h_norm.powi(2) - p.h_df_norm.powi(2) - p.gauge_norm.powi(2);
    assert!(split.abs() <= 1e-9 * p.h_norm.powi(2), "split {split:e}");
    let again = slice_project(&p.h_df, &basis).unwrap();
    let change = inner_volume(
        &again.h_df.add_scaled(-1.0, &p.h_df),
        &again.h_df.add_scaled(-1.0, &p.h_df),
        basis.rule(),
    )
    .sqrt();
    assert!(change <= 1e-10 * p.h_df_norm, "change {change:e}");
    assert!(p.tangential_max <= 1e-8);
}

#[test]
fn weak_divergence_duality() {
    let spec = coarse(2, 0.8);
    let rule = build_quadrature(&spec).unwrap();
    let basis = build_gauge_basis(&spec, 2).unwrap();
    let h = make_admissible_field(&spec, 4, 0.1, 2).unwrap();
    let hdf = slice_project(&h, &basis).unwrap().h_df;
    for seed in [1, 2, 3] {
        let xi = VectorField::random_boundary_vanishing(&spec, seed, 3);
        let lie = lie_derivative_metric(&xi);
        let a = inner_volume(&hdf, &lie, &rule);
        let b = integrate_volume(&rule, |v| {
            let p = background_unchecked(&v.x);
            let j = jet_at_order(&hdf, &p, false).unwrap();
            let xv = xi.eval(&v.x);
            // chart covector (δ̄h)_l = λ (δ̄h)^frame_l
            j.div.iter().zip(&xv).map(|(d, x)| p.lambda * d * x).sum::<f64>()
        })
        .unwrap();
        let scale = inner_volume(&hdf, &hdf, &rule).sqrt() * inner_volume(&lie, &lie, &rule).sqrt();
        assert!((a + 2.0 * b).abs() <= 1e-9 * scale, "seed {seed}: {a} vs {}", -2.0 * b);
    }
}

#[test]
fn divergence_residual_drops_with_degree() {
    let spec = coarse(2, 0.9);
    let h = make_admissible_field(&spec, 21, 0.1, 2).unwrap();
    let mut last = f64::INFINITY;
    for degree in [2, 3, 4] {
        let basis = build_gauge_basis(&spec, degree).unwrap();
        let p = slice_project(&h, &basis).unwrap();
        assert!(p.div_l2 < last, "degree {degree}: {} ≥ {last}", p.div_l2);
        last = p.div_l2;
    }
}

#[test]
fn boundary_vanishing_lie_derivative_is_tangentially_trivial() {
    let spec = coarse(3, 0.7);
    let rule = build_quadrature(&spec).unwrap();
    let xi = VectorField::random_boundary_vanishing(&spec, 77, 2);
    let lie = lie_derivative_metric(&xi);
    let t = caprigid::gauge::tangential_max(&lie, &spec, &rule).unwrap();
    assert!(t <= 1e-8, "tangential block {t:e}");
    let (l2, _) = divergence_residual(&caprigid::SymTensorField::zero(3), &rule).unwrap();
    assert_eq!(l2, 0.0);
}
