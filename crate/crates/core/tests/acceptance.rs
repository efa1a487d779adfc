//! Acceptance harness: eight criteria, one PASS/FAIL line each.
//!
//! Exits nonzero on failure only when `ACCEPTANCE_STRICT=1`; otherwise the
//! summary line carries the verdict so `cargo test` stays usable while a
//! failing criterion is still reported.

use std::fmt::Write as _;
use std::time::Instant;

use caprigid::analysis::{
    beta_threshold, cstar, functionals, identity_report_from, rigidity_certificate, spectrum,
    threshold::cstar_closed, CertificateConfig, Domain, FieldSamples, IdentityTag, Verdict,
};
use caprigid::curvature::{curvature_sample, remainder_slope, scalar_exact, Which};
use caprigid::fields::{eigen_divfree_field, lie_derivative_metric, make_admissible_field, VectorField};
use caprigid::gauge::{build_gauge_basis, slice_project, GaugeBasis};
use caprigid::geometry::{background_check, build_quadrature, eval_background, ChartSpec, QuadParams};
use caprigid::SymTensorField;

type Res<T> = Result<T, Box<dyn std::error::Error>>;

const EPS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
const SLOPE: (f64, f64) = (2.7, 3.3);

struct Verdicts {
    pass: bool,
    log: String,
}

impl Verdicts {
    fn new() -> Self {
        Verdicts {
            pass: true,
            log: String::new(),
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        let _ = writeln!(self.log, "    {} {line}", if ok { "ok  " } else { "FAIL" });
    }
}

fn coarse(n: usize, c: f64) -> Res<ChartSpec> {
    Ok(ChartSpec::new(n, c)?.with_quad(QuadParams::coarse_for(n))?)
}

fn c1_threshold(v: &mut Verdicts) -> Res<()> {
    for n in 2..=10 {
        let root = cstar(n)?;
        let closed = cstar_closed(n);
        let below = (1..100).all(|k| {
            let c = closed * k as f64 / 100.0;
            beta_threshold(n, c).is_ok_and(|b| b < 0.0)
        });
        let above = (1..100).all(|k| {
            let c = closed + (1.0 - closed) * k as f64 / 100.0;
            beta_threshold(n, c).is_ok_and(|b| b > 0.0)
        });
        let err = (root - closed).abs();
        v.check(
            err <= 1e-12 && below && above,
            format!("n={n:2}: |root − 2/√(n+3)| = {err:.2e}, β<0 below: {below}, β>0 above: {above}"),
        );
    }
    Ok(())
}

fn c2_background(v: &mut Verdicts) -> Res<()> {
    for (n, c, spec) in [
        (2, 0.9, ChartSpec::new(2, 0.9)?),
        (2, 0.5, ChartSpec::new(2, 0.5)?),
        (3, 0.8, coarse(3, 0.8)?),
    ] {
        let r = background_check(&spec)?;
        v.check(
            r.hessian_max <= 1e-10 && r.eikonal_max <= 1e-10,
            format!(
                "n={n} c={c}: hessian {:.2e}, eikonal {:.2e}",
                r.hessian_max, r.eikonal_max
            ),
        );
        v.check(r.umbilic_max <= 1e-6, format!("n={n} c={c}: umbilic {:.2e}", r.umbilic_max));
        if n == 2 {
            let dv = (r.volume_quadrature - 2.0 * std::f64::consts::PI * (1.0 - c)).abs();
            let da = (r.area_quadrature - 2.0 * std::f64::consts::PI * (1.0 - c * c).sqrt()).abs();
            v.check(
                dv <= 1e-8 && da <= 1e-8,
                format!("n={n} c={c}: volume error {dv:.2e}, circumference error {da:.2e}"),
            );
        }
    }
    Ok(())
}

fn c3_oracle(v: &mut Verdicts) -> Res<()> {
    for n in [2, 3] {
        let spec = coarse(n, 0.85)?;
        let rule = build_quadrature(&spec)?;
        // R_g can cross zero at amplitude 0.05, so differences are taken
        // relative to max(|R_g|, n(n−1)); the bare ratio is printed too.
        let scale = (n * (n - 1)) as f64;
        let mut worst: f64 = 0.0;
        let mut worst_bare: f64 = 0.0;
        let mut min_r = f64::INFINITY;
        for seed in 0..10 {
            let h = make_admissible_field(&spec, seed, 0.05, 2)?;
            for node in &rule.volume {
                let p = eval_background(&spec, &node.x)?;
                let s = curvature_sample(&h, &p, 1e-3 * spec.rho0)?;
                let d = (s.r_exact - s.r_oracle).abs();
                worst = worst.max(d / s.r_exact.abs().max(scale));
                worst_bare = worst_bare.max(d / s.r_exact.abs());
                min_r = min_r.min(s.r_exact.abs());
            }
        }
        v.check(
            worst <= 1e-6,
            format!(
                "n={n}: max relative |exact − oracle| = {worst:.2e} over {} nodes × 10 seeds \
                 (bare |Δ|/|R| {worst_bare:.2e}, min |R| {min_r:.2e})",
                rule.volume.len()
            ),
        );
        for t in [0.1, 0.2] {
            let p = eval_background(&spec, &vec![0.07; n])?;
            let r = scalar_exact(&SymTensorField::conformal(n, t), &p)?;
            let err = (r - (n * (n - 1)) as f64 / (1.0 + t)).abs();
            v.check(err <= 1e-8, format!("n={n} t={t}: conformal error {err:.2e}"));
        }
    }
    Ok(())
}

fn slope_ok(s: f64) -> bool {
    (SLOPE.0..=SLOPE.1).contains(&s)
}

fn c4_slopes(v: &mut Verdicts) -> Res<()> {
    for n in [2, 3] {
        let spec = coarse(n, 0.9)?;
        let domain = Domain::new(&spec)?;
        let basis = build_gauge_basis(&spec, 2)?;
        let mut rows = [Vec::new(), Vec::new(), Vec::new()];
        for seed in 1..=5 {
            let h = make_admissible_field(&spec, seed, 0.1, 2)?;
            rows[0].push(remainder_slope(&spec, &h, &EPS, Which::Scalar)?.slope);
            rows[1].push(remainder_slope(&spec, &h, &EPS, Which::Mean)?.slope);
            let hdf = slice_project(&h, &basis)?.h_df;
            let s = FieldSamples::new(&hdf, &domain)?;
            let r = identity_report_from(&domain, &s, IdentityTag::Key, Some(&EPS))?;
            let fit = r.corrected_slope.ok_or("key report without corrected slope")?;
            rows[2].push(fit.slope);
        }
        for (name, slopes) in ["scalar", "mean", "key (corrected)"].iter().zip(&rows) {
            let txt: Vec<String> = slopes.iter().map(|s| format!("{s:.3}")).collect();
            v.check(
                slopes.iter().all(|&s| slope_ok(s)),
                format!("n={n} {name} slopes [{}]", txt.join(", ")),
            );
        }
    }
    Ok(())
}

fn c5_exact(v: &mut Verdicts) -> Res<()> {
    for n in [2, 3] {
        let spec = coarse(n, 0.9)?;
        let domain = Domain::new(&spec)?;
        let bases: Vec<GaugeBasis> = [2, 3, 4]
            .iter()
            .map(|&d| build_gauge_basis(&spec, d))
            .collect::<Result<_, _>>()?;
        for seed in 0..5 {
            let h = make_admissible_field(&spec, seed, 0.1, 2)?;
            let raw = functionals(&domain, &h)?;
            let zd = raw.zero_divthm.abs();
            v.check(
                zd <= 1e-8 * raw.c1,
                format!("n={n} seed={seed}: zero_divthm {zd:.2e} ≤ 1e−8·C1 = {:.2e}", 1e-8 * raw.c1),
            );
            let mut res = Vec::new();
            let mut bounds = Vec::new();
            let mut umb: f64 = 0.0;
            let mut omega: f64 = 0.0;
            for basis in &bases {
                let hdf = slice_project(&h, basis)?.h_df;
                let f = functionals(&domain, &hdf)?;
                res.push((f.lhs41 - f.rhs41).abs());
                bounds.push(f.leak41_bound());
                umb = umb.max(f.umbilic_normal.abs()).max(f.umbilic_tangential.abs());
                omega = omega.max(f.omega_closure.abs() / f.c1.max(1.0));
            }
            v.check(umb <= 1e-6, format!("n={n} seed={seed}: umbilic identities {umb:.2e}"));
            v.check(omega <= 1e-8, format!("n={n} seed={seed}: ω-closure {omega:.2e}"));
            let within = res.iter().zip(&bounds).all(|(r, b)| r <= b);
            v.check(
                within,
                format!(
                    "n={n} seed={seed}: boundary identity residual ≤ κ_div∮|δh| at degrees 2,3,4 \
                     (bounds {:.2e}, {:.2e}, {:.2e})",
                    bounds[0], bounds[1], bounds[2]
                ),
            );
            let decreasing = res.windows(2).all(|w| w[1] < w[0]);
            v.check(
                decreasing,
                format!(
                    "n={n} seed={seed}: boundary identity residual decreasing 2→3→4: \
                     {:.3e}, {:.3e}, {:.3e}",
                    res[0], res[1], res[2]
                ),
            );
        }
    }
    Ok(())
}

fn c6_gauge(v: &mut Verdicts) -> Res<()> {
    for n in [2, 3] {
        let spec = coarse(n, 0.85)?;
        let basis = build_gauge_basis(&spec, 2)?;
        for seed in [1, 2] {
            let xi = VectorField::random_boundary_vanishing(&spec, seed, 2);
            let p = slice_project(&lie_derivative_metric(&xi), &basis)?;
            let rel = p.h_df_norm / p.h_norm;
            v.check(rel <= 1e-10, format!("n={n} seed={seed}: pure gauge remainder {rel:.2e}"));
        }
        for k in [2, 3] {
            let h = eigen_divfree_field(n, k)?.normalized(&spec, 0.1)?;
            let p = slice_project(&h, &basis)?;
            let rel = p.gauge_norm / p.h_norm;
            v.check(rel <= 1e-8, format!("n={n} k={k}: eigen field moved by {rel:.2e}"));
        }
        for seed in [3, 4] {
            let h = make_admissible_field(&spec, seed, 0.1, 2)?;
            let p = slice_project(&h, &basis)?;
            let split = (p.h_norm.powi(2) - p.h_df_norm.powi(2) - p.gauge_norm.powi(2)).abs()
                / p.h_norm.powi(2);
            v.check(split <= 1e-9, format!("n={n} seed={seed}: energy split {split:.2e}"));
            let again = slice_project(&p.h_df, &basis)?;
            let rel = again.gauge_norm / p.h_df_norm;
            v.check(rel <= 1e-10, format!("n={n} seed={seed}: idempotence {rel:.2e}"));
        }
    }
    Ok(())
}

fn c7_coercivity(v: &mut Verdicts) -> Res<()> {
    for (n, degree) in [(2, 3), (3, 2)] {
        for c in [cstar_closed(n), 0.9, 0.95] {
            let spec = coarse(n, c)?;
            let r = spectrum(&Domain::new(&spec)?, degree, 2)?;
            v.check(
                r.min_excess >= -1e-10 && r.min_random_excess >= -1e-10,
                format!(
                    "n={n} c={c:.6}: min (Q − ½M)/M = {:.3e} over {} basis vectors, {:.3e} over random combinations",
                    r.min_excess, r.retained, r.min_random_excess
                ),
            );
            v.check(
                r.kappa >= 0.5 - 1e-6,
                format!("n={n} c={c:.6}: κ = {:.4} ({} of {} generators)", r.kappa, r.retained, r.generators),
            );
            v.check(
                r.min_node_beta >= -1e-12 && r.min_node_b2 >= -1e-12,
                format!(
                    "n={n} c={c:.6}: node minima β {:.2e}, b2 {:.3e}",
                    r.min_node_beta, r.min_node_b2
                ),
            );
        }
    }
    Ok(())
}

fn c8_certificate(v: &mut Verdicts) -> Res<()> {
    let cfg = CertificateConfig::default();
    let mut never_unsound = true;
    for n in [2, 3] {
        let domain = Domain::new(&coarse(n, 0.9)?)?;
        let cert = rigidity_certificate(&domain, &SymTensorField::zero(n), &cfg)?;
        never_unsound &= cert.verdict != Verdict::RigidConsistent || cert.margin <= 0.0;
        v.check(
            cert.verdict == Verdict::RigidConsistent,
            format!("n={n} h=0: {:?}, margin {:.2e}", cert.verdict, cert.margin),
        );
    }
    let domains = [Domain::new(&coarse(2, 0.9)?)?, Domain::new(&coarse(3, 0.9)?)?];
    let mut violated = 0;
    let mut reported = 0;
    let mut worst = Vec::new();
    for seed in 0..20u64 {
        let domain = &domains[(seed % 2) as usize];
        let h = make_admissible_field(&domain.spec, 100 + seed, 0.05, 2)?;
        let cert = rigidity_certificate(domain, &h, &cfg)?;
        never_unsound &= cert.verdict != Verdict::RigidConsistent || cert.margin <= 0.0;
        if cert.verdict == Verdict::HypothesesViolated {
            violated += 1;
        }
        let m = cert.min_scalar_deficit.min(cert.min_mean_deficit);
        if m < 0.0 && !cert.reasons.is_empty() {
            reported += 1;
        }
        worst.push(m);
    }
    let top = worst.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.check(
        violated == 20 && reported == 20,
        format!("random fields: {violated}/20 hypotheses_violated, {reported}/20 report a negative minimum (largest {top:.2e})"),
    );
    v.check(never_unsound, "no rigid_consistent verdict with a positive margin".into());
    Ok(())
}

fn main() {
    type Criterion = fn(&mut Verdicts) -> Res<()>;
    let criteria: [(&str, Criterion); 8] = [
        ("threshold root", c1_threshold),
        ("background identities", c2_background),
        ("oracle equivalence", c3_oracle),
        ("expansion order", c4_slopes),
        ("exact identities", c5_exact),
        ("gauge projection", c6_gauge),
        ("coercivity", c7_coercivity),
        ("certificate soundness", c8_certificate),
    ];
    let mut passed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let mut v = Verdicts::new();
        if let Err(e) = f(&mut v) {
            v.check(false, format!("error: {e}"));
        }
        let secs = t0.elapsed().as_secs_f64();
        println!(
            "{} criterion {}: {name} ({secs:.1} s)",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1
        );
        print!("{}", v.log);
        passed += usize::from(v.pass);
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|s| s == "1");
    if strict && passed != criteria.len() {
        std::process::exit(1);
    }
}
