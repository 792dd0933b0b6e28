use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use residue_lab::continuation::*;
use residue_lab::manifold::ManifoldSpec;
use residue_lab::oracles::{
    ball_volume, beta_ball_leading, beta_ball_relative_leading, sphere_moment, sphere_volume, spheroid_r8,
    spheroid_r8_nu_corrected,
};
use residue_lab::quadrature::sphere_rule;
use residue_lab::residues::*;

const ORDER: usize = DEFAULT_ORDER;

fn c(z: f64) -> Complex64 {
    Complex64::new(z, 0.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn residue_opts() -> ProfileOptions {
    ProfileOptions { far_field: false, ..Default::default() }
}

fn ball_residue(n: usize, z0: f64) -> f64 {
    beta_ball_leading(n, c(z0)).unwrap().residue(c(z0)).unwrap().re
}

#[test]
fn first_two_residues_of_circle_and_sphere() {
    let circle = ManifoldSpec::circle(1.0).unwrap();
    assert!(rel(residue_first(&circle, ORDER).unwrap().value, 4.0 * PI) < 1e-13);
    assert!(rel(residue_second(&circle, ORDER).unwrap().value, PI / 2.0) < 1e-13);
    let s2 = ManifoldSpec::sphere(2, 1.0).unwrap();
    assert!(rel(residue_first(&s2, ORDER).unwrap().value, 8.0 * PI * PI) < 1e-13);
    assert!(residue_second(&s2, ORDER).unwrap().value.abs() < 1e-12);
    assert!(residue_second_surface(&s2, ORDER).unwrap().value.abs() < 1e-12);
    let big = ManifoldSpec::sphere(2, 1.7).unwrap();
    assert!(rel(residue_first(&big, ORDER).unwrap().value, 1.7f64.powi(2) * 8.0 * PI * PI) < 1e-13);
}

#[test]
fn surface_form_of_the_second_residue() {
    let torus = ManifoldSpec::torus(2.0, 1.0).unwrap();
    let a = residue_second(&torus, ORDER).unwrap();
    let b = residue_second_surface(&torus, ORDER).unwrap();
    assert!(rel(a.value, b.value) < 1e-12);
    assert!(a.error < 1e-10);
    let e = ManifoldSpec::ellipsoid(vec![1.0, 1.2, 0.7]).unwrap();
    assert!(rel(residue_second(&e, ORDER).unwrap().value, residue_second_surface(&e, ORDER).unwrap().value) < 1e-10);
}

#[test]
fn local_second_residues_give_scalar_and_mean_curvature() {
    let s2 = ManifoldSpec::sphere(2, 1.0).unwrap();
    let f = s2.curvature_frame(0, &[0.9, 2.1]).unwrap();
    let (nu, one) = local_residues_second(&f);
    assert!((nu + PI).abs() < 1e-12);
    assert!(one.abs() < 1e-12);
    assert!((scalar_from_residues(&f) - 2.0).abs() < 1e-12);
    assert!((meansq_from_residues(&f) - 4.0).abs() < 1e-12);
    let plane = ManifoldSpec::custom(2, 3, vec![-1.0, -1.0], vec![1.0, 1.0], |u| vec![u[0], u[1], 0.0]).unwrap();
    let f = plane.curvature_frame(0, &[0.1, 0.2]).unwrap();
    assert!(scalar_from_residues(&f).abs() < 1e-10);
    assert!(meansq_from_residues(&f).abs() < 1e-10);
    // general shapes and codimension 2
    let shapes = [
        (ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.6]).unwrap(), vec![0.7, 2.0]),
        (ManifoldSpec::torus(2.0, 0.7).unwrap(), vec![0.4, 1.9]),
        (ManifoldSpec::clifford_torus(1.0, 0.6).unwrap(), vec![0.3, 1.2]),
        (ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.6, 0.9]).unwrap(), vec![0.7, 2.0, 4.0]),
    ];
    for (spec, u) in &shapes {
        let f = spec.curvature_frame(0, u).unwrap();
        assert!((scalar_from_residues(&f) - f.scalar_curvature).abs() < 1e-9, "{:?}", spec.shape);
        assert!((meansq_from_residues(&f) - f.mean_sq).abs() < 1e-9, "{:?}", spec.shape);
    }
}

#[test]
fn graph_method_matches_the_local_formulas() {
    let shapes = [
        (ManifoldSpec::sphere(2, 1.0).unwrap(), vec![1.0, 0.3]),
        (ManifoldSpec::torus(2.0, 1.0).unwrap(), vec![0.3, 0.7]),
        (ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.6]).unwrap(), vec![0.7, 2.0]),
        (ManifoldSpec::clifford_torus(1.0, 0.6).unwrap(), vec![0.3, 1.2]),
        (ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.6, 0.9]).unwrap(), vec![0.7, 2.0, 4.0]),
    ];
    for (spec, u) in &shapes {
        let f = spec.curvature_frame(0, u).unwrap();
        let (nu, one) = local_residues_second(&f);
        let g1 = graph_local_coefficients(&f, GraphWeight::One);
        let gn = graph_local_coefficients(&f, GraphWeight::Nu);
        let o = sphere_volume(spec.m - 1);
        assert!(rel(g1[0], o) < 1e-13 && rel(gn[0], o) < 1e-13);
        assert!(g1[1].abs() < 1e-12 && g1[3].abs() < 1e-12, "odd coefficients vanish");
        assert!((g1[2] - one).abs() < 1e-12, "{:?}: {} vs {one}", spec.shape, g1[2]);
        assert!((gn[2] - nu).abs() < 1e-12, "{:?}: {} vs {nu}", spec.shape, gn[2]);
    }
    // four-dimensional local residues at −8
    let four = [
        (ManifoldSpec::spheroid(2f64.sqrt()).unwrap(), vec![0.4, 0.9, 1.3, 0.2]),
        (ManifoldSpec::ellipsoid(vec![1.0, 1.2, 0.8, 1.5, 0.9]).unwrap(), vec![0.7, 1.1, 2.0, 4.0]),
        (ManifoldSpec::sphere(4, 1.0).unwrap(), vec![0.4, 0.9, 1.3, 0.2]),
    ];
    for (spec, u) in &four {
        let f = spec.curvature_frame(0, u).unwrap();
        let l = local_m8(&f).unwrap();
        let g1 = graph_local_residue(&f, GraphWeight::One, 4).unwrap();
        let gn = graph_local_residue(&f, GraphWeight::Nu, 4).unwrap();
        assert!((l.r - g1).abs() < 1e-11 * (1.0 + g1.abs()), "{:?}: {} vs {g1}", spec.shape, l.r);
        assert!((l.r_nu - gn).abs() < 1e-11 * (1.0 + gn.abs()), "{:?}: {} vs {gn}", spec.shape, l.r_nu);
    }
}

#[test]
fn modified_integrands_do_not_depend_on_quartic_coefficients() {
    let spec = ManifoldSpec::ellipsoid(vec![1.0, 1.2, 0.8, 1.5, 0.9]).unwrap();
    let f = spec.curvature_frame(0, &[0.7, 1.1, 2.0, 4.0]).unwrap();
    let a = local_m8_modified(&f).unwrap();
    let mut g = f.clone();
    // perturb one quartic coefficient of the graph
    let idx = g.graph[0].layout.index_of(&[2, 0, 2, 0]).unwrap();
    g.graph[0].coeffs[idx] += 0.37;
    assert_eq!(local_m8_modified(&g).unwrap(), a);
    assert_ne!(local_m8(&g).unwrap(), local_m8(&f).unwrap());
    assert!(matches!(local_m8(&ManifoldSpec::sphere(2, 1.0).unwrap().curvature_frame(0, &[1.0, 1.0]).unwrap()), Err(ResidueError::Dimension { .. })));
}

#[test]
fn unit_ball_body_residues() {
    let b3 = ManifoldSpec::ball(3, 1.0).unwrap();
    let r = body_residues(&b3, ORDER).unwrap();
    let want = [(-3.0, 16.0 * PI * PI / 3.0), (-4.0, -4.0 * PI * PI), (-6.0, PI * PI / 3.0)];
    for (z0, w) in want {
        assert!(rel(r.get(z0, "curvature").unwrap().value, w) < 1e-6, "z = {z0}");
    }
    assert!(rel(r.get(-6.0, "curvature-scalar").unwrap().value, PI * PI / 3.0) < 1e-10);
    assert!(r.disagreements(1e-8).is_empty());
    for (z0, _) in want {
        assert!(rel(r.get(z0, "curvature").unwrap().value, ball_residue(3, z0)) < 1e-6);
    }
    let e = ManifoldSpec::ellipsoid_body(vec![1.0, 1.3, 0.8]).unwrap();
    let r = body_residues(&e, ORDER).unwrap();
    assert!(r.disagreements(1e-8).is_empty(), "{}", r.to_text());
    assert!(matches!(body_residues(&ManifoldSpec::sphere(2, 1.0).unwrap(), ORDER), Err(ResidueError::NotBody)));
}

#[test]
fn unit_ball_relative_residues() {
    let b3 = ManifoldSpec::ball(3, 1.0).unwrap();
    let r = relative_residues(&b3, ORDER).unwrap();
    assert!(rel(r.get(-3.0, "curvature").unwrap().value, 8.0 * PI * PI) < 1e-10);
    assert!(rel(r.get(-4.0, "curvature").unwrap().value, -4.0 * PI * PI) < 1e-10);
    for z0 in [-3.0, -4.0, -6.0] {
        let want = beta_ball_relative_leading(3, c(z0)).unwrap().residue(c(z0)).unwrap().re;
        assert!((r.get(z0, "curvature").unwrap().value - want).abs() < 1e-9 * (1.0 + want.abs()), "z = {z0}");
    }
}

#[test]
fn body_residues_match_the_profile_path() {
    let e = ManifoldSpec::ellipsoid_body(vec![1.0, 1.3, 0.8]).unwrap();
    let r = body_residues(&e, ORDER).unwrap();
    let prof = body_profile(&e, &residue_opts()).unwrap();
    for z0 in [-4.0, -6.0] {
        let a = body_laurent(&prof, 3, z0).residue();
        let b = r.get(z0, "curvature").unwrap().value;
        assert!(rel(a, b) < 1e-2, "z = {z0}: {a} vs {b}");
    }
}

#[test]
fn nu_weight_and_body_duality() {
    // R_{∂Ω,ν}(z) = −z(z+n−2)R_Ω(z−2)
    for axes in [vec![1.0, 1.0, 1.0], vec![1.0, 1.3, 0.8]] {
        let body = ManifoldSpec::ellipsoid_body(axes.clone()).unwrap();
        let bd = body.boundary().unwrap();
        let n = 3.0;
        let z = -n - 1.0;
        let lhs = nu_residue_second(&bd, ORDER).unwrap().value;
        let rhs = -z * (z + n - 2.0) * body_residues(&body, ORDER).unwrap().get(z - 2.0, "curvature").unwrap().value;
        assert!(rel(lhs, rhs) < 1e-10, "{axes:?}: {lhs} vs {rhs}");
        let z = -n - 3.0;
        let lhs = graph_residue(&bd, GraphWeight::Nu, 4, ORDER).unwrap().value;
        let rhs = if axes[1] == 1.0 {
            -z * (z + n - 2.0) * ball_residue(3, z - 2.0)
        } else {
            // profile path of the body at −n−5
            let prof = body_profile(&body, &residue_opts()).unwrap();
            -z * (z + n - 2.0) * body_laurent(&prof, 3, z - 2.0).residue()
        };
        assert!((lhs - rhs).abs() < 1e-2 * (1.0 + rhs.abs()), "{axes:?}: {lhs} vs {rhs}");
    }
    // balls in the plane
    let b2 = ManifoldSpec::ball(2, 1.0).unwrap().boundary().unwrap();
    let z = -3.0;
    assert!(rel(nu_residue_second(&b2, ORDER).unwrap().value, -z * (z) * ball_residue(2, z - 2.0)) < 1e-10);
}

#[test]
fn willmore_relation() {
    for spec in [ManifoldSpec::sphere(2, 1.0).unwrap(), ManifoldSpec::torus(2.0, 1.0).unwrap()] {
        let (w, r) = willmore_pair(&spec, ORDER).unwrap();
        assert!(rel(r.value, w.value) < 1e-6, "{:?}: {} vs {}", spec.shape, w.value, r.value);
    }
    let (w, _) = willmore_pair(&ManifoldSpec::sphere(2, 1.0).unwrap(), ORDER).unwrap();
    assert!(rel(w.value, 4.0 * PI) < 1e-12);
}

#[test]
fn closed_residues_agree_with_the_profile_method() {
    for spec in [
        ManifoldSpec::circle(1.0).unwrap(),
        ManifoldSpec::sphere(2, 1.0).unwrap(),
        ManifoldSpec::torus(2.0, 1.0).unwrap(),
    ] {
        let mut report = closed_residues(&spec, ORDER).unwrap();
        let m = spec.m as f64;
        for (weight, kind) in [("one", WeightKind::One), ("nu", WeightKind::Nu)] {
            let p = distance_profile(&spec, &kind, &residue_opts()).unwrap();
            for z0 in [-m, -m - 2.0] {
                report.push_weighted(z0, weight, residue_from_profile(&p, z0).unwrap(), "profile");
            }
        }
        let bad = report.disagreements(1e-2);
        assert!(bad.is_empty(), "{:?}: {bad:?}", spec.shape);
        assert_eq!(report.entries.iter().filter(|e| e.method == "profile").count(), 4);
    }
}

#[test]
fn residue_report_text_round_trip() {
    let r = closed_residues(&ManifoldSpec::torus(2.0, 1.0).unwrap(), ORDER).unwrap();
    let text = r.to_text();
    assert!(text.starts_with("shape=torus\n"));
    let back = ResidueReport::from_text(&text).unwrap();
    assert_eq!(back.entries.len(), r.entries.len());
    for (a, b) in back.entries.iter().zip(&r.entries) {
        assert_eq!(a.pole, b.pole);
        assert_eq!(a.method, b.method);
        assert_eq!(a.weight, b.weight);
        assert!(rel(a.value, b.value) < 1e-15 || a.value == b.value);
    }
    assert!(ResidueReport::from_text("bogus=1").is_err());
}

#[test]
fn four_sphere_residues_at_minus_eight() {
    let s4 = ManifoldSpec::sphere(4, 1.0).unwrap();
    let r = residue_m8(&s4, ORDER).unwrap();
    assert!(r.raw.value.abs() < 1e-6 && r.modified.value.abs() < 1e-6);
    let nu = nu_residue_m8(&s4, ORDER).unwrap();
    let want = 2.0 * PI.powi(4) / 3.0;
    // −z(z+n−2)·Res B_{B⁵}(z−2) at z = −8
    let z = -8.0;
    let dual = -z * (z + 3.0) * ball_residue(5, z - 2.0);
    assert!(rel(dual, want) < 1e-12);
    assert!((nu.raw.value - dual).abs() < 1e-8 * want);
    assert!((nu.modified.value - dual).abs() < 1e-8 * want);
    let graph = graph_residue(&s4, GraphWeight::Nu, 4, ORDER).unwrap();
    assert!((graph.value - dual).abs() < 1e-8 * want);
    assert!(matches!(residue_m8(&ManifoldSpec::sphere(2, 1.0).unwrap(), ORDER), Err(ResidueError::Dimension { .. })));
}

#[test]
fn spheroid_residues_at_minus_eight() {
    for a in [2f64.sqrt(), 3f64.sqrt(), 2.0, 0.5] {
        let sp = ManifoldSpec::spheroid(a).unwrap();
        let r = residue_m8(&sp, 48).unwrap();
        let nu = nu_residue_m8(&sp, 48).unwrap();
        assert!(r.discrepancy() < 1e-6 * (1.0 + r.raw.value.abs()), "a = {a}: {r:?}");
        assert!(nu.discrepancy() < 1e-6 * nu.raw.value.abs(), "a = {a}: {nu:?}");
        let want = spheroid_r8(a).unwrap();
        assert!((r.raw.value - want).abs() < 1e-6 * want.abs(), "a = {a}: {} vs {want}", r.raw.value);
        let want = spheroid_r8_nu_corrected(a).unwrap();
        assert!(rel(nu.raw.value, want) < 1e-6, "a = {a}: {} vs {want}", nu.raw.value);
    }
}

#[test]
fn relative_difference_field_matches_profiles() {
    let cases: [(ManifoldSpec, Vec<Vec<f64>>); 2] = [
        (ManifoldSpec::ellipsoid_body(vec![1.0, 1.6]).unwrap(), vec![vec![0.3], vec![1.2], vec![2.9]]),
        (ManifoldSpec::ellipsoid_body(vec![1.0, 1.3, 0.8]).unwrap(), vec![vec![0.7, 1.0], vec![1.9, 4.0]]),
    ];
    for (body, points) in &cases {
        let n = body.n;
        let z0 = -(n as f64) - 3.0;
        let bd = body.boundary().unwrap();
        for u in points {
            let a = local_profile(&bd, 0, u, &WeightKind::Relative, &residue_opts()).unwrap();
            let b = local_profile(&bd, 0, u, &WeightKind::RelativeFlipped, &residue_opts()).unwrap();
            let diff = relative_laurent(&a, n, z0).residue() - relative_laurent(&b, n, z0).residue();
            let want = relative_difference_field(&bd.curvature_frame(0, u).unwrap()).unwrap();
            assert!((diff - want).abs() < 1e-4 * (1.0 + want.abs()), "n = {n}, u = {u:?}: {diff} vs {want}");
            assert!(want.abs() > 1e-3);
        }
    }
    let ball = ManifoldSpec::ball(3, 1.0).unwrap().boundary().unwrap();
    let f = ball.curvature_frame(0, &[0.8, 1.7]).unwrap();
    assert!(relative_difference_field(&f).unwrap().abs() < 1e-10);
}

#[test]
fn local_relative_value_at_minus_n_varies_on_an_ellipse() {
    let e = ManifoldSpec::ellipsoid_body(vec![1.0, 1.6]).unwrap();
    let opts = ProfileOptions::default();
    let vals: Vec<f64> = [0.0, 0.6, PI / 2.0].iter().map(|&u| local_relative_value(&e, 0, &[u], &opts).unwrap()).collect();
    let spread = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread > 1e-2, "{vals:?}");
    // constant on a circle
    let b = ManifoldSpec::ball(2, 1.0).unwrap();
    let a = local_relative_value(&b, 0, &[0.2], &opts).unwrap();
    let c2 = local_relative_value(&b, 0, &[2.0], &opts).unwrap();
    assert!((a - c2).abs() < 1e-8 && (a - PI).abs() < 1e-6, "{a} {c2}");
}

#[test]
fn sphere_moments() {
    for d in [3usize, 4, 5] {
        let o = sphere_volume(d - 1);
        let df = d as f64;
        let m4 = 3.0 * o / (df * (df + 2.0));
        let m22 = o / (df * (df + 2.0));
        assert!(rel(sphere_moment(d, &[4]), m4) < 1e-13);
        assert!(rel(sphere_moment(d, &[2, 2]), m22) < 1e-13);
        let six = df * (df + 2.0) * (df + 4.0);
        assert!(rel(sphere_moment(d, &[6]), 15.0 * o / six) < 1e-13);
        assert!(rel(sphere_moment(d, &[4, 2]), 3.0 * o / six) < 1e-13);
        assert!(rel(sphere_moment(d, &[2, 2, 2]), o / six) < 1e-13);
        // the direction rule of the graph method integrates them exactly
        let rule = sphere_rule(d, 8);
        let q = |e: &[usize]| -> f64 {
            rule.iter().map(|(w, wt)| wt * e.iter().enumerate().map(|(i, &p)| w[i].powi(p as i32)).product::<f64>()).sum()
        };
        for e in [vec![4], vec![2, 2], vec![6], vec![4, 2], vec![2, 2, 2], vec![4, 4], vec![3, 1], vec![5, 2, 1]] {
            assert!((q(&e) - sphere_moment(d, &e)).abs() < 1e-12, "d = {d}, {e:?}");
        }
    }
    // parity: Monte Carlo means of odd monomials vanish within sampling error
    let mut rng = StdRng::seed_from_u64(7);
    let samples = 200_000;
    let (mut odd, mut even, mut accepted) = (0.0, 0.0, 0.0);
    for _ in 0..samples {
        let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        if !(1e-6..=1.0).contains(&r2) {
            continue;
        }
        let w: Vec<f64> = v.iter().map(|x| x / r2.sqrt()).collect();
        odd += w[0].powi(3) * w[1] * w[2] * w[2];
        even += w[0].powi(2) * w[1].powi(2);
        accepted += 1.0;
    }
    let o3 = sphere_volume(3);
    assert!(rel(accepted, samples as f64 * ball_volume(4) / 16.0) < 2e-2);
    assert!((odd / accepted).abs() < 5e-3);
    assert!(rel(even / accepted * o3, sphere_moment(4, &[2, 2])) < 2e-2);
}

#[test]
fn lipschitz_killing_curvatures_of_the_unit_ball() {
    let b3 = ManifoldSpec::ball(3, 1.0).unwrap();
    let c = lk_curvatures(&b3, ORDER).unwrap();
    let want = [1.0, 4.0, 2.0 * PI, 4.0 * PI / 3.0];
    for (k, w) in want.iter().enumerate() {
        assert!(rel(c[k].value, *w) < 1e-10, "C_{k} = {}", c[k].value);
    }
    let r = lk_from_residues(&b3, ORDER).unwrap();
    for (j, e) in r.iter().enumerate() {
        assert!(rel(e.value, want[3 - j]) < 1e-10, "C_{} = {}", 3 - j, e.value);
    }
    let vals: Vec<f64> = c.iter().map(|e| e.value).collect();
    for r in [0.05f64, 0.1] {
        let want = 4.0 * PI / 3.0 * (1.0 + r).powi(3);
        assert!(rel(steiner_volume(&vals, r), want) < 1e-10);
    }
}

#[test]
fn lipschitz_killing_curvatures_of_an_ellipsoid() {
    let e = ManifoldSpec::ellipsoid_body(vec![1.0, 1.3, 0.8]).unwrap();
    let c = lk_curvatures(&e, 32).unwrap();
    let r = lk_from_residues(&e, 32).unwrap();
    for j in 0..4 {
        assert!(rel(r[j].value, c[3 - j].value) < 1e-5, "C_{}: {} vs {}", 3 - j, r[j].value, c[3 - j].value);
    }
    assert!(rel(c[0].value, 1.0) < 1e-8, "Euler characteristic");
    let vals: Vec<f64> = c.iter().map(|e| e.value).collect();
    for r in [0.05f64, 0.1] {
        let par = parallel_body(&e, r).unwrap();
        let want = par.enclosed_volume(48).unwrap();
        assert!(rel(steiner_volume(&vals, r), want) < 1e-6, "r = {r}");
    }
    // the planar case: C₀ = 1, C₁ = perimeter/2, C₂ = area
    let el = ManifoldSpec::ellipsoid_body(vec![1.0, 2.0]).unwrap();
    let c = lk_curvatures(&el, 32).unwrap();
    assert!(rel(c[0].value, 1.0) < 1e-10);
    assert!(rel(c[2].value, 2.0 * PI) < 1e-10);
}

#[test]
fn weyl_tube_coefficient() {
    let s2 = ManifoldSpec::sphere(2, 1.0).unwrap();
    let k = weyl_tube_k2(&s2, ORDER).unwrap();
    assert!(rel(k.direct.value, 4.0 * PI) < 1e-12 && rel(k.from_residues.value, 4.0 * PI) < 1e-12);
    let flat = ManifoldSpec::clifford_torus(1.0, 1.0).unwrap();
    let k = weyl_tube_k2(&flat, ORDER).unwrap();
    assert!(k.direct.value.abs() < 1e-10 && k.from_residues.value.abs() < 1e-10);
    let torus = ManifoldSpec::torus(2.0, 1.0).unwrap();
    let k = weyl_tube_k2(&torus, ORDER).unwrap();
    assert!((k.direct.value - k.from_residues.value).abs() < 1e-6);
    assert!(k.direct.value.abs() < 1e-8, "Gauss–Bonnet on the torus");
    // with the residues taken from distance profiles
    let one = distance_profile(&torus, &WeightKind::One, &residue_opts()).unwrap();
    let nu = distance_profile(&torus, &WeightKind::Nu, &residue_opts()).unwrap();
    let e = ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.7]).unwrap();
    let one_e = distance_profile(&e, &WeightKind::One, &residue_opts()).unwrap();
    let nu_e = distance_profile(&e, &WeightKind::Nu, &residue_opts()).unwrap();
    let via = |a: &DistanceProfile, b: &DistanceProfile| {
        -(2.0 / (2.0 * PI)) * (residue_from_profile(b, -4.0).unwrap().value + 3.0 * residue_from_profile(a, -4.0).unwrap().value)
    };
    assert!(via(&one, &nu).abs() < 1e-3);
    let want = weyl_tube_k2(&e, 48).unwrap().direct.value;
    assert!(rel(want, 4.0 * PI) < 1e-10);
    assert!(rel(via(&one_e, &nu_e), want) < 1e-3);
}

#[test]
fn intrinsic_residues_and_heat_coefficients() {
    let s3 = ManifoldSpec::sphere(3, 1.0).unwrap();
    let samples = intrinsic_samples(&s3, ORDER).unwrap();
    let r = intrinsic_residues(3, &samples);
    assert!(rel(r[0], 8.0 * PI.powi(3)) < 1e-12);
    assert!(rel(r[1], -8.0 * PI.powi(3) / 3.0) < 1e-12);
    // |Rm|² = 2m(m−1), |Ric|² = m(m−1)², Sc = m(m−1)
    let want = 4.0 * PI / (360.0 * 15.0) * (-3.0 * 12.0 + 8.0 * 12.0 + 5.0 * 36.0) * 2.0 * PI * PI;
    assert!(rel(r[2], want) < 1e-12);
    let s2 = ManifoldSpec::sphere(2, 1.0).unwrap();
    let h = heat_coefficients(&intrinsic_samples(&s2, ORDER).unwrap());
    assert!(rel(h[0], 4.0 * PI) < 1e-12);
    assert!(rel(h[1], 4.0 * PI / 3.0) < 1e-12);
    assert!(rel(h[2], 4.0 * PI / 15.0) < 1e-12);
    let flat = intrinsic_samples(&ManifoldSpec::clifford_torus(1.0, 0.5).unwrap(), ORDER).unwrap();
    let r = intrinsic_residues(2, &flat);
    let h = heat_coefficients(&flat);
    assert!(r[1].abs() < 1e-12 && r[2].abs() < 1e-12 && h[1].abs() < 1e-12 && h[2].abs() < 1e-12);
    assert!(!proportional(&INTRINSIC_RESIDUE_WEIGHTS, &HEAT_WEIGHTS, 1e-6));
    assert!(proportional(&[1.0, 2.0, 3.0], &[-2.0, -4.0, -6.0], 1e-12));
}

#[test]
fn intrinsic_second_residue_is_the_scalar_curvature_integral() {
    let e = ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.7]).unwrap();
    let samples = intrinsic_samples(&e, 48).unwrap();
    let r = intrinsic_residues(2, &samples);
    let k = weyl_tube_k2(&e, 48).unwrap();
    assert!((r[1] - (-(2.0 * PI) / 6.0 / 2.0) * 2.0 * k.direct.value).abs() < 1e-9);
}

#[test]
fn extrinsic_ball_sixth_coefficient() {
    let s2 = ManifoldSpec::sphere(2, 1.0).unwrap();
    let f = s2.curvature_frame(0, &[1.1, 0.4]).unwrap();
    let t6 = extrinsic_ball_t6(&f).unwrap();
    assert!((t6 - graph_local_residue(&f, GraphWeight::One, 4).unwrap() / 6.0).abs() < 1e-6);
    let plane = ManifoldSpec::custom(2, 3, vec![-1.0, -1.0], vec![1.0, 1.0], |u| vec![u[0], u[1], 0.0]).unwrap();
    assert!(extrinsic_ball_t6(&plane.curvature_frame(0, &[0.0, 0.0]).unwrap()).unwrap().abs() < 1e-10);
    let torus = ManifoldSpec::torus(2.0, 1.0).unwrap();
    for u in [[0.3, 0.7], [1.1, 2.0], [2.5, 4.4]] {
        let f = torus.curvature_frame(0, &u).unwrap();
        let t6 = extrinsic_ball_t6(&f).unwrap();
        let g = graph_local_residue(&f, GraphWeight::One, 4).unwrap() / 6.0;
        assert!((t6 - g).abs() < 1e-5 * (1.0 + g.abs()), "u = {u:?}: {t6} vs {g}");
    }
    let e = ManifoldSpec::ellipsoid(vec![1.0, 1.4, 0.7]).unwrap();
    let f = e.curvature_frame(0, &[0.9, 2.2]).unwrap();
    assert!((extrinsic_ball_t6(&f).unwrap() - graph_local_residue(&f, GraphWeight::One, 4).unwrap() / 6.0).abs() < 1e-9);
    let s3 = ManifoldSpec::sphere(3, 1.0).unwrap();
    assert!(matches!(extrinsic_ball_t6(&s3.curvature_frame(0, &[1.0, 1.0, 1.0]).unwrap()), Err(ResidueError::Dimension { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn residue_homogeneity(c in 0.3f64..3.0) {
        // R_{cM}(z₀) = c^{z₀+2m}R_M(z₀)
        let e = ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.7]).unwrap();
        let ec = ManifoldSpec::ellipsoid(vec![c, 1.3 * c, 0.7 * c]).unwrap();
        let a = closed_residues(&e, 16).unwrap();
        let b = closed_residues(&ec, 16).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            let k = x.pole + 4.0;
            prop_assert!((y.value - c.powf(k) * x.value).abs() < 1e-10 * (1.0 + y.value.abs()));
        }
    }

    #[test]
    fn elementary_curvature_identities(k1 in -3.0f64..3.0, k2 in -3.0f64..3.0) {
        // Sc = 2κ₁κ₂ for a surface: scalar_from_residues on a frame built from an ellipsoid point
        let a = 1.0 + k1.abs() * 0.2;
        let b = 1.0 + k2.abs() * 0.2;
        let e = ManifoldSpec::ellipsoid(vec![a, b, 0.9]).unwrap();
        let f = e.curvature_frame(0, &[1.0 + 0.1 * k1, 2.0 + 0.3 * k2]).unwrap();
        prop_assert!((scalar_from_residues(&f) - 2.0 * f.kappa[0] * f.kappa[1]).abs() < 1e-9);
        prop_assert!((meansq_from_residues(&f) - (f.kappa[0] + f.kappa[1]).powi(2)).abs() < 1e-9);
    }
}
