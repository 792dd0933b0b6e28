use std::f64::consts::PI;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use residue_lab::conformal::*;
use residue_lab::manifold::ManifoldSpec;
use residue_lab::mobius::MobiusMap;
use residue_lab::oracles::{spheroid_gw, spheroid_r8, spheroid_r8_nu_corrected};
use residue_lab::residues::{nu_residue_m8, residue_m8};

const ORDER: usize = 24;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn axes() -> [f64; 3] {
    [2f64.sqrt(), 3f64.sqrt(), 2.0]
}

/// S²(1) × S²(1) in ℝ⁶.
fn product_of_spheres() -> ManifoldSpec {
    ManifoldSpec::custom(4, 6, vec![0.0, 0.0, 0.0, 0.0], vec![PI, 2.0 * PI, PI, 2.0 * PI], |u| {
        let (s1, c1) = u[0].sin_cos();
        let (s2, c2) = u[1].sin_cos();
        let (s3, c3) = u[2].sin_cos();
        let (s4, c4) = u[3].sin_cos();
        vec![s1 * c2, s1 * s2, c1, s3 * c4, s3 * s4, c3]
    })
    .unwrap()
}

#[test]
fn graham_witten_of_the_round_sphere() {
    let s4 = ManifoldSpec::sphere(4, 1.0).unwrap();
    let gw = graham_witten(&s4, ORDER).unwrap();
    assert!(rel(gw.value, PI * PI) < 1e-12);
    assert!(rel(graham_witten_graph(&s4, ORDER).unwrap().value, PI * PI) < 1e-12);
    let b = energy_breakdown(&s4, ORDER).unwrap();
    assert!(b.weyl.abs() < 1e-12 && b.z_energy.abs() < 1e-12);
    assert!(rel(b.r8_nu, 2.0 * PI.powi(4) / 3.0) < 1e-12);
    assert!(b.r8.abs() < 1e-12);
    assert!(b.residual.abs() < 1e-12);
}

#[test]
fn graham_witten_of_spheroids() {
    for a in axes() {
        let sp = ManifoldSpec::spheroid(a).unwrap();
        let closed = spheroid_gw(a).unwrap();
        assert!(rel(graham_witten(&sp, ORDER).unwrap().value, closed) < 1e-6);
        assert!(rel(graham_witten_graph(&sp, ORDER).unwrap().value, closed) < 1e-6);
        assert!(rel(spheroid_energies(a).unwrap().gw, closed) < 1e-10);
    }
    for a in [1.0 - 1e-4, 1.0 + 1e-4] {
        let gw = spheroid_energies(a).unwrap().gw;
        assert!((gw - PI * PI).abs() < 1e-3);
        assert!(rel(gw, spheroid_gw(a).unwrap()) < 1e-10);
    }
}

#[test]
fn intrinsic_gradient_matches_the_graph_coefficients() {
    for spec in [ManifoldSpec::spheroid(2f64.sqrt()).unwrap(), ManifoldSpec::ellipsoid(vec![1.0, 1.2, 0.9, 1.1, 0.8]).unwrap()] {
        for nd in spec.sample_quadrature(4).unwrap().iter().step_by(7) {
            let intrinsic = spec.grad_mean_curvature_sq(nd.patch, &nd.u).unwrap();
            let frame = spec.curvature_frame(nd.patch, &nd.u).unwrap();
            let graph = frame.laplacians.grad_h_sq.unwrap();
            assert!((intrinsic - graph).abs() < 1e-8 * (1.0 + graph.abs()), "{intrinsic} {graph}");
        }
    }
}

#[test]
fn graham_witten_in_codimension_two() {
    let p = product_of_spheres();
    let gw = graham_witten_graph(&p, 16).unwrap();
    assert!(rel(gw.value, 1.5 * PI * PI) < 1e-8, "{gw:?}");
    assert!(graham_witten(&p, 16).is_err());
}

#[test]
fn dimension_errors() {
    let s2 = ManifoldSpec::sphere(2, 1.0).unwrap();
    assert!(matches!(graham_witten(&s2, 8), Err(ConformalError::Dimension(_))));
    assert!(matches!(energy_breakdown(&s2, 8), Err(ConformalError::Dimension(_))));
    assert!(weyl_norm_hyp(&[1.0, 2.0, 3.0]).is_err());
    assert!(q_energy(&[1.0; 5]).is_err());
    assert!(chern_density(&[]).is_err());
}

#[test]
fn pointwise_energies() {
    assert!(weyl_norm_hyp(&[0.7; 4]).unwrap().abs() < 1e-15);
    assert!(q_energy(&[0.7; 4]).unwrap().abs() < 1e-15);
    assert!(q_energy(&[0.4, 0.4, -1.3, -1.3]).unwrap().abs() < 1e-14);
    assert!(q_product(&[0.4, 0.4, -1.3, -1.3]).unwrap().abs() < 1e-14);
    assert!((chern_density(&[1.0, 2.0, 3.0, 4.0]).unwrap() - 144.0).abs() < 1e-12);
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..1000 {
        let k: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w = weyl_norm_hyp(&k).unwrap();
        assert!((w - weyl_norm_product(&k).unwrap()).abs() < 1e-12 * (1.0 + w.abs()));
        let q = q_energy(&k).unwrap();
        assert!((q - q_product(&k).unwrap()).abs() < 1e-11 * (1.0 + q.abs()));
        let p4: f64 = k.iter().map(|x| x.powi(4)).sum();
        let q3 = quartic_sigma([3.0, -4.0, 6.0], &k).unwrap() - 3.0 * w;
        assert!((q - q3).abs() < 1e-11 * (1.0 + p4));
        assert!(q >= -1e-12 * p4);
    }
}

#[test]
fn identity_on_spheroids() {
    for a in [2f64.sqrt(), 3f64.sqrt()] {
        let b = energy_breakdown(&ManifoldSpec::spheroid(a).unwrap(), ORDER).unwrap();
        assert!(b.residual.abs() < 1e-6 * b.gw, "{}", b.to_text());
        assert!((b.euler_characteristic() - 2.0).abs() < 1e-4);
        let r = spheroid_energies(a).unwrap();
        assert!(rel(b.z_energy, r.z_energy) < 1e-8);
        assert!((b.chern - r.chern).abs() < 1e-8 * r.chern);
        assert!(rel(b.r8, spheroid_r8(a).unwrap()) < 1e-6);
        assert!(rel(b.r8_nu, spheroid_r8_nu_corrected(a).unwrap()) < 1e-6);
    }
}

#[test]
fn breakdown_text_lists_every_field() {
    let b = EnergyBreakdown::from_parts(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
    let t = b.to_text();
    for k in ["gw=", "weyl=", "chern=", "z_energy=", "r8=", "r8_nu=", "residual="] {
        assert!(t.lines().any(|l| l.starts_with(k)), "{k}");
    }
    let want = 1.0 - 3.0 / (2.0 * PI * PI) * 16.0 + (24.0 + 20.0) / 2048.0;
    assert!((b.residual - want).abs() < 1e-15);
}

#[test]
fn classification_harness_singles_out_q() {
    for a in [2f64.sqrt(), 3f64.sqrt()] {
        assert!(classification_harness([3.0, -4.0, 6.0], a).unwrap().abs() < 1e-8);
    }
    let d = classification_harness([1.0, 0.0, 0.0], 2f64.sqrt()).unwrap();
    assert!(d.abs() > 1e-3);
    let c = [0.3, -1.1, 2.0];
    let base = classification_harness(c, 1.7).unwrap();
    let scaled = classification_harness([2.5 * c[0], 2.5 * c[1], 2.5 * c[2]], 1.7).unwrap();
    assert!((scaled - 2.5 * base).abs() < 1e-12 * (1.0 + base.abs()));
    assert!(matches!(classification_harness([3.0, -4.0, 6.0], 1.0), Err(ConformalError::Degenerate(_))));
}

#[test]
fn classification_defect_is_one_dimensional() {
    // the invariant combinations form the (3, −4, 6) ray: two spheroids give two
    // independent linear conditions on (c₁, c₂, c₃)
    let mut rows = vec![];
    for a in [2f64.sqrt(), 3f64.sqrt()] {
        let basis = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        rows.push(basis.map(|c| classification_harness(c, a).unwrap()));
    }
    let a = nalgebra::Matrix2x3::from_fn(|i, j| rows[i][j]);
    let sv = a.singular_values();
    assert!(sv.min() > 1e-6 * sv.max());
    // null vector ∝ cross product of the rows
    let n = nalgebra::Vector3::from(rows[0]).cross(&nalgebra::Vector3::from(rows[1]));
    let n = n / n[0] * 3.0;
    assert!((n[1] + 4.0).abs() < 1e-8 && (n[2] - 6.0).abs() < 1e-8, "{n}");
}

#[test]
fn spheroid_relative_integrals() {
    let one = spheroid_relative_check(1.0).unwrap();
    assert!((one.closed_r - 5.0 * PI / 2.0).abs() < 1e-14);
    assert!((one.closed_tilde - one.closed_r).abs() < 1e-14);
    assert!((one.r_a - SpheroidRelative::R1).abs() < 1e-12);
    for a in [0.7, 2f64.sqrt(), 3f64.sqrt(), 2.0] {
        let r = spheroid_relative_check(a).unwrap();
        assert!(rel(r.r_a, r.closed_r) < 1e-12);
        assert!(rel(r.r_tilde, r.closed_tilde) < 1e-12);
        if a > 1.0 {
            assert!(r.gap() < 0.0);
        }
    }
    assert!(spheroid_relative_check(0.0).is_err());
}

#[test]
fn spheroid_energies_are_independent() {
    let rows = spheroid_energy_rows(&axes()).unwrap();
    assert_eq!(independence_rank(&rows, 1e-6), 3);
    let dependent = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.5, 1.0, 1.5]];
    assert_eq!(independence_rank(&dependent, 1e-6), 1);
    assert_eq!(independence_rank(&[], 1e-6), 0);
}

#[test]
fn weyl_and_q_energies_are_non_negative() {
    let s4 = energy_breakdown(&ManifoldSpec::sphere(4, 1.0).unwrap(), 16).unwrap();
    assert!((12.0 * s4.weyl + 5.0 * s4.z_energy).abs() < 1e-10);
    for a in [0.6, 2f64.sqrt(), 2.0] {
        let e = spheroid_energies(a).unwrap();
        assert!(12.0 * e.weyl + 5.0 * e.z_energy > 1e-3);
        assert!(e.weyl > -1e-10);
    }
}

#[test]
fn energies_are_scale_invariant() {
    let sp = ManifoldSpec::spheroid(2f64.sqrt()).unwrap();
    let base = energy_breakdown(&sp, ORDER).unwrap();
    for c in [0.5, 2.0] {
        let scaled = sp.transformed(&MobiusMap::scaling(c)).unwrap();
        let b = energy_breakdown(&scaled, ORDER).unwrap();
        for (x, y) in [(b.gw, base.gw), (b.r8, base.r8), (b.r8_nu, base.r8_nu), (b.z_energy, base.z_energy)] {
            assert!(rel(x, y) < 1e-8, "{x} {y}");
        }
        assert!((b.weyl - base.weyl).abs() < 1e-8);
    }
}

#[test]
fn residue_at_minus_eight_is_mobius_invariant() {
    let sp = ManifoldSpec::spheroid(2f64.sqrt()).unwrap();
    let map = MobiusMap::inversion(vec![0.0, 0.0, 0.0, 0.0, 3.0], 1.0);
    let img = sp.transformed(&map).unwrap();
    let before = residue_m8(&sp, ORDER).unwrap().raw.value;
    let after = residue_m8(&img, ORDER).unwrap();
    assert!((after.raw.value - before).abs() < 1e-4 * before.abs(), "{before} {after:?}");
    assert!(after.discrepancy() < 1e-6 * before.abs());
    let nu_before = nu_residue_m8(&sp, ORDER).unwrap().raw.value;
    let nu_after = nu_residue_m8(&img, ORDER).unwrap().raw.value;
    assert!(rel(nu_after, nu_before) < 1e-4);
    let b = energy_breakdown(&img, ORDER).unwrap();
    assert!(rel(b.gw, spheroid_gw(2f64.sqrt()).unwrap()) < 1e-4);
    assert!(b.residual.abs() < 1e-6 * b.gw);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q_is_non_negative(k in prop::array::uniform4(-5.0f64..5.0)) {
        let scale: f64 = k.iter().map(|x| x.powi(4)).sum();
        prop_assert!(q_energy(&k).unwrap() >= -1e-12 * (1.0 + scale));
    }

    #[test]
    fn densities_are_homogeneous_and_shift_invariant(k in prop::array::uniform4(-2.0f64..2.0), t in 0.2f64..3.0, s in -1.0f64..1.0) {
        let kt: Vec<f64> = k.iter().map(|x| t * x).collect();
        let ks: Vec<f64> = k.iter().map(|x| x + s).collect();
        let w = weyl_norm_hyp(&k).unwrap();
        let q = q_energy(&k).unwrap();
        let tol = 1e-9 * (1.0 + k.iter().map(|x| x.powi(4)).sum::<f64>()) * t.powi(4);
        prop_assert!((weyl_norm_hyp(&kt).unwrap() - t.powi(4) * w).abs() < tol);
        prop_assert!((q_energy(&kt).unwrap() - t.powi(4) * q).abs() < tol);
        // both depend only on differences of principal curvatures
        prop_assert!((weyl_norm_hyp(&ks).unwrap() - w).abs() < 1e-9 * (1.0 + w.abs() + 16.0));
        prop_assert!((q_energy(&ks).unwrap() - q).abs() < 1e-9 * (1.0 + q.abs() + 16.0));
    }
}
