use std::f64::consts::PI;

use residue_lab::manifold::{hypersurface4_laplacians, nu_weight, ManifoldSpec, ShapeConfig};
use residue_lab::mobius::{MobiusMap, Transform};
use residue_lab::oracles::{spheroid_curvatures, sphere_volume};
use residue_lab::quadrature::GaussLegendre;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn unit_sphere_has_negative_curvatures() {
    for m in 1..=4 {
        let s = ManifoldSpec::sphere(m, 1.0).unwrap();
        let u: Vec<f64> = (0..m).map(|i| 0.4 + 0.3 * i as f64).collect();
        let f = s.curvature_frame(0, &u).unwrap();
        assert!(f.kappa.iter().all(|k| close(*k, -1.0, 1e-12)), "{:?}", f.kappa);
        assert!(close(f.mean_scalar(), -(m as f64), 1e-12));
        assert!(close(f.scalar_curvature, (m * (m - 1)) as f64, 1e-11));
        let l = f.laplacians;
        assert!(l.delta_sc.abs() < 1e-10 && l.delta_h_sq.abs() < 1e-10);
        assert!(l.delta_h.unwrap().abs() < 1e-10);
    }
}

#[test]
fn unit_sphere_graph_coefficients() {
    let s = ManifoldSpec::sphere(4, 1.0).unwrap();
    let f = s.curvature_frame(0, &[1.0, 1.2, 0.8, 2.0]).unwrap();
    for i in 0..4 {
        assert!(close(f.d(i, i, i, i), -0.125, 1e-11));
        for j in i + 1..4 {
            assert!(close(f.d(i, i, j, j), -0.25, 1e-11));
        }
    }
}

#[test]
fn spheroid_equator_curvatures() {
    let s = ManifoldSpec::spheroid(2f64.sqrt()).unwrap();
    let f = s.curvature_frame(0, &[PI / 2.0, 0.9, 1.7, 0.3]).unwrap();
    let want = [-0.5, -1.0, -1.0, -1.0];
    for (k, w) in f.kappa.iter().zip(want) {
        assert!(close(*k, w, 1e-12), "{:?}", f.kappa);
    }
}

#[test]
fn spheroid_curvatures_along_the_profile() {
    let a = 1.7;
    let s = ManifoldSpec::spheroid(a).unwrap();
    for &t in &[0.3, 1.0, 2.2] {
        let f = s.curvature_frame(0, &[t, PI / 2.0, PI / 2.0, 0.0]).unwrap();
        let mut want = spheroid_curvatures(a, t, 4);
        want.sort_by(|x, y| y.total_cmp(x));
        for (k, w) in f.kappa.iter().zip(&want) {
            assert!(close(*k, *w, 1e-11), "θ = {t}: {:?} vs {want:?}", f.kappa);
        }
    }
}

#[test]
fn torus_principal_curvatures() {
    let (big, r) = (2.0, 0.7);
    let s = ManifoldSpec::torus(big, r).unwrap();
    for &v in &[0.0, 1.1, PI, 4.0] {
        let f = s.curvature_frame(0, &[0.6, v]).unwrap();
        let mut want = [-1.0 / r, -v.cos() / (big + r * v.cos())];
        want.sort_by(|x, y| y.total_cmp(x));
        assert!(close(f.kappa[0], want[0], 1e-12) && close(f.kappa[1], want[1], 1e-12), "{:?}", f.kappa);
    }
}

#[test]
fn volumes_from_quadrature() {
    let c = ManifoldSpec::circle(1.0).unwrap();
    assert!((c.sample_quadrature(20).unwrap().iter().map(|n| n.w).sum::<f64>() - 2.0 * PI).abs() < 1e-10);
    let s = ManifoldSpec::sphere(2, 1.0).unwrap();
    assert!((s.sample_quadrature(24).unwrap().iter().map(|n| n.w).sum::<f64>() - 4.0 * PI).abs() < 1e-8);
    assert!((s.sample_reduced(24).unwrap().iter().map(|n| n.w).sum::<f64>() - 4.0 * PI).abs() < 1e-12);
    let a = 1.6;
    let sp = ManifoldSpec::spheroid(a).unwrap();
    let want = sphere_volume(3)
        * GaussLegendre::new(60).integrate(0.0, PI, |t| t.sin().powi(3) * (a * a * t.sin().powi(2) + t.cos().powi(2)).sqrt());
    assert!(close(sp.volume(40).unwrap(), want, 1e-12));
    let t = ManifoldSpec::torus(2.0, 0.5).unwrap();
    assert!(close(t.volume(20).unwrap(), 4.0 * PI * PI * 2.0 * 0.5, 1e-12));
    assert!(close(t.sample_quadrature(20).unwrap().iter().map(|n| n.w).sum::<f64>(), 4.0 * PI * PI, 1e-10));
}

#[test]
fn enclosed_volume_of_shell() {
    let b = ManifoldSpec::shell(vec![1.0, 1.0, 1.5], vec![vec![0.5; 3]]).unwrap();
    let want = 4.0 / 3.0 * PI * (1.5 - 0.125);
    assert!(close(b.enclosed_volume(30).unwrap(), want, 1e-12));
    // the hole's normal points toward the origin
    let nodes = b.sample_reduced(8).unwrap();
    for nd in nodes.iter().filter(|n| n.patch == 1) {
        let xn: f64 = nd.x.iter().zip(nd.normal.as_ref().unwrap()).map(|(a, b)| a * b).sum();
        assert!(xn < 0.0);
    }
}

#[test]
fn normals_have_unit_grassmann_weight_with_themselves() {
    let s = ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.8, 1.1]).unwrap();
    for nd in s.sample_quadrature(4).unwrap().iter().take(20) {
        assert!(close(nu_weight(&nd.tangent, &nd.tangent), 1.0, 1e-12));
        let f = s.curvature_frame(nd.patch, &nd.u).unwrap();
        assert!(close(nu_weight(&f.tangent, &nd.tangent), 1.0, 1e-12));
    }
}

#[test]
fn grassmann_weight_times_graph_area_is_one() {
    let specs = vec![
        ManifoldSpec::ellipsoid(vec![1.0, 1.4, 0.7]).unwrap(),
        ManifoldSpec::clifford_torus(1.0, 1.0).unwrap().transformed(&MobiusMap::inversion(vec![0.3, 0.1, -0.2, 1.4], 1.0)).unwrap(),
    ];
    for s in specs {
        let u0 = [0.9, 1.3];
        let f = s.curvature_frame(0, &u0).unwrap();
        let y = s.curvature_frame(0, &[0.92, 1.285]).unwrap();
        let delta: Vec<f64> = y.point.iter().zip(&f.point).map(|(a, b)| a - b).collect();
        let sv: Vec<f64> = f.tangent.iter().map(|e| e.iter().zip(&delta).map(|(a, b)| a * b).sum()).collect();
        let grads: Vec<Vec<f64>> = (0..2).map(|i| f.graph.iter().map(|g| g.partial(i).eval_at(&sv)).collect()).collect();
        let g = |i: usize, j: usize| grads[i].iter().zip(&grads[j]).map(|(a, b)| a * b).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
        let area = (g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)).sqrt();
        let lam = nu_weight(&f.tangent, &y.tangent);
        assert!(close(lam * area, 1.0, 1e-6), "{}", lam * area);
    }
}

#[test]
fn laplacian_integrals_vanish() {
    const ORDER: usize = 48;
    let t = ManifoldSpec::torus(2.0, 0.8).unwrap();
    let e = ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.7]).unwrap();
    for s in [t, e] {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for nd in s.sample_quadrature(ORDER).unwrap() {
            let l = s.curvature_frame(nd.patch, &nd.u).unwrap().laplacians;
            a += nd.w * l.delta_sc;
            b += nd.w * l.delta_h_sq;
            c += nd.w * l.delta_h.unwrap();
        }
        assert!(a.abs() < 1e-7 && b.abs() < 1e-7 && c.abs() < 1e-7, "{a} {b} {c}");
    }
}

#[test]
fn origin_formulas_match_field_jets() {
    let inv = MobiusMap::inversion(vec![0.4, -0.3, 0.2, 0.1, 1.9], 1.2);
    let cases = vec![
        (ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.7]).unwrap(), vec![0.7, 2.1]),
        (ManifoldSpec::ellipsoid(vec![1.0, 1.3, 0.7, 1.2]).unwrap(), vec![0.7, 2.1, 5.0]),
        (ManifoldSpec::spheroid(1.5).unwrap().transformed(&inv).unwrap(), vec![0.7, 1.1, 2.0, 0.4]),
        (
            ManifoldSpec::clifford_torus(1.0, 0.6).unwrap().transformed(&MobiusMap::inversion(vec![0.3, 0.1, -0.2, 1.4], 1.0)).unwrap(),
            vec![0.9, 1.3],
        ),
    ];
    for (s, u) in cases {
        let f = s.curvature_frame(0, &u).unwrap();
        let a = f.laplacians;
        let b = f.laplacians_from_fields();
        assert!(close(a.delta_sc, b.delta_sc, 1e-9), "ΔSc {} {}", a.delta_sc, b.delta_sc);
        assert!(close(a.delta_h_sq, b.delta_h_sq, 1e-9), "Δ|H|² {} {}", a.delta_h_sq, b.delta_h_sq);
        if let Some(dh) = a.delta_h {
            assert!(close(dh, b.delta_h.unwrap(), 1e-9));
            let g = s.grad_mean_curvature_sq(0, &u).unwrap();
            assert!(close(a.grad_h_sq.unwrap(), g, 1e-9), "{} {g}", a.grad_h_sq.unwrap());
            assert!(close(b.grad_h_sq.unwrap(), g, 1e-9));
        }
    }
}

#[test]
fn four_dimensional_hypersurface_forms() {
    let inv = MobiusMap::inversion(vec![0.4, -0.3, 0.2, 0.1, 1.9], 1.2);
    let s = ManifoldSpec::spheroid(1.5).unwrap().transformed(&inv).unwrap();
    for u in [[0.7, 1.1, 2.0, 0.4], [2.0, 0.5, 1.4, 3.0]] {
        let f = s.curvature_frame(0, &u).unwrap();
        let general = f.laplacians;
        let h4 = hypersurface4_laplacians(&f).unwrap();
        assert!(close(h4.delta_h.unwrap(), general.delta_h.unwrap(), 1e-9));
        assert!(close(h4.grad_h_sq.unwrap(), general.grad_h_sq.unwrap(), 1e-9));
        assert!(close(h4.delta_h_sq, general.delta_h_sq, 1e-9));
        assert!(close(h4.delta_sc, general.delta_sc, 1e-9), "{} {}", h4.delta_sc, general.delta_sc);
    }
}

#[test]
fn rotated_sphere_frames_agree() {
    let (c, s) = (0.6f64, 0.8f64);
    let rot = MobiusMap {
        steps: vec![Transform::Similarity {
            scale: 1.0,
            rotation: Some(vec![vec![c, -s, 0.0], vec![s, c, 0.0], vec![0.0, 0.0, 1.0]]),
            translation: Some(vec![0.1, 0.2, 0.3]),
        }],
    };
    let a = ManifoldSpec::ellipsoid(vec![1.0, 1.2, 0.9]).unwrap();
    let b = a.transformed(&rot).unwrap();
    let fa = a.curvature_frame(0, &[1.1, 2.3]).unwrap();
    let fb = b.curvature_frame(0, &[1.1, 2.3]).unwrap();
    for (x, y) in fa.kappa.iter().zip(&fb.kappa) {
        assert!(close(*x, *y, 1e-12));
    }
    assert!(close(fa.laplacians.delta_sc, fb.laplacians.delta_sc, 1e-10));
    assert!(close(fa.laplacians.delta_h.unwrap(), fb.laplacians.delta_h.unwrap(), 1e-10));
    // umbilic points: every tangent frame is principal
    let sph = ManifoldSpec::sphere(3, 2.0).unwrap();
    let f1 = sph.curvature_frame(0, &[0.5, 0.5, 0.5]).unwrap();
    let f2 = sph.transformed(&rot_about_all()).unwrap().curvature_frame(0, &[0.5, 0.5, 0.5]).unwrap();
    for i in 0..3 {
        assert!(close(f1.d(i, i, i, i), f2.d(i, i, i, i), 1e-12));
    }
}

fn rot_about_all() -> MobiusMap {
    let (c, s) = (0.28f64, 0.96f64);
    MobiusMap {
        steps: vec![Transform::Similarity {
            scale: 1.0,
            rotation: Some(vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, c, -s, 0.0],
                vec![0.0, s, c, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ]),
            translation: None,
        }],
    }
}

#[test]
fn inward_orientation_flips_curvatures() {
    let out = ShapeConfig::from_json(r#"{"kind":"sphere","params":{"m":2,"r":1}}"#).unwrap().build().unwrap();
    let inw = ShapeConfig::from_json(r#"{"kind":"sphere","params":{"m":2,"r":1},"orientation":"inward"}"#)
        .unwrap()
        .build()
        .unwrap();
    let a = out.curvature_frame(0, &[1.0, 1.0]).unwrap();
    let b = inw.curvature_frame(0, &[1.0, 1.0]).unwrap();
    assert!(close(a.kappa[0], -1.0, 1e-12) && close(b.kappa[0], 1.0, 1e-12));
    assert!(close(a.scalar_curvature, b.scalar_curvature, 1e-12));
}

#[test]
fn orientation_survives_inversion_about_an_interior_point() {
    // inversion about a point inside turns the sphere inside out; orientation must recompute
    let s = ManifoldSpec::sphere(2, 1.0).unwrap().transformed(&MobiusMap::inversion(vec![0.0, 0.0, 0.3], 1.0)).unwrap();
    assert!(s.enclosed_volume(20).unwrap() > 0.0);
}

#[test]
fn custom_patch_agrees_with_builtin() {
    let axes = [1.0, 1.3, 0.7];
    let builtin = ManifoldSpec::ellipsoid(axes.to_vec()).unwrap();
    let custom = ManifoldSpec::custom(2, 3, vec![0.0, 0.0], vec![PI, 2.0 * PI], move |u| {
        vec![axes[0] * u[0].sin() * u[1].cos(), axes[1] * u[0].sin() * u[1].sin(), axes[2] * u[0].cos()]
    })
    .unwrap();
    let u = [0.8, 2.0];
    let a = builtin.curvature_frame(0, &u).unwrap();
    let b = custom.curvature_frame(0, &u).unwrap();
    for (x, y) in a.kappa.iter().zip(&b.kappa) {
        assert!(close(*x, *y, 1e-7), "{x} {y}");
    }
    assert!(close(a.laplacians.delta_sc, b.laplacians.delta_sc, 1e-4));
    assert!(close(builtin.volume(24).unwrap(), custom.volume(24).unwrap(), 1e-12));
}

#[test]
fn config_errors_are_reported() {
    assert!(ShapeConfig::from_json(r#"{"kind":"torus","params":{"R":2}}"#).unwrap().build().is_err());
    assert!(ShapeConfig::from_json(r#"{"kind":"torus","params":{"R":2,"r":1,"q":3}}"#).unwrap().build().is_err());
    assert!(ShapeConfig::from_json(r#"{"kind":"torus","bogus":1}"#).is_err());
    assert!(ManifoldSpec::torus(1.0, 2.0).is_err());
    let t = ShapeConfig::from_json(
        r#"{"kind":"torus","params":{"R":2,"r":1},"transforms":[{"type":"inversion","center":[0,0,3],"radius":2}]}"#,
    )
    .unwrap()
    .build()
    .unwrap();
    assert!(!t.is_symmetric() || t.map.commutes_with_rotations_about(&[2]));
}

#[test]
fn reparametrized_torus_volume() {
    let t = ManifoldSpec::torus(2.0, 1.0).unwrap();
    let shifted = t.with_domains(&[(vec![1.0, 0.5], vec![1.0 + 2.0 * PI, 0.5 + 2.0 * PI])]).unwrap();
    assert!(close(t.volume(20).unwrap(), shifted.sample_quadrature(20).unwrap().iter().map(|n| n.w).sum(), 1e-10));
}
