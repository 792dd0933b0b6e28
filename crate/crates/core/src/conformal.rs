//! Conformal curvature energies of 4-dimensional submanifolds and the
//! identity tying them to the residues at z = −8.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::continuation::Estimate;
use crate::manifold::{CurvatureFrame, GraphDerivatives, ManifoldError, ManifoldSpec};
use crate::oracles::{
    inverted_spheroid_curvatures, spheroid3_cubic_closed, spheroid_curvatures, spheroid_gw, spheroid_r8,
    spheroid_r8_nu_corrected, OracleError,
};
use crate::quadrature::composite;
use crate::residues::{integrate_frames, integrate_nodes, nu_residue_m8, residue_m8, ResidueError};

/// Panels and points per panel of the θ rules.
const THETA_PANELS: usize = 16;
const THETA_POINTS: usize = 32;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("expected a 4-dimensional {0}")]
    Dimension(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Residue(#[from] ResidueError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

pub type Result<T> = std::result::Result<T, ConformalError>;

fn four(k: &[f64]) -> Result<[f64; 4]> {
    k.try_into().map_err(|_| ConformalError::Dimension("hypersurface"))
}

fn power_sums(k: &[f64; 4]) -> (f64, f64, f64, f64) {
    // Σκ⁴, Σ_{i≠j}κᵢ³κⱼ, Σ_{i<j}κᵢ²κⱼ², Π κ
    let mut p4 = 0.0;
    let mut p31 = 0.0;
    let mut p22 = 0.0;
    for i in 0..4 {
        p4 += k[i].powi(4);
        for j in 0..4 {
            if i != j {
                p31 += k[i].powi(3) * k[j];
            }
            if i < j {
                p22 += (k[i] * k[j]).powi(2);
            }
        }
    }
    (p4, p31, p22, k.iter().product())
}

/// Σ_{j<k, i∉{j,k}} κᵢ²κⱼκₖ
fn p211(k: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            for l in j + 1..4 {
                if i != j && i != l {
                    s += k[i] * k[i] * k[j] * k[l];
                }
            }
        }
    }
    s
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = vec![];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    let p = [i, j, k, l];
                    if (0..4).all(|x| p.contains(&x)) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// |W|² of a 4-dimensional hypersurface from its principal curvatures.
pub fn weyl_norm_hyp(k: &[f64]) -> Result<f64> {
    let k = four(k)?;
    let (_, _, p22, prod) = power_sums(&k);
    Ok(4.0 / 3.0 * p22 - 4.0 / 3.0 * p211(&k) + 8.0 * prod)
}

/// |W|² as (1/6)Σ over permutations of (κᵢ−κⱼ)(κⱼ−κₖ)(κₖ−κₗ)(κₗ−κᵢ).
pub fn weyl_norm_product(k: &[f64]) -> Result<f64> {
    let k = four(k)?;
    let s: f64 = permutations4()
        .iter()
        .map(|&[i, j, l, m]| (k[i] - k[j]) * (k[j] - k[l]) * (k[l] - k[m]) * (k[m] - k[i]))
        .sum();
    Ok(s / 6.0)
}

/// Pfaffian density X = 6κ₁κ₂κ₃κ₄.
pub fn chern_density(k: &[f64]) -> Result<f64> {
    Ok(6.0 * four(k)?.iter().product::<f64>())
}

/// Pointwise Möbius-invariant principal curvature energy density q.
pub fn q_energy(k: &[f64]) -> Result<f64> {
    let k = four(k)?;
    let (p4, p31, p22, prod) = power_sums(&k);
    Ok(3.0 * p4 - 4.0 * p31 + 2.0 * p22 + 4.0 * p211(&k) - 24.0 * prod)
}

/// q as ½Σ over permutations of (κᵢ−κⱼ)²(κᵢ−κₖ)(κᵢ−κₗ).
pub fn q_product(k: &[f64]) -> Result<f64> {
    let k = four(k)?;
    let s: f64 = permutations4()
        .iter()
        .map(|&[i, j, l, m]| (k[i] - k[j]).powi(2) * (k[i] - k[l]) * (k[i] - k[m]))
        .sum();
    Ok(s / 2.0)
}

/// σ = c₁Σκ⁴ + c₂Σ_{i≠j}κᵢ³κⱼ + c₃Σ_{i<j}κᵢ²κⱼ².
pub fn quartic_sigma(c: [f64; 3], k: &[f64]) -> Result<f64> {
    let (p4, p31, p22, _) = power_sums(&four(k)?);
    Ok(c[0] * p4 + c[1] * p31 + c[2] * p22)
}

fn require_four(spec: &ManifoldSpec) -> Result<()> {
    if spec.m != 4 {
        return Err(ConformalError::Dimension("submanifold"));
    }
    Ok(())
}

fn require_hyper(spec: &ManifoldSpec) -> Result<()> {
    require_four(spec)?;
    if !spec.is_hypersurface() {
        return Err(ConformalError::Dimension("hypersurface"));
    }
    Ok(())
}

/// Graham–Witten energy (1/128)∫(|∇H|² − ‖h‖²H² + (7/16)H⁴) of a
/// 4-dimensional hypersurface, with |∇H|² computed intrinsically.
pub fn graham_witten(spec: &ManifoldSpec, order: usize) -> Result<Estimate> {
    require_hyper(spec)?;
    let e = integrate_nodes(spec, order, |nd, fr| {
        let grad = spec.grad_mean_curvature_sq(nd.patch, &nd.u)?;
        Ok(grad - fr.h_norm_sq * fr.mean_sq + 7.0 / 16.0 * fr.mean_sq * fr.mean_sq)
    })?;
    Ok(Estimate { value: e.value / 128.0, error: e.error / 128.0 })
}

/// Graham–Witten density from the graph derivatives at the frame origin,
/// valid in any codimension.
pub fn graham_witten_density(frame: &CurvatureFrame) -> f64 {
    let g = GraphDerivatives::new(&frame.graph);
    let (m, c) = (g.m, g.codim);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let h: Vec<f64> = (0..c).map(|s| (0..m).map(|i| g.f2[i][i][s]).sum()).collect();
    let mut grad = 0.0;
    for j in 0..m {
        let v: Vec<f64> = (0..c).map(|s| (0..m).map(|k| g.f3[j][k][k][s]).sum()).collect();
        grad += dot(&v, &v);
    }
    let mut cross = 0.0;
    for i in 0..m {
        for j in 0..m {
            cross += dot(&g.f2[i][j], &h).powi(2);
        }
    }
    let h2 = dot(&h, &h);
    grad - cross + 7.0 / 16.0 * h2 * h2
}

/// Graham–Witten energy from graph derivatives (any codimension).
pub fn graham_witten_graph(spec: &ManifoldSpec, order: usize) -> Result<Estimate> {
    require_four(spec)?;
    let e = integrate_frames(spec, order, graham_witten_density)?;
    Ok(Estimate { value: e.value / 128.0, error: e.error / 128.0 })
}

fn kappa_integral(spec: &ManifoldSpec, order: usize, f: fn(&[f64]) -> Result<f64>) -> Result<Estimate> {
    require_hyper(spec)?;
    Ok(integrate_nodes(spec, order, |_, fr| Ok(f(&fr.kappa).unwrap_or(f64::NAN)))?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBreakdown {
    pub gw: f64,
    pub weyl: f64,
    pub chern: f64,
    pub z_energy: f64,
    pub r8: f64,
    pub r8_nu: f64,
    pub residual: f64,
}

impl EnergyBreakdown {
    pub fn from_parts(gw: f64, weyl: f64, chern: f64, z_energy: f64, r8: f64, r8_nu: f64) -> Self {
        let residual =
            gw - 3.0 / (2.0 * PI * PI) * (r8_nu + 2.0 * r8) + (12.0 * weyl + 5.0 * z_energy) / 2048.0;
        EnergyBreakdown { gw, weyl, chern, z_energy, r8, r8_nu, residual }
    }

    /// ∫X/(8π²), the Euler characteristic of a closed hypersurface.
    pub fn euler_characteristic(&self) -> f64 {
        self.chern / (8.0 * PI * PI)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("gw", self.gw),
            ("weyl", self.weyl),
            ("chern", self.chern),
            ("z_energy", self.z_energy),
            ("r8", self.r8),
            ("r8_nu", self.r8_nu),
            ("residual", self.residual),
        ] {
            let _ = writeln!(s, "{k}={v:.16e}");
        }
        s
    }
}

/// All energies of a closed 4-dimensional hypersurface by frame quadrature.
pub fn energy_breakdown(spec: &ManifoldSpec, order: usize) -> Result<EnergyBreakdown> {
    require_hyper(spec)?;
    let gw = graham_witten(spec, order)?.value;
    let weyl = kappa_integral(spec, order, weyl_norm_hyp)?.value;
    let chern = kappa_integral(spec, order, chern_density)?.value;
    let z = kappa_integral(spec, order, q_energy)?.value;
    let r8 = residue_m8(spec, order)?.raw.value;
    let r8_nu = nu_residue_m8(spec, order)?.raw.value;
    Ok(EnergyBreakdown::from_parts(gw, weyl, chern, z, r8, r8_nu))
}

/// Residual of the identity between the Graham–Witten energy, the residues
/// at −8 and the Weyl and q energies.
pub fn gw_identity(spec: &ManifoldSpec, order: usize) -> Result<f64> {
    Ok(energy_breakdown(spec, order)?.residual)
}

fn check_axis(a: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(ConformalError::Degenerate(format!("spheroid axis must be positive, got {a}")));
    }
    Ok(())
}

fn theta_rule() -> Vec<(f64, f64)> {
    composite(0.0, PI, THETA_PANELS, THETA_POINTS)
}

/// 2π²∫₀^π f(θ)√(cos²θ + a²sin²θ)sin³θ dθ: the integral over the
/// 4-dimensional spheroid of a function of the polar angle.
pub fn spheroid_reduced<F: Fn(f64) -> f64>(a: f64, f: F) -> Result<f64> {
    check_axis(a)?;
    let s: f64 = theta_rule()
        .into_iter()
        .map(|(t, w)| {
            let big_a = t.cos().powi(2) + a * a * t.sin().powi(2);
            w * f(t) * big_a.sqrt() * t.sin().powi(3)
        })
        .sum();
    Ok(2.0 * PI * PI * s)
}

/// Curvature energies of the 4-dimensional spheroid by 1-D quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpheroidEnergies {
    pub gw: f64,
    pub weyl: f64,
    pub chern: f64,
    pub z_energy: f64,
}

pub fn spheroid_energies(a: f64) -> Result<SpheroidEnergies> {
    let kappa = |t: f64| spheroid_curvatures(a, t, 4);
    let gw_density = |t: f64| {
        let (s, c) = t.sin_cos();
        let big_a = c * c + a * a * s * s;
        let da = 2.0 * (a * a - 1.0) * s * c;
        let dh = 1.5 * a * da / big_a.powf(2.5) + 3.0 * 0.5 * a * da / big_a.powf(1.5);
        let k = kappa(t);
        let h: f64 = k.iter().sum();
        let hh: f64 = k.iter().map(|x| x * x).sum();
        (dh * dh / big_a - hh * h * h + 7.0 / 16.0 * h.powi(4)) / 128.0
    };
    let on_kappa = |f: fn(&[f64]) -> Result<f64>| spheroid_reduced(a, |t| f(&kappa(t)).unwrap_or(f64::NAN));
    Ok(SpheroidEnergies {
        gw: spheroid_reduced(a, gw_density)?,
        weyl: on_kappa(weyl_norm_hyp)?,
        chern: on_kappa(chern_density)?,
        z_energy: on_kappa(q_energy)?,
    })
}

/// ∫₀^π [σ(κ) − σ(κ̃)/(a²cos²θ+sin²θ)⁴]√(a²sin²θ+cos²θ)sin³θ dθ comparing a
/// spheroid with its image under the unit inversion.
pub fn classification_harness(c: [f64; 3], a: f64) -> Result<f64> {
    check_axis(a)?;
    if a == 1.0 {
        return Err(ConformalError::Degenerate("the round sphere gives a zero defect for every σ".into()));
    }
    let mut s = 0.0;
    for (t, w) in theta_rule() {
        let (sn, cs) = t.sin_cos();
        let k = spheroid_curvatures(a, t, 4);
        let kt = inverted_spheroid_curvatures(a, t, 4);
        let jac = (a * a * cs * cs + sn * sn).powi(4);
        let v = quartic_sigma(c, &k)? - quartic_sigma(c, &kt)? / jac;
        s += w * v * (a * a * sn * sn + cs * cs).sqrt() * sn.powi(3);
    }
    Ok(s)
}

/// The θ-reduced cubic curvature integrals of the 3-dimensional spheroid
/// and of its inversion image, by quadrature and in closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpheroidRelative {
    pub r_a: f64,
    pub r_tilde: f64,
    pub closed_r: f64,
    pub closed_tilde: f64,
}

impl SpheroidRelative {
    /// R₁ = 5π/2, the value at the round sphere.
    pub const R1: f64 = 5.0 * PI / 2.0;

    /// R_a + R̃_a − 2R₁.
    pub fn gap(&self) -> f64 {
        self.r_a + self.r_tilde - 2.0 * Self::R1
    }
}

fn cubic_density(k: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        s += k[i].powi(3);
        for j in 0..3 {
            if i != j {
                s -= k[i] * k[i] * k[j];
            }
        }
    }
    s - 2.0 * k[0] * k[1] * k[2]
}

pub fn spheroid_relative_check(a: f64) -> Result<SpheroidRelative> {
    check_axis(a)?;
    let (mut r, mut rt) = (0.0, 0.0);
    for (t, w) in theta_rule() {
        let (sn, cs) = t.sin_cos();
        let vol = (a * a * sn * sn + cs * cs).sqrt() * sn * sn;
        r += w * cubic_density(&spheroid_curvatures(a, t, 3)) * vol;
        rt += w * cubic_density(&inverted_spheroid_curvatures(a, t, 3)) * vol
            / (a * a * cs * cs + sn * sn).powi(3);
    }
    let (closed_r, closed_tilde) = spheroid3_cubic_closed(a);
    Ok(SpheroidRelative { r_a: r, r_tilde: rt, closed_r, closed_tilde })
}

/// Rows (𝓔, R(−8), R_ν(−8)) of the spheroids with the given axes.
pub fn spheroid_energy_rows(axes: &[f64]) -> Result<Vec<[f64; 3]>> {
    axes.iter()
        .map(|&a| Ok([spheroid_gw(a)?, spheroid_r8(a)?, spheroid_r8_nu_corrected(a)?]))
        .collect()
}

/// Numerical rank of a matrix after scaling each column to unit maximum,
/// counting singular values above `tol` times the largest.
pub fn independence_rank(rows: &[[f64; 3]], tol: f64) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut m = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
    for j in 0..3 {
        let scale = m.column(j).amax();
        if scale > 0.0 {
            m.column_mut(j).scale_mut(1.0 / scale);
        }
    }
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * top).count()
}
