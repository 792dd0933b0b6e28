//! Residues of the energy functions as curvature integrals over frames,
//! independent of the distance-profile engine.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::continuation::{beta_eval, local_profile, ContinuationError, Estimate, ProfileOptions, WeightKind};
use crate::jet::{jet_det, Jet, Scalar};
use crate::manifold::{CurvatureFrame, GraphDerivatives, ManifoldError, ManifoldSpec, QuadratureNode};
use crate::mobius::CurvatureTensor;
use crate::oracles::{ball_volume, sphere_volume};
use crate::quadrature::sphere_rule;
use num_complex::Complex64;

/// Default Gauss–Legendre points per π for frame integrals.
pub const DEFAULT_ORDER: usize = 24;

/// Order increment of the second quadrature used for the error estimate.
const ORDER_STEP: usize = 4;

/// Resolution of the direction rule in the graph method.
const GRAPH_DIRECTION_ORDER: usize = 8;

/// Multiplier on the reported error bars when comparing entries.
pub const ERROR_COVERAGE: f64 = 3.0;

/// Relative order of the graph-method series (coefficients ā₀..ā₄).
pub const GRAPH_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum ResidueError {
    #[error("spec is not a body")]
    NotBody,
    #[error("expected {expected}, got {got}")]
    Dimension { expected: String, got: String },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
}

pub type Result<T> = std::result::Result<T, ResidueError>;

fn o(k: usize) -> f64 {
    sphere_volume(k)
}

fn require_frames(spec: &ManifoldSpec) -> Result<()> {
    if spec.is_polygon() || spec.patches.is_empty() {
        return Err(ResidueError::NotApplicable("curvature frames need smooth patches".into()));
    }
    Ok(())
}

fn require_hypersurface(spec: &ManifoldSpec) -> Result<()> {
    if !spec.is_hypersurface() {
        return Err(ResidueError::Dimension { expected: "a hypersurface".into(), got: format!("m = {}, n = {}", spec.m, spec.n) });
    }
    Ok(())
}

fn require_m(spec: &ManifoldSpec, m: usize) -> Result<()> {
    if spec.m != m {
        return Err(ResidueError::Dimension { expected: format!("m = {m}"), got: format!("m = {}", spec.m) });
    }
    Ok(())
}

fn boundary_of(spec: &ManifoldSpec) -> Result<ManifoldSpec> {
    if !spec.is_body {
        return Err(ResidueError::NotBody);
    }
    require_frames(spec)?;
    Ok(spec.boundary()?)
}

fn integrate_once<F>(spec: &ManifoldSpec, order: usize, f: &F) -> Result<f64>
where
    F: Fn(&QuadratureNode, &CurvatureFrame) -> Result<f64> + Sync,
{
    let nodes = spec.nodes_reduced_or_full(order)?;
    let parts: Vec<Result<f64>> = nodes
        .par_iter()
        .map(|nd| Ok(nd.w * f(nd, &spec.curvature_frame(nd.patch, &nd.u)?)?))
        .collect();
    let mut acc = 0.0;
    for p in parts {
        acc += p?;
    }
    Ok(acc)
}

/// ∫ f(node, frame) dv at orders p and p + 4; the difference is the error estimate.
pub fn integrate_nodes<F>(spec: &ManifoldSpec, order: usize, f: F) -> Result<Estimate>
where
    F: Fn(&QuadratureNode, &CurvatureFrame) -> Result<f64> + Sync,
{
    require_frames(spec)?;
    let lo = integrate_once(spec, order, &f)?;
    let hi = integrate_once(spec, order + ORDER_STEP, &f)?;
    Ok(Estimate { value: hi, error: (hi - lo).abs() })
}

/// ∫ f(frame) dv; see [`integrate_nodes`].
pub fn integrate_frames<F>(spec: &ManifoldSpec, order: usize, f: F) -> Result<Estimate>
where
    F: Fn(&CurvatureFrame) -> f64 + Sync,
{
    integrate_nodes(spec, order, |_, fr| Ok(f(fr)))
}

fn volume_estimate(spec: &ManifoldSpec, order: usize) -> Result<Estimate> {
    integrate_frames(spec, order, |_| 1.0)
}

fn scaled(e: Estimate, s: f64) -> Estimate {
    Estimate { value: s * e.value, error: s.abs() * e.error }
}

fn combine(parts: &[(f64, Estimate)]) -> Estimate {
    Estimate {
        value: parts.iter().map(|(c, e)| c * e.value).sum(),
        error: parts.iter().map(|(c, e)| c.abs() * e.error).sum(),
    }
}

// ---------------------------------------------------------------------------
// Closed manifolds
// ---------------------------------------------------------------------------

/// R(−m) = o_{m−1}Vol(M).
pub fn residue_first(spec: &ManifoldSpec, order: usize) -> Result<Estimate> {
    Ok(scaled(volume_estimate(spec, order)?, o(spec.m - 1)))
}

/// R(−m−2) = (o_{m−1}/8m)∫(2‖h‖² − |H|²).
pub fn residue_second(spec: &ManifoldSpec, order: usize) -> Result<Estimate> {
    let c = o(spec.m - 1) / (8.0 * spec.m as f64);
    integrate_frames(spec, order, |f| c * (2.0 * f.h_norm_sq - f.mean_sq))
}

/// The surface form (π/8)∫(κ₁ − κ₂)² of R(−4).
pub fn residue_second_surface(spec: &ManifoldSpec, order: usize) -> Result<Estimate> {
    require_m(spec, 2)?;
    require_hypersurface(spec)?;
    integrate_frames(spec, order, |f| PI / 8.0 * (f.kappa[0] - f.kappa[1]).powi(2))
}

/// Local residues (R_ν^loc, R^loc) at −m−2 from the second derivatives of the graph.
pub fn local_residues_second(frame: &CurvatureFrame) -> (f64, f64) {
    let m = frame.m;
    let g = frame.derivatives();
    let (mut diag, mut cross, mut off) = (0.0, 0.0, 0.0);
    for i in 0..m {
        diag += g.ip2(i, i, i, i);
        for j in 0..m {
            if i != j {
                cross += g.ip2(i, i, j, j);
                off += g.ip2(i, j, i, j);
            }
        }
    }
    let c = o(m - 1) / m as f64;
    let nu = c * (-3.0 / 8.0 * diag - cross / 8.0 - off / 4.0);
    let one = c * (diag / 8.0 - cross / 8.0 + off / 4.0);
    (nu, one)
}

/// R_ν(−m−2) by integrating the local formula.
pub fn nu_residue_second(spec: &ManifoldSpec, order: usize) -> Result<Estimate> {
    integrate_frames(spec, order, |f| local_residues_second(f).0)
}

/// Sc = −(2m/o_{m−1})(R_ν^loc(−m−2) + 3R^loc(−m−2)).
pub fn scalar_from_residues(frame: &CurvatureFrame) -> f64 {
    let (nu, one) = local_residues_second(frame);
    -(2.0 * frame.m as f64 / o(frame.m - 1)) * (nu + 3.0 * one)
}

/// |H|² = −(4m/o_{m−1})(R_ν^loc(−m−2) + R^loc(−m−2)).
pub fn meansq_from_residues(frame: &CurvatureFrame) -> f64 {
    let (nu, one) = local_residues_second(frame);
    -(4.0 * frame.m as f64 / o(frame.m - 1)) * (nu + one)
}

/// The Weyl tube coefficient 𝔨₂ = ½∫Sc by the two paths.
#[derive(Clone, Copy, Debug)]
pub struct TubeCoefficient {
    pub direct: Estimate,
    pub from_residues: Estimate,
}

pub fn weyl_tube_k2(spec: &ManifoldSpec, order: usize) -> Result<TubeCoefficient> {
    let direct = integrate_frames(spec, order, |f| 0.5 * f.scalar_curvature)?;
    let nu = nu_residue_second(spec, order)?;
    let one = residue_second(spec, order)?;
    let c = -(spec.m as f64) / o(spec.m - 1);
    Ok(TubeCoefficient { direct, from_residues: combine(&[(c, nu), (3.0 * c, one)]) })
}

/// (1/4)∫H² and −(1/π)(R_ν(−4) + R(−4)) for surfaces.
pub fn willmore_pair(spec: &ManifoldSpec, order: usize) -> Result<(Estimate, Estimate)> {
    require_m(spec, 2)?;
    let w = integrate_frames(spec, order, |f| 0.25 * f.mean_sq)?;
    let nu = nu_residue_second(spec, order)?;
    let one = residue_second(spec, order)?;
    Ok((w, combine(&[(-1.0 / PI, nu), (-1.0 / PI, one)])))
}

// ---------------------------------------------------------------------------
// Graph method: series of the extrinsic ball volume
// ---------------------------------------------------------------------------

fn series_mul(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, x) in a.iter().enumerate().take(len) {
        for (j, y) in b.iter().enumerate().take(len - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// a^p for a series with a₀ > 0.
fn series_pow(a: &[f64], p: f64, len: usize) -> Vec<f64> {
    let mut b = vec![0.0; len];
    b[0] = a[0].powf(p);
    for k in 1..len {
        let mut s = 0.0;
        for j in 1..=k.min(a.len() - 1) {
            s += (p * j as f64 - (k - j) as f64) * a[j] * b[k - j];
        }
        b[k] = s / (k as f64 * a[0]);
    }
    b
}

/// a(b(t)) for b₀ = 0.
fn series_compose(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for &c in a.iter().rev() {
        out = series_mul(&out, b, len);
        out[0] += c;
    }
    out
}

/// Homogeneous parts of a jet along the line s = r·w.
fn line_coefficients(jet: &Jet, w: &[f64]) -> Vec<f64> {
    let layout = jet.layout;
    let mut out = vec![0.0; layout.degree + 1];
    for (mono, c) in layout.monomials.iter().zip(&jet.coeffs) {
        if *c == 0.0 {
            continue;
        }
        let deg: usize = mono.iter().map(|&e| e as usize).sum();
        let p: f64 = mono.iter().zip(w).map(|(&e, x)| x.powi(e as i32)).product();
        out[deg] += c * p;
    }
    out
}

/// Weight of the graph method.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphWeight {
    One,
    /// Grassmann weight; times the graph volume element it is identically 1.
    Nu,
}

/// Coefficients ā₀..ā₄ of ψ′(t) = t^{m−1}Σā_k t^k for the extrinsic ball
/// around the frame origin, from the degree-4 graph jets.
pub fn graph_local_coefficients(frame: &CurvatureFrame, weight: GraphWeight) -> Vec<f64> {
    let m = frame.m;
    let len = GRAPH_ORDER + 1;
    let layout = frame.graph[0].layout;
    let density = match weight {
        GraphWeight::One => {
            let grads: Vec<Vec<Jet>> = (0..m).map(|i| frame.graph.iter().map(|g| g.partial(i)).collect()).collect();
            let g: Vec<Vec<Jet>> = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| {
                            let mut s = Jet::constant(layout, if i == j { 1.0 } else { 0.0 });
                            for (a, b) in grads[i].iter().zip(&grads[j]) {
                                s = s + a * b;
                            }
                            s
                        })
                        .collect()
                })
                .collect();
            Some(jet_det(&g).sqrt())
        }
        GraphWeight::Nu => None,
    };
    let mut acc = vec![0.0; len];
    for (w, wt) in sphere_rule(m, GRAPH_DIRECTION_ORDER) {
        let lines: Vec<Vec<f64>> = frame.graph.iter().map(|g| line_coefficients(g, &w)).collect();
        // |f(rw)|² = r⁴·Q(r)
        let mut q = vec![0.0; len];
        for l in &lines {
            let tail: Vec<f64> = l[2..].to_vec();
            let sq = series_mul(&tail, &tail, len);
            for k in 0..len - 2 {
                q[k + 2] += sq[k];
            }
        }
        // t = r·√(1 + q(r)); r = t·σ(t) with σ = (1 + q(tσ))^{-1/2}
        let mut sigma = vec![0.0; len];
        sigma[0] = 1.0;
        for _ in 0..len {
            let mut r = vec![0.0; len];
            r[1..len].copy_from_slice(&sigma[..len - 1]);
            let mut qt = series_compose(&q, &r, len);
            qt[0] += 1.0;
            sigma = series_pow(&qt, -0.5, len);
        }
        // d/dt(tσ) = σ + tσ′
        let dr: Vec<f64> = (0..len).map(|k| (k + 1) as f64 * sigma[k]).collect();
        let mut integrand = series_mul(&series_pow(&sigma, (m - 1) as f64, len), &dr, len);
        if let Some(a) = &density {
            let mut r = vec![0.0; len];
            r[1..len].copy_from_slice(&sigma[..len - 1]);
            let along = series_compose(&line_coefficients(a, &w), &r, len);
            integrand = series_mul(&integrand, &along, len);
        }
        for k in 0..len {
            acc[k] += wt * integrand[k];
        }
    }
    acc
}

/// Graph-method local residue at −m−k (k even).
pub fn graph_local_residue(frame: &CurvatureFrame, weight: GraphWeight, k: usize) -> Result<f64> {
    if k > GRAPH_ORDER {
        return Err(ResidueError::NotApplicable(format!("the graph series stops at relative order {GRAPH_ORDER}")));
    }
    Ok(graph_local_coefficients(frame, weight)[k])
}

/// ∫ of the graph-method local residue at −m−k.
pub fn graph_residue(spec: &ManifoldSpec, weight: GraphWeight, k: usize, order: usize) -> Result<Estimate> {
    if k > GRAPH_ORDER {
        return Err(ResidueError::NotApplicable(format!("the graph series stops at relative order {GRAPH_ORDER}")));
    }
    integrate_frames(spec, order, |f| graph_local_coefficients(f, weight)[k])
}

// ---------------------------------------------------------------------------
// Four-dimensional hypersurfaces at z = −8
// ---------------------------------------------------------------------------

/// The local residues at −8 of a 4-dimensional hypersurface from (κ, c, d).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalM8 {
    pub r: f64,
    pub r_nu: f64,
}

fn require_frame4(frame: &CurvatureFrame) -> Result<()> {
    if frame.m != 4 || !frame.is_hypersurface() {
        return Err(ResidueError::Dimension { expected: "a 4-dimensional hypersurface".into(), got: format!("m = {}, n = {}", frame.m, frame.n) });
    }
    Ok(())
}

/// Local residues at −8 from the principal curvatures and the cubic and
/// quartic graph coefficients.
pub fn local_m8(frame: &CurvatureFrame) -> Result<LocalM8> {
    require_frame4(frame)?;
    let k = &frame.kappa;
    let h: f64 = k.iter().sum();
    let c = |i: usize, j: usize, l: usize| frame.c(i, j, l);
    let d = |i: usize, j: usize, a: usize, b: usize| frame.d(i, j, a, b);
    let prod: f64 = k.iter().product();
    let (mut r, mut nu) = (24.0 * prod, 24.0 * prod);
    for i in 0..4 {
        r += -63.0 * k[i].powi(4) + 768.0 * c(i, i, i).powi(2) + 192.0 * (4.0 * k[i] - h) * d(i, i, i, i);
        nu += 105.0 * k[i].powi(4) - 960.0 * c(i, i, i).powi(2) - 192.0 * (4.0 * k[i] + h) * d(i, i, i, i);
        for j in 0..4 {
            if i == j {
                continue;
            }
            r += 12.0 * k[i] * k[j].powi(3) + 256.0 * c(i, i, j).powi(2);
            nu += 60.0 * k[i] * k[j].powi(3) - 192.0 * c(i, i, j).powi(2) - 384.0 * c(i, i, i) * c(i, j, j);
            if i < j {
                r += -26.0 * (k[i] * k[j]).powi(2) + 64.0 * (2.0 * k[i] + 2.0 * k[j] - h) * d(i, i, j, j);
                nu += 54.0 * (k[i] * k[j]).powi(2) - 64.0 * (2.0 * k[i] + 2.0 * k[j] + h) * d(i, i, j, j);
                for l in 0..4 {
                    if l == i || l == j {
                        continue;
                    }
                    r += 20.0 * k[i] * k[j] * k[l] * k[l];
                    nu += 36.0 * k[i] * k[j] * k[l] * k[l] - 128.0 * c(i, i, l) * c(j, j, l);
                    if l > j {
                        r += 128.0 * c(i, j, l).powi(2);
                        nu -= 64.0 * c(i, j, l).powi(2);
                    }
                }
            }
        }
    }
    let s = PI * PI / 1536.0;
    Ok(LocalM8 { r: s * r, r_nu: s * nu })
}

/// The frame with its quartic graph coefficients removed.
fn without_quartic(frame: &CurvatureFrame) -> CurvatureFrame {
    let mut out = frame.clone();
    for g in &mut out.graph {
        for (mono, c) in g.layout.monomials.iter().zip(g.coeffs.iter_mut()) {
            if mono.iter().map(|&e| e as usize).sum::<usize>() == 4 {
                *c = 0.0;
            }
        }
    }
    out
}

/// Local residues at −8 plus the Laplacian terms that remove every quartic
/// coefficient; evaluated with the quartic part of the graph dropped.
pub fn local_m8_modified(frame: &CurvatureFrame) -> Result<LocalM8> {
    require_frame4(frame)?;
    let cubic = without_quartic(frame);
    let base = local_m8(&cubic)?;
    let lap = GraphDerivatives::new(&cubic.graph).laplacians(true);
    let c = o(3) / (32.0 * 4.0 * 6.0);
    Ok(LocalM8 {
        r: base.r - c * (3.0 * lap.delta_h_sq - 4.0 * lap.delta_sc),
        r_nu: base.r_nu + c * (5.0 * lap.delta_h_sq - 4.0 * lap.delta_sc),
    })
}

/// A residue computed from the full local formula and from the order-3 form.
#[derive(Clone, Copy, Debug)]
pub struct PathPair {
    pub raw: Estimate,
    pub modified: Estimate,
}

impl PathPair {
    pub fn discrepancy(&self) -> f64 {
        (self.raw.value - self.modified.value).abs()
    }
}

fn m8_paths(spec: &ManifoldSpec, order: usize, pick: fn(LocalM8) -> f64) -> Result<PathPair> {
    require_m(spec, 4)?;
    require_hypersurface(spec)?;
    let eval = |f: &CurvatureFrame, modified: bool| {
        let l = if modified { local_m8_modified(f) } else { local_m8(f) };
        l.map(pick).unwrap_or(f64::NAN)
    };
    let raw = integrate_frames(spec, order, |f| eval(f, false))?;
    let modified = integrate_frames(spec, order, |f| eval(f, true))?;
    Ok(PathPair { raw, modified })
}

/// R(−8) of a closed 4-dimensional hypersurface.
pub fn residue_m8(spec: &ManifoldSpec, order: usize) -> Result<PathPair> {
    m8_paths(spec, order, |l| l.r)
}

/// R_ν(−8) of a closed 4-dimensional hypersurface.
pub fn nu_residue_m8(spec: &ManifoldSpec, order: usize) -> Result<PathPair> {
    m8_paths(spec, order, |l| l.r_nu)
}

// ---------------------------------------------------------------------------
// Bodies
// ---------------------------------------------------------------------------

/// Residues of a compact body at −n, −n−1, −n−3.
pub fn body_residues(spec: &ManifoldSpec, order: usize) -> Result<ResidueReport> {
    let b = boundary_of(spec)?;
    let n = spec.n;
    let nf = n as f64;
    let vol_omega = spec.enclosed_volume(order + ORDER_STEP)?;
    let vol_omega_lo = spec.enclosed_volume(order)?;
    let area = volume_estimate(&b, order)?;
    let c3 = o(n - 2) / (24.0 * (nf * nf - 1.0));
    let third = integrate_frames(&b, order, |f| c3 * (2.0 * f.h_norm_sq + f.mean_sq))?;
    let check = integrate_frames(&b, order, |f| c3 * (3.0 * f.mean_sq - 2.0 * f.scalar_curvature))?;
    let mut r = ResidueReport::new(spec);
    r.push(-nf, scaled(Estimate { value: vol_omega, error: (vol_omega - vol_omega_lo).abs() }, o(n - 1)), "curvature");
    r.push(-nf - 1.0, scaled(area, -o(n - 2) / (nf - 1.0)), "curvature");
    r.push(-nf - 3.0, third, "curvature");
    r.push(-nf - 3.0, check, "curvature-scalar");
    Ok(r)
}

/// Residues of the relative energy function at −n, −n−1, −n−3.
pub fn relative_residues(spec: &ManifoldSpec, order: usize) -> Result<ResidueReport> {
    let b = boundary_of(spec)?;
    let n = spec.n;
    let nf = n as f64;
    let area = volume_estimate(&b, order)?;
    let mean = integrate_frames(&b, order, |f| f.mean_scalar())?;
    let c3 = o(n - 2) / (48.0 * (nf * nf - 1.0));
    let third = integrate_frames(&b, order, |f| {
        let s1: f64 = f.kappa.iter().sum();
        let s3: f64 = f.kappa.iter().map(|k| k.powi(3)).sum();
        c3 * (4.0 * s3 - s1.powi(3))
    })?;
    let mut r = ResidueReport::new(spec);
    r.push(-nf, scaled(area, o(n - 1) / 2.0), "curvature");
    r.push(-nf - 1.0, scaled(mean, o(n - 2) / (2.0 * (nf - 1.0))), "curvature");
    r.push(-nf - 3.0, third, "curvature");
    Ok(r)
}

/// Boundary-local minus local relative residue at −n−3 at a boundary point:
/// (o_{n−2}/(12(n²−1)))ΔH.
pub fn relative_difference_field(frame: &CurvatureFrame) -> Result<f64> {
    let dh = frame
        .laplacians
        .delta_h
        .ok_or_else(|| ResidueError::NotApplicable("ΔH needs a hypersurface".into()))?;
    let n = frame.n as f64;
    Ok(o(frame.n - 2) / (12.0 * (n * n - 1.0)) * dh)
}

/// Local relative residue at z = −n at a boundary point, seen from the body
/// side: ∫_{∂Ω}|x−y|^{−n}⟨x−y, ν_x⟩ dy. Needs the far pairs.
pub fn local_relative_value(spec: &ManifoldSpec, patch: usize, u: &[f64], opts: &ProfileOptions) -> Result<f64> {
    let b = boundary_of(spec)?;
    let p = local_profile(&b, patch, u, &WeightKind::RelativeFlipped, opts)?;
    Ok(beta_eval(&p, Complex64::new(-(spec.n as f64), 0.0))?.value.re)
}

// ---------------------------------------------------------------------------
// Lipschitz–Killing curvatures
// ---------------------------------------------------------------------------

fn elementary_symmetric(k: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; k.len() + 1];
    e[0] = 1.0;
    for &x in k {
        for j in (1..e.len()).rev() {
            e[j] += e[j - 1] * x;
        }
    }
    e
}

/// C₀..C_n from the elementary symmetric polynomials of the principal curvatures.
pub fn lk_curvatures(spec: &ManifoldSpec, order: usize) -> Result<Vec<Estimate>> {
    let b = boundary_of(spec)?;
    require_hypersurface(&b)?;
    let n = spec.n;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..n {
        let deg = n - 1 - k;
        let sign = if deg.is_multiple_of(2) { 1.0 } else { -1.0 };
        let s = integrate_frames(&b, order, |f| elementary_symmetric(&f.kappa)[deg])?;
        out.push(scaled(s, sign / ((n - k) as f64 * ball_volume(n - k))));
    }
    let v = spec.enclosed_volume(order + ORDER_STEP)?;
    out.push(Estimate { value: v, error: (v - spec.enclosed_volume(order)?).abs() });
    Ok(out)
}

/// (C_n, C_{n−1}, C_{n−2}, C_{n−3}) from residues of Ω, ∂Ω and the relative function.
pub fn lk_from_residues(spec: &ManifoldSpec, order: usize) -> Result<Vec<Estimate>> {
    let b = boundary_of(spec)?;
    let n = spec.n;
    let nf = n as f64;
    let body = body_residues(spec, order)?;
    let rel = relative_residues(spec, order)?;
    let closed = residue_second(&b, order)?;
    let get = |r: &ResidueReport, z: f64| r.get(z, "curvature").expect("computed pole");
    let on2 = o(n - 2);
    Ok(vec![
        scaled(get(&body, -nf), 1.0 / o(n - 1)),
        scaled(get(&body, -nf - 1.0), -(nf - 1.0) / (2.0 * on2)),
        scaled(get(&rel, -nf - 1.0), -(nf - 1.0) / (PI * on2)),
        combine(&[
            (3.0 * (nf - 1.0) * (nf + 1.0) / (4.0 * PI * on2), get(&body, -nf - 3.0)),
            (-3.0 * (nf - 1.0) / (4.0 * PI * on2), closed),
        ]),
    ])
}

/// Σ_k ω_k C_{n−k} r^k for C = (C₀..C_n).
pub fn steiner_volume(c: &[f64], r: f64) -> f64 {
    let n = c.len() - 1;
    (0..=n).map(|k| ball_volume(k) * c[n - k] * r.powi(k as i32)).sum()
}

// ---------------------------------------------------------------------------
// Intrinsic residues and heat coefficients
// ---------------------------------------------------------------------------

/// Coefficients of (|Rm|², |Ric|², Sc²) in the intrinsic residue at −m−4.
pub const INTRINSIC_RESIDUE_WEIGHTS: [f64; 3] = [-3.0, 8.0, 5.0];
/// Coefficients of (|Rm|², |Ric|², Sc²) in the heat coefficient a₂ (over 360).
pub const HEAT_WEIGHTS: [f64; 3] = [2.0, -2.0, 5.0];

/// Curvature norms at one quadrature node with its weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntrinsicSample {
    pub w: f64,
    pub sc: f64,
    pub rm2: f64,
    pub ric2: f64,
}

/// Riemann tensor of the induced metric from the Gauss equation.
pub fn gauss_tensor(frame: &CurvatureFrame) -> CurvatureTensor {
    let m = frame.m;
    let terms: Vec<(f64, Vec<Vec<f64>>)> = (0..frame.n)
        .map(|s| (1.0, (0..m).map(|i| (0..m).map(|j| frame.h[i][j][s]).collect()).collect()))
        .collect();
    CurvatureTensor::from_gauss_terms(m, &terms)
}

pub fn intrinsic_samples(spec: &ManifoldSpec, order: usize) -> Result<Vec<IntrinsicSample>> {
    require_frames(spec)?;
    let nodes = spec.nodes_reduced_or_full(order)?;
    nodes
        .par_iter()
        .map(|nd| {
            let (rm2, ric2, sc) = gauss_tensor(&spec.curvature_frame(nd.patch, &nd.u)?).invariants();
            Ok(IntrinsicSample { w: nd.w, sc, rm2, ric2 })
        })
        .collect()
}

fn sample_sum(s: &[IntrinsicSample], f: impl Fn(&IntrinsicSample) -> f64) -> f64 {
    s.iter().map(|x| x.w * f(x)).sum()
}

/// Intrinsic residues R(−m), R(−m−2), R(−m−4).
pub fn intrinsic_residues(m: usize, samples: &[IntrinsicSample]) -> [f64; 3] {
    let mf = m as f64;
    let om = o(m - 1);
    let [a, b, c] = INTRINSIC_RESIDUE_WEIGHTS;
    [
        om * sample_sum(samples, |_| 1.0),
        -om / (6.0 * mf) * sample_sum(samples, |s| s.sc),
        om / (360.0 * mf * (mf + 2.0)) * sample_sum(samples, |s| a * s.rm2 + b * s.ric2 + c * s.sc * s.sc),
    ]
}

/// Heat trace coefficients a₀, a₁, a₂ (without the (4πt)^{−m/2} factor).
pub fn heat_coefficients(samples: &[IntrinsicSample]) -> [f64; 3] {
    let [a, b, c] = HEAT_WEIGHTS;
    [
        sample_sum(samples, |_| 1.0),
        sample_sum(samples, |s| s.sc) / 6.0,
        sample_sum(samples, |s| a * s.rm2 + b * s.ric2 + c * s.sc * s.sc) / 360.0,
    ]
}

/// Whether two coefficient vectors are parallel, up to `tol` relative.
pub fn proportional(a: &[f64; 3], b: &[f64; 3], tol: f64) -> bool {
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let norm = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    norm(&cross) <= tol * norm(a) * norm(b)
}

// ---------------------------------------------------------------------------
// Extrinsic balls of surfaces
// ---------------------------------------------------------------------------

/// Coefficient of t⁶ in the area of the extrinsic ball of radius t around the
/// frame origin of a surface in ℝ³, from h and its covariant derivatives.
pub fn extrinsic_ball_t6(frame: &CurvatureFrame) -> Result<f64> {
    if frame.m != 2 || frame.n != 3 {
        return Err(ResidueError::Dimension { expected: "a surface in ℝ³".into(), got: format!("m = {}, n = {}", frame.m, frame.n) });
    }
    let f = &frame.graph[0];
    let layout = f.layout;
    let fi: Vec<Jet> = (0..2).map(|i| f.partial(i)).collect();
    let fij: Vec<Vec<Jet>> = (0..2).map(|i| (0..2).map(|j| fi[i].partial(j)).collect()).collect();
    let one = Jet::constant(layout, 1.0);
    let g: Vec<Vec<Jet>> = (0..2)
        .map(|i| (0..2).map(|j| &fi[i] * &fi[j] + if i == j { one.clone() } else { Jet::zero(layout) }).collect())
        .collect();
    let det = &g[0][0] * &g[1][1] - &g[0][1] * &g[1][0];
    let inv_det = det.recip();
    let ginv = [
        [&g[1][1] * &inv_det, -(&g[0][1] * &inv_det)],
        [-(&g[1][0] * &inv_det), &g[0][0] * &inv_det],
    ];
    let scale = (&fi[0] * &fi[0] + &fi[1] * &fi[1] + 1.0).powf(-0.5);
    let h: Vec<Vec<Jet>> = (0..2).map(|i| (0..2).map(|j| &fij[i][j] * &scale).collect()).collect();
    // Γ^p_ij = g^{pq} f_ij f_q
    let gamma: Vec<Vec<Vec<Jet>>> = (0..2)
        .map(|p| {
            (0..2)
                .map(|i| {
                    (0..2)
                        .map(|j| {
                            let mut s = Jet::zero(layout);
                            for (q, fq) in fi.iter().enumerate() {
                                s = s + &(&ginv[p][q] * &fij[i][j]) * fq;
                            }
                            s
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    // h_{ij;k}
    let h1: Vec<Vec<Vec<Jet>>> = (0..2)
        .map(|i| {
            (0..2)
                .map(|j| {
                    (0..2)
                        .map(|k| {
                            let mut v = h[i][j].partial(k);
                            for p in 0..2 {
                                v = v - &gamma[p][k][i] * &h[p][j] - &gamma[p][k][j] * &h[i][p];
                            }
                            v
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    // at the origin Γ = 0, so h_{ij;kl} = ∂_l h_{ij;k}
    let h2 = |i: usize, j: usize, k: usize, l: usize| h1[i][j][k].partial(l).value();
    let hv = |i: usize, j: usize| h[i][j].value();
    let tr = hv(0, 0) + hv(1, 1);
    let mut norm = 0.0;
    let mut t = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            norm += hv(i, j).powi(2);
            for k in 0..2 {
                t += 64.0 * h1[i][j][k].value().powi(2);
                t += 72.0 * hv(i, j) * h2(i, j, k, k);
                t += 24.0 * hv(i, j) * h2(k, k, i, j);
            }
        }
    }
    for j in 0..2 {
        for k in 0..2 {
            t -= 24.0 * tr * h2(j, j, k, k);
        }
    }
    t += -9.0 * tr.powi(4) + 36.0 * norm * norm;
    Ok(PI / 9216.0 * t)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One residue value.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidueEntry {
    pub pole: f64,
    /// Weight of the energy function: "one" or "nu".
    pub weight: String,
    pub value: f64,
    pub method: String,
    pub error: f64,
}

/// Residues at several poles with their methods and error estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidueReport {
    pub shape: String,
    pub m: usize,
    pub n: usize,
    pub body: bool,
    pub entries: Vec<ResidueEntry>,
}

impl ResidueReport {
    pub fn new(spec: &ManifoldSpec) -> Self {
        ResidueReport { shape: shape_label(spec), m: spec.m, n: spec.n, body: spec.is_body, entries: vec![] }
    }

    pub fn push(&mut self, pole: f64, e: Estimate, method: &str) {
        self.push_weighted(pole, "one", e, method);
    }

    pub fn push_weighted(&mut self, pole: f64, weight: &str, e: Estimate, method: &str) {
        self.entries.push(ResidueEntry { pole, weight: weight.into(), value: e.value, method: method.into(), error: e.error });
    }

    pub fn get(&self, pole: f64, method: &str) -> Option<Estimate> {
        self.entries
            .iter()
            .find(|e| e.pole == pole && e.method == method && e.weight == "one")
            .map(|e| Estimate { value: e.value, error: e.error })
    }

    /// Pairs at the same pole and weight that differ by more than `rel_tol`
    /// plus the scaled error bars.
    pub fn disagreements(&self, rel_tol: f64) -> Vec<(ResidueEntry, ResidueEntry)> {
        let mut out = vec![];
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                if a.pole != b.pole || a.weight != b.weight {
                    continue;
                }
                let scale = a.value.abs().max(b.value.abs()).max(1e-300);
                if (a.value - b.value).abs() > rel_tol * scale + ERROR_COVERAGE * (a.error + b.error) {
                    out.push((a.clone(), b.clone()));
                }
            }
        }
        out
    }

    /// Flat key/value text: metadata lines, then one line per entry.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "shape={}", self.shape);
        let _ = writeln!(s, "m={}", self.m);
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "body={}", self.body);
        for e in &self.entries {
            let _ = writeln!(
                s,
                "pole={} weight={} value={:.16e} method={} error={:.3e}",
                e.pole, e.weight, e.value, e.method, e.error
            );
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut r = ResidueReport { shape: String::new(), m: 0, n: 0, body: false, entries: vec![] };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if line.starts_with("pole=") {
                let mut e = ResidueEntry { pole: 0.0, weight: String::new(), value: 0.0, method: String::new(), error: 0.0 };
                for kv in line.split_whitespace() {
                    let (k, v) = kv.split_once('=').ok_or_else(|| format!("bad field '{kv}'"))?;
                    let num = || v.parse::<f64>().map_err(|err| format!("{k}: {err}"));
                    match k {
                        "pole" => e.pole = num()?,
                        "value" => e.value = num()?,
                        "error" => e.error = num()?,
                        "method" => e.method = v.into(),
                        "weight" => e.weight = v.into(),
                        _ => return Err(format!("unknown key '{k}'")),
                    }
                }
                r.entries.push(e);
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("bad line '{line}'"))?;
            match k {
                "shape" => r.shape = v.into(),
                "m" => r.m = v.parse().map_err(|e| format!("m: {e}"))?,
                "n" => r.n = v.parse().map_err(|e| format!("n: {e}"))?,
                "body" => r.body = v.parse().map_err(|e| format!("body: {e}"))?,
                _ => return Err(format!("unknown key '{k}'")),
            }
        }
        Ok(r)
    }
}

fn shape_label(spec: &ManifoldSpec) -> String {
    serde_json::to_value(&spec.shape)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_owned))
        .unwrap_or_else(|| "custom".into())
}

/// Residues of a closed manifold at −m and −m−2, with the ν-weighted
/// residue at −m−2.
pub fn closed_residues(spec: &ManifoldSpec, order: usize) -> Result<ResidueReport> {
    let m = spec.m as f64;
    let mut r = ResidueReport::new(spec);
    r.push(-m, residue_first(spec, order)?, "curvature");
    r.push(-m - 2.0, residue_second(spec, order)?, "curvature");
    if spec.m == 2 && spec.is_hypersurface() {
        r.push(-m - 2.0, residue_second_surface(spec, order)?, "curvature-surface");
    }
    r.push_weighted(-m - 2.0, "nu", nu_residue_second(spec, order)?, "curvature");
    Ok(r)
}
