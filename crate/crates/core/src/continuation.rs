//! Analytic continuation of weighted Riesz energies B(z) = ∬ λ(x,y)|x−y|^z
//! through the interpoint-distance distribution.
//!
//! The aggregate density Ψ′(t) = ∫_x ∂_t ∫_{|x−y|≤t} λ dv_y dv_x is split with a
//! smooth cutoff χ (1 on [0, δ], 0 beyond δ₂). Near the diagonal Ψ′ is computed
//! exactly per point by solving for the geodesic-free polar graph chart; on
//! (0, δ] it is replaced by an even polynomial model t^{m−1}Σā_{2j}t^{2j} whose
//! integral is meromorphic in closed form. The remainder is a discrete measure
//! Σ W_k t_k^z.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::manifold::{dist, first_order_frame, ManifoldError, ManifoldSpec, QuadratureNode, Shape};
use crate::mobius::MobiusMap;
use crate::oracles::{sphere_volume, symmetric_finite_part};
use crate::quadrature::{chebyshev_points, sphere_rule, GaussLegendre};

/// Half-width of the neighbourhood around a pole where raw values are refused.
pub const POLE_GUARD: f64 = 1e-3;

const DIAMETER_ORDER: usize = 8;

/// Composite panels per cutoff transition width in the pair quadrature.
pub const TRANSITION_PANELS: f64 = 2.0;

#[derive(Debug, Error, Clone)]
pub enum ContinuationError {
    #[error("z = {z} is within the pole guard of {pole} (residue {residue}, finite part {finite_part})")]
    PoleProximity { z: Complex64, pole: f64, residue: f64, finite_part: f64 },
    #[error("pole {pole} lies beyond the fitted model (deepest pole {deepest})")]
    BeyondFit { pole: f64, deepest: f64 },
    #[error("double pole at {0}")]
    HigherOrderPole(f64),
    #[error("cutoff exceeds the reach: {0}")]
    ReachViolation(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

pub type Result<T> = std::result::Result<T, ContinuationError>;

/// Geometric data of one point, as seen by a weight.
#[derive(Clone, Debug)]
pub struct PointData {
    pub x: Vec<f64>,
    pub tangent: Vec<Vec<f64>>,
    pub normal: Option<Vec<f64>>,
}

type CustomWeight = Arc<dyn Fn(&PointData, &PointData) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum WeightKind {
    One,
    /// Grassmann inner product of the oriented tangent planes.
    Nu,
    /// ⟨ν_x, ν_y⟩.
    NormalProduct,
    /// ⟨y − x, ν_y⟩.
    Relative,
    /// ⟨x − y, ν_x⟩.
    RelativeFlipped,
    Custom(CustomWeight),
}

impl fmt::Debug for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl WeightKind {
    pub fn tag(&self) -> &'static str {
        match self {
            WeightKind::One => "one",
            WeightKind::Nu => "nu",
            WeightKind::NormalProduct => "normal",
            WeightKind::Relative => "relative",
            WeightKind::RelativeFlipped => "relative_flipped",
            WeightKind::Custom(_) => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<WeightKind> {
        Some(match s {
            "one" => WeightKind::One,
            "nu" => WeightKind::Nu,
            "normal" => WeightKind::NormalProduct,
            "relative" => WeightKind::Relative,
            "relative_flipped" => WeightKind::RelativeFlipped,
            _ => return None,
        })
    }

    fn needs_normal(&self) -> bool {
        matches!(self, WeightKind::NormalProduct | WeightKind::Relative | WeightKind::RelativeFlipped)
    }

    pub fn eval(&self, x: &PointData, y: &PointData) -> f64 {
        match self {
            WeightKind::One => 1.0,
            WeightKind::Nu => crate::manifold::nu_weight(&x.tangent, &y.tangent),
            WeightKind::NormalProduct => dot(x.normal.as_ref().expect("normal"), y.normal.as_ref().expect("normal")),
            WeightKind::Relative => {
                let d: Vec<f64> = y.x.iter().zip(&x.x).map(|(a, b)| a - b).collect();
                dot(&d, y.normal.as_ref().expect("normal"))
            }
            WeightKind::RelativeFlipped => {
                let d: Vec<f64> = x.x.iter().zip(&y.x).map(|(a, b)| a - b).collect();
                dot(&d, x.normal.as_ref().expect("normal"))
            }
            WeightKind::Custom(f) => f(x, y),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceMode {
    Euclidean,
    /// Great-circle distance; round spheres only.
    Geodesic,
}

#[derive(Clone, Debug)]
pub struct ProfileOptions {
    /// Gauss–Legendre points per π for the outer (x) integral.
    pub order: usize,
    /// Gauss–Legendre points per π for the inner (y) integral of far pairs.
    pub pair_order: usize,
    /// Resolution of the direction rule on the tangent sphere; default 16 up
    /// to surfaces, 8 for three-manifolds and 6 beyond.
    pub direction_order: Option<usize>,
    pub fit_nodes: usize,
    /// Gauss–Legendre nodes on [δ, δ₂].
    pub tail_nodes: usize,
    /// Chebyshev nodes in log t carrying the far-pair measure.
    pub far_nodes: usize,
    /// Cutoff δ; default 0.2 × reach.
    pub delta: Option<f64>,
    /// Highest even coefficient index J; default m/2 + 3.
    pub fit_degree: Option<usize>,
    /// Largest accepted relative RMS residual of the fit.
    pub fit_tol: f64,
    pub distance: DistanceMode,
    /// Integrate the far pairs. Without them only residues are available.
    pub far_field: bool,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            order: 24,
            pair_order: 128,
            direction_order: None,
            fit_nodes: 32,
            tail_nodes: 96,
            far_nodes: 80,
            delta: None,
            fit_degree: None,
            fit_tol: 1e-6,
            distance: DistanceMode::Euclidean,
            far_field: true,
        }
    }
}

/// The weighted distance distribution with its small-t model.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceProfile {
    pub m: usize,
    pub weight: String,
    pub delta: f64,
    pub delta2: f64,
    /// ā_{2j}, j = 0..=J, of Ψ′(t) = t^{m−1}Σā_{2j}t^{2j} on (0, δ].
    pub coeffs: Vec<f64>,
    /// One-sigma errors of the coefficients from the fit covariance.
    pub coeff_errors: Vec<f64>,
    pub fit_residual: f64,
    pub condition: f64,
    /// Largest odd coefficient of an unconstrained refit relative to the even scale.
    pub odd_leak: f64,
    /// Discrete measure Σ W_k t_k^z for the part of B beyond the model.
    pub tail: Vec<(f64, f64)>,
    /// False when the far pairs were skipped; values and finite parts are then unavailable.
    pub complete: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Profile,
    BoundaryReduction,
    Oracle,
    Polygon,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Profile => "profile",
            Method::BoundaryReduction => "boundary-reduction",
            Method::Oracle => "oracle",
            Method::Polygon => "polygon",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BetaEvaluation {
    pub z: Complex64,
    pub value: Complex64,
    pub nearest_pole: Option<f64>,
    pub pole_distance: f64,
    /// Residue at the nearest pole.
    pub residue: Option<f64>,
    pub method: Method,
}

/// A value with an error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / x).exp();
        let b = (-1.0 / (1.0 - x)).exp();
        a / (a + b)
    }
}

/// C^∞ cutoff: 1 on [0, δ], 0 on [δ₂, ∞).
pub fn cutoff(t: f64, delta: f64, delta2: f64) -> f64 {
    1.0 - smoothstep((t - delta) / (delta2 - delta))
}

/// A fixed rotation with irrational angles so rays avoid coordinate singularities.
fn direction_rotation(m: usize) -> DMatrix<f64> {
    let mut r = DMatrix::identity(m, m);
    for i in 0..m.saturating_sub(1) {
        let ang = 0.5 * (5f64.sqrt() - 1.0) * (i as f64 + 1.0) + 0.1;
        let (s, c) = ang.sin_cos();
        let mut g = DMatrix::identity(m, m);
        g[(i, i)] = c;
        g[(i, i + 1)] = -s;
        g[(i + 1, i)] = s;
        g[(i + 1, i + 1)] = c;
        r = g * r;
    }
    if m == 2 {
        let (s, c) = (2f64.sqrt() * 0.3).sin_cos();
        r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    }
    r
}

struct Outer {
    patch: usize,
    u: Vec<f64>,
    w: f64,
    data: PointData,
}

fn point_data(node: &QuadratureNode) -> PointData {
    PointData { x: node.x.clone(), tangent: node.tangent.clone(), normal: node.normal.clone() }
}

/// Ψ′_x(t) at ascending radii for one point, by solving the polar graph chart
/// y(ρw) with |y − x| = t along each tangent direction w.
fn local_density(spec: &ManifoldSpec, x: &Outer, weight: &WeightKind, ts: &[f64], dirs: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
    let m = spec.m;
    let n = spec.n;
    let chart = spec.local_chart(x.patch, &x.u);
    let cu = chart.center.clone();
    let (_, jx) = chart.tangent(&cu)?;
    let e = &x.data.tangent;
    let l = DMatrix::from_fn(m, m, |i, j| dot(&e[i], &jx[j]));
    let linv = l.clone().try_inverse().ok_or_else(|| ManifoldError::DegenerateJacobian { patch: x.patch, u: x.u.clone() })?;
    let sign = spec.patches[x.patch].sign;
    let mut out = vec![0.0; ts.len()];
    for (w, ww) in dirs {
        let wv = DVector::from_column_slice(w);
        let mut rho = ts[0];
        let mut u: Vec<f64> = {
            let du = &linv * &wv * rho;
            cu.iter().zip(du.iter()).map(|(a, b)| a + b).collect()
        };
        for (k, &t) in ts.iter().enumerate() {
            if k > 0 {
                // extrapolate along the ray
                let scale = t / ts[k - 1];
                rho *= scale;
                for (ui, u0) in u.iter_mut().zip(&cu) {
                    *ui = u0 + (*ui - u0) * scale;
                }
            }
            let mut converged = false;
            let mut last = (vec![], vec![]);
            for _ in 0..60 {
                let (p, jac) = chart.tangent(&u)?;
                let d: Vec<f64> = p.iter().zip(&x.data.x).map(|(a, b)| a - b).collect();
                let mut f = DVector::zeros(m + 1);
                let mut a = DMatrix::zeros(m + 1, m + 1);
                for i in 0..m {
                    f[i] = dot(&e[i], &d) - rho * w[i];
                    for j in 0..m {
                        a[(i, j)] = dot(&e[i], &jac[j]);
                    }
                    a[(i, m)] = -w[i];
                }
                f[m] = (dot(&d, &d) - t * t) / (2.0 * t);
                for j in 0..m {
                    a[(m, j)] = dot(&d, &jac[j]) / t;
                }
                let step = a.lu().solve(&f).ok_or_else(|| {
                    ContinuationError::ReachViolation(format!("singular chart at patch {} u = {u:?}, t = {t}", x.patch))
                })?;
                for i in 0..m {
                    u[i] -= step[i];
                }
                rho -= step[m];
                let size = step.iter().fold(0.0f64, |s, v| s.max(v.abs()));
                last = (p, jac);
                if size < 1e-14 * (1.0 + rho.abs()) {
                    converged = true;
                    break;
                }
            }
            if !converged || rho <= 0.0 {
                return Err(ContinuationError::ReachViolation(format!(
                    "polar chart lost at patch {} u = {:?}, t = {t}",
                    x.patch, x.u
                )));
            }
            let (p, jac) = last;
            let d: Vec<f64> = p.iter().zip(&x.data.x).map(|(a, b)| a - b).collect();
            let ej = DMatrix::from_fn(m, m, |i, j| dot(&e[i], &jac[j]));
            let gram = DMatrix::from_fn(m, m, |i, j| dot(&jac[i], &jac[j]));
            let ej_det = ej.determinant();
            let area = gram.determinant().sqrt() / ej_det.abs();
            let dir = ej.try_inverse().ok_or_else(|| ContinuationError::ReachViolation("folded chart".into()))? * &wv;
            let tang: Vec<f64> = (0..n).map(|r| (0..m).map(|j| jac[j][r] * dir[j]).sum()).collect();
            let drho = t / dot(&d, &tang);
            if !(drho > 0.0) {
                return Err(ContinuationError::ReachViolation(format!("distance not monotone along ray at t = {t}")));
            }
            let fy = first_order_frame(&jac, n, sign)
                .ok_or_else(|| ManifoldError::DegenerateJacobian { patch: x.patch, u: u.clone() })?;
            let ydata = PointData { x: p, tangent: fy.tangent, normal: fy.normal };
            let lam = weight.eval(&x.data, &ydata);
            out[k] += ww * lam * area * rho.powi(m as i32 - 1) * drho;
        }
    }
    Ok(out)
}

fn geodesic_radius(spec: &ManifoldSpec) -> Option<f64> {
    if !spec.map.is_identity() {
        return None;
    }
    match spec.shape {
        Shape::Sphere { r, .. } | Shape::Circle { r } if !spec.is_body => Some(r),
        _ => None,
    }
}

fn barycentric(nodes: &[f64], bw: &[f64], s: f64, out: &mut [f64], scale: f64) {
    if let Some(k) = nodes.iter().position(|&v| v == s) {
        out[k] += scale;
        return;
    }
    let terms: Vec<f64> = nodes.iter().zip(bw).map(|(v, w)| w / (s - v)).collect();
    let total: f64 = terms.iter().sum();
    for (o, t) in out.iter_mut().zip(terms) {
        *o += scale * t / total;
    }
}

struct Layout {
    delta: f64,
    delta2: f64,
    fit_t: Vec<f64>,
    tail: Vec<(f64, f64)>,
    far_s: Vec<f64>,
    far_bw: Vec<f64>,
    geodesic: Option<f64>,
}

fn profile_layout(spec: &ManifoldSpec, opts: &ProfileOptions) -> Result<Layout> {
    let geodesic = match opts.distance {
        DistanceMode::Euclidean => None,
        DistanceMode::Geodesic => Some(geodesic_radius(spec).ok_or_else(|| {
            ContinuationError::NotApplicable("geodesic distances are available for round spheres only".into())
        })?),
    };
    let reach = match geodesic {
        Some(r) => r,
        None => spec.reach_estimate(opts.order.min(12))?,
    };
    let delta = opts.delta.unwrap_or(0.2 * reach);
    if !(delta > 0.0) || delta >= reach {
        return Err(ContinuationError::ReachViolation(format!("δ = {delta} with reach estimate {reach}")));
    }
    let delta2 = (4.0 * delta).min(0.8 * reach).max(1.5 * delta);
    let fit_t = chebyshev_points(opts.fit_nodes, 0.0, delta);
    let tail: Vec<(f64, f64)> = GaussLegendre::new(opts.tail_nodes).on_interval(delta, delta2).collect();
    let dmax = match geodesic {
        Some(r) => PI * r,
        None => {
            // twice the radius about the centroid of a coarse sample, with a margin
            let coarse = spec.sample_quadrature(DIAMETER_ORDER)?;
            let nn = coarse.len() as f64;
            let c: Vec<f64> = (0..spec.n).map(|i| coarse.iter().map(|p| p.x[i]).sum::<f64>() / nn).collect();
            2.2 * coarse.iter().map(|p| dist(&p.x, &c)).fold(0.0, f64::max)
        }
    };
    let nf = opts.far_nodes;
    let far_s = chebyshev_points(nf, delta.ln(), (dmax * 1.001).max(delta2 * 1.001).ln());
    let far_bw: Vec<f64> = (0..nf)
        .map(|k| {
            let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
            sgn * ((2 * k + 1) as f64 * PI / (2 * nf) as f64).sin()
        })
        .collect();
    Ok(Layout { delta, delta2, fit_t, tail, far_s, far_bw, geodesic })
}

struct Contribution {
    fit: Vec<f64>,
    tail: Vec<f64>,
    far: Vec<f64>,
}

fn contribution(
    spec: &ManifoldSpec,
    x: &Outer,
    y_nodes: &[QuadratureNode],
    weight: &WeightKind,
    lay: &Layout,
    dirs: &[(Vec<f64>, f64)],
) -> Result<Contribution> {
    let m = spec.m;
    let (fit, tail) = match lay.geodesic {
        Some(r) => {
            if !matches!(weight, WeightKind::One) {
                return Err(ContinuationError::NotApplicable("geodesic mode supports the constant weight only".into()));
            }
            let dens = |t: f64| sphere_volume(m - 1) * (r * (t / r).sin()).powi(m as i32 - 1);
            (lay.fit_t.iter().map(|&t| dens(t)).collect(), lay.tail.iter().map(|&(t, _)| dens(t)).collect())
        }
        None => {
            let mut ts: Vec<f64> = lay.fit_t.clone();
            ts.extend(lay.tail.iter().map(|&(t, _)| t));
            let d = local_density(spec, x, weight, &ts, dirs)?;
            let (a, b) = d.split_at(lay.fit_t.len());
            (a.to_vec(), b.to_vec())
        }
    };
    let mut far = vec![0.0; lay.far_s.len()];
    for y in y_nodes {
        let d = match lay.geodesic {
            Some(r) => r * (dot(&x.data.x, &y.x) / (r * r)).clamp(-1.0, 1.0).acos(),
            None => dist(&x.data.x, &y.x),
        };
        if d <= lay.delta {
            continue;
        }
        let cut = 1.0 - cutoff(d, lay.delta, lay.delta2);
        let lam = weight.eval(&x.data, &point_data(y));
        let wgt = cut * lam * y.w;
        if wgt != 0.0 {
            barycentric(&lay.far_s, &lay.far_bw, d.ln(), &mut far, wgt);
        }
    }
    Ok(Contribution { fit, tail, far })
}

fn outer_nodes(spec: &ManifoldSpec, opts: &ProfileOptions) -> Result<Vec<Outer>> {
    Ok(spec
        .nodes_reduced_or_full(opts.order)?
        .into_iter()
        .map(|nd| Outer { patch: nd.patch, u: nd.u.clone(), w: nd.w, data: point_data(&nd) })
        .collect())
}

fn check_weight(spec: &ManifoldSpec, weight: &WeightKind) -> Result<()> {
    if weight.needs_normal() && !spec.is_hypersurface() {
        return Err(ContinuationError::NotApplicable(format!("weight '{}' needs a hypersurface", weight.tag())));
    }
    if spec.is_polygon() {
        return Err(ContinuationError::NotApplicable("polygonal knots use the exact edge-pair integrals".into()));
    }
    spec.require_patches()?;
    Ok(())
}

/// The distance distribution of B_{X,λ}, aggregated over X.
pub fn distance_profile(spec: &ManifoldSpec, weight: &WeightKind, opts: &ProfileOptions) -> Result<DistanceProfile> {
    check_weight(spec, weight)?;
    let xs = outer_nodes(spec, opts)?;
    build_profile(spec, weight, opts, &xs)
}

/// The distance distribution of the single point `u` on `patch` (per-point
/// coefficients, e.g. ā₀ = o_{m−1} for the constant weight).
pub fn local_profile(spec: &ManifoldSpec, patch: usize, u: &[f64], weight: &WeightKind, opts: &ProfileOptions) -> Result<DistanceProfile> {
    check_weight(spec, weight)?;
    let (x, cols) = spec.tangent(patch, u)?;
    let f = first_order_frame(&cols, spec.n, spec.patches[patch].sign)
        .ok_or_else(|| ManifoldError::DegenerateJacobian { patch, u: u.to_vec() })?;
    let outer = Outer { patch, u: u.to_vec(), w: 1.0, data: PointData { x, tangent: f.tangent, normal: f.normal } };
    build_profile(spec, weight, opts, &[outer])
}

fn build_profile(
    spec: &ManifoldSpec,
    weight: &WeightKind,
    opts: &ProfileOptions,
    xs: &[Outer],
) -> Result<DistanceProfile> {
    let m = spec.m;
    let lay = profile_layout(spec, opts)?;
    // the far integrand switches on across [δ, δ₂]; the y rule has to see that
    let y_nodes = &if opts.far_field {
        spec.sample_resolved(opts.pair_order, (lay.delta2 - lay.delta) / TRANSITION_PANELS)?
    } else {
        vec![]
    };
    let rot = direction_rotation(m);
    let order = opts.direction_order.unwrap_or(match m {
        0..=2 => 16,
        3 => 8,
        _ => 6,
    });
    let dirs: Vec<(Vec<f64>, f64)> = sphere_rule(m, order)
        .into_iter()
        .map(|(v, w)| ((&rot * DVector::from_vec(v)).iter().copied().collect(), w))
        .collect();
    let parts: Vec<Result<Contribution>> =
        xs.par_iter().map(|x| contribution(spec, x, y_nodes, weight, &lay, &dirs)).collect();
    let mut fit = vec![0.0; lay.fit_t.len()];
    let mut tail = vec![0.0; lay.tail.len()];
    let mut far = vec![0.0; lay.far_s.len()];
    for (x, part) in xs.iter().zip(parts) {
        let c = part?;
        for (a, b) in fit.iter_mut().zip(&c.fit) {
            *a += x.w * b;
        }
        for (a, b) in tail.iter_mut().zip(&c.tail) {
            *a += x.w * b;
        }
        for (a, b) in far.iter_mut().zip(&c.far) {
            *a += x.w * b;
        }
    }
    let jmax = opts.fit_degree.unwrap_or(m / 2 + 3);
    let ys: Vec<f64> = lay.fit_t.iter().zip(&fit).map(|(t, v)| v / t.powi(m as i32 - 1)).collect();
    let (coeffs, coeff_errors, fit_residual, condition) = even_fit(&lay.fit_t, &ys, lay.delta, jmax)?;
    if fit_residual > opts.fit_tol {
        return Err(ContinuationError::ReachViolation(format!(
            "fit residual {fit_residual:e} exceeds {:e} at δ = {}",
            opts.fit_tol, lay.delta
        )));
    }
    let odd_leak = odd_leakage(&lay.fit_t, &ys, lay.delta, 2 * jmax);
    let mut tail_measure: Vec<(f64, f64)> = lay
        .tail
        .iter()
        .zip(&tail)
        .map(|(&(t, w), psi)| (t, w * cutoff(t, lay.delta, lay.delta2) * psi))
        .collect();
    tail_measure.extend(lay.far_s.iter().zip(&far).map(|(s, w)| (s.exp(), *w)));
    Ok(DistanceProfile {
        m,
        weight: weight.tag().to_string(),
        delta: lay.delta,
        delta2: lay.delta2,
        coeffs,
        coeff_errors,
        fit_residual,
        condition,
        odd_leak,
        tail: tail_measure,
        complete: opts.far_field,
    })
}

type FitResult = (Vec<f64>, Vec<f64>, f64, f64);

fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>, f64, f64) {
    let svd = a.clone().svd(true, true);
    let sol = svd.solve(y, 1e-14).expect("SVD with vectors");
    let s = &svd.singular_values;
    let smax = s.iter().fold(0.0f64, |a, b| a.max(*b));
    let smin = s.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    let v = svd.v_t.as_ref().expect("v").transpose();
    let mut inv = DMatrix::zeros(a.ncols(), a.ncols());
    for k in 0..s.len() {
        let col = v.column(k);
        inv += (col * col.transpose()) / (s[k] * s[k]);
    }
    let r = a * &sol - y;
    (sol, inv, r.norm(), smax / smin)
}

fn even_fit(ts: &[f64], ys: &[f64], delta: f64, jmax: usize) -> Result<FitResult> {
    let p = jmax + 1;
    if ts.len() <= p {
        return Err(ContinuationError::NotApplicable("too few fit nodes for the requested degree".into()));
    }
    let a = DMatrix::from_fn(ts.len(), p, |i, j| (ts[i] / delta).powi(2 * j as i32));
    let y = DVector::from_column_slice(ys);
    let (sol, inv, rnorm, cond) = least_squares(&a, &y);
    let dof = (ts.len() - p) as f64;
    let sigma2 = rnorm * rnorm / dof;
    let scale = ys.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let coeffs = (0..p).map(|j| sol[j] / delta.powi(2 * j as i32)).collect();
    let errs = (0..p).map(|j| (sigma2 * inv[(j, j)]).sqrt() / delta.powi(2 * j as i32)).collect();
    Ok((coeffs, errs, rnorm / (ts.len() as f64).sqrt() / scale, cond))
}

fn odd_leakage(ts: &[f64], ys: &[f64], delta: f64, degree: usize) -> f64 {
    let a = DMatrix::from_fn(ts.len(), degree + 1, |i, j| (ts[i] / delta).powi(j as i32));
    let (sol, _, _, _) = least_squares(&a, &DVector::from_column_slice(ys));
    let even = (0..=degree).step_by(2).map(|k| sol[k].abs()).fold(0.0, f64::max);
    let odd = (1..=degree).step_by(2).map(|k| sol[k].abs()).fold(0.0, f64::max);
    if even > 0.0 {
        odd / even
    } else {
        odd
    }
}

/// A truncated real Laurent series Σ_{k ≥ lo} c_k (z − z₀)^k.
#[derive(Clone, Debug, PartialEq)]
pub struct Laurent {
    pub lo: i32,
    pub c: Vec<f64>,
}

const LAURENT_HI: i32 = 3;

impl Laurent {
    fn zero() -> Self {
        Laurent { lo: -2, c: vec![0.0; (LAURENT_HI + 3) as usize] }
    }

    fn from_fn(f: impl Fn(i32) -> f64) -> Self {
        let mut out = Laurent::zero();
        for k in out.lo..=LAURENT_HI {
            out.c[(k - out.lo) as usize] = f(k);
        }
        out
    }

    pub fn coeff(&self, k: i32) -> f64 {
        if k < self.lo || k > LAURENT_HI {
            0.0
        } else {
            self.c[(k - self.lo) as usize]
        }
    }

    pub fn residue(&self) -> f64 {
        self.coeff(-1)
    }

    pub fn finite_part(&self) -> f64 {
        self.coeff(0)
    }

    pub fn pole_order(&self, tol: f64) -> usize {
        let scale = self.c.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
        if self.coeff(-2).abs() > tol * scale {
            2
        } else if self.coeff(-1).abs() > tol * scale {
            1
        } else {
            0
        }
    }

    pub fn add(&self, o: &Laurent) -> Laurent {
        Laurent::from_fn(|k| self.coeff(k) + o.coeff(k))
    }

    pub fn scale(&self, s: f64) -> Laurent {
        Laurent::from_fn(|k| s * self.coeff(k))
    }

    pub fn mul(&self, o: &Laurent) -> Laurent {
        Laurent::from_fn(|k| {
            let mut acc = 0.0;
            for i in -2..=LAURENT_HI {
                let j = k - i;
                if (-2..=LAURENT_HI).contains(&j) {
                    acc += self.coeff(i) * o.coeff(j);
                }
            }
            acc
        })
    }

    /// 1/(z − a) expanded at z₀.
    pub fn simple_pole(a: f64, z0: f64) -> Laurent {
        let d = z0 - a;
        if d.abs() < 1e-12 {
            Laurent::from_fn(|k| if k == -1 { 1.0 } else { 0.0 })
        } else {
            Laurent::from_fn(|k| if k >= 0 { (-1f64).powi(k) / d.powi(k + 1) } else { 0.0 })
        }
    }

    /// (z − a) expanded at z₀.
    pub fn linear(a: f64, z0: f64) -> Laurent {
        Laurent::from_fn(|k| match k {
            0 => z0 - a,
            1 => 1.0,
            _ => 0.0,
        })
    }

    /// g(z) = exp((z − z₀)·L) as a series.
    fn exp_log(l: f64) -> Laurent {
        Laurent::from_fn(|k| if k >= 0 { l.powi(k) / (1..=k).map(|v| v as f64).product::<f64>() } else { 0.0 })
    }

    /// Evaluate at z₀ + ε, dropping nothing (used in tests).
    pub fn eval(&self, eps: f64) -> f64 {
        (self.lo..=LAURENT_HI).map(|k| self.coeff(k) * eps.powi(k)).sum()
    }
}

impl DistanceProfile {
    /// Poles −m − 2j of the model, shallowest first.
    pub fn poles(&self) -> Vec<f64> {
        (0..self.coeffs.len()).map(|j| -(self.m as f64) - 2.0 * j as f64).collect()
    }

    fn pole_index(&self, z0: f64) -> Option<usize> {
        self.poles().iter().position(|p| (p - z0).abs() < 1e-9)
    }

    fn nearest_pole(&self, z: Complex64) -> (f64, f64) {
        self.poles()
            .into_iter()
            .map(|p| (p, (z - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one coefficient")
    }

    /// Laurent expansion of B at a real point.
    pub fn laurent(&self, z0: f64) -> Laurent {
        let ld = self.delta.ln();
        let mut out = Laurent::zero();
        for (j, a) in self.coeffs.iter().enumerate() {
            let p = self.m as f64 + 2.0 * j as f64;
            let amp = a * self.delta.powf(z0 + p);
            let term = Laurent::exp_log(ld).mul(&Laurent::simple_pole(-p, z0)).scale(amp);
            out = out.add(&term);
        }
        let tail = Laurent::from_fn(|k| {
            if k < 0 {
                return 0.0;
            }
            let fact: f64 = (1..=k).map(|v| v as f64).product();
            self.tail.iter().map(|(t, w)| w * t.powf(z0) * t.ln().powi(k)).sum::<f64>() / fact
        });
        out.add(&tail)
    }

    fn require_complete(&self) -> Result<()> {
        if self.complete {
            Ok(())
        } else {
            Err(ContinuationError::NotApplicable("profile was built without far pairs".into()))
        }
    }

    fn raw_value(&self, z: Complex64) -> Complex64 {
        let ld = self.delta.ln();
        let mut v = Complex64::new(0.0, 0.0);
        for (j, a) in self.coeffs.iter().enumerate() {
            let e = z + self.m as f64 + 2.0 * j as f64;
            v += (e * ld).exp() / e * *a;
        }
        for (t, w) in &self.tail {
            v += (z * t.ln()).exp() * *w;
        }
        v
    }
}

/// B(z) away from the model poles.
pub fn beta_eval(profile: &DistanceProfile, z: Complex64) -> Result<BetaEvaluation> {
    profile.require_complete()?;
    let (pole, dist) = profile.nearest_pole(z);
    let residue = profile.coeffs[profile.pole_index(pole).expect("pole of the model")];
    if dist < POLE_GUARD {
        return Err(ContinuationError::PoleProximity { z, pole, residue, finite_part: profile.laurent(pole).finite_part() });
    }
    Ok(BetaEvaluation {
        z,
        value: profile.raw_value(z),
        nearest_pole: Some(pole),
        pole_distance: dist,
        residue: Some(residue),
        method: Method::Profile,
    })
}

/// Residue at z₀ = −m − 2j.
pub fn residue_from_profile(profile: &DistanceProfile, z0: f64) -> Result<Estimate> {
    let deepest = *profile.poles().last().expect("coefficients");
    let is_candidate = z0 <= -(profile.m as f64) && ((z0 + profile.m as f64) / 2.0).fract() == 0.0;
    match profile.pole_index(z0) {
        Some(j) => Ok(Estimate { value: profile.coeffs[j], error: profile.coeff_errors[j] }),
        None if is_candidate => Err(ContinuationError::BeyondFit { pole: z0, deepest }),
        None => Ok(Estimate { value: 0.0, error: 0.0 }),
    }
}

/// lim_{w→z₀}(B(w) − Res/(w − z₀)); B(z₀) at non-poles.
pub fn hadamard_finite_part(profile: &DistanceProfile, z0: f64) -> Result<f64> {
    profile.require_complete()?;
    let deepest = *profile.poles().last().expect("coefficients");
    if z0 < deepest - 1.0 {
        return Err(ContinuationError::BeyondFit { pole: z0, deepest });
    }
    Ok(profile.laurent(z0).finite_part())
}

/// Boundary profile for a body with the normal-product weight.
pub fn body_profile(spec: &ManifoldSpec, opts: &ProfileOptions) -> Result<DistanceProfile> {
    if !spec.is_body {
        return Err(ContinuationError::NotApplicable("spec is not a body".into()));
    }
    distance_profile(&spec.boundary()?, &WeightKind::NormalProduct, opts)
}

/// Boundary profile with the weight ⟨y − x, ν_y⟩.
pub fn relative_profile(spec: &ManifoldSpec, opts: &ProfileOptions) -> Result<DistanceProfile> {
    if !spec.is_body {
        return Err(ContinuationError::NotApplicable("spec is not a body".into()));
    }
    distance_profile(&spec.boundary()?, &WeightKind::Relative, opts)
}

/// Laurent series of B_Ω(z) = −B_{∂Ω,ν}(z+2)/((z+2)(z+n)) at z₀.
pub fn body_laurent(boundary: &DistanceProfile, n: usize, z0: f64) -> Laurent {
    boundary
        .laurent(z0 + 2.0)
        .mul(&Laurent::simple_pole(-2.0, z0))
        .mul(&Laurent::simple_pole(-(n as f64), z0))
        .scale(-1.0)
}

/// Laurent series of B_{Ω,∂Ω}(z) = B_rel(z)/(z+n) at z₀.
pub fn relative_laurent(boundary: &DistanceProfile, n: usize, z0: f64) -> Laurent {
    boundary.laurent(z0).mul(&Laurent::simple_pole(-(n as f64), z0))
}

fn reduced_eval(
    z: Complex64,
    poles: Vec<f64>,
    laurent: impl Fn(f64) -> Laurent,
    raw: impl Fn(Complex64) -> Complex64,
    removable: &[f64],
) -> Result<BetaEvaluation> {
    let near = |p: &f64| (z - p).norm() < POLE_GUARD;
    let nearest = poles.iter().map(|&p| (p, (z - p).norm())).min_by(|a, b| a.1.total_cmp(&b.1));
    for &p in poles.iter().chain(removable) {
        if near(&p) {
            let l = laurent(p);
            // a known removable point keeps only the regular part of the fitted series
            if removable.contains(&p) || l.pole_order(1e-9) == 0 {
                let eps = z - p;
                let v = l.finite_part() + l.coeff(1) * eps + l.coeff(2) * eps * eps;
                return Ok(BetaEvaluation {
                    z,
                    value: v,
                    nearest_pole: None,
                    pole_distance: (z - p).norm(),
                    residue: Some(0.0),
                    method: Method::BoundaryReduction,
                });
            }
            return Err(ContinuationError::PoleProximity { z, pole: p, residue: l.residue(), finite_part: l.finite_part() });
        }
    }
    Ok(BetaEvaluation {
        z,
        value: raw(z),
        nearest_pole: nearest.map(|p| p.0),
        pole_distance: nearest.map_or(f64::INFINITY, |p| p.1),
        residue: nearest.map(|p| laurent(p.0).residue()),
        method: Method::BoundaryReduction,
    })
}

/// B_Ω(z) of a compact body via the boundary.
pub fn body_beta(boundary: &DistanceProfile, n: usize, z: Complex64) -> Result<BetaEvaluation> {
    boundary.require_complete()?;
    let mut poles: Vec<f64> = boundary.poles().iter().map(|p| p - 2.0).collect();
    poles.push(-(n as f64));
    let raw = |z: Complex64| -boundary.raw_value(z + 2.0) / ((z + 2.0) * (z + n as f64));
    reduced_eval(z, poles, |p| body_laurent(boundary, n, p), raw, &[-2.0])
}

/// B_{Ω,∂Ω}(z) of a compact body via the boundary.
pub fn relative_beta(boundary: &DistanceProfile, n: usize, z: Complex64) -> Result<BetaEvaluation> {
    boundary.require_complete()?;
    let mut poles = boundary.poles();
    poles.push(-(n as f64));
    let raw = |z: Complex64| boundary.raw_value(z) / (z + n as f64);
    reduced_eval(z, poles, |p| relative_laurent(boundary, n, p), raw, &[])
}

/// The outward parallel body at distance ε (single-patch bodies).
pub fn parallel_body(spec: &ManifoldSpec, eps: f64) -> Result<ManifoldSpec> {
    if !spec.is_body {
        return Err(ContinuationError::NotApplicable("spec is not a body".into()));
    }
    if let (Shape::Ball { r, .. }, true) = (&spec.shape, spec.map.is_identity()) {
        return Ok(spec.transformed(&MobiusMap::scaling(1.0 + eps / r))?);
    }
    if spec.patches.len() != 1 {
        return Err(ContinuationError::NotApplicable("parallel bodies need a single boundary patch".into()));
    }
    let base = spec.clone();
    let p = &spec.patches[0];
    let (n, m) = (spec.n, spec.m);
    let sign = p.sign;
    let mut out = ManifoldSpec::custom(m, n, p.lo.clone(), p.hi.clone(), move |u: &[f64]| {
        let (x, cols) = base.tangent(0, u).expect("boundary point");
        let nu = first_order_frame(&cols, n, sign).and_then(|f| f.normal).expect("regular boundary");
        x.iter().zip(&nu).map(|(a, b)| a + eps * b).collect()
    })?;
    out.is_body = true;
    Ok(out)
}

/// (1/2)∂_ε B_{Ω_ε}(z) at ε = 0 by a central difference of parallel bodies.
pub fn parallel_derivative(spec: &ManifoldSpec, z: f64, eps: f64, opts: &ProfileOptions) -> Result<f64> {
    let mut vals = vec![];
    for s in [eps, -eps] {
        let body = parallel_body(spec, s)?;
        let prof = body_profile(&body, opts)?;
        vals.push(body_beta(&prof, spec.n, Complex64::new(z, 0.0))?.value.re);
    }
    Ok((vals[0] - vals[1]) / (4.0 * eps))
}

fn edge_gl() -> Arc<GaussLegendre> {
    GaussLegendre::new(40)
}

/// Same-edge, adjacent-edge and distant-edge pieces of a closed polygon's energy.
fn polygon_pieces(vertices: &[[f64; 3]], z: Complex64) -> Result<Complex64> {
    let k = vertices.len();
    let edge = |i: usize| -> ([f64; 3], [f64; 3], f64) {
        let a = vertices[i];
        let b = vertices[(i + 1) % k];
        let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let l = dot(&d, &d).sqrt();
        (a, [d[0] / l, d[1] / l, d[2] / l], l)
    };
    let gl = edge_gl();
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..k {
        let (_, _, l) = edge(i);
        if l == 0.0 {
            return Err(ContinuationError::NotApplicable("repeated polygon vertex".into()));
        }
        total += 2.0 * (l.ln() * (z + 2.0)).exp() / ((z + 1.0) * (z + 2.0));
    }
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let (ai, di, li) = edge(i);
            let (aj, dj, lj) = edge(j);
            let adjacent = (j + 1) % k == i || (i + 1) % k == j;
            if adjacent {
                // shared vertex at the origin, edges leaving along a and b
                let (a, la, b, lb) = if (i + 1) % k == j {
                    ([-di[0], -di[1], -di[2]], li, dj, lj)
                } else {
                    (di, li, [-dj[0], -dj[1], -dj[2]], lj)
                };
                let c = dot(&a, &b);
                let split = (lb / la).atan();
                let mut acc = Complex64::new(0.0, 0.0);
                for (lo, hi, first) in [(0.0, split, true), (split, PI / 2.0, false)] {
                    for (phi, w) in gl.on_interval(lo, hi) {
                        let g: f64 = 1.0 - c * (2.0 * phi).sin();
                        let rmax = if first { la / phi.cos() } else { lb / phi.sin() };
                        acc += w * ((z / 2.0) * g.ln() + (z + 2.0) * rmax.ln()).exp();
                    }
                }
                total += acc / (z + 2.0);
            } else {
                let mut acc = Complex64::new(0.0, 0.0);
                for (s, ws) in gl.on_interval(0.0, li) {
                    let x: Vec<f64> = (0..3).map(|r| ai[r] + s * di[r]).collect();
                    for (t, wt) in gl.on_interval(0.0, lj) {
                        let y: Vec<f64> = (0..3).map(|r| aj[r] + t * dj[r]).collect();
                        acc += ws * wt * (z * dist(&x, &y).ln()).exp();
                    }
                }
                total += acc;
            }
        }
    }
    Ok(total)
}

/// B(z) of a closed polygon from exact per-edge-pair integrals; poles at −1, −2.
pub fn polygon_beta(vertices: &[[f64; 3]], z: Complex64) -> Result<BetaEvaluation> {
    let (r1, r2) = polygon_residues(vertices)?;
    for (p, res) in [(-1.0, r1), (-2.0, r2)] {
        if (z - p).norm() < POLE_GUARD {
            let fp = symmetric_finite_part(|w| polygon_pieces(vertices, w).unwrap_or_default(), p).re;
            return Err(ContinuationError::PoleProximity { z, pole: p, residue: res, finite_part: fp });
        }
    }
    let near = if (z + 1.0).norm() <= (z + 2.0).norm() { (-1.0, r1) } else { (-2.0, r2) };
    Ok(BetaEvaluation {
        z,
        value: polygon_pieces(vertices, z)?,
        nearest_pole: Some(near.0),
        pole_distance: (z - near.0).norm(),
        residue: Some(near.1),
        method: Method::Polygon,
    })
}

/// Residues at −1 and −2 read off the edge-pair decomposition.
pub fn polygon_residues(vertices: &[[f64; 3]]) -> Result<(f64, f64)> {
    let k = vertices.len();
    if k < 3 {
        return Err(ContinuationError::NotApplicable("a polygon needs three vertices".into()));
    }
    let gl = edge_gl();
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for i in 0..k {
        let a = vertices[(i + k - 1) % k];
        let v = vertices[i];
        let b = vertices[(i + 1) % k];
        let e1: Vec<f64> = (0..3).map(|r| a[r] - v[r]).collect();
        let e2: Vec<f64> = (0..3).map(|r| b[r] - v[r]).collect();
        let l = dot(&e2, &e2).sqrt();
        r1 += 2.0 * l;
        r2 -= 2.0;
        let c = dot(&e1, &e2) / (dot(&e1, &e1).sqrt() * l);
        if c <= -1.0 + 1e-14 {
            return Err(ContinuationError::NotApplicable(format!("straight angle at vertex {i}")));
        }
        // both orderings of the two edges at the vertex
        r2 += 2.0 * gl.integrate(0.0, PI / 2.0, |phi| 1.0 / (1.0 - c * (2.0 * phi).sin()));
    }
    Ok((r1, r2))
}

/// Write a profile in the versioned text format.
pub fn profile_to_text(p: &DistanceProfile) -> String {
    let mut s = String::new();
    s.push_str("residue-lab-profile v1\n");
    s.push_str(&format!("m {}\n", p.m));
    s.push_str(&format!("weight {}\n", p.weight));
    s.push_str(&format!("complete {}\n", p.complete));
    for (k, v) in [
        ("delta", p.delta),
        ("delta2", p.delta2),
        ("fit_residual", p.fit_residual),
        ("condition", p.condition),
        ("odd_leak", p.odd_leak),
    ] {
        s.push_str(&format!("{k} {v:e}\n"));
    }
    s.push_str(&format!("coeffs {}\n", p.coeffs.len()));
    for (c, e) in p.coeffs.iter().zip(&p.coeff_errors) {
        s.push_str(&format!("{c:e} {e:e}\n"));
    }
    s.push_str(&format!("tail {}\n", p.tail.len()));
    for (t, w) in &p.tail {
        s.push_str(&format!("{t:e} {w:e}\n"));
    }
    s.push_str("end\n");
    s
}

/// Parse the text format written by [`profile_to_text`].
pub fn profile_from_text(text: &str) -> std::result::Result<DistanceProfile, String> {
    let mut lines = text.lines();
    let mut next = move || lines.next().ok_or_else(|| "unexpected end of profile".to_string());
    if next()? != "residue-lab-profile v1" {
        return Err("unknown profile header".into());
    }
    fn field(line: &str, key: &str) -> std::result::Result<String, String> {
        let (k, v) = line.split_once(' ').ok_or_else(|| format!("malformed line '{line}'"))?;
        if k != key {
            return Err(format!("expected '{key}', found '{k}'"));
        }
        Ok(v.to_string())
    }
    fn num(s: &str) -> std::result::Result<f64, String> {
        s.parse::<f64>().map_err(|e| format!("{e}: '{s}'"))
    }
    fn count(s: &str) -> std::result::Result<usize, String> {
        s.parse::<usize>().map_err(|e| format!("{e}: '{s}'"))
    }
    let m = count(&field(next()?, "m")?)?;
    let weight = field(next()?, "weight")?;
    let complete = match field(next()?, "complete")?.as_str() {
        "true" => true,
        "false" => false,
        other => return Err(format!("bad flag '{other}'")),
    };
    let mut scalars = vec![];
    for key in ["delta", "delta2", "fit_residual", "condition", "odd_leak"] {
        scalars.push(num(&field(next()?, key)?)?);
    }
    let mut pairs = |header: &str| -> std::result::Result<Vec<(f64, f64)>, String> {
        let n = count(&field(next()?, header)?)?;
        (0..n)
            .map(|_| {
                let l = next()?;
                let (a, b) = l.split_once(' ').ok_or_else(|| format!("malformed pair '{l}'"))?;
                Ok((num(a)?, num(b)?))
            })
            .collect()
    };
    let ce = pairs("coeffs")?;
    let tail = pairs("tail")?;
    if next()? != "end" {
        return Err("missing end marker".into());
    }
    Ok(DistanceProfile {
        m,
        weight,
        delta: scalars[0],
        delta2: scalars[1],
        coeffs: ce.iter().map(|p| p.0).collect(),
        coeff_errors: ce.iter().map(|p| p.1).collect(),
        fit_residual: scalars[2],
        condition: scalars[3],
        odd_leak: scalars[4],
        tail,
        complete,
    })
}
