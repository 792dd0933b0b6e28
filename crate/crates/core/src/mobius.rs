//! Möbius transformations of embedded manifolds and the invariance harness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuation::{
    body_laurent, body_profile, distance_profile, hadamard_finite_part, relative_laurent, relative_profile,
    residue_from_profile, ContinuationError, ProfileOptions, WeightKind,
};
use crate::jet::Scalar;
use crate::manifold::{first_order_frame, ManifoldError, ManifoldSpec};
use crate::oracles::sphere_volume;

/// Inversion centers must stay this fraction of the diameter away from the shape.
pub const GUARD_FRACTION: f64 = 1e-2;

const GUARD_ORDER: usize = 16;

#[derive(Debug, Error)]
pub enum MobiusError {
    #[error("step {step}: shape comes within {distance:e} of the inversion center (guard {guard:e})")]
    Guard { step: usize, distance: f64, guard: f64 },
    #[error("step {step}: the inversion center lies inside the body, so the image is unbounded")]
    CenterInside { step: usize },
    #[error("inversion of the center itself")]
    ZeroPoint,
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
}

pub type Result<T> = std::result::Result<T, MobiusError>;

/// One primitive transform of ℝⁿ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// x ↦ c + r²(x − c)/|x − c|²
    Inversion { center: Vec<f64>, radius: f64 },
    /// x ↦ scale·Q x + translation; `rotation` is row-major Q (identity when absent).
    Similarity {
        scale: f64,
        #[serde(default)]
        rotation: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        translation: Option<Vec<f64>>,
    },
}

impl Transform {
    pub fn apply<S: Scalar>(&self, x: Vec<S>) -> Vec<S> {
        match self {
            Transform::Inversion { center, radius } => {
                let d: Vec<S> = x.iter().zip(center).map(|(xi, ci)| xi.clone() - *ci).collect();
                let mut r2 = d[0].lift(0.0);
                for di in &d {
                    r2 = r2 + di.square();
                }
                let factor = r2.recip() * (radius * radius);
                d.into_iter().zip(center).map(|(di, ci)| di * factor.clone() + *ci).collect()
            }
            Transform::Similarity { scale, rotation, translation } => {
                let rotated: Vec<S> = match rotation {
                    None => x,
                    Some(q) => q
                        .iter()
                        .map(|row| {
                            let mut acc = x[0].lift(0.0);
                            for (qij, xj) in row.iter().zip(&x) {
                                if *qij != 0.0 {
                                    acc = acc + xj.clone() * *qij;
                                }
                            }
                            acc
                        })
                        .collect(),
                };
                rotated
                    .into_iter()
                    .enumerate()
                    .map(|(i, xi)| {
                        let t = translation.as_ref().map_or(0.0, |t| t[i]);
                        xi * *scale + t
                    })
                    .collect()
            }
        }
    }

    /// Ambient dimension the transform is written for, if it pins one down.
    fn dimension(&self) -> Option<usize> {
        match self {
            Transform::Inversion { center, .. } => Some(center.len()),
            Transform::Similarity { rotation, translation, .. } => {
                translation.as_ref().map(|t| t.len()).or_else(|| rotation.as_ref().map(|q| q.len()))
            }
        }
    }

    fn validate(&self, n: usize) -> std::result::Result<(), String> {
        if let Some(d) = self.dimension() {
            if d != n {
                return Err(format!("transform is {d}-dimensional, the shape lives in ℝ^{n}"));
            }
        }
        match self {
            Transform::Inversion { radius, .. } if !(*radius > 0.0) => Err("inversion radius must be positive".into()),
            Transform::Similarity { scale, .. } if !(*scale != 0.0 && scale.is_finite()) => {
                Err("similarity scale must be finite and nonzero".into())
            }
            Transform::Similarity { rotation: Some(q), .. } => {
                if q.iter().any(|row| row.len() != n) {
                    return Err("rotation must be square".into());
                }
                for i in 0..n {
                    for j in 0..n {
                        let g: f64 = (0..n).map(|k| q[i][k] * q[j][k]).sum();
                        if (g - if i == j { 1.0 } else { 0.0 }).abs() > 1e-10 {
                            return Err("rotation is not orthogonal".into());
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether the transform commutes with rotations fixing the coordinate
    /// axes listed in `axis` (all other coordinates rotate).
    fn commutes_with_rotations_about(&self, axis: &[usize]) -> bool {
        let off_axis_zero = |v: &[f64]| v.iter().enumerate().all(|(i, c)| axis.contains(&i) || *c == 0.0);
        match self {
            Transform::Inversion { center, .. } => off_axis_zero(center),
            Transform::Similarity { rotation, translation, .. } => {
                rotation.is_none() && translation.as_ref().is_none_or(|t| off_axis_zero(t))
            }
        }
    }
}

/// A composition of primitive transforms, applied left to right.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MobiusMap {
    pub steps: Vec<Transform>,
}

impl MobiusMap {
    pub fn identity() -> Self {
        MobiusMap { steps: vec![] }
    }

    pub fn inversion(center: Vec<f64>, radius: f64) -> Self {
        MobiusMap { steps: vec![Transform::Inversion { center, radius }] }
    }

    pub fn scaling(scale: f64) -> Self {
        MobiusMap { steps: vec![Transform::Similarity { scale, rotation: None, translation: None }] }
    }

    pub fn translation(t: Vec<f64>) -> Self {
        MobiusMap { steps: vec![Transform::Similarity { scale: 1.0, rotation: None, translation: Some(t) }] }
    }

    pub fn then(mut self, other: MobiusMap) -> Self {
        self.steps.extend(other.steps);
        self
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn apply<S: Scalar>(&self, x: Vec<S>) -> Vec<S> {
        self.steps.iter().fold(x, |acc, t| t.apply(acc))
    }

    pub fn commutes_with_rotations_about(&self, axis: &[usize]) -> bool {
        self.steps.iter().all(|t| t.commutes_with_rotations_about(axis))
    }

    /// Inversion centers of the steps, expressed in the coordinates the step acts on.
    pub fn inversion_centers(&self) -> Vec<(usize, Vec<f64>)> {
        self.steps
            .iter()
            .enumerate()
            .filter_map(|(k, t)| match t {
                Transform::Inversion { center, .. } => Some((k, center.clone())),
                _ => None,
            })
            .collect()
    }

    /// Apply only the first `k` steps.
    pub fn apply_prefix(&self, k: usize, x: Vec<f64>) -> Vec<f64> {
        self.steps[..k].iter().fold(x, |acc, t| t.apply(acc))
    }

    /// Check every step against the ambient dimension `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        for (k, t) in self.steps.iter().enumerate() {
            t.validate(n).map_err(|e| MobiusError::NotApplicable(format!("step {k}: {e}")))?;
        }
        Ok(())
    }

    pub fn prefix(&self, k: usize) -> MobiusMap {
        MobiusMap { steps: self.steps[..k].to_vec() }
    }
}

/// The image of `spec` under `map`, refusing maps whose inversion centers come
/// within the guard distance of the shape or sit inside a body.
pub fn transform_spec(spec: &ManifoldSpec, map: &MobiusMap) -> Result<ManifoldSpec> {
    if spec.is_polygon() {
        return Err(MobiusError::NotApplicable("Möbius images of polygons are not polygons".into()));
    }
    map.validate(spec.n)?;
    for (k, center) in map.inversion_centers() {
        let stage = spec.transformed(&map.prefix(k))?;
        let nodes = stage.sample_quadrature(GUARD_ORDER)?;
        let mut diam: f64 = 0.0;
        for a in &nodes {
            for b in &nodes {
                diam = diam.max(dist(&a.x, &b.x));
            }
        }
        let guard = GUARD_FRACTION * diam;
        let distance = nodes.iter().map(|nd| dist(&nd.x, &center)).fold(f64::INFINITY, f64::min);
        if distance < guard {
            return Err(MobiusError::Guard { step: k, distance, guard });
        }
        if stage.is_body && winding_number(&stage, &center)? > 0.5 {
            return Err(MobiusError::CenterInside { step: k });
        }
    }
    Ok(spec.transformed(map)?)
}

/// (1/o_{n−1})∫⟨y − c, ν⟩/|y − c|ⁿ over the oriented hypersurface: 1 inside, 0 outside.
pub fn winding_number(spec: &ManifoldSpec, center: &[f64]) -> Result<f64> {
    if !spec.is_hypersurface() {
        return Err(MobiusError::NotApplicable("winding numbers need a hypersurface".into()));
    }
    let n = spec.n;
    let mut acc = 0.0;
    for nd in spec.sample_quadrature(2 * GUARD_ORDER)? {
        let d: Vec<f64> = nd.x.iter().zip(center).map(|(a, b)| a - b).collect();
        let r = norm(&d);
        let nu = nd.normal.as_ref().expect("hypersurface normal");
        acc += nd.w * dot(&d, nu) / r.powi(n as i32);
    }
    Ok(acc / sphere_volume(n - 1))
}

/// |p|²κᵢ + 2⟨p, ν⟩ for p = x − c: the principal curvatures of the image under
/// the unit inversion about c, up to the orientation sign of the image.
pub fn transformed_curvatures(kappa: &[f64], p: &[f64], nu: &[f64]) -> Result<Vec<f64>> {
    let p2 = dot(p, p);
    if p2 == 0.0 {
        return Err(MobiusError::ZeroPoint);
    }
    let shift = 2.0 * dot(p, nu);
    Ok(kappa.iter().map(|k| p2 * k + shift).collect())
}

/// Principal curvatures of the inverted hypersurface at the image of (patch, u),
/// in the order of the source principal directions, signed for the outward
/// normal of the image.
pub fn image_curvatures(spec: &ManifoldSpec, center: &[f64], radius: f64, patch: usize, u: &[f64]) -> Result<Vec<f64>> {
    if !spec.is_hypersurface() {
        return Err(MobiusError::NotApplicable("principal curvatures need a hypersurface".into()));
    }
    let frame = spec.curvature_frame(patch, u)?;
    let nu = frame.normals[0].clone();
    let p: Vec<f64> = frame.point.iter().zip(center).map(|(a, b)| a - b).collect();
    let raw = transformed_curvatures(&frame.kappa, &p, &nu)?;
    // the differential maps ν to its reflection in p⊥; compare with the image's outward normal
    let image = spec.transformed(&MobiusMap::inversion(center.to_vec(), radius))?;
    let (_, cols) = image.tangent(patch, u)?;
    let img_nu = first_order_frame(&cols, spec.n, image.patches[patch].sign)
        .and_then(|f| f.normal)
        .ok_or_else(|| ManifoldError::DegenerateJacobian { patch, u: u.to_vec() })?;
    let pn = dot(&p, &nu) / dot(&p, &p);
    let reflected: Vec<f64> = nu.iter().zip(&p).map(|(a, b)| a - 2.0 * pn * b).collect();
    let sign = dot(&img_nu, &reflected).signum();
    Ok(raw.into_iter().map(|k| sign * k / (radius * radius)).collect())
}

/// Quantities the invariance harness can recompute.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Quantity {
    /// Residue R_M(−2m).
    ClosedResidue,
    /// Finite value B_M(−2m) (odd m).
    ClosedValue,
    /// Residue R_{M,ν}(−2m) with the Grassmann weight.
    NuResidue,
    /// Residue R_Ω(−2n) of a body.
    BodyResidue,
    /// Residue of the relative energy at the given pole.
    RelativeResidue(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvarianceReport {
    pub before: f64,
    pub after: f64,
    pub diff: f64,
}

/// Evaluate `quantity` on `spec` and on its image under `map`, each from scratch.
pub fn invariance_report(spec: &ManifoldSpec, map: &MobiusMap, quantity: Quantity, opts: &ProfileOptions) -> Result<InvarianceReport> {
    let image = transform_spec(spec, map)?;
    let before = evaluate(spec, quantity, opts)?;
    let after = evaluate(&image, quantity, opts)?;
    Ok(InvarianceReport { before, after, diff: (after - before).abs() })
}

fn evaluate(spec: &ManifoldSpec, quantity: Quantity, opts: &ProfileOptions) -> Result<f64> {
    let residues_only = ProfileOptions { far_field: false, ..opts.clone() };
    let two_m = -2.0 * spec.m as f64;
    Ok(match quantity {
        Quantity::ClosedResidue => {
            residue_from_profile(&distance_profile(spec, &WeightKind::One, &residues_only)?, two_m)?.value
        }
        Quantity::ClosedValue => {
            if spec.m.is_multiple_of(2) {
                return Err(MobiusError::NotApplicable("B_M(−2m) is a pole for even m".into()));
            }
            hadamard_finite_part(&distance_profile(spec, &WeightKind::One, opts)?, two_m)?
        }
        Quantity::NuResidue => residue_from_profile(&distance_profile(spec, &WeightKind::Nu, &residues_only)?, two_m)?.value,
        Quantity::BodyResidue => {
            let n = spec.n;
            body_laurent(&body_profile(spec, &residues_only)?, n, -2.0 * n as f64).residue()
        }
        Quantity::RelativeResidue(z0) => {
            if z0 == -(spec.n as f64) {
                return Err(MobiusError::NotApplicable("the residue at −n needs the far field; use the boundary volume".into()));
            }
            relative_laurent(&relative_profile(spec, &residues_only)?, spec.n, z0).residue()
        }
    })
}

/// An algebraic curvature tensor R[i][j][k][l] on ℝᵐ, stored flat.
#[derive(Clone, Debug)]
pub struct CurvatureTensor {
    pub m: usize,
    pub r: Vec<f64>,
}

impl CurvatureTensor {
    /// Σ_s ±(h_ik h_jl − h_il h_jk) over symmetric matrices h_s (a sum of Gauss-type terms).
    pub fn from_gauss_terms(m: usize, terms: &[(f64, Vec<Vec<f64>>)]) -> Self {
        let mut r = vec![0.0; m.pow(4)];
        for (c, h) in terms {
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        for l in 0..m {
                            r[((i * m + j) * m + k) * m + l] += c * (h[i][k] * h[j][l] - h[i][l] * h[j][k]);
                        }
                    }
                }
            }
        }
        CurvatureTensor { m, r }
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let m = self.m;
        self.r[((i * m + j) * m + k) * m + l]
    }

    /// Ric_jk = Σ_i R_ijik; the unit sphere has Ric = (m − 1)g.
    pub fn ricci(&self) -> Vec<Vec<f64>> {
        let m = self.m;
        (0..m).map(|j| (0..m).map(|k| (0..m).map(|i| self.get(i, j, i, k)).sum()).collect()).collect()
    }

    /// (|Rm|², |Ric|², Sc).
    pub fn invariants(&self) -> (f64, f64, f64) {
        let rm2 = self.r.iter().map(|v| v * v).sum();
        let ric = self.ricci();
        let ric2 = ric.iter().flatten().map(|v| v * v).sum();
        let sc = (0..self.m).map(|i| ric[i][i]).sum();
        (rm2, ric2, sc)
    }
}

/// |W|² = |Rm|² − 4|Ric|²/(m−2) + 2Sc²/((m−1)(m−2)) and, for m = 4,
/// X = (|Rm|² − 4|Ric|² + Sc²)/4 (the Pfaffian density).
pub fn weyl_and_pfaffian(t: &CurvatureTensor) -> (f64, f64) {
    let (rm2, ric2, sc) = t.invariants();
    let m = t.m as f64;
    let w2 = rm2 - 4.0 * ric2 / (m - 2.0) + 2.0 * sc * sc / ((m - 1.0) * (m - 2.0));
    (w2, (rm2 - 4.0 * ric2 + sc * sc) / 4.0)
}

/// −3|Rm|² + 8|Ric|² + 5Sc² − (−2|W|² − 4X + (20/3)Sc²) for a 4-dimensional tensor.
pub fn weyl_decomposition_defect(t: &CurvatureTensor) -> Result<f64> {
    if t.m != 4 {
        return Err(MobiusError::NotApplicable("the decomposition is stated in dimension 4".into()));
    }
    let (rm2, ric2, sc) = t.invariants();
    let (w2, x) = weyl_and_pfaffian(t);
    Ok(-3.0 * rm2 + 8.0 * ric2 + 5.0 * sc * sc - (-2.0 * w2 - 4.0 * x + 20.0 / 3.0 * sc * sc))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
