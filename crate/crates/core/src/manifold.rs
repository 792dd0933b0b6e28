//! Embedded manifolds and compact bodies: parametric patches, quadrature
//! samples and local geometric data up to fourth order.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::{jet_det, jet_inverse, Jet, JetLayout, Scalar};
use crate::mobius::MobiusMap;
use crate::oracles::sphere_volume;
use crate::quadrature::{composite, GaussLegendre};

/// Degree of the Taylor data carried by curvature frames.
pub const FRAME_DEGREE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("degenerate Jacobian on patch {patch} at u = {u:?}")]
    DegenerateJacobian { patch: usize, u: Vec<f64> },
    #[error("rank-deficient tangent frame on patch {patch} at u = {u:?}")]
    RankDeficient { patch: usize, u: Vec<f64> },
    #[error("differentiation step underflow ({0})")]
    StepUnderflow(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub type Result<T> = std::result::Result<T, ManifoldError>;

type UserMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// The embedding of one parameter box.
#[derive(Clone)]
pub enum PatchMap {
    /// Hyperspherical coordinates scaled by the axes; m = axes.len() − 1.
    Ellipsoid(Vec<f64>),
    Torus { major: f64, minor: f64 },
    /// (r₁cos u, r₁sin u, r₂cos v, r₂sin v) in ℝ⁴.
    Clifford { r1: f64, r2: f64 },
    /// A user map, differentiated numerically.
    Custom(UserMap),
}

impl fmt::Debug for PatchMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatchMap::Ellipsoid(a) => write!(f, "Ellipsoid({a:?})"),
            PatchMap::Torus { major, minor } => write!(f, "Torus({major}, {minor})"),
            PatchMap::Clifford { r1, r2 } => write!(f, "Clifford({r1}, {r2})"),
            PatchMap::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl PatchMap {
    /// Analytic evaluation; `None` for user maps.
    pub fn eval<S: Scalar>(&self, u: &[S]) -> Option<Vec<S>> {
        match self {
            PatchMap::Ellipsoid(axes) => Some(hyperspherical(axes, u)),
            PatchMap::Torus { major, minor } => {
                let ring = u[1].cos() * *minor + *major;
                Some(vec![ring.clone() * u[0].cos(), ring * u[0].sin(), u[1].sin() * *minor])
            }
            PatchMap::Clifford { r1, r2 } => Some(vec![
                u[0].cos() * *r1,
                u[0].sin() * *r1,
                u[1].cos() * *r2,
                u[1].sin() * *r2,
            ]),
            PatchMap::Custom(_) => None,
        }
    }
}

fn hyperspherical<S: Scalar>(axes: &[f64], u: &[S]) -> Vec<S> {
    let m = axes.len() - 1;
    if m == 1 {
        return vec![u[0].cos() * axes[0], u[0].sin() * axes[1]];
    }
    let s: Vec<S> = u.iter().map(|x| x.sin()).collect();
    let c: Vec<S> = u.iter().map(|x| x.cos()).collect();
    let prod = |k: usize| -> S {
        // Π_{i<k} sin u_i
        let mut acc = u[0].lift(1.0);
        for si in &s[..k] {
            acc = acc * si.clone();
        }
        acc
    };
    let lead = prod(m - 1);
    let mut out = vec![lead.clone() * c[m - 1].clone() * axes[0], lead * s[m - 1].clone() * axes[1]];
    for k in 3..=m + 1 {
        out.push(prod(m + 1 - k) * c[m + 1 - k].clone() * axes[k - 1]);
    }
    out
}

/// Rotational symmetry of a patch used to reduce quadrature to one orbit coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Symmetry {
    /// The coordinate that is integrated; `None` when the patch is homogeneous.
    pub free: Option<usize>,
    /// Representative values of the remaining coordinates.
    pub representative: Vec<f64>,
    /// Fibre volume multiplying the representative volume element.
    pub factor: f64,
    /// Ambient coordinates fixed by the symmetry group.
    pub axis: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Patch {
    pub map: PatchMap,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// ±1, multiplies the parametrization normal to give the outward normal.
    pub sign: f64,
    /// Connected boundary component this patch belongs to.
    pub component: usize,
    pub symmetry: Option<Symmetry>,
}

/// Builtin shape tags, also the shape configuration schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Circle { r: f64 },
    Ellipse { a: f64, b: f64 },
    Sphere { m: usize, r: f64 },
    Ellipsoid { axes: Vec<f64> },
    /// The 4-dimensional hyper-spheroid with axes (1,1,1,1,a).
    Spheroid { a: f64 },
    Torus { major: f64, minor: f64 },
    CliffordTorus { r1: f64, r2: f64 },
    PolygonKnot { vertices: Vec<[f64; 3]> },
    Ball { n: usize, r: f64 },
    EllipsoidBody { axes: Vec<f64> },
    /// Body bounded by an outer ellipsoid and ellipsoidal holes.
    Shell { outer: Vec<f64>, holes: Vec<Vec<f64>> },
    Custom { m: usize, n: usize },
}

/// A parametric manifold or the boundary description of a compact body.
#[derive(Clone, Debug)]
pub struct ManifoldSpec {
    pub shape: Shape,
    /// Dimension of the patches (for bodies, of the boundary).
    pub m: usize,
    pub n: usize,
    pub patches: Vec<Patch>,
    pub oriented: bool,
    pub closed: bool,
    pub is_body: bool,
    /// Applied after every patch embedding.
    pub map: MobiusMap,
}

fn ellipsoid_patch(axes: Vec<f64>, component: usize) -> Patch {
    let m = axes.len() - 1;
    let (lo, hi) = if m == 1 {
        (vec![0.0], vec![2.0 * PI])
    } else {
        let mut hi = vec![PI; m];
        hi[m - 1] = 2.0 * PI;
        (vec![0.0; m], hi)
    };
    let symmetric = m >= 2 && axes[..m].iter().all(|&a| a == axes[0]);
    let symmetry = symmetric.then(|| {
        let mut rep = vec![PI / 2.0; m - 1];
        rep[m - 2] = 0.0;
        Symmetry { free: Some(0), representative: rep, factor: sphere_volume(m - 1), axis: vec![m] }
    });
    let symmetry = if m == 1 && axes[0] == axes[1] {
        Some(Symmetry { free: None, representative: vec![0.0], factor: 2.0 * PI, axis: vec![] })
    } else {
        symmetry
    };
    Patch { map: PatchMap::Ellipsoid(axes), lo, hi, sign: 1.0, component, symmetry }
}

impl ManifoldSpec {
    fn single(shape: Shape, m: usize, n: usize, patch: Patch, is_body: bool) -> Result<Self> {
        let mut spec = ManifoldSpec {
            shape,
            m,
            n,
            patches: vec![patch],
            oriented: true,
            closed: true,
            is_body,
            map: MobiusMap::identity(),
        };
        spec.orient()?;
        Ok(spec)
    }

    pub fn circle(r: f64) -> Result<Self> {
        positive(&[r])?;
        Self::single(Shape::Circle { r }, 1, 2, ellipsoid_patch(vec![r, r], 0), false)
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        positive(&[a, b])?;
        Self::single(Shape::Ellipse { a, b }, 1, 2, ellipsoid_patch(vec![a, b], 0), false)
    }

    pub fn sphere(m: usize, r: f64) -> Result<Self> {
        positive(&[r])?;
        if m == 0 {
            return Err(ManifoldError::Config("sphere dimension must be ≥ 1".into()));
        }
        Self::single(Shape::Sphere { m, r }, m, m + 1, ellipsoid_patch(vec![r; m + 1], 0), false)
    }

    pub fn ellipsoid(axes: Vec<f64>) -> Result<Self> {
        positive(&axes)?;
        if axes.len() < 2 {
            return Err(ManifoldError::Config("an ellipsoid needs at least two axes".into()));
        }
        let m = axes.len() - 1;
        Self::single(Shape::Ellipsoid { axes: axes.clone() }, m, m + 1, ellipsoid_patch(axes, 0), false)
    }

    pub fn spheroid(a: f64) -> Result<Self> {
        positive(&[a])?;
        Self::single(Shape::Spheroid { a }, 4, 5, ellipsoid_patch(vec![1.0, 1.0, 1.0, 1.0, a], 0), false)
    }

    pub fn torus(major: f64, minor: f64) -> Result<Self> {
        positive(&[major, minor])?;
        if major <= minor {
            return Err(ManifoldError::Config("torus needs R > r > 0".into()));
        }
        let patch = Patch {
            map: PatchMap::Torus { major, minor },
            lo: vec![0.0, 0.0],
            hi: vec![2.0 * PI, 2.0 * PI],
            sign: 1.0,
            component: 0,
            symmetry: Some(Symmetry { free: Some(1), representative: vec![0.0], factor: 2.0 * PI, axis: vec![2] }),
        };
        Self::single(Shape::Torus { major, minor }, 2, 3, patch, false)
    }

    pub fn clifford_torus(r1: f64, r2: f64) -> Result<Self> {
        positive(&[r1, r2])?;
        let patch = Patch {
            map: PatchMap::Clifford { r1, r2 },
            lo: vec![0.0, 0.0],
            hi: vec![2.0 * PI, 2.0 * PI],
            sign: 1.0,
            component: 0,
            symmetry: Some(Symmetry {
                free: None,
                representative: vec![0.0, 0.0],
                factor: 4.0 * PI * PI,
                axis: vec![],
            }),
        };
        Self::single(Shape::CliffordTorus { r1, r2 }, 2, 4, patch, false)
    }

    /// A polygonal knot; it carries no patches and is only accepted by the
    /// exact polygon integrals and the oracles.
    pub fn polygon_knot(vertices: Vec<[f64; 3]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(ManifoldError::Config("a polygon needs at least three vertices".into()));
        }
        Ok(ManifoldSpec {
            shape: Shape::PolygonKnot { vertices },
            m: 1,
            n: 3,
            patches: vec![],
            oriented: true,
            closed: true,
            is_body: false,
            map: MobiusMap::identity(),
        })
    }

    pub fn ball(n: usize, r: f64) -> Result<Self> {
        positive(&[r])?;
        if n < 2 {
            return Err(ManifoldError::Config("balls are supported for n ≥ 2".into()));
        }
        Self::single(Shape::Ball { n, r }, n - 1, n, ellipsoid_patch(vec![r; n], 0), true)
    }

    pub fn ellipsoid_body(axes: Vec<f64>) -> Result<Self> {
        positive(&axes)?;
        let n = axes.len();
        if n < 2 {
            return Err(ManifoldError::Config("an ellipsoidal body needs n ≥ 2".into()));
        }
        Self::single(Shape::EllipsoidBody { axes: axes.clone() }, n - 1, n, ellipsoid_patch(axes, 0), true)
    }

    /// Body bounded by an outer ellipsoid and disjoint ellipsoidal holes (all centered
    /// at the origin, nested).
    pub fn shell(outer: Vec<f64>, holes: Vec<Vec<f64>>) -> Result<Self> {
        positive(&outer)?;
        let n = outer.len();
        let mut patches = vec![ellipsoid_patch(outer.clone(), 0)];
        for (k, h) in holes.iter().enumerate() {
            positive(h)?;
            if h.len() != n {
                return Err(ManifoldError::Config("hole dimension mismatch".into()));
            }
            patches.push(ellipsoid_patch(h.clone(), k + 1));
        }
        let mut spec = ManifoldSpec {
            shape: Shape::Shell { outer, holes },
            m: n - 1,
            n,
            patches,
            oriented: true,
            closed: true,
            is_body: true,
            map: MobiusMap::identity(),
        };
        spec.orient()?;
        Ok(spec)
    }

    /// A single user patch over the box [lo, hi]; derivatives are taken numerically.
    pub fn custom<F>(m: usize, n: usize, lo: Vec<f64>, hi: Vec<f64>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if lo.len() != m || hi.len() != m || n < m {
            return Err(ManifoldError::Config("custom patch box does not match dimensions".into()));
        }
        let patch = Patch { map: PatchMap::Custom(Arc::new(f)), lo, hi, sign: 1.0, component: 0, symmetry: None };
        Self::single(Shape::Custom { m, n }, m, n, patch, false)
    }

    /// The same geometry pushed through a Möbius map (composed after the current one).
    pub fn transformed(&self, map: &MobiusMap) -> Result<Self> {
        map.validate(self.n).map_err(|e| ManifoldError::Config(e.to_string()))?;
        let mut out = self.clone();
        out.map = self.map.clone().then(map.clone());
        out.orient()?;
        Ok(out)
    }

    /// Replace the parameter boxes of the patches (same map, re-parametrized domain).
    pub fn with_domains(&self, boxes: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        if boxes.len() != self.patches.len() {
            return Err(ManifoldError::Config("one box per patch is required".into()));
        }
        let mut out = self.clone();
        for (p, (lo, hi)) in out.patches.iter_mut().zip(boxes) {
            if lo.len() != self.m || hi.len() != self.m {
                return Err(ManifoldError::Config("patch box has the wrong dimension".into()));
            }
            p.lo = lo.clone();
            p.hi = hi.clone();
            if let Some(sym) = &p.symmetry {
                let span_ok = |i: usize| (p.hi[i] - p.lo[i] - (self.patches[0].hi[i] - self.patches[0].lo[i])).abs() < 1e-12;
                if sym.free.is_some() && !(0..self.m).all(span_ok) {
                    p.symmetry = None;
                }
            }
        }
        out.orient()?;
        Ok(out)
    }

    /// The boundary of a body as a closed hypersurface.
    pub fn boundary(&self) -> Result<Self> {
        if !self.is_body {
            return Err(ManifoldError::NotApplicable("spec is not a body".into()));
        }
        let mut out = self.clone();
        out.is_body = false;
        Ok(out)
    }

    pub fn is_hypersurface(&self) -> bool {
        self.m + 1 == self.n
    }

    pub fn is_polygon(&self) -> bool {
        matches!(self.shape, Shape::PolygonKnot { .. })
    }

    pub fn require_patches(&self) -> Result<()> {
        if self.patches.is_empty() {
            Err(ManifoldError::NotApplicable("spec has no smooth patches".into()))
        } else {
            Ok(())
        }
    }

    fn symmetry_of(&self, patch: &Patch) -> Option<Symmetry> {
        let sym = patch.symmetry.clone()?;
        self.map.commutes_with_rotations_about(&sym.axis).then_some(sym)
    }

    /// Whether every patch admits orbit-reduced quadrature.
    pub fn is_symmetric(&self) -> bool {
        !self.patches.is_empty() && self.patches.iter().all(|p| self.symmetry_of(p).is_some())
    }

    /// Choose outward normals: the component enclosing the largest volume is
    /// the outer one; the others are holes and point into them.
    fn orient(&mut self) -> Result<()> {
        if !self.is_hypersurface() || self.patches.is_empty() {
            return Ok(());
        }
        for p in &mut self.patches {
            p.sign = 1.0;
        }
        let nodes = self.nodes_reduced_or_full(10)?;
        let ncomp = self.patches.iter().map(|p| p.component).max().unwrap_or(0) + 1;
        let mut vol = vec![0.0; ncomp];
        for nd in &nodes {
            let nu = nd.normal.as_ref().expect("hypersurface nodes carry normals");
            let xn: f64 = nd.x.iter().zip(nu).map(|(a, b)| a * b).sum();
            vol[self.patches[nd.patch].component] += nd.w * xn / self.n as f64;
        }
        let outer = (0..ncomp)
            .max_by(|&a, &b| vol[a].abs().total_cmp(&vol[b].abs()))
            .unwrap_or(0);
        for p in &mut self.patches {
            let v = vol[p.component];
            let s = if v >= 0.0 { 1.0 } else { -1.0 };
            p.sign = if p.component == outer { s } else { -s };
        }
        Ok(())
    }

    /// Position on a patch.
    pub fn point(&self, patch: usize, u: &[f64]) -> Vec<f64> {
        let p = &self.patches[patch];
        let raw = match &p.map {
            PatchMap::Custom(f) => f(u),
            m => m.eval(u).expect("builtin map"),
        };
        self.map.apply(raw)
    }

    /// Taylor jets of the embedding at `u` in the patch coordinates.
    pub fn jets(&self, patch: usize, u: &[f64], degree: usize) -> Result<Vec<Jet>> {
        let p = &self.patches[patch];
        let layout = JetLayout::get(self.m, degree);
        match &p.map {
            PatchMap::Custom(_) => numeric_jets(&|v: &[f64]| self.point(patch, v), u, layout),
            map => {
                let vars: Vec<Jet> = (0..self.m).map(|i| Jet::variable(layout, i, u[i])).collect();
                Ok(self.map.apply(map.eval(&vars).expect("builtin map")))
            }
        }
    }

    /// Position and Jacobian columns ∂p/∂u_i.
    pub fn tangent(&self, patch: usize, u: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let jets = self.jets(patch, u, 1)?;
        let x = jets.iter().map(|j| j.value()).collect();
        let cols = (0..self.m).map(|i| jets.iter().map(|j| j.coeff(&[i])).collect()).collect();
        Ok((x, cols))
    }

    fn node(&self, patch: usize, u: Vec<f64>, weight: f64) -> Result<QuadratureNode> {
        let (x, cols) = self.tangent(patch, &u)?;
        let frame = first_order_frame(&cols, self.n, self.patches[patch].sign)
            .ok_or_else(|| ManifoldError::DegenerateJacobian { patch, u: u.clone() })?;
        Ok(QuadratureNode {
            patch,
            u,
            x,
            w: weight * frame.volume_element,
            normal: frame.normal,
            tangent: frame.tangent,
        })
    }

    /// Tensor-product Gauss–Legendre nodes over every patch with weights
    /// premultiplied by √det g.
    pub fn sample_quadrature(&self, order: usize) -> Result<Vec<QuadratureNode>> {
        if order < 2 {
            return Err(ManifoldError::Config("quadrature order must be ≥ 2".into()));
        }
        self.require_patches()?;
        let mut out = vec![];
        for (k, p) in self.patches.iter().enumerate() {
            let rules: Vec<Vec<(f64, f64)>> = (0..self.m)
                .map(|i| {
                    let pts = points_for_interval(order, p.hi[i] - p.lo[i]);
                    GaussLegendre::new(pts).on_interval(p.lo[i], p.hi[i]).collect()
                })
                .collect();
            for (u, w) in tensor(&rules) {
                out.push(self.node(k, u, w)?);
            }
        }
        Ok(out)
    }

    /// Like [`sample_quadrature`](Self::sample_quadrature), but with composite
    /// panels whose image length stays below `scale`, so features of that size
    /// in the integrand are resolved.
    pub fn sample_resolved(&self, order: usize, scale: f64) -> Result<Vec<QuadratureNode>> {
        const PANEL: usize = 16;
        if order < 2 || !(scale > 0.0) {
            return Err(ManifoldError::Config("quadrature order must be ≥ 2 and the scale positive".into()));
        }
        self.require_patches()?;
        let mut out = vec![];
        for (k, p) in self.patches.iter().enumerate() {
            let speeds = self.max_speeds(k)?;
            let rules: Vec<Vec<(f64, f64)>> = (0..self.m)
                .map(|i| {
                    let len = p.hi[i] - p.lo[i];
                    let base = points_for_interval(order, len);
                    let panels = (speeds[i] * len / scale).ceil() as usize;
                    if panels * PANEL <= base {
                        GaussLegendre::new(base).on_interval(p.lo[i], p.hi[i]).collect()
                    } else {
                        composite(p.lo[i], p.hi[i], panels, PANEL)
                    }
                })
                .collect();
            for (u, w) in tensor(&rules) {
                out.push(self.node(k, u, w)?);
            }
        }
        Ok(out)
    }

    /// Largest |∂x/∂uᵢ| over a grid on the patch, padded by 25%.
    fn max_speeds(&self, patch: usize) -> Result<Vec<f64>> {
        let p = &self.patches[patch];
        let grid: Vec<Vec<(f64, f64)>> = (0..self.m)
            .map(|i| GaussLegendre::new(24).on_interval(p.lo[i], p.hi[i]).collect())
            .collect();
        let mut best = vec![0.0f64; self.m];
        for (u, _) in tensor(&grid) {
            let (_, cols) = self.tangent(patch, &u)?;
            for (b, c) in best.iter_mut().zip(&cols) {
                *b = b.max(c.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        Ok(best.into_iter().map(|b| 1.25 * b).collect())
    }

    /// Orbit-reduced nodes: integrate the orbit coordinate only, carrying the
    /// fibre volume in the weight. Valid for integrands invariant under the symmetry.
    pub fn sample_reduced(&self, order: usize) -> Result<Vec<QuadratureNode>> {
        if !self.is_symmetric() {
            return Err(ManifoldError::NotApplicable("spec has no usable rotational symmetry".into()));
        }
        let mut out = vec![];
        for (k, p) in self.patches.iter().enumerate() {
            let sym = self.symmetry_of(p).expect("checked");
            match sym.free {
                None => {
                    let u = sym.representative.clone();
                    out.push(self.node(k, u, sym.factor)?);
                }
                Some(free) => {
                    let pts = points_for_interval(order, p.hi[free] - p.lo[free]);
                    for (t, w) in GaussLegendre::new(pts).on_interval(p.lo[free], p.hi[free]) {
                        let mut u = sym.representative.clone();
                        u.insert(free, t);
                        out.push(self.node(k, u, w * sym.factor)?);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Reduced nodes when the symmetry allows, full nodes otherwise.
    pub fn nodes_reduced_or_full(&self, order: usize) -> Result<Vec<QuadratureNode>> {
        if self.is_symmetric() {
            self.sample_reduced(order)
        } else {
            self.sample_quadrature(order)
        }
    }

    /// Total m-volume.
    pub fn volume(&self, order: usize) -> Result<f64> {
        Ok(self.nodes_reduced_or_full(order)?.iter().map(|n| n.w).sum())
    }

    /// Enclosed n-volume of a body, (1/n)∫⟨x, ν⟩ over the boundary.
    pub fn enclosed_volume(&self, order: usize) -> Result<f64> {
        if !self.is_hypersurface() {
            return Err(ManifoldError::NotApplicable("enclosed volume needs a hypersurface".into()));
        }
        let nodes = self.nodes_reduced_or_full(order)?;
        Ok(nodes
            .iter()
            .map(|nd| {
                let nu = nd.normal.as_ref().expect("normal");
                nd.w * nd.x.iter().zip(nu).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum::<f64>()
            / self.n as f64)
    }

    /// Largest distance between sample points.
    pub fn diameter(&self) -> Result<f64> {
        let nodes = self.sample_quadrature(6)?;
        let mut d: f64 = 0.0;
        for a in &nodes {
            for b in &nodes {
                d = d.max(dist(&a.x, &b.x));
            }
        }
        Ok(d)
    }

    /// 1/max‖h‖ over sample frames.
    pub fn reach_estimate(&self, order: usize) -> Result<f64> {
        let nodes = self.nodes_reduced_or_full(order)?;
        let mut hmax: f64 = 0.0;
        for nd in &nodes {
            let f = self.curvature_frame(nd.patch, &nd.u)?;
            hmax = hmax.max(f.h_norm_sq.sqrt());
        }
        Ok(if hmax > 0.0 { 1.0 / hmax } else { f64::INFINITY })
    }

    /// Second- to fourth-order local data at a patch point.
    pub fn curvature_frame(&self, patch: usize, u: &[f64]) -> Result<CurvatureFrame> {
        self.require_patches()?;
        let jets = self.jets(patch, u, FRAME_DEGREE)?;
        frame_from_jets(&jets, self.patches[patch].sign, self.is_hypersurface())
            .map_err(|e| match e {
                FrameError::Rank => ManifoldError::RankDeficient { patch, u: u.to_vec() },
            })
    }

    /// A chart around the point `u` of `patch` whose coordinate singularities
    /// are far from it (ellipsoid patches are re-centred by a rotation).
    pub fn local_chart(&self, patch: usize, u: &[f64]) -> LocalChart<'_> {
        let p = &self.patches[patch];
        if let PatchMap::Ellipsoid(axes) = &p.map {
            let k = axes.len();
            let q: Vec<f64> = hyperspherical(&vec![1.0; k], u);
            let center: Vec<f64> = if self.m == 1 {
                vec![0.0]
            } else {
                let mut c = vec![PI / 2.0; self.m];
                c[self.m - 1] = 0.0;
                c
            };
            let mut v = q.clone();
            v[0] -= 1.0;
            let vv: f64 = v.iter().map(|a| a * a).sum();
            let mut r = DMatrix::identity(k, k);
            if vv > 1e-30 {
                let h = DMatrix::identity(k, k) - DMatrix::from_fn(k, k, |i, j| 2.0 * v[i] * v[j] / vv);
                let mut d = DMatrix::identity(k, k);
                d[(k - 1, k - 1)] = -1.0;
                r = h * d;
            }
            return LocalChart { spec: self, patch, rotation: Some(r), center };
        }
        LocalChart { spec: self, patch, rotation: None, center: u.to_vec() }
    }

    /// |∇H|² = g^{αβ}∂_αH ∂_βH computed in the patch coordinates (hypersurfaces).
    pub fn grad_mean_curvature_sq(&self, patch: usize, u: &[f64]) -> Result<f64> {
        if !self.is_hypersurface() {
            return Err(ManifoldError::NotApplicable("|∇H|² needs a hypersurface".into()));
        }
        let p = self.jets(patch, u, 3)?;
        let (m, n) = (self.m, self.n);
        let cols: Vec<Vec<Jet>> = (0..m).map(|i| p.iter().map(|c| c.partial(i)).collect()).collect();
        let g: Vec<Vec<Jet>> = (0..m).map(|i| (0..m).map(|j| dot_jets(&cols[i], &cols[j])).collect()).collect();
        let ginv = jet_inverse(&g);
        // generalized cross product of the tangent columns
        let mut nu: Vec<Jet> = Vec::with_capacity(n);
        for k in 0..n {
            let minor: Vec<Vec<Jet>> =
                (0..n).filter(|&r| r != k).map(|r| (0..m).map(|i| cols[i][r].clone()).collect()).collect();
            let d = jet_det(&minor);
            nu.push(if (k + m) % 2 == 0 { d } else { -d });
        }
        let len = dot_jets(&nu, &nu).sqrt().recip();
        let mut nu: Vec<Jet> = nu.into_iter().map(|c| c * len.clone()).collect();
        let (_, jac) = self.tangent(patch, u)?;
        let reference = first_order_frame(&jac, n, self.patches[patch].sign)
            .and_then(|f| f.normal)
            .ok_or_else(|| ManifoldError::DegenerateJacobian { patch, u: u.to_vec() })?;
        let agree: f64 = nu.iter().zip(&reference).map(|(a, b)| a.value() * b).sum();
        if agree < 0.0 {
            nu = nu.into_iter().map(|c| -c).collect();
        }
        let mut h = Jet::zero(p[0].layout);
        for i in 0..m {
            for j in 0..m {
                let pij: Vec<Jet> = cols[i].iter().map(|c| c.partial(j)).collect();
                h = h + &ginv[i][j] * &dot_jets(&pij, &nu);
            }
        }
        let grad: Vec<f64> = (0..m).map(|i| h.coeff(&[i])).collect();
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                acc += ginv[i][j].value() * grad[i] * grad[j];
            }
        }
        Ok(acc)
    }
}

/// Coordinates around one point of a patch; see [`ManifoldSpec::local_chart`].
pub struct LocalChart<'a> {
    spec: &'a ManifoldSpec,
    patch: usize,
    rotation: Option<DMatrix<f64>>,
    /// Chart coordinates of the point the chart was built around.
    pub center: Vec<f64>,
}

impl LocalChart<'_> {
    /// Position and Jacobian columns in chart coordinates.
    pub fn tangent(&self, u: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let Some(r) = &self.rotation else {
            return self.spec.tangent(self.patch, u);
        };
        let PatchMap::Ellipsoid(axes) = &self.spec.patches[self.patch].map else { unreachable!() };
        let m = self.spec.m;
        let layout = JetLayout::get(m, 1);
        let vars: Vec<Jet> = (0..m).map(|i| Jet::variable(layout, i, u[i])).collect();
        let q = hyperspherical(&vec![1.0; axes.len()], &vars);
        let rotated: Vec<Jet> = (0..axes.len())
            .map(|i| {
                let mut acc = Jet::zero(layout);
                for (j, qj) in q.iter().enumerate() {
                    acc = acc + qj.clone() * r[(i, j)];
                }
                acc * axes[i]
            })
            .collect();
        let jets = self.spec.map.apply(rotated);
        let x = jets.iter().map(|j| j.value()).collect();
        let cols = (0..m).map(|i| jets.iter().map(|j| j.coeff(&[i])).collect()).collect();
        Ok((x, cols))
    }

    pub fn sign(&self) -> f64 {
        self.spec.patches[self.patch].sign
    }
}

fn positive(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(())
    } else {
        Err(ManifoldError::Config(format!("lengths must be positive, got {v:?}")))
    }
}

fn points_for_interval(order: usize, len: f64) -> usize {
    ((order as f64) * (len / PI).max(1.0)).round() as usize
}

fn tensor(rules: &[Vec<(f64, f64)>]) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(vec![], 1.0)];
    for rule in rules {
        let mut next = Vec::with_capacity(out.len() * rule.len());
        for (u, w) in &out {
            for (t, wt) in rule {
                let mut v = u.clone();
                v.push(*t);
                next.push((v, w * wt));
            }
        }
        out = next;
    }
    out
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn dot_jets(a: &[Jet], b: &[Jet]) -> Jet {
    let mut acc = Jet::zero(a[0].layout);
    for (x, y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

/// A sample point with its integration weight.
#[derive(Clone, Debug)]
pub struct QuadratureNode {
    pub patch: usize,
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    /// Weight including the volume element.
    pub w: f64,
    /// Outward unit normal (hypersurfaces only).
    pub normal: Option<Vec<f64>>,
    /// Oriented orthonormal tangent basis.
    pub tangent: Vec<Vec<f64>>,
}

pub(crate) struct FirstOrder {
    pub volume_element: f64,
    pub tangent: Vec<Vec<f64>>,
    pub normal: Option<Vec<f64>>,
    pub normals: Vec<Vec<f64>>,
}

/// Orthonormal frame from Jacobian columns: tangent basis oriented like the
/// parametrization (or with det[E|ν] > 0 for hypersurfaces), plus normals.
pub(crate) fn first_order_frame(cols: &[Vec<f64>], n: usize, sign: f64) -> Option<FirstOrder> {
    let m = cols.len();
    let jac = DMatrix::from_fn(n, m, |r, c| cols[c][r]);
    let gram = jac.transpose() * &jac;
    let det_g = gram.determinant();
    let scale = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>()).fold(0.0, f64::max).max(1e-300);
    if !(det_g > 1e-24 * scale.powi(m as i32)) {
        return None;
    }
    let mut aug = DMatrix::zeros(n, m + n);
    aug.view_mut((0, 0), (n, m)).copy_from(&jac);
    aug.view_mut((0, m), (n, n)).copy_from(&DMatrix::identity(n, n));
    // Gram–Schmidt twice over [J | I], keeping the first n independent columns.
    let mut basis: Vec<DVector<f64>> = vec![];
    for c in 0..m + n {
        let mut v = aug.column(c).clone_owned();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if c < m || norm > 1e-8 {
            if norm < 1e-14 {
                return None;
            }
            basis.push(v / norm);
        }
        if basis.len() == n {
            break;
        }
    }
    let mut e: Vec<DVector<f64>> = basis[..m].to_vec();
    let mut nrm: Vec<DVector<f64>> = basis[m..].to_vec();
    let orient = |e: &[DVector<f64>], extra: &[DVector<f64>]| {
        let mut mat = DMatrix::zeros(n, n);
        for (k, v) in e.iter().chain(extra).enumerate() {
            mat.set_column(k, v);
        }
        mat.determinant()
    };
    let normal = if m + 1 == n {
        // parametrization normal: det[J | ν] > 0
        let mut full = DMatrix::zeros(n, n);
        full.view_mut((0, 0), (n, m)).copy_from(&jac);
        full.set_column(m, &nrm[0]);
        if full.determinant() < 0.0 {
            nrm[0] = -nrm[0].clone();
        }
        nrm[0] *= sign;
        if orient(&e, &nrm) < 0.0 {
            e[m - 1] = -e[m - 1].clone();
        }
        Some(nrm[0].iter().copied().collect())
    } else {
        let et = DMatrix::from_fn(m, m, |r, c| e[r].dot(&jac.column(c)));
        if et.determinant() * sign < 0.0 {
            e[m - 1] = -e[m - 1].clone();
        }
        if orient(&e, &nrm) < 0.0 {
            let last = nrm.len() - 1;
            nrm[last] = -nrm[last].clone();
        }
        None
    };
    Some(FirstOrder {
        volume_element: det_g.sqrt(),
        tangent: e.iter().map(|v| v.iter().copied().collect()).collect(),
        normal,
        normals: nrm.iter().map(|v| v.iter().copied().collect()).collect(),
    })
}

/// Richardson-extrapolated central differences of a user map, packed as jets.
/// Step for derivatives of total order k: ε^{1/(k+4)}.
fn numeric_jets(f: &dyn Fn(&[f64]) -> Vec<f64>, u: &[f64], layout: &'static JetLayout) -> Result<Vec<Jet>> {
    let base = f(u);
    let n = base.len();
    let mut out: Vec<Jet> = base.iter().map(|&v| Jet::constant(layout, v)).collect();
    for (k, mono) in layout.monomials.iter().enumerate().skip(1) {
        let order: usize = mono.iter().map(|&e| e as usize).sum();
        let h = f64::EPSILON.powf(1.0 / (order as f64 + 4.0));
        if h * 0.5 <= f64::EPSILON * u.iter().fold(1.0f64, |a, b| a.max(b.abs())) {
            return Err(ManifoldError::StepUnderflow(format!("order {order}")));
        }
        let d1 = mixed_difference(f, u, mono, h, n);
        let d2 = mixed_difference(f, u, mono, h / 2.0, n);
        let fact: f64 = mono.iter().map(|&e| (1..=e as u32).product::<u32>() as f64).product();
        for c in 0..n {
            // central stencils are second order; one Richardson step
            let d = (4.0 * d2[c] - d1[c]) / 3.0;
            out[c].coeffs[k] = d / fact;
        }
    }
    Ok(out)
}

fn stencil(order: u8) -> Vec<(i32, f64)> {
    match order {
        0 => vec![(0, 1.0)],
        1 => vec![(-1, -0.5), (1, 0.5)],
        2 => vec![(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => vec![(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => vec![(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => unreachable!("jets stop at fourth order"),
    }
}

fn mixed_difference(f: &dyn Fn(&[f64]) -> Vec<f64>, u: &[f64], mono: &[u8], h: f64, n: usize) -> Vec<f64> {
    let stencils: Vec<Vec<(i32, f64)>> = mono.iter().map(|&e| stencil(e)).collect();
    let order: i32 = mono.iter().map(|&e| e as i32).sum();
    let mut acc = vec![0.0; n];
    let mut idx = vec![0usize; u.len()];
    loop {
        let mut w = 1.0;
        let mut v = u.to_vec();
        for (i, s) in stencils.iter().enumerate() {
            let (off, c) = s[idx[i]];
            w *= c;
            v[i] += off as f64 * h;
        }
        let val = f(&v);
        for c in 0..n {
            acc[c] += w * val[c];
        }
        let mut i = 0;
        loop {
            if i == idx.len() {
                let scale = h.powi(order);
                return acc.into_iter().map(|a| a / scale).collect();
            }
            idx[i] += 1;
            if idx[i] < stencils[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Local geometry at a point, in a tangent frame aligned with principal
/// directions for hypersurfaces.
#[derive(Clone, Debug)]
pub struct CurvatureFrame {
    pub m: usize,
    pub n: usize,
    pub point: Vec<f64>,
    /// Oriented orthonormal tangent basis e₁..e_m.
    pub tangent: Vec<Vec<f64>>,
    /// Orthonormal normal basis; for hypersurfaces the outward normal.
    pub normals: Vec<Vec<f64>>,
    /// Principal curvatures, descending (hypersurfaces only).
    pub kappa: Vec<f64>,
    /// Second fundamental form h_ij as ambient normal vectors.
    pub h: Vec<Vec<Vec<f64>>>,
    /// Mean curvature vector H = Σ h_ii.
    pub mean_curvature: Vec<f64>,
    pub h_norm_sq: f64,
    pub mean_sq: f64,
    pub scalar_curvature: f64,
    /// Graph functions f^σ(s) over the tangent frame, one per normal.
    pub graph: Vec<Jet>,
    pub laplacians: Laplacians,
}

/// Laplacians at the frame origin from the closed origin formulas.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Laplacians {
    pub delta_sc: f64,
    pub delta_h_sq: f64,
    /// Hypersurfaces only.
    pub delta_h: Option<f64>,
    /// Hypersurfaces only; Σ_α (Σ_i f_iiα)².
    pub grad_h_sq: Option<f64>,
}

#[derive(Debug)]
enum FrameError {
    Rank,
}

fn frame_from_jets(p: &[Jet], sign: f64, hypersurface: bool) -> std::result::Result<CurvatureFrame, FrameError> {
    let n = p.len();
    let layout = p[0].layout;
    let m = layout.nvars;
    let x: Vec<f64> = p.iter().map(|j| j.value()).collect();
    let cols: Vec<Vec<f64>> = (0..m).map(|i| p.iter().map(|j| j.coeff(&[i])).collect()).collect();
    let first = first_order_frame(&cols, n, sign).ok_or(FrameError::Rank)?;
    let e = first.tangent.clone();
    let nb = first.normals.clone();
    let dp: Vec<Jet> = p.iter().map(|j| j.clone() - j.value()).collect();
    let project = |basis: &[Vec<f64>]| -> Vec<Jet> {
        basis
            .iter()
            .map(|b| {
                let mut acc = Jet::zero(layout);
                for (bi, dj) in b.iter().zip(&dp) {
                    if *bi != 0.0 {
                        acc = acc + dj.clone() * *bi;
                    }
                }
                acc
            })
            .collect()
    };
    let s_of_u = project(&e);
    let f_of_u = project(&nb);
    let lin = DMatrix::from_fn(m, m, |k, j| s_of_u[k].coeff(&[j]));
    let linv = lin.try_inverse().ok_or(FrameError::Rank)?;
    let nonlinear: Vec<Jet> = s_of_u
        .iter()
        .map(|s| {
            let mut t = s.clone();
            for j in 0..m {
                let idx = layout.index_of_vars(&[j]).expect("linear monomial");
                t.coeffs[idx] = 0.0;
            }
            t
        })
        .collect();
    let svars: Vec<Jet> = (0..m).map(|k| Jet::variable(layout, k, 0.0)).collect();
    let apply_linv = |rhs: &[Jet]| -> Vec<Jet> {
        (0..m)
            .map(|i| {
                let mut acc = Jet::zero(layout);
                for (k, r) in rhs.iter().enumerate() {
                    acc = acc + r.clone() * linv[(i, k)];
                }
                acc
            })
            .collect()
    };
    let mut du = apply_linv(&svars);
    for _ in 0..layout.degree {
        let nl = Jet::compose_many(&nonlinear, &du);
        let rhs: Vec<Jet> = svars.iter().zip(&nl).map(|(s, q)| s.clone() - q.clone()).collect();
        du = apply_linv(&rhs);
    }
    let mut graph = Jet::compose_many(&f_of_u, &du);
    let mut tangent = e;
    let mut kappa = vec![];
    if hypersurface {
        let hess = DMatrix::from_fn(m, m, |i, j| graph[0].derivative(&[i, j]));
        let eig = SymmetricEigen::new(hess);
        let mut pairs: Vec<(f64, Vec<f64>)> = (0..m)
            .map(|k| {
                let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                let lead = v.iter().enumerate().fold(0, |b, (i, x)| if x.abs() > v[b].abs() + 1e-12 { i } else { b });
                if v[lead] < 0.0 {
                    v.iter_mut().for_each(|c| *c = -*c);
                }
                (eig.eigenvalues[k], v)
            })
            .collect();
        let tol = 1e-10 * pairs.iter().fold(1.0f64, |a, (l, _)| a.max(l.abs()));
        pairs.sort_by(|a, b| {
            if (a.0 - b.0).abs() > tol {
                b.0.total_cmp(&a.0)
            } else {
                b.1.iter().zip(&a.1).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
            }
        });
        let mut q = DMatrix::from_fn(m, m, |r, c| pairs[c].1[r]);
        if q.determinant() < 0.0 {
            for r in 0..m {
                q[(r, m - 1)] = -q[(r, m - 1)];
            }
        }
        let inner: Vec<Jet> = (0..m)
            .map(|k| {
                let mut acc = Jet::zero(layout);
                for j in 0..m {
                    acc = acc + svars[j].clone() * q[(k, j)];
                }
                acc
            })
            .collect();
        graph = Jet::compose_many(&graph, &inner);
        tangent = (0..m)
            .map(|j| (0..n).map(|r| (0..m).map(|k| q[(k, j)] * tangent[k][r]).sum()).collect())
            .collect();
        kappa = (0..m).map(|i| graph[0].derivative(&[i, i])).collect();
    }
    let derivs = GraphDerivatives::new(&graph);
    let codim = graph.len();
    let h: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| (0..n).map(|r| (0..codim).map(|s| derivs.f2[i][j][s] * nb[s][r]).sum()).collect())
                .collect()
        })
        .collect();
    let mean: Vec<f64> = (0..n).map(|r| (0..m).map(|i| h[i][i][r]).sum()).collect();
    let h_norm_sq = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| derivs.ip2(i, j, i, j)).sum();
    let mean_sq = mean.iter().map(|v| v * v).sum();
    let mut sc = 0.0;
    for i in 0..m {
        for l in 0..m {
            sc += derivs.ip2(l, l, i, i) - derivs.ip2(i, l, i, l);
        }
    }
    let laplacians = derivs.laplacians(hypersurface);
    Ok(CurvatureFrame {
        m,
        n,
        point: x,
        tangent,
        normals: nb,
        kappa,
        h,
        mean_curvature: mean,
        h_norm_sq,
        mean_sq,
        scalar_curvature: sc,
        graph,
        laplacians,
    })
}

/// Derivative tensors of the graph functions at the origin.
pub struct GraphDerivatives {
    pub m: usize,
    pub codim: usize,
    pub f2: Vec<Vec<Vec<f64>>>,
    pub f3: Vec<Vec<Vec<Vec<f64>>>>,
    pub f4: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl GraphDerivatives {
    pub fn new(graph: &[Jet]) -> Self {
        let m = graph[0].layout.nvars;
        let codim = graph.len();
        let r = 0..m;
        let f2 = r.clone().map(|i| (0..m).map(|j| graph.iter().map(|g| g.derivative(&[i, j])).collect()).collect()).collect();
        let f3 = r
            .clone()
            .map(|i| {
                (0..m)
                    .map(|j| (0..m).map(|k| graph.iter().map(|g| g.derivative(&[i, j, k])).collect()).collect())
                    .collect()
            })
            .collect();
        let f4 = r
            .map(|i| {
                (0..m)
                    .map(|j| {
                        (0..m)
                            .map(|k| (0..m).map(|l| graph.iter().map(|g| g.derivative(&[i, j, k, l])).collect()).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        GraphDerivatives { m, codim, f2, f3, f4 }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// ⟨f_ij, f_kl⟩
    pub fn ip2(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        Self::dot(&self.f2[i][j], &self.f2[k][l])
    }

    /// ΔSc, Δ|H|² in general codimension; ΔH and |∇H|² for hypersurfaces.
    pub fn laplacians(&self, hypersurface: bool) -> Laplacians {
        let m = self.m;
        let ip = |a: &[f64], b: &[f64]| Self::dot(a, b);
        let f2 = &self.f2;
        let f3 = &self.f3;
        let f4 = &self.f4;
        let trace: Vec<f64> = (0..self.codim).map(|s| (0..m).map(|i| f2[i][i][s]).sum()).collect();
        // B_ij = Σ_k ⟨f_ik, f_jk⟩
        let b: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| (0..m).map(|k| ip(&f2[i][k], &f2[j][k])).sum()).collect()).collect();
        let mut t = 0.0;
        for i in 0..m {
            for j in 0..m {
                let hij = ip(&trace, &f2[i][j]);
                t += -4.0 * hij * b[i][j] - 2.0 * hij * hij + 4.0 * b[i][j] * b[i][j];
                for k in 0..m {
                    for l in 0..m {
                        t += 2.0 * self.ip2(i, j, k, l).powi(2);
                    }
                }
            }
        }
        // ∂_k² ⟨f_jj, f_ll⟩ − ∂_k² ⟨f_jl, f_jl⟩
        for k in 0..m {
            for j in 0..m {
                for l in 0..m {
                    t += ip(&f4[j][j][k][k], &f2[l][l]) + 2.0 * ip(&f3[j][j][k], &f3[l][l][k]) + ip(&f2[j][j], &f4[l][l][k][k]);
                    t -= 2.0 * ip(&f4[j][l][k][k], &f2[j][l]) + 2.0 * ip(&f3[j][l][k], &f3[j][l][k]);
                }
            }
        }
        let delta_sc = t;
        let mut dh = 0.0;
        for k in 0..m {
            for l in 0..m {
                let tk = ip(&trace, &f2[k][l]);
                dh -= 2.0 * tk * tk;
            }
        }
        for i in 0..m {
            for j in 0..m {
                dh -= 4.0 * b[i][j] * ip(&f2[i][j], &trace);
            }
        }
        let grad: Vec<Vec<f64>> = (0..m).map(|k| (0..self.codim).map(|s| (0..m).map(|i| f3[i][i][k][s]).sum()).collect()).collect();
        let grad_sq: f64 = grad.iter().map(|g| ip(g, g)).sum();
        dh += 2.0 * grad_sq;
        for i in 0..m {
            for l in 0..m {
                dh += 2.0 * ip(&trace, &f4[i][i][l][l]);
            }
        }
        let (delta_h, grad_h_sq) = if hypersurface {
            let mut v = 0.0;
            for i in 0..m {
                for a in 0..m {
                    v += f4[i][i][a][a][0] - f2[i][i][0] * f2[a][a][0].powi(2);
                }
                v -= 2.0 * f2[i][i][0].powi(3);
            }
            (Some(v), Some(grad_sq))
        } else {
            (None, None)
        };
        Laplacians { delta_sc, delta_h_sq: dh, delta_h, grad_h_sq }
    }
}

impl CurvatureFrame {
    pub fn is_hypersurface(&self) -> bool {
        self.m + 1 == self.n
    }

    /// Scalar mean curvature Σκ_i (hypersurfaces).
    pub fn mean_scalar(&self) -> f64 {
        self.kappa.iter().sum()
    }

    /// Coefficient of u_iu_ju_k in the graph (first normal).
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.graph[0].coeff(&[i, j, k])
    }

    /// Coefficient of u_iu_ju_ku_l in the graph (first normal).
    pub fn d(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.graph[0].coeff(&[i, j, k, l])
    }

    pub fn derivatives(&self) -> GraphDerivatives {
        GraphDerivatives::new(&self.graph)
    }

    /// Laplacians recomputed from the jets of the curvature fields in graph
    /// coordinates (independent of the origin formulas).
    pub fn laplacians_from_fields(&self) -> Laplacians {
        let m = self.m;
        let layout = self.graph[0].layout;
        let fi: Vec<Vec<Jet>> = (0..m).map(|i| self.graph.iter().map(|g| g.partial(i)).collect()).collect();
        let fij: Vec<Vec<Vec<Jet>>> =
            (0..m).map(|i| (0..m).map(|j| fi[i].iter().map(|g| g.partial(j)).collect()).collect()).collect();
        let g: Vec<Vec<Jet>> = (0..m)
            .map(|i| (0..m).map(|j| dot_jets(&fi[i], &fi[j]) + if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let ginv = jet_inverse(&g);
        // ⟨f_ij, f_a⟩
        let mixed: Vec<Vec<Vec<Jet>>> =
            (0..m).map(|i| (0..m).map(|j| (0..m).map(|a| dot_jets(&fij[i][j], &fi[a])).collect()).collect()).collect();
        let ii = |i: usize, j: usize, k: usize, l: usize| -> Jet {
            let mut v = dot_jets(&fij[i][j], &fij[k][l]);
            for a in 0..m {
                for bb in 0..m {
                    v = v - &(&mixed[i][j][a] * &ginv[a][bb]) * &mixed[k][l][bb];
                }
            }
            v
        };
        let mut hsq = Jet::zero(layout);
        let mut norm = Jet::zero(layout);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let v = ii(i, j, k, l);
                        hsq = hsq + &(&ginv[i][j] * &ginv[k][l]) * &v;
                        norm = norm + &(&ginv[i][k] * &ginv[j][l]) * &v;
                    }
                }
            }
        }
        let sc = hsq.clone() - norm;
        let lap = |eta: &Jet| (0..m).map(|k| 2.0 * eta.coeff(&[k, k])).sum::<f64>();
        let (delta_h, grad_h_sq) = if self.is_hypersurface() {
            let gdet = dot_jets(&fi.iter().map(|v| v[0].clone()).collect::<Vec<_>>(), &fi.iter().map(|v| v[0].clone()).collect::<Vec<_>>()) + 1.0;
            let inv_sqrt = gdet.powf(-0.5);
            let mut hm = Jet::zero(layout);
            for i in 0..m {
                for j in 0..m {
                    hm = hm + &(&ginv[i][j] * &fij[i][j][0]) * &inv_sqrt;
                }
            }
            let grad: f64 = (0..m).map(|k| hm.coeff(&[k]).powi(2)).sum();
            (Some(lap(&hm)), Some(grad))
        } else {
            (None, None)
        };
        Laplacians { delta_sc: lap(&sc), delta_h_sq: lap(&hsq), delta_h, grad_h_sq }
    }
}

/// Grassmann inner product of the oriented tangent planes: det(⟨e_i, e′_j⟩).
pub fn nu_weight(x_tangent: &[Vec<f64>], y_tangent: &[Vec<f64>]) -> f64 {
    let m = x_tangent.len();
    if m == 1 {
        return x_tangent[0].iter().zip(&y_tangent[0]).map(|(a, b)| a * b).sum();
    }
    let mat = DMatrix::from_fn(m, m, |i, j| x_tangent[i].iter().zip(&y_tangent[j]).map(|(a, b)| a * b).sum());
    mat.determinant()
}

/// The hypersurface forms of the Laplacians of a 4-dimensional frame in terms
/// of principal curvatures and the graph coefficients c, d.
pub fn hypersurface4_laplacians(frame: &CurvatureFrame) -> Result<Laplacians> {
    if frame.m != 4 || !frame.is_hypersurface() {
        return Err(ManifoldError::NotApplicable("needs a 4-dimensional hypersurface frame".into()));
    }
    let k = &frame.kappa;
    let h: f64 = k.iter().sum();
    let c = |i: usize, j: usize, l: usize| frame.c(i, j, l);
    let d = |i: usize, j: usize, a: usize, b: usize| frame.d(i, j, a, b);
    let mut delta_h = -2.0 * k.iter().map(|x| x.powi(3)).sum::<f64>() - h * k.iter().map(|x| x * x).sum::<f64>();
    for i in 0..4 {
        delta_h += 24.0 * d(i, i, i, i);
        for j in i + 1..4 {
            delta_h += 8.0 * d(i, i, j, j);
        }
    }
    // |∇H|² = Σ_α (Σ_i f_iiα)², f_ααα = 6c, f_iiα = 2c (i ≠ α)
    let mut grad = 0.0;
    for a in 0..4 {
        let mut s = 6.0 * c(a, a, a);
        for i in 0..4 {
            if i != a {
                s += 2.0 * c(i, i, a);
            }
        }
        grad += s * s;
    }
    let mut dsc = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            dsc += -8.0 * k[i] * k[j].powi(3) + 48.0 * c(i, i, i) * c(i, j, j) - 16.0 * c(i, j, j).powi(2);
        }
    }
    for i in 0..4 {
        for j in i + 1..4 {
            for kk in 0..4 {
                if kk == i || kk == j {
                    continue;
                }
                dsc += -4.0 * k[i] * k[j] * k[kk] * k[kk] + 16.0 * c(i, i, kk) * c(j, j, kk);
            }
            for l in j + 1..4 {
                dsc -= 12.0 * c(i, j, l).powi(2);
            }
            dsc += 8.0 * (2.0 * h - k[i] - k[j]) * d(i, i, j, j);
        }
        dsc += 48.0 * (h - k[i]) * d(i, i, i, i);
    }
    Ok(Laplacians { delta_sc: dsc, delta_h_sq: 2.0 * (h * delta_h + grad), delta_h: Some(delta_h), grad_h_sq: Some(grad) })
}

/// Per-node Laplacians over a spec.
pub fn laplacian_invariants(spec: &ManifoldSpec, nodes: &[QuadratureNode]) -> Result<Vec<Laplacians>> {
    nodes.iter().map(|nd| spec.curvature_frame(nd.patch, &nd.u).map(|f| f.laplacians)).collect()
}

/// Shape configuration document (JSON).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Parameter boxes replacing the default patch domains.
    #[serde(default)]
    pub patches: Option<Vec<PatchBox>>,
    /// "outward" (default) or "inward".
    #[serde(default)]
    pub orientation: Option<String>,
    /// Polygon vertices for kind "polygon_knot".
    #[serde(default)]
    pub vertices: Option<Vec<[f64; 3]>>,
    /// Axes for kinds "ellipsoid" and "ellipsoid_body".
    #[serde(default)]
    pub axes: Option<Vec<f64>>,
    #[serde(default)]
    pub transforms: Option<MobiusMap>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ShapeConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ManifoldError::Config(e.to_string()))
    }

    fn param(&self, key: &str) -> Result<f64> {
        self.params.get(key).copied().ok_or_else(|| ManifoldError::Config(format!("missing param '{key}'")))
    }

    fn param_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn dim(&self, key: &str) -> Result<usize> {
        let v = self.param(key)?;
        if v.fract() != 0.0 || v < 1.0 {
            return Err(ManifoldError::Config(format!("param '{key}' must be a positive integer")));
        }
        Ok(v as usize)
    }

    fn check_params(&self, allowed: &[&str]) -> Result<()> {
        for k in self.params.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(ManifoldError::Config(format!("unknown param '{k}' for kind '{}'", self.kind)));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<ManifoldSpec> {
        let mut spec = match self.kind.as_str() {
            "circle" => {
                self.check_params(&["r"])?;
                ManifoldSpec::circle(self.param_or("r", 1.0))?
            }
            "ellipse" => {
                self.check_params(&["a", "b"])?;
                ManifoldSpec::ellipse(self.param("a")?, self.param("b")?)?
            }
            "sphere" => {
                self.check_params(&["m", "r"])?;
                ManifoldSpec::sphere(self.dim("m")?, self.param_or("r", 1.0))?
            }
            "ellipsoid" => {
                self.check_params(&[])?;
                ManifoldSpec::ellipsoid(self.axes.clone().ok_or_else(|| ManifoldError::Config("missing axes".into()))?)?
            }
            "spheroid" => {
                self.check_params(&["a"])?;
                ManifoldSpec::spheroid(self.param("a")?)?
            }
            "torus" => {
                self.check_params(&["R", "r"])?;
                ManifoldSpec::torus(self.param("R")?, self.param("r")?)?
            }
            "clifford_torus" => {
                self.check_params(&["r1", "r2"])?;
                ManifoldSpec::clifford_torus(self.param_or("r1", 1.0), self.param_or("r2", 1.0))?
            }
            "polygon_knot" => {
                self.check_params(&[])?;
                ManifoldSpec::polygon_knot(
                    self.vertices.clone().ok_or_else(|| ManifoldError::Config("missing vertices".into()))?,
                )?
            }
            "ball" => {
                self.check_params(&["n", "r"])?;
                ManifoldSpec::ball(self.dim("n")?, self.param_or("r", 1.0))?
            }
            "ellipsoid_body" => {
                self.check_params(&[])?;
                ManifoldSpec::ellipsoid_body(self.axes.clone().ok_or_else(|| ManifoldError::Config("missing axes".into()))?)?
            }
            "spheroid_shell" => {
                // ℝ^{m+1} body between the m-spheroid with axes (1,…,1,a) and a centered sphere
                self.check_params(&["m", "a", "hole"])?;
                let m = self.dim("m")?;
                let mut outer = vec![1.0; m + 1];
                outer[m] = self.param("a")?;
                ManifoldSpec::shell(outer, vec![vec![self.param_or("hole", 0.5); m + 1]])?
            }
            other => return Err(ManifoldError::Config(format!("unknown shape kind '{other}'"))),
        };
        if let Some(boxes) = &self.patches {
            let b: Vec<(Vec<f64>, Vec<f64>)> = boxes.iter().map(|p| (p.lo.clone(), p.hi.clone())).collect();
            spec = spec.with_domains(&b)?;
        }
        if let Some(map) = &self.transforms {
            spec = spec.transformed(map)?;
        }
        match self.orientation.as_deref() {
            None | Some("outward") => {}
            Some("inward") => spec.patches.iter_mut().for_each(|p| p.sign = -p.sign),
            Some(o) => return Err(ManifoldError::Config(format!("unknown orientation '{o}'"))),
        }
        Ok(spec)
    }
}
