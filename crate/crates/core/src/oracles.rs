//! Closed-form reference values: complex gamma/beta, sphere volumes, the
//! exactly solved sphere/ball energies, spheroid energies and polygon residues.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::ops::Mul;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("z = {z} is a pole (residue {residue})")]
    Pole { z: Complex64, residue: Complex64 },
    #[error("pole of order {order} at {z}")]
    HigherOrderPole { z: Complex64, order: i32 },
    #[error("invalid argument: {0}")]
    Domain(String),
    #[error("closed form has no finite limit at a = 1")]
    Singular,
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Result of evaluating Γ: a finite value or a simple pole with its residue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaValue {
    Finite(Complex64),
    Pole { residue: f64 },
}

fn nonpositive_integer(z: Complex64) -> Option<u32> {
    if z.im == 0.0 && z.re <= 0.0 && z.re.fract() == 0.0 {
        Some((-z.re) as u32)
    } else {
        None
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

fn pole_residue(k: u32) -> f64 {
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign / factorial(k)
}

fn lanczos(z: Complex64) -> Complex64 {
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS[0], 0.0);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        x += *c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x
}

/// Complex gamma function; simple poles at the non-positive integers.
pub fn gamma(z: Complex64) -> GammaValue {
    if let Some(k) = nonpositive_integer(z) {
        return GammaValue::Pole { residue: pole_residue(k) };
    }
    GammaValue::Finite(gamma_regular(z))
}

fn gamma_regular(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        PI / ((PI * z).sin() * gamma_regular(Complex64::new(1.0, 0.0) - z))
    } else {
        lanczos(z)
    }
}

/// Reciprocal gamma, entire (zero at the non-positive integers).
pub fn rgamma(z: Complex64) -> Complex64 {
    if nonpositive_integer(z).is_some() {
        Complex64::new(0.0, 0.0)
    } else {
        1.0 / gamma_regular(z)
    }
}

pub fn gamma_real(x: f64) -> f64 {
    match gamma(Complex64::new(x, 0.0)) {
        GammaValue::Finite(v) => v.re,
        GammaValue::Pole { .. } => f64::NAN,
    }
}

/// Leading Laurent term c·(z − z₀)^order of a meromorphic factor at z₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leading {
    pub coeff: Complex64,
    pub order: i32,
}

impl Leading {
    pub fn regular(v: Complex64) -> Self {
        Leading { coeff: v, order: 0 }
    }

    pub fn real(v: f64) -> Self {
        Self::regular(Complex64::new(v, 0.0))
    }

    /// Value at z₀, or the structured pole error.
    pub fn value(self, z: Complex64) -> Result<Complex64, OracleError> {
        match self.order {
            0 => Ok(self.coeff),
            o if o > 0 => Ok(Complex64::new(0.0, 0.0)),
            -1 => Err(OracleError::Pole { z, residue: self.coeff }),
            o => Err(OracleError::HigherOrderPole { z, order: o }),
        }
    }

    pub fn residue(self, z: Complex64) -> Result<Complex64, OracleError> {
        match self.order {
            -1 => Ok(self.coeff),
            o if o >= 0 => Ok(Complex64::new(0.0, 0.0)),
            o => Err(OracleError::HigherOrderPole { z, order: o }),
        }
    }
}

impl Mul for Leading {
    type Output = Leading;
    fn mul(self, rhs: Leading) -> Leading {
        Leading { coeff: self.coeff * rhs.coeff, order: self.order + rhs.order }
    }
}

/// Γ(αz + β) at z₀.
pub fn gamma_leading(alpha: f64, beta: f64, z0: Complex64) -> Leading {
    match gamma(alpha * z0 + beta) {
        GammaValue::Finite(v) => Leading::regular(v),
        GammaValue::Pole { residue } => {
            Leading { coeff: Complex64::new(residue / alpha, 0.0), order: -1 }
        }
    }
}

/// 1/Γ(αz + β) at z₀.
pub fn rgamma_leading(alpha: f64, beta: f64, z0: Complex64) -> Leading {
    match gamma(alpha * z0 + beta) {
        GammaValue::Finite(v) => Leading::regular(1.0 / v),
        GammaValue::Pole { residue } => {
            Leading { coeff: Complex64::new(alpha / residue, 0.0), order: 1 }
        }
    }
}

/// αz + β at z₀.
pub fn linear_leading(alpha: f64, beta: f64, z0: Complex64) -> Leading {
    let v = alpha * z0 + beta;
    if v == Complex64::new(0.0, 0.0) {
        Leading { coeff: Complex64::new(alpha, 0.0), order: 1 }
    } else {
        Leading::regular(v)
    }
}

/// 1/(αz + β) at z₀.
pub fn inv_linear_leading(alpha: f64, beta: f64, z0: Complex64) -> Leading {
    let v = alpha * z0 + beta;
    if v == Complex64::new(0.0, 0.0) {
        Leading { coeff: Complex64::new(1.0 / alpha, 0.0), order: -1 }
    } else {
        Leading::regular(1.0 / v)
    }
}

/// Complex beta function B(a, b) = Γ(a)Γ(b)/Γ(a+b) as a leading term in a
/// common variable z where a = α_a z + β_a and b = β_b is constant.
pub fn beta_leading(alpha: f64, beta_a: f64, b: f64, z0: Complex64) -> Leading {
    gamma_leading(alpha, beta_a, z0)
        * gamma_leading(0.0, b, z0)
        * rgamma_leading(alpha, beta_a + b, z0)
}

pub fn beta(a: Complex64, b: Complex64) -> Result<Complex64, OracleError> {
    let lead = gamma_leading(1.0, 0.0, a)
        * gamma_leading(1.0, 0.0, b)
        * rgamma_leading(1.0, 0.0, a + b);
    lead.value(a)
}

/// Volume of the unit k-sphere in ℝ^{k+1}.
pub fn sphere_volume(k: usize) -> f64 {
    let h = (k as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / gamma_real(h)
}

/// Volume of the unit k-ball.
pub fn ball_volume(k: usize) -> f64 {
    let h = k as f64 / 2.0;
    PI.powf(h) / gamma_real(h + 1.0)
}

/// ∫_{S^{d−1}} Π w_i^{e_i} dv; zero when an exponent is odd.
pub fn sphere_moment(d: usize, exponents: &[usize]) -> f64 {
    if exponents.len() > d || exponents.iter().any(|e| e % 2 == 1) {
        return if exponents.len() > d { f64::NAN } else { 0.0 };
    }
    let half: Vec<f64> = exponents.iter().map(|&e| (e as f64 + 1.0) / 2.0).collect();
    let total: f64 = half.iter().sum::<f64>() + (d - exponents.len()) as f64 / 2.0;
    let num: f64 = half.iter().map(|&a| gamma_real(a)).product::<f64>()
        * gamma_real(0.5).powi((d - exponents.len()) as i32);
    2.0 * num / gamma_real(total)
}

fn pow2(z: Complex64) -> Complex64 {
    (z * std::f64::consts::LN_2).exp()
}

/// Energy function of the unit sphere S^{n−1} ⊂ ℝⁿ as a leading term at z.
pub fn beta_sphere_leading(n: usize, z: Complex64) -> Result<Leading, OracleError> {
    if n < 2 {
        return Err(OracleError::Domain(format!("sphere needs ambient dimension ≥ 2, got {n}")));
    }
    let nf = n as f64;
    let pre = pow2(z + nf - 2.0) * sphere_volume(n - 1) * sphere_volume(n - 2);
    Ok(Leading::regular(pre) * beta_leading(0.5, (nf - 1.0) / 2.0, (nf - 1.0) / 2.0, z))
}

/// Energy function of the unit ball Bⁿ as a leading term at z.
pub fn beta_ball_leading(n: usize, z: Complex64) -> Result<Leading, OracleError> {
    if n < 2 {
        return Err(OracleError::Domain(format!("ball needs dimension ≥ 2, got {n}")));
    }
    let nf = n as f64;
    let pre = pow2(z + nf) * sphere_volume(n - 1) * sphere_volume(n - 2) / (nf - 1.0)
        * gamma_real((nf + 1.0) / 2.0);
    Ok(Leading::regular(pre)
        * gamma_leading(0.5, (nf + 1.0) / 2.0, z)
        * inv_linear_leading(1.0, nf, z)
        * rgamma_leading(0.5, nf + 1.0, z))
}

/// Relative energy function ∫_{Bⁿ}∫_{S^{n−1}} |x−y|^z as a leading term at z.
pub fn beta_ball_relative_leading(n: usize, z: Complex64) -> Result<Leading, OracleError> {
    if n < 2 {
        return Err(OracleError::Domain(format!("ball needs dimension ≥ 2, got {n}")));
    }
    let nf = n as f64;
    let pre = pow2(z + nf - 1.0) * sphere_volume(n - 1) * sphere_volume(n - 2) / (nf - 1.0);
    Ok(Leading::regular(pre)
        * linear_leading(1.0, 2.0 * nf, z)
        * inv_linear_leading(1.0, nf, z)
        * beta_leading(0.5, (nf + 1.0) / 2.0, (nf + 1.0) / 2.0, z))
}

pub fn beta_sphere(n: usize, z: Complex64) -> Result<Complex64, OracleError> {
    beta_sphere_leading(n, z)?.value(z)
}

pub fn beta_ball(n: usize, z: Complex64) -> Result<Complex64, OracleError> {
    beta_ball_leading(n, z)?.value(z)
}

pub fn beta_ball_relative(n: usize, z: Complex64) -> Result<Complex64, OracleError> {
    beta_ball_relative_leading(n, z)?.value(z)
}

/// Finite part lim (F(w) − Res/(w−z₀)) by symmetric averaging around z₀ with
/// two Richardson steps; exact for the pole term, O(h⁶) otherwise.
pub fn symmetric_finite_part<F>(f: F, z0: f64) -> Complex64
where
    F: Fn(Complex64) -> Complex64,
{
    let avg = |h: f64| {
        (f(Complex64::new(z0 + h, 0.0)) + f(Complex64::new(z0 - h, 0.0))) * 0.5
    };
    let h = 2e-2;
    let a0 = avg(h);
    let a1 = avg(h / 2.0);
    let a2 = avg(h / 4.0);
    let b0 = (4.0 * a1 - a0) / 3.0;
    let b1 = (4.0 * a2 - a1) / 3.0;
    (16.0 * b1 - b0) / 15.0
}

/// arctan(√(a²−1))/√(a²−1), continued through a = 1 and into the a < 1 branch.
pub fn spheroid_t(a: f64) -> f64 {
    let u = a * a - 1.0;
    if u.abs() < 1e-3 {
        (0..12).map(|k| (-u).powi(k) / (2 * k + 1) as f64).sum()
    } else if u > 0.0 {
        u.sqrt().atan() / u.sqrt()
    } else {
        (-u).sqrt().atanh() / (-u).sqrt()
    }
}

/// Polynomial in A = a² (ascending coefficients) re-expanded in u = A − 1.
fn shift_to_u(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (k, &c) in p.iter().enumerate() {
        let mut binom = 1.0;
        for j in 0..=k {
            out[j] += c * binom;
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

/// (P(A) + Q(A)·T)/u for the bracket shape shared by the spheroid closed forms,
/// switching to the u-series near the round sphere.
fn bracket_over_u(a: f64, p: &[f64], q: &[f64]) -> Result<f64, OracleError> {
    let big_a = a * a;
    let u = big_a - 1.0;
    if u.abs() > 0.05 {
        let eval = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &x| acc * big_a + x);
        return Ok((eval(p) + eval(q) * spheroid_t(a)) / u);
    }
    const TERMS: usize = 28;
    let pu = shift_to_u(p);
    let qu = shift_to_u(q);
    let t: Vec<f64> = (0..TERMS).map(|k| (-1f64).powi(k as i32) / (2 * k + 1) as f64).collect();
    let mut series = vec![0.0; TERMS];
    for (i, &c) in pu.iter().enumerate() {
        series[i] += c;
    }
    for (i, &c) in qu.iter().enumerate() {
        for (j, &tj) in t.iter().enumerate() {
            if i + j < TERMS {
                series[i + j] += c * tj;
            }
        }
    }
    if series[0].abs() > 1e-9 * series.iter().map(|c| c.abs()).fold(0.0, f64::max) {
        return Err(OracleError::Singular);
    }
    Ok(series[1..].iter().rev().fold(0.0, |acc, &c| acc * u + c))
}

fn check_axis(a: f64) -> Result<(), OracleError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(OracleError::Domain(format!("spheroid axis must be positive, got {a}")));
    }
    Ok(())
}

/// Graham–Witten energy of the 4-dimensional spheroid x₁²+…+x₄²+x₅²/a² = 1.
pub fn spheroid_gw(a: f64) -> Result<f64, OracleError> {
    check_axis(a)?;
    let p = [-128.0, -16.0, -2376.0, -7778.0, 10613.0];
    let q = [0.0, 0.0, 0.0, 0.0, -4725.0 * 16.0 / 15.0, 4725.0];
    Ok(PI * PI / (17920.0 * a.powi(6)) * bracket_over_u(a, &p, &q)?)
}

/// Residue at z = −8 of the spheroid energy function.
pub fn spheroid_r8(a: f64) -> Result<f64, OracleError> {
    check_axis(a)?;
    let p = [-256.0, 1648.0, -2232.0, -1346.0, 1241.0];
    let q = [0.0, 0.0, 0.0, 0.0, 1575.0 * 8.0 / 5.0, -1575.0];
    Ok(PI.powi(4) / (40320.0 * a.powi(6)) * bracket_over_u(a, &p, &q)?)
}

/// ν-weighted residue at z = −8 of the spheroid, in the form with a minus
/// sign in front of the arctan term. This form is not consistent with the
/// sphere value and has no limit at a = 1; see [`spheroid_r8_nu_corrected`].
pub fn spheroid_r8_nu(a: f64) -> Result<f64, OracleError> {
    check_axis(a)?;
    let p = [-16.0, -24.0, -50.0, 105.0];
    let q = [0.0, 0.0, 0.0, 105.0 * 8.0 / 7.0, -105.0];
    Ok(PI.powi(4) / (384.0 * a.powi(4)) * bracket_over_u(a, &p, &q)?)
}

/// ν-weighted residue at z = −8 with the arctan term sign flipped, which
/// matches quadrature of the local formula and tends to 2π⁴/3 at a = 1.
pub fn spheroid_r8_nu_corrected(a: f64) -> Result<f64, OracleError> {
    check_axis(a)?;
    let p = [-16.0, -24.0, -50.0, 105.0];
    let q = [0.0, 0.0, 0.0, -105.0 * 8.0 / 7.0, 105.0];
    Ok(PI.powi(4) / (384.0 * a.powi(4)) * bracket_over_u(a, &p, &q)?)
}

/// Closed forms of the θ₁-reduced cubic curvature integrals of the 3-dimensional
/// spheroid in ℝ⁴ and of its image under the unit inversion.
pub fn spheroid3_cubic_closed(a: f64) -> (f64, f64) {
    let a2 = a * a;
    let r = 5.0 * (7.0 * a2 * a2 + 2.0 * a2 - 1.0) * PI / (16.0 * a2 * a2);
    let rt = (13.0 * a.powi(10) + 153.0 * a.powi(8) + 138.0 * a.powi(6) + 18.0 * a.powi(4)
        - 7.0 * a2
        + 5.0)
        * PI
        / (16.0 * a2 * a2 * (a2 + 1.0).powi(3));
    (r, rt)
}

/// Principal curvatures of the m-dimensional spheroid at polar angle θ
/// (outward normal): the meridian value first, then the m−1 equal values.
pub fn spheroid_curvatures(a: f64, theta: f64, m: usize) -> Vec<f64> {
    let big_a = theta.cos().powi(2) + a * a * theta.sin().powi(2);
    let mut k = vec![-a / big_a.sqrt(); m];
    k[0] = -a / big_a.powf(1.5);
    k
}

/// Principal curvatures of the unit-inversion image of the spheroid, ordered
/// as in [`spheroid_curvatures`].
pub fn inverted_spheroid_curvatures(a: f64, theta: f64, m: usize) -> Vec<f64> {
    let (s2, c2) = (theta.sin().powi(2), theta.cos().powi(2));
    let big_a = c2 + a * a * s2;
    let a2 = a * a;
    let mut k = vec![-a * (1.0 - (a2 - 1.0) * c2) / big_a.sqrt(); m];
    k[0] = -a * ((2.0 * a2 - 1.0) * s2 + (2.0 - a2) * c2) / big_a.powf(1.5);
    k
}

/// The two residues of a closed polygon: R(−1) = 2L and
/// R(−2) = −2k + 2Σ(π−θ_j)/sin θ_j with θ_j the interior angle at vertex j.
pub fn polygon_knot_residues(vertices: &[[f64; 3]]) -> Result<(f64, f64), OracleError> {
    let k = vertices.len();
    if k < 3 {
        return Err(OracleError::Domain("a closed polygon needs at least 3 vertices".into()));
    }
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let norm = |a: [f64; 3]| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let mut length = 0.0;
    let mut angle_sum = 0.0;
    for j in 0..k {
        let prev = vertices[(j + k - 1) % k];
        let next = vertices[(j + 1) % k];
        let v = vertices[j];
        let e_in = sub(v, prev);
        let e_out = sub(next, v);
        let (l_in, l_out) = (norm(e_in), norm(e_out));
        if l_in == 0.0 || l_out == 0.0 {
            return Err(OracleError::Domain(format!("repeated vertex at index {j}")));
        }
        length += l_out;
        let cos_turn = (e_in[0] * e_out[0] + e_in[1] * e_out[1] + e_in[2] * e_out[2]) / (l_in * l_out);
        let turn = cos_turn.clamp(-1.0, 1.0).acos();
        let theta = PI - turn;
        let s = theta.sin();
        if s.abs() < 1e-12 {
            return Err(OracleError::Domain(format!(
                "edges at vertex {j} are collinear or fold back (interior angle {theta})"
            )));
        }
        angle_sum += (PI - theta) / s;
    }
    Ok((2.0 * length, -2.0 * k as f64 + 2.0 * angle_sum))
}
