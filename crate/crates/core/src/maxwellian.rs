//! Maxwellians, the macro-micro projection, and the polynomial-times-Maxwellian
//! source term with its rejection sampler.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{HdpError, Result};
use crate::phase::{Sign, Vec3};
use crate::rng::stochastic_round;

/// Density, bulk velocity and temperature of a local Maxwellian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub rho: f64,
    pub u: Vec3,
    pub temp: f64,
}

impl Moments {
    pub fn new(rho: f64, u: Vec3, temp: f64) -> Self {
        Self { rho, u, temp }
    }

    pub fn at_rest(rho: f64, temp: f64) -> Self {
        Self { rho, u: Vec3::zeros(), temp }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.temp > 0.0) || !self.temp.is_finite() {
            return Err(HdpError::Domain(format!("temperature must be positive, got {}", self.temp)));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(HdpError::Domain(format!("density must be non-negative, got {}", self.rho)));
        }
        Ok(())
    }

    /// `M(v)` without validation; callers have checked the moments.
    pub fn density_at(&self, v: &Vec3) -> f64 {
        let c2 = (v - self.u).norm_squared();
        self.rho * (2.0 * PI * self.temp).powf(-1.5) * (-c2 / (2.0 * self.temp)).exp()
    }

    pub fn thermal_speed(&self) -> f64 {
        self.temp.sqrt()
    }

    /// One draw from `M / ρ`.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let s = self.temp.sqrt();
        Vec3::new(
            self.u[0] + s * rng.sample::<f64, _>(StandardNormal),
            self.u[1] + s * rng.sample::<f64, _>(StandardNormal),
            self.u[2] + s * rng.sample::<f64, _>(StandardNormal),
        )
    }
}

/// `ρ (2πT)^{-3/2} exp(-|v-u|²/2T)`.
pub fn eval_m(m: &Moments, v: &Vec3) -> Result<f64> {
    m.check()?;
    Ok(m.density_at(v))
}

/// `n` independent draws `u + √T ξ`.
pub fn sample_m<R: Rng + ?Sized>(m: &Moments, n: usize, rng: &mut R) -> Result<Vec<Vec3>> {
    m.check()?;
    Ok((0..n).map(|_| m.sample_one(rng)).collect())
}

/// The three bracketed moments of the projection:
/// `⟨ψ⟩`, `⟨(v-u)ψ⟩`, `⟨(|v-u|²/T - 3)ψ⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionCoeffs {
    pub m0: f64,
    pub m1: Vec3,
    pub m2: f64,
}

impl ProjectionCoeffs {
    pub fn zero() -> Self {
        Self { m0: 0.0, m1: Vec3::zeros(), m2: 0.0 }
    }

    pub fn add(&self, other: &ProjectionCoeffs) -> Self {
        Self { m0: self.m0 + other.m0, m1: self.m1 + other.m1, m2: self.m2 + other.m2 }
    }

    /// `Π_M ψ (v) = (M/ρ) [m0 + c·m1/T + (|c|²/T - 3) m2 / 6]`, `c = v - u`.
    pub fn eval(&self, m: &Moments, v: &Vec3) -> f64 {
        let c = v - m.u;
        let s = c.norm_squared() / m.temp - 3.0;
        m.density_at(v) / m.rho * (self.m0 + c.dot(&self.m1) / m.temp + s * self.m2 / 6.0)
    }

    /// Convert conserved-variable moments `(⟨ψ⟩, ⟨vψ⟩, ⟨|v|²/2 ψ⟩)` to the
    /// centered moments used by the projection.
    pub fn from_conserved(m: &Moments, mass: f64, momentum: Vec3, energy: f64) -> Self {
        let m1 = momentum - m.u * mass;
        let m2 = (2.0 * energy - 2.0 * m.u.dot(&momentum) + m.u.norm_squared() * mass) / m.temp
            - 3.0 * mass;
        Self { m0: mass, m1, m2 }
    }
}

pub fn project_coeffs(m: &Moments, psi: ProjectionCoeffs) -> Result<ProjectionCoeffs> {
    m.check()?;
    if !(m.rho > 0.0) {
        return Err(HdpError::Domain("projection needs a positive density".into()));
    }
    if !(psi.m0.is_finite() && psi.m2.is_finite() && psi.m1.iter().all(|x| x.is_finite())) {
        return Err(HdpError::Domain("non-finite projection moments".into()));
    }
    Ok(psi)
}

/// Degree-3 polynomial in `v`, kept in the structured form
///
/// `P(v) = v·(a + b s + G c/T) + e·c/T + q0 + q1·c/T + q2 s`
///
/// with `c = v - u` and `s = |c|²/T - 3`. The source term is `P(v) M(v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicVPoly {
    pub u: Vec3,
    pub temp: f64,
    pub a: Vec3,
    pub b: Vec3,
    pub g: Matrix3<f64>,
    pub e: Vec3,
    pub q0: f64,
    pub q1: Vec3,
    pub q2: f64,
}

impl CubicVPoly {
    pub fn zero(u: Vec3, temp: f64) -> Self {
        Self {
            u,
            temp,
            a: Vec3::zeros(),
            b: Vec3::zeros(),
            g: Matrix3::zeros(),
            e: Vec3::zeros(),
            q0: 0.0,
            q1: Vec3::zeros(),
            q2: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a == Vec3::zeros()
            && self.b == Vec3::zeros()
            && self.g == Matrix3::zeros()
            && self.e == Vec3::zeros()
            && self.q0 == 0.0
            && self.q1 == Vec3::zeros()
            && self.q2 == 0.0
    }

    pub fn eval(&self, v: &Vec3) -> f64 {
        let c = v - self.u;
        let ct = c / self.temp;
        let s = c.norm_squared() / self.temp - 3.0;
        v.dot(&(self.a + self.b * s + self.g * ct)) + self.e.dot(&ct) + self.q0 + self.q1.dot(&ct)
            + self.q2 * s
    }

    /// Monomial coefficients `(const, linear, quadratic, cubic)` of the same
    /// polynomial, with the quadratic part symmetric and the cubic part as a
    /// dense `3×3×3` tensor. Used to check the structured form.
    pub fn assembled(&self) -> AssembledPoly {
        let t = self.temp;
        let u = self.u;
        let uu = u.norm_squared();
        let mut p = AssembledPoly::default();
        // q terms
        p.c0 += self.q0 - self.q1.dot(&u) / t + self.q2 * (uu / t - 3.0);
        for i in 0..3 {
            p.c1[i] += self.q1[i] / t - 2.0 * self.q2 * u[i] / t;
            p.c2[i][i] += self.q2 / t;
        }
        // e·c/T
        p.c0 -= self.e.dot(&u) / t;
        for i in 0..3 {
            p.c1[i] += self.e[i] / t;
        }
        // v·a + v·b (|v|²/T - 2u·v/T + |u|²/T - 3) + v·G(v - u)/T
        let gu = self.g * u;
        for i in 0..3 {
            p.c1[i] += self.a[i] + self.b[i] * (uu / t - 3.0) - gu[i] / t;
            for j in 0..3 {
                let q = -2.0 * self.b[i] * u[j] / t + self.g[(i, j)] / t;
                p.c2[i][j] += 0.5 * q;
                p.c2[j][i] += 0.5 * q;
                p.c3[i][j][j] += self.b[i] / t;
            }
        }
        p
    }
}

/// Plain monomial representation of a cubic in three variables.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AssembledPoly {
    pub c0: f64,
    pub c1: [f64; 3],
    pub c2: [[f64; 3]; 3],
    pub c3: [[[f64; 3]; 3]; 3],
}

impl AssembledPoly {
    pub fn eval(&self, v: &Vec3) -> f64 {
        let mut s = self.c0;
        for i in 0..3 {
            s += self.c1[i] * v[i];
            for j in 0..3 {
                s += self.c2[i][j] * v[i] * v[j];
                for k in 0..3 {
                    s += self.c3[i][j][k] * v[i] * v[j] * v[k];
                }
            }
        }
        s
    }
}

/// x-derivatives of the Maxwellian moments at one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gradients {
    pub drho: f64,
    pub du: Vec3,
    pub dtemp: f64,
}

impl Gradients {
    pub fn zero() -> Self {
        Self { drho: 0.0, du: Vec3::zeros(), dtemp: 0.0 }
    }
}

/// Centered moments `⟨φ 𝒯M⟩` of the transport of the Maxwellian,
/// `𝒯 = v₁ ∂ₓ - E ∂_{v₁}`.
pub fn transport_m_moments(grad: &Gradients, m: &Moments, e_field: f64) -> ProjectionCoeffs {
    let (rho, u, t) = (m.rho, m.u, m.temp);
    let m0 = grad.drho * u[0] + rho * grad.du[0];
    let mut m1 = rho * u[0] * grad.du;
    m1[0] += grad.drho * t + rho * grad.dtemp + rho * e_field;
    let m2 = 3.0 * rho / t * u[0] * grad.dtemp + 2.0 * rho * grad.du[0];
    ProjectionCoeffs { m0, m1, m2 }
}

/// The source polynomial `P` with
/// `P M = -(I - Π_M)(𝒯M) + Π_M(𝒯 f_d)`.
///
/// `fd_div` holds `∂ₓ⟨v₁ φ f_d⟩` for `φ = (1, v, |v|²/2)`.
pub fn transport_source_coeffs(
    grad: &Gradients,
    m: &Moments,
    e_field: f64,
    fd_div: &[f64; 5],
) -> Result<CubicVPoly> {
    m.check()?;
    if !(m.rho > 0.0) {
        return Err(HdpError::Domain("source needs a positive density".into()));
    }
    let (rho, u, t) = (m.rho, m.u, m.temp);
    let tm = transport_m_moments(grad, m, e_field);
    let fd = ProjectionCoeffs::from_conserved(
        m,
        fd_div[0],
        Vec3::new(fd_div[1], fd_div[2], fd_div[3]),
        fd_div[4],
    );
    let total = tm.add(&fd);

    // -𝒯M/M = -v₁ [ρ'/ρ + T'/(2T) s + u'·c/T] - E c₁/T
    let e1 = Vec3::x();
    let mut g = Matrix3::zeros();
    g.set_row(0, &(-grad.du).transpose());
    Ok(CubicVPoly {
        u,
        temp: t,
        a: -grad.drho / rho * e1,
        b: -grad.dtemp / (2.0 * t) * e1,
        g,
        e: -e_field * e1,
        q0: total.m0 / rho,
        q1: total.m1 / rho,
        q2: total.m2 / (6.0 * rho),
    })
}

/// Inflation of the envelope temperature relative to `T`.
pub const ENVELOPE_KAPPA: f64 = 1.2;
const ENVELOPE_SAFETY: f64 = 1.5;
// every monomial rⁿ exp(-βr²) with n ≤ 3 is decreasing past √(18T)
const RADIAL_SPAN: f64 = 30.0;
const RADIAL_POINTS: usize = 600;
const MAX_ENVELOPE_RETRIES: usize = 8;

/// Bound `C ≥ |P| M / M_κ` used to sample `|P| M` from `C M_κ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolyEnvelope {
    pub kappa: f64,
    pub bound: f64,
}

impl PolyEnvelope {
    /// `|P(v)| M(v) / M_κ(v)`, i.e. `|P| κ^{3/2} exp(-|c|²(1 - 1/κ)/2T)`.
    pub fn ratio(&self, poly: &CubicVPoly, v: &Vec3) -> f64 {
        let c2 = (v - poly.u).norm_squared();
        poly.eval(v).abs()
            * self.kappa.powf(1.5)
            * (-c2 * (1.0 - 1.0 / self.kappa) / (2.0 * poly.temp)).exp()
    }

    /// Rigorous envelope constant from norm bounds on the homogeneous parts
    /// of `P(u + c)`: `|P| ≤ p₀ + p₁|c| + p₂|c|² + p₃|c|³`, maximised against
    /// the Gaussian factor on a radial grid (each interval bounded by the
    /// polynomial at its right end and the Gaussian at its left end).
    pub fn bound_for(poly: &CubicVPoly) -> Self {
        let kappa = ENVELOPE_KAPPA;
        let (t, u, b) = (poly.temp, poly.u, poly.b);
        let p0 = (u.dot(&poly.a) - 3.0 * u.dot(&b) + poly.q0 - 3.0 * poly.q2).abs();
        let d1 = poly.a - 3.0 * b + (poly.g.transpose() * u + poly.e + poly.q1) / t;
        let sym = (poly.g + poly.g.transpose()) * 0.5 / t
            + Matrix3::identity() * ((u.dot(&b) + poly.q2) / t);
        let coef = [p0, d1.norm(), sym.norm(), b.norm() / t];
        let beta = (1.0 - 1.0 / kappa) / (2.0 * t);
        let r_max = RADIAL_SPAN * t.sqrt();
        let h = r_max / RADIAL_POINTS as f64;
        let poly_at = |r: f64| coef[0] + r * (coef[1] + r * (coef[2] + r * coef[3]));
        let mut max = 0.0f64;
        for i in 0..RADIAL_POINTS {
            let (lo, hi) = (i as f64 * h, (i + 1) as f64 * h);
            max = max.max(poly_at(hi) * (-beta * lo * lo).exp());
        }
        Self { kappa, bound: kappa.powf(1.5) * max }
    }
}

/// Signed velocity samples.
pub type SignedVelocities = Vec<(Vec3, Sign)>;

/// Draws signed velocities whose density is `scale · P(v) M(v) / n_eff`.
///
/// Candidates come from `C M_κ` with a stochastically rounded count and are
/// kept with probability `|P| M / (C M_κ)` (Poisson thinning), so the number
/// of accepted samples has mean `scale ∫|P| M dv / n_eff`.
pub fn sample_signed_poly_maxwellian<R: Rng + ?Sized>(
    poly: &CubicVPoly,
    m: &Moments,
    scale: f64,
    n_eff: f64,
    rng: &mut R,
) -> Result<SignedVelocities> {
    m.check()?;
    if !(scale >= 0.0) || !(n_eff > 0.0) {
        return Err(HdpError::Parameter(format!("bad scale {scale} or n_eff {n_eff}")));
    }
    if poly.is_zero() || scale == 0.0 || m.rho == 0.0 {
        return Ok(Vec::new());
    }
    let mut env = PolyEnvelope::bound_for(poly);
    if !(env.bound > 0.0) {
        return Ok(Vec::new());
    }
    if !env.bound.is_finite() {
        return Err(HdpError::Domain("source polynomial is not finite".into()));
    }
    let proposal = Moments { rho: m.rho, u: poly.u, temp: env.kappa * poly.temp };
    'restart: for _ in 0..MAX_ENVELOPE_RETRIES {
        let expected = scale * env.bound * m.rho / n_eff;
        let n_cand = stochastic_round(expected, rng);
        let mut out = Vec::new();
        for _ in 0..n_cand {
            let v = proposal.sample_one(rng);
            let r = env.ratio(poly, &v);
            if r > env.bound {
                log::warn!(
                    "source envelope violated (ratio {:.3}), enlarging bound",
                    r / env.bound
                );
                env.bound = r * ENVELOPE_SAFETY;
                continue 'restart;
            }
            if rng.random::<f64>() * env.bound < r {
                out.push((v, Sign::of(poly.eval(&v))));
            }
        }
        return Ok(out);
    }
    Err(HdpError::Domain("source envelope could not be bounded".into()))
}
