//! Coulomb collisions: the binary small-angle scattering kernel, coarse-particle
//! DSMC, deviational-vs-coarse collisions, and sampling of the change of the
//! Maxwellian part caused by the deviational particles (`ΔM`).

use std::f64::consts::PI;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HdpError, Result};
use crate::maxwellian::Moments;
use crate::phase::{Particle, Sign, SignedParticle, SpatialGrid, Vec3};
use crate::rng::{stochastic_round, unit_vector};

/// Collision strength `A` and time step; the per-pair kernel argument is
/// `s = A Δt ρ / u³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterParams {
    pub a_coef: f64,
    pub dt: f64,
}

impl ScatterParams {
    pub fn new(a_coef: f64, dt: f64) -> Self {
        Self { a_coef, dt }
    }

    pub fn s(&self, rel_speed: f64, rho: f64) -> f64 {
        self.a_coef * self.dt * rho / rel_speed.powi(3)
    }

    /// Prefactor of the Landau tensor `λ(|z|²I - zzᵀ)/|z|³` reproduced by the
    /// kernel's first two moments.
    pub fn landau_strength(&self) -> f64 {
        self.a_coef / 8.0
    }
}

/// Rotates the relative velocity of an equal-mass pair by a random small
/// angle with `tan(θ/2) ~ N(0, s/2)` and uniform azimuth.
pub fn bn_scatter<R: Rng + ?Sized>(v: &Vec3, w: &Vec3, s: f64, rng: &mut R) -> (Vec3, Vec3) {
    let u = v - w;
    let speed = u.norm();
    if speed == 0.0 || !(s > 0.0) {
        return (*v, *w);
    }
    let delta = Normal::new(0.0, (0.5 * s).sqrt()).map_or(0.0, |n| n.sample(rng));
    let d2 = delta * delta;
    let sin_t = 2.0 * delta / (1.0 + d2);
    let one_minus_cos = 2.0 * d2 / (1.0 + d2);
    let phi = 2.0 * PI * rng.random::<f64>();
    let (sin_p, cos_p) = phi.sin_cos();

    let u_perp = (u[0] * u[0] + u[1] * u[1]).sqrt();
    let du = if u_perp > 1e-12 * speed {
        Vec3::new(
            (u[0] / u_perp) * u[2] * sin_t * cos_p - (u[1] / u_perp) * speed * sin_t * sin_p
                - u[0] * one_minus_cos,
            (u[1] / u_perp) * u[2] * sin_t * cos_p + (u[0] / u_perp) * speed * sin_t * sin_p
                - u[1] * one_minus_cos,
            -u_perp * sin_t * cos_p - u[2] * one_minus_cos,
        )
    } else {
        Vec3::new(u[2] * sin_t * cos_p, u[2] * sin_t * sin_p, -u[2] * one_minus_cos)
    };
    (v + 0.5 * du, w - 0.5 * du)
}

/// Random disjoint pairing of the coarse particles of one cell, each pair
/// scattered with `s = A Δt ρ_cell / u³`. An odd particle sits out.
pub fn ta_collide_cell<R: Rng + ?Sized>(
    coarse: &mut [Particle],
    params: &ScatterParams,
    rho_cell: f64,
    rng: &mut R,
) {
    if coarse.len() < 2 {
        return;
    }
    coarse.shuffle(rng);
    for pair in coarse.chunks_exact_mut(2) {
        let (a, b) = pair.split_at_mut(1);
        let (p, q) = (&mut a[0], &mut b[0]);
        let s = params.s((p.v - q.v).norm(), rho_cell);
        let (v, w) = bn_scatter(&p.v, &q.v, s, rng);
        p.v = v;
        q.v = w;
    }
}

/// Scatters every deviational particle of the cell against its own coarse
/// partner (drawn without replacement) and keeps only the deviational update.
pub fn fd_fc_collide_cell<R: Rng + ?Sized>(
    deviational: &mut [&mut Particle],
    coarse: &[Particle],
    params: &ScatterParams,
    rho_cell: f64,
    cell: usize,
    rng: &mut R,
) -> Result<()> {
    let n_d = deviational.len();
    if n_d == 0 {
        return Ok(());
    }
    if coarse.len() < n_d {
        return Err(HdpError::CoarseConstraint { cell, n_c: coarse.len(), n_d });
    }
    let partners = index::sample(rng, coarse.len(), n_d);
    for (p, j) in deviational.iter_mut().zip(partners.iter()) {
        let w = coarse[j].v;
        let s = params.s((p.v - w).norm(), rho_cell);
        let (v, _) = bn_scatter(&p.v, &w, s, rng);
        p.v = v;
    }
    Ok(())
}

/// How the `ΔM` source is sampled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMScheme {
    /// Samples the closed-form linearized operator around each deviational
    /// particle; the emitted count per step is proportional to `Δt`.
    #[default]
    Direct,
    /// Emits the signed pair `(v', +s), (v, -s)` from one binary collision
    /// with a Maxwellian partner and drops pairs closer than `ε_v`.
    PairCancel,
}

/// `E|X - w|^{-1}` for `X ~ N(u, T I)`, with `r = |w - u|`.
pub fn mean_inverse_distance(r: f64, temp: f64) -> f64 {
    let sigma = temp.sqrt();
    if r < 1e-8 * sigma {
        (2.0 / (PI * temp)).sqrt()
    } else {
        libm::erf(r / (std::f64::consts::SQRT_2 * sigma)) / r
    }
}

/// Masses of the three parts of `Q(δ_w, M) / λ`: the point mass at `w`, the
/// negative smooth part and the positive smooth part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaMMasses {
    pub point: f64,
    pub negative: f64,
    pub positive: f64,
}

pub fn delta_m_masses(m: &Moments, w: &Vec3) -> DeltaMMasses {
    let point = 8.0 * PI * m.density_at(w);
    let negative = 2.0 * m.rho / m.temp * mean_inverse_distance((w - m.u).norm(), m.temp);
    DeltaMMasses { point, negative, positive: (negative - point).max(0.0) }
}

/// Rejection sampler for the smooth parts of `Q(δ_w, M)`, built on the
/// mixture proposal `½ N(u, κT) + ½ H_w`, where `H_w` has density
/// `exp(-|z|²/2T) / (4πT|z|)` in `z = v - w`.
struct SmoothPartSampler {
    m: Moments,
    w: Vec3,
    kappa: f64,
    bound_neg: f64,
    bound_pos: f64,
}

const MIX_KAPPA: f64 = 2.0;
const MAX_REJECTIONS: usize = 100_000;

impl SmoothPartSampler {
    fn new(m: &Moments, w: &Vec3) -> Self {
        let t = m.temp;
        let kappa = MIX_KAPPA;
        let r1 = 1.25 * t.sqrt();
        let k15 = kappa.powf(1.5);
        let a = (1.0 - 1.0 / kappa) / (2.0 * t);
        let near = 8.0 * PI * t * (2.0 * PI * t).powf(-1.5) * (r1 * r1 / (2.0 * t)).exp();
        let bound_neg = (2.0 * k15 / r1).max(near);
        let bound_pos = (2.0 * k15 / (r1 * a * std::f64::consts::E))
            .max(near * 2.0 * t / std::f64::consts::E);
        Self { m: *m, w: *w, kappa, bound_neg, bound_pos }
    }

    fn gauss(&self, c2: f64) -> f64 {
        (2.0 * PI * self.m.temp).powf(-1.5) * (-c2 / (2.0 * self.m.temp)).exp()
    }

    fn proposal_density(&self, z2: f64, c2: f64) -> f64 {
        let t = self.m.temp;
        let kt = self.kappa * t;
        let g = (2.0 * PI * kt).powf(-1.5) * (-c2 / (2.0 * kt)).exp();
        let h = (-z2 / (2.0 * t)).exp() / (4.0 * PI * t * z2.sqrt());
        0.5 * (g + h)
    }

    fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        if rng.random::<bool>() {
            Moments { temp: self.kappa * self.m.temp, ..self.m }.sample_one(rng)
        } else {
            let u: f64 = 1.0 - rng.random::<f64>();
            let r = (-2.0 * self.m.temp * u.ln()).sqrt();
            self.w + r * Vec3::from(unit_vector(rng))
        }
    }

    /// Draw from the density proportional to `M(v) / |v - w|`.
    fn negative<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec3> {
        for _ in 0..MAX_REJECTIONS {
            let v = self.propose(rng);
            let z2 = (v - self.w).norm_squared();
            if z2 == 0.0 {
                continue;
            }
            let c2 = (v - self.m.u).norm_squared();
            let target = self.gauss(c2) / z2.sqrt();
            let ratio = target / (self.bound_neg * self.proposal_density(z2, c2));
            debug_assert!(ratio <= 1.0 + 1e-9, "negative-part bound violated: {ratio}");
            if rng.random::<f64>() < ratio {
                return Ok(v);
            }
        }
        Err(HdpError::Domain("delta-M negative part rejection did not terminate".into()))
    }

    /// Draw from the density proportional to `M(v) |z × c|² / |z|³`.
    fn positive<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec3> {
        for _ in 0..MAX_REJECTIONS {
            let v = self.propose(rng);
            let z = v - self.w;
            let c = v - self.m.u;
            let (z2, c2) = (z.norm_squared(), c.norm_squared());
            if z2 == 0.0 || c2 == 0.0 {
                continue;
            }
            let envelope = self.gauss(c2) * c2 / z2.sqrt();
            let ratio = envelope / (self.bound_pos * self.proposal_density(z2, c2));
            debug_assert!(ratio <= 1.0 + 1e-9, "positive-part bound violated: {ratio}");
            let angular = z.cross(&c).norm_squared() / (z2 * c2);
            if rng.random::<f64>() < ratio * angular {
                return Ok(v);
            }
        }
        Err(HdpError::Domain("delta-M positive part rejection did not terminate".into()))
    }
}

/// Samples the change of the Maxwellian part over one step caused by the
/// deviational particles `sources` of one cell. New particles are placed
/// uniformly in the cell.
///
/// With [`DeltaMScheme::Direct`] each source particle `(w, s)` emits, per
/// unit `λΔt`, a point mass `8πM(w)` at `w` with sign `s`, the smooth
/// negative part `2M/(T|z|)` with sign `-s` and the smooth positive part
/// `M|z×c|²/(T²|z|³)` with sign `s`; counts are stochastically rounded.
#[allow(clippy::too_many_arguments)]
pub fn sample_delta_m<R: Rng + ?Sized>(
    sources: &[(Vec3, Sign)],
    m: &Moments,
    params: &ScatterParams,
    scheme: DeltaMScheme,
    eps_v: f64,
    cell: usize,
    grid: &SpatialGrid,
    rng: &mut R,
) -> Result<Vec<SignedParticle>> {
    if sources.is_empty() || m.rho == 0.0 {
        return Ok(Vec::new());
    }
    m.check()?;
    let left = grid.left_edge(cell);
    let place = |v: Vec3, s: Sign, rng: &mut R| {
        SignedParticle::new(left + rng.random::<f64>() * grid.dx, v, s)
    };
    let mut out = Vec::new();
    match scheme {
        DeltaMScheme::Direct => {
            let scale = params.landau_strength() * params.dt;
            for (w, s) in sources {
                let masses = delta_m_masses(m, w);
                let n_point = stochastic_round(scale * masses.point, rng);
                let n_neg = stochastic_round(scale * masses.negative, rng);
                let n_pos = stochastic_round(scale * masses.positive, rng);
                for _ in 0..n_point {
                    out.push(place(*w, *s, rng));
                }
                if n_neg + n_pos == 0 {
                    continue;
                }
                let sampler = SmoothPartSampler::new(m, w);
                for _ in 0..n_neg {
                    let v = sampler.negative(rng)?;
                    out.push(place(v, s.flip(), rng));
                }
                for _ in 0..n_pos {
                    let v = sampler.positive(rng)?;
                    out.push(place(v, *s, rng));
                }
            }
        }
        DeltaMScheme::PairCancel => {
            for (w, s) in sources {
                let v = m.sample_one(rng);
                let sp = params.s((v - w).norm(), m.rho);
                let (v_new, _) = bn_scatter(&v, w, sp, rng);
                if (v_new - v).norm() <= eps_v {
                    continue;
                }
                out.push(place(v_new, *s, rng));
                out.push(place(v, s.flip(), rng));
            }
        }
    }
    Ok(out)
}
