//! Collisionless substep: particle push, kinetic flux-vector splitting for the
//! Maxwellian part, and deviational particles created by the transport source.

use rand::Rng;

use crate::error::{HdpError, Result};
use crate::fields::EField;
use crate::maxwellian::{sample_signed_poly_maxwellian, transport_source_coeffs, Gradients, Moments};
use crate::phase::{CellStore, FluxMoments, MomentField, Particle, SignedParticle, SpatialGrid, Vec3};

/// Kick then drift: `v₁ -= E dt`, `x += v₁ dt`, with `E` taken in the
/// particle's cell.
pub fn push(particles: &mut [Particle], field: &EField, dt: f64, grid: &SpatialGrid) {
    for p in particles.iter_mut() {
        let e = field.at_cell(grid.cell_of(p.x));
        p.v[0] -= e * dt;
        p.x = grid.wrap(p.x + p.v[0] * dt);
    }
}

/// Push every deviational particle (and the coarse ones when asked), then
/// move particles to their new buckets.
pub fn push_store(
    store: &mut CellStore,
    field: &EField,
    dt: f64,
    grid: &SpatialGrid,
    include_coarse: bool,
) {
    store.update_and_rebucket(grid, include_coarse, |k, p| {
        p.v[0] -= field.at_cell(k) * dt;
        p.x = grid.wrap(p.x + p.v[0] * dt);
    });
}

fn std_normal_cdf(s: f64) -> f64 {
    0.5 * libm::erfc(-s / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(s: f64) -> f64 {
    (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `∫_{v₁>0} v₁ⁿ g(v₁) dv₁` for `n = 0..3`, `g` the 1D normal density with
/// mean `u₁` and variance `T`.
fn positive_half_moments(u1: f64, temp: f64) -> [f64; 4] {
    let sigma = temp.sqrt();
    let s = u1 / sigma;
    let cdf = std_normal_cdf(s);
    let pdf = std_normal_pdf(s);
    [
        cdf,
        u1 * cdf + sigma * pdf,
        (u1 * u1 + temp) * cdf + u1 * sigma * pdf,
        (u1 * u1 * u1 + 3.0 * u1 * temp) * cdf + sigma * pdf * (u1 * u1 + 2.0 * temp),
    ]
}

/// Which half of velocity space carries the flux.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HalfSpace {
    Right,
    Left,
}

/// `⟨v₁ φ M⟩` over `v₁ > 0` (right) or `v₁ < 0` (left) for
/// `φ = (1, v₁, v₂, v₃, |v|²/2)`.
pub fn half_flux(m: &Moments, half: HalfSpace) -> FluxMoments {
    let i = match half {
        HalfSpace::Right => positive_half_moments(m.u[0], m.temp),
        HalfSpace::Left => {
            let p = positive_half_moments(-m.u[0], m.temp);
            [p[0], -p[1], p[2], -p[3]]
        }
    };
    let (u2, u3) = (m.u[1], m.u[2]);
    [
        m.rho * i[1],
        m.rho * i[2],
        m.rho * u2 * i[1],
        m.rho * u3 * i[1],
        0.5 * m.rho * (i[3] + i[1] * (u2 * u2 + u3 * u3 + 2.0 * m.temp)),
    ]
}

/// Full analytic `⟨v₁ φ M⟩`.
pub fn full_flux(m: &Moments) -> FluxMoments {
    let (rho, u, t) = (m.rho, m.u, m.temp);
    let energy = 0.5 * rho * u.norm_squared() + 1.5 * rho * t;
    [
        rho * u[0],
        rho * (u[0] * u[0] + t),
        rho * u[0] * u[1],
        rho * u[0] * u[2],
        u[0] * (energy + rho * t),
    ]
}

/// Left/right split fluxes of every cell.
#[derive(Clone, Debug)]
pub struct FluxSplitState {
    pub right: Vec<FluxMoments>,
    pub left: Vec<FluxMoments>,
}

impl FluxSplitState {
    pub fn new(mfield: &MomentField) -> Self {
        let n = mfield.len();
        let right = (0..n).map(|k| half_flux(&mfield.get(k), HalfSpace::Right)).collect();
        let left = (0..n).map(|k| half_flux(&mfield.get(k), HalfSpace::Left)).collect();
        Self { right, left }
    }

    /// Numerical flux through the interface between cell `k` and `k + 1`.
    pub fn interface(&self, k: usize) -> FluxMoments {
        let n = self.right.len();
        let kp = (k + 1) % n;
        std::array::from_fn(|i| self.right[k][i] + self.left[kp][i])
    }
}

/// Conserved variables `(ρ, ρu, ρ|u|²/2 + 3ρT/2)`.
pub fn conserved(m: &Moments) -> [f64; 5] {
    [
        m.rho,
        m.rho * m.u[0],
        m.rho * m.u[1],
        m.rho * m.u[2],
        0.5 * m.rho * m.u.norm_squared() + 1.5 * m.rho * m.temp,
    ]
}

pub fn primitive(q: &[f64; 5], cell: usize) -> Result<Moments> {
    let rho = q[0];
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(HdpError::NonPhysical { cell, what: format!("density {rho}") });
    }
    let u = Vec3::new(q[1], q[2], q[3]) / rho;
    let temp = (2.0 * q[4] / rho - u.norm_squared()) / 3.0;
    if !(temp > 0.0) || !temp.is_finite() {
        return Err(HdpError::NonPhysical { cell, what: format!("temperature {temp}") });
    }
    Ok(Moments { rho, u, temp })
}

/// Periodic central difference `(q_{k+1} - q_{k-1}) / 2Δx` of per-cell flux moments.
pub fn flux_divergence(flux: &[FluxMoments], grid: &SpatialGrid) -> Vec<FluxMoments> {
    let n = flux.len();
    (0..n)
        .map(|k| {
            let (a, b) = (&flux[(k + 1) % n], &flux[(k + n - 1) % n]);
            std::array::from_fn(|i| (a[i] - b[i]) / (2.0 * grid.dx))
        })
        .collect()
}

/// Periodic central-difference gradients of `(ρ, u, T)`.
pub fn gradients(mfield: &MomentField, grid: &SpatialGrid) -> Vec<Gradients> {
    let n = mfield.len();
    let h = 2.0 * grid.dx;
    (0..n)
        .map(|k| {
            let (r, l) = ((k + 1) % n, (k + n - 1) % n);
            Gradients {
                drho: (mfield.rho[r] - mfield.rho[l]) / h,
                du: (mfield.u[r] - mfield.u[l]) / h,
                dtemp: (mfield.temp[r] - mfield.temp[l]) / h,
            }
        })
        .collect()
}

/// One explicit step of the moment equations for `M`.
///
/// `fd_div` is the central divergence of the deviational flux moments (the
/// same array later handed to the source term).
pub fn fluid_update(
    mfield: &MomentField,
    fd_div: &[FluxMoments],
    field: &EField,
    dt: f64,
    grid: &SpatialGrid,
) -> Result<MomentField> {
    let n = mfield.len();
    let split = FluxSplitState::new(mfield);
    let interfaces: Vec<FluxMoments> = (0..n).map(|k| split.interface(k)).collect();
    let ratio = dt / grid.dx;
    let mut out = mfield.clone();
    for k in 0..n {
        let m = mfield.get(k);
        let mut q = conserved(&m);
        let (fr, fl) = (&interfaces[k], &interfaces[(k + n - 1) % n]);
        let e = field.at_cell(k);
        for i in 0..5 {
            q[i] -= ratio * (fr[i] - fl[i]) + dt * fd_div[k][i];
        }
        q[1] -= dt * m.rho * e;
        q[4] -= dt * m.rho * m.u[0] * e;
        out.set(k, primitive(&q, k)?);
    }
    Ok(out)
}

/// Result of the CFL test `Δt max(|u₁| + 4√T) ≤ Δx`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CflReport {
    pub courant: f64,
    pub ok: bool,
}

pub fn cfl_check(mfield: &MomentField, dt: f64, grid: &SpatialGrid) -> CflReport {
    let speed = (0..mfield.len())
        .map(|k| mfield.u[k][0].abs() + 4.0 * mfield.temp[k].max(0.0).sqrt())
        .fold(0.0, f64::max);
    let courant = dt * speed / grid.dx;
    CflReport { courant, ok: courant <= 1.0 + 1e-12 }
}

/// New deviational particles for one cell from `Δt · P M`, placed uniformly in
/// the cell.
#[allow(clippy::too_many_arguments)]
pub fn spawn_source_particles<R: Rng + ?Sized>(
    m: &Moments,
    grad: &Gradients,
    e_field: f64,
    fd_div: &FluxMoments,
    dt: f64,
    n_eff: f64,
    cell: usize,
    grid: &SpatialGrid,
    rng: &mut R,
) -> Result<Vec<SignedParticle>> {
    let poly = transport_source_coeffs(grad, m, e_field, fd_div)?;
    let vs = sample_signed_poly_maxwellian(&poly, m, dt * grid.cell_volume(), n_eff, rng)?;
    let left = grid.left_edge(cell);
    Ok(vs
        .into_iter()
        .map(|(v, s)| SignedParticle::new(left + rng.random::<f64>() * grid.dx, v, s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn push_examples() {
        let g = SpatialGrid::landau(400).unwrap();
        let mut p = [Particle::new(0.0, Vec3::x())];
        push(&mut p, &EField::zeros(400), 0.1, &g);
        assert!((p[0].x - 0.1).abs() < 1e-15);
        assert_eq!(p[0].v, Vec3::x());

        let mut p = [Particle::new(0.0, Vec3::zeros())];
        push(&mut p, &EField(vec![2.0; 400]), 0.1, &g);
        assert!((p[0].v[0] + 0.2).abs() < 1e-15);
        assert!((p[0].x - (g.length - 0.02)).abs() < 1e-12);
    }

    #[test]
    fn push_is_reversible() {
        let g = SpatialGrid::new(10.0, 10).unwrap();
        let field = EField((0..10).map(|k| 0.1 * k as f64).collect());
        let start = Particle::new(5.5, Vec3::new(0.3, -1.0, 2.0));
        let mut p = [start];
        push(&mut p, &field, 0.01, &g);
        // undo: drift back, then kick back, with the same frozen field value
        let e = field.at_cell(g.cell_of(start.x));
        p[0].x -= p[0].v[0] * 0.01;
        p[0].v[0] += e * 0.01;
        assert!((p[0].x - start.x).abs() < 1e-14);
        assert!((p[0].v - start.v).norm() < 1e-15);
    }

    #[test]
    fn cfl_examples() {
        let g = SpatialGrid::landau(400).unwrap();
        let m = MomentField::uniform(400, Moments::at_rest(1.0, 1.0));
        let r = cfl_check(&m, g.dx / 10.0, &g);
        assert!((r.courant - 0.4).abs() < 1e-12 && r.ok);
        let m = MomentField::uniform(400, Moments::new(1.0, Vec3::new(5.0, 0.0, 0.0), 1.0));
        let r = cfl_check(&m, g.dx / 10.0, &g);
        assert!((r.courant - 0.9).abs() < 1e-12 && r.ok);
        assert!(!cfl_check(&m, g.dx, &g).ok);
    }

    #[test]
    fn uniform_state_is_steady() {
        let g = SpatialGrid::landau(64).unwrap();
        let m0 = Moments::new(1.2, Vec3::new(0.3, -0.2, 0.1), 0.9);
        let m = MomentField::uniform(64, m0);
        let out = fluid_update(&m, &vec![[0.0; 5]; 64], &EField::zeros(64), g.dx / 10.0, &g).unwrap();
        for k in 0..64 {
            let q = out.get(k);
            assert!((q.rho - m0.rho).abs() < 1e-14);
            assert!((q.u - m0.u).norm() < 1e-14);
            assert!((q.temp - m0.temp).abs() < 1e-14);
        }
    }

    #[test]
    fn pressure_gradient_drives_momentum() {
        let alpha = 0.4;
        let g = SpatialGrid::landau(400).unwrap();
        let m = MomentField::from_fn(&g, |x| Moments::at_rest(1.0 + alpha * x.sin(), 1.0));
        let dt = 1e-4;
        let out = fluid_update(&m, &vec![[0.0; 5]; 400], &EField::zeros(400), dt, &g).unwrap();
        for k in 0..400 {
            let x = g.center(k);
            let mom = out.rho[k] * out.u[k][0];
            let want = -dt * alpha * x.cos();
            assert!((mom - want).abs() < 2e-3 * dt, "cell {k}: {mom} vs {want}");
        }
    }

    #[test]
    fn landau_equilibrium_source_spawns_nothing() {
        let g = SpatialGrid::landau(16).unwrap();
        let m = Moments::at_rest(1.0, 1.0);
        let mut rng = crate::rng::stream(1, 0, 0, crate::rng::Phase::Spawn);
        let out =
            spawn_source_particles(&m, &Gradients::zero(), 0.0, &[0.0; 5], 0.01, 1e-6, 3, &g, &mut rng)
                .unwrap();
        assert!(out.is_empty());
    }

    proptest! {
        #[test]
        fn half_fluxes_sum_to_full(
            rho in 0.1f64..3.0, u1 in -5.0f64..5.0, u2 in -2.0f64..2.0, u3 in -2.0f64..2.0,
            t in 0.1f64..4.0,
        ) {
            let m = Moments::new(rho, Vec3::new(u1, u2, u3), t);
            let r = half_flux(&m, HalfSpace::Right);
            let l = half_flux(&m, HalfSpace::Left);
            let f = full_flux(&m);
            for i in 0..5 {
                prop_assert!((r[i] + l[i] - f[i]).abs() < 1e-12 * (1.0 + f[i].abs()) * 10.0);
            }
        }

        #[test]
        fn fluid_update_conserves_totals(
            amp in 0.0f64..0.5, phase in 0.0f64..6.0, ux in -0.5f64..0.5,
        ) {
            let g = SpatialGrid::landau(50).unwrap();
            let m = MomentField::from_fn(&g, |x| Moments::new(
                1.0 + amp * (x + phase).sin(),
                Vec3::new(ux * (0.5 * x).cos(), 0.1, -0.2),
                1.0 + 0.5 * amp * x.cos(),
            ));
            let out = fluid_update(&m, &vec![[0.0; 5]; 50], &EField::zeros(50), g.dx / 10.0, &g).unwrap();
            let tot = |mf: &MomentField| {
                let mut s = [0.0; 5];
                for k in 0..50 {
                    let q = conserved(&mf.get(k));
                    for i in 0..5 { s[i] += q[i] * g.dx; }
                }
                s
            };
            let (a, b) = (tot(&m), tot(&out));
            for i in 0..5 {
                prop_assert!((a[i] - b[i]).abs() < 1e-12 * (1.0 + a[i].abs()));
            }
        }
    }
}
