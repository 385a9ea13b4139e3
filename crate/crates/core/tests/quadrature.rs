//! Source term, projection and ΔM sampler checked against quadrature and
//! Monte Carlo oracles written independently of the library formulas.

mod common;

use common::{gauss_hermite, integrate_against, integrate_density};
use hdp_core::collision_landau::{bn_scatter, delta_m_masses, sample_delta_m, DeltaMScheme, ScatterParams};
use hdp_core::maxwellian::{sample_signed_poly_maxwellian, transport_source_coeffs, Gradients};
use hdp_core::rng::{stream, Phase};
use hdp_core::{Moments, ProjectionCoeffs, Sign, SpatialGrid, Vec3};
use proptest::prelude::*;

fn conserved_phis(v: &Vec3) -> [f64; 5] {
    [1.0, v[0], v[1], v[2], 0.5 * v.norm_squared()]
}

/// `Π_M ψ(v)` from the conserved moments `(mass, momentum, energy)` of `ψ`,
/// written out from the projection definition.
fn project_conserved(m: &Moments, q: &[f64; 5], v: &Vec3) -> f64 {
    let mom = Vec3::new(q[1], q[2], q[3]);
    let c = v - m.u;
    let t = m.temp;
    let centered_mom = mom - m.u * q[0];
    let kinetic = 2.0 * q[4] - 2.0 * m.u.dot(&mom) + m.u.norm_squared() * q[0];
    let s_moment = kinetic / t - 3.0 * q[0];
    let s = c.norm_squared() / t - 3.0;
    m.density_at(v) / m.rho * (q[0] + c.dot(&centered_mom) / t + s * s_moment / 6.0)
}

/// `(v₁ ∂ₓ - E ∂_{v₁}) M` from the chain rule on `ρ, u, T`.
fn transport_of_m(m: &Moments, g: &Gradients, e: f64, v: &Vec3) -> f64 {
    let c = v - m.u;
    let t = m.temp;
    let d_log_m = g.drho / m.rho + c.dot(&g.du) / t + g.dtemp / (2.0 * t) * (c.norm_squared() / t - 3.0);
    let mv = m.density_at(v);
    v[0] * mv * d_log_m + e * mv * c[0] / t
}

fn moments_strategy() -> impl Strategy<Value = Moments> {
    (0.3f64..2.0, -0.8f64..0.8, -0.5f64..0.5, -0.5f64..0.5, 0.4f64..2.0)
        .prop_map(|(rho, u1, u2, u3, t)| Moments::new(rho, Vec3::new(u1, u2, u3), t))
}

fn gradients_strategy() -> impl Strategy<Value = Gradients> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_map(|(r, a, b, c, t)| Gradients { drho: r, du: Vec3::new(a, b, c), dtemp: t })
}

#[test]
fn hermite_rule_reproduces_normal_moments() {
    let rule = gauss_hermite(8);
    let moment = |k: i32| rule.iter().map(|(x, w)| w * x.powi(k)).sum::<f64>();
    assert!((moment(0) - 1.0).abs() < 1e-13);
    assert!(moment(1).abs() < 1e-13);
    assert!((moment(2) - 1.0).abs() < 1e-12);
    assert!((moment(4) - 3.0).abs() < 1e-11);
    assert!((moment(6) - 15.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn source_moments_are_the_fd_flux_divergence(
        m in moments_strategy(),
        g in gradients_strategy(),
        e in -1.0f64..1.0,
        fd in prop::array::uniform5(-0.3f64..0.3),
    ) {
        let poly = transport_source_coeffs(&g, &m, e, &fd).unwrap();
        for (i, want) in fd.iter().enumerate() {
            let got = integrate_against(&m, 6, |v| poly.eval(v) * conserved_phis(v)[i]);
            prop_assert!((got - want).abs() < 1e-10, "moment {i}: {got} vs {want}");
        }
    }

    #[test]
    fn source_matches_pointwise_oracle(
        m in moments_strategy(),
        g in gradients_strategy(),
        e in -1.0f64..1.0,
        fd in prop::array::uniform5(-0.3f64..0.3),
        probe in prop::array::uniform3(-2.5f64..2.5),
    ) {
        let poly = transport_source_coeffs(&g, &m, e, &fd).unwrap();
        let mut tm = [0.0; 5];
        for (i, slot) in tm.iter_mut().enumerate() {
            *slot = integrate_density(&m, 6, |v| transport_of_m(&m, &g, e, v) * conserved_phis(v)[i]);
        }
        let v = m.u + Vec3::from(probe) * m.temp.sqrt();
        let oracle = -transport_of_m(&m, &g, e, &v) + project_conserved(&m, &tm, &v) + project_conserved(&m, &fd, &v);
        let got = poly.eval(&v) * m.density_at(&v);
        let scale = m.density_at(&m.u) * (1.0 + fd.iter().map(|x| x.abs()).sum::<f64>());
        prop_assert!((got - oracle).abs() < 1e-9 * scale, "{got} vs {oracle}");
    }

    #[test]
    fn projection_is_idempotent(
        m in moments_strategy(),
        m0 in -1.0f64..1.0,
        m1 in prop::array::uniform3(-1.0f64..1.0),
        m2 in -1.0f64..1.0,
    ) {
        let psi = ProjectionCoeffs { m0, m1: Vec3::from(m1), m2 };
        let proj = |v: &Vec3| psi.eval(&m, v);
        let c = |v: &Vec3| v - m.u;
        let back0 = integrate_density(&m, 6, |v| proj(v));
        let back2 = integrate_density(&m, 6, |v| proj(v) * (c(v).norm_squared() / m.temp - 3.0));
        prop_assert!((back0 - m0).abs() < 1e-10);
        prop_assert!((back2 - m2).abs() < 1e-10);
        for i in 0..3 {
            let back1 = integrate_density(&m, 6, |v| proj(v) * c(v)[i]);
            prop_assert!((back1 - m1[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn signed_source_sampler_matches_quadrature() {
    let m = Moments::new(1.1, Vec3::new(0.2, 0.0, -0.1), 0.9);
    let g = Gradients { drho: 0.3, du: Vec3::new(-0.2, 0.1, 0.0), dtemp: 0.25 };
    let fd = [0.02, -0.01, 0.0, 0.01, 0.03];
    let poly = transport_source_coeffs(&g, &m, 0.4, &fd).unwrap();
    let n_eff = 1e-6;
    let scale = 0.05;
    let tests: [(&str, fn(&Vec3) -> f64); 4] = [
        ("1", |_| 1.0),
        ("v1", |v| v[0]),
        ("v1^2", |v| v[0] * v[0]),
        ("v1 v2 v3", |v| v[0] * v[1] * v[2]),
    ];
    let mut rng = stream(21, 0, 0, Phase::Spawn);
    let batch = sample_signed_poly_maxwellian(&poly, &m, scale, n_eff, &mut rng).unwrap();
    assert!(batch.len() > 10_000);
    for (name, h) in tests {
        let want = scale * integrate_against(&m, 6, |v| poly.eval(v) * h(v));
        let got: f64 = batch.iter().map(|(v, s)| n_eff * s.value() * h(v)).sum();
        let var: f64 = batch.iter().map(|(v, _)| (n_eff * h(v)).powi(2)).sum();
        assert!((got - want).abs() < 4.0 * var.sqrt() + 1e-12, "{name}: {got} vs {want} ± {}", var.sqrt());
    }
}

#[test]
fn delta_m_masses_match_monte_carlo() {
    let m = Moments::new(1.3, Vec3::new(0.1, -0.2, 0.0), 0.8);
    let w = Vec3::new(1.0, 0.4, -0.3);
    let masses = delta_m_masses(&m, &w);
    let mut rng = stream(5, 0, 0, Phase::DeltaM);
    let n = 400_000;
    let (mut neg, mut neg2, mut pos, mut pos2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let v = m.sample_one(&mut rng);
        let z = v - w;
        let c = v - m.u;
        let a = 2.0 * m.rho / (m.temp * z.norm());
        let b = m.rho * z.cross(&c).norm_squared() / (m.temp * m.temp * z.norm().powi(3));
        neg += a;
        neg2 += a * a;
        pos += b;
        pos2 += b * b;
    }
    let nf = n as f64;
    let se = |s: f64, s2: f64| ((s2 / nf - (s / nf).powi(2)) / nf).sqrt();
    assert!((neg / nf - masses.negative).abs() < 4.0 * se(neg, neg2), "{} vs {}", neg / nf, masses.negative);
    assert!((pos / nf - masses.positive).abs() < 4.0 * se(pos, pos2), "{} vs {}", pos / nf, masses.positive);
    assert!((masses.point + masses.positive - masses.negative).abs() < 1e-12);
}

/// `E Σ sign·h` over ΔM batches from one deviational particle, against the
/// mean change of `h` over Maxwellian particles scattered by that particle.
#[test]
fn delta_m_matches_scattering_oracle() {
    let m = Moments::at_rest(1.0, 1.0);
    let w = Vec3::new(1.2, 0.5, 0.0);
    let dt = 1e-3;
    let a_coef = 10.0;
    let tests: [(&str, fn(&Vec3) -> f64); 4] = [
        ("v1", |v| v[0]),
        ("v2", |v| v[1]),
        ("|v|^2/2", |v| 0.5 * v.norm_squared()),
        ("v1^2 - v2^2", |v| v[0] * v[0] - v[1] * v[1]),
    ];

    let params = ScatterParams::new(a_coef, dt);
    let mut rng = stream(8, 0, 0, Phase::Collision);
    let n_mc = 2_000_000;
    let mut oracle = [(0.0f64, 0.0f64); 4];
    for _ in 0..n_mc {
        let v = m.sample_one(&mut rng);
        let s = params.s((v - w).norm(), m.rho);
        let (v_new, _) = bn_scatter(&v, &w, s, &mut rng);
        for (slot, (_, h)) in oracle.iter_mut().zip(&tests) {
            let d = h(&v_new) - h(&v);
            slot.0 += d;
            slot.1 += d * d;
        }
    }

    // ΔM counts are linear in Δt, so sample at a large step and rescale.
    let big = ScatterParams::new(a_coef, 1.0);
    let grid = SpatialGrid::new(1.0, 2).unwrap();
    let sources = vec![(w, Sign::Positive); 20_000];
    let mut drng = stream(8, 0, 1, Phase::DeltaM);
    let mut sampled = [(0.0f64, 0.0f64); 4];
    let reps = 10;
    for _ in 0..reps {
        let batch = sample_delta_m(&sources, &m, &big, DeltaMScheme::Direct, 0.0, 0, &grid, &mut drng).unwrap();
        for (slot, (_, h)) in sampled.iter_mut().zip(&tests) {
            for p in &batch {
                let x = p.sign.value() * h(&p.v);
                slot.0 += x;
                slot.1 += x * x;
            }
        }
    }
    let n_src = (sources.len() * reps) as f64;
    for (i, (name, _)) in tests.iter().enumerate() {
        let mc_mean = oracle[i].0 / n_mc as f64;
        let mc_se = ((oracle[i].1 / n_mc as f64 - mc_mean * mc_mean) / n_mc as f64).sqrt();
        let dm_mean = dt * sampled[i].0 / n_src;
        let dm_se = dt * (sampled[i].1 / n_src / n_src).sqrt();
        let tol = 4.0 * (mc_se * mc_se + dm_se * dm_se).sqrt() + 0.05 * mc_mean.abs();
        assert!((dm_mean - mc_mean).abs() < tol, "{name}: ΔM {dm_mean:.4e} vs scattering {mc_mean:.4e} (tol {tol:.2e})");
    }
}
