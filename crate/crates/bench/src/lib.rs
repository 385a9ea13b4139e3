//! Fixtures shared by the kernel benchmarks.

use hdp_core::driver::init_scenario;
use hdp_core::rng::{stream, Phase};
use hdp_core::{Moments, Particle, Scenario, SimState, System, Vec3};

/// `n` velocities drawn from a Maxwellian at rest with temperature `temp`.
pub fn maxwellian_velocities(n: usize, temp: f64, seed: u64) -> Vec<Vec3> {
    let m = Moments::at_rest(1.0, temp);
    let mut rng = stream(seed, 0, 0, Phase::Init);
    (0..n).map(|_| m.sample_one(&mut rng)).collect()
}

pub fn particles_at(x: f64, velocities: &[Vec3]) -> Vec<Particle> {
    velocities.iter().map(|v| Particle::new(x, *v)).collect()
}

/// Linear Landau damping state on `n_x` cells, advanced past the first
/// steps so that deviational particles are present.
pub fn warmed_state(system: System, n_x: usize, n_eff: f64, warm_steps: usize) -> SimState {
    let s = Scenario { system, alpha: 0.1, n_x, n_eff, n_eff_c: 10.0 * n_eff, t_end: 1.0, ..Scenario::default() };
    let mut st = init_scenario(&s).expect("valid bench scenario");
    for _ in 0..warm_steps {
        st.step().expect("warm-up step");
    }
    st
}
