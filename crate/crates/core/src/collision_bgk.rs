//! BGK relaxation: thinning of deviational particles and the DSMC velocity
//! replacement used by the reference solver.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{HdpError, Result};
use crate::maxwellian::Moments;
use crate::phase::Particle;

/// Time discretization of the relaxation term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BgkScheme {
    #[default]
    Explicit,
    Implicit,
}

/// Per-step probability that a particle relaxes: `μΔt` or `μΔt/(1+μΔt)`.
pub fn relaxation_probability(mu: f64, dt: f64, scheme: BgkScheme) -> Result<f64> {
    if !(mu >= 0.0) || !(dt > 0.0) {
        return Err(HdpError::Parameter(format!("need mu >= 0 and dt > 0, got mu={mu}, dt={dt}")));
    }
    let x = mu * dt;
    match scheme {
        BgkScheme::Explicit if x > 1.0 => Err(HdpError::Parameter(format!(
            "explicit BGK needs mu*dt <= 1, got {x}"
        ))),
        BgkScheme::Explicit => Ok(x),
        BgkScheme::Implicit => Ok(x / (1.0 + x)),
    }
}

/// Removes each particle independently with the relaxation probability.
/// Returns the number removed.
pub fn bgk_thin<R: Rng + ?Sized>(
    particles: &mut Vec<Particle>,
    mu: f64,
    dt: f64,
    scheme: BgkScheme,
    rng: &mut R,
) -> Result<usize> {
    let p = relaxation_probability(mu, dt, scheme)?;
    let before = particles.len();
    if p > 0.0 {
        particles.retain(|_| rng.random::<f64>() >= p);
    }
    Ok(before - particles.len())
}

/// Replaces each particle's velocity by a draw from `M` with the relaxation
/// probability. Returns the number replaced.
pub fn bgk_dsmc<R: Rng + ?Sized>(
    particles: &mut [Particle],
    mu: f64,
    dt: f64,
    moments: &Moments,
    scheme: BgkScheme,
    rng: &mut R,
) -> Result<usize> {
    let p = relaxation_probability(mu, dt, scheme)?;
    if p == 0.0 {
        return Ok(0);
    }
    moments.check()?;
    // jump straight to the next replaced particle
    let gap = Geometric::new(p).map_err(|e| HdpError::Parameter(e.to_string()))?;
    let mut replaced = 0;
    let mut i = gap.sample(rng) as usize;
    while i < particles.len() {
        particles[i].v = moments.sample_one(rng);
        replaced += 1;
        i = i.saturating_add(1).saturating_add(gap.sample(rng) as usize);
    }
    Ok(replaced)
}
