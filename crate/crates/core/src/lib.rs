//! Hybrid solver with deviational particles (HDP) for the 1D-space / 3D-velocity
//! Vlasov-Poisson-BGK and Vlasov-Poisson-Landau systems.
//!
//! The distribution is split as `f = M + f_d`: the local Maxwellian `M` lives on
//! a spatial grid and is advanced by a kinetic-flux fluid scheme, while the
//! deviation `f_d` is carried by signed ("deviational") particles. For Coulomb
//! collisions an auxiliary population of unsigned coarse particles provides
//! collision partners. A conventional PIC-DSMC solver is included as the
//! reference method.
//!
//! Module map:
//! - [`phase`]: grid, particles, per-cell buckets, moment deposition
//! - [`fields`]: periodic Poisson solve and field energy
//! - [`maxwellian`]: Maxwellian evaluation/sampling, projection, transport source
//! - [`advection`]: particle push, kinetic flux splitting, source spawning
//! - [`collision_bgk`], [`collision_landau`]: collision substeps
//! - [`resample`]: Fourier reconstruction and particle resampling
//! - [`driver`]: scenarios and the HDP / PIC-DSMC time steppers
//! - [`diagnostics`], [`output`], [`sweep`]: error metrics, files, parameter sweeps

pub mod advection;
pub mod collision_bgk;
pub mod collision_landau;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod fields;
pub mod maxwellian;
pub mod output;
pub mod phase;
pub mod resample;
pub mod rng;
pub mod sweep;

pub use error::{HdpError, Result};
pub use fields::{electric_energy, solve_poisson, EField, PoissonSolver};
pub use maxwellian::{CubicVPoly, Moments, ProjectionCoeffs};
pub use phase::{
    cell_of, CellBucket, CellStore, CoarseParticle, MomentField, Particle, Sign, SignedParticle,
    SpatialGrid, Vec3,
};
pub use driver::{Method, Scenario, SimState, System};
