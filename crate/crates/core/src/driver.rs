//! Scenario setup and the operator-split time steppers: HDP for the BGK and
//! Landau systems, and the PIC-DSMC reference.
//!
//! Every step runs collision, then the field solve, then advection (then, for
//! the Landau system, resampling).

use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::advection::{cfl_check, flux_divergence, fluid_update, gradients, push_store, spawn_source_particles};
use crate::collision_bgk::{bgk_dsmc, bgk_thin, BgkScheme};
use crate::collision_landau::{fd_fc_collide_cell, sample_delta_m, ta_collide_cell, DeltaMScheme, ScatterParams};
use crate::error::{HdpError, Result};
use crate::fields::{electric_energy, EField, PoissonSolver};
use crate::maxwellian::Moments;
use crate::phase::{particle_moments, signed_flux_moments, CellBucket, CellStore, MomentField, Particle, Sign, SignedParticle, SpatialGrid, Vec3};
use crate::resample::{
    new_coarse_weight, reconstruct_cell, resample_coarse_cell, resample_deviational_cell, trigger_cells,
    CoarseMode, NodeGrid, ReconSettings,
};
use crate::rng::{stochastic_round, stream, Phase};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    #[default]
    VpBgk,
    Vpl,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Hdp,
    PicDsmc,
}

/// Full description of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub system: System,
    pub method: Method,
    /// Amplitude of the initial density perturbation `1 + α sin x`.
    pub alpha: f64,
    /// BGK collision frequency.
    pub mu: f64,
    /// Coulomb collision coefficient.
    pub a_coef: f64,
    pub n_x: usize,
    pub length: f64,
    /// `Δt = dt_factor · Δx`.
    pub dt_factor: f64,
    /// Weight of one deviational particle.
    pub n_eff: f64,
    /// Weight of one coarse particle, or of one particle in PIC-DSMC.
    pub n_eff_c: f64,
    pub k_modes: usize,
    /// Cap the Fourier modes by the cell's particle count.
    pub adaptive_modes: bool,
    /// Resampling box half-width cap in thermal speeds.
    pub box_limit: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eps_v_factor: f64,
    pub delta_m: DeltaMScheme,
    pub seed: u64,
    pub t_end: f64,
    pub enforce_moments: bool,
    pub scheme: BgkScheme,
    /// Steps between periodic coarse resamplings.
    pub conform_every: usize,
    /// Post/pre particle ratio above which a deviational resampling counts as failed.
    pub fail_ratio: f64,
    /// Skip deviational resampling entirely (growth studies).
    pub disable_resampling: bool,
    pub snapshot_times: Vec<f64>,
    /// Write measured wall time into the energy series instead of zeros.
    pub record_wall_time: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            system: System::VpBgk,
            method: Method::Hdp,
            alpha: 0.01,
            mu: 1.0,
            a_coef: 10.0,
            n_x: 400,
            length: 4.0 * std::f64::consts::PI,
            dt_factor: 0.1,
            n_eff: 1e-5,
            n_eff_c: 1e-4,
            k_modes: 30,
            adaptive_modes: true,
            box_limit: 6.0,
            beta: 0.9,
            gamma: 1.1,
            eps_v_factor: 0.3,
            delta_m: DeltaMScheme::Direct,
            seed: 1,
            t_end: 1.0,
            enforce_moments: false,
            scheme: BgkScheme::Explicit,
            conform_every: 50,
            fail_ratio: 0.8,
            disable_resampling: false,
            snapshot_times: Vec::new(),
            record_wall_time: false,
        }
    }
}

impl Scenario {
    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.length, self.n_x)
    }

    pub fn dt(&self) -> Result<f64> {
        Ok(self.grid()?.dx * self.dt_factor)
    }

    pub fn n_steps(&self) -> Result<usize> {
        Ok((self.t_end / self.dt()? - 1e-9).ceil().max(0.0) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(HdpError::Parameter(what.to_string()));
        self.grid()?;
        if !(self.alpha.abs() < 1.0) {
            return bad("need |alpha| < 1 for a positive initial density");
        }
        if !(self.dt_factor > 0.0) || !(self.n_eff > 0.0) || !(self.n_eff_c > 0.0) {
            return bad("dt_factor, n_eff and n_eff_c must be positive");
        }
        if !(self.t_end >= 0.0) {
            return bad("t_end must be non-negative");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if !(self.gamma > 1.0) {
            return bad("gamma must exceed 1");
        }
        if self.k_modes < 2 {
            return bad("need at least 2 Fourier modes");
        }
        if !(self.box_limit > 0.0) {
            return bad("box_limit must be positive");
        }
        if self.conform_every == 0 {
            return bad("conform_every must be positive");
        }
        match self.system {
            System::VpBgk => {
                if !(self.mu >= 0.0) {
                    return bad("mu must be non-negative");
                }
                if self.scheme == BgkScheme::Explicit && self.mu * self.dt()? > 1.0 {
                    return bad("explicit BGK needs mu*dt <= 1");
                }
            }
            System::Vpl => {
                if !(self.a_coef >= 0.0) {
                    return bad("A must be non-negative");
                }
            }
        }
        Ok(())
    }

    fn recon(&self) -> ReconSettings {
        ReconSettings { k_modes: self.k_modes, adaptive: self.adaptive_modes, box_limit: self.box_limit }
    }
}

/// One row of the energy series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRow {
    pub step: usize,
    pub t: f64,
    pub e_norm_sq: f64,
    pub n_p: usize,
    pub n_n: usize,
    pub n_c: usize,
    pub wall_s: f64,
}

/// Counters accumulated over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub spawned: usize,
    pub delta_m: usize,
    pub thinned: usize,
    pub resample_events: usize,
    pub coarse_resamples: usize,
}

/// Complete solver state.
#[derive(Clone, Debug)]
pub struct SimState {
    pub scenario: Scenario,
    pub grid: SpatialGrid,
    pub dt: f64,
    pub mfield: MomentField,
    pub store: CellStore,
    pub efield: EField,
    pub step: usize,
    pub time: f64,
    pub stats: StepStats,
    poisson: PoissonSolver,
}

impl SimState {
    /// Total charge density `ρ_M + N_eff (N_p - N_n)/|C|` (HDP) or the particle
    /// density (PIC-DSMC).
    pub fn density(&self) -> Vec<f64> {
        match self.scenario.method {
            Method::Hdp => {
                let dev = self.store.signed_density(&self.grid);
                self.mfield.rho.iter().zip(dev).map(|(a, b)| a + b).collect()
            }
            Method::PicDsmc => self.store.coarse_density(&self.grid),
        }
    }

    pub fn solve_field(&self) -> Result<EField> {
        self.poisson.solve(&self.density())
    }

    pub fn energy_row(&self, wall_s: f64) -> Result<EnergyRow> {
        let e = self.solve_field()?;
        let tot = self.store.total();
        Ok(EnergyRow {
            step: self.step,
            t: self.time,
            e_norm_sq: electric_energy(&e, &self.grid),
            n_p: tot.n_p,
            n_n: tot.n_n,
            n_c: tot.n_c,
            wall_s,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        match (self.scenario.method, self.scenario.system) {
            (Method::Hdp, System::VpBgk) => step_hdp_bgk(self),
            (Method::Hdp, System::Vpl) => step_hdp_vpl(self),
            (Method::PicDsmc, _) => step_pic_dsmc(self),
        }
    }
}

/// Cell-centered `1 + α sin x`, `u = 0`, `T = 1`, no deviational particles;
/// coarse (Landau HDP) or full (PIC-DSMC) particles drawn from `M`.
pub fn init_scenario(s: &Scenario) -> Result<SimState> {
    s.validate()?;
    let grid = s.grid()?;
    let dt = s.dt()?;
    let mfield = MomentField::from_fn(&grid, |x| Moments::at_rest(1.0 + s.alpha * x.sin(), 1.0));
    let mut store = CellStore::new(grid.n_cells, s.n_eff, s.n_eff_c);
    let needs_particles = s.method == Method::PicDsmc || s.system == System::Vpl;
    if needs_particles {
        for k in 0..grid.n_cells {
            let mut rng = stream(s.seed, 0, k as u64, Phase::Init);
            let m = mfield.get(k);
            let n = stochastic_round(m.rho * grid.dx / s.n_eff_c, &mut rng);
            let left = grid.left_edge(k);
            store.cells[k].coarse =
                (0..n).map(|_| Particle::new(left + rng.random::<f64>() * grid.dx, m.sample_one(&mut rng))).collect();
        }
    }
    let poisson = PoissonSolver::new(grid)?;
    let mut state = SimState {
        scenario: s.clone(),
        grid,
        dt,
        mfield,
        store,
        efield: EField::zeros(grid.n_cells),
        step: 0,
        time: 0.0,
        stats: StepStats::default(),
        poisson,
    };
    state.efield = state.solve_field()?;
    Ok(state)
}

fn check_cfl(state: &SimState) {
    let r = cfl_check(&state.mfield, state.dt, &state.grid);
    if !r.ok {
        log::warn!("CFL violated at step {}: Courant number {:.3}", state.step, r.courant);
    }
}

/// Advection substep shared by both HDP systems: push, fluid update and
/// source spawning, all driven by the start-of-substep state.
fn hdp_advection(state: &mut SimState, push_coarse: bool) -> Result<()> {
    let s = state.scenario.clone();
    let grid = state.grid;
    let dt = state.dt;
    check_cfl(state);
    let field = state.solve_field()?;
    let flux = signed_flux_moments(&state.store, &grid);
    let div = flux_divergence(&flux, &grid);
    let grads = gradients(&state.mfield, &grid);
    push_store(&mut state.store, &field, dt, &grid, push_coarse);
    let new_m = fluid_update(&state.mfield, &div, &field, dt, &grid)?;
    for k in 0..grid.n_cells {
        let mut rng = stream(s.seed, state.step as u64 + 1, k as u64, Phase::Spawn);
        let m = state.mfield.get(k);
        let mut batch = spawn_source_particles(&m, &grads[k], field.at_cell(k), &div[k], dt, s.n_eff, k, &grid, &mut rng)?;
        if s.enforce_moments && !batch.is_empty() {
            // the source carries the flux divergence of f_d already removed from M
            let scale = dt * grid.cell_volume() / s.n_eff;
            let mut erng = stream(s.seed, state.step as u64 + 1, k as u64, Phase::Enforce);
            let target: [f64; 5] = std::array::from_fn(|i| scale * div[k][i]);
            let mass = target[0].floor() + if erng.random::<f64>() < target[0] - target[0].floor() { 1.0 } else { 0.0 };
            enforce_batch_moments(&mut batch, [mass, target[1], target[2], target[3], target[4]], &mut erng);
        }
        state.stats.spawned += batch.len();
        for p in batch {
            state.store.insert_signed(&grid, p);
        }
    }
    state.mfield = new_m;
    state.efield = field;
    Ok(())
}

/// BGK thinning, field solve, then advection with source spawning.
pub fn step_hdp_bgk(state: &mut SimState) -> Result<()> {
    let s = state.scenario.clone();
    for (k, cell) in state.store.cells.iter_mut().enumerate() {
        let mut rng = stream(s.seed, state.step as u64 + 1, k as u64, Phase::Collision);
        state.stats.thinned += bgk_thin(&mut cell.pos, s.mu, state.dt, s.scheme, &mut rng)?;
        state.stats.thinned += bgk_thin(&mut cell.neg, s.mu, state.dt, s.scheme, &mut rng)?;
    }
    hdp_advection(state, false)?;
    state.step += 1;
    state.time = state.step as f64 * state.dt;
    Ok(())
}

fn cell_total_density(state: &SimState, k: usize) -> f64 {
    let c = &state.store.cells[k];
    let dev = state.store.n_eff * (c.pos.len() as f64 - c.neg.len() as f64) / state.grid.dx;
    let rho_m = state.mfield.rho[k];
    // a deviational excess can in principle drive the sum negative; never let
    // the collision rate fall below a small fraction of the Maxwellian one
    (rho_m + dev).max(0.05 * rho_m)
}

/// Coulomb collisions (coarse DSMC, deviational-vs-coarse, `ΔM` sampling),
/// field solve, advection, then the resampling policy.
pub fn step_hdp_vpl(state: &mut SimState) -> Result<()> {
    let s = state.scenario.clone();
    let grid = state.grid;
    let params = ScatterParams::new(s.a_coef, state.dt);
    let step_id = state.step as u64 + 1;
    let mut created: Vec<SignedParticle> = Vec::new();
    for k in 0..grid.n_cells {
        let rho_cell = cell_total_density(state, k);
        let m = state.mfield.get(k);
        let mut rng = stream(s.seed, step_id, k as u64, Phase::Collision);
        let cell = &mut state.store.cells[k];
        ta_collide_cell(&mut cell.coarse, &params, rho_cell, &mut rng);
        let sources: Vec<(Vec3, Sign)> = cell
            .pos
            .iter()
            .map(|p| (p.v, Sign::Positive))
            .chain(cell.neg.iter().map(|p| (p.v, Sign::Negative)))
            .collect();
        let before = s.enforce_moments.then(|| momentum_energy(cell));
        {
            let coarse = &cell.coarse;
            let mut dev: Vec<&mut Particle> = cell.pos.iter_mut().chain(cell.neg.iter_mut()).collect();
            fd_fc_collide_cell(&mut dev, coarse, &params, rho_cell, k, &mut rng)?;
        }
        let mut drng = stream(s.seed, step_id, k as u64, Phase::DeltaM);
        let eps_v = s.eps_v_factor * m.temp.sqrt();
        let mut batch = sample_delta_m(&sources, &m, &params, s.delta_m, eps_v, k, &grid, &mut drng)?;
        if let (Some((p0, e0)), false) = (before, batch.is_empty()) {
            // ΔM carries the Maxwellian side of the deviational collisions:
            // make it cancel the deviational particles' own change exactly
            let (p1, e1) = momentum_energy(cell);
            let mut erng = stream(s.seed, step_id, k as u64, Phase::Enforce);
            let dp = p0 - p1;
            enforce_batch_moments(&mut batch, [0.0, dp[0], dp[1], dp[2], e0 - e1], &mut erng);
        }
        state.stats.delta_m += batch.len();
        created.extend(batch);
    }
    for p in created {
        state.store.insert_signed(&grid, p);
    }
    hdp_advection(state, true)?;
    state.step += 1;
    state.time = state.step as f64 * state.dt;
    if !s.disable_resampling {
        resampling_policy(state)?;
    }
    Ok(())
}

/// Signed momentum and energy `Σ s v`, `Σ s |v|²/2` of a cell's deviational particles.
fn momentum_energy(cell: &CellBucket) -> (Vec3, f64) {
    let sum = |ps: &[Particle]| ps.iter().fold((Vec3::zeros(), 0.0), |(m, e), p| (m + p.v, e + 0.5 * p.v.norm_squared()));
    let (mp, ep) = sum(&cell.pos);
    let (mn, en) = sum(&cell.neg);
    (mp - mn, ep - en)
}

fn thermal(state: &SimState, k: usize) -> f64 {
    state.mfield.temp[k].sqrt()
}

/// Deviational resampling on trigger, coarse resampling when that fails to
/// restore `N_c ≥ N_d`, and periodic conforming resampling.
fn resampling_policy(state: &mut SimState) -> Result<()> {
    let s = state.scenario.clone();
    let grid = state.grid;
    let step_id = state.step as u64;
    let recon = s.recon();
    let conform = state.step % s.conform_every == 0;
    let cells: Vec<usize> = if conform {
        (0..grid.n_cells).filter(|&k| state.store.cells[k].n_dev() > 0).collect()
    } else {
        trigger_cells(&state.store.counts(), s.beta)
    };
    if cells.is_empty() {
        return Ok(());
    }
    let mut grids: Vec<Option<NodeGrid>> = vec![None; grid.n_cells];
    let mut failed = false;
    for &k in &cells {
        let mut rng = stream(s.seed, step_id, k as u64, Phase::Resample);
        let cell = &state.store.cells[k];
        let pre = cell.n_dev();
        let out = resample_deviational_cell(
            &cell.pos,
            &cell.neg,
            s.n_eff,
            &recon,
            state.mfield.get(k).u,
            thermal(state, k),
            k,
            &grid,
            &mut rng,
        )?;
        let post = out.pos.len() + out.neg.len();
        if pre > 0 && post as f64 > s.fail_ratio * pre as f64 {
            failed = true;
        }
        let cell = &mut state.store.cells[k];
        cell.pos = out.pos;
        cell.neg = out.neg;
        grids[k] = out.grid;
    }
    state.stats.resample_events += 1;

    let violated = state.store.counts().iter().any(|c| c.n_c < c.n_d());
    let mode = if failed || violated {
        CoarseMode::Grow
    } else if conform {
        CoarseMode::Conform
    } else {
        return Ok(());
    };
    let maxwell_mass: Vec<f64> = state.mfield.rho.iter().map(|r| r * grid.dx).collect();
    let n_dev: Vec<usize> = state.store.cells.iter().map(|c| c.n_dev()).collect();
    let old = state.store.n_eff_c;
    let new = new_coarse_weight(&maxwell_mass, &n_dev, s.gamma, s.beta, old, mode);
    log::debug!("coarse resampling ({mode:?}) at step {}: weight {old:.3e} -> {new:.3e}", state.step);
    for k in 0..grid.n_cells {
        if grids[k].is_none() {
            let c = &state.store.cells[k];
            grids[k] = reconstruct_cell(&c.pos, &c.neg, s.n_eff, &recon, state.mfield.get(k).u, thermal(state, k))?;
        }
        let mut rng = stream(s.seed, step_id, k as u64, Phase::CoarseResample);
        let m = state.mfield.get(k);
        state.store.cells[k].coarse = resample_coarse_cell(&m, grids[k].as_ref(), new, k, &grid, &mut rng)?;
    }
    state.store.n_eff_c = new;
    state.stats.coarse_resamples += 1;
    if let Some((k, c)) = state.store.counts().iter().enumerate().find(|(_, c)| c.n_c < c.n_d()) {
        return Err(HdpError::CoarseConstraint { cell: k, n_c: c.n_c, n_d: c.n_d() });
    }
    Ok(())
}

/// Full-particle reference: BGK replacement or pairwise Coulomb DSMC per
/// cell, field from the particle density, then the push.
pub fn step_pic_dsmc(state: &mut SimState) -> Result<()> {
    let s = state.scenario.clone();
    let grid = state.grid;
    let dt = state.dt;
    let step_id = state.step as u64 + 1;
    let params = ScatterParams::new(s.a_coef, dt);
    for k in 0..grid.n_cells {
        let mut rng = stream(s.seed, step_id, k as u64, Phase::Collision);
        let cell = &mut state.store.cells[k].coarse;
        let m = match particle_moments(cell, s.n_eff_c, grid.dx) {
            Ok(m) if m.temp > 0.0 => m,
            _ => state.mfield.get(k),
        };
        state.mfield.set(k, m);
        match s.system {
            System::VpBgk => {
                bgk_dsmc(cell, s.mu, dt, &m, s.scheme, &mut rng)?;
            }
            System::Vpl => ta_collide_cell(cell, &params, m.rho, &mut rng),
        }
    }
    let field = state.solve_field()?;
    push_store(&mut state.store, &field, dt, &grid, true);
    state.efield = field;
    state.step += 1;
    state.time = state.step as f64 * dt;
    Ok(())
}

/// Makes a batch's signed mass, momentum and energy exactly zero: random
/// majority-sign particles are dropped until the counts match, then the
/// positive velocities are mapped by `v ↦ m₋ + λ (v - m₊)` with
/// `λ² = Var₋ / Var₊`. Returns `false` (and leaves the velocities alone)
/// when the correction is singular.
pub fn enforce_zero_moments<R: Rng + ?Sized>(batch: &mut Vec<SignedParticle>, rng: &mut R) -> bool {
    enforce_batch_moments(batch, [0.0; 5], rng)
}

/// Generalization of [`enforce_zero_moments`] to prescribed signed moments
/// `(Σ s, Σ s v, Σ s |v|²/2)`. The mass target is rounded to an integer count
/// difference; particles are only ever dropped, never added.
pub fn enforce_batch_moments<R: Rng + ?Sized>(batch: &mut Vec<SignedParticle>, target: [f64; 5], rng: &mut R) -> bool {
    let count = |b: &[SignedParticle]| {
        let n_p = b.iter().filter(|p| p.sign == Sign::Positive).count();
        (n_p, b.len() - n_p)
    };
    let (n_p, n_n) = count(batch);
    let want = target[0].round() as i64;
    let have = n_p as i64 - n_n as i64;
    if have != want {
        let (sign, excess, pool) =
            if have > want { (Sign::Positive, have - want, n_p) } else { (Sign::Negative, want - have, n_n) };
        if excess as usize > pool {
            log::warn!("moment correction skipped: cannot reach signed count {want} from {have}");
            return false;
        }
        let idx: Vec<usize> = batch.iter().enumerate().filter(|(_, p)| p.sign == sign).map(|(i, _)| i).collect();
        let mut drop: Vec<usize> = index::sample(rng, idx.len(), excess as usize).iter().map(|j| idx[j]).collect();
        drop.sort_unstable();
        for i in drop.into_iter().rev() {
            batch.swap_remove(i);
        }
    }
    let (n_p, n_n) = count(batch);
    let momentum = Vec3::new(target[1], target[2], target[3]);
    let energy = target[4];
    if n_p == 0 {
        return n_n == 0 && momentum == Vec3::zeros() && energy == 0.0;
    }
    let stats = |sign: Sign| {
        let vs: Vec<Vec3> = batch.iter().filter(|p| p.sign == sign).map(|p| p.v).collect();
        if vs.is_empty() {
            return (Vec3::zeros(), 0.0);
        }
        let mean = vs.iter().fold(Vec3::zeros(), |a, v| a + v) / vs.len() as f64;
        let var = vs.iter().map(|v| (v - mean).norm_squared()).sum::<f64>() / vs.len() as f64;
        (mean, var)
    };
    let (mp, vp) = stats(Sign::Positive);
    let (mn, vn) = stats(Sign::Negative);
    let (np, nn) = (n_p as f64, n_n as f64);
    let shift = (momentum + nn * mn) / np;
    // Σ₊|v'|² = n₊|shift|² + λ² n₊ Var₊ must equal 2·energy + Σ₋|v|²
    let spread = (2.0 * energy + nn * (mn.norm_squared() + vn) - np * shift.norm_squared()) / np;
    if !(vp > 1e-300) {
        if spread.abs() <= 1e-14 * (1.0 + mn.norm_squared() + vn + shift.norm_squared()) {
            for p in batch.iter_mut().filter(|p| p.sign == Sign::Positive) {
                p.v = shift;
            }
            return true;
        }
        log::warn!("moment correction skipped: positive particles have no spread");
        return false;
    }
    if !(spread >= 0.0) {
        log::warn!("moment correction skipped: target energy below the shifted kinetic energy");
        return false;
    }
    let lambda = (spread / vp).sqrt();
    for p in batch.iter_mut().filter(|p| p.sign == Sign::Positive) {
        p.v = shift + lambda * (p.v - mp);
    }
    true
}

/// Time-resolved outputs of a run.
#[derive(Debug)]
pub struct RunOutput {
    pub series: Vec<EnergyRow>,
    pub snapshots: Vec<(f64, crate::diagnostics::Snapshot)>,
    pub wall_s: f64,
    pub final_state: SimState,
}

/// Runs a scenario to `t_end`, recording the energy series every step and
/// phase-space snapshots at the requested times.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput> {
    let mut state = init_scenario(s)?;
    let n_steps = s.n_steps()?;
    let mut series = Vec::with_capacity(n_steps + 1);
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = s.snapshot_times.clone();
    pending.sort_by(|a, b| a.total_cmp(b));
    pending.reverse();
    let mut compute = 0.0;
    let wall = |x: f64| if s.record_wall_time { x } else { 0.0 };
    series.push(state.energy_row(0.0)?);
    take_snapshots(&state, &mut pending, &mut snapshots)?;
    for _ in 0..n_steps {
        let t0 = Instant::now();
        state.step()?;
        compute += t0.elapsed().as_secs_f64();
        series.push(state.energy_row(wall(compute))?);
        take_snapshots(&state, &mut pending, &mut snapshots)?;
    }
    Ok(RunOutput { series, snapshots, wall_s: compute, final_state: state })
}

fn take_snapshots(
    state: &SimState,
    pending: &mut Vec<f64>,
    out: &mut Vec<(f64, crate::diagnostics::Snapshot)>,
) -> Result<()> {
    while let Some(&t) = pending.last() {
        if state.time + 0.5 * state.dt < t {
            break;
        }
        pending.pop();
        out.push((t, crate::diagnostics::Snapshot::of(state)?));
    }
    Ok(())
}
