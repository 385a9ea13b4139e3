//! Particle-number control. The deviational particles of a cell are turned into
//! a truncated Fourier series on a velocity box (fast path via nearest-grid-point
//! Taylor deposits and FFTs), and fresh particles are drawn from its positive
//! and negative parts, which cancels overlapping mass. Coarse particles are
//! redrawn from `M + f_d` with a new common weight.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{HdpError, Result};
use crate::maxwellian::Moments;
use crate::phase::{CellCounts, Particle, SpatialGrid, Vec3};
use crate::rng::stochastic_round;

/// Default padding of the velocity bounding box, as a fraction of its width.
pub const BOX_PAD: f64 = 0.05;
const ENVELOPE_SAFETY: f64 = 1.3;

/// Axis-aligned velocity box mapped affinely onto `[0, 2π]³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityBox {
    pub center: Vec3,
    pub half_width: Vec3,
}

impl VelocityBox {
    pub fn to_angle(&self, v: &Vec3) -> Vec3 {
        Vec3::from_fn(|i, _| PI * (v[i] - self.center[i]) / self.half_width[i] + PI)
    }

    pub fn to_velocity(&self, theta: &Vec3) -> Vec3 {
        Vec3::from_fn(|i, _| self.center[i] + (theta[i] - PI) * self.half_width[i] / PI)
    }

    /// `dθ/dv` volume factor.
    pub fn jacobian(&self) -> f64 {
        (0..3).map(|i| PI / self.half_width[i]).product()
    }

    pub fn contains(&self, v: &Vec3) -> bool {
        (0..3).all(|i| (v[i] - self.center[i]).abs() < self.half_width[i])
    }
}

/// Bounding box of `velocities` widened by `pad` of its width on each side.
/// Zero-width axes get a half-width of `10⁻³ · thermal`.
pub fn fit_box(velocities: &[Vec3], pad: f64, thermal: f64) -> Result<VelocityBox> {
    if velocities.is_empty() {
        return Err(HdpError::Domain("cannot fit a velocity box to no particles".into()));
    }
    let mut lo = velocities[0];
    let mut hi = velocities[0];
    for v in velocities {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let center = 0.5 * (lo + hi);
    let fallback = 1e-3 * thermal.max(f64::MIN_POSITIVE);
    let half_width = Vec3::from_fn(|i, _| {
        let w = hi[i] - lo[i];
        if w > 1e-12 * (1.0 + center[i].abs()) {
            0.5 * w + pad * w
        } else {
            fallback
        }
    });
    Ok(VelocityBox { center, half_width })
}

/// Nearest-grid-point deposits of `(1, δ, δδᵀ)` on a `k_grid³` periodic grid
/// in angle coordinates. `f2` stores `(xx, yy, zz, xy, xz, yz)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTriple {
    pub k_grid: usize,
    pub f0: Vec<f64>,
    pub f1: Vec<[f64; 3]>,
    pub f2: Vec<[f64; 6]>,
}

impl GridTriple {
    pub fn new(k_grid: usize) -> Self {
        let n = k_grid * k_grid * k_grid;
        Self { k_grid, f0: vec![0.0; n], f1: vec![[0.0; 3]; n], f2: vec![[0.0; 6]; n] }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.k_grid as f64
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.k_grid + j) * self.k_grid + k
    }

    /// Adds one particle of weight `weight` at angle `theta`.
    pub fn deposit(&mut self, theta: &Vec3, weight: f64) {
        let h = self.spacing();
        let n = self.k_grid as i64;
        let mut idx = [0usize; 3];
        let mut d = [0.0; 3];
        for a in 0..3 {
            let j = (theta[a] / h).round();
            d[a] = theta[a] - j * h;
            idx[a] = (j as i64).rem_euclid(n) as usize;
        }
        let id = self.index(idx[0], idx[1], idx[2]);
        self.f0[id] += weight;
        for a in 0..3 {
            self.f1[id][a] += weight * d[a];
        }
        let f2 = &mut self.f2[id];
        f2[0] += weight * d[0] * d[0];
        f2[1] += weight * d[1] * d[1];
        f2[2] += weight * d[2] * d[2];
        f2[3] += weight * d[0] * d[1];
        f2[4] += weight * d[0] * d[2];
        f2[5] += weight * d[1] * d[2];
    }
}

/// Deposits one sign's particles with weight `n_eff` each.
pub fn taylor_deposit(velocities: &[Vec3], vbox: &VelocityBox, k_grid: usize, n_eff: f64) -> Result<GridTriple> {
    if k_grid < 2 {
        return Err(HdpError::Parameter(format!("velocity grid needs at least 2 points, got {k_grid}")));
    }
    let mut t = GridTriple::new(k_grid);
    for v in velocities {
        t.deposit(&vbox.to_angle(v), n_eff);
    }
    Ok(t)
}

struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    fn process(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inverse } else { &self.forward };
        // last axis is contiguous
        plan.process(data);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    line[j] = data[(i * n + j) * n + k];
                }
                plan.process(&mut line);
                for j in 0..n {
                    data[(i * n + j) * n + k] = line[j];
                }
            }
        }
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    line[i] = data[(i * n + j) * n + k];
                }
                plan.process(&mut line);
                for i in 0..n {
                    data[(i * n + j) * n + k] = line[i];
                }
            }
        }
    }
}

/// Fourier coefficients `f̂_m = Σ_p w_p e^{-i m·θ_p}` for `|m|_∞ < K`, stored
/// with offset `K - 1` per axis, plus the velocity box.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFd {
    pub vbox: VelocityBox,
    pub k_modes: usize,
    pub coeffs: Vec<Complex64>,
}

impl SpectralFd {
    pub fn side(&self) -> usize {
        2 * self.k_modes - 1
    }

    pub fn coeff(&self, m: [i64; 3]) -> Complex64 {
        let off = self.k_modes as i64 - 1;
        let s = self.side();
        let idx = |x: i64| (x + off) as usize;
        self.coeffs[(idx(m[0]) * s + idx(m[1])) * s + idx(m[2])]
    }

    pub fn zeros(vbox: VelocityBox, k_modes: usize) -> Self {
        let s = 2 * k_modes - 1;
        Self { vbox, k_modes, coeffs: vec![Complex64::new(0.0, 0.0); s * s * s] }
    }

    /// Values of the truncated series at the nodes of a `k_grid³` grid, as
    /// mass per unit angle volume.
    pub fn node_values(&self, k_grid: usize) -> Vec<f64> {
        let n = k_grid;
        let mut data = vec![Complex64::new(0.0, 0.0); n * n * n];
        let k = self.k_modes as i64;
        for a in -(k - 1)..k {
            for b in -(k - 1)..k {
                for c in -(k - 1)..k {
                    let w = |x: i64| x.rem_euclid(n as i64) as usize;
                    data[(w(a) * n + w(b)) * n + w(c)] = self.coeff([a, b, c]);
                }
            }
        }
        Fft3::new(n).process(&mut data, true);
        let norm = (2.0 * PI).powi(-3);
        data.iter().map(|z| z.re * norm).collect()
    }
}

/// Fast coefficients from a signed (or single-sign) deposit:
/// `f̂_m ≈ F0_m - i m·F1_m - ½ mᵀ F2_m m`.
pub fn fourier_coefficients(triple: &GridTriple, vbox: VelocityBox, k_modes: usize) -> Result<SpectralFd> {
    let n = triple.k_grid;
    if k_modes < 1 || 2 * (k_modes - 1) >= n {
        return Err(HdpError::Parameter(format!(
            "need 1 <= K and 2(K-1) < K-grid, got K={k_modes}, grid={n}"
        )));
    }
    let fft = Fft3::new(n);
    let to_complex = |xs: &mut dyn Iterator<Item = f64>| -> Vec<Complex64> {
        xs.map(|x| Complex64::new(x, 0.0)).collect()
    };
    let mut f0 = to_complex(&mut triple.f0.iter().copied());
    fft.process(&mut f0, false);
    let mut f1: Vec<Vec<Complex64>> = (0..3)
        .map(|a| {
            let mut d = to_complex(&mut triple.f1.iter().map(|x| x[a]));
            fft.process(&mut d, false);
            d
        })
        .collect();
    let mut f2: Vec<Vec<Complex64>> = (0..6)
        .map(|a| {
            let mut d = to_complex(&mut triple.f2.iter().map(|x| x[a]));
            fft.process(&mut d, false);
            d
        })
        .collect();
    let mut out = SpectralFd::zeros(vbox, k_modes);
    let k = k_modes as i64;
    let s = out.side();
    let i = Complex64::new(0.0, 1.0);
    for a in -(k - 1)..k {
        for b in -(k - 1)..k {
            for c in -(k - 1)..k {
                let w = |x: i64| x.rem_euclid(n as i64) as usize;
                let id = (w(a) * n + w(b)) * n + w(c);
                let m = [a as f64, b as f64, c as f64];
                let lin = m[0] * f1[0][id] + m[1] * f1[1][id] + m[2] * f1[2][id];
                let quad = m[0] * m[0] * f2[0][id]
                    + m[1] * m[1] * f2[1][id]
                    + m[2] * m[2] * f2[2][id]
                    + 2.0 * (m[0] * m[1] * f2[3][id] + m[0] * m[2] * f2[4][id] + m[1] * m[2] * f2[5][id]);
                let o = |x: i64| (x + k - 1) as usize;
                out.coeffs[(o(a) * s + o(b)) * s + o(c)] = f0[id] - i * lin - 0.5 * quad;
            }
        }
    }
    f1.clear();
    f2.clear();
    Ok(out)
}

/// Net reconstruction (positive minus negative) from the two per-sign deposits.
pub fn fourier_reconstruct(
    pos: &GridTriple,
    neg: &GridTriple,
    vbox: VelocityBox,
    k_modes: usize,
) -> Result<SpectralFd> {
    let p = fourier_coefficients(pos, vbox, k_modes)?;
    let n = fourier_coefficients(neg, vbox, k_modes)?;
    Ok(SpectralFd {
        vbox,
        k_modes,
        coeffs: p.coeffs.iter().zip(&n.coeffs).map(|(a, b)| a - b).collect(),
    })
}

/// Direct summation `Σ_p w_p e^{-i m·θ_p}` for one mode.
pub fn direct_coefficient(thetas: &[Vec3], weight: f64, m: [i64; 3]) -> Complex64 {
    thetas
        .iter()
        .map(|t| {
            let ph = -(m[0] as f64 * t[0] + m[1] as f64 * t[1] + m[2] as f64 * t[2]);
            Complex64::new(ph.cos(), ph.sin()) * weight
        })
        .sum()
}

/// Truncated series at `v` as a velocity-space mass density; zero outside the box.
pub fn eval_fd(spec: &SpectralFd, v: &Vec3) -> f64 {
    if !spec.vbox.contains(v) {
        return 0.0;
    }
    let theta = spec.vbox.to_angle(v);
    let k = spec.k_modes as i64;
    let phases: Vec<Vec<Complex64>> = (0..3)
        .map(|a| (-(k - 1)..k).map(|m| Complex64::from_polar(1.0, m as f64 * theta[a])).collect())
        .collect();
    let s = spec.side();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..s {
        for b in 0..s {
            let pab = phases[0][a] * phases[1][b];
            let row = &spec.coeffs[(a * s + b) * s..(a * s + b + 1) * s];
            let inner: Complex64 = row.iter().zip(&phases[2]).map(|(c, p)| c * p).sum();
            acc += pab * inner;
        }
    }
    acc.re * (2.0 * PI).powi(-3) * spec.vbox.jacobian()
}

/// Node values of a reconstruction with trilinear interpolation between nodes
/// and a per-grid-cell sampling envelope for either sign.
#[derive(Clone, Debug)]
pub struct NodeGrid {
    pub vbox: VelocityBox,
    pub k_grid: usize,
    pub values: Vec<f64>,
}

impl NodeGrid {
    pub fn from_spectral(spec: &SpectralFd, k_grid: usize) -> Self {
        Self { vbox: spec.vbox, k_grid, values: spec.node_values(k_grid) }
    }

    fn h(&self) -> f64 {
        2.0 * PI / self.k_grid as f64
    }

    fn node(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.k_grid;
        self.values[((i % n) * n + (j % n)) * n + (k % n)]
    }

    /// Trilinear interpolation at angle `theta ∈ [0, 2π)³` (mass per angle volume).
    pub fn interp(&self, theta: &Vec3) -> f64 {
        let h = self.h();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let x = (theta[a] / h).clamp(0.0, self.k_grid as f64 - 1e-12);
            let f = x.floor();
            base[a] = f as usize;
            frac[a] = x - f;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let (di, dj, dk) = (corner >> 2 & 1, corner >> 1 & 1, corner & 1);
            let w = if di == 1 { frac[0] } else { 1.0 - frac[0] }
                * if dj == 1 { frac[1] } else { 1.0 - frac[1] }
                * if dk == 1 { frac[2] } else { 1.0 - frac[2] };
            acc += w * self.node(base[0] + di, base[1] + dj, base[2] + dk);
        }
        acc
    }

    /// Interpolated velocity-space mass density; zero outside the box.
    pub fn density_at(&self, v: &Vec3) -> f64 {
        if !self.vbox.contains(v) {
            return 0.0;
        }
        self.interp(&self.vbox.to_angle(v)) * self.vbox.jacobian()
    }

    /// Piecewise-constant envelope of `max(sign · F, 0)` per grid cell.
    pub fn envelope(&self, sign: f64) -> PartEnvelope {
        let n = self.k_grid;
        let h3 = self.h().powi(3);
        let mut cells = Vec::with_capacity(n * n * n);
        let mut cdf = Vec::with_capacity(n * n * n);
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut mx = 0.0f64;
                    for corner in 0..8 {
                        let (di, dj, dk) = (corner >> 2 & 1, corner >> 1 & 1, corner & 1);
                        mx = mx.max(sign * self.node(i + di, j + dj, k + dk));
                    }
                    let e = ENVELOPE_SAFETY * mx;
                    cells.push(e);
                    total += e * h3;
                    cdf.push(total);
                }
            }
        }
        PartEnvelope { sign, cells, cdf, total }
    }

    /// Exact mass of `max(sign · F_interp, 0)` estimated on the nodes.
    pub fn part_mass(&self, sign: f64) -> f64 {
        self.values.iter().map(|v| (sign * v).max(0.0)).sum::<f64>() * self.h().powi(3)
    }

    fn draw_candidate<R: Rng + ?Sized>(&self, env: &PartEnvelope, rng: &mut R) -> (Vec3, usize) {
        let target = rng.random::<f64>() * env.total;
        let c = env.cdf.partition_point(|&x| x < target).min(env.cells.len() - 1);
        let n = self.k_grid;
        let (i, j, k) = (c / (n * n), (c / n) % n, c % n);
        let h = self.h();
        let theta = Vec3::new(
            (i as f64 + rng.random::<f64>()) * h,
            (j as f64 + rng.random::<f64>()) * h,
            (k as f64 + rng.random::<f64>()) * h,
        );
        (theta, c)
    }

    /// Poisson-thinned draw of `max(sign · F, 0) / weight` particles.
    pub fn sample_part<R: Rng + ?Sized>(&self, sign: f64, weight: f64, rng: &mut R) -> Vec<Vec3> {
        let env = self.envelope(sign);
        if !(env.total > 0.0) {
            return Vec::new();
        }
        let n_cand = stochastic_round(env.total / weight, rng);
        let mut out = Vec::new();
        for _ in 0..n_cand {
            let (theta, c) = self.draw_candidate(&env, rng);
            let f = (sign * self.interp(&theta)).max(0.0);
            if rng.random::<f64>() * env.cells[c] < f {
                out.push(self.vbox.to_velocity(&theta));
            }
        }
        out
    }

    /// One draw from the normalized `max(sign · F, 0)`; `None` if it has no mass.
    pub fn sample_one<R: Rng + ?Sized>(&self, env: &PartEnvelope, rng: &mut R) -> Option<Vec3> {
        if !(env.total > 0.0) {
            return None;
        }
        for _ in 0..1_000_000 {
            let (theta, c) = self.draw_candidate(env, rng);
            let f = (env.sign * self.interp(&theta)).max(0.0);
            if rng.random::<f64>() * env.cells[c] < f {
                return Some(self.vbox.to_velocity(&theta));
            }
        }
        None
    }
}

/// Cell-wise constant bound of one signed part of a [`NodeGrid`].
#[derive(Clone, Debug)]
pub struct PartEnvelope {
    pub sign: f64,
    pub cells: Vec<f64>,
    pub cdf: Vec<f64>,
    pub total: f64,
}

/// Mode count used for a cell: `K` capped so that `(2K-1)³` stays below a
/// fixed fraction of the particle count (the reconstruction is otherwise
/// dominated by sampling noise). Never below 2.
pub fn effective_modes(k_modes: usize, n_particles: usize, adaptive: bool) -> usize {
    if !adaptive {
        return k_modes;
    }
    let side = (0.39 * n_particles as f64).cbrt();
    let cap = (((side + 1.0) / 2.0).floor() as usize).max(2);
    k_modes.min(cap)
}

/// Reconstruction settings shared by deviational and coarse resampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconSettings {
    pub k_modes: usize,
    pub adaptive: bool,
    /// Half-width cap of the velocity box around the cell's bulk velocity,
    /// in units of the thermal speed. Particles outside are not resampled.
    pub box_limit: f64,
}

impl ReconSettings {
    fn within(&self, v: &Vec3, bulk: &Vec3, thermal: f64) -> bool {
        let r = self.box_limit * thermal;
        (0..3).all(|i| (v[i] - bulk[i]).abs() <= r)
    }

    fn grid_for(&self, n: usize) -> (usize, usize) {
        let k = effective_modes(self.k_modes, n, self.adaptive);
        (k, 2 * k)
    }
}

/// Reconstruction of one cell's deviational population as a node grid, or
/// `None` when no deviational particle lies inside the capped box.
/// Particles outside `bulk ± box_limit · thermal` are ignored.
pub fn reconstruct_cell(
    pos: &[Particle],
    neg: &[Particle],
    n_eff: f64,
    settings: &ReconSettings,
    bulk: Vec3,
    thermal: f64,
) -> Result<Option<NodeGrid>> {
    let inside = |p: &&Particle| settings.within(&p.v, &bulk, thermal);
    let vs: Vec<Vec3> = pos.iter().chain(neg).filter(inside).map(|p| p.v).collect();
    if vs.is_empty() {
        return Ok(None);
    }
    let vbox = fit_box(&vs, BOX_PAD, thermal)?;
    let (k, k_grid) = settings.grid_for(vs.len());
    let mut triple = GridTriple::new(k_grid);
    for p in pos.iter().filter(inside) {
        triple.deposit(&vbox.to_angle(&p.v), n_eff);
    }
    for p in neg.iter().filter(inside) {
        triple.deposit(&vbox.to_angle(&p.v), -n_eff);
    }
    let spec = fourier_coefficients(&triple, vbox, k)?;
    Ok(Some(NodeGrid::from_spectral(&spec, k_grid)))
}

/// Replacement population of one cell.
#[derive(Clone, Debug, Default)]
pub struct ResampledCell {
    pub pos: Vec<Particle>,
    pub neg: Vec<Particle>,
    pub grid: Option<NodeGrid>,
}

/// Redraws a cell's deviational particles from the positive and negative
/// parts of the reconstructed `f_d`, with positions uniform in the cell.
/// Particles outside the capped box are carried over unchanged.
#[allow(clippy::too_many_arguments)]
pub fn resample_deviational_cell<R: Rng + ?Sized>(
    pos: &[Particle],
    neg: &[Particle],
    n_eff: f64,
    settings: &ReconSettings,
    bulk: Vec3,
    thermal: f64,
    cell: usize,
    grid: &SpatialGrid,
    rng: &mut R,
) -> Result<ResampledCell> {
    let outside = |ps: &[Particle]| -> Vec<Particle> {
        ps.iter().filter(|p| !settings.within(&p.v, &bulk, thermal)).copied().collect()
    };
    let mut kept_pos = outside(pos);
    let mut kept_neg = outside(neg);
    let Some(recon) = reconstruct_cell(pos, neg, n_eff, settings, bulk, thermal)? else {
        return Ok(ResampledCell { pos: kept_pos, neg: kept_neg, grid: None });
    };
    let left = grid.left_edge(cell);
    let place = |vs: Vec<Vec3>, rng: &mut R| -> Vec<Particle> {
        vs.into_iter().map(|v| Particle::new(left + rng.random::<f64>() * grid.dx, v)).collect()
    };
    let new_pos = recon.sample_part(1.0, n_eff, rng);
    let new_neg = recon.sample_part(-1.0, n_eff, rng);
    kept_pos.extend(place(new_pos, rng));
    kept_neg.extend(place(new_neg, rng));
    Ok(ResampledCell { pos: kept_pos, neg: kept_neg, grid: Some(recon) })
}

/// Cells to resample: none while every cell has `N_c ≥ N_d`; otherwise all
/// cells with `N_d ≥ β N_c`.
pub fn trigger_cells(counts: &[CellCounts], beta: f64) -> Vec<usize> {
    if counts.iter().all(|c| c.n_c >= c.n_d()) {
        return Vec::new();
    }
    counts
        .iter()
        .enumerate()
        .filter(|(_, c)| c.n_d() as f64 >= beta * c.n_c as f64)
        .map(|(k, _)| k)
        .collect()
}

/// Coarse-weight update rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoarseMode {
    /// Deviational resampling failed to reduce `N_d`: lower the weight until
    /// `N_c ≥ γ N_d / β` everywhere.
    Grow,
    /// Periodic relaxation: raise the weight back as far as `N_c ≥ γ N_d` allows.
    Conform,
}

/// New coarse weight from per-cell Maxwellian masses `ρ_M |C|` and `N_d`.
pub fn new_coarse_weight(
    maxwell_mass: &[f64],
    n_dev: &[usize],
    gamma: f64,
    beta: f64,
    old: f64,
    mode: CoarseMode,
) -> f64 {
    let cand = maxwell_mass
        .iter()
        .zip(n_dev)
        .filter(|(_, &n)| n > 0)
        .map(|(&m, &n)| m / (gamma * n as f64))
        .fold(f64::INFINITY, f64::min);
    if !cand.is_finite() {
        return old;
    }
    match mode {
        CoarseMode::Conform => cand.max(old),
        CoarseMode::Grow => old.min(cand * beta),
    }
}

/// Redraws a cell's coarse particles from `max(M + f_d, 0)`, with
/// `round(ρ_M |C| / n_eff_c)` particles placed uniformly in the cell.
///
/// Proposals come from `M + f_d⁺` and are accepted with probability
/// `max(M + f_d, 0) / (M + f_d⁺)`.
pub fn resample_coarse_cell<R: Rng + ?Sized>(
    m: &Moments,
    recon: Option<&NodeGrid>,
    n_eff_c: f64,
    cell: usize,
    grid: &SpatialGrid,
    rng: &mut R,
) -> Result<Vec<Particle>> {
    m.check()?;
    let volume = grid.cell_volume();
    let maxwell_mass = m.rho * volume;
    let count = stochastic_round(maxwell_mass / n_eff_c, rng);
    let left = grid.left_edge(cell);
    let mut out = Vec::with_capacity(count);
    let Some(recon) = recon else {
        for _ in 0..count {
            out.push(Particle::new(left + rng.random::<f64>() * grid.dx, m.sample_one(rng)));
        }
        return Ok(out);
    };
    let env = recon.envelope(1.0);
    let p_mass = recon.part_mass(1.0);
    let p_fd = p_mass / (p_mass + maxwell_mass);
    let unit = Moments { rho: maxwell_mass, ..*m };
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        if tries > 1000 * count + 10_000 {
            return Err(HdpError::Domain(format!("coarse resampling stalled in cell {cell}")));
        }
        let v = if rng.random::<f64>() < p_fd {
            match recon.sample_one(&env, rng) {
                Some(v) => v,
                None => m.sample_one(rng),
            }
        } else {
            m.sample_one(rng)
        };
        let maxw = unit.density_at(&v);
        let fd = recon.density_at(&v);
        let accept = (maxw + fd).max(0.0) / (maxw + fd.max(0.0));
        if rng.random::<f64>() < accept {
            out.push(Particle::new(left + rng.random::<f64>() * grid.dx, v));
        }
    }
    Ok(out)
}
