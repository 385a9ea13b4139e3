//! Phase-space histograms, the relative L1 error, and least-squares fits used
//! by the damping and convergence studies.

use crate::driver::{Method, SimState};
use crate::error::{HdpError, Result};
use crate::phase::Particle;

pub const V_BINS: usize = 64;
pub const V_MIN: f64 = -6.0;
pub const V_MAX: f64 = 6.0;

fn std_normal_cdf(s: f64) -> f64 {
    0.5 * libm::erfc(-s / std::f64::consts::SQRT_2)
}

/// Mass per `(x cell, v₁ bin)` on `n_x × V_BINS` bins over `v₁ ∈ [V_MIN, V_MAX)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub n_x: usize,
    pub n_v: usize,
    pub data: Vec<f64>,
}

impl Histogram {
    pub fn zeros(n_x: usize) -> Self {
        Self { n_x, n_v: V_BINS, data: vec![0.0; n_x * V_BINS] }
    }

    pub fn dv() -> f64 {
        (V_MAX - V_MIN) / V_BINS as f64
    }

    pub fn bin_of(v1: f64) -> Option<usize> {
        if !(V_MIN..V_MAX).contains(&v1) {
            return None;
        }
        Some((((v1 - V_MIN) / Self::dv()) as usize).min(V_BINS - 1))
    }

    pub fn add_particles(&mut self, k: usize, particles: &[Particle], weight: f64) {
        for p in particles {
            if let Some(b) = Self::bin_of(p.v[0]) {
                self.data[k * self.n_v + b] += weight;
            }
        }
    }

    /// Adds the exact bin masses of a Maxwellian with density `rho` over a
    /// cell of width `dx`.
    pub fn add_maxwellian(&mut self, k: usize, rho: f64, u1: f64, temp: f64, dx: f64) {
        let s = temp.sqrt();
        let dv = Self::dv();
        let mut lo = std_normal_cdf((V_MIN - u1) / s);
        for b in 0..self.n_v {
            let hi = std_normal_cdf((V_MIN + (b + 1) as f64 * dv - u1) / s);
            self.data[k * self.n_v + b] += rho * dx * (hi - lo);
            lo = hi;
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn same_binning(&self, other: &Histogram) -> bool {
        self.n_x == other.n_x && self.n_v == other.n_v
    }
}

/// Histogram of `f = M + f_d` (HDP) or of the particles (PIC-DSMC).
pub fn histogram(state: &SimState) -> Histogram {
    let g = &state.grid;
    let mut h = Histogram::zeros(g.n_cells);
    match state.scenario.method {
        Method::Hdp => {
            for k in 0..g.n_cells {
                let m = state.mfield.get(k);
                h.add_maxwellian(k, m.rho, m.u[0], m.temp, g.dx);
                let c = &state.store.cells[k];
                h.add_particles(k, &c.pos, state.store.n_eff);
                h.add_particles(k, &c.neg, -state.store.n_eff);
            }
        }
        Method::PicDsmc => {
            for k in 0..g.n_cells {
                h.add_particles(k, &state.store.cells[k].coarse, state.store.n_eff_c);
            }
        }
    }
    h
}

/// `‖f - f_ref‖₁ / ‖f‖₁` over histogram bins.
pub fn l1_error(f: &Histogram, reference: &Histogram) -> Result<f64> {
    if !f.same_binning(reference) {
        return Err(HdpError::Binning(format!(
            "{}x{} bins vs reference {}x{}",
            f.n_x, f.n_v, reference.n_x, reference.n_v
        )));
    }
    let norm = f.l1_norm();
    if !(norm > 0.0) {
        return Err(HdpError::Binning("empty histogram".into()));
    }
    let diff: f64 = f.data.iter().zip(&reference.data).map(|(a, b)| (a - b).abs()).sum();
    Ok(diff / norm)
}

/// Phase-space densities on the histogram bins (mass / (Δx Δv₁)).
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub n_x: usize,
    pub maxwellian: Vec<f64>,
    pub fd_pos: Vec<f64>,
    pub fd_neg: Vec<f64>,
    pub total: Vec<f64>,
}

impl Snapshot {
    pub fn of(state: &SimState) -> Result<Self> {
        let g = &state.grid;
        let n = g.n_cells;
        let area = g.dx * Histogram::dv();
        let mut m = Histogram::zeros(n);
        let mut pos = Histogram::zeros(n);
        let mut neg = Histogram::zeros(n);
        let mut tot = Histogram::zeros(n);
        for k in 0..n {
            let c = &state.store.cells[k];
            match state.scenario.method {
                Method::Hdp => {
                    let mk = state.mfield.get(k);
                    m.add_maxwellian(k, mk.rho, mk.u[0], mk.temp, g.dx);
                    pos.add_particles(k, &c.pos, state.store.n_eff);
                    neg.add_particles(k, &c.neg, state.store.n_eff);
                }
                Method::PicDsmc => tot.add_particles(k, &c.coarse, state.store.n_eff_c),
            }
        }
        if state.scenario.method == Method::Hdp {
            for i in 0..tot.data.len() {
                tot.data[i] = m.data[i] + pos.data[i] - neg.data[i];
            }
        }
        let scale = |h: Histogram| h.data.into_iter().map(|x| x / area).collect();
        Ok(Self { n_x: n, maxwellian: scale(m), fd_pos: scale(pos), fd_neg: scale(neg), total: scale(tot) })
    }
}

/// Ordinary least-squares line `y = intercept + slope x` with the standard
/// error of the slope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(HdpError::Parameter(format!("line fit needs >= 2 matched points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(HdpError::Parameter("line fit needs distinct abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { slope, intercept, slope_stderr })
}

/// Slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(HdpError::Parameter("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_line(&lx, &ly)
}

/// Exponential decay rate of an oscillating positive signal.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    /// `γ` in `y ∝ exp(-γ t)` along the envelope of local maxima.
    pub rate: f64,
    pub stderr: f64,
    pub peak_times: Vec<f64>,
}

/// Fits `ln y = c - γ t` through the local maxima of `y`. A sample is a peak
/// when it is the largest value within `±half_window` and its window lies
/// inside the data (the first sample counts if it dominates its right side).
/// Only samples with `t ≤ t_max` are used.
pub fn fit_decay_rate(ts: &[f64], ys: &[f64], half_window: f64, t_max: f64) -> Result<DecayFit> {
    let n = ts.len().min(ys.len());
    let t_last = ts[..n].iter().copied().filter(|t| *t <= t_max).fold(f64::NEG_INFINITY, f64::max);
    let mut px = Vec::new();
    let mut py = Vec::new();
    for i in 0..n {
        let t = ts[i];
        if t > t_max || t + half_window > t_last || !(ys[i] > 0.0) {
            continue;
        }
        let is_peak = (0..n)
            .filter(|&j| (ts[j] - t).abs() <= half_window)
            .all(|j| ys[j] <= ys[i]);
        if is_peak {
            px.push(t);
            py.push(ys[i].ln());
        }
    }
    if px.len() < 2 {
        return Err(HdpError::Parameter(format!("found {} peaks, need at least 2", px.len())));
    }
    let fit = fit_line(&px, &py)?;
    Ok(DecayFit { rate: -fit.slope, stderr: fit.slope_stderr, peak_times: px })
}
