//! Parameter sweeps: error against particle weight, error against time step,
//! and error against compute time for HDP versus PIC-DSMC.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{histogram, l1_error, loglog_slope, Histogram};
use crate::driver::{run_scenario, Method, Scenario};
use crate::error::{HdpError, Result};
use crate::output::SweepRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    ConvergenceDt,
    ConvergenceNeff,
    Efficiency,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::ConvergenceDt => "convergence_dt",
            SweepKind::ConvergenceNeff => "convergence_neff",
            SweepKind::Efficiency => "efficiency",
        }
    }
}

/// Ladder definitions. Factors multiply the base scenario's value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepPlan {
    /// Multipliers of `n_eff` (and `n_eff_c`) for the weight ladder.
    pub neff_factors: Vec<f64>,
    pub neff_reference_factor: f64,
    /// Values of `dt_factor` for the time-step ladder.
    pub dt_factors: Vec<f64>,
    pub dt_reference: f64,
    /// Weight used for every run of the time-step ladder.
    pub dt_ladder_neff: f64,
    pub alphas: Vec<f64>,
    /// Multipliers of `n_eff` for the HDP runs of the efficiency study. The
    /// coarse weight is left to adapt during the run.
    pub hdp_factors: Vec<f64>,
    /// Multipliers of `pic_neff` for the PIC-DSMC runs of the efficiency study.
    pub pic_factors: Vec<f64>,
    /// Base particle weight of the PIC-DSMC ladder; the scenario's `n_eff` when unset.
    pub pic_neff: Option<f64>,
    pub efficiency_reference_factor: f64,
    /// Independent seeds averaged per ladder point.
    pub repeats: usize,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            neff_factors: vec![8.0, 4.0, 2.0, 1.0],
            neff_reference_factor: 0.5,
            dt_factors: vec![0.2, 0.1, 0.05, 0.025],
            dt_reference: 0.00625,
            dt_ladder_neff: 1e-9,
            alphas: vec![0.1, 0.01, 0.001],
            hdp_factors: vec![8.0, 4.0, 2.0, 1.0],
            pic_factors: vec![8.0, 4.0, 2.0, 1.0],
            pic_neff: None,
            efficiency_reference_factor: 0.25,
            repeats: 1,
        }
    }
}

/// Sweep table plus fitted summaries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// `(label, log-log slope)`.
    pub slopes: Vec<(String, f64)>,
    /// `(alpha, PIC-DSMC cpu / HDP cpu at equal error)` for the efficiency study.
    pub advantages: Vec<(f64, f64)>,
}

fn final_histogram(s: &Scenario) -> Result<(Histogram, f64)> {
    let out = run_scenario(s)?;
    Ok((histogram(&out.final_state), out.wall_s))
}

fn seeded(s: &Scenario, offset: u64) -> Scenario {
    Scenario { seed: s.seed.wrapping_add(offset), ..s.clone() }
}

/// Mean error and wall time of `repeats` runs of `s` against `reference`.
fn measure(s: &Scenario, reference: &Histogram, repeats: usize) -> Result<(f64, f64)> {
    let mut err = 0.0;
    let mut wall = 0.0;
    for r in 0..repeats.max(1) {
        let (h, w) = final_histogram(&seeded(s, r as u64))?;
        err += l1_error(&h, reference)?;
        wall += w;
    }
    let n = repeats.max(1) as f64;
    Ok((err / n, wall / n))
}

const REFERENCE_SEED_OFFSET: u64 = 1_000_003;

pub fn convergence_neff(base: &Scenario, plan: &SweepPlan) -> Result<SweepResult> {
    let with = |f: f64| Scenario { n_eff: base.n_eff * f, n_eff_c: base.n_eff_c * f, ..base.clone() };
    let (reference, _) = final_histogram(&seeded(&with(plan.neff_reference_factor), REFERENCE_SEED_OFFSET))?;
    let mut res = SweepResult::default();
    for &f in &plan.neff_factors {
        let s = with(f);
        let (error, wall_s) = measure(&s, &reference, plan.repeats)?;
        log::info!("n_eff {:.3e}: error {error:.4e}", s.n_eff);
        res.rows.push(SweepRow { label: "n_eff".into(), param: s.n_eff, error, wall_s });
    }
    let xs: Vec<f64> = res.rows.iter().map(|r| r.param).collect();
    let ys: Vec<f64> = res.rows.iter().map(|r| r.error).collect();
    res.slopes.push(("n_eff".into(), loglog_slope(&xs, &ys)?.slope));
    Ok(res)
}

pub fn convergence_dt(base: &Scenario, plan: &SweepPlan) -> Result<SweepResult> {
    let with = |f: f64| Scenario { dt_factor: f, n_eff: plan.dt_ladder_neff, ..base.clone() };
    let (reference, _) = final_histogram(&seeded(&with(plan.dt_reference), REFERENCE_SEED_OFFSET))?;
    let mut res = SweepResult::default();
    for &f in &plan.dt_factors {
        let s = with(f);
        let dt = s.dt()?;
        let (error, wall_s) = measure(&s, &reference, plan.repeats)?;
        log::info!("dt {dt:.3e}: error {error:.4e}");
        res.rows.push(SweepRow { label: "dt".into(), param: dt, error, wall_s });
    }
    let xs: Vec<f64> = res.rows.iter().map(|r| r.param).collect();
    let ys: Vec<f64> = res.rows.iter().map(|r| r.error).collect();
    res.slopes.push(("dt".into(), loglog_slope(&xs, &ys)?.slope));
    Ok(res)
}

/// Compute time at which a method reaches `error`, from the fit
/// `log cpu = a + b log error` over its ladder.
fn cpu_at_error(rows: &[SweepRow], error: f64) -> Result<f64> {
    let es: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let cs: Vec<f64> = rows.iter().map(|r| r.wall_s.max(1e-6)).collect();
    let fit = loglog_slope(&es, &cs)?;
    Ok((fit.intercept + fit.slope * error.ln()).exp())
}

/// PIC-DSMC over HDP compute time at a common error level: the larger of the
/// two methods' best errors. PIC-DSMC time comes from its cost fit, HDP time
/// is the cheapest HDP run that is at least as accurate.
fn cpu_advantage(hdp: &[SweepRow], pic: &[SweepRow]) -> Result<f64> {
    let best = |rows: &[SweepRow]| rows.iter().map(|r| r.error).fold(f64::INFINITY, f64::min);
    let target = best(hdp).max(best(pic));
    let hdp_cpu = hdp
        .iter()
        .filter(|r| r.error <= target)
        .map(|r| r.wall_s.max(1e-6))
        .fold(f64::INFINITY, f64::min);
    Ok(cpu_at_error(pic, target)? / hdp_cpu)
}

pub fn efficiency(base: &Scenario, plan: &SweepPlan) -> Result<SweepResult> {
    let mut res = SweepResult::default();
    for &alpha in &plan.alphas {
        let hdp = Scenario { alpha, method: Method::Hdp, ..base.clone() };
        let pic = Scenario { alpha, method: Method::PicDsmc, n_eff_c: plan.pic_neff.unwrap_or(base.n_eff), ..base.clone() };
        let reference_s =
            Scenario { n_eff: hdp.n_eff * plan.efficiency_reference_factor, ..seeded(&hdp, REFERENCE_SEED_OFFSET) };
        let (reference, _) = final_histogram(&reference_s)?;
        let mut hdp_rows = Vec::new();
        for &f in &plan.hdp_factors {
            let s = Scenario { n_eff: hdp.n_eff * f, ..hdp.clone() };
            let (error, wall_s) = measure(&s, &reference, plan.repeats)?;
            log::info!("alpha {alpha}: hdp n_eff {:.3e} error {error:.4e} cpu {wall_s:.3}s", s.n_eff);
            hdp_rows.push(SweepRow { label: format!("hdp_alpha_{alpha}"), param: s.n_eff, error, wall_s });
        }
        let mut pic_rows = Vec::new();
        for &f in &plan.pic_factors {
            let s = Scenario { n_eff_c: pic.n_eff_c * f, ..pic.clone() };
            let (error, wall_s) = measure(&s, &reference, plan.repeats)?;
            log::info!("alpha {alpha}: pic n_eff {:.3e} error {error:.4e} cpu {wall_s:.3}s", s.n_eff_c);
            pic_rows.push(SweepRow { label: format!("pic_alpha_{alpha}"), param: s.n_eff_c, error, wall_s });
        }
        let ratio = cpu_advantage(&hdp_rows, &pic_rows)?;
        if !ratio.is_finite() {
            return Err(HdpError::Parameter(format!("efficiency ratio not finite at alpha {alpha}")));
        }
        for (label, rows) in [("hdp", &hdp_rows), ("pic", &pic_rows)] {
            let es: Vec<f64> = rows.iter().map(|r| r.error).collect();
            let cs: Vec<f64> = rows.iter().map(|r| r.wall_s.max(1e-6)).collect();
            res.slopes.push((format!("{label}_alpha_{alpha}"), loglog_slope(&cs, &es)?.slope));
        }
        res.advantages.push((alpha, ratio));
        res.rows.extend(hdp_rows);
        res.rows.extend(pic_rows);
    }
    Ok(res)
}

pub fn run_sweep(kind: SweepKind, base: &Scenario, plan: &SweepPlan) -> Result<SweepResult> {
    match kind {
        SweepKind::ConvergenceDt => convergence_dt(base, plan),
        SweepKind::ConvergenceNeff => convergence_neff(base, plan),
        SweepKind::Efficiency => efficiency(base, plan),
    }
}
