//! Periodic 1D Poisson solve `-dE/dx = ρ - mean(ρ)` and the field energy.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{HdpError, Result};
use crate::phase::SpatialGrid;

/// Cell-centered x-component of the electric field. Zero mean by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct EField(pub Vec<f64>);

impl EField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn at_cell(&self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Spectral solver with cached FFT plans for one grid size.
#[derive(Clone)]
pub struct PoissonSolver {
    grid: SpatialGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver").field("grid", &self.grid).finish()
    }
}

impl PoissonSolver {
    pub fn new(grid: SpatialGrid) -> Result<Self> {
        if grid.n_cells < 2 {
            return Err(HdpError::InvalidGrid("poisson solve needs at least 2 cells".into()));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n_cells);
        let inverse = planner.plan_fft_inverse(grid.n_cells);
        Ok(Self { grid, forward, inverse })
    }

    pub fn solve(&self, rho: &[f64]) -> Result<EField> {
        let n = self.grid.n_cells;
        if rho.len() != n {
            return Err(HdpError::InvalidGrid(format!(
                "density has {} cells, grid has {n}",
                rho.len()
            )));
        }
        if let Some(k) = rho.iter().position(|r| !r.is_finite()) {
            return Err(HdpError::NonPhysical { cell: k, what: "non-finite density".into() });
        }
        let mut buf: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        self.forward.process(&mut buf);

        // -i k E_k = rho_k  =>  E_k = i rho_k / k
        let base = 2.0 * PI / self.grid.length;
        buf[0] = Complex64::new(0.0, 0.0);
        for (j, c) in buf.iter_mut().enumerate().skip(1) {
            if 2 * j == n {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            let m = if 2 * j < n { j as f64 } else { j as f64 - n as f64 };
            let k = base * m;
            *c = Complex64::new(0.0, 1.0) * *c / k;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        Ok(EField(buf.iter().map(|c| c.re * scale).collect()))
    }
}

pub fn solve_poisson(rho: &[f64], grid: &SpatialGrid) -> Result<EField> {
    PoissonSolver::new(*grid)?.solve(rho)
}

/// `‖E‖² = Δx Σ_k E_k²`.
pub fn electric_energy(field: &EField, grid: &SpatialGrid) -> f64 {
    grid.dx * field.0.iter().map(|e| e * e).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn landau_rho(grid: &SpatialGrid, alpha: f64) -> Vec<f64> {
        (0..grid.n_cells).map(|k| 1.0 + alpha * grid.center(k).sin()).collect()
    }

    #[test]
    fn uniform_density_gives_zero_field() {
        let g = SpatialGrid::landau(400).unwrap();
        let e = solve_poisson(&vec![1.0; 400], &g).unwrap();
        assert!(e.0.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn sine_density_gives_cosine_field() {
        let g = SpatialGrid::landau(400).unwrap();
        for alpha in [0.01, 0.4] {
            let e = solve_poisson(&landau_rho(&g, alpha), &g).unwrap();
            let err = (0..400)
                .map(|k| (e.0[k] - alpha * g.center(k).cos()).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "alpha {alpha}: {err}");
            let energy = electric_energy(&e, &g);
            assert!((energy - 2.0 * PI * alpha * alpha).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_field_energy() {
        let g = SpatialGrid::landau(37).unwrap();
        let e = EField(vec![0.3; 37]);
        assert!((electric_energy(&e, &g) - 4.0 * PI * 0.09).abs() < 1e-13);
        assert_eq!(electric_energy(&EField::zeros(37), &g), 0.0);
    }

    #[test]
    fn central_difference_residual_is_second_order() {
        let mut prev = f64::INFINITY;
        for n in [50, 100, 200] {
            let g = SpatialGrid::landau(n).unwrap();
            let rho: Vec<f64> = (0..n).map(|k| 1.0 + 0.3 * (0.5 * g.center(k)).sin()).collect();
            let e = solve_poisson(&rho, &g).unwrap();
            let res = (0..n)
                .map(|k| {
                    let d = -(e.0[(k + 1) % n] - e.0[(k + n - 1) % n]) / (2.0 * g.dx);
                    (d - (rho[k] - 1.0)).abs()
                })
                .fold(0.0, f64::max);
            assert!(res < prev / 3.5 || prev.is_infinite(), "{res} vs {prev}");
            prev = res;
        }
    }

    #[test]
    fn single_cell_grid_is_rejected() {
        let g = SpatialGrid { length: 1.0, n_cells: 1, dx: 1.0 };
        assert!(matches!(solve_poisson(&[1.0], &g), Err(HdpError::InvalidGrid(_))));
    }

    proptest! {
        #[test]
        fn solve_is_linear_and_zero_mean(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            r1 in proptest::collection::vec(-1.0f64..1.0, 16),
            r2 in proptest::collection::vec(-1.0f64..1.0, 16),
        ) {
            let g = SpatialGrid::new(2.5, 16).unwrap();
            let s = PoissonSolver::new(g).unwrap();
            let mix: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + b * y).collect();
            let e1 = s.solve(&r1).unwrap();
            let e2 = s.solve(&r2).unwrap();
            let em = s.solve(&mix).unwrap();
            for k in 0..16 {
                prop_assert!((em.0[k] - a * e1.0[k] - b * e2.0[k]).abs() < 1e-12);
            }
            prop_assert!(em.0.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
