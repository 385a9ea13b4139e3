#![allow(dead_code)]

use hdp_core::{Moments, Vec3};
use nalgebra::DMatrix;

/// Gauss-Hermite rule for the weight `exp(-x²/2) / √(2π)` (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// `∫ g(v) M(v) dv` by tensor Gauss-Hermite quadrature; exact for
/// polynomial `g` of degree `< 2n`.
pub fn integrate_against(m: &Moments, n: usize, g: impl Fn(&Vec3) -> f64) -> f64 {
    let rule = gauss_hermite(n);
    let s = m.temp.sqrt();
    let mut acc = 0.0;
    for &(x, wx) in &rule {
        for &(y, wy) in &rule {
            for &(z, wz) in &rule {
                let v = m.u + s * Vec3::new(x, y, z);
                acc += wx * wy * wz * g(&v);
            }
        }
    }
    m.rho * acc
}

/// `∫ h(v) dv` for `h = q(v) M(v)` given pointwise, by dividing out `M`.
pub fn integrate_density(m: &Moments, n: usize, h: impl Fn(&Vec3) -> f64) -> f64 {
    integrate_against(m, n, |v| h(v) / m.density_at(v))
}

/// `E[X^{2k}]` for `X ~ N(0, T)`: `T^k (2k-1)!!`.
pub fn gaussian_even_moment(temp: f64, k: u32) -> f64 {
    let dfact: f64 = (1..=k).map(|j| (2 * j - 1) as f64).product();
    temp.powi(k as i32) * dfact
}

/// Conserved moments `(1, v, |v|²/2)` of a signed particle set.
pub fn signed_moments(particles: &[(Vec3, f64)]) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (v, s) in particles {
        out[0] += s;
        out[1] += s * v[0];
        out[2] += s * v[1];
        out[3] += s * v[2];
        out[4] += s * 0.5 * v.norm_squared();
    }
    out
}

/// Mean and standard error of each component over repetitions.
pub fn mean_and_stderr(samples: &[[f64; 5]]) -> ([f64; 5], [f64; 5]) {
    let n = samples.len() as f64;
    let mut mean = [0.0; 5];
    let mut se = [0.0; 5];
    for i in 0..5 {
        mean[i] = samples.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0);
        se[i] = (var / n).sqrt();
    }
    (mean, se)
}
