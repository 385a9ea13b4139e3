//! Phase-space data model: the periodic spatial grid, particle types, the
//! per-cell particle store and moment deposition.

use nalgebra::Vector3;

use crate::error::{HdpError, Result};
use crate::maxwellian::Moments;

pub type Vec3 = Vector3<f64>;

/// Uniform periodic grid on `[0, length)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialGrid {
    pub length: f64,
    pub n_cells: usize,
    pub dx: f64,
}

impl SpatialGrid {
    pub fn new(length: f64, n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(HdpError::InvalidGrid(format!("need at least 2 cells, got {n_cells}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(HdpError::InvalidGrid(format!("bad domain length {length}")));
        }
        Ok(Self { length, n_cells, dx: length / n_cells as f64 })
    }

    /// The `[0, 4π)` domain used by the Landau damping runs.
    pub fn landau(n_cells: usize) -> Result<Self> {
        Self::new(4.0 * std::f64::consts::PI, n_cells)
    }

    pub fn wrap(&self, x: f64) -> f64 {
        if (0.0..self.length).contains(&x) {
            return x;
        }
        let shifted = if x < 0.0 { x + self.length } else { x - self.length };
        if (0.0..self.length).contains(&shifted) {
            return shifted;
        }
        let w = x.rem_euclid(self.length);
        // rem_euclid can round up to exactly `length` for tiny negative x
        if w >= self.length {
            0.0
        } else {
            w
        }
    }

    pub fn cell_of(&self, x: f64) -> usize {
        // wrap gives x ≥ 0, where truncation is floor
        let k = (self.wrap(x) / self.dx) as usize;
        k.min(self.n_cells - 1)
    }

    /// Cell center.
    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dx
    }

    pub fn left_edge(&self, k: usize) -> f64 {
        k as f64 * self.dx
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx
    }
}

pub fn cell_of(x: f64, grid: &SpatialGrid) -> usize {
    grid.cell_of(x)
}

/// Sign carried by a deviational particle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }

    pub fn of(x: f64) -> Sign {
        if x >= 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }
}

/// Position and velocity. Coarse and full-f particles are plain `Particle`s;
/// deviational particles get their sign from the bucket they live in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub x: f64,
    pub v: Vec3,
}

impl Particle {
    pub fn new(x: f64, v: Vec3) -> Self {
        Self { x, v }
    }
}

pub type CoarseParticle = Particle;

/// One sample of `f_d` with its sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedParticle {
    pub x: f64,
    pub v: Vec3,
    pub sign: Sign,
}

impl SignedParticle {
    pub fn new(x: f64, v: Vec3, sign: Sign) -> Self {
        Self { x, v, sign }
    }

    pub fn particle(&self) -> Particle {
        Particle { x: self.x, v: self.v }
    }
}

/// Particles of one spatial cell.
#[derive(Clone, Debug, Default)]
pub struct CellBucket {
    pub pos: Vec<Particle>,
    pub neg: Vec<Particle>,
    pub coarse: Vec<Particle>,
}

impl CellBucket {
    pub fn n_dev(&self) -> usize {
        self.pos.len() + self.neg.len()
    }

    pub fn signed(&self, sign: Sign) -> &Vec<Particle> {
        match sign {
            Sign::Positive => &self.pos,
            Sign::Negative => &self.neg,
        }
    }

    pub fn signed_mut(&mut self, sign: Sign) -> &mut Vec<Particle> {
        match sign {
            Sign::Positive => &mut self.pos,
            Sign::Negative => &mut self.neg,
        }
    }

    /// All deviational particles with their signs, positives first.
    pub fn signed_particles(&self) -> Vec<SignedParticle> {
        self.pos
            .iter()
            .map(|p| SignedParticle::new(p.x, p.v, Sign::Positive))
            .chain(self.neg.iter().map(|p| SignedParticle::new(p.x, p.v, Sign::Negative)))
            .collect()
    }
}

/// Struct-of-buckets particle store. `n_eff` is the physical mass carried by one
/// deviational particle, `n_eff_c` the mass of one coarse (or full-f) particle.
#[derive(Clone, Debug)]
pub struct CellStore {
    pub cells: Vec<CellBucket>,
    pub n_eff: f64,
    pub n_eff_c: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CellCounts {
    pub n_p: usize,
    pub n_n: usize,
    pub n_c: usize,
}

impl CellCounts {
    pub fn n_d(&self) -> usize {
        self.n_p + self.n_n
    }
}

impl CellStore {
    pub fn new(n_cells: usize, n_eff: f64, n_eff_c: f64) -> Self {
        Self { cells: vec![CellBucket::default(); n_cells], n_eff, n_eff_c }
    }

    pub fn insert_signed(&mut self, grid: &SpatialGrid, p: SignedParticle) {
        let x = grid.wrap(p.x);
        let k = grid.cell_of(x);
        self.cells[k].signed_mut(p.sign).push(Particle::new(x, p.v));
    }

    pub fn insert_coarse(&mut self, grid: &SpatialGrid, p: Particle) {
        let x = grid.wrap(p.x);
        let k = grid.cell_of(x);
        self.cells[k].coarse.push(Particle::new(x, p.v));
    }

    pub fn counts(&self) -> Vec<CellCounts> {
        self.cells
            .iter()
            .map(|c| CellCounts { n_p: c.pos.len(), n_n: c.neg.len(), n_c: c.coarse.len() })
            .collect()
    }

    pub fn total(&self) -> CellCounts {
        self.cells.iter().fold(CellCounts::default(), |acc, c| CellCounts {
            n_p: acc.n_p + c.pos.len(),
            n_n: acc.n_n + c.neg.len(),
            n_c: acc.n_c + c.coarse.len(),
        })
    }

    /// Signed deviational density `N_eff (N_p - N_n) / |C|` per cell.
    pub fn signed_density(&self, grid: &SpatialGrid) -> Vec<f64> {
        let w = self.n_eff / grid.cell_volume();
        self.cells.iter().map(|c| w * (c.pos.len() as f64 - c.neg.len() as f64)).collect()
    }

    /// Coarse (or full-f) density `N_eff^c N_c / |C|` per cell.
    pub fn coarse_density(&self, grid: &SpatialGrid) -> Vec<f64> {
        let w = self.n_eff_c / grid.cell_volume();
        self.cells.iter().map(|c| w * c.coarse.len() as f64).collect()
    }

    /// Moves every particle whose position left its cell into the right bucket.
    /// Iteration order is fixed, so the result is deterministic.
    /// Applies `update` to every particle of the selected buckets, then moves
    /// the ones that changed cell.
    pub fn update_and_rebucket<F>(&mut self, grid: &SpatialGrid, include_coarse: bool, mut update: F)
    where
        F: FnMut(usize, &mut Particle),
    {
        let mut moved: [Vec<(usize, Particle)>; 3] = Default::default();
        for (k, cell) in self.cells.iter_mut().enumerate() {
            let buckets = [&mut cell.pos, &mut cell.neg, &mut cell.coarse];
            for (b, bucket) in buckets.into_iter().enumerate() {
                if b == 2 && !include_coarse {
                    continue;
                }
                bucket.retain_mut(|p| {
                    update(k, p);
                    let j = grid.cell_of(p.x);
                    if j == k {
                        true
                    } else {
                        moved[b].push((j, *p));
                        false
                    }
                });
            }
        }
        let [pos, neg, coarse] = moved;
        for (j, p) in pos {
            self.cells[j].pos.push(p);
        }
        for (j, p) in neg {
            self.cells[j].neg.push(p);
        }
        for (j, p) in coarse {
            self.cells[j].coarse.push(p);
        }
    }

    pub fn rebucket(&mut self, grid: &SpatialGrid) {
        let mut moved_pos = Vec::new();
        let mut moved_neg = Vec::new();
        let mut moved_coarse = Vec::new();
        for (k, cell) in self.cells.iter_mut().enumerate() {
            extract_leavers(&mut cell.pos, k, grid, &mut moved_pos);
            extract_leavers(&mut cell.neg, k, grid, &mut moved_neg);
            extract_leavers(&mut cell.coarse, k, grid, &mut moved_coarse);
        }
        for (j, p) in moved_pos {
            self.cells[j].pos.push(p);
        }
        for (j, p) in moved_neg {
            self.cells[j].neg.push(p);
        }
        for (j, p) in moved_coarse {
            self.cells[j].coarse.push(p);
        }
    }

    /// Every particle sits in the bucket of its own cell.
    pub fn is_consistent(&self, grid: &SpatialGrid) -> bool {
        self.cells.iter().enumerate().all(|(k, c)| {
            c.pos
                .iter()
                .chain(c.neg.iter())
                .chain(c.coarse.iter())
                .all(|p| p.x >= 0.0 && p.x < grid.length && grid.cell_of(p.x) == k)
        })
    }
}

fn extract_leavers(
    bucket: &mut Vec<Particle>,
    k: usize,
    grid: &SpatialGrid,
    out: &mut Vec<(usize, Particle)>,
) {
    bucket.retain(|p| {
        let j = grid.cell_of(p.x);
        if j == k {
            true
        } else {
            out.push((j, *p));
            false
        }
    });
}

/// Per-cell macroscopic fields `(ρ, u, T)` defining the Maxwellian part.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentField {
    pub rho: Vec<f64>,
    pub u: Vec<Vec3>,
    pub temp: Vec<f64>,
}

impl MomentField {
    pub fn uniform(n_cells: usize, m: Moments) -> Self {
        Self { rho: vec![m.rho; n_cells], u: vec![m.u; n_cells], temp: vec![m.temp; n_cells] }
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(f64) -> Moments) -> Self {
        let ms: Vec<Moments> = (0..grid.n_cells).map(|k| f(grid.center(k))).collect();
        Self {
            rho: ms.iter().map(|m| m.rho).collect(),
            u: ms.iter().map(|m| m.u).collect(),
            temp: ms.iter().map(|m| m.temp).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn get(&self, k: usize) -> Moments {
        Moments { rho: self.rho[k], u: self.u[k], temp: self.temp[k] }
    }

    pub fn set(&mut self, k: usize, m: Moments) {
        self.rho[k] = m.rho;
        self.u[k] = m.u;
        self.temp[k] = m.temp;
    }

    pub fn total_mass(&self, grid: &SpatialGrid) -> f64 {
        self.rho.iter().sum::<f64>() * grid.dx
    }
}

/// Density, mean velocity and temperature of equally weighted samples.
///
/// An empty list yields [`HdpError::EmptyCell`]; a single particle yields
/// `T = 0`, which callers treat as degenerate.
pub fn deposit_moments(velocities: &[Vec3], weight: f64, cell_volume: f64) -> Result<Moments> {
    moments_of(velocities.iter(), weight, cell_volume)
}

/// [`deposit_moments`] over the velocities of `particles`.
pub fn particle_moments(particles: &[Particle], weight: f64, cell_volume: f64) -> Result<Moments> {
    moments_of(particles.iter().map(|p| &p.v), weight, cell_volume)
}

fn moments_of<'a, I>(velocities: I, weight: f64, cell_volume: f64) -> Result<Moments>
where
    I: Iterator<Item = &'a Vec3> + Clone,
{
    let n = velocities.clone().count();
    if n == 0 {
        return Err(HdpError::EmptyCell);
    }
    let n = n as f64;
    let mean = velocities.clone().fold(Vec3::zeros(), |a, v| a + v) / n;
    let ss: f64 = velocities.map(|v| (v - mean).norm_squared()).sum();
    Ok(Moments { rho: weight * n / cell_volume, u: mean, temp: ss / (3.0 * n) })
}

/// Five x-direction flux moments `⟨v₁ f_d φ⟩`, φ = (1, v, |v|²/2), for one cell.
pub type FluxMoments = [f64; 5];

pub fn flux_contribution(v: &Vec3) -> FluxMoments {
    let v1 = v[0];
    [v1, v1 * v[0], v1 * v[1], v1 * v[2], 0.5 * v1 * v.norm_squared()]
}

/// `N_eff/|C| (Σ_pos v₁φ − Σ_neg v₁φ)` per cell.
pub fn signed_flux_moments(store: &CellStore, grid: &SpatialGrid) -> Vec<FluxMoments> {
    let w = store.n_eff / grid.cell_volume();
    store
        .cells
        .iter()
        .map(|c| {
            let mut acc = [0.0; 5];
            for p in &c.pos {
                let f = flux_contribution(&p.v);
                acc.iter_mut().zip(f).for_each(|(a, b)| *a += b);
            }
            for p in &c.neg {
                let f = flux_contribution(&p.v);
                acc.iter_mut().zip(f).for_each(|(a, b)| *a -= b);
            }
            acc.map(|a| a * w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Phase};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    #[test]
    fn cell_lookup_examples() {
        let g = SpatialGrid::new(1.0, 10).unwrap();
        assert_eq!(g.cell_of(0.0), 0);
        let g = SpatialGrid::landau(400).unwrap();
        assert!((g.dx - PI / 100.0).abs() < 1e-15);
        assert_eq!(g.cell_of(4.0 * PI + 0.05), 1);
        assert_eq!(g.cell_of(-0.01), 399);
    }

    #[test]
    fn grid_rejects_single_cell() {
        assert!(matches!(SpatialGrid::new(1.0, 1), Err(HdpError::InvalidGrid(_))));
    }

    #[test]
    fn deposit_examples() {
        let vs = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        let m = deposit_moments(&vs, 0.5, 1.0).unwrap();
        assert!((m.rho - 1.0).abs() < 1e-15);
        assert!(m.u.norm() < 1e-15);
        assert!((m.temp - 1.0 / 3.0).abs() < 1e-15);

        let c = Vec3::new(0.3, -1.2, 2.0);
        let m = deposit_moments(&[c], 7.0, 1.0).unwrap();
        assert_eq!(m.temp, 0.0);
        assert_eq!(m.u, c);

        assert!(matches!(deposit_moments(&[], 1.0, 1.0), Err(HdpError::EmptyCell)));
    }

    #[test]
    fn deposit_standard_normal_cloud() {
        let mut rng = stream(3, 0, 0, Phase::Init);
        let n = 1_000_000;
        let vs: Vec<Vec3> = (0..n)
            .map(|_| {
                Vec3::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            })
            .collect();
        let m = deposit_moments(&vs, 1e-6, 1.0).unwrap();
        assert!((m.rho - 1.0).abs() < 5e-3);
        assert!((m.temp - 1.0).abs() < 5e-3, "T = {}", m.temp);
    }

    #[test]
    fn flux_moments_examples() {
        let g = SpatialGrid::new(2.0, 2).unwrap();
        let mut store = CellStore::new(2, 1.0, 1.0);
        assert!(signed_flux_moments(&store, &g).iter().all(|f| f.iter().all(|x| *x == 0.0)));

        store.insert_signed(&g, SignedParticle::new(0.5, Vec3::new(2.0, 0.0, 0.0), Sign::Positive));
        let f = signed_flux_moments(&store, &g);
        assert_eq!(f[0], [2.0, 4.0, 0.0, 0.0, 4.0]);

        let v = Vec3::new(0.7, -0.2, 1.1);
        let mut store = CellStore::new(2, 1.0, 1.0);
        store.insert_signed(&g, SignedParticle::new(1.5, v, Sign::Positive));
        store.insert_signed(&g, SignedParticle::new(1.2, v, Sign::Negative));
        assert!(signed_flux_moments(&store, &g).iter().all(|f| f.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn rebucket_keeps_store_consistent() {
        let g = SpatialGrid::new(1.0, 4).unwrap();
        let mut store = CellStore::new(4, 1.0, 1.0);
        for i in 0..20 {
            let x = i as f64 * 0.05;
            store.insert_signed(&g, SignedParticle::new(x, Vec3::zeros(), Sign::of(x - 0.5)));
            store.insert_coarse(&g, Particle::new(x, Vec3::zeros()));
        }
        for c in store.cells.iter_mut() {
            for p in c.pos.iter_mut().chain(c.neg.iter_mut()).chain(c.coarse.iter_mut()) {
                p.x = g.wrap(p.x + 0.37);
            }
        }
        assert!(!store.is_consistent(&g));
        let before = store.total();
        store.rebucket(&g);
        assert!(store.is_consistent(&g));
        assert_eq!(store.total(), before);
    }

    proptest! {
        #[test]
        fn cell_lookup_is_periodic(x in -100.0f64..100.0) {
            let g = SpatialGrid::landau(400).unwrap();
            prop_assert_eq!(g.cell_of(x + g.length), g.cell_of(x));
        }

        #[test]
        fn deposit_is_translation_equivariant(
            vs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 2..40),
            shift in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        ) {
            let vs: Vec<Vec3> = vs.into_iter().map(|(a, b, c)| Vec3::new(a, b, c)).collect();
            let s = Vec3::new(shift.0, shift.1, shift.2);
            let shifted: Vec<Vec3> = vs.iter().map(|v| v + s).collect();
            let m0 = deposit_moments(&vs, 0.1, 1.0).unwrap();
            let m1 = deposit_moments(&shifted, 0.1, 1.0).unwrap();
            prop_assert!((m1.u - m0.u - s).norm() < 1e-12);
            prop_assert!((m1.temp - m0.temp).abs() < 1e-11 * (1.0 + m0.temp));
        }

        #[test]
        fn flux_moments_flip_with_sign(
            vs in proptest::collection::vec((0.0f64..2.0, -3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0, any::<bool>()), 1..30),
        ) {
            let g = SpatialGrid::new(2.0, 4).unwrap();
            let mut a = CellStore::new(4, 0.3, 1.0);
            let mut b = CellStore::new(4, 0.3, 1.0);
            for (x, v1, v2, v3, s) in vs {
                let sign = if s { Sign::Positive } else { Sign::Negative };
                let v = Vec3::new(v1, v2, v3);
                a.insert_signed(&g, SignedParticle::new(x, v, sign));
                b.insert_signed(&g, SignedParticle::new(x, v, sign.flip()));
            }
            let fa = signed_flux_moments(&a, &g);
            let fb = signed_flux_moments(&b, &g);
            for (ca, cb) in fa.iter().zip(&fb) {
                for (x, y) in ca.iter().zip(cb) {
                    prop_assert!((x + y).abs() < 1e-12);
                }
            }
        }
    }
}
