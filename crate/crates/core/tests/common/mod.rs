#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use regretlab::linalg::spectral_radius;
use regretlab::{CostSpec, Plant, Signal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let l = gaussian(rng, n, n);
    &l * l.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

/// Random matrix rescaled to spectral radius `rho`.
pub fn with_radius(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> DMatrix<f64> {
    loop {
        let f = gaussian(rng, n, n);
        let r = spectral_radius(&f);
        if r > 1e-6 {
            return f * (rho / r);
        }
    }
}

pub struct Instance {
    pub plant: Plant<f64>,
    pub cost: CostSpec<f64>,
    pub w: Signal<f64>,
}

/// Random plant with `n ≤ max_n`, `m ≤ max_m`, `ρ(A) ∈ [0.3, 1.3]` and a
/// disturbance of length `horizon`.
pub fn random_instance(seed: u64, max_n: usize, max_m: usize, horizon: usize) -> Instance {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m);
    let rho = rng.random_range(0.3..1.3);
    let a = with_radius(&mut rng, n, rho);
    let b = gaussian(&mut rng, n, m);
    let x0 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = random_spd(&mut rng, n, 0.2);
    let qt = random_spd(&mut rng, n, 0.2);
    let r = random_spd(&mut rng, m, 0.2);
    let x_bound = x0.norm().max(1.0);
    let plant = Plant::new(a, b, x0).unwrap();
    let cost = CostSpec::new(q, qt, r, x_bound).unwrap();
    let w = Signal::from_matrix(gaussian(&mut rng, n, horizon) * 0.5).unwrap();
    Instance { plant, cost, w }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
