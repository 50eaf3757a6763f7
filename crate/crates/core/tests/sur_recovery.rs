//! Support recovery of the thresholded SUR residual covariance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use factorcov::simulation::GaussianSampler;
use factorcov::sur::{sur_ols, sur_threshold, SurEquation, SurModel};
use factorcov::{SymMatrix, ThresholdedCovariance};

const BLOCK: usize = 4;
const P: usize = 20;
const T: usize = 2000;

fn block_diagonal(p: usize) -> SymMatrix {
    SymMatrix::symmetrize(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if i / BLOCK == j / BLOCK {
            0.5
        } else {
            0.0
        }
    }))
    .unwrap()
}

fn planted_model(sigma_u: &SymMatrix, seed: u64) -> SurModel {
    let sampler = GaussianSampler::centered(sigma_u).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = sampler.sample_columns(&mut rng, T);
    let equations = (0..P)
        .map(|i| {
            let k = 1 + i % 2;
            let x = DMatrix::from_fn(T, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DVector::from_element(k, 1.0);
            SurEquation {
                y: &x * b + u.row(i).transpose(),
                x,
            }
        })
        .collect();
    SurModel::new(equations).unwrap()
}

/// Checks the true support is kept and returns the share of true zeros removed.
fn excluded_share(sigma_u: &SymMatrix, est: &ThresholdedCovariance) -> f64 {
    let (mut zeros, mut excluded) = (0, 0);
    for i in 0..P {
        for j in 0..P {
            if sigma_u[(i, j)] != 0.0 {
                assert!(est.is_kept(i, j), "true nonzero ({i},{j}) was thresholded");
            } else {
                zeros += 1;
                excluded += usize::from(!est.is_kept(i, j));
            }
        }
    }
    excluded as f64 / zeros as f64
}

#[test]
fn default_constant_removes_zeros_at_the_noise_rate() {
    let sigma_u = block_diagonal(P);
    let model = planted_model(&sigma_u, 2000);
    let est = sur_threshold(&sur_ols(&model).unwrap(), 0.10).unwrap();
    let share = excluded_share(&sigma_u, &est);

    // for an uncorrelated pair σ̂_ij / √θ̂_ij is close to N(0, 1/T), so the
    // entry is removed with probability P(|Z| < ω √T)
    let z = est.omega * (T as f64).sqrt();
    let expected = libm::erf(z / std::f64::consts::SQRT_2);
    assert!(
        (share - expected).abs() < 0.1,
        "excluded share {share:.3}, noise-rate prediction {expected:.3}"
    );
}

#[test]
fn larger_constant_recovers_block_support() {
    let sigma_u = block_diagonal(P);
    let model = planted_model(&sigma_u, 2000);
    let est = sur_threshold(&sur_ols(&model).unwrap(), 0.5).unwrap();
    let share = excluded_share(&sigma_u, &est);
    assert!(
        share >= 0.9,
        "excluded share {share:.3} at omega {}",
        est.omega
    );
}
