//! Central-difference checks of every objective's gradient with respect to
//! every model parameter.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{loss_kinds, random_gradient_instance};

const TOLERANCE: f64 = 1e-4;

#[test]
fn every_loss_matches_finite_differences() {
    for (name, kind) in loss_kinds(0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for instance in 0..20 {
            let (err, at) = random_gradient_instance(&mut rng, kind);
            assert!(err <= TOLERANCE, "{name} instance {instance}: relative error {err:e} at {at}");
        }
    }
}

#[test]
fn small_temperature_gradients() {
    for (name, kind) in loss_kinds(0.05) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for instance in 0..5 {
            let (err, at) = random_gradient_instance(&mut rng, kind);
            assert!(err <= TOLERANCE, "{name} instance {instance}: relative error {err:e} at {at}");
        }
    }
}
