//! Seeded inputs shared by the benchmarks.

use kinechain_core::se3::{RigidTransform, Rotation, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn points(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::from_fn(|_, _| rng.random_range(-scale..scale)))
        .collect()
}

pub fn transforms(rng: &mut impl Rng, n: usize) -> Vec<RigidTransform> {
    (0..n)
        .map(|_| {
            let w = Vec3::from_fn(|_, _| rng.random_range(-0.5..0.5));
            let t = Vec3::from_fn(|_, _| rng.random_range(-0.2..0.2));
            RigidTransform::new(Rotation::from_rotation_vector(&w), t)
        })
        .collect()
}
