//! Seeded point-cloud generators. Points are drawn one at a time from a
//! single stream, so the first n points of a larger sample are exactly the
//! sample of size n.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Noise level of the two-moon generator.
pub const MOON_NOISE: f64 = 0.1;
/// Noise is redrawn beyond this many standard deviations, which keeps
/// samples in a fixed bounding box.
pub const MOON_NOISE_CLIP: f64 = 4.0;

/// Bean: ellipse with semi-axes (1, 0.6) minus a disk of radius 0.45
/// centred at (0, 0.75).
pub const BEAN_AXES: (f64, f64) = (1.0, 0.6);
pub const BEAN_NOTCH: (f64, f64, f64) = (0.0, 0.75, 0.45);

pub const DENSITIES: [&str; 3] = ["uniform_interval", "two_moon", "bean"];

fn clipped_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= MOON_NOISE_CLIP {
            return z;
        }
    }
}

fn moon_point(rng: &mut ChaCha8Rng, index: usize) -> Vec<f64> {
    let t = rng.random_range(0.0..PI);
    let (x, y) = if index % 2 == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
    vec![x + MOON_NOISE * clipped_normal(rng), y + MOON_NOISE * clipped_normal(rng)]
}

fn in_bean(x: f64, y: f64) -> bool {
    let (ax, ay) = BEAN_AXES;
    let (cx, cy, r) = BEAN_NOTCH;
    (x / ax).powi(2) + (y / ay).powi(2) <= 1.0 && (x - cx).powi(2) + (y - cy).powi(2) > r * r
}

fn bean_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let x = rng.random_range(-BEAN_AXES.0..BEAN_AXES.0);
        let y = rng.random_range(-BEAN_AXES.1..BEAN_AXES.1);
        if in_bean(x, y) {
            return vec![x, y];
        }
    }
}

/// `n` i.i.d. samples of a named density.
pub fn sample_measure(name: &str, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match name {
        "uniform_interval" => Ok((0..n).map(|_| vec![rng.random_range(0.0..1.0)]).collect()),
        "two_moon" => Ok((0..n).map(|i| moon_point(&mut rng, i)).collect()),
        "bean" => Ok((0..n).map(|_| bean_point(&mut rng)).collect()),
        _ => Err(Error::Unknown { kind: "density", name: name.to_string() }),
    }
}
