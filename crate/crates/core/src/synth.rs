//! Seeded synthetic data sets.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::DataSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Synthetic {
    /// Two interleaved half circles with Gaussian noise.
    TwoMoons,
    /// Three isotropic blobs in the plane with slight overlap.
    Blobs3,
    /// Three overlapping, elongated Gaussians in the plane.
    Gaussians3,
    /// Two classes, each a union of elongated sub-clusters in 10 dimensions.
    MnistLike,
}

impl Synthetic {
    pub const ALL: [Synthetic; 4] = [Self::TwoMoons, Self::Blobs3, Self::Gaussians3, Self::MnistLike];

    pub fn name(self) -> &'static str {
        match self {
            Self::TwoMoons => "two-moons",
            Self::Blobs3 => "blobs3",
            Self::Gaussians3 => "gaussians3",
            Self::MnistLike => "mnist-like",
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            Self::TwoMoons | Self::MnistLike => 2,
            Self::Blobs3 | Self::Gaussians3 => 3,
        }
    }

    /// Generates `u` points; class sizes differ by at most one.
    pub fn generate(self, u: usize, seed: u64) -> Result<DataSet> {
        let c = self.n_classes();
        if u < 2 * c {
            return Err(Error::InvalidArgument(format!("{} needs at least {} points", self.name(), 2 * c)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..u).map(|i| i % c).collect();
        let points = match self {
            Self::TwoMoons => two_moons(&labels, 0.15, &mut rng),
            Self::Blobs3 => {
                let centers = [[0.0, 0.0], [4.0, 0.0], [2.0, 3.5]];
                gaussian_mixture(&labels, &centers, &[[1.0, 1.0]; 3], &[0.0; 3], &mut rng)
            }
            Self::Gaussians3 => {
                let centers = [[0.0, 0.0], [3.0, 0.0], [1.5, 2.6]];
                let scales = [[1.6, 0.5]; 3];
                let angles = [0.0, PI / 3.0, 2.0 * PI / 3.0];
                gaussian_mixture(&labels, &centers, &scales, &angles, &mut rng)
            }
            Self::MnistLike => mnist_like(&labels, &mut rng),
        };
        DataSet::new(self.name(), points, Some(labels))
    }
}

impl fmt::Display for Synthetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Synthetic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown synthetic data set `{s}`")))
    }
}

fn two_moons(labels: &[usize], noise: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, noise).unwrap();
    let mut pts = Array2::zeros((labels.len(), 2));
    for (i, &l) in labels.iter().enumerate() {
        let t = rng.random_range(0.0..PI);
        let (x, y) = if l == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        pts[[i, 0]] = x + normal.sample(rng);
        pts[[i, 1]] = y + normal.sample(rng);
    }
    pts
}

/// Each class is a 2-D Gaussian with per-axis scales rotated by an angle.
fn gaussian_mixture(
    labels: &[usize],
    centers: &[[f64; 2]],
    scales: &[[f64; 2]],
    angles: &[f64],
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let mut pts = Array2::zeros((labels.len(), 2));
    for (i, &l) in labels.iter().enumerate() {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        let (a, b) = (a * scales[l][0], b * scales[l][1]);
        let (s, c) = angles[l].sin_cos();
        pts[[i, 0]] = centers[l][0] + c * a - s * b;
        pts[[i, 1]] = centers[l][1] + s * a + c * b;
    }
    pts
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

const MNIST_DIM: usize = 10;
const MNIST_MODES: usize = 3;

fn mnist_like(labels: &[usize], rng: &mut ChaCha8Rng) -> Array2<f64> {
    // fixed layout, independent of the sample seed
    let mut layout = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut centers = Vec::new();
    let mut dirs = Vec::new();
    for _ in 0..2 * MNIST_MODES {
        let c: Vec<f64> = (0..MNIST_DIM).map(|_| 1.2 * sample_normal(&mut layout)).collect();
        let d: Vec<f64> = (0..MNIST_DIM).map(|_| sample_normal(&mut layout)).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        centers.push(c);
        dirs.push(d.into_iter().map(|v| v / norm).collect::<Vec<f64>>());
    }
    let mut pts = Array2::zeros((labels.len(), MNIST_DIM));
    for (i, &l) in labels.iter().enumerate() {
        let mode = l * MNIST_MODES + rng.random_range(0..MNIST_MODES);
        let along = 2.0 * sample_normal(rng);
        for d in 0..MNIST_DIM {
            let noise = sample_normal(rng);
            pts[[i, d]] = centers[mode][d] + along * dirs[mode][d] + 1.2 * noise;
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_balance() {
        for kind in Synthetic::ALL {
            let ds = kind.generate(61, 4).unwrap();
            assert_eq!(ds.n_points(), 61);
            assert_eq!(ds.n_classes(), kind.n_classes());
            let sizes: Vec<usize> = ds.class_members().unwrap().iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            assert_eq!(kind.name().parse::<Synthetic>().unwrap(), kind);
        }
    }

    #[test]
    fn seeded() {
        let a = Synthetic::TwoMoons.generate(50, 1).unwrap();
        let b = Synthetic::TwoMoons.generate(50, 1).unwrap();
        let c = Synthetic::TwoMoons.generate(50, 2).unwrap();
        assert_eq!(a.points(), b.points());
        assert_ne!(a.points(), c.points());
    }
}
