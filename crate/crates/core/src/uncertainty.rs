//! MPOI distribution and the probability that an observation pose also
//! permits manipulation.

use nalgebra::{Cholesky, Matrix2, Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::constraints::{Mpoi, Troi};
use crate::reach::Annulus;

/// Rejections allowed before truncated sampling gives up.
pub const REJECTION_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UncertaintyError {
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("truncated sampling rejected {rejections} draws in a row")]
    TruncationStarved { rejections: u64 },
    #[error("at least one sample is required")]
    NoSamples,
}

/// How the TROI radius maps to the MPOI covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaMode {
    /// Covariance `r_w * I` (m^2).
    #[default]
    Linear,
    /// Covariance `r_w^2 * I`, i.e. standard deviation `r_w`.
    Squared,
}

impl SigmaMode {
    pub fn variance(self, radius: f64) -> f64 {
        match self {
            Self::Linear => radius,
            Self::Squared => radius * radius,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Squared => "squared",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Self::Linear),
            "squared" => Some(Self::Squared),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpoiDistribution {
    pub mean: Point2<f64>,
    covariance: Matrix2<f64>,
    chol: Matrix2<f64>,
    pub truncate_to_troi: bool,
}

impl MpoiDistribution {
    pub fn new(
        mean: Point2<f64>,
        covariance: Matrix2<f64>,
        truncate_to_troi: bool,
    ) -> Result<Self, UncertaintyError> {
        if (covariance[(0, 1)] - covariance[(1, 0)]).abs() > 1e-12 * covariance.amax().max(1.0) {
            return Err(UncertaintyError::NotPositiveDefinite);
        }
        let chol = Cholesky::new(covariance).ok_or(UncertaintyError::NotPositiveDefinite)?;
        Ok(Self {
            mean,
            covariance,
            chol: chol.l(),
            truncate_to_troi,
        })
    }

    /// Isotropic distribution about the TROI center.
    pub fn for_troi(troi: &Troi, mode: SigmaMode, truncate_to_troi: bool) -> Self {
        let var = mode.variance(troi.radius);
        Self::new(troi.center, Matrix2::identity() * var, truncate_to_troi)
            .expect("positive radius gives a positive definite covariance")
    }

    pub fn covariance(&self) -> &Matrix2<f64> {
        &self.covariance
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2<f64> {
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.mean + self.chol * z
    }
}

/// Seed plus stream identifier of an independent ChaCha8 sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Stable 64-bit mix of two indices (splitmix64 finaliser over a combined word).
pub fn stream_hash(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(31)
        ^ b.wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_mpoi<R: Rng + ?Sized>(
    dist: &MpoiDistribution,
    troi: &Troi,
    rng: &mut R,
) -> Result<Mpoi, UncertaintyError> {
    if !dist.truncate_to_troi {
        return Ok(Mpoi::new(dist.draw(rng)));
    }
    for _ in 0..REJECTION_LIMIT {
        let p = dist.draw(rng);
        if troi.contains(&p) {
            return Ok(Mpoi::new(p));
        }
    }
    Err(UncertaintyError::TruncationStarved {
        rejections: REJECTION_LIMIT,
    })
}

/// A fixed MPOI sample set shared by every candidate of one planner call.
#[derive(Debug, Clone, PartialEq)]
pub struct MpoiSamples {
    points: Vec<Point2<f64>>,
}

impl MpoiSamples {
    pub fn draw<R: Rng + ?Sized>(
        dist: &MpoiDistribution,
        troi: &Troi,
        n: usize,
        rng: &mut R,
    ) -> Result<Self, UncertaintyError> {
        if n == 0 {
            return Err(UncertaintyError::NoSamples);
        }
        let points = (0..n)
            .map(|_| sample_mpoi(dist, troi, rng).map(|m| m.point))
            .collect::<Result<_, _>>()?;
        Ok(Self { points })
    }

    pub fn from_points(points: Vec<Point2<f64>>) -> Result<Self, UncertaintyError> {
        if points.is_empty() {
            return Err(UncertaintyError::NoSamples);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point2<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fraction of samples `s` with `body` inside `shape` re-centered at `s`.
    pub fn fraction_within(&self, body: &Point2<f64>, shape: &Annulus) -> f64 {
        if shape.empty {
            return 0.0;
        }
        let lo = shape.r_inner * shape.r_inner;
        let hi = shape.r_outer * shape.r_outer;
        let hits = self
            .points
            .iter()
            .filter(|s| {
                let d = (body - *s).norm_squared();
                d >= lo && d <= hi
            })
            .count();
        hits as f64 / self.points.len() as f64
    }

    /// Fraction of samples for which `member` holds.
    pub fn fraction<F: FnMut(&Point2<f64>) -> bool>(&self, mut member: F) -> f64 {
        let hits = self.points.iter().filter(|s| member(s)).count();
        hits as f64 / self.points.len() as f64
    }
}

/// Monte Carlo estimate of the probability that `body` lies in `R_m` of the
/// unknown MPOI, with `rm_of` giving the region for a sampled point.
pub fn p_feasible<F>(
    body: &Point2<f64>,
    dist: &MpoiDistribution,
    troi: &Troi,
    rm_of: F,
    n_samples: usize,
    stream: RngStream,
) -> Result<f64, UncertaintyError>
where
    F: Fn(&Point2<f64>) -> Annulus,
{
    let samples = MpoiSamples::draw(dist, troi, n_samples, &mut stream.rng())?;
    Ok(samples.fraction(|s| rm_of(s).contains(body)))
}
