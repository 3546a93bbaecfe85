//! Seedable stochastic fracture networks.
//!
//! Lengths follow a truncated power law (inverse-transform sampling),
//! midpoints are uniform in the domain and segments are clipped to it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Rect;
use crate::mesh::{FractureNetwork, Segment};
use crate::{Error, Result};

pub const MIN_APERTURE: f64 = 1e-4;
pub const MAX_APERTURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthDistribution {
    /// Density proportional to `l^-exponent` on `[min, max]`.
    PowerLaw {
        exponent: f64,
        min: f64,
        max: f64,
    },
    Fixed(f64),
}

impl LengthDistribution {
    fn validate(&self) -> Result<()> {
        match *self {
            LengthDistribution::PowerLaw { exponent, min, max } => {
                if !(min > 0.0 && min < max && max.is_finite()) {
                    return Err(Error::InvalidInput(format!("power-law bounds {min}..{max} are invalid")));
                }
                if !(exponent > 1.0) {
                    return Err(Error::InvalidInput(format!("power-law exponent {exponent} must exceed 1")));
                }
            }
            LengthDistribution::Fixed(l) => {
                if !(l > 0.0 && l.is_finite()) {
                    return Err(Error::InvalidInput(format!("fixed length {l} must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Inverse CDF at `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            LengthDistribution::PowerLaw { exponent, min, max } => {
                let e = 1.0 - exponent;
                (min.powf(e) + u * (max.powf(e) - min.powf(e))).powf(1.0 / e)
            }
            LengthDistribution::Fixed(l) => l,
        }
    }

    pub fn cdf(&self, l: f64) -> f64 {
        match *self {
            LengthDistribution::PowerLaw { exponent, min, max } => {
                let e = 1.0 - exponent;
                ((l.clamp(min, max).powf(e) - min.powf(e)) / (max.powf(e) - min.powf(e))).clamp(0.0, 1.0)
            }
            LengthDistribution::Fixed(x) => {
                if l >= x {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Orientation sets in radians from the x axis; one set is picked uniformly per fracture.
#[derive(Debug, Clone, PartialEq)]
pub enum Orientation {
    Uniform,
    Sets { angles: Vec<f64>, jitter: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApertureRule {
    Fixed(f64),
    /// `a = factor * length`, clamped to the admissible range.
    LengthProportional(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub seed: u64,
    pub count: usize,
    pub lengths: LengthDistribution,
    pub orientation: Orientation,
    pub aperture: ApertureRule,
    /// Passed through unchanged ahead of the stochastic fractures.
    pub deterministic: Vec<Segment>,
    pub domain: Rect,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        self.lengths.validate()?;
        if !(self.domain.width() > 0.0 && self.domain.height() > 0.0) {
            return Err(Error::InvalidInput("generator domain is empty".into()));
        }
        match self.aperture {
            ApertureRule::Fixed(a) if !(MIN_APERTURE..=MAX_APERTURE).contains(&a) => {
                return Err(Error::InvalidInput(format!("aperture {a} m is outside [1e-4, 1]")));
            }
            ApertureRule::LengthProportional(f) if !(f > 0.0) => {
                return Err(Error::InvalidInput(format!("aperture factor {f} must be positive")));
            }
            _ => {}
        }
        if let Orientation::Sets { angles, jitter } = &self.orientation {
            if angles.is_empty() || !(*jitter >= 0.0) {
                return Err(Error::InvalidInput("orientation sets need angles and a non-negative jitter".into()));
            }
        }
        Ok(())
    }
}

/// Draws `count` stochastic fractures after the deterministic ones.
pub fn generate(spec: &GenSpec) -> Result<FractureNetwork> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut segments = spec.deterministic.clone();
    let d = &spec.domain;
    for n in 0..spec.count {
        let length = spec.lengths.quantile(rng.random::<f64>());
        let theta = match &spec.orientation {
            Orientation::Uniform => rng.random::<f64>() * std::f64::consts::PI,
            Orientation::Sets { angles, jitter } => {
                let base = angles[rng.random_range(0..angles.len())];
                base + jitter * (2.0 * rng.random::<f64>() - 1.0)
            }
        };
        let mid = [d.min[0] + rng.random::<f64>() * d.width(), d.min[1] + rng.random::<f64>() * d.height()];
        let aperture = match spec.aperture {
            ApertureRule::Fixed(a) => a,
            ApertureRule::LengthProportional(f) => (f * length).clamp(MIN_APERTURE, MAX_APERTURE),
        };
        let half = [0.5 * length * theta.cos(), 0.5 * length * theta.sin()];
        let a = [mid[0] - half[0], mid[1] - half[1]];
        let b = [mid[0] + half[0], mid[1] + half[1]];
        match d.clip_segment(a, b) {
            Some((a, b)) if a != b => segments.push(Segment::new(a, b, aperture)),
            _ => log::warn!("generated fracture {n} has zero length after clipping and is dropped"),
        }
    }
    FractureNetwork::new(segments)
}

/// Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Draws `n` lengths with the generator's sampling law.
pub fn sample_lengths(dist: &LengthDistribution, n: usize, seed: u64) -> Result<Vec<f64>> {
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| dist.quantile(rng.random::<f64>())).collect())
}
