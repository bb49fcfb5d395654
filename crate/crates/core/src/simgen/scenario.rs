use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simgen::hash::mix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CupShape {
    Straight,
    Tapered,
    NarrowNeck,
}

impl CupShape {
    pub const ALL: [CupShape; 3] = [CupShape::Straight, CupShape::Tapered, CupShape::NarrowNeck];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BowlShape {
    Wide,
    Shallow,
    Tall,
}

impl BowlShape {
    pub const ALL: [BowlShape; 3] = [BowlShape::Wide, BowlShape::Shallow, BowlShape::Tall];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PourProfile {
    Slow,
    Fast,
    /// Tilts part way, holds, and returns upright.
    Partial,
}

impl PourProfile {
    pub const ALL: [PourProfile; 3] = [PourProfile::Slow, PourProfile::Fast, PourProfile::Partial];

    /// Cup tilt in degrees at sequence fraction `u` ∈ [0, 1].
    pub fn tilt_degrees(self, u: f64) -> f64 {
        let ramp = |u: f64, a: f64, b: f64| smoothstep(((u - a) / (b - a)).clamp(0.0, 1.0));
        match self {
            PourProfile::Slow => 135.0 * ramp(u, 0.10, 0.85),
            PourProfile::Fast => 135.0 * ramp(u, 0.10, 0.45),
            PourProfile::Partial => 75.0 * (ramp(u, 0.10, 0.40) - ramp(u, 0.60, 0.80)),
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

pub const FILL_LEVELS: [f64; 3] = [0.3, 0.6, 0.9];
pub const BACKGROUNDS: u32 = 4;
pub const DEFAULT_FPS: u32 = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub cup_shape: CupShape,
    pub bowl_shape: BowlShape,
    /// Fraction of the cup interior initially filled; 0 for negatives.
    pub fill_fraction: f64,
    pub pour_profile: PourProfile,
    pub background_id: u32,
    pub has_liquid: bool,
    pub seed: u64,
    pub duration_frames: usize,
    pub fps: u32,
}

impl Scenario {
    /// A liquid-filled fast pour, handy in tests.
    pub fn example(cup_shape: CupShape, bowl_shape: BowlShape) -> Self {
        Scenario {
            cup_shape,
            bowl_shape,
            fill_fraction: 0.9,
            pour_profile: PourProfile::Fast,
            background_id: 0,
            has_liquid: true,
            seed: 1,
            duration_frames: 90,
            fps: DEFAULT_FPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.has_liquid {
            if !(self.fill_fraction > 0.0 && self.fill_fraction <= 1.0) {
                return Err(Error::Config(format!(
                    "fill_fraction {} must lie in (0, 1] for a liquid scenario",
                    self.fill_fraction
                )));
            }
        } else if self.fill_fraction != 0.0 {
            return Err(Error::Config(format!(
                "negative scenario has fill_fraction {}, expected 0",
                self.fill_fraction
            )));
        }
        if self.duration_frames == 0 || self.fps == 0 {
            return Err(Error::Config("duration_frames and fps must be positive".into()));
        }
        if self.background_id >= BACKGROUNDS {
            return Err(Error::Config(format!(
                "background_id {} out of range 0..{BACKGROUNDS}",
                self.background_id
            )));
        }
        Ok(())
    }

    /// Tilt in radians at frame `t`.
    pub fn tilt_at(&self, t: f64) -> f64 {
        let u = if self.duration_frames > 1 {
            t / (self.duration_frames - 1) as f64
        } else {
            0.0
        };
        self.pour_profile.tilt_degrees(u).to_radians()
    }

    /// Samples one scenario uniformly over the discrete variables.
    pub fn sample(seed: u64, has_liquid: bool, duration_frames: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cup_shape = *CupShape::ALL.choose(&mut rng).expect("non-empty");
        let bowl_shape = *BowlShape::ALL.choose(&mut rng).expect("non-empty");
        let fill = *FILL_LEVELS.choose(&mut rng).expect("non-empty");
        let pour_profile = *PourProfile::ALL.choose(&mut rng).expect("non-empty");
        let background_id = rng.gen_range(0..BACKGROUNDS);
        Scenario {
            cup_shape,
            bowl_shape,
            fill_fraction: if has_liquid { fill } else { 0.0 },
            pour_profile,
            background_id,
            has_liquid,
            seed: mix(seed, 0x5eed),
            duration_frames,
            fps: DEFAULT_FPS,
        }
    }
}

/// Chooses exactly `round(n · negative_fraction)` negative indices.
pub fn negative_mask(n: usize, negative_fraction: f64, seed: u64) -> Vec<bool> {
    let negatives = ((n as f64) * negative_fraction).round() as usize;
    let mut mask: Vec<bool> = (0..n).map(|i| i < negatives.min(n)).collect();
    mask.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, 0x9e9)));
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pours_are_monotone_then_partial_returns() {
        for p in [PourProfile::Slow, PourProfile::Fast] {
            let mut prev = -1.0;
            for i in 0..=100 {
                let a = p.tilt_degrees(i as f64 / 100.0);
                assert!(a >= prev);
                prev = a;
            }
            assert_eq!(p.tilt_degrees(1.0), 135.0);
        }
        assert_eq!(PourProfile::Partial.tilt_degrees(0.5), 75.0);
        assert_eq!(PourProfile::Partial.tilt_degrees(0.9), 0.0);
    }

    #[test]
    fn negatives_have_no_fill() {
        let s = Scenario::sample(3, false, 30);
        assert_eq!(s.fill_fraction, 0.0);
        s.validate().unwrap();
        let mut bad = s.clone();
        bad.fill_fraction = 0.3;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn negative_count_is_exact() {
        let m = negative_mask(10, 0.2, 42);
        assert_eq!(m.iter().filter(|&&b| b).count(), 2);
        assert_eq!(m, negative_mask(10, 0.2, 42));
    }
}
