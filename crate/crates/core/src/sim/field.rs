use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::health::KeyframeStats;

/// Where features fall in the image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadrantBias {
    #[default]
    None,
    /// Only the seabed below the horizon is textured.
    BottomOnly,
}

impl QuadrantBias {
    fn weights(self) -> [f64; 4] {
        match self {
            QuadrantBias::None => [0.25; 4],
            QuadrantBias::BottomOnly => [0.0, 0.0, 0.5, 0.5],
        }
    }
}

/// Axis-aligned box in the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: [f64; 2],
    pub max: [f64; 2],
    /// Multiplies the base density; 0 is open water.
    pub multiplier: f64,
    #[serde(default)]
    pub bias: Option<QuadrantBias>,
}

impl Region {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureField {
    /// Expected detections per keyframe away from any region.
    pub base_density: f64,
    #[serde(default)]
    pub quadrant_bias: QuadrantBias,
    #[serde(default)]
    pub regions: Vec<Region>,
}

impl FeatureField {
    pub fn uniform(density: f64) -> Self {
        Self {
            base_density: density,
            quadrant_bias: QuadrantBias::None,
            regions: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_density >= 0.0 && self.base_density.is_finite()) {
            return Err(Error::config("field.base_density", "must be finite and >= 0"));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if !(r.multiplier >= 0.0 && r.multiplier.is_finite())
                || r.min[0] > r.max[0]
                || r.min[1] > r.max[1]
            {
                return Err(Error::config(
                    format!("field.regions[{i}]"),
                    "needs min <= max and a finite multiplier >= 0",
                ));
            }
        }
        Ok(())
    }

    /// Base density times the multipliers of every region containing `p`.
    pub fn density_at(&self, p: &Vector3<f64>) -> f64 {
        self.regions
            .iter()
            .filter(|r| r.contains(p))
            .fold(self.base_density, |d, r| d * r.multiplier)
    }

    /// Bias of the last region containing `p` that sets one.
    pub fn bias_at(&self, p: &Vector3<f64>) -> QuadrantBias {
        self.regions
            .iter()
            .filter(|r| r.contains(p))
            .filter_map(|r| r.bias)
            .last()
            .unwrap_or(self.quadrant_bias)
    }
}

/// Draws feature statistics for a keyframe seeing `density` expected
/// detections. `degraded` marks a frame after tracking collapsed, where no
/// keypoint carries over from the previous keyframe.
pub fn sample_stats<R: Rng>(
    t: f64,
    density: f64,
    bias: QuadrantBias,
    degraded: bool,
    rng: &mut R,
) -> KeyframeStats {
    let total = if density > 0.0 {
        Poisson::new(density).map(|d| d.sample(rng) as u32).unwrap_or(0)
    } else {
        0
    };

    let mut quads = [0u32; 4];
    let w = bias.weights();
    let mut left = total;
    let mut mass = 1.0;
    for q in 0..3 {
        let p = if mass > 0.0 { (w[q] / mass).clamp(0.0, 1.0) } else { 0.0 };
        quads[q] = binomial(left, p, rng);
        left -= quads[q];
        mass -= w[q];
    }
    quads[3] = left;

    let track_p = 0.7 * density / (density + 20.0);
    let tracked = binomial(total, track_p, rng);
    let new = if degraded {
        total - tracked
    } else {
        binomial(total - tracked, 0.5, rng)
    };
    let weak = binomial(total, 0.5, rng);
    KeyframeStats {
        t,
        tracked_3d_kps: tracked,
        total_detections: total,
        detections_per_quadrant: quads,
        new_kps: new,
        total_kps: total,
        weak_response_kps: weak,
    }
}

fn binomial<R: Rng>(n: u32, p: f64, rng: &mut R) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p).map(|b| b.sample(rng) as u32).unwrap_or(0)
}

/// Stats for a keyframe taken at `position` over `field`.
pub fn sample_keyframe<R: Rng>(
    t: f64,
    position: &Vector3<f64>,
    field: &FeatureField,
    rng: &mut R,
) -> KeyframeStats {
    sample_stats(t, field.density_at(position), field.bias_at(position), false, rng)
}
