use nalgebra::{Matrix6, UnitQuaternion};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::standard_normal;
use super::{rng_stream, FeatureField, Stream};
use crate::geometry::{Pose, RigidTransform};
use crate::pose_graph::diagonal_information;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopOracleConfig {
    /// Largest true distance between matched keyframes, m.
    pub radius: f64,
    /// Candidates younger than this are ignored, s.
    pub min_age: f64,
    /// Both keyframes need at least this feature density.
    pub min_density: f64,
    /// Keyframes to wait after an accepted loop before proposing another.
    pub min_separation: usize,
    pub translation_noise: f64,
    pub rotation_noise: f64,
    pub information_translation: f64,
    pub information_rotation: f64,
}

impl Default for LoopOracleConfig {
    fn default() -> Self {
        Self {
            radius: 1.5,
            min_age: 20.0,
            min_density: 100.0,
            min_separation: 6,
            translation_noise: 0.02,
            rotation_noise: 0.005,
            information_translation: 1.0,
            information_rotation: 1.0,
        }
    }
}

/// A visual keyframe as the oracle sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeRecord {
    pub node: usize,
    pub t: f64,
    pub truth: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopProposal {
    pub from: usize,
    pub to: usize,
    pub relative: RigidTransform,
    pub information: Matrix6<f64>,
}

/// Closest old enough keyframe in `history` within `radius` of `current`,
/// provided both sit in feature-rich terrain. The measurement is the true
/// relative pose with seeded noise.
pub fn loop_oracle(
    history: &[KeyframeRecord],
    current: &KeyframeRecord,
    field: &FeatureField,
    cfg: &LoopOracleConfig,
    rng: &mut ChaCha8Rng,
) -> Option<LoopProposal> {
    if field.density_at(&current.truth.position) < cfg.min_density {
        return None;
    }
    let best = history
        .iter()
        .filter(|h| current.t - h.t >= cfg.min_age)
        .filter(|h| field.density_at(&h.truth.position) >= cfg.min_density)
        .map(|h| (h, (h.truth.position - current.truth.position).norm()))
        .filter(|(_, d)| *d <= cfg.radius)
        .min_by(|a, b| a.1.total_cmp(&b.1))?
        .0;
    let exact = best.truth.between(&current.truth);
    let noise = |sigma: f64, rng: &mut ChaCha8Rng| sigma * standard_normal(rng);
    let dp = nalgebra::Vector3::from_fn(|_, _| noise(cfg.translation_noise, rng));
    let dr = nalgebra::Vector3::from_fn(|_, _| noise(cfg.rotation_noise, rng));
    let relative = Pose {
        position: exact.position + dp,
        orientation: exact.orientation * UnitQuaternion::from_scaled_axis(dr),
    };
    Some(LoopProposal {
        from: best.node,
        to: current.node,
        relative,
        information: diagonal_information(cfg.information_translation, cfg.information_rotation),
    })
}

/// Keeps the keyframe history and rate-limits [`loop_oracle`].
#[derive(Debug, Clone)]
pub struct LoopOracle {
    cfg: LoopOracleConfig,
    history: Vec<KeyframeRecord>,
    since_last: usize,
    rng: ChaCha8Rng,
}

impl LoopOracle {
    pub fn new(cfg: LoopOracleConfig, seed: u64) -> Self {
        Self {
            cfg,
            history: Vec::new(),
            since_last: usize::MAX,
            rng: rng_stream(seed, Stream::Loops),
        }
    }

    /// Offers a new visual keyframe; it joins the history either way.
    pub fn observe(&mut self, current: KeyframeRecord, field: &FeatureField) -> Option<LoopProposal> {
        let proposal = if self.since_last >= self.cfg.min_separation {
            loop_oracle(&self.history, &current, field, &self.cfg, &mut self.rng)
        } else {
            None
        };
        self.history.push(current);
        if proposal.is_some() {
            self.since_last = 0;
        } else {
            self.since_last = self.since_last.saturating_add(1);
        }
        proposal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Region;
    use nalgebra::Vector3;
    use rand::SeedableRng;

    fn rec(node: usize, t: f64, x: f64, y: f64) -> KeyframeRecord {
        KeyframeRecord {
            node,
            t,
            truth: Pose::from_translation(x, y, 0.0),
        }
    }

    #[test]
    fn no_revisit_no_loop() {
        let field = FeatureField::uniform(200.0);
        let mut oracle = LoopOracle::new(LoopOracleConfig::default(), 1);
        for k in 0..200 {
            assert!(oracle.observe(rec(k, k as f64 * 0.5, k as f64 * 0.2, 0.0), &field).is_none());
        }
    }

    #[test]
    fn revisit_gives_noisy_true_relative() {
        let field = FeatureField::uniform(200.0);
        let cfg = LoopOracleConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let history = [rec(0, 0.0, 0.0, 0.0), rec(1, 1.0, 5.0, 0.0)];
        let p = loop_oracle(&history, &rec(7, 60.0, 0.5, 0.5), &field, &cfg, &mut rng).unwrap();
        assert_eq!((p.from, p.to), (0, 7));
        assert!((p.relative.position - Vector3::new(0.5, 0.5, 0.0)).norm() < 0.2);
        // too recent
        assert!(loop_oracle(&history, &rec(7, 10.0, 0.5, 0.5), &field, &cfg, &mut rng).is_none());
    }

    #[test]
    fn void_suppresses_candidates() {
        let field = FeatureField {
            base_density: 200.0,
            quadrant_bias: Default::default(),
            regions: vec![Region {
                min: [-1.0, -1.0],
                max: [1.0, 1.0],
                multiplier: 0.0,
                bias: None,
            }],
        };
        let cfg = LoopOracleConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let history = [rec(0, 0.0, 0.0, 0.0)];
        assert!(loop_oracle(&history, &rec(3, 60.0, 0.2, 0.0), &field, &cfg, &mut rng).is_none());
        let history = [rec(0, 0.0, 1.5, 0.0)];
        assert!(loop_oracle(&history, &rec(3, 60.0, 0.5, 0.0), &field, &cfg, &mut rng).is_none());
    }
}
