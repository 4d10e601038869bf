//! Training-set selection policies: ω-threshold, ω-wait and an
//! embedding-score baseline.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::streaming::{AoITracker, CameraPose, Frame, SimWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Threshold,
    #[default]
    Wait,
    Embedding,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Threshold => "threshold",
            PolicyKind::Wait => "wait",
            PolicyKind::Embedding => "embedding",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub policy: PolicyKind,
    pub omega: u64,
    /// At most one entry per camera, ordered by camera id.
    pub chosen: Vec<(usize, Frame, CameraPose)>,
    pub render_slot: u64,
}

impl Selection {
    pub fn cameras(&self) -> Vec<usize> {
        self.chosen.iter().map(|c| c.0).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }
}

/// Latest delivered frame of every camera whose AoI at `t` is below `omega`.
pub fn threshold_select(tracker: &AoITracker, t: u64, omega: u64) -> Selection {
    let chosen = tracker
        .latest_images(t)
        .into_iter()
        .filter(|(_, f, _)| t - f.generation_slot < omega)
        .collect();
    Selection {
        policy: PolicyKind::Threshold,
        omega,
        chosen,
        render_slot: t,
    }
}

/// Frames arriving in (t, t+ω] on a copy of `world`, newest per camera.
/// The caller's world is untouched.
pub fn wait_select(world: &SimWorld, t: u64, omega: u64) -> Result<Selection> {
    let mut copy = world.clone();
    wait_select_advance(&mut copy, t, omega)
}

/// As [`wait_select`], but advances `world` itself to slot `t + omega`.
pub fn wait_select_advance(world: &mut SimWorld, t: u64, omega: u64) -> Result<Selection> {
    if world.now() != t {
        return Err(invalid(format!(
            "wait selection at slot {t} but the world is at slot {}",
            world.now()
        )));
    }
    let mut newest: Vec<Option<Frame>> = vec![None; world.n_cameras()];
    for _ in 0..omega {
        for f in world.advance()? {
            let slot = &mut newest[f.camera];
            if slot.is_none_or(|g| f.generation_slot > g.generation_slot) {
                *slot = Some(f);
            }
        }
    }
    Ok(Selection {
        policy: PolicyKind::Wait,
        omega,
        chosen: newest
            .into_iter()
            .enumerate()
            .filter_map(|(n, f)| f.map(|f| (n, f, f.pose)))
            .collect(),
        render_slot: t + omega,
    })
}

/// Linear scoring rule over freshness, pose proximity and semantic content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingScorer {
    /// Weight on the AoI; negative values favour fresh frames.
    pub w_aoi: f64,
    /// Weight on `1 / (1 + d)`, d the planar distance to the novel view.
    pub w_pose: f64,
    /// Weight on the semantic feature norm.
    pub w_sem: f64,
    pub threshold: f64,
    /// Select frames scoring exactly at the threshold.
    pub include_ties: bool,
}

impl Default for EmbeddingScorer {
    fn default() -> Self {
        Self {
            w_aoi: -1.0,
            w_pose: 0.0,
            w_sem: 0.0,
            threshold: -30.0,
            include_ties: false,
        }
    }
}

impl EmbeddingScorer {
    pub fn validate(&self) -> Result<()> {
        if [self.w_aoi, self.w_pose, self.w_sem, self.threshold]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(invalid("embedding scorer weights must be finite"))
        }
    }

    pub fn score(&self, aoi: u64, pose: &CameraPose, novel: &CameraPose, semantic_norm: f64) -> f64 {
        let d = (pose.x - novel.x).hypot(pose.y - novel.y);
        self.w_aoi * aoi as f64 + self.w_pose / (1.0 + d) + self.w_sem * semantic_norm
    }

    fn passes(&self, score: f64) -> bool {
        score > self.threshold || (self.include_ties && score == self.threshold)
    }
}

/// Score each camera's latest frame and keep those above the threshold.
/// `semantic_norm` supplies the feature magnitude of a frame.
pub fn embedding_select(
    tracker: &AoITracker,
    t: u64,
    scorer: &EmbeddingScorer,
    novel: &CameraPose,
    semantic_norm: &mut dyn FnMut(&Frame) -> f64,
) -> Selection {
    let chosen = tracker
        .latest_images(t)
        .into_iter()
        .filter(|(_, f, p)| {
            let z = if scorer.w_sem != 0.0 { semantic_norm(f) } else { 0.0 };
            scorer.passes(scorer.score(t - f.generation_slot, p, novel, z))
        })
        .collect();
    Selection {
        policy: PolicyKind::Embedding,
        omega: 0,
        chosen,
        render_slot: t,
    }
}
