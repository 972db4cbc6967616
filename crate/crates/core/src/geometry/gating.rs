use crate::ids::KeyframeId;

use super::GeometryError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateDecision {
    /// Admit to the semantic queue. `cosine` is `None` for the first frame.
    Push { cosine: Option<f64> },
    Skip { cosine: f64 },
}

impl GateDecision {
    pub fn is_push(&self) -> bool {
        matches!(self, GateDecision::Push { .. })
    }
}

/// Visual keyframe gate: a frame is admitted when its global feature has
/// drifted below `tau_sim` cosine similarity from the last admitted frame.
#[derive(Clone, Debug, PartialEq)]
pub struct GatingState {
    pub last_feature: Option<Vec<f32>>,
    pub tau_sim: f64,
    pub last_keyframe_id: Option<KeyframeId>,
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        dot += *x as f64 * *y as f64;
        na += *x as f64 * *x as f64;
        nb += *y as f64 * *y as f64;
    }
    dot / (na.sqrt() * nb.sqrt())
}

impl GatingState {
    pub fn new(tau_sim: f64) -> Self {
        GatingState { last_feature: None, tau_sim, last_keyframe_id: None }
    }

    pub fn gate(&mut self, feature: &[f32], keyframe_id: KeyframeId) -> Result<GateDecision, GeometryError> {
        if feature.is_empty() || feature.iter().all(|v| *v == 0.0) {
            return Err(GeometryError::ZeroFeature(keyframe_id));
        }
        let decision = match &self.last_feature {
            None => GateDecision::Push { cosine: None },
            Some(last) if last.len() != feature.len() => {
                return Err(GeometryError::FeatureDim { expected: last.len(), got: feature.len() })
            }
            Some(last) => {
                let c = cosine(feature, last);
                if c < self.tau_sim {
                    GateDecision::Push { cosine: Some(c) }
                } else {
                    GateDecision::Skip { cosine: c }
                }
            }
        };
        if decision.is_push() {
            self.last_feature = Some(feature.to_vec());
            self.last_keyframe_id = Some(keyframe_id);
        }
        Ok(decision)
    }
}
