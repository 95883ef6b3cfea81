//! Flat label-vector encoding of a scene.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::lexicon;
use super::Scene;
use crate::error::Result;

/// Offsets of every field in the label vector. Entity slots come first,
/// each `[present, x, y, sin, cos, pose.., expression.., type..]`, then the
/// action `[verb.., transitive, agent slot.., patient slot..]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelLayout {
    pub slots: usize,
    pub n_poses: usize,
    pub n_expressions: usize,
    pub n_types: usize,
    pub n_verbs: usize,
    pub entity_width: usize,
    pub dim: usize,
    pub fields: Vec<(String, usize, usize)>,
}

impl LabelLayout {
    pub fn new(slots: usize, n_poses: usize, n_expressions: usize) -> Self {
        let n_types = lexicon::n_types();
        let n_verbs = lexicon::n_verbs();
        let entity_width = 5 + n_poses + n_expressions + n_types;
        let action = entity_width * slots;
        let dim = action + n_verbs + 1 + 2 * slots;
        let mut fields = Vec::new();
        for s in 0..slots {
            let o = s * entity_width;
            fields.push((format!("slot{s}.present"), o, 1));
            fields.push((format!("slot{s}.xy"), o + 1, 2));
            fields.push((format!("slot{s}.rotation"), o + 3, 2));
            fields.push((format!("slot{s}.pose"), o + 5, n_poses));
            fields.push((format!("slot{s}.expression"), o + 5 + n_poses, n_expressions));
            fields.push((format!("slot{s}.type"), o + 5 + n_poses + n_expressions, n_types));
        }
        fields.push(("action.verb".into(), action, n_verbs));
        fields.push(("action.transitive".into(), action + n_verbs, 1));
        fields.push(("action.agent".into(), action + n_verbs + 1, slots));
        fields.push(("action.patient".into(), action + n_verbs + 1 + slots, slots));
        LabelLayout {
            slots,
            n_poses,
            n_expressions,
            n_types,
            n_verbs,
            entity_width,
            dim,
            fields,
        }
    }

    fn type_offset(&self) -> usize {
        5 + self.n_poses + self.n_expressions
    }

    fn action_offset(&self) -> usize {
        self.entity_width * self.slots
    }

    pub fn encode(&self, scene: &Scene) -> Result<Vec<f64>> {
        scene.validate(self.slots)?;
        let mut v = vec![0.0; self.dim];
        for e in &scene.entities {
            let o = e.slot * self.entity_width;
            v[o] = 1.0;
            v[o + 1] = e.x;
            v[o + 2] = e.y;
            v[o + 3] = e.rotation.sin();
            v[o + 4] = e.rotation.cos();
            v[o + 5 + e.pose] = 1.0;
            v[o + 5 + self.n_poses + e.expression] = 1.0;
            v[o + self.type_offset() + e.ty] = 1.0;
        }
        if let Some(a) = &scene.action {
            let o = self.action_offset();
            v[o + a.verb] = 1.0;
            v[o + self.n_verbs] = if a.patient.is_some() { 1.0 } else { 0.0 };
            v[o + self.n_verbs + 1 + scene.entities[a.agent].slot] = 1.0;
            if let Some(p) = a.patient {
                v[o + self.n_verbs + 1 + self.slots + scene.entities[p].slot] = 1.0;
            }
        }
        Ok(v)
    }

    /// Entity types of the present slots, sorted.
    pub fn decode_types(&self, v: &[f64]) -> Vec<usize> {
        let mut types = Vec::new();
        for s in 0..self.slots {
            let o = s * self.entity_width;
            if v[o] > 0.5 {
                let t = &v[o + self.type_offset()..o + self.type_offset() + self.n_types];
                if let Some(ty) = t.iter().position(|&x| x > 0.5) {
                    types.push(ty);
                }
            }
        }
        types.sort_unstable();
        types
    }

    /// Presence bit of each slot.
    pub fn presence(&self, v: &[f64]) -> Vec<bool> {
        (0..self.slots).map(|s| v[s * self.entity_width] > 0.5).collect()
    }
}

/// Rotation drawn uniformly from `[-π, π)`.
pub(crate) fn rotation(u: f64) -> f64 {
    (2.0 * u - 1.0) * PI
}
