use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Denominator floor for the relative error, so that near-zero gradients
    /// are compared absolutely.
    pub floor: f64,
    /// Check at most this many coordinates per parameter (evenly strided).
    pub max_per_param: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-4,
            floor: 1e-4,
            max_per_param: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compare reverse-mode gradients of a scalar loss against central finite
/// differences, coordinate by coordinate.
///
/// `build` must be deterministic: it is called once for the analytic gradient
/// and twice per checked coordinate on a perturbed copy of `store`.
pub fn finite_diff_check<F>(
    store: &ParamStore,
    build: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = build(&mut g)?;
        g.backward(loss)?
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(s);
        let loss = build(&mut g)?;
        g.value(loss).item()
    };

    let mut work = store.clone();
    let mut entries = Vec::with_capacity(store.len());
    for id in store.ids() {
        let len = store.get(id).len();
        let stride = match opts.max_per_param {
            Some(m) if m > 0 && len > m => len.div_ceil(m),
            _ => 1,
        };
        let mut entry = GradCheckEntry {
            name: store.name(id).to_string(),
            checked: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for k in (0..len).step_by(stride) {
            let orig = store.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + opts.h;
            let up = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig - opts.h;
            let down = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig;

            let numeric = (up - down) / (2.0 * opts.h);
            let a = analytic.get(id).data()[k];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.floor);
            entry.max_abs_error = entry.max_abs_error.max(abs);
            entry.max_rel_error = entry.max_rel_error.max(rel);
            entry.checked += 1;
        }
        entries.push(entry);
    }
    Ok(GradCheckReport { entries })
}
