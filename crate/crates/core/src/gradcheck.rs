//! Central finite-difference gradient checking against a [`ParamStore`].

use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::Grads;
use crate::params::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Step is `step · max(1, |θ|)`.
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-4, floor: 1e-6, tolerance: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// The entry with the largest relative error.
    pub worst: Option<GradMismatch>,
    pub failures: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` with five-point central differences of `loss` for
/// every scalar of the parameters in `ids`. `loss` must be a pure function
/// of the store.
pub fn check_params(
    store: &mut ParamStore,
    ids: &[ParamId],
    analytic: &Grads,
    config: GradCheckConfig,
    mut loss: impl FnMut(&ParamStore) -> f64,
) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    for &id in ids {
        let len = store.value(id).len();
        for i in 0..len {
            let original = store.value(id).data()[i];
            let h = config.step * original.abs().max(1.0);
            let mut at = |offset: f64| {
                store.value_mut(id).data_mut()[i] = original + offset;
                loss(store)
            };
            let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
            store.value_mut(id).data_mut()[i] = original;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            let a = analytic.param(id).map_or(0.0, |g| g.data()[i]);
            let rel = relative_error(a, numeric, config.floor);
            report.checked += 1;
            let entry =
                || GradMismatch { param: store.get(id).name.clone(), index: i, analytic: a, numeric, rel_error: rel };
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some(entry());
            }
            if rel.is_nan() || rel >= config.tolerance {
                report.failures.push(entry());
            }
        }
    }
    report
}
