//! Central finite-difference checks for analytic gradients.

use super::graph::Mat;
use super::params::{ParamId, ParamStore};

/// Per-parameter comparison of analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: String,
    /// `|a - n| / max(|a| + |n|, floor)` over the whole tensor (L2 norms).
    pub relative_error: f64,
    pub analytic_norm: f64,
    /// Largest absolute difference between analytic and numeric entries.
    pub max_abs_error: f64,
}

impl GradCheck {
    /// Passes on small relative error, or on small absolute error for
    /// gradients that are zero up to finite-difference noise.
    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.relative_error < rel_tol || self.max_abs_error < abs_tol
    }
}

/// Numeric gradient of `loss` with respect to every entry of `id`.
pub fn numeric_gradient(
    store: &mut ParamStore,
    id: ParamId,
    eps: f64,
    loss: &mut impl FnMut(&ParamStore) -> f64,
) -> Mat {
    let dim = store.value(id).dim();
    let mut out = Mat::zeros(dim);
    for r in 0..dim.0 {
        for c in 0..dim.1 {
            let orig = store.value(id)[[r, c]];
            store.value_mut(id)[[r, c]] = orig + eps;
            let plus = loss(store);
            store.value_mut(id)[[r, c]] = orig - eps;
            let minus = loss(store);
            store.value_mut(id)[[r, c]] = orig;
            out[[r, c]] = (plus - minus) / (2.0 * eps);
        }
    }
    out
}

pub fn relative_error(analytic: &Mat, numeric: &Mat) -> f64 {
    let diff = (analytic - numeric).mapv(|x| x * x).sum().sqrt();
    let a = analytic.mapv(|x| x * x).sum().sqrt();
    let n = numeric.mapv(|x| x * x).sum().sqrt();
    diff / (a + n).max(1e-12)
}

/// Checks every parameter of `store`. `analytic` returns the gradient for a
/// parameter id (zeros when it did not take part).
pub fn check_all(
    store: &mut ParamStore,
    eps: f64,
    analytic: &impl Fn(ParamId) -> Mat,
    loss: &mut impl FnMut(&ParamStore) -> f64,
) -> Vec<GradCheck> {
    let ids: Vec<ParamId> = store.ids().collect();
    ids.into_iter()
        .map(|id| {
            let a = analytic(id);
            let n = numeric_gradient(store, id, eps, loss);
            GradCheck {
                name: store.name(id).to_string(),
                relative_error: relative_error(&a, &n),
                analytic_norm: a.mapv(|x| x * x).sum().sqrt(),
                max_abs_error: (&a - &n).iter().fold(0.0f64, |m, x| m.max(x.abs())),
            }
        })
        .collect()
}
