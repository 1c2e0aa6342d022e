//! Central-difference gradient verification in 64-bit precision.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use crate::error::Result;

/// Parameters up to this many entries are checked exhaustively.
pub const FULL_CHECK_LIMIT: usize = 256;
/// Sample size for larger parameters.
pub const SAMPLED_ENTRIES: usize = 64;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// Flat indices whose relative error exceeded the tolerance.
    pub offending: Vec<usize>,
    /// `(index, analytic, numeric)` of the entry with the largest error.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.offending.is_empty())
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.offending.is_empty())
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `grad_fn`'s analytic gradients against central differences of
/// `loss_fn`. `grad_fn` must leave the gradients in the store it is given.
pub fn check_gradients<L, G>(
    store: &ParamStore<f64>,
    loss_fn: L,
    grad_fn: G,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    L: Fn(&ParamStore<f64>) -> Result<f64>,
    G: Fn(&mut ParamStore<f64>) -> Result<()>,
{
    let mut analytic = store.clone();
    analytic.zero_grads();
    grad_fn(&mut analytic)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe = store.clone();
    let mut report = Vec::with_capacity(store.len());
    for id in store.ids() {
        let p = store.get(id);
        let n = p.value.len();
        let cols = p.value.cols();
        let mut entries: Vec<usize> = if n <= FULL_CHECK_LIMIT {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, SAMPLED_ENTRIES).into_vec();
            v.sort_unstable();
            v
        };
        if let Some(r) = p.frozen_row {
            entries.retain(|&k| k / cols != r);
        }
        let mut check = ParamCheck {
            name: p.name.clone(),
            checked: entries.len(),
            max_rel_err: 0.0,
            offending: Vec::new(),
            worst: None,
        };
        for k in entries {
            let orig = p.value.data()[k];
            let mut at = |d: f64| {
                probe.get_mut(id).value.data_mut()[k] = orig + d;
                loss_fn(&probe)
            };
            let h = cfg.eps;
            // fourth-order central stencil
            let numeric = (8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h);
            probe.get_mut(id).value.data_mut()[k] = orig;
            let a = analytic.get(id).grad.data()[k];
            let err = relative_error(a, numeric);
            if check.worst.is_none() || err > check.max_rel_err {
                check.max_rel_err = err;
                check.worst = Some((k, a, numeric));
            }
            if !(err < cfg.tol) {
                check.offending.push(k);
            }
        }
        report.push(check);
    }
    Ok(GradCheckReport {
        params: report,
        tol: cfg.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::params::Component;
    use crate::numcore::tensor::Tensor2;

    fn quad_store(w: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Component::Shared, Tensor2::filled(1, 1, w))
            .unwrap();
        s
    }

    fn square(s: &ParamStore<f64>) -> Result<f64> {
        let w = s.iter().next().unwrap().value.data()[0];
        Ok(w * w)
    }

    #[test]
    fn quadratic_passes() {
        let s = quad_store(3.0);
        let report = check_gradients(
            &s,
            square,
            |s| {
                let p = s.iter_mut().next().unwrap();
                p.grad.data_mut()[0] = 2.0 * p.value.data()[0];
                Ok(())
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed());
        assert!(report.max_rel_err() < 1e-8, "{}", report.max_rel_err());
    }

    #[test]
    fn cubic_is_exact_under_the_stencil() {
        // a two-point difference would be off by eps² here
        let s = quad_store(0.01);
        let report = check_gradients(
            &s,
            |s| Ok(s.iter().next().unwrap().value.data()[0].powi(3)),
            |s| {
                let p = s.iter_mut().next().unwrap();
                p.grad.data_mut()[0] = 3.0 * p.value.data()[0].powi(2);
                Ok(())
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err() < 1e-9, "{}", report.max_rel_err());
    }

    #[test]
    fn doubled_gradient_is_flagged() {
        let s = quad_store(3.0);
        let report = check_gradients(
            &s,
            square,
            |s| {
                let p = s.iter_mut().next().unwrap();
                p.grad.data_mut()[0] = 4.0 * p.value.data()[0];
                Ok(())
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(!report.passed());
        let bad: Vec<_> = report.failures().collect();
        assert_eq!(bad[0].name, "w");
        assert_eq!(bad[0].offending, vec![0]);
    }

    #[test]
    fn large_params_are_sampled() {
        let mut s = ParamStore::new();
        s.add("big", Component::Shared, Tensor2::filled(20, 20, 0.5))
            .unwrap();
        let report = check_gradients(
            &s,
            |s| Ok(s.iter().next().unwrap().value.data().iter().sum()),
            |s| {
                s.iter_mut().next().unwrap().grad.fill(1.0);
                Ok(())
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.params[0].checked, SAMPLED_ENTRIES);
        assert!(report.passed());
    }
}
