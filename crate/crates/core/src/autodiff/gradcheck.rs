//! Central-difference verification of tape gradients.

use crate::autodiff::params::{ParamId, ParamStore};
use crate::autodiff::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and central-difference values at the worst entry.
    pub worst_values: Option<(f64, f64)>,
    pub entries_checked: usize,
    /// `(analytic, central difference)` for every checked entry, in order.
    pub pairs: Vec<(f64, f64)>,
}

impl GradCheckReport {
    /// Entries whose relative error reaches `threshold`.
    pub fn failing(&self, threshold: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.pairs
            .iter()
            .copied()
            .filter(move |&(a, n)| relative_error(a, n) >= threshold)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic gradients of `f` with central differences for every
/// entry of every trainable parameter in `params`.
///
/// The error of one entry is `|a − n| / max(|a|, |n|, 1e-8)`; the report
/// carries the maximum. `f` must be deterministic: it is evaluated twice at
/// the unperturbed point and the two values must agree bit for bit.
pub fn grad_check<F>(params: &ParamStore, f: F, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let ids: Vec<ParamId> = params.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    grad_check_subset(params, &ids, f, epsilon)
}

pub fn grad_check_subset<F>(params: &ParamStore, ids: &[ParamId], f: F, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(Error::Config(format!(
            "grad_check epsilon must lie in (0, 1e-3], got {epsilon}"
        )));
    }

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::with_params(store);
        let loss = f(&mut tape)?;
        Ok(tape.scalar(loss))
    };

    let analytic = {
        let mut tape = Tape::with_params(params);
        let loss = f(&mut tape)?;
        let first = tape.scalar(loss);
        let second = eval(params)?;
        if first.to_bits() != second.to_bits() {
            return Err(Error::NonDeterministic { first, second });
        }
        tape.gradients(loss)?
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        worst_values: None,
        entries_checked: 0,
        pairs: Vec::new(),
    };
    for &id in ids {
        let grad = analytic.get(params, id);
        for k in 0..params.value(id).len() {
            let orig = params.value(id).data()[k];
            work.value_mut(id).data_mut()[k] = orig + epsilon;
            let plus = eval(&work)?;
            work.value_mut(id).data_mut()[k] = orig - epsilon;
            let minus = eval(&work)?;
            work.value_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[k];
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            report.pairs.push((a, numeric));
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((params.get(id).name.clone(), k));
                report.worst_values = Some((a, numeric));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn quadratic_form_is_exact() {
        // f(x) = xᵀ A x with a fixed non-symmetric A
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::column(vec![0.3, -1.1, 0.8]).unwrap()).unwrap();
        let a = Tensor::matrix(3, 3, vec![2.0, 0.5, -0.3, 0.1, 1.5, 0.2, -0.7, 0.4, 3.0]).unwrap();
        let report = grad_check(
            &store,
            |tape| {
                let xv = tape.param(x)?;
                let av = tape.constant(a.clone());
                let ax = tape.matmul(av, xv)?;
                let xt = tape.transpose(xv)?;
                tape.matmul(xt, ax)
            },
            1e-5,
        )
        .unwrap();
        assert_eq!(report.entries_checked, 3);
        assert!(report.max_relative_error < 1e-7, "{report:?}");
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::column(vec![1.0, 2.0]).unwrap()).unwrap();
        let report = grad_check(
            &store,
            |tape| {
                let _ = tape.param(x)?;
                Ok(tape.constant(Tensor::scalar(4.0)))
            },
            1e-5,
        )
        .unwrap();
        assert_eq!(report.max_relative_error, 0.0);
    }

    #[test]
    fn detects_nondeterminism() {
        use std::cell::Cell;
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(1.0)).unwrap();
        let calls = Cell::new(0.0);
        let result = grad_check(
            &store,
            |tape| {
                calls.set(calls.get() + 1.0);
                let xv = tape.param(x)?;
                tape.affine(xv, 1.0, calls.get())
            },
            1e-5,
        );
        assert!(matches!(result, Err(Error::NonDeterministic { .. })));
    }

    #[test]
    fn rejects_large_epsilon() {
        let store = ParamStore::new();
        let r = grad_check(&store, |tape| Ok(tape.constant(Tensor::scalar(0.0))), 0.1);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
