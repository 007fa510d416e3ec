//! Central finite-difference audit of analytic gradients.

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::{DclError, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is ~0 are judged on absolute error.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tol: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub max_abs_err: f64,
    /// (parameter index, flat coordinate) of the worst coordinate.
    pub worst: (usize, usize),
    pub coordinates: usize,
    pub passed: bool,
}

/// Central differences `(f(p + h e_k) - f(p - h e_k)) / 2h` for every coordinate.
pub fn numeric_gradient<F>(params: &[Matrix], step: f64, mut f: F) -> Result<Vec<Matrix>>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(DclError::Contract(format!("step must be > 0, got {step}")));
    }
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Matrix::zeros(params[p].rows(), params[p].cols());
        for k in 0..params[p].len() {
            let orig = work[p].as_slice()[k];
            work[p].as_mut_slice()[k] = orig + step;
            let plus = f(&work)?;
            work[p].as_mut_slice()[k] = orig - step;
            let minus = f(&work)?;
            work[p].as_mut_slice()[k] = orig;
            g.as_mut_slice()[k] = (plus - minus) / (2.0 * step);
        }
        out.push(g);
    }
    Ok(out)
}

/// Compares `analytic` against central differences of `f` at `params`.
///
/// `f` is evaluated twice at `params` first; differing results are reported
/// as a contract error since finite differences are meaningless then.
pub fn gradient_check<F>(
    params: &[Matrix],
    analytic: &[Matrix],
    opts: GradCheckOptions,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    if analytic.len() != params.len() {
        return Err(DclError::Contract(format!(
            "{} analytic gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    for (p, g) in params.iter().zip(analytic) {
        p.check_same(g, "gradient_check")?;
    }
    let first = f(params)?;
    let second = f(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(DclError::Contract(format!(
            "function is not deterministic: {first} then {second}"
        )));
    }

    let numeric = numeric_gradient(params, opts.step, &mut f)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        mean_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: (0, 0),
        coordinates: 0,
        passed: true,
    };
    let mut total = 0.0;
    for (p, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        for (k, (&av, &nv)) in a.as_slice().iter().zip(n.as_slice()).enumerate() {
            let abs = (av - nv).abs();
            let rel = abs / av.abs().max(nv.abs()).max(opts.floor);
            total += rel;
            report.coordinates += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (p, k);
            }
        }
    }
    if report.coordinates > 0 {
        report.mean_rel_err = total / report.coordinates as f64;
    }
    report.passed = report.max_rel_err < opts.tol;
    Ok(report)
}

/// Gradient check for a scalar graph built on a fresh tape from `params`.
pub fn check_taped<B>(params: &[Matrix], opts: GradCheckOptions, build: B) -> Result<GradCheckReport>
where
    B: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Matrix> = vars.iter().map(|&v| grads.get(v)).collect();

    gradient_check(params, &analytic, opts, |ps| {
        let mut t = Tape::new();
        let vs: Vec<Var> = ps.iter().map(|p| t.param(p.clone())).collect();
        let l = build(&mut t, &vs)?;
        t.value(l).to_scalar()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn square_at_three() {
        let params = [Matrix::scalar(3.0)];
        let g = numeric_gradient(&params, 1e-5, |p| Ok(p[0].get(0, 0).powi(2))).unwrap();
        assert!((g[0].get(0, 0) - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let step = 1e-4;
        let params = [Matrix::ones(2, 3)];
        let g = numeric_gradient(&params, step, |_| Ok(42.0)).unwrap();
        assert!(g[0].as_slice().iter().all(|x| x.abs() <= step * step));
    }

    #[test]
    fn nondeterminism_is_reported() {
        let calls = Cell::new(0u32);
        let params = [Matrix::scalar(1.0)];
        let err = gradient_check(&params, &[Matrix::scalar(0.0)], GradCheckOptions::default(), |_| {
            calls.set(calls.get() + 1);
            Ok(calls.get() as f64)
        })
        .unwrap_err();
        assert!(matches!(err, DclError::Contract(_)));
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(numeric_gradient(&[Matrix::scalar(1.0)], 0.0, |_| Ok(0.0)).is_err());
    }
}
