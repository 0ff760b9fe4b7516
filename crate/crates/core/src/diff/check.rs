//! The objective contract and finite-difference certification.

use super::params::{GradientReport, Layout, ParamVector};
use crate::error::{Error, Result};

/// A scalar objective over named parameter groups with an exact gradient.
pub trait Objective: Sync {
    /// Parameter layout this objective expects.
    fn layout(&self) -> Layout;

    fn value(&self, params: &ParamVector) -> Result<f64>;

    fn value_and_gradient(&self, params: &ParamVector) -> Result<GradientReport>;
}

fn check_layout(objective: &dyn Objective, params: &ParamVector) -> Result<()> {
    let expected = objective.layout();
    let actual = params.layout();
    if expected != actual {
        return Err(Error::ContractViolation(format!(
            "parameter layout mismatch: objective expects {expected:?}, got {actual:?}"
        )));
    }
    Ok(())
}

/// Evaluates the objective and its reverse-mode gradient after checking that
/// the parameter layout matches what the objective was built for.
pub fn evaluate_with_gradient(objective: &dyn Objective, params: &ParamVector) -> Result<GradientReport> {
    check_layout(objective, params)?;
    let report = objective.value_and_gradient(params)?;
    debug_assert_eq!(report.gradient.layout(), params.layout());
    Ok(report)
}

/// Worst entry found by [`finite_difference_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifferenceReport {
    pub max_relative_error: f64,
    pub group: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error with the denominator floored at `1e-8`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares every gradient entry against a central difference with step `epsilon`.
pub fn finite_difference_report(
    objective: &dyn Objective,
    params: &ParamVector,
    epsilon: f64,
) -> Result<FiniteDifferenceReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let analytic = evaluate_with_gradient(objective, params)?;
    let mut probe = params.clone();
    let mut worst =
        FiniteDifferenceReport { max_relative_error: 0.0, group: String::new(), index: 0, analytic: 0.0, numeric: 0.0 };
    let entries: Vec<_> = params.entries().collect();
    for (g, i) in entries {
        let x = params.at(g, i);
        probe.set(g, i, x + epsilon);
        let plus = objective.value(&probe)?;
        probe.set(g, i, x - epsilon);
        let minus = objective.value(&probe)?;
        probe.set(g, i, x);
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic.gradient.at(g, i);
        let err = relative_error(a, numeric);
        if !(err <= worst.max_relative_error) {
            worst = FiniteDifferenceReport {
                max_relative_error: err,
                group: params.groups()[g].name.clone(),
                index: i,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(worst)
}

/// Maximum relative error between the reverse-mode gradient and central differences.
pub fn finite_difference_check(objective: &dyn Objective, params: &ParamVector, epsilon: f64) -> Result<f64> {
    finite_difference_report(objective, params, epsilon).map(|r| r.max_relative_error)
}

/// `Σ x²` over one group; the reference objective for the checker itself.
#[derive(Debug, Clone)]
pub struct SumOfSquares {
    pub group: String,
    pub len: usize,
}

impl Objective for SumOfSquares {
    fn layout(&self) -> Layout {
        vec![(self.group.clone(), self.len)]
    }

    fn value(&self, params: &ParamVector) -> Result<f64> {
        Ok(params.require(&self.group)?.iter().map(|x| x * x).sum())
    }

    fn value_and_gradient(&self, params: &ParamVector) -> Result<GradientReport> {
        let x = params.require(&self.group)?;
        let mut gradient = params.zeros_like();
        if let Some(g) = gradient.get_mut(&self.group) {
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi = 2.0 * xi;
            }
        }
        Ok(GradientReport { value: self.value(params)?, gradient })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(values: Vec<f64>) -> (SumOfSquares, ParamVector) {
        let mut p = ParamVector::new();
        let len = values.len();
        p.push("x", values).unwrap();
        (SumOfSquares { group: "x".into(), len }, p)
    }

    #[test]
    fn quadratic_value_and_gradient() {
        let (obj, p) = quadratic(vec![1.0, 2.0]);
        let r = evaluate_with_gradient(&obj, &p).unwrap();
        assert_eq!(r.value, 5.0);
        assert_eq!(r.gradient.get("x").unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn quadratic_passes_checker() {
        let (obj, p) = quadratic(vec![0.3, -1.7, 4.0, 1e-3]);
        assert!(finite_difference_check(&obj, &p, 1e-5).unwrap() <= 1e-7);
    }

    #[test]
    fn layout_mismatch_is_contract_violation() {
        let (obj, _) = quadratic(vec![1.0, 2.0]);
        let mut wrong = ParamVector::new();
        wrong.push("x", vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(evaluate_with_gradient(&obj, &wrong), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn epsilon_must_be_positive() {
        let (obj, p) = quadratic(vec![1.0]);
        assert!(finite_difference_check(&obj, &p, 0.0).is_err());
    }

    #[test]
    fn duplicate_groups_and_nan_rejected() {
        let mut p = ParamVector::new();
        p.push("a", vec![1.0]).unwrap();
        assert!(p.push("a", vec![1.0]).is_err());
        assert!(p.push("b", vec![f64::NAN]).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-18);
    }
}
