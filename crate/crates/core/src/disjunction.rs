//! Convex-hull encoding of disjunctive constraints.
//!
//! An inclusive disjunction `f_1 <= 0 ∨ … ∨ f_m <= 0` holds exactly when some
//! weight vector `λ` in the unit simplex makes `Σ λ_i f_i <= 0`: if a branch is
//! non-positive, put all weight on it; if every branch is positive, every
//! convex combination is positive. The optimizer treats `λ` as free variables
//! per time node.
//!
//! The two-branch exclusive-or adds a second simplex weight `π` and requires
//! `Σ λ_i f_i <= 0` together with `Σ π_i f_i >= 0`.

use thiserror::Error;

/// Tolerance on simplex membership of caller-supplied weights.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DisjunctionError {
    #[error("weights {0:?} are not in the unit simplex")]
    InvalidWeight(Vec<f64>),
    #[error("branch and weight counts differ ({branches} vs {weights})")]
    DimensionMismatch { branches: usize, weights: usize },
    #[error("a disjunction needs at least two branches, got {0}")]
    TooFewBranches(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisjunctionKind {
    Inclusive,
    Exclusive,
}

/// Shape of a disjunction: how many branches and which kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisjunctionSpec {
    pub branches: usize,
    pub kind: DisjunctionKind,
}

impl DisjunctionSpec {
    pub fn new(branches: usize, kind: DisjunctionKind) -> Result<Self, DisjunctionError> {
        if branches < 2 {
            return Err(DisjunctionError::TooFewBranches(branches));
        }
        Ok(Self { branches, kind })
    }

    pub fn inclusive(branches: usize) -> Result<Self, DisjunctionError> {
        Self::new(branches, DisjunctionKind::Inclusive)
    }

    fn check(&self, f: &[f64], w: &[f64]) -> Result<(), DisjunctionError> {
        if f.len() != self.branches || w.len() != self.branches {
            return Err(DisjunctionError::DimensionMismatch { branches: f.len(), weights: w.len() });
        }
        if !in_simplex(w) {
            return Err(DisjunctionError::InvalidWeight(w.to_vec()));
        }
        Ok(())
    }
}

pub fn in_simplex(w: &[f64]) -> bool {
    w.iter().all(|&x| x >= -SIMPLEX_TOL && x.is_finite()) && (w.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// `Σ λ_i f_i`; a non-positive value certifies the inclusive disjunction.
pub fn hull_residual(spec: &DisjunctionSpec, f: &[f64], weights: &[f64]) -> Result<f64, DisjunctionError> {
    spec.check(f, weights)?;
    Ok(f.iter().zip(weights).map(|(a, b)| a * b).sum())
}

/// A simplex weight certifying the disjunction, or `None` when every branch is
/// positive. All weight goes on the most negative branch (first one on ties).
pub fn feasible_weight(f: &[f64]) -> Option<Vec<f64>> {
    let (best, value) =
        f.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    if !(value <= 0.0) {
        return None;
    }
    let mut w = vec![0.0; f.len()];
    w[best] = 1.0;
    Some(w)
}

/// `(Σ λ_i f_i, Σ π_i f_i)` for a two-branch exclusive-or; it holds when the
/// first is non-positive and the second non-negative.
pub fn exclusive_residuals(
    spec: &DisjunctionSpec,
    f: &[f64],
    lambda: &[f64],
    pi: &[f64],
) -> Result<(f64, f64), DisjunctionError> {
    spec.check(f, lambda)?;
    spec.check(f, pi)?;
    let dot = |w: &[f64]| f.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    Ok((dot(lambda), dot(pi)))
}

/// Whether some weight pair can satisfy the exclusive-or: one branch must be
/// non-positive and one non-negative.
pub fn exclusive_feasible(f: &[f64]) -> bool {
    let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    lo <= 0.0 && hi >= 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn hull_residual_examples() {
        let spec = DisjunctionSpec::inclusive(2).unwrap();
        assert_abs_diff_eq!(hull_residual(&spec, &[5.0, -3.0], &[0.2, 0.8]).unwrap(), -1.4, epsilon = 1e-12);
        assert_eq!(hull_residual(&spec, &[0.0, 0.0], &[0.5, 0.5]).unwrap(), 0.0);
        assert!(matches!(hull_residual(&spec, &[1.0, 1.0], &[0.7, 0.7]), Err(DisjunctionError::InvalidWeight(_))));
        assert!(matches!(hull_residual(&spec, &[1.0, 1.0], &[1.1, -0.1]), Err(DisjunctionError::InvalidWeight(_))));
    }

    #[test]
    fn both_positive_has_no_certificate() {
        let spec = DisjunctionSpec::inclusive(2).unwrap();
        for k in 0..=100 {
            let l = k as f64 / 100.0;
            assert!(hull_residual(&spec, &[1.0, 1.0], &[l, 1.0 - l]).unwrap() > 0.0);
        }
        assert_eq!(feasible_weight(&[0.1, 0.2]), None);
    }

    #[test]
    fn canonical_weights() {
        assert_eq!(feasible_weight(&[5.0, -3.0]), Some(vec![0.0, 1.0]));
        assert_eq!(feasible_weight(&[-1.0, -2.0]), Some(vec![0.0, 1.0]));
        assert_eq!(feasible_weight(&[0.0, 0.0]), Some(vec![1.0, 0.0]));
    }

    #[test]
    fn exclusive_examples() {
        let spec = DisjunctionSpec::new(2, DisjunctionKind::Exclusive).unwrap();
        assert_eq!(exclusive_residuals(&spec, &[-2.0, 3.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap(), (-2.0, 3.0));
        assert!(!exclusive_feasible(&[-1.0, -1.0]));
        assert!(!exclusive_feasible(&[2.0, 2.0]));
        assert!(exclusive_feasible(&[-2.0, 3.0]));
    }

    #[test]
    fn spec_needs_two_branches() {
        assert!(DisjunctionSpec::inclusive(1).is_err());
    }

    proptest! {
        #[test]
        fn theorem_both_directions(f1 in -10.0f64..10.0, f2 in -10.0f64..10.0) {
            let spec = DisjunctionSpec::inclusive(2).unwrap();
            match feasible_weight(&[f1, f2]) {
                Some(w) => {
                    prop_assert!(f1.min(f2) <= 0.0);
                    prop_assert_eq!(w.iter().sum::<f64>(), 1.0);
                    prop_assert!(w.iter().all(|&x| x >= 0.0));
                    prop_assert!(hull_residual(&spec, &[f1, f2], &w).unwrap() <= 0.0);
                }
                None => prop_assert!(f1.min(f2) > 0.0),
            }
        }
    }
}
