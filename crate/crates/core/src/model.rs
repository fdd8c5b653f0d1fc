//! Regression data model `Y = X beta* + eps` and shared numeric helpers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrexError};

/// Columns whose Euclidean norm is within this distance of `sqrt(n)` count as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Absolute fallback used by relative tolerance checks when the reference is zero.
pub const ABS_TOL: f64 = 1e-12;

/// A design matrix and response.
///
/// Immutable after construction. The `normalized` flag records whether every
/// column has Euclidean norm `sqrt(n)`; solvers refuse unnormalized problems
/// unless told otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct RegressionProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    normalized: bool,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(TrexError::Dimension(format!("design is {n}x{p}; need n, p >= 1")));
        }
        if y.len() != n {
            return Err(TrexError::Dimension(format!(
                "response has length {} but design has {n} rows",
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(TrexError::NonFinite("design"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(TrexError::NonFinite("response"));
        }
        let normalized = columns_normalized(&x);
        Ok(Self { x, y, normalized })
    }

    /// Normalizes the columns of `x` and returns the problem with the per-column scales.
    pub fn normalized(x: DMatrix<f64>, y: DVector<f64>) -> Result<(Self, DVector<f64>)> {
        let (xn, scale) = normalize_columns(&x)?;
        Ok((Self::new(xn, y)?, scale))
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `X^T Y`.
    pub fn xty(&self) -> DVector<f64> {
        self.x.tr_mul(&self.y)
    }

    /// Problem restricted to the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&j| j >= self.p()) {
            return Err(TrexError::Dimension(format!("column {bad} out of range")));
        }
        let x = self.x.select_columns(cols.iter());
        Self::new(x, self.y.clone())
    }

    pub(crate) fn check_beta(&self, beta: &DVector<f64>) -> Result<()> {
        if beta.len() != self.p() {
            return Err(TrexError::Dimension(format!(
                "coefficient vector has length {} but p = {}",
                beta.len(),
                self.p()
            )));
        }
        Ok(())
    }
}

fn columns_normalized(x: &DMatrix<f64>) -> bool {
    let target = (x.nrows() as f64).sqrt();
    x.column_iter().all(|c| (c.norm() - target).abs() <= NORMALIZATION_TOL)
}

#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    n: usize,
    p: usize,
    /// Row-major design.
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl TryFrom<ProblemRepr> for RegressionProblem {
    type Error = TrexError;

    fn try_from(r: ProblemRepr) -> Result<Self> {
        if r.x.len() != r.n || r.x.iter().any(|row| row.len() != r.p) {
            return Err(TrexError::Dimension(format!(
                "design rows do not match declared shape {}x{}",
                r.n, r.p
            )));
        }
        let x = DMatrix::from_fn(r.n, r.p, |i, j| r.x[i][j]);
        Self::new(x, DVector::from_vec(r.y))
    }
}

impl From<RegressionProblem> for ProblemRepr {
    fn from(p: RegressionProblem) -> Self {
        ProblemRepr {
            n: p.n(),
            p: p.p(),
            x: p.x.row_iter().map(|r| r.iter().copied().collect()).collect(),
            y: p.y.iter().copied().collect(),
        }
    }
}

/// Known generating quantities of a synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(with = "dvec_serde")]
    pub beta_star: DVector<f64>,
    #[serde(with = "dvec_serde")]
    pub epsilon: DVector<f64>,
    pub sigma: f64,
    pub support: Vec<usize>,
    pub sparsity: usize,
}

impl GroundTruth {
    /// Builds the truth record, deriving the support from the nonzeros of `beta_star`.
    pub fn new(beta_star: DVector<f64>, epsilon: DVector<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(TrexError::Parameter(format!("noise scale must be positive, got {sigma}")));
        }
        let support = support_of(&beta_star);
        let sparsity = support.len();
        Ok(Self { beta_star, epsilon, sigma, support, sparsity })
    }

    /// Relative reconstruction error `||y - X beta* - eps|| / ||y||`.
    pub fn reconstruction_error(&self, problem: &RegressionProblem) -> f64 {
        let gap = problem.y() - problem.x() * &self.beta_star - &self.epsilon;
        gap.norm() / problem.y().norm().max(ABS_TOL)
    }
}

/// Serializes a `DVector` as a flat JSON array.
pub mod dvec_serde {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub fn support_of(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect()
}

/// Residual `r = y - X beta` and its correlations `X^T r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub r: DVector<f64>,
    pub correlation: DVector<f64>,
}

/// Scales each column to Euclidean norm `sqrt(n)`.
///
/// Returns the normalized matrix and the multipliers applied to each column,
/// so that a coefficient `b` in normalized coordinates maps back to `b * scale`.
pub fn normalize_columns(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let target = (x.nrows() as f64).sqrt();
    let mut out = x.clone();
    let mut scale = DVector::zeros(x.ncols());
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            return Err(TrexError::ZeroColumn(j));
        }
        // Leave columns that already satisfy the target untouched so normalization is idempotent.
        let m = if (norm - target).abs() <= NORMALIZATION_TOL * 1e-4 { 1.0 } else { target / norm };
        col *= m;
        scale[j] = m;
    }
    Ok((out, scale))
}

/// Maps a coefficient vector from normalized back to original coordinates.
pub fn unscale_coefficients(beta: &DVector<f64>, scale: &DVector<f64>) -> DVector<f64> {
    beta.component_mul(scale)
}

pub fn residual(problem: &RegressionProblem, beta: &DVector<f64>) -> Result<Residual> {
    problem.check_beta(beta)?;
    let r = problem.y() - problem.x() * beta;
    let correlation = problem.x().tr_mul(&r);
    Ok(Residual { r, correlation })
}

/// `||X(beta - beta*)||_2^2 / n`.
pub fn prediction_loss(
    problem: &RegressionProblem,
    truth: &GroundTruth,
    beta: &DVector<f64>,
) -> Result<f64> {
    problem.check_beta(beta)?;
    problem.check_beta(&truth.beta_star)?;
    let diff = problem.x() * (beta - &truth.beta_star);
    Ok(diff.norm_squared() / problem.n() as f64)
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|a| a.abs()).sum()
}

pub fn linf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

/// `|a - b| <= tol * max(|a|, |b|)` with an absolute fallback of [`ABS_TOL`].
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()) + ABS_TOL
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn normalize_already_normalized_columns() {
        let (x, s) = normalize_columns(&col(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(x, col(&[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(s[0], 1.0);

        let (x, s) = normalize_columns(&col(&[2.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(x, col(&[2.0, 0.0, 0.0, 0.0]));
        assert_eq!(s[0], 1.0);
    }

    #[test]
    fn normalize_single_row() {
        let (x, s) = normalize_columns(&col(&[5.0])).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((s[0] - 0.2).abs() < 1e-15);
        assert!((x.column(0).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_zero_column() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 3.0, 0.0, 1.0]);
        match normalize_columns(&x) {
            Err(TrexError::ZeroColumn(1)) => {}
            other => panic!("expected zero column 1, got {other:?}"),
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, 7.0, 0.1]);
        let (once, _) = normalize_columns(&x).unwrap();
        let (twice, s2) = normalize_columns(&once).unwrap();
        assert_eq!(once, twice);
        assert!(s2.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn problem_flags_normalization() {
        let x = DMatrix::from_row_slice(2, 1, &[3.0, 4.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(!RegressionProblem::new(x.clone(), y.clone()).unwrap().is_normalized());
        let (p, scale) = RegressionProblem::normalized(x, y).unwrap();
        assert!(p.is_normalized());
        assert!((scale[0] - 2f64.sqrt() / 5.0).abs() < 1e-15);
    }

    #[test]
    fn problem_rejects_bad_input() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(RegressionProblem::new(x, y.clone()), Err(TrexError::NonFinite(_))));
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        assert!(matches!(RegressionProblem::new(x, y), Err(TrexError::Dimension(_))));
    }

    #[test]
    fn residual_cases() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let p = RegressionProblem::new(x.clone(), y.clone()).unwrap();

        let r0 = residual(&p, &DVector::zeros(2)).unwrap();
        assert_eq!(r0.r, y);
        assert_eq!(r0.correlation, x.tr_mul(&y));

        let beta = DVector::from_vec(vec![1.0, 2.0]);
        let exact = RegressionProblem::new(x.clone(), &x * &beta).unwrap();
        let r = residual(&exact, &beta).unwrap();
        assert!(r.r.norm() == 0.0 && r.correlation.norm() == 0.0);

        assert!(matches!(residual(&p, &DVector::zeros(3)), Err(TrexError::Dimension(_))));
    }

    #[test]
    fn residual_scalar() {
        let p = RegressionProblem::new(col(&[1.0]), DVector::from_vec(vec![3.0])).unwrap();
        let r = residual(&p, &DVector::from_vec(vec![1.0])).unwrap();
        assert_eq!(r.r[0], 2.0);
        assert_eq!(r.correlation[0], 2.0);
    }

    #[test]
    fn prediction_loss_cases() {
        // Orthogonal design with X^T X = n I: loss equals ||beta - beta*||^2.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
        assert_eq!(x.tr_mul(&x), DMatrix::identity(2, 2) * 4.0);
        let bstar = DVector::from_vec(vec![0.5, -1.0]);
        let eps = DVector::from_vec(vec![0.1, -0.2, 0.0, 0.3]);
        let y = &x * &bstar + &eps;
        let p = RegressionProblem::new(x.clone(), y).unwrap();
        let truth = GroundTruth::new(bstar.clone(), eps, 1.0).unwrap();
        assert_eq!(prediction_loss(&p, &truth, &bstar).unwrap(), 0.0);
        let beta = DVector::from_vec(vec![1.25, 0.5]);
        let expected = (&beta - &bstar).norm_squared();
        assert!((prediction_loss(&p, &truth, &beta).unwrap() - expected).abs() < 1e-12);
        assert!(truth.reconstruction_error(&p) <= 1e-15);
    }

    #[test]
    fn prediction_loss_null_space_invariance() {
        // Duplicate columns: (1, -1) lies in the null space.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let bstar = DVector::from_vec(vec![1.0, 0.0]);
        let eps = DVector::from_vec(vec![0.3, -0.1]);
        let p = RegressionProblem::new(x.clone(), &x * &bstar + &eps).unwrap();
        let truth = GroundTruth::new(bstar, eps, 1.0).unwrap();
        let beta = DVector::from_vec(vec![0.2, 0.4]);
        let shifted = &beta + DVector::from_vec(vec![3.0, -3.0]);
        let a = prediction_loss(&p, &truth, &beta).unwrap();
        let b = prediction_loss(&p, &truth, &shifted).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(prediction_loss(&p, &truth, &DVector::from_vec(vec![0.5, 0.5])).unwrap(), 0.0);
    }

    #[test]
    fn ground_truth_support() {
        let t = GroundTruth::new(
            DVector::from_vec(vec![0.0, 2.0, 0.0, -1.0]),
            DVector::zeros(3),
            1.0,
        )
        .unwrap();
        assert_eq!(t.support, vec![1, 3]);
        assert_eq!(t.sparsity, 2);
        assert!(GroundTruth::new(DVector::zeros(1), DVector::zeros(1), 0.0).is_err());
    }

    #[test]
    fn problem_json_roundtrip() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = RegressionProblem::new(x, DVector::from_vec(vec![5.0, 6.0])).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"x\":[[1.0,2.0],[3.0,4.0]]"));
        let back: RegressionProblem = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
