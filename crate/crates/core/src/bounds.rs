//! Per-instance certification of the LASSO and TREX prediction bounds.
//!
//! Every verifier returns a [`BoundReport`] carrying both sides of the
//! inequality and the hypotheses it was gated on. A report whose hypotheses
//! fail is [`Verdict::NotApplicable`], never [`Verdict::Violated`]. Noise
//! quantities such as `||X^T eps||_inf` come from the ground truth and are
//! unavailable for real data.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Result, TrexError};
use crate::lasso::{fit_lasso, LassoFit};
use crate::model::{l1_norm, linf_norm, prediction_loss, GroundTruth, RegressionProblem};
use crate::norms::{NormKind, NormSpec};
use crate::trex::TrexFit;

/// Relative slack on the right-hand side of every bound.
pub const REL_TOL: f64 = 1e-9;
/// Absolute slack for the l1-ordering comparison.
pub const ORDERING_TOL: f64 = 1e-6;
/// Multiplier applied to a sampled compatibility constant before it enters a
/// verdict, because sampling can only over-estimate the true constant.
pub const NU_DEFLATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    /// LASSO fast rate.
    L1,
    /// LASSO slow rate.
    L2,
    /// TREX fast rate through the LASSO at a data-driven tuning parameter.
    T1,
    /// TREX fast rate with the compatibility constant.
    C3,
    /// TREX slow rate.
    T2,
    /// `T1` with general `(kappa1, kappa2)`.
    ThmA,
    /// `C3` with general `(kappa1, kappa2)`.
    CorA,
    /// Slow rate for a general norm penalty.
    ThmB,
    /// TREX has at least the l1 norm of the LASSO at `lambda = u_hat`.
    LemA,
}

impl TheoremId {
    pub const ALL: [TheoremId; 9] = [
        TheoremId::L1,
        TheoremId::L2,
        TheoremId::T1,
        TheoremId::C3,
        TheoremId::T2,
        TheoremId::ThmA,
        TheoremId::CorA,
        TheoremId::ThmB,
        TheoremId::LemA,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::L1 => "L1",
            TheoremId::L2 => "L2",
            TheoremId::T1 => "T1",
            TheoremId::C3 => "C3",
            TheoremId::T2 => "T2",
            TheoremId::ThmA => "ThmA",
            TheoremId::CorA => "CorA",
            TheoremId::ThmB => "ThmB",
            TheoremId::LemA => "LemA",
        }
    }
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TheoremId {
    type Err = TrexError;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| TrexError::Parameter(format!("unknown theorem id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Violated,
    NotApplicable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::NotApplicable => "not-applicable",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One hypothesis `lhs <= rhs` (or `lhs >= rhs`, recorded in `holds`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

impl AssumptionCheck {
    fn at_most(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), holds: lhs <= rhs, lhs, rhs }
    }

    fn at_least(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), holds: lhs >= rhs, lhs, rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_hat: Option<f64>,
    /// `||X^T eps||_inf`, or `Omega*(X^T eps)` for general norms.
    pub noise_dual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Compatibility constant used in the verdict (after deflation).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: TheoremId,
    pub assumptions: Vec<AssumptionCheck>,
    pub lhs: f64,
    pub rhs: f64,
    /// Right-hand side with the undeflated compatibility estimate, when `nu` enters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs_with_estimate: Option<f64>,
    pub verdict: Verdict,
    pub inputs: BoundInputs,
}

impl BoundReport {
    fn new(
        theorem: TheoremId,
        assumptions: Vec<AssumptionCheck>,
        lhs: f64,
        rhs: f64,
        abs_tol: f64,
        inputs: BoundInputs,
    ) -> Self {
        let verdict = if !assumptions.iter().all(|a| a.holds) {
            Verdict::NotApplicable
        } else if lhs <= rhs * (1.0 + REL_TOL) + abs_tol {
            Verdict::Holds
        } else {
            Verdict::Violated
        };
        Self { theorem, assumptions, lhs, rhs, rhs_with_estimate: None, verdict, inputs }
    }

    pub fn gates_pass(&self) -> bool {
        self.assumptions.iter().all(|a| a.holds)
    }

    /// `lhs / rhs`, `0` when both vanish and `inf` when only `rhs` does.
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else if self.lhs <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Result of the compatibility-constant search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityEstimate {
    /// Smallest ratio found; an upper bound on the largest admissible constant.
    pub nu: f64,
    pub samples: usize,
    /// The value is the true constant (orthogonal design).
    pub exact: bool,
}

impl CompatibilityEstimate {
    /// Constant used inside verdicts: the estimate itself when exact, deflated otherwise.
    pub fn for_verdict(&self) -> f64 {
        if self.exact {
            self.nu
        } else {
            NU_DEFLATION * self.nu
        }
    }
}

/// `(kappa1, kappa2)` pair of the general fast-rate results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa1: f64,
    pub kappa2: f64,
}

impl Default for Kappa {
    fn default() -> Self {
        Self { kappa1: 2.0, kappa2: 8.0 }
    }
}

impl Kappa {
    pub fn new(kappa1: f64, kappa2: f64) -> Result<Self> {
        let k = Self { kappa1, kappa2 };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let Kappa { kappa1, kappa2 } = *self;
        if !(kappa1 > 1.0 && kappa2 > 2.0 && kappa1.is_finite() && kappa2.is_finite()) {
            return Err(TrexError::Parameter(format!("need kappa1 > 1 and kappa2 > 2, got ({kappa1}, {kappa2})")));
        }
        if 1.0 / kappa1 + 2.0 / kappa2 >= 1.0 {
            return Err(TrexError::Parameter(format!(
                "need 1/kappa1 + 2/kappa2 < 1, got {}",
                1.0 / kappa1 + 2.0 / kappa2
            )));
        }
        Ok(())
    }

    /// Coefficient of the LASSO prediction loss, `1/kappa1 + 2/kappa2`.
    pub fn loss_coefficient(&self) -> f64 {
        1.0 / self.kappa1 + 2.0 / self.kappa2
    }

    /// Coefficient of the l1 estimation error, `2 + 2/kappa1 + 4/kappa2`.
    pub fn l1_coefficient(&self) -> f64 {
        2.0 + 2.0 / self.kappa1 + 4.0 / self.kappa2
    }

    /// Constant of the compatibility form, `16 (1/kappa1 + 2/kappa2)`.
    pub fn corollary_constant(&self) -> f64 {
        16.0 * self.loss_coefficient()
    }

    /// Small-signal factor `(1 - 1/kappa1 - 2/kappa2) / 4`.
    pub fn small_signal_factor(&self) -> f64 {
        0.25 * (1.0 - 1.0 / self.kappa1 - 2.0 / self.kappa2)
    }

    fn is_default(&self) -> bool {
        *self == Kappa::default()
    }
}

/// `Omega*(X^T(Y - X beta))`.
pub fn compute_u_hat(problem: &RegressionProblem, beta: &DVector<f64>, spec: &NormSpec) -> f64 {
    spec.omega_dual(&problem.x().tr_mul(&(problem.y() - problem.x() * beta)))
}

fn noise_correlation(problem: &RegressionProblem, truth: &GroundTruth) -> DVector<f64> {
    problem.x().tr_mul(&truth.epsilon)
}

/// Small-signal hypothesis `||beta*||_1 <= (1 - 1/k1 - 2/k2)/4 * ||eps||^2 / ||X^T eps||_inf`.
pub fn check_assumption_small_signal(
    problem: &RegressionProblem,
    truth: &GroundTruth,
    kappa: Kappa,
) -> Result<AssumptionCheck> {
    kappa.validate()?;
    let lhs = l1_norm(&truth.beta_star);
    let noise = linf_norm(&noise_correlation(problem, truth));
    let rhs = if noise > 0.0 {
        kappa.small_signal_factor() * truth.epsilon.norm_squared() / noise
    } else {
        f64::INFINITY
    };
    Ok(AssumptionCheck::at_most("small_signal", lhs, rhs))
}

/// Signal-strength hypothesis `Omega*(X^T X beta*) >= (1 + 2/c) Omega*(X^T eps)`
/// and its consequence `Omega*(X^T Y) >= (2/c) Omega*(X^T eps)`.
pub fn check_assumption_signal_strength(
    problem: &RegressionProblem,
    truth: &GroundTruth,
    c: f64,
    spec: &NormSpec,
) -> (AssumptionCheck, AssumptionCheck) {
    let x = problem.x();
    let signal = spec.omega_dual(&x.tr_mul(&(x * &truth.beta_star)));
    let noise = spec.omega_dual(&noise_correlation(problem, truth));
    let main = AssumptionCheck::at_least("signal_strength", signal, (1.0 + 2.0 / c) * noise);
    let implied = AssumptionCheck::at_least("signal_strength_implied", spec.omega_dual(&problem.xty()), 2.0 / c * noise);
    (main, implied)
}

/// Searches the cone `||eta_{S^c}||_1 <= 3 ||eta_S||_1` for small values of
/// `sqrt(s) ||X eta|| / (sqrt(n) ||eta_S||_1)`.
///
/// Structured directions (single support coordinates, pairs on the support,
/// support/off-support pairs) are always tried; `samples` random cone points
/// follow, and with `refine` the best sign patterns are polished by projected
/// gradient on the resulting convex problem.
pub fn estimate_compatibility(
    problem: &RegressionProblem,
    support: &[usize],
    samples: usize,
    refine: bool,
    seed: u64,
) -> Result<CompatibilityEstimate> {
    let (n, p) = (problem.n(), problem.p());
    if support.is_empty() {
        return Err(TrexError::Parameter("compatibility needs a nonempty support".into()));
    }
    let mut in_s = vec![false; p];
    for &j in support {
        if j >= p {
            return Err(TrexError::Parameter(format!("support index {} out of range", j + 1)));
        }
        in_s[j] = true;
    }
    let s = support.len();
    let off: Vec<usize> = (0..p).filter(|&j| !in_s[j]).collect();
    let x = problem.x();
    let nf = n as f64;

    let gram = x.tr_mul(x);
    if (&gram - DMatrix::identity(p, p) * nf).amax() <= 1e-8 * nf {
        return Ok(CompatibilityEstimate { nu: 1.0, samples: 0, exact: true });
    }

    let scale = (s as f64).sqrt() / nf.sqrt();
    let ratio = |eta: &DVector<f64>| -> f64 {
        let on: f64 = support.iter().map(|&j| eta[j].abs()).sum();
        if on == 0.0 {
            return f64::INFINITY;
        }
        scale * (x * eta).norm() / on
    };

    let mut best = f64::INFINITY;
    let mut count = 0usize;
    let mut candidates: Vec<(f64, DVector<f64>)> = Vec::new();
    let mut consider = |eta: DVector<f64>, best: &mut f64, count: &mut usize| {
        let r = ratio(&eta);
        *count += 1;
        if r < *best {
            *best = r;
        }
        if refine {
            candidates.push((r, eta));
            if candidates.len() > 64 {
                candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
                candidates.truncate(16);
            }
        }
    };

    for &i in support {
        let mut e = DVector::zeros(p);
        e[i] = 1.0;
        consider(e, &mut best, &mut count);
    }
    for (a, &i) in support.iter().enumerate() {
        for &k in &support[a + 1..] {
            for sign in [1.0, -1.0] {
                let mut e = DVector::zeros(p);
                e[i] = 1.0;
                e[k] = sign;
                consider(e, &mut best, &mut count);
            }
        }
        // Best multiple of each off-support column against x_i, within the cone.
        for &k in &off {
            let t = (-gram[(i, k)] / gram[(k, k)]).clamp(-3.0, 3.0);
            let mut e = DVector::zeros(p);
            e[i] = 1.0;
            e[k] = t;
            consider(e, &mut best, &mut count);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for draw in 0..samples {
        let mut eta = DVector::zeros(p);
        let flat = draw % 4 == 0;
        for &j in support {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mag: f64 = if flat { 1.0 } else { rng.sample::<f64, _>(StandardNormal).abs() + 1e-3 };
            eta[j] = sign * mag;
        }
        let on: f64 = support.iter().map(|&j| eta[j].abs()).sum();
        if !off.is_empty() {
            let frac = match draw % 3 {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random::<f64>(),
            };
            let dir: Vec<f64> = off.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let l1: f64 = dir.iter().map(|v| v.abs()).sum();
            if l1 > 0.0 {
                for (&k, d) in off.iter().zip(dir) {
                    eta[k] = 3.0 * frac * on * d / l1;
                }
            }
        }
        consider(eta, &mut best, &mut count);
    }

    if refine {
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut patterns: Vec<Vec<bool>> = Vec::new();
        for (_, eta) in &candidates {
            let pattern: Vec<bool> = support.iter().map(|&j| eta[j] >= 0.0).collect();
            if patterns.contains(&pattern) {
                continue;
            }
            patterns.push(pattern.clone());
            let r = refine_sign_pattern(x, &gram, support, &off, &pattern, eta, scale);
            best = best.min(r);
            count += 1;
            if patterns.len() >= 8 {
                break;
            }
        }
    }
    Ok(CompatibilityEstimate { nu: best, samples: count, exact: false })
}

/// Minimizes `||X eta||^2` over `{sign-consistent eta_S with ||eta_S||_1 = 1,
/// ||eta_{S^c}||_1 <= 3}` by projected gradient, returning the scaled ratio.
fn refine_sign_pattern(
    x: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    support: &[usize],
    off: &[usize],
    pattern: &[bool],
    start: &DVector<f64>,
    scale: f64,
) -> f64 {
    let sig: Vec<f64> = pattern.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    let on: f64 = support.iter().map(|&j| start[j].abs()).sum();
    let mut eta = start / on;
    project_cone(&mut eta, support, off, &sig);
    let lip = crate::linalg::gram_spectral_norm(x, 50).max(f64::MIN_POSITIVE);
    let mut val = (x * &eta).norm_squared();
    for _ in 0..500 {
        let grad = gram * &eta * 2.0;
        let mut next = &eta - grad / (2.0 * lip);
        project_cone(&mut next, support, off, &sig);
        let v = (x * &next).norm_squared();
        let stalled = v > val * (1.0 - 1e-12);
        if v < val {
            eta = next;
            val = v;
        }
        if stalled {
            break;
        }
    }
    scale * val.sqrt()
}

fn project_cone(eta: &mut DVector<f64>, support: &[usize], off: &[usize], sig: &[f64]) {
    let on: Vec<f64> = support.iter().zip(sig).map(|(&j, s)| s * eta[j]).collect();
    let projected = project_simplex(&on, 1.0);
    for ((&j, s), v) in support.iter().zip(sig).zip(projected) {
        eta[j] = s * v;
    }
    let offv: Vec<f64> = off.iter().map(|&k| eta[k]).collect();
    let l1: f64 = offv.iter().map(|v| v.abs()).sum();
    if l1 > 3.0 {
        let mags = project_simplex(&offv.iter().map(|v| v.abs()).collect::<Vec<_>>(), 3.0);
        for ((&k, v), m) in off.iter().zip(&offv).zip(mags) {
            eta[k] = v.signum() * m;
        }
    }
}

/// Euclidean projection onto `{z >= 0, sum z = radius}`.
fn project_simplex(v: &[f64], radius: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - radius) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&u| (u - theta).max(0.0)).collect()
}

fn fast_rate_rhs(constant: f64, s: usize, lambda: f64, nu: f64, n: usize) -> f64 {
    if s == 0 {
        return 0.0;
    }
    constant * s as f64 * lambda * lambda / (nu * nu * (n * n) as f64)
}

/// LASSO fast rate: `loss <= 16 s lambda^2 / (nu^2 n^2)` when
/// `lambda >= 2 ||X^T eps||_inf` and the compatibility constant is positive.
pub fn verify_lasso_fast(
    problem: &RegressionProblem,
    truth: &GroundTruth,
    fit: &LassoFit,
    nu: &CompatibilityEstimate,
) -> Result<BoundReport> {
    let noise = linf_norm(&noise_correlation(problem, truth));
    let lambda = fit.lambda;
    let nu_used = nu.for_verdict();
    let mut gates = vec![AssumptionCheck::at_least("lambda_gate", lambda, 2.0 * noise)];
    if truth.sparsity > 0 {
        gates.push(AssumptionCheck { name: "compatibility".into(), holds: nu_used > 0.0, lhs: nu_used, rhs: 0.0 });
    }
    let lhs = prediction_loss(problem, truth, &fit.beta_hat)?;
    let s = truth.sparsity;
    let n = problem.n();
    let rhs = fast_rate_rhs(16.0, s, lambda, nu_used, n);
    let inputs = BoundInputs { lambda: Some(lambda), noise_dual: noise, nu: Some(nu_used), ..Default::default() };
    let mut report = BoundReport::new(TheoremId::L1, gates, lhs, rhs, crate::model::ABS_TOL, inputs);
    report.rhs_with_estimate = Some(fast_rate_rhs(16.0, s, lambda, nu.nu, n));
    Ok(report)
}

/// LASSO slow rate: `loss <= 4 lambda ||beta*||_1 / n` when `lambda >= ||X^T eps||_inf`.
pub fn verify_lasso_slow(problem: &RegressionProblem, truth: &GroundTruth, fit: &LassoFit) -> Result<BoundReport> {
    let noise = linf_norm(&noise_correlation(problem, truth));
    let gates = vec![AssumptionCheck::at_least("lambda_gate", fit.lambda, noise)];
    let lhs = prediction_loss(problem, truth, &fit.beta_hat)?;
    let rhs = 4.0 * fit.lambda * l1_norm(&truth.beta_star) / problem.n() as f64;
    let inputs = BoundInputs { lambda: Some(fit.lambda), noise_dual: noise, ..Default::default() };
    Ok(BoundReport::new(TheoremId::L2, gates, lhs, rhs, crate::model::ABS_TOL, inputs))
}

/// TREX fast rate through the LASSO at `lambda~ = max(k1 u_hat, k2 ||X^T eps||_inf / c)`,
/// together with its compatibility form. Returns `(theorem, corollary)` with
/// ids `T1`/`C3` for `(2, 8)` and `ThmA`/`CorA` otherwise.
pub fn verify_trex_fast(
    problem: &RegressionProblem,
    truth: &GroundTruth,
    fit: &TrexFit,
    kappa: Kappa,
    nu: &CompatibilityEstimate,
    config: &SolverConfig,
) -> Result<(BoundReport, BoundReport)> {
    let (t, cor) = if kappa.is_default() { (TheoremId::T1, TheoremId::C3) } else { (TheoremId::ThmA, TheoremId::CorA) };
    verify_trex_fast_as(problem, truth, fit, kappa, nu, config, t, cor)
}

/// [`verify_trex_fast`] with explicit theorem ids (to report the general
/// form at `(2, 8)` alongside the specialized one).
#[allow(clippy::too_many_arguments)]
pub fn verify_trex_fast_as(
    problem: &RegressionProblem,
    truth: &GroundTruth,
    fit: &TrexFit,
    kappa: Kappa,
    nu: &CompatibilityEstimate,
    config: &SolverConfig,
    theorem: TheoremId,
    corollary: TheoremId,
) -> Result<(BoundReport, BoundReport)> {
    kappa.validate()?;
    let c = fit.diagnostics.c;
    let n = problem.n();
    let noise = linf_norm(&noise_correlation(problem, truth));
    let u_hat = fit.u_hat;
    let lambda = (kappa.kappa1 * u_hat).max(kappa.kappa2 * noise / c);
    let lasso_cfg = SolverConfig { allow_unnormalized: true, ..config.clone() };
    let lasso = fit_lasso(problem, lambda, &lasso_cfg)?;

    let mut gates = vec![
        check_assumption_small_signal(problem, truth, kappa)?,
        AssumptionCheck::at_most("u_gate", u_hat, linf_norm(&problem.xty()) / kappa.kappa1),
    ];
    if fit.diagnostics.norm.kind() != NormKind::L1 || !fit.diagnostics.unpenalized.is_empty() {
        gates.push(AssumptionCheck { name: "l1_penalty".into(), holds: false, lhs: 0.0, rhs: 0.0 });
    }
    let lhs = prediction_loss(problem, truth, &fit.beta_hat)?;
    let lasso_loss = prediction_loss(problem, truth, &lasso.beta_hat)?;
    let lasso_l1_err = l1_norm(&(&lasso.beta_hat - &truth.beta_star));
    let rhs = kappa.loss_coefficient() * lasso_loss + kappa.l1_coefficient() * noise * lasso_l1_err / n as f64;
    let inputs = BoundInputs {
        u_hat: Some(u_hat),
        noise_dual: noise,
        lambda: Some(lambda),
        nu: None,
        kappa1: Some(kappa.kappa1),
        kappa2: Some(kappa.kappa2),
        c: Some(c),
    };
    let theorem_report = BoundReport::new(theorem, gates.clone(), lhs, rhs, crate::model::ABS_TOL, inputs.clone());

    let condition = 1.0 / kappa.kappa2 + kappa.kappa1 / (kappa.kappa2 + 2.0 * kappa.kappa1);
    gates.push(AssumptionCheck::at_most("kappa_condition", condition, 1.0 / c));
    let nu_used = nu.for_verdict();
    if truth.sparsity > 0 {
        gates.push(AssumptionCheck { name: "compatibility".into(), holds: nu_used > 0.0, lhs: nu_used, rhs: 0.0 });
    }
    let s = truth.sparsity;
    let constant = kappa.corollary_constant();
    let cor_rhs = fast_rate_rhs(constant, s, lambda, nu_used, n);
    let mut cor_report = BoundReport::new(
        corollary,
        gates,
        lhs,
        cor_rhs,
        crate::model::ABS_TOL,
        BoundInputs { nu: Some(nu_used), ..inputs },
    );
    cor_report.rhs_with_estimate = Some(fast_rate_rhs(constant, s, lambda, nu.nu, n));
    Ok((theorem_report, cor_report))
}

/// Slow-rate right-hand side for the l1 penalty:
/// `(2 ||X^T eps||_inf + max(u_hat, 2 ||X^T eps||_inf / c)) ||beta*||_1 / n`.
pub fn theorem2_rhs(noise_linf: f64, u_hat: f64, c: f64, beta_l1: f64, n: usize) -> f64 {
    (2.0 * noise_linf + u_hat.max(2.0 * noise_linf / c)) * beta_l1 / n as f64
}

/// Slow-rate right-hand side for a general norm:
/// `(2 Omega*(X^T eps) + max(u_hat, 2 Omega*(X^T eps) / c)) Omega(beta*) / n`.
pub fn general_slow_rhs(noise_dual: f64, u_hat: f64, c: f64, omega_beta: f64, n: usize) -> f64 {
    (2.0 * noise_dual + u_hat.max(2.0 * noise_dual / c)) * omega_beta / n as f64
}

/// TREX slow rate under the fit's norm. Reports `T2` for the plain l1 norm
/// and `ThmB` otherwise; see [`verify_trex_slow_general`] to force `ThmB`.
pub fn verify_trex_slow(problem: &RegressionProblem, truth: &GroundTruth, fit: &TrexFit) -> Result<BoundReport> {
    let spec = &fit.diagnostics.norm;
    if spec.kind() == NormKind::L1 {
        let noise = linf_norm(&noise_correlation(problem, truth));
        let c = fit.diagnostics.c;
        let (main, _) = check_assumption_signal_strength(problem, truth, c, spec);
        let gates = vec![main, AssumptionCheck::at_most("u_gate", fit.u_hat, linf_norm(&problem.xty()))];
        let lhs = prediction_loss(problem, truth, &fit.beta_hat)?;
        let rhs = theorem2_rhs(noise, fit.u_hat, c, l1_norm(&truth.beta_star), problem.n());
        let inputs = BoundInputs { u_hat: Some(fit.u_hat), noise_dual: noise, c: Some(c), ..Default::default() };
        Ok(BoundReport::new(TheoremId::T2, gates, lhs, rhs, crate::model::ABS_TOL, inputs))
    } else {
        verify_trex_slow_general(problem, truth, fit, spec)
    }
}

/// General-norm slow rate (`ThmB`) evaluated with `spec`.
pub fn verify_trex_slow_general(
    problem: &RegressionProblem,
    truth: &GroundTruth,
    fit: &TrexFit,
    spec: &NormSpec,
) -> Result<BoundReport> {
    let c = fit.diagnostics.c;
    let noise = spec.omega_dual(&noise_correlation(problem, truth));
    let u_hat = compute_u_hat(problem, &fit.beta_hat, spec);
    let (main, _) = check_assumption_signal_strength(problem, truth, c, spec);
    let gates = vec![main, AssumptionCheck::at_most("u_gate", u_hat, spec.omega_dual(&problem.xty()))];
    let lhs = prediction_loss(problem, truth, &fit.beta_hat)?;
    let rhs = general_slow_rhs(noise, u_hat, c, spec.omega(&truth.beta_star), problem.n());
    let inputs = BoundInputs { u_hat: Some(u_hat), noise_dual: noise, c: Some(c), ..Default::default() };
    Ok(BoundReport::new(TheoremId::ThmB, gates, lhs, rhs, crate::model::ABS_TOL, inputs))
}

/// `||beta_trex||_1 >= ||lasso(u_hat)||_1`, recorded as `lhs = ||lasso||_1 <= rhs = ||beta_trex||_1`.
pub fn verify_l1_ordering(problem: &RegressionProblem, fit: &TrexFit, config: &SolverConfig) -> Result<BoundReport> {
    let mut gates = vec![AssumptionCheck::at_least("u_positive", fit.u_hat, f64::MIN_POSITIVE)];
    if fit.diagnostics.norm.kind() != NormKind::L1 || !fit.diagnostics.unpenalized.is_empty() {
        gates.push(AssumptionCheck { name: "l1_penalty".into(), holds: false, lhs: 0.0, rhs: 0.0 });
    }
    let inputs = BoundInputs { u_hat: Some(fit.u_hat), lambda: Some(fit.u_hat), c: Some(fit.diagnostics.c), ..Default::default() };
    if !gates.iter().all(|g| g.holds) {
        return Ok(BoundReport::new(TheoremId::LemA, gates, 0.0, 0.0, ORDERING_TOL, inputs));
    }
    let lasso_cfg = SolverConfig { allow_unnormalized: true, ..config.clone() };
    let lasso = fit_lasso(problem, fit.u_hat, &lasso_cfg)?;
    Ok(BoundReport::new(
        TheoremId::LemA,
        gates,
        l1_norm(&lasso.beta_hat),
        l1_norm(&fit.beta_hat),
        ORDERING_TOL,
        inputs,
    ))
}
