//! Global TREX solver.
//!
//! The objective `||Y - Xb||^2 / (c Omega*(X^T(Y - Xb))) + Omega(b)` is the
//! pointwise minimum of one subproblem per dual-norm "atom": for separable
//! norms the atoms are signed coordinates `(j, s)` and each subproblem
//! `w_j ||Y - Xb||^2 / (c s x_j^T (Y - Xb)) + Omega(b)` is convex on its open
//! domain, so the smallest subproblem optimum is the global TREX minimum. For
//! group norms the atoms are groups and the subproblems are solved by a
//! multistart heuristic.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{SolverConfig, SubproblemMethod};
use crate::error::{Result, TrexError};
use crate::lasso::{axpy, dot};
use crate::linalg;
use crate::model::{dvec_serde, l1_norm, linf_norm, RegressionProblem};
use crate::norms::{NormKind, NormSpec};

/// Subproblem objectives within this relative distance of the best count as ties.
const TIE_TOL: f64 = 1e-10;
/// Coordinate changes below this (relative to `1 + ||b||_inf`) count as converged.
const STEP_TOL: f64 = 1e-11;
const BISECTION_STEPS: usize = 50;
const PG_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Negative,
    Positive,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Positive => 1.0,
        }
    }

    fn from_value(v: i64) -> Option<Self> {
        match v {
            -1 => Some(Sign::Negative),
            1 => Some(Sign::Positive),
            _ => None,
        }
    }
}

impl Serialize for Sign {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.value() as i64)
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Sign::from_value(v).ok_or_else(|| serde::de::Error::custom(format!("sign must be -1 or 1, got {v}")))
    }
}

/// Identity of a subproblem. Indices are 0-based in memory and 1-based in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubproblemId {
    Signed { index: usize, sign: Sign },
    Group { index: usize },
}

#[derive(Serialize, Deserialize)]
struct SubproblemIdRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coordinate: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sign: Option<Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<usize>,
}

impl Serialize for SubproblemId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match *self {
            SubproblemId::Signed { index, sign } => {
                SubproblemIdRepr { coordinate: Some(index + 1), sign: Some(sign), group: None }
            }
            SubproblemId::Group { index } => SubproblemIdRepr { coordinate: None, sign: None, group: Some(index + 1) },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SubproblemId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = SubproblemIdRepr::deserialize(d)?;
        match (r.coordinate, r.sign, r.group) {
            (Some(c), Some(sign), None) if c >= 1 => Ok(SubproblemId::Signed { index: c - 1, sign }),
            (None, None, Some(g)) if g >= 1 => Ok(SubproblemId::Group { index: g - 1 }),
            _ => Err(D::Error::custom("expected {coordinate, sign} or {group} with 1-based indices")),
        }
    }
}

impl SubproblemId {
    /// Deterministic tie-break order: lowest index, then negative sign first.
    fn order_key(&self) -> (usize, u8) {
        match *self {
            SubproblemId::Signed { index, sign } => (index, (sign == Sign::Positive) as u8),
            SubproblemId::Group { index } => (index, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemResult {
    pub id: SubproblemId,
    /// `+inf` when no strictly feasible start exists.
    #[serde(with = "inf_as_null")]
    pub objective: f64,
    pub feasible: bool,
    pub converged: bool,
    pub iterations: usize,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub c: f64,
    pub norm: NormSpec,
    pub method: SubproblemMethod,
    /// Group subproblems are not convex; their minimum is a multistart best.
    pub heuristic: bool,
    /// Every feasible subproblem met its stopping rule.
    pub converged: bool,
    pub total_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_bound: Option<f64>,
    /// 1-based unpenalized coordinates, when any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unpenalized: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrexFit {
    #[serde(with = "dvec_serde")]
    pub beta_hat: DVector<f64>,
    /// `Omega*(X^T(Y - X beta_hat))`.
    pub u_hat: f64,
    pub objective: f64,
    /// `None` only for the all-unpenalized least-squares fit.
    pub winner: Option<SubproblemId>,
    pub per_subproblem: Vec<SubproblemResult>,
    pub diagnostics: FitDiagnostics,
}

/// `||Y - Xb||^2 / (c Omega*(X^T(Y - Xb))) + Omega(b)`.
pub fn trex_objective(problem: &RegressionProblem, beta: &DVector<f64>, c: f64, spec: &NormSpec) -> Result<f64> {
    problem.check_beta(beta)?;
    check_spec_dim(problem, spec)?;
    let r = problem.y() - problem.x() * beta;
    let den = spec.omega_dual(&problem.x().tr_mul(&r));
    if den <= degenerate_threshold(problem, spec) {
        return Err(TrexError::Domain);
    }
    Ok(r.norm_squared() / (c * den) + spec.omega(beta))
}

/// Objective of the signed l1 subproblem `(j, s)`:
/// `||Y - Xb||^2 / (c s x_j^T (Y - Xb)) + ||b||_1`.
pub fn subproblem_objective(
    problem: &RegressionProblem,
    beta: &DVector<f64>,
    c: f64,
    j: usize,
    sign: Sign,
) -> Result<f64> {
    problem.check_beta(beta)?;
    if j >= problem.p() {
        return Err(TrexError::Dimension(format!("subproblem index {j} out of range")));
    }
    let r = problem.y() - problem.x() * beta;
    let den = sign.value() * problem.x().column(j).dot(&r);
    if den <= 0.0 {
        return Err(TrexError::Domain);
    }
    Ok(r.norm_squared() / (c * den) + l1_norm(beta))
}

fn degenerate_threshold(problem: &RegressionProblem, spec: &NormSpec) -> f64 {
    1e-13 * spec.omega_dual(&problem.xty())
}

fn check_spec_dim(problem: &RegressionProblem, spec: &NormSpec) -> Result<()> {
    if spec.dim() != problem.p() {
        return Err(TrexError::Dimension(format!(
            "norm is defined on R^{} but p = {}",
            spec.dim(),
            problem.p()
        )));
    }
    Ok(())
}

/// Per-problem quantities shared by all subproblems.
struct Workspace<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    n: usize,
    p: usize,
    xty: DVector<f64>,
    col_sq: Vec<f64>,
    c: f64,
    /// Absolute lower bound on subproblem denominators.
    guard: f64,
    /// Upper bound on `||X^T(Y - Xb)||_inf` for the constrained variant.
    bound: Option<f64>,
    /// Least-squares fit, used to find feasible starts under a bound.
    ls_fit: Option<DVector<f64>>,
    lhat: f64,
    cfg: &'a SolverConfig,
}

impl<'a> Workspace<'a> {
    fn new(problem: &'a RegressionProblem, spec: &NormSpec, cfg: &'a SolverConfig, bound: Option<f64>) -> Self {
        let x = problem.x();
        let xty = problem.xty();
        let guard = cfg.domain_guard * spec.omega_dual(&xty);
        Workspace {
            x,
            y: problem.y(),
            n: problem.n(),
            p: problem.p(),
            col_sq: x.column_iter().map(|c| c.norm_squared()).collect(),
            xty,
            c: cfg.c,
            guard,
            bound,
            ls_fit: bound.and_then(|_| linalg::least_squares(x, problem.y()).ok()),
            lhat: linalg::gram_spectral_norm(x, 100).max(f64::MIN_POSITIVE),
            cfg,
        }
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.x.as_slice()[j * self.n..(j + 1) * self.n]
    }

    fn within_bound(&self, corr: &DVector<f64>) -> bool {
        self.bound.is_none_or(|b| linf_norm(corr) <= b)
    }
}

/// The dual-norm atom a subproblem fixes in the denominator.
#[derive(Clone)]
enum Atom {
    Signed { j: usize, s: f64, weight: f64, xj_corr: DVector<f64> },
    Group { members: Vec<usize>, weight: f64 },
}

struct Subproblem<'w, 'a> {
    ws: &'w Workspace<'a>,
    atom: Atom,
    norm: &'w NormSpec,
}

/// Smooth-part evaluation at a point of the open domain.
struct Eval {
    value: f64,
    q: f64,
    den: f64,
    corr: DVector<f64>,
}

impl Subproblem<'_, '_> {
    fn denominator(&self, corr: &DVector<f64>) -> f64 {
        match &self.atom {
            Atom::Signed { j, s, weight, .. } => s * corr[*j] / weight,
            Atom::Group { members, weight } => {
                members.iter().map(|&k| corr[k] * corr[k]).sum::<f64>().sqrt() / weight
            }
        }
    }

    fn eval(&self, beta: &DVector<f64>) -> Option<Eval> {
        let r = self.ws.y - self.ws.x * beta;
        let corr = self.ws.x.tr_mul(&r);
        let den = self.denominator(&corr);
        if !(den > self.ws.guard) || !self.ws.within_bound(&corr) {
            return None;
        }
        let q = r.norm_squared();
        Some(Eval { value: q / (self.ws.c * den), q, den, corr })
    }

    fn gradient(&self, e: &Eval) -> DVector<f64> {
        // grad(q / (c den)) = (grad q * den - q * grad den) / (c den^2), grad q = -2 X^T r.
        let grad_den = match &self.atom {
            Atom::Signed { s, weight, xj_corr, .. } => xj_corr * (-s / weight),
            Atom::Group { members, weight } => {
                let norm = weight * e.den;
                let mut v = DVector::zeros(self.ws.n);
                for &k in members {
                    axpy(e.corr[k], self.ws.column(k), v.as_mut_slice());
                }
                self.ws.x.tr_mul(&v) * (-1.0 / (weight * norm))
            }
        };
        (&e.corr * (-2.0 * e.den) - grad_den * e.q) / (self.ws.c * e.den * e.den)
    }

    /// Strictly feasible point on the line `t e_j` (signed atoms) by golden
    /// search on the convex violation `max(guard - den, ||X^T r||_inf - bound)`.
    /// Under a bound, falls back to the line `(1 - a) b_ls + t e_j`, whose
    /// correlation at `t = 0` is `a X^T Y` and so lies strictly inside the bound.
    fn signed_start(&self) -> Option<DVector<f64>> {
        let ws = self.ws;
        let origin = DVector::zeros(ws.p);
        if let Some(b) = self.line_start(&origin, &ws.xty) {
            return Some(b);
        }
        let (Some(bound), Some(ls)) = (ws.bound, ws.ls_fit.as_ref()) else {
            return None;
        };
        let top = linf_norm(&ws.xty);
        if top <= 0.0 {
            return None;
        }
        let a = (0.5 * bound / top).min(0.5);
        let base = ls * (1.0 - a);
        let corr = ws.x.tr_mul(&(ws.y - ws.x * &base));
        self.line_start(&base, &corr)
    }

    fn line_start(&self, base: &DVector<f64>, corr0: &DVector<f64>) -> Option<DVector<f64>> {
        let Atom::Signed { j, s, weight, xj_corr } = &self.atom else {
            unreachable!("signed start requested for a group atom")
        };
        let ws = self.ws;
        let (j, s) = (*j, *s);
        let violation = |t: f64| -> f64 {
            let den = s * (corr0[j] - t * ws.col_sq[j]) / weight;
            let mut v = ws.guard - den;
            if let Some(b) = ws.bound {
                let corr_max = corr0.iter().zip(xj_corr.iter()).fold(0.0f64, |m, (a, g)| m.max((a - t * g).abs()));
                v = v.max(corr_max - b);
            }
            v
        };
        let at = |t: f64| {
            let mut b = base.clone();
            b[j] += t;
            b
        };
        if violation(0.0) < 0.0 {
            return Some(at(0.0));
        }
        if ws.col_sq[j] == 0.0 {
            return None;
        }
        let span = 4.0 * (corr0[j].abs() + linf_norm(corr0) + ws.guard) / ws.col_sq[j] + 1.0;
        let (mut lo, mut hi) = (-span, span);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..BISECTION_STEPS {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if violation(a) < 0.0 {
                return Some(at(a));
            }
            if violation(b) < 0.0 {
                return Some(at(b));
            }
            if violation(a) <= violation(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        None
    }
}

struct Solved {
    beta: DVector<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
}

/// Exact cyclic coordinate minimization of a signed subproblem (no constraint).
fn coordinate_descent(sp: &Subproblem, start: DVector<f64>) -> Solved {
    let Atom::Signed { j, s, weight: wj, xj_corr } = &sp.atom else {
        unreachable!("coordinate descent runs on signed atoms only")
    };
    let ws = sp.ws;
    let weights = sp.norm.coordinate_weights().expect("separable norm");
    let k_scale = wj / ws.c;
    let guard_raw = ws.guard * wj;
    let xj = ws.column(*j);

    let mut beta = start;
    let mut r = ws.y - ws.x * &beta;
    let objective = |q: f64, d: f64, beta: &DVector<f64>| {
        k_scale * q / d + beta.iter().zip(&weights).map(|(b, w)| w * b.abs()).sum::<f64>()
    };

    let mut sweeps = 0;
    let mut converged = false;
    let mut full = true;
    let mut prev = f64::INFINITY;
    while sweeps < ws.cfg.max_iterations {
        let mut q = r.norm_squared();
        let mut d = s * dot(xj, r.as_slice());
        let coords: Vec<usize> = if full { (0..ws.p).collect() } else { (0..ws.p).filter(|&k| beta[k] != 0.0).collect() };
        let mut max_change: f64 = 0.0;
        for k in coords {
            let c_k = ws.col_sq[k];
            if c_k == 0.0 {
                continue;
            }
            let col = ws.column(k);
            let b_k = dot(col, r.as_slice());
            let e_k = s * xj_corr[k];
            let delta = coordinate_step(k_scale, q, d, b_k, c_k, e_k, beta[k], weights[k], guard_raw);
            if delta != 0.0 {
                axpy(-delta, col, r.as_mut_slice());
                q = (q - 2.0 * b_k * delta + c_k * delta * delta).max(0.0);
                d -= e_k * delta;
                beta[k] = if delta == -beta[k] { 0.0 } else { beta[k] + delta };
                max_change = max_change.max(delta.abs());
            }
        }
        sweeps += 1;
        let small = max_change <= STEP_TOL * (1.0 + linf_norm(&beta));
        if full {
            let q = r.norm_squared();
            let d = s * dot(xj, r.as_slice());
            let obj = objective(q, d, &beta);
            let stalled = prev.is_finite() && prev - obj <= ws.cfg.tolerance * obj.abs().max(1.0);
            prev = obj;
            if small || stalled {
                converged = true;
                break;
            }
            full = false;
        } else if small {
            full = true;
        }
    }
    r = ws.y - ws.x * &beta;
    let q = r.norm_squared();
    let d = s * dot(xj, r.as_slice());
    Solved { objective: objective(q, d, &beta), beta, iterations: sweeps, converged }
}

/// Minimizer over `delta` of `K (q - 2 B delta + C delta^2) / (D - E delta) + w |b + delta|`
/// on the domain `D - E delta > guard`.
#[allow(clippy::too_many_arguments)]
fn coordinate_step(k: f64, q: f64, d: f64, b: f64, c: f64, e: f64, beta_k: f64, w: f64, guard: f64) -> f64 {
    let (lo, hi) = if e > 0.0 {
        (f64::NEG_INFINITY, (d - guard) / e)
    } else if e < 0.0 {
        ((d - guard) / e, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let hprime = |t: f64| {
        let den = d - e * t;
        k * (-c * e * t * t + 2.0 * c * d * t + e * q - 2.0 * b * d) / (den * den)
    };
    let zero_at = -beta_k;
    let sigma = if zero_at >= hi {
        -1.0
    } else if zero_at <= lo {
        1.0
    } else {
        let g0 = hprime(zero_at);
        if g0.abs() <= w {
            return zero_at;
        }
        if g0 < -w {
            1.0
        } else {
            -1.0
        }
    };
    // Root of h'(t) + sigma w on the side of zero_at where sign(beta_k + t) = sigma.
    let (a, z) = if sigma > 0.0 { (zero_at.max(lo), hi) } else { (lo, zero_at.min(hi)) };
    let phi = |t: f64| hprime(t) + sigma * w;

    let a2 = -k * c * e + w * sigma * e * e;
    let a1 = 2.0 * k * c * d - 2.0 * w * sigma * d * e;
    let a0 = k * (e * q - 2.0 * b * d) + w * sigma * d * d;
    let mut best: Option<(f64, f64)> = None;
    for t in quadratic_roots(a2, a1, a0) {
        if t > a && t < z && d - e * t > guard {
            let f = phi(t).abs();
            if best.is_none_or(|(_, bf)| f < bf) {
                best = Some((t, f));
            }
        }
    }
    if let Some((t, _)) = best {
        return t;
    }
    // Fallback: bisection on the monotone phi over a finite bracket.
    let mut lo_t = if a.is_finite() { a } else { z - 1.0 };
    let mut hi_t = if z.is_finite() { z } else { a + 1.0 };
    while phi(lo_t) > 0.0 && !a.is_finite() {
        lo_t = hi_t - 2.0 * (hi_t - lo_t);
    }
    while phi(hi_t) < 0.0 && !z.is_finite() {
        hi_t = lo_t + 2.0 * (hi_t - lo_t);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo_t + hi_t);
        if phi(mid) < 0.0 {
            lo_t = mid;
        } else {
            hi_t = mid;
        }
    }
    let t = 0.5 * (lo_t + hi_t);
    if d - e * t > guard {
        t
    } else {
        0.0
    }
}

fn quadratic_roots(a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    if a2 == 0.0 {
        return if a1 != 0.0 { vec![-a0 / a1] } else { vec![] };
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if disc < 0.0 {
        return vec![];
    }
    let qq = -0.5 * (a1 + a1.signum() * disc.sqrt());
    let mut roots = Vec::with_capacity(2);
    if qq != 0.0 {
        roots.push(qq / a2);
        roots.push(a0 / qq);
    } else {
        roots.push(0.0);
    }
    roots
}

/// Monotone accelerated proximal gradient with backtracking; every accepted
/// point stays in the open domain (and within the constraint, if any).
fn proximal_gradient(sp: &Subproblem, start: DVector<f64>) -> Solved {
    let ws = sp.ws;
    let mut x = start;
    let Some(mut ex) = sp.eval(&x) else {
        return Solved { objective: f64::INFINITY, beta: x, iterations: 0, converged: false };
    };
    let mut fx = ex.value + sp.norm.omega(&x);
    let mut y = x.clone();
    let mut ey_cached: Option<Eval> = None;
    let mut momentum = 1.0f64;
    let mut lip = ws.lhat;
    let mut history: Vec<f64> = vec![fx];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < ws.cfg.max_iterations {
        iterations += 1;
        let ey = match ey_cached.take() {
            Some(e) => e,
            None => match sp.eval(&y) {
                Some(e) => e,
                None => {
                    y = x.clone();
                    momentum = 1.0;
                    sp.eval(&y).expect("current iterate is feasible")
                }
            },
        };
        let grad = sp.gradient(&ey);
        lip *= 0.8;
        let mut accepted = None;
        for _ in 0..200 {
            let z = sp.norm.prox(&(&y - &grad / lip), 1.0 / lip);
            if let Some(ez) = sp.eval(&z) {
                let diff = &z - &y;
                let model = ey.value + grad.dot(&diff) + 0.5 * lip * diff.norm_squared();
                if ez.value <= model + 1e-14 * ez.value.abs() {
                    accepted = Some((z, ez));
                    break;
                }
            }
            lip *= 2.0;
        }
        let Some((z, ez)) = accepted else {
            break;
        };
        let fz = ez.value + sp.norm.omega(&z);
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        if fz <= fx {
            let x_old = std::mem::replace(&mut x, z);
            let step = &x - &x_old;
            y = &x + step * ((momentum - 1.0) / next_momentum);
            momentum = next_momentum;
            fx = fz;
            ex = ez;
            if (&y - &x).amax() == 0.0 {
                ey_cached = Some(Eval { value: ex.value, q: ex.q, den: ex.den, corr: ex.corr.clone() });
            }
        } else {
            // Function-value restart.
            y = x.clone();
            momentum = 1.0;
            ey_cached = Some(Eval { value: ex.value, q: ex.q, den: ex.den, corr: ex.corr.clone() });
        }
        history.push(fx);
        if history.len() > PG_WINDOW {
            let old = history[history.len() - 1 - PG_WINDOW];
            if old - fx <= ws.cfg.tolerance * fx.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    Solved { beta: x, objective: fx, iterations, converged }
}

fn signed_atom(ws: &Workspace, j: usize, sign: Sign, weight: f64) -> Atom {
    let xj = DVector::from_column_slice(ws.column(j));
    Atom::Signed { j, s: sign.value(), weight, xj_corr: ws.x.tr_mul(&xj) }
}

fn solve_signed(ws: &Workspace, norm: &NormSpec, j: usize, sign: Sign) -> (SubproblemResult, DVector<f64>) {
    let weights = norm.coordinate_weights().expect("separable norm");
    let id = SubproblemId::Signed { index: j, sign };
    let sp = Subproblem { ws, atom: signed_atom(ws, j, sign, weights[j]), norm };
    let infeasible = |p: usize| {
        (SubproblemResult { id, objective: f64::INFINITY, feasible: false, converged: true, iterations: 0 }, DVector::zeros(p))
    };

    let solved = if ws.bound.is_some() {
        // A feasible unconstrained optimum is also the constrained one; otherwise
        // descend from a feasible start with infeasible steps rejected.
        let free_ws = Workspace { bound: None, ..ws.clone_shallow() };
        let free = Subproblem { ws: &free_ws, atom: sp.atom.clone(), norm };
        let unconstrained = free.signed_start().map(|s0| run_method(&free, s0));
        match unconstrained {
            Some(u) if sp.eval(&u.beta).is_some() => u,
            other => match sp.signed_start() {
                Some(s0) => {
                    let mut c = proximal_gradient(&sp, s0);
                    if let Some(u) = other {
                        c.iterations += u.iterations;
                    }
                    c
                }
                None => return infeasible(ws.p),
            },
        }
    } else {
        match sp.signed_start() {
            Some(s0) => run_method(&sp, s0),
            None => return infeasible(ws.p),
        }
    };
    let result = SubproblemResult {
        id,
        objective: solved.objective,
        feasible: solved.objective.is_finite(),
        converged: solved.converged,
        iterations: solved.iterations,
    };
    (result, solved.beta)
}

fn run_method(sp: &Subproblem, start: DVector<f64>) -> Solved {
    match sp.ws.cfg.method {
        SubproblemMethod::CoordinateDescent => coordinate_descent(sp, start),
        SubproblemMethod::ProximalGradient => proximal_gradient(sp, start),
    }
}

impl<'a> Workspace<'a> {
    fn clone_shallow(&self) -> Workspace<'a> {
        Workspace {
            x: self.x,
            y: self.y,
            n: self.n,
            p: self.p,
            xty: self.xty.clone(),
            col_sq: self.col_sq.clone(),
            c: self.c,
            guard: self.guard,
            bound: self.bound,
            ls_fit: self.ls_fit.clone(),
            lhat: self.lhat,
            cfg: self.cfg,
        }
    }
}

/// Multistart proximal descent on one group subproblem.
fn solve_group(
    ws: &Workspace,
    norm: &NormSpec,
    g: usize,
    ridge_start: Option<&DVector<f64>>,
) -> (SubproblemResult, DVector<f64>) {
    let (members, weight) = {
        let (m, w) = norm.groups().nth(g).expect("group index");
        (m.to_vec(), w)
    };
    let id = SubproblemId::Group { index: g };
    let sp = Subproblem { ws, atom: Atom::Group { members: members.clone(), weight }, norm };
    let mut rng = ChaCha8Rng::seed_from_u64(ws.cfg.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(g as u64 + 1)));

    let mut starts: Vec<DVector<f64>> = vec![DVector::zeros(ws.p)];
    // Mirror start: least squares on the group, doubled, flips X_G^T r to -X_G^T Y.
    let xg = ws.x.select_columns(members.iter());
    if let Ok(ls) = linalg::least_squares(&xg, ws.y) {
        let mut b = DVector::zeros(ws.p);
        for (i, &k) in members.iter().enumerate() {
            b[k] = 2.0 * ls[i];
        }
        starts.push(b);
    }
    if let Some(r) = ridge_start {
        starts.push(r.clone());
    }

    let mut best: Option<Solved> = None;
    let mut iterations = 0;
    let mut tried = 0;
    let mut attempts = 0;
    while tried < ws.cfg.multistart_count && attempts < 4 * ws.cfg.multistart_count + 8 {
        attempts += 1;
        let candidate = if let Some(s) = starts.pop() {
            s
        } else {
            let center = best.as_ref().map(|b| b.beta.clone()).unwrap_or_else(|| DVector::zeros(ws.p));
            let scale = 0.5 * (linf_norm(&center) + linf_norm(&ws.xty) / ws.n as f64);
            center + DVector::from_fn(ws.p, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
        };
        // Pull infeasible starts toward the origin when that helps.
        let Some(start) = shrink_into_domain(&sp, candidate) else {
            continue;
        };
        tried += 1;
        let solved = proximal_gradient(&sp, start);
        iterations += solved.iterations;
        if best.as_ref().is_none_or(|b| solved.objective < b.objective) {
            best = Some(solved);
        }
    }
    match best {
        Some(b) => (
            SubproblemResult {
                id,
                objective: b.objective,
                feasible: b.objective.is_finite(),
                converged: b.converged,
                iterations,
            },
            b.beta,
        ),
        None => (
            SubproblemResult { id, objective: f64::INFINITY, feasible: false, converged: true, iterations },
            DVector::zeros(ws.p),
        ),
    }
}

fn shrink_into_domain(sp: &Subproblem, mut b: DVector<f64>) -> Option<DVector<f64>> {
    for _ in 0..30 {
        if sp.eval(&b).is_some() {
            return Some(b);
        }
        b *= 0.5;
    }
    None
}

/// Global TREX minimizer under the given norm (l1 when `spec` is `None`).
pub fn solve_trex(problem: &RegressionProblem, config: &SolverConfig, spec: Option<&NormSpec>) -> Result<TrexFit> {
    let default_spec;
    let spec = match spec {
        Some(s) => s,
        None => {
            default_spec = NormSpec::l1(problem.p());
            &default_spec
        }
    };
    solve_internal(problem, config, spec, None)
}

/// l1 TREX with the extra convex constraint `||X^T(Y - Xb)||_inf <= bound`
/// (`bound = ||X^T Y||_inf` when `None`), which guarantees `u_hat <= bound`.
pub fn solve_trex_constrained(problem: &RegressionProblem, config: &SolverConfig, bound: Option<f64>) -> Result<TrexFit> {
    let bound = bound.unwrap_or_else(|| linf_norm(&problem.xty()));
    if !(bound > 0.0) {
        return Err(TrexError::Parameter(format!("constraint bound must be positive, got {bound}")));
    }
    let spec = NormSpec::l1(problem.p());
    let bound = if bound.is_finite() { Some(bound) } else { None };
    solve_internal(problem, config, &spec, bound)
}

fn solve_internal(
    problem: &RegressionProblem,
    config: &SolverConfig,
    spec: &NormSpec,
    bound: Option<f64>,
) -> Result<TrexFit> {
    config.validate()?;
    check_spec_dim(problem, spec)?;
    if !problem.is_normalized() && !config.allow_unnormalized {
        return Err(TrexError::Unnormalized);
    }
    let xty = problem.xty();
    if spec.omega_dual(&xty) <= 0.0 {
        return Err(TrexError::Domain);
    }
    let ws = Workspace::new(problem, spec, config, bound);

    let (results, betas): (Vec<SubproblemResult>, Vec<DVector<f64>>) = if spec.is_separable() && spec.kind() != NormKind::Group {
        let ids: Vec<(usize, Sign)> =
            (0..ws.p).flat_map(|j| [(j, Sign::Negative), (j, Sign::Positive)]).collect();
        ids.par_iter().map(|&(j, s)| solve_signed(&ws, spec, j, s)).collect::<Vec<_>>().into_iter().unzip()
    } else {
        let ridge = linalg::ridge(ws.x, ws.y, ws.n as f64).ok();
        (0..spec.num_groups())
            .into_par_iter()
            .map(|g| solve_group(&ws, spec, g, ridge.as_ref()))
            .collect::<Vec<_>>()
            .into_iter()
            .unzip()
    };

    // Deterministic reduction: results are already in tie-break order.
    debug_assert!(results.windows(2).all(|w| w[0].id.order_key() < w[1].id.order_key()));
    let best = results.iter().filter(|r| r.feasible).map(|r| r.objective).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(TrexError::Internal("no feasible subproblem although Omega*(X^T Y) > 0".into()));
    }
    let win = results
        .iter()
        .position(|r| r.feasible && r.objective <= best + TIE_TOL * best.abs().max(1.0))
        .expect("a minimizing subproblem exists");
    let beta_hat = betas[win].clone();
    let corr = problem.x().tr_mul(&(problem.y() - problem.x() * &beta_hat));
    let u_hat = spec.omega_dual(&corr);
    if u_hat <= degenerate_threshold(problem, spec) {
        return Err(TrexError::Degenerate);
    }
    let objective = trex_objective(problem, &beta_hat, config.c, spec)?;
    let converged = results.iter().filter(|r| r.feasible).all(|r| r.converged);
    let total_iterations = results.iter().map(|r| r.iterations).sum();
    Ok(TrexFit {
        beta_hat,
        u_hat,
        objective,
        winner: Some(results[win].id),
        per_subproblem: results,
        diagnostics: FitDiagnostics {
            c: config.c,
            norm: spec.clone(),
            method: config.method,
            heuristic: spec.kind() == NormKind::Group,
            converged,
            total_iterations,
            constraint_bound: bound,
            unpenalized: Vec::new(),
        },
    })
}

/// TREX with unpenalized coordinates `unpenalized` (0-based).
///
/// The penalized block solves the generalized TREX on `(M_U Y, M_U X_P)` with
/// `M_U = I - X_U (X_U^T X_U)^+ X_U^T`; the unpenalized block is the least
/// squares fit of the remaining residual, so `X_U^T (Y - X beta) = 0`.
/// `spec` is a norm on all `p` coordinates; its groups must not straddle `U`.
pub fn solve_trex_unpenalized(
    problem: &RegressionProblem,
    config: &SolverConfig,
    spec: Option<&NormSpec>,
    unpenalized: &[usize],
) -> Result<TrexFit> {
    config.validate()?;
    let p = problem.p();
    let mut is_u = vec![false; p];
    for &j in unpenalized {
        if j >= p {
            return Err(TrexError::Parameter(format!("unpenalized index {} out of range", j + 1)));
        }
        is_u[j] = true;
    }
    let u_idx: Vec<usize> = (0..p).filter(|&j| is_u[j]).collect();
    let p_idx: Vec<usize> = (0..p).filter(|&j| !is_u[j]).collect();
    let full_spec = spec.cloned().unwrap_or_else(|| NormSpec::l1(p));
    check_spec_dim(problem, &full_spec)?;
    if u_idx.is_empty() {
        return solve_trex(problem, config, Some(&full_spec));
    }
    if !problem.is_normalized() && !config.allow_unnormalized {
        return Err(TrexError::Unnormalized);
    }
    let unpenalized_1b: Vec<usize> = u_idx.iter().map(|j| j + 1).collect();

    let x_u = problem.x().select_columns(u_idx.iter());
    let pinv_u = linalg::pseudo_inverse(&x_u.tr_mul(&x_u))?;
    let ls_on = |target: &DVector<f64>| &pinv_u * x_u.tr_mul(target);

    if p_idx.is_empty() {
        let beta_hat = ls_on(problem.y());
        return Ok(TrexFit {
            beta_hat,
            u_hat: 0.0,
            objective: 0.0,
            winner: None,
            per_subproblem: Vec::new(),
            diagnostics: FitDiagnostics {
                c: config.c,
                norm: full_spec,
                method: config.method,
                heuristic: false,
                converged: true,
                total_iterations: 0,
                constraint_bound: None,
                unpenalized: unpenalized_1b,
            },
        });
    }

    let (p_spec, kept_groups) = full_spec.restrict_with_map(&p_idx)?;
    let projector = DMatrix::identity(problem.n(), problem.n()) - &x_u * &pinv_u * x_u.transpose();
    let x_p = problem.x().select_columns(p_idx.iter());
    let reduced = RegressionProblem::new(&projector * &x_p, &projector * problem.y())?;
    let reduced_cfg = SolverConfig { allow_unnormalized: true, ..config.clone() };
    let inner = solve_internal(&reduced, &reduced_cfg, &p_spec, None)?;

    let beta_p = &inner.beta_hat;
    let beta_u = ls_on(&(problem.y() - &x_p * beta_p));
    let mut beta_hat = DVector::zeros(p);
    for (i, &j) in p_idx.iter().enumerate() {
        beta_hat[j] = beta_p[i];
    }
    for (i, &j) in u_idx.iter().enumerate() {
        beta_hat[j] = beta_u[i];
    }
    let remap = |id: SubproblemId| match id {
        SubproblemId::Signed { index, sign } => SubproblemId::Signed { index: p_idx[index], sign },
        SubproblemId::Group { index } => SubproblemId::Group { index: kept_groups[index] },
    };
    Ok(TrexFit {
        beta_hat,
        u_hat: inner.u_hat,
        objective: inner.objective,
        winner: inner.winner.map(remap),
        per_subproblem: inner
            .per_subproblem
            .into_iter()
            .map(|r| SubproblemResult { id: remap(r.id), ..r })
            .collect(),
        diagnostics: FitDiagnostics {
            norm: full_spec,
            unpenalized: unpenalized_1b,
            ..inner.diagnostics
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso::fit_lasso;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_problem(n: usize, p: usize, seed: u64) -> RegressionProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut beta = DVector::zeros(p);
        beta[0] = 1.5;
        let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (xn, _) = crate::model::normalize_columns(&x).unwrap();
        let y = &xn * &beta + noise;
        RegressionProblem::new(xn, y).unwrap()
    }

    fn l1_objective(problem: &RegressionProblem, beta: &DVector<f64>, c: f64) -> f64 {
        trex_objective(problem, beta, c, &NormSpec::l1(problem.p())).unwrap_or(f64::INFINITY)
    }

    /// Dense grid over a box that contains every minimizer, refined by zooming
    /// around the best few cells.
    fn grid_minimum(problem: &RegressionProblem, c: f64) -> f64 {
        let p = problem.p();
        let f0 = l1_objective(problem, &DVector::zeros(p), c);
        // Omega(b) <= objective(b) <= f0 for every improving b.
        let mut centers = vec![(DVector::zeros(p), f0)];
        let mut half = f0;
        let coarse: i64 = if p == 1 { 4000 } else { 300 };
        let mut best = f0;
        for round in 0..14 {
            // Dense first pass, then a cheaper zoom around the best points.
            let steps = if round == 0 { coarse } else { 20 };
            let mut found: Vec<(DVector<f64>, f64)> = Vec::new();
            for (center, _) in &centers {
                let h = half / steps as f64;
                let mut idx = vec![-steps; p];
                loop {
                    let b = DVector::from_fn(p, |i, _| center[i] + h * idx[i] as f64);
                    let v = l1_objective(problem, &b, c);
                    if v.is_finite() {
                        found.push((b, v));
                    }
                    let mut k = 0;
                    while k < p {
                        idx[k] += 1;
                        if idx[k] <= steps {
                            break;
                        }
                        idx[k] = -steps;
                        k += 1;
                    }
                    if k == p {
                        break;
                    }
                }
            }
            found.sort_by(|a, b| a.1.total_cmp(&b.1));
            found.truncate(6);
            best = best.min(found[0].1);
            centers = found;
            half = 4.0 * half / steps as f64;
        }
        best
    }

    #[test]
    fn matches_grid_oracle_on_tiny_instances() {
        for seed in 0..8 {
            for (n, p) in [(4, 1), (8, 1), (4, 2), (8, 2)] {
                let problem = random_problem(n, p, seed);
                let fit = solve_trex(&problem, &SolverConfig::default(), None).unwrap();
                let oracle = grid_minimum(&problem, 0.5);
                assert!(
                    (fit.objective - oracle).abs() <= 1e-3,
                    "seed {seed} n {n} p {p}: solver {} oracle {oracle}",
                    fit.objective
                );
            }
        }
    }

    #[test]
    fn objective_examples() {
        let problem = RegressionProblem::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 2.0)).unwrap();
        let spec = NormSpec::l1(1);
        assert!((trex_objective(&problem, &DVector::zeros(1), 0.5, &spec).unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(
            trex_objective(&problem, &DVector::from_element(1, 2.0), 0.5, &spec),
            Err(TrexError::Domain)
        ));
    }

    #[test]
    fn pointwise_dominance_and_convexity() {
        let problem = random_problem(10, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = NormSpec::l1(4);
        for _ in 0..500 {
            let b = DVector::from_fn(4, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
            let Ok(total) = trex_objective(&problem, &b, 0.5, &spec) else { continue };
            let mut min_sub = f64::INFINITY;
            for j in 0..4 {
                for s in [Sign::Negative, Sign::Positive] {
                    if let Ok(v) = subproblem_objective(&problem, &b, 0.5, j, s) {
                        assert!(v >= total - 1e-10 * total);
                        min_sub = min_sub.min(v);
                    }
                }
            }
            assert!((min_sub - total).abs() <= 1e-10 * total);

            let b2 = DVector::from_fn(4, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
            for j in 0..4 {
                for s in [Sign::Negative, Sign::Positive] {
                    if let (Ok(f1), Ok(f2)) =
                        (subproblem_objective(&problem, &b, 0.5, j, s), subproblem_objective(&problem, &b2, 0.5, j, s))
                    {
                        let mid = (&b + &b2) * 0.5;
                        let fm = subproblem_objective(&problem, &mid, 0.5, j, s).unwrap();
                        assert!(fm <= 0.5 * (f1 + f2) + 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn coordinate_step_matches_one_dimensional_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let k = rng.random_range(0.1..3.0);
            let c = rng.random_range(0.5..2.0);
            let e = rng.random_range(-1.0..1.0);
            let b = rng.random_range(-2.0..2.0);
            let d = rng.random_range(0.1..2.0);
            let q = b * b / c + rng.random_range(0.01..2.0);
            let beta_k = rng.random_range(-1.0..1.0);
            let w = rng.random_range(0.1..2.0);
            let h = |t: f64| {
                let den = d - e * t;
                if den <= 0.0 {
                    f64::INFINITY
                } else {
                    k * (q - 2.0 * b * t + c * t * t) / den + w * (beta_k + t).abs()
                }
            };
            let t = coordinate_step(k, q, d, b, c, e, beta_k, w, 0.0);
            let mut grid_best = f64::INFINITY;
            for i in -200_000..=200_000 {
                grid_best = grid_best.min(h(i as f64 * 5e-5));
            }
            assert!(h(t) <= grid_best + 1e-7, "step value {} grid {}", h(t), grid_best);
        }
    }

    #[test]
    fn methods_agree() {
        for seed in 0..4 {
            let problem = random_problem(20, 8, seed);
            let cd = solve_trex(&problem, &SolverConfig::default(), None).unwrap();
            let cfg = SolverConfig { method: SubproblemMethod::ProximalGradient, ..Default::default() };
            let pg = solve_trex(&problem, &cfg, None).unwrap();
            assert!(cd.objective <= pg.objective + 1e-6 * pg.objective, "cd {} pg {}", cd.objective, pg.objective);
            assert!((cd.objective - pg.objective).abs() <= 1e-4 * pg.objective);
        }
    }

    #[test]
    fn fit_invariants() {
        let problem = random_problem(30, 12, 9);
        let fit = solve_trex(&problem, &SolverConfig::default(), None).unwrap();
        assert_eq!(fit.per_subproblem.len(), 24);
        let recomputed = trex_objective(&problem, &fit.beta_hat, 0.5, &NormSpec::l1(12)).unwrap();
        assert!((recomputed - fit.objective).abs() <= 1e-8 * recomputed);
        for r in fit.per_subproblem.iter().filter(|r| r.feasible) {
            assert!(fit.objective <= r.objective * (1.0 + 1e-9));
        }
        assert!(fit.u_hat > 0.0);
        assert!(fit.diagnostics.converged);
        let json = serde_json::to_string(&fit).unwrap();
        let back: TrexFit = serde_json::from_str(&json).unwrap();
        assert_eq!(back.winner, fit.winner);
        assert!(json.contains("\"coordinate\""));
    }

    #[test]
    fn rejects_bad_input() {
        let problem = random_problem(10, 3, 1);
        let bad = SolverConfig { c: 2.0, ..Default::default() };
        assert!(matches!(solve_trex(&problem, &bad, None), Err(TrexError::Parameter(_))));
        let raw = RegressionProblem::new(problem.x() * 2.0, problem.y().clone()).unwrap();
        assert!(matches!(solve_trex(&raw, &SolverConfig::default(), None), Err(TrexError::Unnormalized)));
        let zero_y = RegressionProblem::new(problem.x().clone(), DVector::zeros(10)).unwrap();
        assert!(matches!(solve_trex(&zero_y, &SolverConfig::default(), None), Err(TrexError::Domain)));
    }

    #[test]
    fn l1_ordering_on_random_instances() {
        for seed in 0..20 {
            let problem = random_problem(25, 40, 100 + seed);
            let fit = solve_trex(&problem, &SolverConfig::default(), None).unwrap();
            let lasso = fit_lasso(&problem, fit.u_hat, &SolverConfig::default()).unwrap();
            assert!(l1_norm(&fit.beta_hat) >= l1_norm(&lasso.beta_hat) - 1e-6);
        }
    }

    #[test]
    fn constrained_contract() {
        for seed in 0..10 {
            let problem = random_problem(15, 20, 200 + seed);
            let bound = linf_norm(&problem.xty());
            let free = solve_trex(&problem, &SolverConfig::default(), None).unwrap();
            let cons = solve_trex_constrained(&problem, &SolverConfig::default(), None).unwrap();
            assert!(cons.u_hat <= bound + 1e-8);
            if free.u_hat <= bound {
                assert!((free.objective - cons.objective).abs() <= 1e-6 * free.objective);
            }
            // A tight bound is still honored.
            let tight = solve_trex_constrained(&problem, &SolverConfig::default(), Some(0.5 * bound)).unwrap();
            assert!(tight.u_hat <= 0.5 * bound + 1e-8);
            assert!(tight.objective >= free.objective - 1e-9 * free.objective);
            // Far inside the unconstrained range, only starts near least squares are feasible.
            let tiny = solve_trex_constrained(&problem, &SolverConfig::default(), Some(1e-3 * bound)).unwrap();
            assert!(tiny.u_hat <= 1e-3 * bound + 1e-8);
            let inf = solve_trex_constrained(&problem, &SolverConfig::default(), Some(f64::INFINITY)).unwrap();
            assert!((inf.objective - free.objective).abs() <= 1e-12 * free.objective);
        }
    }

    #[test]
    fn singleton_groups_reproduce_l1() {
        for seed in 0..5 {
            let problem = random_problem(12, 5, 300 + seed);
            let l1 = solve_trex(&problem, &SolverConfig::default(), None).unwrap();
            let partition: Vec<Vec<usize>> = (0..5).map(|j| vec![j]).collect();
            let spec = NormSpec::group(5, partition, vec![1.0; 5]).unwrap();
            let g = solve_trex(&problem, &SolverConfig::default(), Some(&spec)).unwrap();
            assert!((g.objective - l1.objective).abs() <= 1e-6 * l1.objective);
        }
    }

    #[test]
    fn group_trex_beats_simple_points() {
        let problem = random_problem(20, 6, 17);
        let spec = NormSpec::contiguous_groups(6, 2).unwrap();
        let fit = solve_trex(&problem, &SolverConfig::default(), Some(&spec)).unwrap();
        assert!(fit.diagnostics.heuristic);
        assert_eq!(fit.per_subproblem.len(), 3);
        let at_zero = trex_objective(&problem, &DVector::zeros(6), 0.5, &spec).unwrap();
        assert!(fit.objective <= at_zero + 1e-12);
        let recomputed = trex_objective(&problem, &fit.beta_hat, 0.5, &spec).unwrap();
        assert!((recomputed - fit.objective).abs() <= 1e-8 * recomputed);
    }

    #[test]
    fn unpenalized_special_cases() {
        let problem = random_problem(15, 4, 41);
        let cfg = SolverConfig::default();
        let plain = solve_trex(&problem, &cfg, None).unwrap();
        let empty = solve_trex_unpenalized(&problem, &cfg, None, &[]).unwrap();
        assert_eq!(plain.objective, empty.objective);

        let all = solve_trex_unpenalized(&problem, &cfg, None, &[0, 1, 2, 3]).unwrap();
        let ls = linalg::least_squares(problem.x(), problem.y()).unwrap();
        assert!((&all.beta_hat - ls).amax() < 1e-10);
        assert!(all.winner.is_none());

        let some = solve_trex_unpenalized(&problem, &cfg, None, &[1, 3]).unwrap();
        let corr = problem.x().tr_mul(&(problem.y() - problem.x() * &some.beta_hat));
        assert!(corr[1].abs() <= 1e-8 && corr[3].abs() <= 1e-8);
        assert!(matches!(some.winner, Some(SubproblemId::Signed { index: 0 | 2, .. })));
        assert_eq!(some.diagnostics.unpenalized, vec![2, 4]);
    }

    #[test]
    fn unpenalized_orthogonal_blocks_split() {
        // Columns 0 and 1 are orthogonal to columns 2..4.
        let n = 8;
        let h = DMatrix::from_fn(n, n, |i, j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(n, 5, |i, j| {
            if j < 2 {
                h[(i, j + 1)]
            } else {
                h[(i, 3)] * (j as f64) + h[(i, 4)] - 0.5 * h[(i, 5 + (j % 3))]
            }
        });
        let (x, _) = crate::model::normalize_columns(&x).unwrap();
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let problem = RegressionProblem::new(x.clone(), y.clone()).unwrap();
        let cfg = SolverConfig::default();
        let fit = solve_trex_unpenalized(&problem, &cfg, None, &[0, 1]).unwrap();

        let x_u = x.columns(0, 2).into_owned();
        let x_p = x.columns(2, 3).into_owned();
        let proj = DMatrix::identity(n, n) - &x_u * linalg::pseudo_inverse(&x_u.tr_mul(&x_u)).unwrap() * x_u.transpose();
        let reduced = RegressionProblem::new(x_p.clone(), &proj * &y).unwrap();
        let trex_p = solve_trex(&reduced, &cfg, None).unwrap();
        let ls_u = linalg::least_squares(&x_u, &y).unwrap();
        for i in 0..2 {
            assert!((fit.beta_hat[i] - ls_u[i]).abs() < 1e-8);
        }
        for i in 0..3 {
            assert!((fit.beta_hat[2 + i] - trex_p.beta_hat[i]).abs() < 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn permutation_invariance(seed in 0u64..1000, shift in 1usize..6) {
            let problem = random_problem(12, 6, seed);
            let perm: Vec<usize> = (0..6).map(|j| (j + shift) % 6).collect();
            let xp = problem.x().select_columns(perm.iter());
            let permuted = RegressionProblem::new(xp, problem.y().clone()).unwrap();
            let a = solve_trex(&problem, &SolverConfig::default(), None).unwrap();
            let b = solve_trex(&permuted, &SolverConfig::default(), None).unwrap();
            prop_assert!((a.objective - b.objective).abs() <= 1e-8 * a.objective);
        }
    }
}
