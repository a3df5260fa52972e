//! Analytic Bayes risk of a plan and its components.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::decision::{FailureCounts, PosteriorEvaluator, SuffStats};
use crate::error::{Error, Result};
use crate::model::{
    check_dims, expected_acceptance_loss, no_sampling_risk, Action, CostModel, LossPoly, Plan,
    PriorSpec, Theta,
};
use crate::numerics::{
    binomial, gauss_legendre, ln_binomial, ln_gamma, try_integrate_1d, try_integrate_pieces,
    Bracket, PiecewiseChebyshev, QuadSettings,
};
use crate::scalar::Real;

/// Bayes risk split into its cost components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEvaluation<T> {
    pub sampling_cost: T,
    pub stress_cost: T,
    pub time_cost: T,
    pub decision_loss: T,
    pub total: T,
}

impl<T: Real> PlanEvaluation<T> {
    pub fn new(sampling_cost: T, stress_cost: T, time_cost: T, decision_loss: T) -> Self {
        Self {
            sampling_cost,
            stress_cost,
            time_cost,
            decision_loss,
            total: sampling_cost + stress_cost + time_cost + decision_loss,
        }
    }
}

/// Cause shares of a failure before and after `τ1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeRisks<T> {
    pub p1: Vec<T>,
    pub p2: Vec<T>,
}

pub fn relative_risks<T: Real>(theta: &Theta<T>, delta: bool) -> RelativeRisks<T> {
    let total = theta.total_rate();
    let elevated = theta.elevated_rate(delta);
    let p1 = theta.lambda.iter().map(|l| *l / total).collect();
    let p2 = theta
        .lambda
        .iter()
        .zip(&theta.phi)
        .map(|(l, f)| if delta { *l * *f / elevated } else { *l / elevated })
        .collect();
    RelativeRisks { p1, p2 }
}

/// Density value with flags marking components that are point masses
/// (`w1 = nτ1` when nothing fails before `τ1`, `w2 = 0` when all `r`
/// failures precede `τ1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue<T> {
    pub value: T,
    pub w1_atom: bool,
    pub w2_atom: bool,
}

/// Numerical settings for the risk integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSettings<T> {
    pub outer: QuadSettings<T>,
    pub inner: QuadSettings<T>,
    /// Upper limit on the number of count tables enumerated per plan.
    pub composition_cap: u64,
    /// Relative accuracy of the cached inner-integral interpolants.
    pub table_tol: T,
}

impl<T: Real> Default for RiskSettings<T> {
    fn default() -> Self {
        Self {
            outer: QuadSettings::default()
                .with_rel_tol(T::of(1e-8))
                .with_abs_tol(T::of(1e-13)),
            inner: QuadSettings::default()
                .with_rel_tol(T::of(1e-10))
                .with_abs_tol(T::of(1e-15)),
            composition_cap: 2_000_000,
            table_tol: T::of(1e-9),
        }
    }
}

// ---------------------------------------------------------------------------
// Combinatorics

/// Weak compositions of `total` into `cells` parts in lexicographic order.
pub fn compositions(total: u32, cells: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; cells];
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[pos] = v;
            rec(pos + 1, left - v, cur, out);
        }
    }
    if cells == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(0, total, &mut cur, &mut out);
    out
}

pub fn composition_count(total: u32, cells: usize) -> u64 {
    if cells == 0 {
        return u64::from(total == 0);
    }
    let k = (cells - 1) as u64;
    let n = total as u64 + k;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(u64::MAX as u128) as u64
}

fn ln_multinomial<T: Real>(parts: &[u32]) -> T {
    let total: u32 = parts.iter().sum();
    let mut acc = ln_gamma(T::of(total as f64 + 1.0));
    for p in parts {
        acc -= ln_gamma(T::of(*p as f64 + 1.0));
    }
    acc
}

/// Density of the sum of `k` independent Uniform(0, 1) variables
/// (cardinal B-spline of order `k`), by the stable Cox–de Boor recursion.
pub fn cardinal_bspline<T: Real>(k: u32, u: T) -> T {
    let kf = T::of(k as f64);
    if k == 0 || u <= T::zero() || u >= kf {
        return T::zero();
    }
    let k = k as usize;
    let mut vals = vec![T::zero(); k + 1];
    for (i, v) in vals.iter_mut().enumerate().take(k) {
        let x = u - T::of_usize(i);
        if x >= T::zero() && x < T::one() {
            *v = T::one();
        }
    }
    for level in 2..=k {
        let lf = T::of_usize(level);
        let denom = T::of_usize(level - 1);
        for i in 0..=(k - level) {
            let x = u - T::of_usize(i);
            vals[i] = (x * vals[i] + (lf - x) * vals[i + 1]) / denom;
        }
        vals[k - level + 1] = T::zero();
    }
    vals[0]
}

fn check_plan<T: Real>(plan: &Plan<T>) -> Result<()> {
    if !(plan.m <= plan.r && plan.r <= plan.n) || !(plan.tau1 >= T::zero()) || !plan.tau1.is_finite() {
        return Err(Error::invalid(format!("invalid plan {plan:?}")));
    }
    if plan.n > 0 && plan.r == 0 {
        return Err(Error::invalid("a sampling plan needs r >= 1"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Prior expectations over the pre-change phase

/// Positive-term prior expectations of the pre-change exposure law.
///
/// Given `λ`, the number `D1` of failures by `τ1` and the pre-change
/// exposure `W1` have density `C(n,d) Λ^d e^{−Λw} V_d(w − (n−d)τ1)` with
/// `V_d(x) = τ1^{d−1} M_d(x/τ1)`; averaging `Λ^k e^{−Λw}` over the Gamma
/// priors is a multinomial convolution of positive terms. The windows of
/// all `d` tile the same unit pieces, so one Gauss–Legendre grid serves
/// every `d`.
struct ExposureMoments<'a, T> {
    priors: &'a PriorSpec<T>,
    k_max: usize,
    /// `ln[Γ(α+κ) β^α / (Γ(α) κ!)]` per cause and `κ`.
    ln_coef: Vec<Vec<T>>,
    ln_fact: Vec<T>,
    /// Abscissae covering `[(n − d_max)τ1, nτ1]`.
    points: Vec<T>,
    /// `C(n,d) × weight × V_d(w − (n−d)τ1)` per point and `d ≤ d_max`.
    mass: Vec<Vec<T>>,
}

impl<'a, T: Real> ExposureMoments<'a, T> {
    fn new(priors: &'a PriorSpec<T>, n: u32, d_max: u32, tau1: T) -> Self {
        let k_max = d_max as usize;
        let ln_coef = (0..priors.risks())
            .map(|j| {
                let (a, b) = (priors.alpha[j], priors.beta[j]);
                let base = a * b.ln() - ln_gamma(a);
                (0..=k_max)
                    .map(|k| {
                        let kf = T::of_usize(k);
                        base + ln_gamma(a + kf) - ln_gamma(kf + T::one())
                    })
                    .collect()
            })
            .collect();
        let ln_fact = (0..=k_max).map(|k| ln_gamma(T::of_usize(k + 1))).collect();
        let mut points = Vec::new();
        let mut mass = Vec::new();
        if tau1 > T::zero() && d_max > 0 {
            let (nodes, weights) = gauss_legendre::<T>(k_max / 2 + 12);
            let half = T::of(0.5) * tau1;
            for piece in (n - d_max)..n {
                let centre = (T::of(piece as f64) + T::of(0.5)) * tau1;
                for (x, wt) in nodes.iter().zip(&weights) {
                    let w = centre + half * *x;
                    let row = (0..=d_max)
                        .map(|d| {
                            if d == 0 || piece < n - d {
                                return T::zero();
                            }
                            let lo = T::of((n - d) as f64) * tau1;
                            binomial::<T>(n, d)
                                * *wt
                                * half
                                * tau1.powi(d as i32 - 1)
                                * cardinal_bspline(d, (w - lo) / tau1)
                        })
                        .collect();
                    points.push(w);
                    mass.push(row);
                }
            }
        }
        Self {
            priors,
            k_max,
            ln_coef,
            ln_fact,
            points,
            mass,
        }
    }

    /// `[k! Σ_{κ ⊢ k} Π_j exp(ln_coef_j(κ_j)) factor(j, α_j + κ_j)]` for `k ≤ k_max`.
    fn convolve<F: Fn(usize, T) -> T>(&self, factor: F) -> Vec<T> {
        let k = self.k_max;
        let mut acc = vec![T::zero(); k + 1];
        acc[0] = T::one();
        let mut next = vec![T::zero(); k + 1];
        let mut term = vec![T::zero(); k + 1];
        for j in 0..self.priors.risks() {
            let alpha = self.priors.alpha[j];
            for (u, t) in term.iter_mut().enumerate() {
                *t = self.ln_coef[j][u].exp() * factor(j, alpha + T::of_usize(u));
            }
            for t in 0..=k {
                let mut s = T::zero();
                for u in 0..=t {
                    s += acc[t - u] * term[u];
                }
                next[t] = s;
            }
            std::mem::swap(&mut acc, &mut next);
        }
        for (t, v) in acc.iter_mut().enumerate() {
            *v *= self.ln_fact[t].exp();
        }
        acc
    }

    /// `E[Λ^k e^{−Λw}]` for all `k ≤ k_max`.
    fn moments(&self, w: T) -> Vec<T> {
        self.convolve(|j, a| (-a * (self.priors.beta[j] + w).ln()).exp())
    }

    /// `E[Λ^k e^{−Λw − sΛ′}]` with `Λ′ = Σ_j λ_j φ_j`, `φ_j` uniform on
    /// `(1, l_j)` or pinned at `l_j`.
    fn moments_elevated(&self, w: T, s: T, pinned: bool) -> Vec<T> {
        self.convolve(|j, a| {
            let b = self.priors.beta[j] + w;
            let l = self.priors.l[j];
            if pinned {
                (-a * (b + l * s).ln()).exp()
            } else {
                uniform_power_mean(a, b, l, s)
            }
        })
    }

    /// `Σ_d coef_d ∫ C(n,d) V_d(w − (n−d)τ1) g(w)[d + shift] dw` over `1 ≤ d ≤ d_max`.
    fn windows<G: FnMut(T) -> Vec<T>>(&self, coef: &[T], shift: isize, mut g: G) -> T {
        let mut acc = T::zero();
        for (w, row) in self.points.iter().zip(&self.mass) {
            let vals = g(*w);
            for d in 1..row.len().min(coef.len()) {
                if row[d] != T::zero() && coef[d] != T::zero() {
                    acc += coef[d] * row[d] * vals[(d as isize + shift) as usize];
                }
            }
        }
        acc
    }
}

/// `E_φ[(b + sφ)^{−a}]` for `φ ~ U(1, l)`:
/// `(b+s)^{−a} (1 − (1+u)^{1−a}) / ((a−1) u)` with `u = (l−1)s/(b+s)`.
fn uniform_power_mean<T: Real>(a: T, b: T, l: T, s: T) -> T {
    let lead = (-a * (b + s).ln()).exp();
    let u = (l - T::one()) * s / (b + s);
    if u <= T::zero() {
        return lead;
    }
    let lg = u.ln_1p();
    let e = T::one() - a;
    let ratio = if e == T::zero() { lg / u } else { (e * lg).exp_m1() / (e * u) };
    lead * ratio
}

/// `E[(n − D1) 1{D1 < m}]` under the prior.
pub fn expected_stress_count<T: Real>(plan: &Plan<T>, priors: &PriorSpec<T>) -> Result<T> {
    check_plan(plan)?;
    priors.validate()?;
    let (n, m, tau1) = (plan.n, plan.m, plan.tau1);
    if m == 0 {
        return Ok(T::zero());
    }
    let top = if tau1 == T::zero() { 0 } else { m - 1 };
    let law = ExposureMoments::new(priors, n, top, tau1);
    let coef: Vec<T> = (0..=top).map(|d| T::of((n - d) as f64)).collect();
    let head = T::of(n as f64) * priors.laplace(T::of(n as f64) * tau1);
    Ok(head + law.windows(&coef, 0, |w| law.moments(w)))
}

// ---------------------------------------------------------------------------
// Expected test duration

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PostStress {
    /// Raised on paths with `d1 < m`, acceleration factors from the prior.
    Adaptive,
    /// Every path raised after `τ1`, each factor at its largest value `l_j`.
    Maximal,
}

/// Given `θ`, `E[T^(r)] = Σ_{i<r} [P(D1 ≥ k_i)/Λ + P(D1 < k_i)/Λ′] / (n − i)`
/// with `k_i = min(m, i + 1)`; the prior average splits into
/// `H_r E[1/Λ] + Σ_{d<m} c_d (E[P(D1=d)/Λ′] − E[P(D1=d)/Λ])`,
/// `c_d = Σ_{i=d}^{r−1} 1/(n−i)`, every piece a positive integral.
fn duration_impl<T: Real>(
    plan: &Plan<T>,
    priors: &PriorSpec<T>,
    post: PostStress,
    settings: &QuadSettings<T>,
) -> Result<T> {
    check_plan(plan)?;
    priors.validate()?;
    let (n, r, tau1) = (plan.n, plan.r, plan.tau1);
    if r == 0 {
        return Ok(T::zero());
    }
    let total_shape: T = priors.alpha.iter().copied().sum();
    if !(total_shape > T::one()) {
        return Err(Error::ModelViolation(
            "expected test duration is infinite unless the prior shapes sum to more than 1".into(),
        ));
    }
    let (raised, pinned) = match post {
        PostStress::Adaptive => (plan.m, false),
        PostStress::Maximal => (r, true),
    };
    let raised = if tau1 == T::zero() { raised.min(1) } else { raised };
    let tail = |d: u32| -> T { (d..r).map(|i| T::one() / T::of((n - i) as f64)).sum() };
    let harmonic = tail(0);
    let weights: Vec<T> = (0..raised).map(tail).collect();
    let law = ExposureMoments::new(priors, n, raised.saturating_sub(1), tau1);
    let cap = T::of(n as f64) * tau1;

    // E[P(D1 = d)/Λ] for d ≥ 1 has the closed moment E[Λ^{d−1} e^{−Λw}].
    let unraised = law.windows(&weights, -1, |w| law.moments(w));
    let w0 = weights.first().copied().unwrap_or(T::zero());
    let integrand = |s: T| -> Result<T> {
        let mut acc = harmonic * priors.laplace(s);
        if raised > 0 {
            let head = law.convolve(|j, a| {
                let b = priors.beta[j] + cap;
                let l = priors.l[j];
                if pinned {
                    (-a * (b + l * s).ln()).exp()
                } else {
                    uniform_power_mean(a, b, l, s)
                }
            })[0];
            acc += w0 * (head - priors.laplace(cap + s));
        }
        acc += law.windows(&weights, 0, |w| law.moments_elevated(w, s, pinned));
        Ok(acc)
    };
    // The tail decays like s^{-Σα}; s = scale·(e^x − 1) turns it exponential.
    let scale = priors.beta.iter().copied().fold(T::infinity(), T::min) + cap;
    let stretched = |x: T| -> Result<T> {
        if x > T::of(700.0) {
            return Ok(T::zero());
        }
        let v = integrand(scale * x.exp_m1())?;
        Ok(if v == T::zero() { v } else { v * scale * x.exp() })
    };
    let integral = try_integrate_1d(stretched, Bracket::new(T::zero(), T::infinity())?, settings)
        .map_err(|e| e.context("expected duration"))?;
    Ok((integral - unraised).max(T::zero()))
}

/// Prior-predictive expected duration `E[T^(r)]` of the adaptive test.
pub fn expected_duration<T: Real>(plan: &Plan<T>, priors: &PriorSpec<T>) -> Result<T> {
    let settings = QuadSettings::default()
        .with_rel_tol(T::of(1e-10))
        .with_abs_tol(T::of(1e-14));
    duration_impl(plan, priors, PostStress::Adaptive, &settings)
}

/// Expected duration when every unit runs at the largest acceleration
/// factors after `τ1`; a lower bound on [`expected_duration`] for any `m`.
pub fn expected_duration_max_stress<T: Real>(plan: &Plan<T>, priors: &PriorSpec<T>) -> Result<T> {
    let settings = QuadSettings::default()
        .with_rel_tol(T::of(1e-9))
        .with_abs_tol(T::of(1e-13));
    duration_impl(plan, priors, PostStress::Maximal, &settings)
}

// ---------------------------------------------------------------------------
// Joint density of (W1, W2, D) given θ

fn all_pre_polynomial<T: Real>(n: u32, r: u32, tau1: T, w1: T) -> T {
    // Σ_{k=r}^{n} C(n,k) Σ_{j=0}^{k} (−1)^j C(k,j) (w1 − (n−k+j)τ1)_+^{r−1} / Γ(r)
    let lg = ln_gamma(T::of(r as f64));
    let mut acc = T::zero();
    for k in r..=n {
        let mut inner = T::zero();
        for j in 0..=k {
            let x = w1 - T::of((n - k + j) as f64) * tau1;
            if x <= T::zero() {
                continue;
            }
            let sign = if j % 2 == 0 { T::one() } else { -T::one() };
            inner += sign * binomial::<T>(k, j) * ((T::of((r - 1) as f64)) * x.ln() - lg).exp();
        }
        acc += binomial::<T>(n, k) * inner;
    }
    acc.max(T::zero())
}

/// Density of the pre-change statistic `w1` when `0 < d1 < r`, without the
/// rate factors: `Σ_k (−1)^k C(d1,k)(w1 − (n−d1+k)τ1)_+^{d1−1}/Γ(d1)`.
fn pre_window_density<T: Real>(n: u32, d1: u32, tau1: T, w1: T) -> T {
    let x = w1 - T::of((n - d1) as f64) * tau1;
    if x <= T::zero() || tau1 <= T::zero() {
        return T::zero();
    }
    tau1.powi(d1 as i32 - 1) * cardinal_bspline(d1, x / tau1)
}

pub fn joint_density<T: Real>(
    w1: T,
    w2: T,
    counts: &FailureCounts,
    theta: &Theta<T>,
    plan: &Plan<T>,
) -> Result<DensityValue<T>> {
    check_plan(plan)?;
    if counts.risks() != theta.risks() {
        return Err(Error::invalid("counts and theta disagree on the number of causes"));
    }
    if counts.total() != plan.r {
        return Err(Error::invalid(format!(
            "counts total {} but the plan requires r = {}",
            counts.total(),
            plan.r
        )));
    }
    let (n, r, tau1) = (plan.n, plan.r, plan.tau1);
    let d1 = counts.pre();
    let d2 = counts.post();
    let delta = plan.elevates(d1);
    let rr = relative_risks(theta, delta);
    let total = theta.total_rate();
    let elevated = theta.elevated_rate(delta);
    let share = |p: &[T], d: &[u32]| -> T {
        let mut acc = ln_multinomial::<T>(d);
        for (pj, dj) in p.iter().zip(d) {
            if *dj > 0 {
                acc += T::of(*dj as f64) * pj.ln();
            }
        }
        acc.exp()
    };
    let gamma_pdf = |x: T, k: u32, rate: T| -> T {
        if x <= T::zero() {
            return T::zero();
        }
        let kf = T::of(k as f64);
        (kf * rate.ln() + (kf - T::one()) * x.ln() - rate * x - ln_gamma(kf)).exp()
    };
    let zero = DensityValue {
        value: T::zero(),
        w1_atom: d1 == 0,
        w2_atom: d1 == r,
    };
    if w1 < T::zero() || w2 < T::zero() {
        return Ok(zero);
    }
    let cap = T::of(n as f64) * tau1;
    let near = |a: T, b: T| (a - b).abs() <= T::of(1e-12) * T::one().max(b.abs());
    if d1 == 0 {
        if !near(w1, cap) {
            return Ok(zero);
        }
        let value = (-total * cap).exp() * share(&rr.p2, &counts.d2) * gamma_pdf(w2, r, elevated);
        return Ok(DensityValue { value, ..zero });
    }
    if d1 == r {
        if w2 != T::zero() || tau1 == T::zero() {
            return Ok(zero);
        }
        let kf = T::of(r as f64);
        let value = share(&rr.p1, &counts.d1)
            * (kf * total.ln() - total * w1).exp()
            * all_pre_polynomial(n, r, tau1, w1);
        return Ok(DensityValue { value, ..zero });
    }
    if tau1 == T::zero() || w1 > cap {
        return Ok(zero);
    }
    let pre = binomial::<T>(n, d1)
        * share(&rr.p1, &counts.d1)
        * (T::of(d1 as f64) * total.ln() - total * w1).exp()
        * pre_window_density(n, d1, tau1, w1);
    let value = pre * share(&rr.p2, &counts.d2) * gamma_pdf(w2, d2, elevated);
    Ok(DensityValue { value, ..zero })
}

// ---------------------------------------------------------------------------
// Decision loss R1

struct Ctx<'a, T> {
    plan: &'a Plan<T>,
    priors: &'a PriorSpec<T>,
    loss: &'a LossPoly<T>,
    c_r: T,
    settings: &'a RiskSettings<T>,
    /// `Σ_j [α_j ln β_j − ln Γ(α_j) − ln(l_j − 1)]`
    ln_prior: T,
    tables: Option<&'a DecisionLossCache<T>>,
}

impl<'a, T: Real> Ctx<'a, T> {
    fn new(
        plan: &'a Plan<T>,
        priors: &'a PriorSpec<T>,
        loss: &'a LossPoly<T>,
        c_r: T,
        settings: &'a RiskSettings<T>,
    ) -> Result<Self> {
        check_plan(plan)?;
        check_dims(priors, loss)?;
        if !(c_r >= T::zero()) {
            return Err(Error::invalid("C_r must be nonnegative"));
        }
        let mut ln_prior = T::zero();
        for j in 0..priors.risks() {
            ln_prior += priors.alpha[j] * priors.beta[j].ln()
                - ln_gamma(priors.alpha[j])
                - (priors.l[j] - T::one()).ln();
        }
        Ok(Self {
            plan,
            priors,
            loss,
            c_r,
            settings,
            ln_prior,
            tables: None,
        })
    }

    fn cap(&self) -> T {
        T::of(self.plan.n as f64) * self.plan.tau1
    }

    /// `∫_0^{c1(w1)} exp(ln_coef + (k−1) ln w2 + ln h1(w1,w2,0)) (C_r − φ) dw2`.
    fn inner_w2(&self, ev: &PosteriorEvaluator<T>, w1: T, ln_coef: T, k: u32) -> Result<T> {
        let c1 = ev.boundary_w2(w1, self.c_r)?;
        if !(c1 > T::zero()) {
            return Ok(T::zero());
        }
        let km1 = T::of(k as f64 - 1.0);
        let f = |w2: T| -> Result<T> {
            if w2 <= T::zero() && k > 1 {
                return Ok(T::zero());
            }
            let (phi, ln_norm) = ev.phi_and_log_norm(w1, w2)?;
            let gap = self.c_r - phi;
            if gap >= T::zero() {
                return Ok(T::zero());
            }
            let ln_w = if k > 1 { km1 * w2.ln() } else { T::zero() };
            Ok((ln_coef + ln_w + ln_norm + self.ln_prior).exp() * gap)
        };
        try_integrate_1d(f, Bracket::new(T::zero(), c1)?, &self.settings.inner)
    }

    /// Case `d1 = 0`: `w1` sits at `nτ1`.
    fn h_none_before(&self, counts: &FailureCounts, delta: bool) -> Result<T> {
        let r = self.plan.r;
        let ev = PosteriorEvaluator::new(self.priors, self.loss, counts, delta)?;
        let cap = self.cap();
        if ev.phi(cap, T::zero())? <= self.c_r {
            return Ok(T::zero());
        }
        let ln_coef = ln_multinomial::<T>(&counts.d2) - ln_gamma(T::of(r as f64));
        self.inner_w2(&ev, cap, ln_coef, r)
    }

    /// Case `0 < d1 < r`: outer integral over `w1`, inner over `w2`.
    fn h_straddling(&self, counts: &FailureCounts, delta: bool) -> Result<T> {
        let (n, tau1) = (self.plan.n, self.plan.tau1);
        if tau1 == T::zero() {
            return Ok(T::zero());
        }
        let d1 = counts.pre();
        let d2 = counts.post();
        let ev = PosteriorEvaluator::new(self.priors, self.loss, counts, delta)?;
        let lo = T::of((n - d1) as f64) * tau1;
        if ev.phi(lo, T::zero())? <= self.c_r {
            return Ok(T::zero());
        }
        let hi = ev.boundary_w1(self.c_r)?.min(self.cap());
        if !(hi > lo) {
            return Ok(T::zero());
        }
        let ln_coef = ln_binomial::<T>(n, d1)
            + ln_multinomial::<T>(&counts.d1)
            + ln_multinomial::<T>(&counts.d2)
            - ln_gamma(T::of(d2 as f64));
        let breaks: Vec<T> = (1..d1).map(|k| lo + T::of(k as f64) * tau1).collect();
        let outer = |w1: T| -> Result<T> {
            let g = pre_window_density(n, d1, tau1, w1);
            if g <= T::zero() {
                return Ok(T::zero());
            }
            self.inner_w2(&ev, w1, ln_coef + g.ln(), d2)
        };
        try_integrate_pieces(outer, lo, hi, &breaks, &self.settings.outer)
    }

    /// Case `d1 = r`: `w2 = 0`, integral over `w1` only.
    fn h_all_before(&self, counts: &FailureCounts) -> Result<T> {
        let (n, r, tau1) = (self.plan.n, self.plan.r, self.plan.tau1);
        if tau1 == T::zero() {
            return Ok(T::zero());
        }
        let ev = PosteriorEvaluator::new(self.priors, self.loss, counts, false)?;
        if ev.phi(T::zero(), T::zero())? <= self.c_r {
            return Ok(T::zero());
        }
        let hi = ev.boundary_w1(self.c_r)?.min(self.cap());
        let ln_coef = ln_multinomial::<T>(&counts.d1);
        let f = |w1: T| -> Result<T> {
            let g = all_pre_polynomial(n, r, tau1, w1);
            if g <= T::zero() {
                return Ok(T::zero());
            }
            let (phi, ln_norm) = ev.phi_and_log_norm(w1, T::zero())?;
            let gap = self.c_r - phi;
            if gap >= T::zero() {
                return Ok(T::zero());
            }
            Ok((ln_coef + g.ln() + ln_norm + self.ln_prior).exp() * gap)
        };
        let breaks: Vec<T> = (1..=n).map(|k| T::of(k as f64) * tau1).collect();
        try_integrate_pieces(f, T::zero(), hi, &breaks, &self.settings.outer)
    }

    /// `H(d)` for `δ = 1`, `d1 < r` from the cached interpolant of the inner integral.
    fn h_tabled(&self, cache: &DecisionLossCache<T>, counts: &FailureCounts) -> Result<T> {
        let table = cache.table(counts)?;
        let Some(g) = table.as_ref() else {
            return Ok(T::zero());
        };
        let (n, tau1) = (self.plan.n, self.plan.tau1);
        let d1 = counts.pre();
        if d1 == 0 {
            return Ok(-g.eval(self.cap()));
        }
        if tau1 == T::zero() {
            return Ok(T::zero());
        }
        let lo = T::of((n - d1) as f64) * tau1;
        let hi = g.hi().min(self.cap());
        if !(hi > lo) {
            return Ok(T::zero());
        }
        let mut cuts: Vec<T> = (1..d1)
            .map(|k| lo + T::of(k as f64) * tau1)
            .chain(g.breaks().iter().copied())
            .filter(|&x| x > lo && x < hi)
            .collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        cuts.push(hi);
        let (nodes, weights) = gauss_legendre::<T>((TABLE_POINTS + d1 as usize) / 2 + 1);
        let half = T::of(0.5);
        let mut acc = T::zero();
        let mut a = lo;
        for b in cuts {
            if b > a {
                let (c, h) = (half * (a + b), half * (b - a));
                for (x, w) in nodes.iter().zip(&weights) {
                    let w1 = c + h * *x;
                    acc += *w * h * pre_window_density(n, d1, tau1, w1) * g.eval(w1);
                }
            }
            a = b;
        }
        Ok(-binomial::<T>(n, d1) * acc)
    }

    fn h(&self, counts: &FailureCounts) -> Result<T> {
        let d1 = counts.pre();
        let delta = self.plan.elevates(d1);
        if let (Some(cache), true, true) = (self.tables, delta, d1 < self.plan.r) {
            return self
                .h_tabled(cache, counts)
                .map_err(|e| e.context(&format!("H(d) for d = {counts:?}")));
        }
        let out = if d1 == 0 {
            self.h_none_before(counts, delta)
        } else if d1 == self.plan.r {
            self.h_all_before(counts)
        } else {
            self.h_straddling(counts, delta)
        };
        out.map_err(|e| e.context(&format!("H(d) for d = {counts:?}")))
    }
}

/// Conditional probability, given the total time on test `s` of an
/// unaccelerated type-II test, that fewer than `m` failures precede `τ1`.
struct PreChangeLaw<T> {
    n: u32,
    r: u32,
    m: u32,
    tau1: T,
    nodes: Vec<T>,
    weights: Vec<T>,
    ln_gamma_ratio: Vec<T>,
}

impl<T: Real> PreChangeLaw<T> {
    fn new(n: u32, r: u32, m: u32, tau1: T) -> Self {
        let (nodes, weights) = gauss_legendre::<T>((r as usize) / 2 + 1);
        let lg_r = ln_gamma(T::of(r as f64));
        let ln_gamma_ratio = (0..m)
            .map(|d1| ln_binomial::<T>(n, d1) + lg_r - ln_gamma(T::of((r - d1) as f64)))
            .collect();
        Self {
            n,
            r,
            m,
            tau1,
            nodes,
            weights,
            ln_gamma_ratio,
        }
    }

    fn prob_below(&self, s: T) -> T {
        if self.m == 0 || s <= T::zero() {
            return T::zero();
        }
        let (n, r, tau1) = (self.n, self.r, self.tau1);
        if tau1 == T::zero() {
            return T::one();
        }
        let cap = T::of(n as f64) * tau1;
        let mut acc = if s > cap {
            ((s - cap) / s).powi(r as i32 - 1)
        } else {
            T::zero()
        };
        let half = T::of(0.5);
        for d1 in 1..self.m.min(r) {
            let shift = s - T::of((n - d1) as f64) * tau1;
            if shift <= T::zero() {
                continue;
            }
            let d2m1 = (r - d1 - 1) as i32;
            let umax = (shift / tau1).min(T::of(d1 as f64));
            let mut integral = T::zero();
            let mut k = 0u32;
            while T::of(k as f64) < umax {
                let a = T::of(k as f64);
                let b = (a + T::one()).min(umax);
                let (c, h) = (half * (a + b), half * (b - a));
                for (x, w) in self.nodes.iter().zip(&self.weights) {
                    let u = c + h * *x;
                    let rest = (shift - tau1 * u) / s;
                    integral += *w * h * cardinal_bspline(d1, u) * rest.powi(d2m1);
                }
                k += 1;
            }
            if integral > T::zero() {
                acc += (self.ln_gamma_ratio[d1 as usize]
                    + T::of(d1 as f64) * (tau1 / s).ln()
                    + integral.ln())
                .exp();
            }
        }
        acc.min(T::one())
    }
}

fn r1_with<T: Real>(ctx: &Ctx<T>) -> Result<T> {
    let plan = ctx.plan;
    let (eh, c_r) = (expected_acceptance_loss(ctx.priors, ctx.loss), ctx.c_r);
    if plan.is_no_sampling() {
        return Ok(eh.min(c_r));
    }
    if ctx.loss.a0 >= c_r {
        return Ok(c_r);
    }
    if ctx.loss.is_constant() {
        return Ok(ctx.loss.a0);
    }
    let risks = ctx.priors.risks();
    let (n, r, m, tau1) = (plan.n, plan.r, plan.m, plan.tau1);
    let count = composition_count(r, risks);
    if count > ctx.settings.composition_cap {
        return Err(Error::TooManyCompositions {
            count,
            cap: ctx.settings.composition_cap,
        });
    }

    // Paths that never see elevated stress: collapse the count table to the
    // per-cause totals and integrate over the total time on test.
    let law = PreChangeLaw::new(n, r, m, tau1);
    let lg_r = ln_gamma(T::of(r as f64));
    let rm1 = T::of(r as f64 - 1.0);
    let breaks: Vec<T> = if tau1 > T::zero() && m > 0 {
        (1..=n).map(|k| T::of(k as f64) * tau1).collect()
    } else {
        Vec::new()
    };
    let mut unaccelerated = T::zero();
    for totals in compositions(r, risks) {
        let counts = FailureCounts {
            d1: totals.clone(),
            d2: vec![0; risks],
        };
        let ev = PosteriorEvaluator::new(ctx.priors, ctx.loss, &counts, false)?;
        let c0 = ev.boundary_w1(c_r)?;
        if !(c0 > T::zero()) {
            continue;
        }
        let ln_coef = ln_multinomial::<T>(&totals) - lg_r + ctx.ln_prior;
        let f = |s: T| -> Result<T> {
            if s <= T::zero() {
                return Ok(T::zero());
            }
            let keep = T::one() - law.prob_below(s);
            if keep <= T::zero() {
                return Ok(T::zero());
            }
            let (phi, ln_norm) = ev.phi_and_log_norm(s, T::zero())?;
            let gap = c_r - phi;
            if gap >= T::zero() {
                return Ok(T::zero());
            }
            Ok((ln_coef + rm1 * s.ln() + ln_norm).exp() * gap * keep)
        };
        unaccelerated += try_integrate_pieces(f, T::zero(), c0, &breaks, &ctx.settings.outer)
            .map_err(|e| e.context(&format!("unaccelerated paths with totals {totals:?}")))?;
    }

    // Paths that see elevated stress (d1 < m).
    let mut accelerated = T::zero();
    let top = if tau1 == T::zero() { m.min(1) } else { m };
    for d1 in 0..top {
        for pre in compositions(d1, risks) {
            for post in compositions(r - d1, risks) {
                let counts = FailureCounts {
                    d1: pre.clone(),
                    d2: post,
                };
                accelerated += ctx.h(&counts)?;
            }
        }
    }
    Ok(eh + unaccelerated + accelerated)
}

const TABLE_POINTS: usize = 20;

type InnerTable<T> = Arc<Option<PiecewiseChebyshev<T>>>;

/// Interpolants of the inner `w2` integrals of the accelerated count
/// tables. They depend on the priors, the loss and `C_r` but not on
/// `(n, m, τ1)`, so one cache serves every plan of a search.
pub struct DecisionLossCache<T> {
    priors: PriorSpec<T>,
    loss: LossPoly<T>,
    c_r: T,
    settings: RiskSettings<T>,
    ln_prior: T,
    tables: Mutex<HashMap<FailureCounts, InnerTable<T>>>,
}

impl<T: Real> DecisionLossCache<T> {
    pub fn new(priors: &PriorSpec<T>, loss: &LossPoly<T>, c_r: T, settings: &RiskSettings<T>) -> Result<Self> {
        let probe = Plan::new(1, 1, 0, T::zero())?;
        let ctx = Ctx::new(&probe, priors, loss, c_r, settings)?;
        Ok(Self {
            priors: priors.clone(),
            loss: loss.clone(),
            c_r,
            settings: *settings,
            ln_prior: ctx.ln_prior,
            tables: Mutex::new(HashMap::new()),
        })
    }

    pub fn priors(&self) -> &PriorSpec<T> {
        &self.priors
    }

    pub fn loss(&self) -> &LossPoly<T> {
        &self.loss
    }

    pub fn c_r(&self) -> T {
        self.c_r
    }

    pub fn tables_built(&self) -> usize {
        self.tables.lock().expect("table lock").len()
    }

    /// `g_d(w1) = ∫_0^{c1(w1)} K_d w2^{k−1} h1(w1,w2,d,0) (φ − C_r) dw2` on
    /// `[0, c(d)]`, `K_d` the multinomial factors over `Γ(k)`; `None` when
    /// the rejection region is empty.
    fn table(&self, counts: &FailureCounts) -> Result<InnerTable<T>> {
        if let Some(hit) = self.tables.lock().expect("table lock").get(counts) {
            return Ok(hit.clone());
        }
        let ev = PosteriorEvaluator::new(&self.priors, &self.loss, counts, true)?;
        let end = ev.boundary_w1(self.c_r)?;
        let built = if end > T::zero() && end.is_finite() {
            let k = counts.post();
            let km1 = T::of(k as f64 - 1.0);
            let ln_c = ln_multinomial::<T>(&counts.d1) + ln_multinomial::<T>(&counts.d2)
                - ln_gamma(T::of(k as f64))
                + self.ln_prior;
            let inner = |w1: T| -> Result<T> {
                let c1 = ev.boundary_w2(w1, self.c_r)?;
                if !(c1 > T::zero()) {
                    return Ok(T::zero());
                }
                let f = |w2: T| -> Result<T> {
                    if w2 <= T::zero() && k > 1 {
                        return Ok(T::zero());
                    }
                    let (phi, ln_norm) = ev.phi_and_log_norm(w1, w2)?;
                    let excess = phi - self.c_r;
                    if excess <= T::zero() {
                        return Ok(T::zero());
                    }
                    let ln_w = if k > 1 { km1 * w2.ln() } else { T::zero() };
                    Ok((ln_c + ln_w + ln_norm).exp() * excess)
                };
                try_integrate_1d(f, Bracket::new(T::zero(), c1)?, &self.settings.inner)
            };
            Some(PiecewiseChebyshev::build(
                inner,
                T::zero(),
                end,
                TABLE_POINTS,
                self.settings.table_tol,
            )?)
        } else {
            None
        };
        let built = Arc::new(built);
        self.tables
            .lock()
            .expect("table lock")
            .entry(counts.clone())
            .or_insert(built.clone());
        Ok(built)
    }

    /// `R1` of `plan` through the cached tables.
    pub fn r1(&self, plan: &Plan<T>) -> Result<T> {
        let mut ctx = Ctx::new(plan, &self.priors, &self.loss, self.c_r, &self.settings)?;
        ctx.tables = Some(self);
        r1_with(&ctx)
    }

    /// Assembled Bayes risk of `plan` with `R1` from the cached tables.
    pub fn bayes_risk(&self, plan: &Plan<T>, costs: &CostModel<T>) -> Result<PlanEvaluation<T>> {
        if costs.c_r != self.c_r {
            return Err(Error::invalid("cost model C_r differs from the cached tables"));
        }
        assemble(plan, &self.priors, &self.loss, costs, |p| self.r1(p))
    }
}

/// Decision loss `R1 = E[min{φ(D′), C_r}]` of the Bayes rule.
pub fn r1<T: Real>(plan: &Plan<T>, priors: &PriorSpec<T>, loss: &LossPoly<T>, c_r: T) -> Result<T> {
    r1_with_settings(plan, priors, loss, c_r, &RiskSettings::default())
}

pub fn r1_with_settings<T: Real>(
    plan: &Plan<T>,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    c_r: T,
    settings: &RiskSettings<T>,
) -> Result<T> {
    let ctx = Ctx::new(plan, priors, loss, c_r, settings)?;
    r1_with(&ctx)
}

/// `R1` by explicit enumeration of every count table through [`h_of_d`].
pub fn r1_by_composition<T: Real>(
    plan: &Plan<T>,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    c_r: T,
) -> Result<T> {
    let settings = RiskSettings::default();
    let ctx = Ctx::new(plan, priors, loss, c_r, &settings)?;
    let eh = expected_acceptance_loss(priors, loss);
    if plan.is_no_sampling() {
        return Ok(eh.min(c_r));
    }
    if loss.a0 >= c_r {
        return Ok(c_r);
    }
    let risks = priors.risks();
    let count = composition_count(plan.r, 2 * risks);
    if count > settings.composition_cap {
        return Err(Error::TooManyCompositions {
            count,
            cap: settings.composition_cap,
        });
    }
    let mut acc = eh;
    for cells in compositions(plan.r, 2 * risks) {
        let counts = FailureCounts {
            d1: cells[..risks].to_vec(),
            d2: cells[risks..].to_vec(),
        };
        acc += ctx.h(&counts)?;
    }
    Ok(acc)
}

/// `H(d)`: the (nonpositive) contribution of count table `d` to `R1 − E[h]`.
pub fn h_of_d<T: Real>(
    counts: &FailureCounts,
    plan: &Plan<T>,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    c_r: T,
) -> Result<T> {
    if counts.total() != plan.r || counts.risks() != priors.risks() {
        return Err(Error::invalid(format!(
            "count table {counts:?} does not match the plan and priors"
        )));
    }
    let settings = RiskSettings::default();
    Ctx::new(plan, priors, loss, c_r, &settings)?.h(counts)
}

/// Assembled Bayes risk of a plan.
pub fn bayes_risk<T: Real>(
    plan: &Plan<T>,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    costs: &CostModel<T>,
) -> Result<PlanEvaluation<T>> {
    bayes_risk_with_settings(plan, priors, loss, costs, &RiskSettings::default())
}

pub fn bayes_risk_with_settings<T: Real>(
    plan: &Plan<T>,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    costs: &CostModel<T>,
    settings: &RiskSettings<T>,
) -> Result<PlanEvaluation<T>> {
    assemble(plan, priors, loss, costs, |p| r1_with_settings(p, priors, loss, costs.c_r, settings))
}

fn assemble<T: Real, F: FnOnce(&Plan<T>) -> Result<T>>(
    plan: &Plan<T>,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    costs: &CostModel<T>,
    decision_loss: F,
) -> Result<PlanEvaluation<T>> {
    costs.validate()?;
    check_dims(priors, loss)?;
    check_plan(plan)?;
    if plan.is_no_sampling() {
        let (risk, _) = no_sampling_risk(priors, loss, costs);
        return Ok(PlanEvaluation::new(T::zero(), T::zero(), T::zero(), risk));
    }
    let n = T::of(plan.n as f64);
    let r = T::of(plan.r as f64);
    let sampling = n * (costs.c_s - costs.v_s) + r * costs.v_s;
    let stress = if costs.c_a > T::zero() && plan.m > 0 {
        costs.c_a * expected_stress_count(plan, priors)?
    } else {
        T::zero()
    };
    let time = if costs.c_t > T::zero() {
        costs.c_t * expected_duration(plan, priors)?
    } else {
        T::zero()
    };
    let decision = decision_loss(plan)?;
    Ok(PlanEvaluation::new(sampling, stress, time, decision))
}

/// Realized loss of one executed test.
pub fn realized_loss<T: Real>(
    stats: &SuffStats<T>,
    decision: Action,
    theta: &Theta<T>,
    plan: &Plan<T>,
    costs: &CostModel<T>,
    loss: &LossPoly<T>,
    t_r: T,
) -> T {
    let decision_part = match decision {
        Action::Accept => loss.eval(&theta.lambda),
        Action::Reject => costs.c_r,
    };
    let n = T::of(plan.n as f64);
    let stress = if stats.delta {
        T::of((plan.n - stats.counts.pre()) as f64) * costs.c_a
    } else {
        T::zero()
    };
    decision_part + n * costs.c_s + stress - T::of((plan.n - plan.r) as f64) * costs.v_s + t_r * costs.c_t
}
