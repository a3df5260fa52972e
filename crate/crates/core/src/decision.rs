//! Posterior expected acceptance loss, the Bayes decision and its thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_dims, Action, LossPoly, PriorSpec};
use crate::numerics::{
    beta_inc_pair, ln_beta, ln_gamma, try_find_root_monotone, try_integrate_1d, Bracket,
    QuadSettings, RootSearch,
};
use crate::scalar::Real;

/// Failure counts by phase (before / after `τ1`) and cause.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FailureCounts {
    pub d1: Vec<u32>,
    pub d2: Vec<u32>,
}

impl FailureCounts {
    pub fn new(d1: Vec<u32>, d2: Vec<u32>) -> Result<Self> {
        if d1.is_empty() || d1.len() != d2.len() {
            return Err(Error::invalid("failure counts need equal, nonzero numbers of causes"));
        }
        Ok(Self { d1, d2 })
    }

    pub fn zeros(risks: usize) -> Self {
        Self {
            d1: vec![0; risks],
            d2: vec![0; risks],
        }
    }

    pub fn risks(&self) -> usize {
        self.d1.len()
    }

    pub fn pre(&self) -> u32 {
        self.d1.iter().sum()
    }

    pub fn post(&self) -> u32 {
        self.d2.iter().sum()
    }

    pub fn total(&self) -> u32 {
        self.pre() + self.post()
    }

    pub fn by_cause(&self, j: usize) -> u32 {
        self.d1[j] + self.d2[j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffStats<T> {
    pub w1: T,
    pub w2: T,
    pub counts: FailureCounts,
    pub delta: bool,
}

impl<T: Real> SuffStats<T> {
    pub fn new(w1: T, w2: T, counts: FailureCounts, delta: bool) -> Result<Self> {
        if !(w1 >= T::zero()) || !(w2 >= T::zero()) || !w1.is_finite() || !w2.is_finite() {
            return Err(Error::invalid(format!(
                "sufficient statistics need finite w1, w2 >= 0, got ({w1}, {w2})"
            )));
        }
        Ok(Self {
            w1,
            w2,
            counts,
            delta,
        })
    }
}

/// Exponents `p_j ∈ {0,1,2}` selecting posterior moments in `h1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExponentVector {
    p: Vec<u8>,
}

impl ExponentVector {
    pub fn new(p: Vec<u8>) -> Result<Self> {
        let nonzero = p.iter().filter(|v| **v > 0).count();
        let sum: u32 = p.iter().map(|v| *v as u32).sum();
        if p.iter().any(|v| *v > 2) || nonzero > 2 || sum > 2 {
            return Err(Error::invalid(format!("exponent vector {p:?} out of range")));
        }
        Ok(Self { p })
    }

    pub fn zero(risks: usize) -> Self {
        Self { p: vec![0; risks] }
    }

    pub fn unit(risks: usize, j: usize) -> Self {
        let mut p = vec![0; risks];
        p[j] = 1;
        Self { p }
    }

    /// `p_ij`: a one in positions `i` and `j`, or a two when `i == j`.
    pub fn pair(risks: usize, i: usize, j: usize) -> Self {
        let mut p = vec![0; risks];
        p[i] += 1;
        p[j] += 1;
        Self { p }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.p
    }
}

/// Per-cause constants of the posterior for a fixed count table.
const STACK_CAUSES: usize = 8;

#[derive(Debug, Clone)]
struct CauseConst<T> {
    beta: T,
    l: T,
    d2: u32,
    /// `α + d_{+j}`
    shape: T,
    /// Beta shape `a = d_{2j} + 1`
    a: T,
    /// Beta shape `b = α + d_{1j} - 1` (valid only when positive)
    b: T,
    ln_gamma_a: T,
    /// `ln Γ(b + p)` for p = 0, 1, 2
    ln_gamma_b: [T; 3],
    /// `ln B(a, b + p)` for p = 0, 1, 2
    ln_beta_p: [T; 3],
    /// `ln Γ(shape + p)` for p = 0, 1, 2
    ln_gamma_shape: [T; 3],
}

/// Evaluates posterior moments and `φ(D′)` for a fixed count table and
/// stress indicator, reusing everything that does not depend on `(w1, w2)`.
#[derive(Debug, Clone)]
pub struct PosteriorEvaluator<'a, T> {
    loss: &'a LossPoly<T>,
    causes: Vec<CauseConst<T>>,
    delta: bool,
    force_quadrature: bool,
}

impl<'a, T: Real> PosteriorEvaluator<'a, T> {
    pub fn new(
        priors: &PriorSpec<T>,
        loss: &'a LossPoly<T>,
        counts: &FailureCounts,
        delta: bool,
    ) -> Result<Self> {
        check_dims(priors, loss)?;
        if counts.risks() != priors.risks() {
            return Err(Error::invalid(format!(
                "counts describe {} causes, priors {}",
                counts.risks(),
                priors.risks()
            )));
        }
        let causes = (0..priors.risks())
            .map(|j| {
                let alpha = priors.alpha[j];
                let shape = alpha + T::of(counts.by_cause(j) as f64);
                let a = T::of(counts.d2[j] as f64 + 1.0);
                let b = alpha + T::of(counts.d1[j] as f64) - T::one();
                let (ln_beta_p, ln_gamma_b) = if b > T::zero() {
                    let lg_b: [T; 3] = std::array::from_fn(|p| ln_gamma(b + T::of_usize(p)));
                    let lb = std::array::from_fn(|p| ln_beta(a, b + T::of_usize(p)));
                    (lb, lg_b)
                } else {
                    ([T::nan(); 3], [T::nan(); 3])
                };
                CauseConst {
                    beta: priors.beta[j],
                    l: priors.l[j],
                    d2: counts.d2[j],
                    shape,
                    a,
                    b,
                    ln_gamma_a: ln_gamma(a),
                    ln_gamma_b,
                    ln_beta_p,
                    ln_gamma_shape: [
                        ln_gamma(shape),
                        ln_gamma(shape + T::one()),
                        ln_gamma(shape + T::of(2.0)),
                    ],
                }
            })
            .collect();
        Ok(Self {
            loss,
            causes,
            delta,
            force_quadrature: false,
        })
    }

    /// Routes every accelerated kernel through direct quadrature of the
    /// acceleration-factor integral.
    pub fn with_quadrature(mut self) -> Self {
        self.force_quadrature = true;
        self
    }

    pub fn delta(&self) -> bool {
        self.delta
    }

    /// `ln K_j(p)` for p = 0, 1, 2 where
    /// `K_j(p) = ∫_1^l φ^{δ d2j} Γ(s+p) / (w1 + φ^δ w2 + β)^{s+p} dφ`.
    fn log_kernels(&self, j: usize, w1: T, w2: T) -> Result<[T; 3]> {
        let c = &self.causes[j];
        let base = w1 + c.beta;
        if !self.delta {
            let ln_span = (c.l - T::one()).ln();
            let ln_e = (base + w2).ln();
            return Ok(std::array::from_fn(|p| {
                c.ln_gamma_shape[p] + ln_span - (c.shape + T::of_usize(p)) * ln_e
            }));
        }
        if w2 == T::zero() {
            let ln_span = ((c.l.powf(c.a) - T::one()) / c.a).ln();
            let ln_b = base.ln();
            return Ok(std::array::from_fn(|p| {
                c.ln_gamma_shape[p] + ln_span - (c.shape + T::of_usize(p)) * ln_b
            }));
        }
        if c.b > T::zero() && !self.force_quadrature {
            let lk = self.log_kernels_beta(c, base, w2);
            if lk.iter().all(|v| v.is_finite()) {
                return Ok(lk);
            }
        }
        let mut out = [T::zero(); 3];
        for (p, slot) in out.iter_mut().enumerate() {
            *slot = self.log_kernel_quadrature(c, base, w2, p)?;
        }
        Ok(out)
    }

    /// Incomplete-beta form. One continued fraction per endpoint; the other
    /// two shapes follow from `I_x(a, b+1) = I_x(a, b) + x^a y^b / (b B(a, b))`,
    /// run upward on `I` below the mean and downward on `1 − I` above it so
    /// that every step adds.
    fn log_kernels_beta(&self, c: &CauseConst<T>, base: T, w2: T) -> [T; 3] {
        let eta2 = w2 / base;
        let eta1 = c.l * eta2;
        let ends = [eta1, eta2].map(|eta| {
            let ln_y = -eta.ln_1p();
            let y = ln_y.exp();
            (eta * y, y, eta.ln() + ln_y, ln_y)
        });
        let a = c.a;
        let step = |(_, _, ln_x, ln_y): (T, T, T, T), p: usize| -> T {
            let b = c.b + T::of_usize(p);
            (a * ln_x + b * ln_y - b.ln() - c.ln_beta_p[p]).exp()
        };
        let lower = ends[1].0 < a / (a + c.b + T::one());
        let mut diff = [T::zero(); 3];
        if lower {
            let (i1, _) = beta_inc_pair(ends[0].0, ends[0].1, a, c.b, c.ln_beta_p[0]);
            let (i2, _) = beta_inc_pair(ends[1].0, ends[1].1, a, c.b, c.ln_beta_p[0]);
            let (mut i1, mut i2) = (i1, i2);
            for (p, slot) in diff.iter_mut().enumerate() {
                if p > 0 {
                    i1 += step(ends[0], p - 1);
                    i2 += step(ends[1], p - 1);
                }
                *slot = i1 - i2;
            }
        } else {
            let b_top = c.b + T::of(2.0);
            let (_, c1) = beta_inc_pair(ends[0].0, ends[0].1, a, b_top, c.ln_beta_p[2]);
            let (_, c2) = beta_inc_pair(ends[1].0, ends[1].1, a, b_top, c.ln_beta_p[2]);
            let (mut c1, mut c2) = (c1, c2);
            for p in (0..3).rev() {
                if p < 2 {
                    c1 += step(ends[0], p);
                    c2 += step(ends[1], p);
                }
                diff[p] = c2 - c1;
            }
        }
        let ln_base = base.ln();
        let ln_w2 = w2.ln();
        std::array::from_fn(|p| {
            let b = c.b + T::of_usize(p);
            c.ln_gamma_a + c.ln_gamma_b[p] - b * ln_base - a * ln_w2 + diff[p].ln()
        })
    }

    fn log_kernel_quadrature(&self, c: &CauseConst<T>, base: T, w2: T, p: usize) -> Result<T> {
        let s = c.shape + T::of_usize(p);
        let anchor = base + w2;
        let d2 = c.d2 as i32;
        let settings = QuadSettings::default()
            .with_rel_tol(T::of(1e-13))
            .with_abs_tol(T::zero());
        let integral = try_integrate_1d(
            |phi: T| Ok(phi.powi(d2) * (anchor / (base + phi * w2)).powf(s)),
            Bracket::new(T::one(), c.l)?,
            &settings,
        )
        .map_err(|e| e.context("acceleration-factor integral"))?;
        Ok(c.ln_gamma_shape[p] - s * anchor.ln() + integral.ln())
    }

    /// Posterior first and second moments of each `λ_j`.
    pub fn moments(&self, w1: T, w2: T) -> Result<(Vec<T>, Vec<T>)> {
        let j = self.causes.len();
        let mut m1 = Vec::with_capacity(j);
        let mut m2 = Vec::with_capacity(j);
        for k in 0..j {
            let c = &self.causes[k];
            let base = w1 + c.beta;
            let use_beta = self.delta && w2 > T::zero() && c.b > T::zero() && !self.force_quadrature;
            if !self.delta || w2 == T::zero() {
                let e = if self.delta { base } else { base + w2 };
                m1.push(c.shape / e);
                m2.push(c.shape * (c.shape + T::one()) / (e * e));
            } else if use_beta {
                let lk = self.log_kernels_beta(c, base, w2);
                m1.push((lk[1] - lk[0]).exp());
                m2.push((lk[2] - lk[0]).exp());
            } else {
                let lk = self.log_kernels(k, w1, w2)?;
                m1.push((lk[1] - lk[0]).exp());
                m2.push((lk[2] - lk[0]).exp());
            }
        }
        Ok((m1, m2))
    }

    /// `(φ(w1, w2, d), ln h1(w1, w2, d, 0))` from a single kernel pass.
    pub fn phi_and_log_norm(&self, w1: T, w2: T) -> Result<(T, T)> {
        let j = self.causes.len();
        let mut m1 = [T::zero(); STACK_CAUSES];
        let mut m2 = [T::zero(); STACK_CAUSES];
        let mut spill: (Vec<T>, Vec<T>);
        let (m1, m2) = if j <= STACK_CAUSES {
            (&mut m1[..j], &mut m2[..j])
        } else {
            spill = (vec![T::zero(); j], vec![T::zero(); j]);
            (&mut spill.0[..], &mut spill.1[..])
        };
        let mut norm = T::zero();
        for k in 0..j {
            let lk = self.log_kernels(k, w1, w2)?;
            norm += lk[0];
            let c = &self.causes[k];
            if !self.delta || w2 == T::zero() {
                let e = if self.delta { w1 + c.beta } else { w1 + c.beta + w2 };
                m1[k] = c.shape / e;
                m2[k] = c.shape * (c.shape + T::one()) / (e * e);
            } else {
                m1[k] = (lk[1] - lk[0]).exp();
                m2[k] = (lk[2] - lk[0]).exp();
            }
        }
        Ok((self.loss.eval_moments(m1, m2), norm))
    }

    /// `φ(w1, w2, d)`.
    pub fn phi(&self, w1: T, w2: T) -> Result<T> {
        if self.loss.is_constant() {
            return Ok(self.loss.a0);
        }
        let (m1, m2) = self.moments(w1, w2)?;
        Ok(self.loss.eval_moments(&m1, &m2))
    }

    /// `ln h1(w1, w2, d, p)`.
    pub fn log_h1(&self, w1: T, w2: T, p: &ExponentVector) -> Result<T> {
        if p.as_slice().len() != self.causes.len() {
            return Err(Error::invalid("exponent vector length does not match the number of causes"));
        }
        let mut acc = T::zero();
        for (j, &pj) in p.as_slice().iter().enumerate() {
            acc += self.log_kernels(j, w1, w2)?[pj as usize];
        }
        Ok(acc)
    }

    /// Unclipped `c(d)`: the `w1` where `φ(w1, 0, d) = C_r`. Zero when the
    /// region is empty, `+inf` when `φ` never drops to `C_r`.
    pub fn boundary_w1(&self, c_r: T) -> Result<T> {
        let g = |w1: T| -> Result<T> { Ok(self.phi(w1, T::zero())? - c_r) };
        if g(T::zero())? <= T::zero() {
            return Ok(T::zero());
        }
        if self.loss.a0 >= c_r {
            return Ok(T::infinity());
        }
        let scale = self
            .causes
            .iter()
            .map(|c| c.beta)
            .fold(T::one(), |a, b| a.max(b));
        self.expand_and_solve(g, scale)
    }

    /// `c1(w1, d)`: the `w2` where `φ(w1, w2, d) = C_r`; zero when already
    /// accepting at `w2 = 0`, `+inf` when never accepting.
    pub fn boundary_w2(&self, w1: T, c_r: T) -> Result<T> {
        let g = |w2: T| -> Result<T> { Ok(self.phi(w1, w2)? - c_r) };
        if g(T::zero())? <= T::zero() {
            return Ok(T::zero());
        }
        if self.loss.a0 >= c_r {
            return Ok(T::infinity());
        }
        let scale = self
            .causes
            .iter()
            .map(|c| c.beta + w1)
            .fold(T::one(), |a, b| a.max(b));
        self.expand_and_solve(g, scale)
    }

    fn expand_and_solve<G: FnMut(T) -> Result<T>>(&self, mut g: G, scale: T) -> Result<T> {
        let mut lo = T::zero();
        let mut hi = scale;
        let mut tries = 0;
        while g(hi)? > T::zero() {
            lo = hi;
            hi *= T::of(4.0);
            tries += 1;
            if tries > 200 || !hi.is_finite() {
                return Err(Error::ModelViolation(
                    "posterior loss does not fall below C_r on any finite exposure".into(),
                ));
            }
        }
        let tol = T::of(1e-9) * hi.max(T::one()) * T::of(1e-3);
        match try_find_root_monotone(g, Bracket::new(lo, hi)?, tol)? {
            RootSearch::Root(x) => Ok(x),
            RootSearch::BelowBracket => Ok(lo),
            RootSearch::AboveBracket => Ok(hi),
        }
    }
}

pub fn log_h1<T: Real>(stats: &SuffStats<T>, priors: &PriorSpec<T>, p: &ExponentVector) -> Result<T> {
    let dummy = LossPoly::constant(T::zero(), priors.risks())?;
    PosteriorEvaluator::new(priors, &dummy, &stats.counts, stats.delta)?.log_h1(stats.w1, stats.w2, p)
}

pub fn h1<T: Real>(stats: &SuffStats<T>, priors: &PriorSpec<T>, p: &ExponentVector) -> Result<T> {
    Ok(log_h1(stats, priors, p)?.exp())
}

/// `ln h1` with every accelerated factor computed by direct quadrature.
pub fn log_h1_quadrature<T: Real>(
    stats: &SuffStats<T>,
    priors: &PriorSpec<T>,
    p: &ExponentVector,
) -> Result<T> {
    let dummy = LossPoly::constant(T::zero(), priors.risks())?;
    PosteriorEvaluator::new(priors, &dummy, &stats.counts, stats.delta)?
        .with_quadrature()
        .log_h1(stats.w1, stats.w2, p)
}

/// `φ(D′)`, the posterior expectation of `h(λ)`.
pub fn posterior_expected_loss<T: Real>(
    stats: &SuffStats<T>,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
) -> Result<T> {
    PosteriorEvaluator::new(priors, loss, &stats.counts, stats.delta)?.phi(stats.w1, stats.w2)
}

/// Accept iff `φ(D′) ≤ C_r`.
pub fn bayes_decision<T: Real>(
    stats: &SuffStats<T>,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    c_r: T,
) -> Result<Action> {
    Ok(decide(posterior_expected_loss(stats, priors, loss)?, c_r))
}

pub fn decide<T: Real>(phi: T, c_r: T) -> Action {
    if phi <= c_r {
        Action::Accept
    } else {
        Action::Reject
    }
}

/// `c′(d) = min{c(d), nτ1}`.
pub fn threshold_c<T: Real>(
    counts: &FailureCounts,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    c_r: T,
    n: u32,
    tau1: T,
) -> Result<T> {
    let ev = PosteriorEvaluator::new(priors, loss, counts, false)?;
    let cap = T::of(n as f64) * tau1;
    if ev.phi(T::zero(), T::zero())? <= c_r {
        return Ok(T::zero());
    }
    if ev.phi(cap, T::zero())? > c_r {
        return Ok(cap);
    }
    ev.boundary_w1(c_r).map(|c| c.min(cap))
}

/// `c1(w1, d)` for the given stress indicator.
pub fn threshold_c1<T: Real>(
    w1: T,
    counts: &FailureCounts,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    c_r: T,
    delta: bool,
) -> Result<T> {
    PosteriorEvaluator::new(priors, loss, counts, delta)?.boundary_w2(w1, c_r)
}
