//! Exhaustive plan search with lower-bound pruning.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_dims, n_upper_bound, no_sampling_risk, CostModel, LossPoly, Plan, PriorSpec};
use crate::numerics::{ln_beta, minimize_scalar_unimodal, try_integrate_1d, Bracket, QuadSettings};
use crate::risk::{expected_duration_max_stress, DecisionLossCache, PlanEvaluation, RiskSettings};
use crate::scalar::Real;

/// Which stress-change thresholds the search may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlanFamily {
    /// Any `0 ≤ m ≤ r`.
    #[default]
    Aabsp,
    /// `m = 0`: never accelerate.
    Cbsp,
    /// `m = r`: always accelerate after `τ1`.
    Acbsp,
}

impl PlanFamily {
    fn thresholds(self, r: u32) -> std::ops::RangeInclusive<u32> {
        match self {
            PlanFamily::Aabsp => 0..=r,
            PlanFamily::Cbsp => 0..=0,
            PlanFamily::Acbsp => r..=r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig<T> {
    pub mode: PlanFamily,
    /// Pins `τ1` instead of searching it.
    pub fixed_tau: Option<T>,
    pub n_max_override: Option<u32>,
    /// Search all the way to the theoretical bound on `n` instead of capping at 30.
    pub full_bound: bool,
    /// Upper end of the `τ1` search interval; derived from the priors when absent.
    pub tau1_bracket_hi: Option<T>,
    pub grid_points: usize,
    pub tau_tol: T,
    pub risk: RiskSettings<T>,
}

impl<T: Real> Default for SearchConfig<T> {
    fn default() -> Self {
        Self {
            mode: PlanFamily::Aabsp,
            fixed_tau: None,
            n_max_override: None,
            full_bound: false,
            tau1_bracket_hi: None,
            grid_points: 25,
            tau_tol: T::of(1e-3),
            risk: RiskSettings::default(),
        }
    }
}

impl<T: Real> SearchConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 3 {
            return Err(Error::config("grid_points must be at least 3"));
        }
        if !(self.tau_tol > T::zero()) {
            return Err(Error::config("tau_tol must be positive"));
        }
        if let Some(t) = self.fixed_tau {
            if !(t >= T::zero()) || !t.is_finite() {
                return Err(Error::config("fixed tau1 must be finite and nonnegative"));
            }
        }
        if let Some(h) = self.tau1_bracket_hi {
            if !(h > T::zero()) || !h.is_finite() {
                return Err(Error::config("tau1 bracket upper end must be finite and positive"));
            }
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: PlanFamily) -> Self {
        self.mode = mode;
        self
    }
}

/// Default `τ1` search limit, about five prior-mean unit lifetimes.
pub fn default_tau1_bracket_hi<T: Real>(priors: &PriorSpec<T>) -> T {
    let rate: T = (0..priors.risks()).map(|j| priors.mean_rate(j)).sum();
    T::of(5.0) * T::of_usize(priors.risks()) / rate
}

/// Best candidate found at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow<T> {
    pub n: u32,
    pub r: u32,
    pub m: u32,
    pub tau1: T,
    pub risk: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeOptimum<T> {
    pub plan: Plan<T>,
    pub eval: PlanEvaluation<T>,
}

/// Optima of the three plan families with relative risk savings (percent)
/// of the adaptive optimum against the always-accelerated (`rrs1`) and the
/// never-accelerated (`rrs2`) optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison<T> {
    pub aabsp: ModeOptimum<T>,
    pub acbsp: ModeOptimum<T>,
    pub cbsp: ModeOptimum<T>,
    pub rrs1: T,
    pub rrs2: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult<T> {
    pub mode: PlanFamily,
    pub fixed_tau: Option<T>,
    pub best_plan: Plan<T>,
    pub best_eval: PlanEvaluation<T>,
    pub per_n_trace: Vec<TraceRow<T>>,
    pub comparisons: Option<Comparison<T>>,
    pub n_searched: u32,
    pub evaluated: usize,
    pub pruned: usize,
    pub warnings: Vec<String>,
}

pub fn relative_risk_saving<T: Real>(adaptive: T, reference: T) -> T {
    if reference == T::zero() {
        return T::zero();
    }
    T::of(100.0) * (reference - adaptive) / reference
}

// ---------------------------------------------------------------------------
// Lower bounds

/// Decision loss when every cause is watched until its own `r`-th failure
/// at unit acceleration. The plan's data is a coarsening of that
/// observation, so this bounds `R1` from below for any `n`, `m`, `τ1`.
pub fn decision_loss_floor<T: Real>(r: u32, priors: &PriorSpec<T>, loss: &LossPoly<T>, c_r: T) -> Result<T> {
    let rf = T::of(r as f64);
    let oracle = OracleLoss {
        priors,
        loss,
        c_r,
        rf,
        // v_j = β_j/(β_j + S_j) ~ Beta(α_j, r); with v = t^{1/α} its density
        // in t is (1 − t^{1/α})^{r−1} / (α B(α, r)).
        ln_norm: priors
            .alpha
            .iter()
            .map(|&a| -(a.ln() + ln_beta(a, rf)))
            .collect(),
        settings: QuadSettings::default()
            .with_rel_tol(T::of(1e-9))
            .with_abs_tol(T::of(1e-12)),
    };
    let mut m1 = vec![T::zero(); priors.risks()];
    let mut m2 = vec![T::zero(); priors.risks()];
    oracle
        .level(0, &mut m1, &mut m2)
        .map_err(|e| e.context("decision-loss lower bound"))
}

struct OracleLoss<'a, T> {
    priors: &'a PriorSpec<T>,
    loss: &'a LossPoly<T>,
    c_r: T,
    rf: T,
    ln_norm: Vec<T>,
    settings: QuadSettings<T>,
}

impl<T: Real> OracleLoss<'_, T> {
    fn level(&self, j: usize, m1: &mut Vec<T>, m2: &mut Vec<T>) -> Result<T> {
        if j == self.priors.risks() {
            return Ok(self.loss.eval_moments(m1, m2).min(self.c_r));
        }
        let (a, b, rf) = (self.priors.alpha[j], self.priors.beta[j], self.rf);
        let mut f = |t: T| -> Result<T> {
            let v = t.powf(T::one() / a);
            let dens = if rf == T::one() {
                self.ln_norm[j].exp()
            } else {
                let w = T::one() - v;
                if w <= T::zero() {
                    return Ok(T::zero());
                }
                (self.ln_norm[j] + (rf - T::one()) * w.ln()).exp()
            };
            m1[j] = (a + rf) * v / b;
            m2[j] = (a + rf) * (a + rf + T::one()) * (v / b) * (v / b);
            Ok(dens * self.level(j + 1, m1, m2)?)
        };
        let half = T::of(0.5);
        let lo = try_integrate_1d(&mut f, Bracket::new(T::zero(), half)?, &self.settings)?;
        let hi = try_integrate_1d(&mut f, Bracket::new(half, T::one())?, &self.settings)?;
        Ok(lo + hi)
    }
}

/// `E[1 / Σ_j λ_j l_j]`, the prior mean of the fastest possible unit
/// lifetime; zero when it is not finite (then it bounds nothing useful).
fn fastest_mean_lifetime<T: Real>(priors: &PriorSpec<T>) -> Result<T> {
    let shape: T = priors.alpha.iter().copied().sum();
    if !(shape > T::one()) {
        return Ok(T::zero());
    }
    let f = |s: T| -> Result<T> {
        let mut acc = T::zero();
        for j in 0..priors.risks() {
            acc += priors.alpha[j] * (priors.beta[j] / (priors.beta[j] + priors.l[j] * s)).ln();
        }
        Ok(acc.exp())
    };
    try_integrate_1d(f, Bracket::new(T::zero(), T::infinity())?, &QuadSettings::default())
}

struct Bounds<T> {
    /// Oracle decision loss per `r` (index `r`).
    decision: Vec<T>,
    fastest: T,
    /// `min_r [r v_s + decision[r]]` over all admissible `r`.
    floor: T,
}

impl<T: Real> Bounds<T> {
    fn build(r_max: u32, priors: &PriorSpec<T>, loss: &LossPoly<T>, costs: &CostModel<T>) -> Result<Self> {
        let mut decision = vec![T::zero(); r_max as usize + 1];
        let mut floor = T::infinity();
        for r in 1..=r_max {
            let v = decision_loss_floor(r, priors, loss, costs.c_r)?;
            decision[r as usize] = v;
            floor = floor.min(T::of(r as f64) * costs.v_s + v);
        }
        Ok(Self {
            decision,
            fastest: fastest_mean_lifetime(priors)?,
            floor,
        })
    }

    fn plan_floor(&self, n: u32, r: u32, costs: &CostModel<T>) -> T {
        let harmonic: T = (0..r).map(|i| T::one() / T::of((n - i) as f64)).sum();
        sampling_cost(n, r, costs) + costs.c_t * self.fastest * harmonic + self.decision[r as usize]
    }
}

fn sampling_cost<T: Real>(n: u32, r: u32, costs: &CostModel<T>) -> T {
    T::of(n as f64) * (costs.c_s - costs.v_s) + T::of(r as f64) * costs.v_s
}

// ---------------------------------------------------------------------------
// Search

type TauKey = (u32, u32, u32);

struct Problem<'a, T> {
    priors: &'a PriorSpec<T>,
    loss: &'a LossPoly<T>,
    costs: &'a CostModel<T>,
    config: &'a SearchConfig<T>,
    tau_hi: T,
    tables: DecisionLossCache<T>,
    /// Results of `τ1` searches (or fixed-`τ1` evaluations) keyed by `(n, r, m)`.
    cache: Mutex<HashMap<TauKey, ModeOptimum<T>>>,
    warnings: Mutex<Vec<String>>,
}

impl<'a, T: Real> Problem<'a, T> {
    fn new(
        priors: &'a PriorSpec<T>,
        loss: &'a LossPoly<T>,
        costs: &'a CostModel<T>,
        config: &'a SearchConfig<T>,
    ) -> Result<Self> {
        priors.validate()?;
        loss.validate()?;
        costs.validate()?;
        check_dims(priors, loss)?;
        config.validate()?;
        Ok(Self {
            priors,
            loss,
            costs,
            config,
            tau_hi: config
                .tau1_bracket_hi
                .unwrap_or_else(|| default_tau1_bracket_hi(priors)),
            tables: DecisionLossCache::new(priors, loss, costs.c_r, &config.risk)?,
            cache: Mutex::new(HashMap::new()),
            warnings: Mutex::new(Vec::new()),
        })
    }

    fn evaluate(&self, plan: &Plan<T>) -> Result<PlanEvaluation<T>> {
        self.tables.bayes_risk(plan, self.costs)
    }

    fn best_for(&self, n: u32, r: u32, m: u32) -> Result<ModeOptimum<T>> {
        let key = (n, r, m);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*hit);
        }
        let found = if m == 0 {
            let plan = Plan::new(n, r, 0, T::zero())?;
            ModeOptimum {
                plan,
                eval: self.evaluate(&plan)?,
            }
        } else if let Some(tau) = self.config.fixed_tau {
            let plan = Plan::new(n, r, m, tau)?;
            ModeOptimum {
                plan,
                eval: self.evaluate(&plan)?,
            }
        } else {
            let (tau, _) = self.search_tau(n, r, m)?;
            let plan = Plan::new(n, r, m, tau)?;
            ModeOptimum {
                plan,
                eval: self.evaluate(&plan)?,
            }
        };
        self.cache.lock().expect("cache lock").insert(key, found);
        Ok(found)
    }

    fn search_tau(&self, n: u32, r: u32, m: u32) -> Result<(T, T)> {
        let f = |tau: T| -> Result<T> { Ok(self.evaluate(&Plan::new(n, r, m, tau)?)?.total) };
        let (tau, risk) = minimize_scalar_unimodal(
            f,
            Bracket::new(T::zero(), self.tau_hi)?,
            self.config.tau_tol,
            self.config.grid_points,
        )?;
        if tau >= self.tau_hi - self.config.tau_tol {
            self.warnings.lock().expect("warning lock").push(format!(
                "tau1 minimizer for (n, r, m) = ({n}, {r}, {m}) sits at the bracket edge {}",
                self.tau_hi
            ));
        }
        Ok((tau, risk))
    }

    fn n_cap(&self) -> Result<u32> {
        let bound = n_upper_bound(self.priors, self.loss, self.costs)?;
        Ok(match (self.config.n_max_override, self.config.full_bound) {
            (Some(cap), _) => cap.min(bound),
            (None, true) => bound,
            (None, false) => bound.min(30),
        })
    }

    fn duration_floor(&self, n: u32, r: u32, bounds: &Bounds<T>) -> Result<T> {
        let generic = bounds.plan_floor(n, r, self.costs);
        match self.config.fixed_tau {
            Some(tau) if self.costs.c_t > T::zero() && self.config.mode != PlanFamily::Cbsp => {
                // At a fixed τ1 the all-out accelerated test is the fastest path.
                let plan = Plan::new(n, r, r, tau)?;
                let fast = expected_duration_max_stress(&plan, self.priors)?;
                let harmonic: T = (0..r).map(|i| T::one() / T::of((n - i) as f64)).sum();
                Ok(generic + self.costs.c_t * (fast - bounds.fastest * harmonic).max(T::zero()))
            }
            _ => Ok(generic),
        }
    }

    fn run(&self, mode: PlanFamily, seed: Option<ModeOptimum<T>>) -> Result<OptResult<T>> {
        let n_cap = self.n_cap()?;
        let bounds = Bounds::build(n_cap.max(1), self.priors, self.loss, self.costs)?;
        let (ns_risk, _) = no_sampling_risk(self.priors, self.loss, self.costs);
        let mut best = ModeOptimum {
            plan: Plan::no_sampling(),
            eval: PlanEvaluation::new(T::zero(), T::zero(), T::zero(), ns_risk),
        };
        // Incumbent used only for pruning; it may come from a nested family.
        let mut bar = seed.map_or(ns_risk, |s| s.eval.total.min(ns_risk));
        let mut trace = Vec::new();
        let mut evaluated = 0usize;
        let mut pruned = 0usize;
        let mut n_searched = 0;
        for n in 1..=n_cap {
            if T::of(n as f64) * (self.costs.c_s - self.costs.v_s) + bounds.floor > bar {
                break;
            }
            n_searched = n;
            let mut row: Option<ModeOptimum<T>> = None;
            // Never-accelerated candidates first: they are cheap and tighten the bar.
            for stage in [Stage::Plain, Stage::Raised] {
                let mut candidates = Vec::new();
                for r in 1..=n {
                    let floor = self.duration_floor(n, r, &bounds)?;
                    for m in mode.thresholds(r) {
                        if (m == 0) != (stage == Stage::Plain) {
                            continue;
                        }
                        let floor = if m == 0 { bounds.plan_floor(n, r, self.costs) } else { floor };
                        if floor > bar {
                            pruned += 1;
                        } else {
                            candidates.push((r, m));
                        }
                    }
                }
                let results: Vec<Result<ModeOptimum<T>>> = candidates
                    .par_iter()
                    .map(|&(r, m)| self.best_for(n, r, m))
                    .collect();
                for res in results {
                    let cand = res?;
                    evaluated += 1;
                    if better(&cand, row.as_ref()) {
                        row = Some(cand);
                    }
                    if better(&cand, Some(&best)) {
                        best = cand;
                    }
                    bar = bar.min(cand.eval.total);
                }
            }
            if let Some(r) = row {
                trace.push(TraceRow {
                    n,
                    r: r.plan.r,
                    m: r.plan.m,
                    tau1: r.plan.tau1,
                    risk: r.eval.total,
                });
            }
        }
        Ok(OptResult {
            mode,
            fixed_tau: self.config.fixed_tau,
            best_plan: best.plan,
            best_eval: best.eval,
            per_n_trace: trace,
            comparisons: None,
            n_searched,
            evaluated,
            pruned,
            warnings: self.warnings.lock().expect("warning lock").clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Plain,
    Raised,
}

/// Lower risk wins; exact ties go to smaller `n`, `r`, `m`, then `τ1`.
fn better<T: Real>(cand: &ModeOptimum<T>, incumbent: Option<&ModeOptimum<T>>) -> bool {
    let Some(inc) = incumbent else { return true };
    let (a, b) = (cand.eval.total, inc.eval.total);
    if a != b {
        return a < b;
    }
    let key = |p: &Plan<T>| (p.n, p.r, p.m);
    match key(&cand.plan).cmp(&key(&inc.plan)) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => cand.plan.tau1 < inc.plan.tau1,
    }
}

/// Best `τ1` for fixed `(n, r, m)`; `m = 0` needs no search.
pub fn optimize_tau1<T: Real>(
    n: u32,
    r: u32,
    m: u32,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    costs: &CostModel<T>,
    config: &SearchConfig<T>,
) -> Result<(T, T)> {
    let problem = Problem::new(priors, loss, costs, config)?;
    Plan::new(n, r, m, T::zero())?;
    if n == 0 {
        return Err(Error::invalid("tau1 search needs n >= 1"));
    }
    if m == 0 {
        return Ok((T::zero(), problem.evaluate(&Plan::new(n, r, 0, T::zero())?)?.total));
    }
    problem.search_tau(n, r, m)
}

/// Risk-versus-`τ1` trace for fixed `(n, r, m)` on an even grid of `points`.
pub fn tau1_profile<T: Real>(
    [n, r, m]: [u32; 3],
    tau_hi: T,
    points: usize,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    costs: &CostModel<T>,
    config: &SearchConfig<T>,
) -> Result<Vec<(T, T)>> {
    let problem = Problem::new(priors, loss, costs, config)?;
    if points < 2 || !(tau_hi > T::zero()) {
        return Err(Error::invalid("profile needs at least 2 points on a positive range"));
    }
    let step = tau_hi / T::of_usize(points - 1);
    (0..points)
        .into_par_iter()
        .map(|i| {
            let tau = step * T::of_usize(i);
            let eval = problem.evaluate(&Plan::new(n, r, m, tau)?)?;
            Ok((tau, eval.total))
        })
        .collect()
}

pub fn optimize_plan<T: Real>(
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    costs: &CostModel<T>,
    config: &SearchConfig<T>,
) -> Result<OptResult<T>> {
    let problem = Problem::new(priors, loss, costs, config)?;
    problem.run(config.mode, None)
}

/// Optimizes all three families (sharing `τ1` searches) and reports the
/// optimum of `config.mode` with the comparison attached.
pub fn compare_modes<T: Real>(
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    costs: &CostModel<T>,
    config: &SearchConfig<T>,
) -> Result<OptResult<T>> {
    let problem = Problem::new(priors, loss, costs, config)?;
    let cbsp = problem.run(PlanFamily::Cbsp, None)?;
    let acbsp = problem.run(PlanFamily::Acbsp, None)?;
    let pick = |r: &OptResult<T>| ModeOptimum {
        plan: r.best_plan,
        eval: r.best_eval,
    };
    let seed = if cbsp.best_eval.total <= acbsp.best_eval.total {
        pick(&cbsp)
    } else {
        pick(&acbsp)
    };
    let aabsp = problem.run(PlanFamily::Aabsp, Some(seed))?;
    let comparison = Comparison {
        aabsp: pick(&aabsp),
        acbsp: pick(&acbsp),
        cbsp: pick(&cbsp),
        rrs1: relative_risk_saving(aabsp.best_eval.total, acbsp.best_eval.total),
        rrs2: relative_risk_saving(aabsp.best_eval.total, cbsp.best_eval.total),
    };
    let mut out = match config.mode {
        PlanFamily::Aabsp => aabsp,
        PlanFamily::Acbsp => acbsp,
        PlanFamily::Cbsp => cbsp,
    };
    out.comparisons = Some(comparison);
    out.warnings = problem.warnings.lock().expect("warning lock").clone();
    Ok(out)
}
