//! Data reduction, maximum-likelihood fitting, simulation of adaptive
//! tests and the Monte Carlo Bayes-risk oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{bayes_decision, FailureCounts, SuffStats};
use crate::error::{Error, Result};
use crate::model::{check_dims, no_sampling_risk, CostModel, LossPoly, Plan, PriorSpec, Theta};
use crate::risk::realized_loss;
use crate::scalar::Real;

/// How the test was terminated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regime<T> {
    /// Stopped at the `r`-th failure.
    Type2 { r: u32 },
    /// Stopped at time `tau2`.
    Type1 { tau2: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord<T> {
    pub time: T,
    /// 1-based cause label.
    pub cause: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset<T> {
    pub n: u32,
    pub tau1: T,
    pub causes: usize,
    pub regime: Regime<T>,
    pub records: Vec<FailureRecord<T>>,
    pub stress_changed: bool,
}

impl<T: Real> RawDataset<T> {
    pub fn new(
        n: u32,
        tau1: T,
        causes: usize,
        regime: Regime<T>,
        mut records: Vec<FailureRecord<T>>,
        stress_changed: bool,
    ) -> Result<Self> {
        records.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap_or(std::cmp::Ordering::Equal));
        let data = Self {
            n,
            tau1,
            causes,
            regime,
            records,
            stress_changed,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.causes == 0 {
            return Err(Error::invalid("dataset needs at least one cause"));
        }
        if !(self.tau1 >= T::zero()) || !self.tau1.is_finite() {
            return Err(Error::invalid("tau1 must be finite and nonnegative"));
        }
        if self.records.len() > self.n as usize {
            return Err(Error::invalid(format!(
                "{} failures recorded but only {} units on test",
                self.records.len(),
                self.n
            )));
        }
        for (i, rec) in self.records.iter().enumerate() {
            if !(rec.time >= T::zero()) || !rec.time.is_finite() {
                return Err(Error::invalid(format!("record {i}: time {} is not finite and nonnegative", rec.time)));
            }
            if rec.cause == 0 || rec.cause > self.causes {
                return Err(Error::invalid(format!(
                    "record {i}: cause {} outside 1..={}",
                    rec.cause, self.causes
                )));
            }
        }
        match self.regime {
            Regime::Type2 { r } => {
                if self.records.len() != r as usize {
                    return Err(Error::invalid(format!(
                        "type-II data needs exactly r = {r} records, found {}",
                        self.records.len()
                    )));
                }
            }
            Regime::Type1 { tau2 } => {
                if !(tau2 >= T::zero()) || !tau2.is_finite() {
                    return Err(Error::invalid("tau2 must be finite and nonnegative"));
                }
                if let Some(rec) = self.records.iter().find(|rec| rec.time > tau2) {
                    return Err(Error::invalid(format!(
                        "failure at {} after the type-I termination time {tau2}",
                        rec.time
                    )));
                }
            }
        }
        Ok(())
    }

    /// Time the test ended.
    pub fn end_time(&self) -> T {
        match self.regime {
            Regime::Type2 { .. } => self.records.last().map_or(T::zero(), |rec| rec.time),
            Regime::Type1 { tau2 } => tau2,
        }
    }

    fn passed_tau1(&self) -> bool {
        self.end_time() > self.tau1
    }

    /// Sufficient statistics with the recorded stress indicator.
    pub fn stats(&self) -> Result<SuffStats<T>> {
        self.validate()?;
        let end = self.end_time();
        let mut d1 = vec![0u32; self.causes];
        let mut d2 = vec![0u32; self.causes];
        let (mut pre, mut post) = (T::zero(), T::zero());
        let split = self.passed_tau1();
        for rec in &self.records {
            if split && rec.time > self.tau1 {
                d2[rec.cause - 1] += 1;
                post += rec.time - self.tau1;
            } else {
                d1[rec.cause - 1] += 1;
                pre += rec.time;
            }
        }
        let failed: u32 = d1.iter().sum::<u32>() + d2.iter().sum::<u32>();
        let survivors = T::of((self.n - failed) as f64);
        let (w1, w2) = if split {
            let before: u32 = d1.iter().sum();
            (
                pre + T::of((self.n - before) as f64) * self.tau1,
                post + survivors * (end - self.tau1),
            )
        } else {
            (pre + survivors * end, T::zero())
        };
        let delta = split && self.stress_changed;
        SuffStats::new(w1, w2, FailureCounts::new(d1, d2)?, delta)
    }
}

/// Sufficient statistics of a type-II adaptive test run under `plan`.
pub fn suff_stats<T: Real>(data: &RawDataset<T>, plan: &Plan<T>) -> Result<SuffStats<T>> {
    if data.n != plan.n {
        return Err(Error::invalid(format!("dataset has n = {}, plan has n = {}", data.n, plan.n)));
    }
    if plan.m > 0 && data.tau1 != plan.tau1 {
        return Err(Error::invalid(format!(
            "dataset has tau1 = {}, plan has tau1 = {}",
            data.tau1, plan.tau1
        )));
    }
    if let Regime::Type2 { r } = data.regime {
        if r != plan.r {
            return Err(Error::invalid(format!("dataset stops at r = {r}, plan at r = {}", plan.r)));
        }
    }
    let stats = data.stats()?;
    let delta = data.passed_tau1() && plan.elevates(stats.counts.pre());
    if data.passed_tau1() && delta != data.stress_changed {
        return Err(Error::invalid(format!(
            "recorded stress change ({}) contradicts the plan's rule with d1 = {} and m = {}",
            data.stress_changed,
            stats.counts.pre(),
            plan.m
        )));
    }
    SuffStats::new(stats.w1, stats.w2, stats.counts, delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult<T> {
    pub lambda_hat: Vec<T>,
    /// `None` when no elevated-stress data identifies the factor.
    pub phi_hat: Vec<Option<T>>,
    /// Causes seen only after the stress change: only `λ_j φ_j = d2j / w2`
    /// is identified.
    pub unidentified: Vec<usize>,
}

impl<T: Real> MleResult<T> {
    /// Survival at `t`, treating an unidentified factor as an error.
    pub fn reliability(&self, tau1: T, t: T, component: Component) -> Result<T> {
        let phi = self
            .phi_hat
            .iter()
            .enumerate()
            .map(|(j, p)| p.ok_or_else(|| Error::invalid(format!("phi_{} is not identified", j + 1))))
            .collect::<Result<Vec<T>>>()?;
        reliability_curve(&self.lambda_hat, &phi, tau1, t, component)
    }
}

/// Closed-form maximizer of `Π_j λ_j^{d+j} φ_j^{d2j} exp{−λ_j (w1 + φ_j w2)}`:
/// `λ̂_j = d1j / w1`, `φ̂_j = d2j w1 / (d1j w2)`.
pub fn fit_mle<T: Real>(data: &RawDataset<T>) -> Result<MleResult<T>> {
    let stats = data.stats()?;
    if !(stats.w1 > T::zero()) {
        return Err(Error::invalid("MLE needs positive pre-change exposure w1"));
    }
    let j = data.causes;
    let mut lambda_hat = Vec::with_capacity(j);
    let mut phi_hat = Vec::with_capacity(j);
    let mut unidentified = Vec::new();
    for k in 0..j {
        let (d1, d2) = (stats.counts.d1[k], stats.counts.d2[k]);
        lambda_hat.push(T::of(d1 as f64) / stats.w1);
        let phi = if stats.delta && stats.w2 > T::zero() && d1 > 0 {
            Some(T::of(d2 as f64) * stats.w1 / (T::of(d1 as f64) * stats.w2))
        } else {
            if d1 == 0 && d2 > 0 {
                unidentified.push(k + 1);
            }
            None
        };
        phi_hat.push(phi);
    }
    Ok(MleResult {
        lambda_hat,
        phi_hat,
        unidentified,
    })
}

/// Log-likelihood of the reduced data.
pub fn log_likelihood<T: Real>(stats: &SuffStats<T>, lambda: &[T], phi: &[T]) -> T {
    let mut acc = T::zero();
    for k in 0..lambda.len() {
        let (d1, d2) = (stats.counts.d1[k] as f64, stats.counts.d2[k] as f64);
        let (l, p) = (lambda[k], if stats.delta { phi[k] } else { T::one() });
        acc += T::of(d1 + d2) * l.ln() + T::of(d2) * p.ln() - l * (stats.w1 + p * stats.w2);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    /// 0-based cause index.
    Cause(usize),
    Unit,
}

/// Survival under the cumulative exposure model with one change at `τ1`.
pub fn reliability_curve<T: Real>(lambda: &[T], phi: &[T], tau1: T, t: T, component: Component) -> Result<T> {
    if !(t >= T::zero()) {
        return Err(Error::invalid("reliability needs t >= 0"));
    }
    if lambda.len() != phi.len() || lambda.is_empty() {
        return Err(Error::invalid("rates and factors must be nonempty and of equal length"));
    }
    let exposure = |p: T| if t <= tau1 { t } else { tau1 + p * (t - tau1) };
    let hazard = match component {
        Component::Cause(j) => {
            if j >= lambda.len() {
                return Err(Error::invalid(format!("cause index {j} out of range")));
            }
            lambda[j] * exposure(phi[j])
        }
        Component::Unit => lambda.iter().zip(phi).map(|(l, p)| *l * exposure(*p)).sum(),
    };
    Ok((-hazard).exp())
}

// ---------------------------------------------------------------------------
// Simulation

/// One simulated adaptive test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTest<T> {
    pub data: RawDataset<T>,
    pub stats: SuffStats<T>,
    /// Time of the `r`-th failure.
    pub t_r: T,
}

/// Generator for replication `rep` of a run seeded with `seed`; each
/// replication owns a separate ChaCha stream.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// `λ_j ~ Gamma(α_j, β_j)`, `φ_j ~ U(1, l_j)`.
pub fn sample_theta<T: Real, R: rand::Rng + ?Sized>(priors: &PriorSpec<T>, rng: &mut R) -> Theta<T> {
    let j = priors.risks();
    let mut lambda = Vec::with_capacity(j);
    let mut phi = Vec::with_capacity(j);
    for k in 0..j {
        let mut l = T::sample_gamma(rng, priors.alpha[k], priors.beta[k]);
        if !(l > T::zero()) {
            l = T::min_positive_value();
        }
        lambda.push(l);
        phi.push(T::one() + (priors.l[k] - T::one()) * T::sample_unit(rng));
    }
    Theta { lambda, phi }
}

/// Runs the adaptive type-II test with latent cause-specific exponentials;
/// residual exposure beyond `τ1` runs `φ_j` times faster when stress is raised.
pub fn simulate_with<T: Real, R: rand::Rng + ?Sized>(
    theta: &Theta<T>,
    plan: &Plan<T>,
    rng: &mut R,
) -> Result<SimulatedTest<T>> {
    if plan.is_no_sampling() {
        return Err(Error::invalid("cannot simulate the no-sampling plan"));
    }
    let j = theta.risks();
    let n = plan.n as usize;
    // Unaccelerated latent failure time per unit and cause.
    let latent: Vec<Vec<T>> = (0..n)
        .map(|_| theta.lambda.iter().map(|l| T::sample_exp1(rng) / *l).collect())
        .collect();
    let tau1 = plan.tau1;
    let first = |times: &[T], phi: Option<&[T]>| -> (T, usize) {
        let mut best = (T::infinity(), 0);
        for (k, &x) in times.iter().enumerate() {
            let t = match phi {
                Some(p) if x > tau1 => tau1 + (x - tau1) / p[k],
                _ => x,
            };
            if t < best.0 {
                best = (t, k);
            }
        }
        best
    };
    let plain: Vec<(T, usize)> = latent.iter().map(|row| first(row, None)).collect();
    let d1 = plain.iter().filter(|(t, _)| *t <= tau1).count() as u32;
    let delta = d1 < plan.r && plan.elevates(d1);
    let mut failures: Vec<(T, usize)> = if delta {
        latent.iter().map(|row| first(row, Some(&theta.phi))).collect()
    } else {
        plain
    };
    failures.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    failures.truncate(plan.r as usize);
    let t_r = failures.last().map_or(T::zero(), |f| f.0);
    let records = failures
        .iter()
        .map(|&(time, k)| FailureRecord { time, cause: k + 1 })
        .collect();
    let data = RawDataset::new(plan.n, tau1, j, Regime::Type2 { r: plan.r }, records, delta)?;
    let stats = suff_stats(&data, plan)?;
    Ok(SimulatedTest { data, stats, t_r })
}

/// [`simulate_with`] on a generator seeded from `seed`.
pub fn simulate_dataset<T: Real>(theta: &Theta<T>, plan: &Plan<T>, seed: u64) -> Result<SimulatedTest<T>> {
    simulate_with(theta, plan, &mut replication_rng(seed, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate<T> {
    pub estimate: T,
    pub std_error: T,
    pub reps: usize,
}

/// Monte Carlo Bayes risk: draw `θ` from the priors, run the test, apply the
/// Bayes decision and average the realized loss.
pub fn mc_bayes_risk<T: Real>(
    plan: &Plan<T>,
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    costs: &CostModel<T>,
    reps: usize,
    seed: u64,
) -> Result<McEstimate<T>> {
    check_dims(priors, loss)?;
    costs.validate()?;
    if reps < 1000 {
        return Err(Error::invalid(format!("Monte Carlo risk needs at least 1000 replications, got {reps}")));
    }
    if plan.is_no_sampling() {
        let (risk, _) = no_sampling_risk(priors, loss, costs);
        return Ok(McEstimate {
            estimate: risk,
            std_error: T::zero(),
            reps,
        });
    }
    let losses = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep as u64);
            let theta = sample_theta(priors, &mut rng);
            let sim = simulate_with(&theta, plan, &mut rng)?;
            let action = bayes_decision(&sim.stats, priors, loss, costs.c_r)?;
            Ok(realized_loss(&sim.stats, action, &theta, plan, costs, loss, sim.t_r).to_f64_lossy())
        })
        .collect::<Result<Vec<f64>>>()?;
    let count = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / count;
    let var = losses.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1.0);
    Ok(McEstimate {
        estimate: T::of(mean),
        std_error: T::of((var / count).sqrt()),
        reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAUSE1: [f64; 13] = [
        0.140, 1.582, 4.612, 5.002, 5.112, 5.147, 5.238, 5.244, 5.247, 5.305, 5.407, 5.445, 5.483,
    ];
    const CAUSE2: [f64; 18] = [
        0.783, 1.324, 1.716, 1.794, 1.883, 2.293, 2.660, 2.674, 2.725, 3.085, 3.924, 4.396, 4.892, 5.022,
        5.082, 5.337, 5.408, 5.717,
    ];

    fn solar() -> RawDataset<f64> {
        let records = CAUSE1
            .iter()
            .map(|&time| FailureRecord { time, cause: 1 })
            .chain(CAUSE2.iter().map(|&time| FailureRecord { time, cause: 2 }))
            .collect();
        RawDataset::new(35, 5.0, 2, Regime::Type1 { tau2: 6.0 }, records, true).unwrap()
    }

    #[test]
    fn solar_device_statistics() {
        let s = solar().stats().unwrap();
        assert_eq!(s.counts.d1, vec![3, 13]);
        assert_eq!(s.counts.d2, vec![10, 5]);
        assert!((s.w1 - 135.483).abs() < 1e-9, "{}", s.w1);
        assert!((s.w2 - 8.196).abs() < 1e-9, "{}", s.w2);
        assert!(s.delta);
    }

    #[test]
    fn solar_device_mle() {
        let fit = fit_mle(&solar()).unwrap();
        assert!((fit.lambda_hat[0] - 0.0222).abs() < 5e-4);
        assert!((fit.lambda_hat[1] - 0.0960).abs() < 5e-4);
        assert!((fit.phi_hat[0].unwrap() / 55.10 - 1.0).abs() < 5e-3);
        assert!((fit.phi_hat[1].unwrap() / 6.358 - 1.0).abs() < 5e-3);
        assert!(fit.unidentified.is_empty());
    }

    #[test]
    fn mle_is_a_stationary_point() {
        let data = solar();
        let stats = data.stats().unwrap();
        let fit = fit_mle(&data).unwrap();
        let lam = fit.lambda_hat.clone();
        let phi: Vec<f64> = fit.phi_hat.iter().map(|p| p.unwrap()).collect();
        let best = log_likelihood(&stats, &lam, &phi);
        for k in 0..2 {
            for h in [1e-4, -1e-4] {
                let mut l2 = lam.clone();
                l2[k] *= 1.0 + h;
                assert!(log_likelihood(&stats, &l2, &phi) < best);
                let mut p2 = phi.clone();
                p2[k] *= 1.0 + h;
                assert!(log_likelihood(&stats, &lam, &p2) < best);
            }
        }
    }

    #[test]
    fn type2_statistics_by_hand() {
        let records = vec![
            FailureRecord { time: 0.5, cause: 2 },
            FailureRecord { time: 1.5, cause: 1 },
            FailureRecord { time: 0.2, cause: 1 },
        ];
        let data: RawDataset<f64> = RawDataset::new(5, 1.0, 2, Regime::Type2 { r: 3 }, records, true).unwrap();
        assert_eq!(data.records[0].time, 0.2);
        let plan = Plan::new(5, 3, 3, 1.0).unwrap();
        let s = suff_stats(&data, &plan).unwrap();
        assert_eq!(s.counts.d1, vec![1, 1]);
        assert_eq!(s.counts.d2, vec![1, 0]);
        assert!((s.w1 - (0.2 + 0.5 + 3.0)).abs() < 1e-15);
        assert!((s.w2 - (0.5 + 2.0 * 0.5)).abs() < 1e-15);
        assert!(s.delta);
        let unraised = Plan::new(5, 3, 2, 1.0).unwrap();
        assert!(suff_stats(&data, &unraised).is_err());
    }

    #[test]
    fn test_ending_before_tau1_has_no_post_change_data() {
        let records = vec![FailureRecord { time: 0.3, cause: 1 }, FailureRecord { time: 0.6, cause: 1 }];
        let data: RawDataset<f64> = RawDataset::new(4, 1.0, 1, Regime::Type2 { r: 2 }, records, false).unwrap();
        let s = suff_stats(&data, &Plan::new(4, 2, 2, 1.0).unwrap()).unwrap();
        assert_eq!(s.w2, 0.0);
        assert!((s.w1 - (0.9 + 2.0 * 0.6)).abs() < 1e-15);
        assert!(!s.delta);
    }

    #[test]
    fn plan_mismatch_is_rejected() {
        let records = vec![FailureRecord { time: 0.3, cause: 1 }];
        let data = RawDataset::new(4, 1.0, 1, Regime::Type2 { r: 1 }, records, false).unwrap();
        assert!(suff_stats(&data, &Plan::new(5, 1, 0, 0.0).unwrap()).is_err());
        assert!(suff_stats(&data, &Plan::new(4, 2, 0, 0.0).unwrap()).is_err());
        assert!(suff_stats(&data, &Plan::new(4, 1, 1, 2.0).unwrap()).is_err());
    }

    #[test]
    fn invalid_datasets() {
        let rec = |time, cause| FailureRecord { time, cause };
        assert!(RawDataset::new(3, 1.0, 2, Regime::Type2 { r: 1 }, vec![rec(0.1, 3)], false).is_err());
        assert!(RawDataset::new(3, 1.0, 2, Regime::Type2 { r: 1 }, vec![rec(0.1, 0)], false).is_err());
        assert!(RawDataset::new(3, 1.0, 2, Regime::Type2 { r: 2 }, vec![rec(0.1, 1)], false).is_err());
        assert!(RawDataset::new(1, 1.0, 2, Regime::Type2 { r: 2 }, vec![rec(0.1, 1), rec(0.2, 1)], false).is_err());
        assert!(RawDataset::new(3, 1.0, 2, Regime::Type1 { tau2: 2.0 }, vec![rec(2.5, 1)], false).is_err());
        assert!(RawDataset::new(3, 1.0, 2, Regime::Type2 { r: 1 }, vec![rec(f64::NAN, 1)], false).is_err());
    }

    #[test]
    fn cause_seen_only_after_change_is_unidentified() {
        let rec = |time, cause| FailureRecord { time, cause };
        let data = RawDataset::new(6, 1.0, 2, Regime::Type2 { r: 3 }, vec![rec(0.4, 1), rec(1.2, 2), rec(1.3, 1)], true).unwrap();
        let fit = fit_mle(&data).unwrap();
        assert_eq!(fit.unidentified, vec![2]);
        assert_eq!(fit.phi_hat[1], None);
        assert!(fit.reliability(1.0, 2.0, Component::Unit).is_err());
    }

    #[test]
    fn reliability_identities() {
        let (lam, phi) = ([0.1f64, 0.3], [4.0f64, 2.0]);
        let unit = reliability_curve(&lam, &phi, 2.0, 3.0, Component::Unit).unwrap();
        let c0 = reliability_curve(&lam, &phi, 2.0, 3.0, Component::Cause(0)).unwrap();
        let c1 = reliability_curve(&lam, &phi, 2.0, 3.0, Component::Cause(1)).unwrap();
        assert!((unit - c0 * c1).abs() < 1e-15);
        assert!((c0 - (-0.1f64 * (2.0 + 4.0)).exp()).abs() < 1e-15);
        let at = reliability_curve(&lam, &phi, 2.0, 2.0, Component::Unit).unwrap();
        let after = reliability_curve(&lam, &phi, 2.0, 2.0 + 1e-12, Component::Unit).unwrap();
        assert!((at - after).abs() < 1e-11);
        assert_eq!(reliability_curve(&lam, &phi, 2.0, 0.0, Component::Unit).unwrap(), 1.0);
        assert!(reliability_curve(&lam, &phi, 2.0, 1.0, Component::Cause(2)).is_err());
        assert!(reliability_curve(&lam, &phi, 2.0, -1.0, Component::Unit).is_err());
    }

    #[test]
    fn simulation_follows_the_plan() {
        let theta = Theta::new(vec![0.4, 0.9], vec![3.0, 5.0]).unwrap();
        for seed in 0..200 {
            let plan = Plan::new(8, 5, 3, 0.3).unwrap();
            let sim = simulate_dataset(&theta, &plan, seed).unwrap();
            assert_eq!(sim.data.records.len(), 5);
            assert_eq!(sim.t_r, sim.data.records[4].time);
            let d1 = sim.data.records.iter().filter(|r| r.time <= 0.3).count() as u32;
            assert_eq!(sim.stats.counts.pre(), d1);
            assert_eq!(sim.stats.delta, d1 < 3);
            assert_eq!(sim, simulate_dataset(&theta, &plan, seed).unwrap());
        }
        let sim = simulate_dataset(&theta, &Plan::new(4, 2, 1, 0.0).unwrap(), 3).unwrap();
        assert!(sim.stats.delta);
        assert_eq!(sim.stats.w1, 0.0);
        assert!(simulate_dataset(&theta, &Plan::no_sampling(), 0).is_err());
    }

    #[test]
    fn replication_streams_are_distinct_and_stable() {
        use rand::Rng;
        let a: u64 = replication_rng(5, 0).random();
        let b: u64 = replication_rng(5, 1).random();
        let c: u64 = replication_rng(6, 0).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, replication_rng(5, 0).random::<u64>());
    }

    #[test]
    fn prior_draws_have_prior_means() {
        let priors = PriorSpec::new(vec![2.5, 13.0], vec![1.5, 135.44], vec![10.0, 11.718]).unwrap();
        let reps = 100_000;
        let mut sums = [0.0f64; 4];
        for rep in 0..reps {
            let t = sample_theta(&priors, &mut replication_rng(1, rep));
            sums[0] += t.lambda[0];
            sums[1] += t.lambda[1];
            sums[2] += t.phi[0];
            sums[3] += t.phi[1];
            assert!(t.phi.iter().zip(&priors.l).all(|(p, l)| *p >= 1.0 && p <= l));
        }
        let k = reps as f64;
        let want = [2.5 / 1.5, 13.0 / 135.44, 5.5, 6.359];
        let sd = [2.5f64.sqrt() / 1.5, 13.0f64.sqrt() / 135.44, 9.0 / 12f64.sqrt(), 10.718 / 12f64.sqrt()];
        for i in 0..4 {
            assert!((sums[i] / k - want[i]).abs() < 4.0 * sd[i] / k.sqrt(), "component {i}");
        }
    }

    #[test]
    fn monte_carlo_risk_contract() {
        let priors = PriorSpec::new(vec![2.5], vec![1.5], vec![10.0]).unwrap();
        let loss = LossPoly::new(2.0, vec![3.0], vec![vec![4.0]]).unwrap();
        let costs = CostModel::new(0.5, 0.25, 5.0, 0.1, 12.0).unwrap();
        let plan = Plan::new(3, 2, 1, 0.2).unwrap();
        assert!(mc_bayes_risk(&plan, &priors, &loss, &costs, 999, 0).is_err());
        let a = mc_bayes_risk(&plan, &priors, &loss, &costs, 5000, 9).unwrap();
        let b = mc_bayes_risk(&plan, &priors, &loss, &costs, 5000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.std_error > 0.0);
        let none = mc_bayes_risk(&Plan::no_sampling(), &priors, &loss, &costs, 1000, 0).unwrap();
        assert_eq!(none.estimate, no_sampling_risk(&priors, &loss, &costs).0);
        assert_eq!(none.std_error, 0.0);
    }
}
