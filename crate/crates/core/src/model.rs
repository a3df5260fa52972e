//! Problem statement: priors, costs, loss polynomial, plan variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Gamma(alpha_j, beta_j) priors on the baseline rates and Uniform(1, l_j)
/// priors on the acceleration factors, one entry per competing risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec<T> {
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub l: Vec<T>,
}

impl<T: Real> PriorSpec<T> {
    pub fn new(alpha: Vec<T>, beta: Vec<T>, l: Vec<T>) -> Result<Self> {
        let p = Self { alpha, beta, l };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.alpha.len();
        if j == 0 {
            return Err(Error::config("priors: at least one risk is required"));
        }
        if self.beta.len() != j || self.l.len() != j {
            return Err(Error::config(format!(
                "priors: alpha, beta, l must have equal length (got {}, {}, {})",
                j,
                self.beta.len(),
                self.l.len()
            )));
        }
        for k in 0..j {
            if !(self.alpha[k] > T::zero()) || !self.alpha[k].is_finite() {
                return Err(Error::config(format!("priors.alpha_{} must be > 0", k + 1)));
            }
            if !(self.beta[k] > T::zero()) || !self.beta[k].is_finite() {
                return Err(Error::config(format!("priors.beta_{} must be > 0", k + 1)));
            }
            if !(self.l[k] > T::one()) || !self.l[k].is_finite() {
                return Err(Error::config(format!("priors.l_{} must be > 1", k + 1)));
            }
        }
        Ok(())
    }

    pub fn risks(&self) -> usize {
        self.alpha.len()
    }

    pub fn mean_rate(&self, j: usize) -> T {
        self.alpha[j] / self.beta[j]
    }

    pub fn second_moment_rate(&self, j: usize) -> T {
        self.alpha[j] * (self.alpha[j] + T::one()) / (self.beta[j] * self.beta[j])
    }

    /// `E[exp(-x * sum_j lambda_j)]` under the Gamma priors.
    pub fn laplace(&self, x: T) -> T {
        let mut acc = T::zero();
        for j in 0..self.risks() {
            acc += self.alpha[j] * (self.beta[j] / (self.beta[j] + x)).ln();
        }
        acc.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel<T> {
    pub c_s: T,
    pub v_s: T,
    pub c_t: T,
    pub c_a: T,
    pub c_r: T,
}

impl<T: Real> CostModel<T> {
    pub fn new(c_s: T, v_s: T, c_t: T, c_a: T, c_r: T) -> Result<Self> {
        let c = Self {
            c_s,
            v_s,
            c_t,
            c_a,
            c_r,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c_s, self.v_s, self.c_t, self.c_a, self.c_r];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("costs: all values must be finite"));
        }
        if !(self.v_s >= T::zero()) {
            return Err(Error::config("costs.v_s must be >= 0"));
        }
        if !(self.c_s > self.v_s) {
            return Err(Error::config("costs.C_s must exceed costs.v_s"));
        }
        if !(self.c_t >= T::zero()) {
            return Err(Error::config("costs.C_t must be >= 0"));
        }
        if !(self.c_a >= T::zero()) {
            return Err(Error::config("costs.C_a must be >= 0"));
        }
        if !(self.c_r > T::zero()) {
            return Err(Error::config("costs.C_r must be > 0"));
        }
        Ok(())
    }
}

/// Quadratic acceptance loss
/// `h(λ) = a_0 + Σ a_j λ_j + Σ_{i ≤ j} a_ij λ_i λ_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoly<T> {
    pub a0: T,
    pub a: Vec<T>,
    /// Row-major upper triangle: `quad[i][j]` for `i <= j`; entries below the
    /// diagonal are ignored.
    pub quad: Vec<Vec<T>>,
}

impl<T: Real> LossPoly<T> {
    pub fn new(a0: T, a: Vec<T>, quad: Vec<Vec<T>>) -> Result<Self> {
        let p = Self { a0, a, quad };
        p.validate()?;
        Ok(p)
    }

    pub fn constant(a0: T, risks: usize) -> Result<Self> {
        Self::new(a0, vec![T::zero(); risks], vec![vec![T::zero(); risks]; risks])
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.a.len();
        if self.quad.len() != j || self.quad.iter().any(|row| row.len() != j) {
            return Err(Error::config(format!(
                "loss: quadratic table must be {j}x{j} to match the linear coefficients"
            )));
        }
        if !(self.a0 >= T::zero()) || !self.a0.is_finite() {
            return Err(Error::config("loss.a_0 must be >= 0"));
        }
        for (i, v) in self.a.iter().enumerate() {
            if !(*v >= T::zero()) || !v.is_finite() {
                return Err(Error::config(format!("loss.a_{} must be >= 0", i + 1)));
            }
        }
        for i in 0..j {
            for k in i..j {
                let v = self.quad[i][k];
                if !(v >= T::zero()) || !v.is_finite() {
                    return Err(Error::config(format!("loss.a_{}_{} must be >= 0", i + 1, k + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn risks(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, lambda: &[T]) -> T {
        let j = self.risks();
        let mut h = self.a0;
        for i in 0..j {
            h += self.a[i] * lambda[i];
            for k in i..j {
                h += self.quad[i][k] * lambda[i] * lambda[k];
            }
        }
        h
    }

    /// Evaluates `h` with `λ_j` replaced by first moments `m1[j]` and
    /// `λ_j²` by second moments `m2[j]` (independent components).
    pub fn eval_moments(&self, m1: &[T], m2: &[T]) -> T {
        let j = self.risks();
        let mut h = self.a0;
        for i in 0..j {
            h += self.a[i] * m1[i];
            h += self.quad[i][i] * m2[i];
            for k in (i + 1)..j {
                h += self.quad[i][k] * m1[i] * m1[k];
            }
        }
        h
    }

    pub fn is_constant(&self) -> bool {
        self.a.iter().all(|v| *v == T::zero())
            && self.quad.iter().flatten().all(|v| *v == T::zero())
    }
}

/// Design variables `(n, r, m, τ1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plan<T> {
    pub n: u32,
    pub r: u32,
    pub m: u32,
    pub tau1: T,
}

impl<T: Real> Plan<T> {
    /// Validates `m ≤ r ≤ n`, `τ1 ≥ 0`; `m = 0` normalizes `τ1` to 0.
    pub fn new(n: u32, r: u32, m: u32, tau1: T) -> Result<Self> {
        if !(m <= r && r <= n) {
            return Err(Error::invalid(format!(
                "plan needs 0 <= m <= r <= n, got (n, r, m) = ({n}, {r}, {m})"
            )));
        }
        if !(tau1 >= T::zero()) || !tau1.is_finite() {
            return Err(Error::invalid(format!("plan needs tau1 >= 0, got {tau1}")));
        }
        if n > 0 && r == 0 {
            return Err(Error::invalid("a sampling plan needs r >= 1"));
        }
        let tau1 = if m == 0 { T::zero() } else { tau1 };
        Ok(Self { n, r, m, tau1 })
    }

    pub fn no_sampling() -> Self {
        Self {
            n: 0,
            r: 0,
            m: 0,
            tau1: T::zero(),
        }
    }

    pub fn is_no_sampling(&self) -> bool {
        self.n == 0
    }

    /// Stress indicator for a path with `d1` failures before `τ1`.
    pub fn elevates(&self, d1: u32) -> bool {
        d1 < self.m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta<T> {
    pub lambda: Vec<T>,
    pub phi: Vec<T>,
}

impl<T: Real> Theta<T> {
    pub fn new(lambda: Vec<T>, phi: Vec<T>) -> Result<Self> {
        if lambda.is_empty() || lambda.len() != phi.len() {
            return Err(Error::invalid("theta: lambda and phi must be nonempty and of equal length"));
        }
        if lambda.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::invalid("theta: lambda_j must be > 0"));
        }
        if phi.iter().any(|v| !(*v >= T::one()) || !v.is_finite()) {
            return Err(Error::invalid("theta: phi_j must be >= 1"));
        }
        Ok(Self { lambda, phi })
    }

    pub fn risks(&self) -> usize {
        self.lambda.len()
    }

    pub fn total_rate(&self) -> T {
        self.lambda.iter().copied().sum()
    }

    pub fn elevated_rate(&self, delta: bool) -> T {
        if delta {
            self.lambda.iter().zip(&self.phi).map(|(l, p)| *l * *p).sum()
        } else {
            self.total_rate()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Accept,
    Reject,
}

pub(crate) fn check_dims<T: Real>(priors: &PriorSpec<T>, loss: &LossPoly<T>) -> Result<()> {
    priors.validate()?;
    loss.validate()?;
    if priors.risks() != loss.risks() {
        return Err(Error::config(format!(
            "priors describe {} risks but the loss polynomial has {}",
            priors.risks(),
            loss.risks()
        )));
    }
    Ok(())
}

/// Prior expectation of the acceptance loss, `E[h(λ)]`.
pub fn expected_acceptance_loss<T: Real>(priors: &PriorSpec<T>, loss: &LossPoly<T>) -> T {
    let j = priors.risks();
    let m1: Vec<T> = (0..j).map(|k| priors.mean_rate(k)).collect();
    let m2: Vec<T> = (0..j).map(|k| priors.second_moment_rate(k)).collect();
    loss.eval_moments(&m1, &m2)
}

/// `min{E[h], C_r}` and the matching action; ties accept.
pub fn no_sampling_risk<T: Real>(
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    costs: &CostModel<T>,
) -> (T, Action) {
    let eh = expected_acceptance_loss(priors, loss);
    if eh <= costs.c_r {
        (eh, Action::Accept)
    } else {
        (costs.c_r, Action::Reject)
    }
}

/// Largest sample size that can beat the no-sampling plan on sampling cost alone.
pub fn n_upper_bound<T: Real>(
    priors: &PriorSpec<T>,
    loss: &LossPoly<T>,
    costs: &CostModel<T>,
) -> Result<u32> {
    let margin = costs.c_s - costs.v_s;
    if !(margin > T::zero()) {
        return Err(Error::config("n upper bound undefined unless C_s > v_s"));
    }
    let (best, _) = no_sampling_risk(priors, loss, costs);
    let bound = (best / margin).floor().to_f64_lossy();
    Ok(bound.clamp(0.0, u32::MAX as f64) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1() -> (PriorSpec<f64>, LossPoly<f64>, CostModel<f64>) {
        (
            PriorSpec::new(vec![2.5, 2.2], vec![1.5, 2.0], vec![10.0, 10.0]).unwrap(),
            LossPoly::new(2.0, vec![3.0, 3.0], vec![vec![4.0, 4.0], vec![0.0, 4.0]]).unwrap(),
            CostModel::new(0.5, 0.25, 5.0, 0.1, 40.0).unwrap(),
        )
    }

    #[test]
    fn acceptance_loss_example() {
        let (p, l, _) = ex1();
        // 2 + 3(5/3) + 3(1.1) + 4(5/3)(1.1) + 4(2.5·3.5/2.25) + 4(2.2·3.2/4)
        let oracle = 2.0 + 5.0 + 3.3 + 4.0 * (5.0 / 3.0) * 1.1 + 4.0 * 8.75 / 2.25 + 4.0 * 7.04 / 4.0;
        assert!((expected_acceptance_loss(&p, &l) - oracle).abs() < 1e-12);
        assert!((oracle - 40.228_889).abs() < 1e-6);
    }

    #[test]
    fn acceptance_loss_trivial_cases() {
        let p = PriorSpec::<f64>::new(vec![3.0], vec![3.0], vec![2.0]).unwrap();
        let l = LossPoly::constant(7.0, 1).unwrap();
        assert_eq!(expected_acceptance_loss(&p, &l), 7.0);
        let l = LossPoly::new(7.0, vec![1.0], vec![vec![0.0]]).unwrap();
        assert!((expected_acceptance_loss(&p, &l) - 8.0).abs() < 1e-15);
    }

    #[test]
    fn no_sampling_examples() {
        let (p, l, c) = ex1();
        assert_eq!(no_sampling_risk(&p, &l, &c), (40.0, Action::Reject));
        let p1 = PriorSpec::new(vec![1.0], vec![1.0], vec![2.0]).unwrap();
        let l1 = LossPoly::constant(70.0 - 1e-9, 1).unwrap();
        let c1 = CostModel::new(1.0, 0.0, 0.0, 0.0, 70.0).unwrap();
        assert_eq!(no_sampling_risk(&p1, &l1, &c1), (70.0 - 1e-9, Action::Accept));
        let l2 = LossPoly::constant(70.0, 1).unwrap();
        assert_eq!(no_sampling_risk(&p1, &l2, &c1).1, Action::Accept);
    }

    #[test]
    fn n_bound_examples() {
        let (p, l, c) = ex1();
        assert_eq!(n_upper_bound(&p, &l, &c).unwrap(), 160);
        let p1 = PriorSpec::new(vec![1.0], vec![1.0], vec![2.0]).unwrap();
        let l5 = LossPoly::constant(5.0, 1).unwrap();
        let c = CostModel::new(1.0, 0.0, 0.0, 0.0, 100.0).unwrap();
        assert_eq!(n_upper_bound(&p1, &l5, &c).unwrap(), 5);
        let l = LossPoly::constant(4.999, 1).unwrap();
        let c = CostModel::new(5.0, 0.0, 0.0, 0.0, 100.0).unwrap();
        assert_eq!(n_upper_bound(&p1, &l, &c).unwrap(), 0);
        let bad = CostModel {
            c_s: 1.0,
            v_s: 1.0,
            c_t: 0.0,
            c_a: 0.0,
            c_r: 1.0,
        };
        assert!(n_upper_bound(&p1, &l, &bad).is_err());
    }

    #[test]
    fn constructors_reject_invalid_inputs() {
        assert!(PriorSpec::new(vec![1.0], vec![1.0], vec![1.0]).is_err());
        assert!(PriorSpec::<f64>::new(vec![], vec![], vec![]).is_err());
        assert!(CostModel::new(0.2, 0.3, 0.0, 0.0, 1.0).is_err());
        assert!(LossPoly::new(1.0, vec![-1.0], vec![vec![0.0]]).is_err());
        assert!(Plan::new(3, 4, 0, 0.0).is_err());
        assert_eq!(Plan::new(5, 3, 0, 2.0).unwrap().tau1, 0.0);
    }

    #[test]
    fn generic_over_f32() {
        let p = PriorSpec::<f32>::new(vec![2.5, 2.2], vec![1.5, 2.0], vec![10.0, 10.0]).unwrap();
        let l = LossPoly::<f32>::new(2.0, vec![3.0, 3.0], vec![vec![4.0, 4.0], vec![0.0, 4.0]])
            .unwrap();
        assert!((expected_acceptance_loss(&p, &l) - 40.228_89).abs() < 1e-3);
    }
}
