use aabsp::numerics::{integrate_1d, ln_gamma, regularized_incomplete_beta, Bracket, QuadSettings};
use statrs::distribution::{ContinuousCDF, Gamma};
use statrs::function::{beta::beta_reg, gamma::ln_gamma as oracle_ln_gamma};

#[test]
fn incomplete_beta_matches_statrs() {
    let mut worst: f64 = 0.0;
    for &a in &[0.3, 1.0, 2.5, 7.0, 31.0, 120.0] {
        for &b in &[0.4, 1.0, 3.3, 12.0, 55.0] {
            for i in 0..=40 {
                let x = i as f64 / 40.0;
                let got = regularized_incomplete_beta(x, a, b).unwrap();
                let want = beta_reg(a, b, x);
                worst = worst.max((got - want).abs() / want.clamp(1e-300, 1.0));
            }
        }
    }
    assert!(worst < 1e-10, "worst relative error {worst:e}");
}

#[test]
fn ln_gamma_matches_statrs() {
    for i in 1..400 {
        let x = 0.05 * i as f64;
        let (got, want) = (ln_gamma(x), oracle_ln_gamma(x));
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "x = {x}: {got} vs {want}");
    }
}

#[test]
fn quadrature_reproduces_gamma_cdf() {
    let s = QuadSettings::<f64>::default();
    for &(shape, rate, t) in &[(2.5, 1.5, 0.7), (9.59, 100.0, 0.05), (0.8, 2.0, 3.0)] {
        let pdf = |x: f64| (shape * f64::ln(rate) + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)).exp();
        let got = integrate_1d(pdf, Bracket::new(0.0, t).unwrap(), &s).unwrap();
        let want = Gamma::new(shape, rate).unwrap().cdf(t);
        assert!((got - want).abs() < 1e-8, "{shape} {rate} {t}: {got} vs {want}");
    }
}
