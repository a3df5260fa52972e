//! Pearson goodness of fit of simulated `(W1, W2, D)` against `joint_density`.

use aabsp::datalab::{replication_rng, simulate_with};
use aabsp::decision::FailureCounts;
use aabsp::numerics::{try_integrate_1d, try_integrate_pieces, Bracket, QuadSettings};
use aabsp::risk::joint_density;
use aabsp::{Plan, Theta};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub struct GofReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Total probability mass of the enumerated cells.
    pub mass: f64,
}

struct Cell {
    counts: FailureCounts,
    w1: (f64, f64),
    w2: (f64, f64),
    prob: f64,
}

fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|head| {
            compositions(total - head, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, head);
                rest
            })
        })
        .collect()
}

fn cells(plan: &Plan, theta: &Theta) -> Vec<Cell> {
    let j = theta.risks();
    let (n, r, tau1) = (plan.n, plan.r, plan.tau1);
    let cap = n as f64 * tau1;
    let quad = QuadSettings::default().with_rel_tol(1e-10).with_abs_tol(1e-14);
    let mut out = Vec::new();
    for split in compositions(r, 2 * j) {
        let counts = FailureCounts::new(split[..j].to_vec(), split[j..].to_vec()).unwrap();
        let d1 = counts.pre();
        let d2 = counts.post();
        let rate = theta.elevated_rate(plan.elevates(d1));
        let w2_cut = d2 as f64 / rate;
        let w1_lo = if d1 == r { 0.0 } else { (n - d1) as f64 * tau1 };
        let w1_cut = 0.5 * (w1_lo + cap);
        let kinks: Vec<f64> = (0..=n).map(|k| k as f64 * tau1).collect();
        let w1_bins = if d1 == 0 { vec![(cap, cap)] } else { vec![(w1_lo, w1_cut), (w1_cut, cap)] };
        let w2_bins = if d1 == r { vec![(0.0, 0.0)] } else { vec![(0.0, w2_cut), (w2_cut, f64::INFINITY)] };
        for &b1 in &w1_bins {
            for &b2 in &w2_bins {
                let dens = |a: f64, b: f64| joint_density(a, b, &counts, theta, plan).unwrap().value;
                let along_w2 = |a: f64| -> aabsp::Result<f64> {
                    if d1 == r {
                        return Ok(dens(a, 0.0));
                    }
                    try_integrate_1d(|b| Ok(dens(a, b)), Bracket::new(b2.0, b2.1)?, &quad)
                };
                let prob = if d1 == 0 {
                    along_w2(cap).unwrap()
                } else {
                    try_integrate_pieces(along_w2, b1.0, b1.1, &kinks, &quad).unwrap()
                };
                out.push(Cell { counts: counts.clone(), w1: b1, w2: b2, prob });
            }
        }
    }
    out
}

fn contains(c: &Cell, counts: &FailureCounts, w1: f64, w2: f64) -> bool {
    let inside = |x: f64, (lo, hi): (f64, f64)| lo == hi || (x > lo && x <= hi);
    &c.counts == counts && inside(w1, c.w1) && inside(w2, c.w2)
}

/// Draws under `truth`, compares with the density under `model`. Cells with
/// expected count below 5 are pooled into one remainder cell.
pub fn joint_density_gof(plan: &Plan, truth: &Theta, model: &Theta, reps: usize, seed: u64) -> GofReport {
    let cells = cells(plan, model);
    let mass: f64 = cells.iter().map(|c| c.prob).sum();
    let mut observed = vec![0usize; cells.len()];
    for rep in 0..reps {
        let sim = simulate_with(truth, plan, &mut replication_rng(seed, rep as u64)).unwrap();
        let s = &sim.stats;
        let hit = cells
            .iter()
            .position(|c| contains(c, &s.counts, s.w1, s.w2))
            .expect("every outcome falls in a cell");
        observed[hit] += 1;
    }
    let total = reps as f64;
    let (mut stat, mut used) = (0.0, 0usize);
    let (mut rest_obs, mut rest_exp) = (0.0, 0.0);
    for (c, &o) in cells.iter().zip(&observed) {
        let e = c.prob * total;
        if e < 5.0 {
            rest_obs += o as f64;
            rest_exp += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            used += 1;
        }
    }
    if rest_exp > 0.0 {
        stat += (rest_obs - rest_exp).powi(2) / rest_exp;
        used += 1;
    }
    let dof = used - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    GofReport { statistic: stat, dof, p_value, mass }
}
