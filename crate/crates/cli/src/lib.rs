//! Command-line front end: configuration, subcommands and reports.

pub mod config;
pub mod data;

use std::fmt::Write as _;
use std::path::PathBuf;

use aabsp::datalab::{
    fit_mle, mc_bayes_risk, replication_rng, sample_theta, simulate_with, suff_stats, Component, Regime,
};
use aabsp::decision::{decide, posterior_expected_loss};
use aabsp::model::Action;
use aabsp::optimizer::{compare_modes, optimize_plan, OptResult, PlanFamily};
use aabsp::risk::bayes_risk;
use aabsp::{Plan, RawDataset, Theta};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("data: {0}")]
    Data(String),
    #[error("io: {0}")]
    Io(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] aabsp::Error),
}

#[derive(Debug, Parser)]
#[command(name = "aabsp", version, about = "Adaptive accelerated Bayesian sampling plans")]
pub struct Cli {
    /// Emit JSON instead of a table.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for the Bayes-risk optimal plan.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_family)]
        mode: Option<PlanFamily>,
        /// Pin τ1 instead of searching it.
        #[arg(long)]
        fixed_tau: Option<f64>,
        /// Also optimize the always- and never-accelerated families and report savings.
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Bayes risk of one plan, by component.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Bayes decision for an observed type-II test.
    Decide {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Maximum-likelihood fit of a step-stress competing-risk dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        tau1: f64,
        /// Type-II termination at the r-th failure.
        #[arg(long)]
        r: Option<u32>,
        /// Type-I termination time.
        #[arg(long)]
        tau2: Option<f64>,
        #[arg(long)]
        causes: Option<usize>,
        /// The stress was never raised.
        #[arg(long)]
        unaccelerated: bool,
        /// Comma-separated times at which to tabulate the fitted reliability.
        #[arg(long, value_delimiter = ',')]
        curve: Vec<f64>,
    },
    /// Simulate adaptive tests and report the Bayes decision for each.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
        /// Comma-separated baseline rates; drawn from the priors when absent.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        /// Comma-separated acceleration factors.
        #[arg(long, value_delimiter = ',')]
        phi: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for one `time,cause` CSV per replication.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of a plan's Bayes risk.
    McRisk {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 200_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compute the analytic risk and check agreement within 3 standard errors.
        #[arg(long)]
        analytic: bool,
    },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct PlanArgs {
    #[arg(long, default_value_t = 0)]
    pub n: u32,
    #[arg(long, default_value_t = 0)]
    pub r: u32,
    /// Raise the stress at τ1 when fewer than m failures have occurred.
    #[arg(long, default_value_t = 0)]
    pub m: u32,
    #[arg(long, default_value_t = 0.0)]
    pub tau1: f64,
}

impl PlanArgs {
    fn plan(&self) -> Result<Plan, CliError> {
        Ok(Plan::new(self.n, self.r, self.m, self.tau1)?)
    }
}

fn parse_family(s: &str) -> Result<PlanFamily, String> {
    config::parse_mode(s).ok_or_else(|| format!("unknown mode `{s}` (expected aabsp, cbsp or acbsp)"))
}

/// Results for stdout and diagnostics for stderr.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub diagnostics: Vec<String>,
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Optimize {
            config,
            mode,
            fixed_tau,
            compare,
            n_max,
        } => {
            let mut cfg = RunConfig::load(config)?;
            if let Some(m) = mode {
                cfg.search.mode = *m;
            }
            if fixed_tau.is_some() {
                cfg.search.fixed_tau = *fixed_tau;
            }
            if n_max.is_some() {
                cfg.search.n_max_override = *n_max;
            }
            cmd_optimize(&cfg, *compare, cli.json)
        }
        Command::Evaluate { config, plan } => {
            let cfg = RunConfig::load(config)?;
            let eval = bayes_risk(&plan.plan()?, &cfg.priors, &cfg.loss, &cfg.costs)?;
            render(cli.json, &eval, || {
                let mut s = String::new();
                writeln!(s, "plan            {}", plan_label(&plan.plan().expect("validated")))?;
                writeln!(s, "sampling cost   {:.6}", eval.sampling_cost)?;
                writeln!(s, "stress cost     {:.6}", eval.stress_cost)?;
                writeln!(s, "time cost       {:.6}", eval.time_cost)?;
                writeln!(s, "decision loss   {:.6}", eval.decision_loss)?;
                writeln!(s, "Bayes risk      {:.6}", eval.total)?;
                Ok(s)
            })
        }
        Command::Decide { config, data, plan } => {
            let cfg = RunConfig::load(config)?;
            cmd_decide(&cfg, data, &plan.plan()?, cli.json)
        }
        Command::Fit {
            data,
            n,
            tau1,
            r,
            tau2,
            causes,
            unaccelerated,
            curve,
        } => {
            let records = data::load_records(data)?;
            let meta = data::DatasetMeta {
                n: *n,
                tau1: *tau1,
                r: *r,
                tau2: *tau2,
                causes: *causes,
                stress_changed: unaccelerated.then_some(false),
            };
            let dataset = data::build_dataset(records, &meta)?;
            cmd_fit(&dataset, curve, cli.json)
        }
        Command::Simulate {
            config,
            plan,
            lambda,
            phi,
            reps,
            seed,
            out,
        } => {
            let cfg = RunConfig::load(config)?;
            let theta = match (lambda.is_empty(), phi.is_empty()) {
                (true, true) => None,
                (false, false) => Some(Theta::new(lambda.clone(), phi.clone())?),
                _ => return Err(CliError::Usage("give both --lambda and --phi, or neither".into())),
            };
            cmd_simulate(&cfg, &plan.plan()?, theta.as_ref(), *reps, *seed, out.as_deref(), cli.json)
        }
        Command::McRisk {
            config,
            plan,
            reps,
            seed,
            analytic,
        } => {
            let cfg = RunConfig::load(config)?;
            cmd_mc_risk(&cfg, &plan.plan()?, *reps, *seed, *analytic, cli.json)
        }
    }
}

fn render<S: Serialize, F: FnOnce() -> Result<String, std::fmt::Error>>(
    json: bool,
    value: &S,
    table: F,
) -> Result<Output, CliError> {
    let stdout = if json {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        s
    } else {
        table().map_err(|e| CliError::Io(e.to_string()))?
    };
    Ok(Output {
        stdout,
        diagnostics: Vec::new(),
    })
}

fn plan_label(p: &Plan) -> String {
    if p.is_no_sampling() {
        "no sampling (0, 0, 0)".into()
    } else if p.m == 0 {
        format!("(n, r, m) = ({}, {}, 0)", p.n, p.r)
    } else {
        format!("(n, r, m, tau1) = ({}, {}, {}, {:.4})", p.n, p.r, p.m, p.tau1)
    }
}

fn family_name(f: PlanFamily) -> &'static str {
    match f {
        PlanFamily::Aabsp => "AABSP",
        PlanFamily::Acbsp => "ACBSP",
        PlanFamily::Cbsp => "CBSP",
    }
}

pub fn cmd_optimize(cfg: &RunConfig, compare: bool, json: bool) -> Result<Output, CliError> {
    let result = if compare {
        compare_modes(&cfg.priors, &cfg.loss, &cfg.costs, &cfg.search)?
    } else {
        optimize_plan(&cfg.priors, &cfg.loss, &cfg.costs, &cfg.search)?
    };
    let mut out = render(json, &result, || optimize_table(&result))?;
    out.diagnostics = result.warnings.clone();
    Ok(out)
}

fn optimize_table(res: &OptResult<f64>) -> Result<String, std::fmt::Error> {
    let mut s = String::new();
    let tau = |p: &Plan| if p.m == 0 { "-".to_string() } else { format!("{:.4}", p.tau1) };
    if let Some(c) = &res.comparisons {
        writeln!(s, "{:<7} {:>3} {:>3} {:>3} {:>8} {:>10}", "family", "n", "r", "m", "tau1", "risk")?;
        for (name, o) in [("AABSP", &c.aabsp), ("ACBSP", &c.acbsp), ("CBSP", &c.cbsp)] {
            writeln!(
                s,
                "{:<7} {:>3} {:>3} {:>3} {:>8} {:>10.4}",
                name,
                o.plan.n,
                o.plan.r,
                o.plan.m,
                tau(&o.plan),
                o.eval.total
            )?;
        }
        writeln!(s, "RRS1 (vs ACBSP) {:.3} %", c.rrs1)?;
        writeln!(s, "RRS2 (vs CBSP)  {:.3} %", c.rrs2)?;
        writeln!(s)?;
    }
    let e = &res.best_eval;
    writeln!(s, "{} optimum     {}", family_name(res.mode), plan_label(&res.best_plan))?;
    if let Some(t) = res.fixed_tau {
        writeln!(s, "fixed tau1        {t}")?;
    }
    writeln!(s, "Bayes risk        {:.6}", e.total)?;
    writeln!(s, "  sampling        {:.6}", e.sampling_cost)?;
    writeln!(s, "  stress          {:.6}", e.stress_cost)?;
    writeln!(s, "  time            {:.6}", e.time_cost)?;
    writeln!(s, "  decision loss   {:.6}", e.decision_loss)?;
    writeln!(
        s,
        "searched n <= {}, {} candidates evaluated, {} pruned",
        res.n_searched, res.evaluated, res.pruned
    )?;
    if !res.per_n_trace.is_empty() {
        writeln!(s, "\nbest per n:")?;
        writeln!(s, "{:>3} {:>3} {:>3} {:>8} {:>10}", "n", "r", "m", "tau1", "risk")?;
        for row in &res.per_n_trace {
            let t = if row.m == 0 { "-".to_string() } else { format!("{:.4}", row.tau1) };
            writeln!(s, "{:>3} {:>3} {:>3} {:>8} {:>10.4}", row.n, row.r, row.m, t, row.risk)?;
        }
    }
    Ok(s)
}

#[derive(Debug, Serialize)]
pub struct DecisionReport {
    pub w1: f64,
    pub w2: f64,
    pub d1: Vec<u32>,
    pub d2: Vec<u32>,
    pub delta: bool,
    pub phi: f64,
    /// `φ − C_r`; negative means accept.
    pub e: f64,
    pub action: Action,
}

fn decision_report(stats: &aabsp::SuffStats, cfg: &RunConfig) -> Result<DecisionReport, CliError> {
    let phi = posterior_expected_loss(stats, &cfg.priors, &cfg.loss)?;
    Ok(DecisionReport {
        w1: stats.w1,
        w2: stats.w2,
        d1: stats.counts.d1.clone(),
        d2: stats.counts.d2.clone(),
        delta: stats.delta,
        phi,
        e: phi - cfg.costs.c_r,
        action: decide(phi, cfg.costs.c_r),
    })
}

pub fn cmd_decide(cfg: &RunConfig, path: &std::path::Path, plan: &Plan, json: bool) -> Result<Output, CliError> {
    let records = data::load_records(path)?;
    let mut times: Vec<f64> = records.iter().map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    let end = times.last().copied().unwrap_or(0.0);
    let d1 = times.iter().filter(|&&t| t <= plan.tau1).count() as u32;
    let changed = end > plan.tau1 && plan.elevates(d1);
    let dataset = RawDataset::new(
        plan.n,
        plan.tau1,
        cfg.priors.risks(),
        Regime::Type2 { r: plan.r },
        records,
        changed,
    )?;
    let stats = suff_stats(&dataset, plan)?;
    let report = decision_report(&stats, cfg)?;
    render(json, &report, || {
        let mut s = String::new();
        writeln!(s, "w1       {:.6}", report.w1)?;
        writeln!(s, "w2       {:.6}", report.w2)?;
        writeln!(s, "d1       {:?}", report.d1)?;
        writeln!(s, "d2       {:?}", report.d2)?;
        writeln!(s, "stress   {}", if report.delta { "raised" } else { "unchanged" })?;
        writeln!(s, "phi      {:.6}", report.phi)?;
        writeln!(s, "e        {:.6}", report.e)?;
        writeln!(s, "decision {}", action_word(report.action))?;
        Ok(s)
    })
}

fn action_word(a: Action) -> &'static str {
    match a {
        Action::Accept => "accept",
        Action::Reject => "reject",
    }
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub w1: f64,
    pub w2: f64,
    pub d1: Vec<u32>,
    pub d2: Vec<u32>,
    pub lambda_hat: Vec<f64>,
    pub phi_hat: Vec<Option<f64>>,
    pub unidentified: Vec<usize>,
    pub curve: Vec<CurveRow>,
}

#[derive(Debug, Serialize)]
pub struct CurveRow {
    pub t: f64,
    pub causes: Vec<f64>,
    pub unit: f64,
}

pub fn cmd_fit(data: &RawDataset, grid: &[f64], json: bool) -> Result<Output, CliError> {
    let stats = data.stats()?;
    let mle = fit_mle(data)?;
    let mut curve = Vec::new();
    if !grid.is_empty() {
        let phi: Vec<f64> = mle.phi_hat.iter().map(|p| p.unwrap_or(1.0)).collect();
        if !mle.unidentified.is_empty() {
            return Err(CliError::Usage(format!(
                "reliability curve needs every acceleration factor; causes {:?} are not identified",
                mle.unidentified
            )));
        }
        for &t in grid {
            let causes = (0..data.causes)
                .map(|j| aabsp::datalab::reliability_curve(&mle.lambda_hat, &phi, data.tau1, t, Component::Cause(j)))
                .collect::<Result<Vec<_>, _>>()?;
            let unit = aabsp::datalab::reliability_curve(&mle.lambda_hat, &phi, data.tau1, t, Component::Unit)?;
            curve.push(CurveRow { t, causes, unit });
        }
    }
    let report = FitReport {
        w1: stats.w1,
        w2: stats.w2,
        d1: stats.counts.d1.clone(),
        d2: stats.counts.d2.clone(),
        lambda_hat: mle.lambda_hat.clone(),
        phi_hat: mle.phi_hat.clone(),
        unidentified: mle.unidentified.clone(),
        curve,
    };
    let mut out = render(json, &report, || {
        let mut s = String::new();
        writeln!(s, "w1 {:.4}  w2 {:.4}  d1 {:?}  d2 {:?}", report.w1, report.w2, report.d1, report.d2)?;
        writeln!(s, "{:>5} {:>12} {:>12}", "cause", "lambda_hat", "phi_hat")?;
        for j in 0..report.lambda_hat.len() {
            let phi = report.phi_hat[j].map_or("-".to_string(), |p| format!("{p:.4}"));
            writeln!(s, "{:>5} {:>12.6} {:>12}", j + 1, report.lambda_hat[j], phi)?;
        }
        if !report.curve.is_empty() {
            writeln!(s, "\nreliability")?;
            write!(s, "{:>8}", "t")?;
            for j in 0..report.lambda_hat.len() {
                write!(s, " {:>9}", format!("cause {}", j + 1))?;
            }
            writeln!(s, " {:>9}", "unit")?;
            for row in &report.curve {
                write!(s, "{:>8.3}", row.t)?;
                for v in &row.causes {
                    write!(s, " {v:>9.5}")?;
                }
                writeln!(s, " {:>9.5}", row.unit)?;
            }
        }
        Ok(s)
    })?;
    out.diagnostics = mle
        .unidentified
        .iter()
        .map(|j| format!("cause {j} fails only after the stress change; only lambda*phi is identified"))
        .collect();
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct SimulationRow {
    pub rep: usize,
    pub lambda: Vec<f64>,
    pub phi: Vec<f64>,
    pub times: Vec<f64>,
    pub causes: Vec<usize>,
    pub decision: DecisionReport,
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    plan: &Plan,
    theta: Option<&Theta>,
    reps: usize,
    seed: u64,
    out_dir: Option<&std::path::Path>,
    json: bool,
) -> Result<Output, CliError> {
    if let Some(t) = theta {
        if t.risks() != cfg.priors.risks() {
            return Err(CliError::Usage(format!(
                "theta has {} causes, the config {}",
                t.risks(),
                cfg.priors.risks()
            )));
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut rows = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut rng = replication_rng(seed, rep as u64);
        let theta = match theta {
            Some(t) => t.clone(),
            None => sample_theta(&cfg.priors, &mut rng),
        };
        let sim = simulate_with(&theta, plan, &mut rng)?;
        if let Some(dir) = out_dir {
            let path = dir.join(format!("rep_{:04}.csv", rep + 1));
            let file = std::fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            data::write_records(file, &sim.data.records)?;
        }
        rows.push(SimulationRow {
            rep: rep + 1,
            lambda: theta.lambda.clone(),
            phi: theta.phi.clone(),
            times: sim.data.records.iter().map(|r| r.time).collect(),
            causes: sim.data.records.iter().map(|r| r.cause).collect(),
            decision: decision_report(&sim.stats, cfg)?,
        });
    }
    render(json, &rows, || {
        let mut s = String::new();
        let j = cfg.priors.risks();
        write!(s, "{:>4}", "i")?;
        for k in 1..=plan.r {
            write!(s, " {:>8}", format!("y{k}"))?;
        }
        for k in 1..=j {
            write!(s, " {:>4}", format!("d1{k}"))?;
        }
        write!(s, " {:>3} {:>6}", "d1", "raise")?;
        for k in 1..=j {
            write!(s, " {:>4}", format!("d2{k}"))?;
        }
        writeln!(s, " {:>10} {:>10} {:>10} {:>3}", "w1", "w2", "e", "a_B")?;
        for row in &rows {
            write!(s, "{:>4}", row.rep)?;
            for t in &row.times {
                write!(s, " {t:>8.3}")?;
            }
            let d = &row.decision;
            for v in &d.d1 {
                write!(s, " {v:>4}")?;
            }
            let d1: u32 = d.d1.iter().sum();
            write!(s, " {:>3} {:>6}", d1, if d.delta { "Yes" } else { "No" })?;
            for v in &d.d2 {
                write!(s, " {v:>4}")?;
            }
            let a_b = if d.action == Action::Accept { 1 } else { 0 };
            writeln!(s, " {:>10.4} {:>10.4} {:>10.3} {:>3}", d.w1, d.w2, d.e, a_b)?;
        }
        Ok(s)
    })
}

#[derive(Debug, Serialize)]
pub struct McReport {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: usize,
    pub analytic: Option<f64>,
    /// `|estimate − analytic| ≤ 3 SE`.
    pub agrees: Option<bool>,
}

pub fn cmd_mc_risk(
    cfg: &RunConfig,
    plan: &Plan,
    reps: usize,
    seed: u64,
    analytic: bool,
    json: bool,
) -> Result<Output, CliError> {
    let mc = mc_bayes_risk(plan, &cfg.priors, &cfg.loss, &cfg.costs, reps, seed)?;
    let exact = if analytic {
        Some(bayes_risk(plan, &cfg.priors, &cfg.loss, &cfg.costs)?.total)
    } else {
        None
    };
    let report = McReport {
        estimate: mc.estimate,
        std_error: mc.std_error,
        reps: mc.reps,
        analytic: exact,
        agrees: exact.map(|a| (mc.estimate - a).abs() <= 3.0 * mc.std_error),
    };
    render(json, &report, || {
        let mut s = String::new();
        writeln!(s, "plan           {}", plan_label(plan))?;
        writeln!(s, "MC estimate    {:.6}", report.estimate)?;
        writeln!(s, "std. error     {:.6}", report.std_error)?;
        writeln!(s, "replications   {}", report.reps)?;
        if let (Some(a), Some(ok)) = (report.analytic, report.agrees) {
            writeln!(s, "analytic       {a:.6}")?;
            writeln!(s, "agreement      {}", if ok { "PASS (within 3 SE)" } else { "FAIL" })?;
        }
        Ok(s)
    })
}
