//! `[priors]`, `[costs]`, `[loss]`, `[search]` configuration files.

use std::collections::BTreeSet;
use std::path::Path;

use aabsp::optimizer::PlanFamily;
use aabsp::{CostModel, LossPoly, PriorSpec, SearchConfig};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub priors: PriorSpec,
    pub costs: CostModel,
    pub loss: LossPoly,
    pub search: SearchConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config {
            path: "<file>".into(),
            msg: e.message().to_string(),
        })?;
        for key in root.keys() {
            if !["priors", "costs", "loss", "search"].contains(&key.as_str()) {
                return Err(config_err(key, "unknown section"));
            }
        }
        let priors_tab = section(&root, "priors")?;
        let risks = count_indexed(priors_tab, "alpha");
        if risks == 0 {
            return Err(config_err("priors.alpha_1", "missing"));
        }
        let mut seen = Seen::new("priors", priors_tab);
        let mut vec_of = |name: &str| -> Result<Vec<f64>, CliError> {
            (1..=risks).map(|j| seen.number(&format!("{name}_{j}"))).collect()
        };
        let alpha = vec_of("alpha")?;
        let beta = vec_of("beta")?;
        let l = vec_of("l")?;
        seen.finish()?;
        let priors = PriorSpec::new(alpha, beta, l).map_err(|e| config_err("priors", &e.to_string()))?;

        let mut seen = Seen::new("costs", section(&root, "costs")?);
        let costs = CostModel {
            c_s: seen.number("C_s")?,
            v_s: seen.number("v_s")?,
            c_t: seen.number("C_t")?,
            c_a: seen.number("C_a")?,
            c_r: seen.number("C_r")?,
        };
        seen.finish()?;
        costs.validate().map_err(|e| config_err("costs", &e.to_string()))?;

        let mut seen = Seen::new("loss", section(&root, "loss")?);
        let a0 = seen.number("a_0")?;
        let a = (1..=risks)
            .map(|j| seen.number(&format!("a_{j}")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut quad = vec![vec![0.0; risks]; risks];
        for (i, row) in quad.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate().skip(i) {
                *slot = seen.number_or(&format!("a_{}_{}", i + 1, j + 1), 0.0)?;
            }
        }
        seen.finish()?;
        let loss = LossPoly::new(a0, a, quad).map_err(|e| config_err("loss", &e.to_string()))?;

        let mut search = SearchConfig::default();
        if let Some(tab) = root.get("search") {
            let tab = tab.as_table().ok_or_else(|| config_err("search", "must be a table"))?;
            let mut seen = Seen::new("search", tab);
            if let Some(mode) = seen.string("mode")? {
                search.mode = parse_mode(&mode).ok_or_else(|| config_err("search.mode", "expected aabsp, cbsp or acbsp"))?;
            }
            search.fixed_tau = seen.optional_number("fixed_tau")?;
            search.n_max_override = seen.optional_count("n_max")?;
            search.tau1_bracket_hi = seen.optional_number("tau_hi")?;
            if let Some(g) = seen.optional_count("grid_points")? {
                search.grid_points = g as usize;
            }
            if let Some(t) = seen.optional_number("tau_tol")? {
                search.tau_tol = t;
            }
            if let Some(b) = seen.optional_bool("full_bound")? {
                search.full_bound = b;
            }
            seen.finish()?;
            search.validate().map_err(|e| config_err("search", &e.to_string()))?;
        }
        Ok(Self {
            priors,
            costs,
            loss,
            search,
        })
    }
}

pub fn parse_mode(s: &str) -> Option<PlanFamily> {
    match s.to_ascii_lowercase().as_str() {
        "aabsp" => Some(PlanFamily::Aabsp),
        "cbsp" => Some(PlanFamily::Cbsp),
        "acbsp" => Some(PlanFamily::Acbsp),
        _ => None,
    }
}

fn config_err(path: &str, msg: &str) -> CliError {
    CliError::Config {
        path: path.to_string(),
        msg: msg.to_string(),
    }
}

fn section<'a>(root: &'a Table, name: &str) -> Result<&'a Table, CliError> {
    root.get(name)
        .ok_or_else(|| config_err(name, "missing section"))?
        .as_table()
        .ok_or_else(|| config_err(name, "must be a table"))
}

fn count_indexed(tab: &Table, stem: &str) -> usize {
    (1..).take_while(|j| tab.contains_key(&format!("{stem}_{j}"))).count()
}

/// Reads keys from one section and rejects whatever is left unread.
struct Seen<'a> {
    name: &'static str,
    tab: &'a Table,
    used: BTreeSet<String>,
}

impl<'a> Seen<'a> {
    fn new(name: &'static str, tab: &'a Table) -> Self {
        Self {
            name,
            tab,
            used: BTreeSet::new(),
        }
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn get(&mut self, key: &str) -> Option<&'a Value> {
        self.used.insert(key.to_string());
        self.tab.get(key)
    }

    fn optional_number(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(config_err(&self.path(key), "expected a number")),
        }
    }

    fn number(&mut self, key: &str) -> Result<f64, CliError> {
        self.optional_number(key)?
            .ok_or_else(|| config_err(&self.path(key), "missing"))
    }

    fn number_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.optional_number(key)?.unwrap_or(default))
    }

    fn optional_count(&mut self, key: &str) -> Result<Option<u32>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 && *i <= u32::MAX as i64 => Ok(Some(*i as u32)),
            Some(_) => Err(config_err(&self.path(key), "expected a nonnegative integer")),
        }
    }

    fn optional_bool(&mut self, key: &str) -> Result<Option<bool>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(config_err(&self.path(key), "expected true or false")),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(config_err(&self.path(key), "expected a string")),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        match self.tab.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(config_err(&self.path(k), "unknown key")),
            None => Ok(()),
        }
    }
}
