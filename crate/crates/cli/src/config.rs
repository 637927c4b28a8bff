//! `key = value` config files and flag overrides.

use std::collections::BTreeMap;
use std::path::PathBuf;

use spacetime_fem::study::{ProblemKind, RunConfig};
use spacetime_fem::systems::{Method, SolverKind};

/// Values read from a config file or the command line; unset fields keep
/// the defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub method: Option<Method>,
    pub problem: Option<ProblemKind>,
    pub beta: Option<f64>,
    pub levels: Option<Vec<usize>>,
    pub ref_factor: Option<usize>,
    pub solver: Option<SolverKind>,
    pub out: Option<PathBuf>,
    pub level: Option<usize>,
}

impl Overrides {
    /// `other` wins where set.
    pub fn merged(self, other: Overrides) -> Overrides {
        Overrides {
            method: other.method.or(self.method),
            problem: other.problem.or(self.problem),
            beta: other.beta.or(self.beta),
            levels: other.levels.or(self.levels),
            ref_factor: other.ref_factor.or(self.ref_factor),
            solver: other.solver.or(self.solver),
            out: other.out.or(self.out),
            level: other.level.or(self.level),
        }
    }

    pub fn to_config(&self) -> Result<RunConfig, String> {
        let d = RunConfig::default();
        let c = RunConfig {
            method: self.method.unwrap_or(d.method),
            problem: self.problem.unwrap_or(d.problem),
            beta: self.beta.unwrap_or(d.beta),
            levels: self.levels.clone().unwrap_or(d.levels),
            ref_factor: self.ref_factor.unwrap_or(d.ref_factor),
            solver: self.solver.unwrap_or(d.solver),
        };
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

pub fn parse_levels(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad level '{}'", p.trim())))
        .collect()
}

pub fn parse_config(text: &str) -> Result<Overrides, String> {
    let mut seen = BTreeMap::new();
    let mut o = Overrides::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        let (k, v) = (k.trim().replace('-', "_"), v.trim());
        if seen.insert(k.clone(), lineno).is_some() {
            return Err(format!("line {}: duplicate key '{k}'", lineno + 1));
        }
        let err = |e: String| format!("line {}: {e}", lineno + 1);
        match k.as_str() {
            "method" => o.method = Some(v.parse().map_err(|e: spacetime_fem::Error| err(e.to_string()))?),
            "problem" => o.problem = Some(v.parse().map_err(|e: spacetime_fem::Error| err(e.to_string()))?),
            "solver" => o.solver = Some(v.parse().map_err(|e: spacetime_fem::Error| err(e.to_string()))?),
            "beta" => o.beta = Some(v.parse().map_err(|_| err(format!("bad beta '{v}'")))?),
            "levels" => o.levels = Some(parse_levels(v).map_err(err)?),
            "ref_factor" => o.ref_factor = Some(v.parse().map_err(|_| err(format!("bad ref_factor '{v}'")))?),
            "level" => o.level = Some(v.parse().map_err(|_| err(format!("bad level '{v}'")))?),
            "out" => o.out = Some(PathBuf::from(v)),
            _ => return Err(err(format!("unknown key '{k}'"))),
        }
    }
    Ok(o)
}
