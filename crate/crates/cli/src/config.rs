use crate::CliError;
use clap::Args;
use fragqite::{HamiltonianClass, Mode, Primitive};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Experiment configuration, read from JSON and then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub classes: Vec<HamiltonianClass>,
    pub n: Vec<usize>,
    pub instances: usize,
    pub eps: Vec<f64>,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_points: usize,
    pub primitive: Primitive,
    pub mode: Mode,
    pub r_max: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            classes: vec![HamiltonianClass::WeightedMaxcut],
            n: vec![6, 8, 10, 12],
            instances: 50,
            eps: vec![1e-1, 1e-2, 1e-3],
            beta_min: 1.0,
            beta_max: 1e4,
            beta_points: 25,
            primitive: Primitive::P1,
            mode: Mode::Gibbs,
            r_max: 12,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

/// Flags shared by every experiment command.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated Hamiltonian classes.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Qubit counts: a comma list and/or inclusive ranges such as `6-12`.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    pub beta_min: Option<f64>,
    #[arg(long)]
    pub beta_max: Option<f64>,
    #[arg(long)]
    pub beta_points: Option<usize>,
    #[arg(long)]
    pub primitive: Option<String>,
    /// `pure` or `gibbs`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub rmax: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn parse_n_list(s: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (
                    a.parse().map_err(|_| config_err(format!("bad range `{part}`")))?,
                    b.parse().map_err(|_| config_err(format!("bad range `{part}`")))?,
                );
                if a > b {
                    return Err(config_err(format!("empty range `{part}`")));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| config_err(format!("bad qubit count `{part}`")))?),
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut c = Self::load(o.config.as_deref())?;
        if let Some(cl) = &o.classes {
            c.classes = cl
                .iter()
                .map(|s| s.parse::<HamiltonianClass>().map_err(|e| config_err(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        if let Some(n) = &o.n {
            c.n = parse_n_list(n)?;
        }
        if let Some(v) = o.instances {
            c.instances = v;
        }
        if let Some(v) = &o.eps {
            c.eps = v.clone();
        }
        if let Some(v) = o.beta_min {
            c.beta_min = v;
        }
        if let Some(v) = o.beta_max {
            c.beta_max = v;
        }
        if let Some(v) = o.beta_points {
            c.beta_points = v;
        }
        if let Some(v) = &o.primitive {
            c.primitive = v.parse().map_err(|e: fragqite::Error| config_err(e.to_string()))?;
        }
        if let Some(v) = &o.mode {
            c.mode = match v.as_str() {
                "pure" => Mode::Pure,
                "gibbs" => Mode::Gibbs,
                _ => return Err(config_err(format!("unknown mode `{v}`"))),
            };
        }
        if let Some(v) = o.rmax {
            c.r_max = v;
        }
        if let Some(v) = o.seed {
            c.seed = v;
        }
        if let Some(v) = &o.out {
            c.out = v.clone();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.classes.is_empty() || self.n.is_empty() || self.eps.is_empty() {
            return Err(config_err("classes, n and eps must be nonempty"));
        }
        if self.classes.contains(&HamiltonianClass::Custom) {
            return Err(config_err("the custom class cannot be generated"));
        }
        if let Some(bad) = self.n.iter().find(|&&n| !(2..=fragqite::hamiltonians::MAX_QUBITS).contains(&n)) {
            return Err(config_err(format!("qubit count {bad} outside 2..=15")));
        }
        if self.instances == 0 || self.beta_points == 0 || self.r_max == 0 {
            return Err(config_err("instances, beta_points and r_max must be positive"));
        }
        if self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(config_err("every eps must lie in (0, 1)"));
        }
        if !(self.beta_min > 0.0) || !(self.beta_max >= self.beta_min) || !self.beta_max.is_finite() {
            return Err(config_err("need 0 < beta_min <= beta_max"));
        }
        if self.beta_points > 1 && self.beta_max == self.beta_min {
            return Err(config_err("a multi-point grid needs beta_max > beta_min"));
        }
        Ok(())
    }

    /// Log-spaced inverse temperatures.
    pub fn beta_grid(&self) -> Vec<f64> {
        if self.beta_points == 1 {
            return vec![self.beta_min];
        }
        let (lo, hi) = (self.beta_min.ln(), self.beta_max.ln());
        let m = (self.beta_points - 1) as f64;
        (0..self.beta_points).map(|i| (lo + (hi - lo) * i as f64 / m).exp()).collect()
    }

    /// Deterministic seed of instance `i` in a (class, N) cell.
    pub fn instance_seed(&self, class: HamiltonianClass, n: usize, i: usize) -> u64 {
        let class_idx = HamiltonianClass::ALL.iter().position(|&c| c == class).unwrap_or(0) as u64;
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(class_idx << 40)
            .wrapping_add((n as u64) << 24)
            .wrapping_add(i as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_ranges() {
        assert_eq!(parse_n_list("2,4-6").unwrap(), vec![2, 4, 5, 6]);
        assert!(parse_n_list("6-4").is_err());
        assert!(parse_n_list("x").is_err());
    }

    #[test]
    fn grid_endpoints() {
        let c = ExperimentConfig { beta_min: 1.0, beta_max: 100.0, beta_points: 3, ..Default::default() };
        let g = c.beta_grid();
        assert!((g[1] - 10.0).abs() < 1e-12 && (g[2] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_eps() {
        let c = ExperimentConfig { eps: vec![1.5], ..Default::default() };
        assert!(c.validate().is_err());
    }
}
