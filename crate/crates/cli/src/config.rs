use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

fn bad(key: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("`{key}`: {msg}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    InvariantSet,
    PressureUlam,
    PressureSeparated,
    EscapeRateMc,
    Shadow,
    PeriodicOrbit,
    #[serde(rename = "rate-R0")]
    #[value(name = "rate-R0")]
    RateR0,
    RateSweep,
    HenonDemo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    #[value(name = "henon")]
    Henon,
    #[value(name = "henon_scalar")]
    HenonScalar,
    #[value(name = "linear_toy")]
    LinearToy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Candidates {
    /// Periodic points: all points of period `candidate_period` for Hénon,
    /// the periodic orbit found from `seed_point` otherwise.
    Periodic,
    /// Cell centres of the uncontrolled maximal invariant set. These sample
    /// a neighbourhood of the invariant set rather than the set itself and
    /// bias the estimate upwards.
    InvariantSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Region,
    Fiber,
}

/// Every knob of a run. Missing values are filled with per-command defaults
/// by [`RunConfig::resolve`]; the resolved config is written next to the
/// results and can be fed back with `--config`.
#[derive(Clone, Debug, Default, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,

    /// henon, henon_scalar or linear_toy.
    #[arg(long, value_name = "NAME")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    /// Hénon parameter `a`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Hénon parameter `b`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Control bound ε (also the stabilization envelope for rate-sweep).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,

    /// Region as `lo0,hi0,lo1,hi1,…`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<f64>>,
    /// Scales the region about its centre.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region_scale: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    /// Refinement rounds for invariant sets.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_min: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_cell: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Bowen-metric separation for pressure-separated.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Candidates>,
    /// Period of the candidate periodic points.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate_period: Option<usize>,
    /// Backward steps used to pull the unstable direction.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backward_steps: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,

    /// Symbolic code of a Hénon periodic orbit (`0`/`1` characters).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub itinerary: Option<String>,
    /// Seed state for periodic-orbit search on non-Hénon systems.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_point: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    /// Size of the perturbation applied before shadowing.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Periods of the orbit used as the shadowing window.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,

    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Dump the symbol log of one run per rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol_log: Option<bool>,

    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string().trim_end().to_string()))
    }

    /// Values set in `other` win.
    pub fn overlay(&mut self, other: &RunConfig) {
        overlay!(
            self, other, command, system, a, b, eps, region, region_scale, resolution, horizon, tau_min, tau_max,
            samples, samples_per_cell, seed, separation, candidates, candidate_period, backward_steps, domain,
            itinerary, seed_point, period, alpha, cycles, rates, trials, delta, steps, symbol_log, out_dir
        );
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills per-command defaults and validates every key.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        use Command::*;
        let command = self.command.ok_or_else(|| bad("command", "no command given"))?;
        let system = match self.system.as_deref().unwrap_or("henon") {
            "henon" => SystemName::Henon,
            "henon_scalar" => SystemName::HenonScalar,
            "linear_toy" => SystemName::LinearToy,
            other => return Err(bad("system", format!("unknown system `{other}` (henon, henon_scalar, linear_toy)"))),
        };
        if command == HenonDemo && system != SystemName::Henon {
            return Err(bad("system", "henon-demo runs on the planar Hénon system only"));
        }
        let henon = system != SystemName::LinearToy;
        if !henon && (self.a.is_some() || self.b.is_some()) {
            return Err(bad("a", "parameters a and b apply to Hénon systems only"));
        }
        let stab = matches!(command, RateSweep | RateR0);
        let eps = self.eps.unwrap_or(if stab { 0.1 } else { 0.08 });
        positive("eps", eps)?;
        let region_scale = self.region_scale.unwrap_or(1.0);
        positive("region_scale", region_scale)?;
        if let Some(r) = &self.region {
            if r.len() != 4 || r.chunks(2).any(|p| !(p[0] < p[1]) || !p[0].is_finite() || !p[1].is_finite()) {
                return Err(bad("region", "expected lo0,hi0,lo1,hi1 with lo < hi"));
            }
        }
        let resolution = self.resolution.unwrap_or(match command {
            PressureUlam | HenonDemo => 1024,
            _ => 512,
        });
        if !resolution.is_power_of_two() || resolution < 2 {
            return Err(bad("resolution", "must be a power of two ≥ 2"));
        }
        let (tmin, tmax) = match command {
            PressureSeparated => (2, 10),
            _ => (4, 12),
        };
        let tau_min = self.tau_min.unwrap_or(tmin);
        let tau_max = self.tau_max.unwrap_or(tmax);
        if tau_min == 0 || tau_min >= tau_max {
            return Err(bad("tau_min", "need 0 < tau_min < tau_max"));
        }
        let samples = self.samples.unwrap_or(2_000_000);
        let samples_per_cell = self.samples_per_cell.unwrap_or(100);
        let itinerary = self.itinerary.clone().unwrap_or_else(|| "1".into());
        if itinerary.is_empty() || itinerary.chars().any(|c| c != '0' && c != '1') {
            return Err(bad("itinerary", "must be a nonempty string of 0 and 1"));
        }
        let separation = self.separation.unwrap_or(0.5);
        positive("separation", separation)?;
        let candidates = self.candidates.unwrap_or(Candidates::Periodic);
        let candidate_period = self.candidate_period.unwrap_or(14);
        if !(1..=24).contains(&candidate_period) {
            return Err(bad("candidate_period", "must lie in 1..=24"));
        }
        let alpha = self.alpha.unwrap_or(1e-3);
        positive("alpha", alpha)?;
        let delta = self.delta.unwrap_or(1e-3);
        positive("delta", delta)?;
        let trials = self.trials.unwrap_or(50);
        if trials == 0 {
            return Err(bad("trials", "must be positive"));
        }
        if let Some(r) = &self.rates {
            if r.is_empty() || r.iter().any(|v| !(*v > 0.0)) || r.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(bad("rates", "must be positive and strictly increasing"));
            }
        }
        if let Some(p) = &self.seed_point {
            if p.len() != 2 {
                return Err(bad("seed_point", "expected two coordinates"));
            }
        }
        let out_dir = self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));

        let effective = RunConfig {
            command: Some(command),
            system: Some(match system {
                SystemName::Henon => "henon",
                SystemName::HenonScalar => "henon_scalar",
                SystemName::LinearToy => "linear_toy",
            }
            .into()),
            a: if henon { Some(self.a.unwrap_or(5.0)) } else { None },
            b: if henon { Some(self.b.unwrap_or(0.3)) } else { None },
            eps: Some(eps),
            region: self.region.clone(),
            region_scale: Some(region_scale),
            resolution: Some(resolution),
            horizon: Some(self.horizon.unwrap_or(40)),
            tau_min: Some(tau_min),
            tau_max: Some(tau_max),
            samples: Some(samples),
            samples_per_cell: Some(samples_per_cell),
            seed: Some(self.seed.unwrap_or(0)),
            separation: Some(separation),
            candidates: Some(candidates),
            candidate_period: Some(candidate_period),
            backward_steps: Some(self.backward_steps.unwrap_or(12)),
            domain: Some(self.domain.unwrap_or(Domain::Region)),
            itinerary: Some(itinerary),
            seed_point: self.seed_point.clone(),
            period: Some(self.period.unwrap_or(1).max(1)),
            alpha: Some(alpha),
            cycles: Some(self.cycles.unwrap_or(1).max(1)),
            rates: self.rates.clone(),
            trials: Some(trials),
            delta: Some(delta),
            steps: Some(self.steps.unwrap_or(10_000)),
            symbol_log: Some(self.symbol_log.unwrap_or(false)),
            out_dir: Some(out_dir),
        };
        Ok(Resolved { command, system, cfg: effective })
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive, got {v}")))
    }
}

/// A validated config with every optional knob filled in.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub command: Command,
    pub system: SystemName,
    pub cfg: RunConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("resolutoin = 3").unwrap_err();
        assert!(err.0.contains("resolutoin"), "{}", err.0);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = RunConfig::from_toml("command = \"rate-R0\"\nsystem = \"linear_toy\"").unwrap();
        c.overlay(&RunConfig { eps: Some(0.2), ..Default::default() });
        let r = c.resolve().unwrap();
        assert_eq!(r.cfg.eps, Some(0.2));
        let again = RunConfig::from_toml(&r.cfg.to_toml()).unwrap().resolve().unwrap();
        assert_eq!(again.cfg.to_toml(), r.cfg.to_toml());
    }

    #[test]
    fn bad_values_name_their_key() {
        let c = RunConfig { command: Some(Command::PressureUlam), resolution: Some(100), ..Default::default() };
        assert!(c.resolve().unwrap_err().0.contains("`resolution`"));
        let c = RunConfig { command: Some(Command::Shadow), system: Some("lorenz".into()), ..Default::default() };
        assert!(c.resolve().unwrap_err().0.contains("`system`"));
    }
}
