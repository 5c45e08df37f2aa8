//! Scenario files: one TOML document describing the swarm, tasks, radio,
//! learning hyperparameters and strategy. Physical quantities carry unit
//! suffixes (see [`units`](super::units)).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::units::{hertz, joules, meters, ratio, seconds, watts, watts_per_hz};
use crate::alloc::BcdOptions;
use crate::error::{Error, Result};
use crate::fl::{SuiteConfig, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationStrategy {
    /// Two-stage drift-plus-penalty heuristic.
    Proposed,
    Aou,
    ChannelAware,
    Random,
    /// Exhaustive search; tiny scenarios only.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingStrategy {
    Affinity,
    AllShared,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySelector {
    pub association: AssociationStrategy,
    pub sharing: SharingStrategy,
}

impl Default for StrategySelector {
    fn default() -> Self {
        StrategySelector { association: AssociationStrategy::Proposed, sharing: SharingStrategy::Affinity }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmConfig {
    pub num_uavs: usize,
    /// Side of the square the UAVs are scattered over.
    #[serde(with = "meters")]
    pub area: f64,
    #[serde(with = "meters::pair")]
    pub altitude: [f64; 2],
    /// EV positions, one per task; random in the area when absent.
    #[serde(default, with = "meters::pairs", skip_serializing_if = "Option::is_none")]
    pub ev_xy: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    #[serde(with = "ratio")]
    pub alpha0: f64,
    pub path_loss_exponent: f64,
    pub mu_nlos: f64,
    pub a_env: f64,
    pub b_env: f64,
    #[serde(with = "watts_per_hz")]
    pub noise_psd: f64,
    #[serde(with = "hertz")]
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    /// Energy budget per UAV over the whole horizon.
    #[serde(with = "joules")]
    pub e_max: f64,
    #[serde(with = "watts::pair")]
    pub p_max: [f64; 2],
    #[serde(with = "hertz::pair")]
    pub f_max: [f64; 2],
    #[serde(with = "ratio")]
    pub energy_coeff: f64,
    #[serde(with = "seconds")]
    pub deadline: f64,
    /// CPU cycles per training FLOP, scaling the model's FLOP count into
    /// cycles per sample.
    pub cycles_per_flop: f64,
    /// Bits per parameter in an upload.
    pub bits_per_param: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kinds: Vec<TaskKind>,
    /// Minimum UAVs per task each round.
    pub min_uavs: Vec<usize>,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub classes: usize,
    pub total_samples: usize,
    pub min_shard: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub label_noise: f64,
    pub nuisance_scale: f64,
    pub domain_shift: f64,
    pub val_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub local_iters: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub full_batch: bool,
    /// Loss EMA factor for task attention.
    pub varpi: f64,
    /// Shapley EMA factor.
    pub kappa: f64,
    /// Affinity EMA factor.
    pub ell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub bcd_max_iters: usize,
    pub bcd_rel_tol: f64,
    /// Largest `M^N` the infeasible-round fallback will enumerate.
    pub fallback_search_limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub rounds: usize,
    /// Drift-plus-penalty tradeoff weight.
    pub v: f64,
    #[serde(default)]
    pub strategy: StrategySelector,
    pub swarm: SwarmConfig,
    pub radio: RadioConfig,
    pub energy: EnergyConfig,
    pub tasks: TaskConfig,
    pub learning: LearningConfig,
    pub solver: SolverConfig,
}

/// The stock scenario; also what `uav-mtfl simulate` runs without a file.
pub const DEFAULT_SCENARIO: &str = r#"
seed = 1
rounds = 100
v = 1.0

[strategy]
association = "proposed"
sharing = "affinity"

[swarm]
num_uavs = 10
area = "1 km"
altitude = ["100 m", "150 m"]
ev_xy = [["150 m", "500 m"], ["500 m", "500 m"], ["850 m", "500 m"]]

[radio]
alpha0 = "-60 dB"
path_loss_exponent = 2.7
mu_nlos = 0.2
a_env = 9.61
b_env = 0.16
noise_psd = "-174 dBm/Hz"
bandwidth = "10 MHz"

[energy]
e_max = "0.1 J"
p_max = ["0.2 W", "1 W"]
f_max = ["1 GHz", "2 GHz"]
energy_coeff = "1e-28"
deadline = "3 s"
cycles_per_flop = 300.0
bits_per_param = 64.0

[tasks]
kinds = [{ correlated = { domain = 0 } }, { correlated = { domain = 1 } }, "conflicting"]
min_uavs = [2, 2, 2]
input_dim = 24
latent_dim = 4
classes = 4
total_samples = 3000
min_shard = 32
alpha1 = 5.0
alpha2 = 5.0
label_noise = 0.05
nuisance_scale = 3.0
domain_shift = 2.0
val_size = 256
test_size = 1000

[learning]
hidden = [32, 3]
lr = 0.1
local_iters = 5
batch_size = 64
full_batch = false
varpi = 0.8
kappa = 0.8
ell = 0.8

[solver]
bcd_max_iters = 100
bcd_rel_tol = 1e-6
fallback_search_limit = 4096
"#;

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::from_toml_str(DEFAULT_SCENARIO).expect("stock scenario parses")
    }
}

/// Reads `value` as TOML when it parses as a bare value, else as a string.
fn override_value(raw: &str) -> toml::Value {
    let probe = format!("x = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("x").expect("probe key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `key.path=value` overrides to a TOML tree.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        let (last, parents) = keys.split_last().expect("split yields one key");
        let mut table = &mut *doc;
        for k in parents {
            table = table
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override path {path:?} crosses a non-table at {k:?}")))?;
        }
        table.insert(last.to_string(), override_value(raw.trim()));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::with_overrides(s, &[])
    }

    /// Parses `s`, applies the `key=value` overrides, then validates.
    pub fn with_overrides(s: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = s.parse().map_err(|e| Error::Config(format!("scenario file: {e}")))?;
        apply_overrides(&mut doc, overrides)?;
        let cfg: ScenarioConfig =
            toml::Value::Table(doc).try_into().map_err(|e| Error::Config(format!("scenario: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::with_overrides(&std::fs::read_to_string(path)?, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.kinds.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let m = self.num_tasks();
        if self.tasks.min_uavs.len() != m {
            return bad(format!("min_uavs needs {m} entries"));
        }
        let need: usize = self.tasks.min_uavs.iter().sum();
        if need > self.swarm.num_uavs {
            return bad(format!("per-task minimums need {need} uavs, swarm has {}", self.swarm.num_uavs));
        }
        if let Some(ev) = &self.swarm.ev_xy {
            if ev.len() != m {
                return bad(format!("ev_xy needs {m} positions"));
            }
        }
        let ranges = [("altitude", self.swarm.altitude), ("p_max", self.energy.p_max), ("f_max", self.energy.f_max)];
        for (name, [lo, hi]) in ranges {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("{name} range must satisfy 0 < low <= high"));
            }
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return bad(format!("V must be finite and non-negative, got {}", self.v));
        }
        if !(self.energy.e_max > 0.0 && self.energy.cycles_per_flop > 0.0 && self.energy.bits_per_param > 0.0) {
            return bad("energy budget, cycles_per_flop and bits_per_param must be positive".into());
        }
        if !(self.swarm.area > 0.0) {
            return bad("area must be positive".into());
        }
        if m > crate::attention::MAX_SHAPLEY_TASKS {
            return bad(format!("{m} tasks exceed the exact Shapley limit"));
        }
        self.suite().validate()
    }

    pub fn suite(&self) -> SuiteConfig {
        let t = &self.tasks;
        SuiteConfig {
            input_dim: t.input_dim,
            latent_dim: t.latent_dim,
            classes: t.classes,
            tasks: t.kinds.clone(),
            num_uavs: self.swarm.num_uavs,
            total_samples: t.total_samples,
            min_shard: t.min_shard,
            alpha1: t.alpha1,
            alpha2: t.alpha2,
            label_noise: t.label_noise,
            nuisance_scale: t.nuisance_scale,
            domain_shift: t.domain_shift,
            val_size: t.val_size,
            test_size: t.test_size,
        }
    }

    pub fn bcd_options(&self) -> BcdOptions {
        BcdOptions { max_iters: self.solver.bcd_max_iters, rel_tol: self.solver.bcd_rel_tol, ..BcdOptions::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stock_scenario_parses_to_si() {
        let c = ScenarioConfig::default();
        assert_eq!(c.radio.bandwidth, 10e6);
        assert_eq!(c.swarm.area, 1000.0);
        assert!((c.radio.alpha0 - 1e-6).abs() < 1e-18);
        assert_eq!(c.energy.f_max, [1e9, 2e9]);
        assert_eq!(c.tasks.kinds[2], TaskKind::Conflicting);
    }

    #[test]
    fn serialized_config_reads_back() {
        let c = ScenarioConfig::default();
        let again = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let o = [
            "v=100".to_string(),
            "radio.bandwidth=20 MHz".to_string(),
            "strategy.sharing=none".to_string(),
            "tasks.min_uavs=[1,1,1]".to_string(),
        ];
        let c = ScenarioConfig::with_overrides(DEFAULT_SCENARIO, &o).unwrap();
        assert_eq!(c.v, 100.0);
        assert_eq!(c.radio.bandwidth, 20e6);
        assert_eq!(c.strategy.sharing, SharingStrategy::None);
        assert_eq!(c.tasks.min_uavs, vec![1, 1, 1]);
    }

    #[test]
    fn unit_and_shape_errors() {
        let bad_unit = ["radio.bandwidth=10 W".to_string()];
        assert!(ScenarioConfig::with_overrides(DEFAULT_SCENARIO, &bad_unit).is_err());
        let too_many = ["tasks.min_uavs=[4,4,4]".to_string()];
        assert!(ScenarioConfig::with_overrides(DEFAULT_SCENARIO, &too_many).is_err());
        let typo = ["radio.bandwith=1 MHz".to_string()];
        assert!(ScenarioConfig::with_overrides(DEFAULT_SCENARIO, &typo).is_err());
        assert!(ScenarioConfig::with_overrides(DEFAULT_SCENARIO, &["novalue".to_string()]).is_err());
    }
}
