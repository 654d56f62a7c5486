//! Experiment settings assembled from the config file and `--set` overrides.

use std::path::Path;

use origintrace::config::{Config, ConfigError};
use origintrace::detect::DetectorParams;
use origintrace::evalkit::SweepConfig;
use origintrace::gbdt::GbdtParams;
use origintrace::netsim::{NetworkConfig, Workload};
use origintrace::ntssl::NtsslParams;
use origintrace::txcluster::ClusterParams;

/// Keys of the `[eval]` section.
const EVAL_KEYS: &[&str] = &["coverages", "repeats", "folds", "include_outbound"];

/// Section holding node B's overrides of `[netsim]`/`[workload]` keys for
/// the cross-node experiment.
pub const NODE_B: &str = "node_b";

/// Node B's default: a third of the inbound peers of node A.
pub const NODE_B_INBOUND_DIVISOR: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub network: NetworkConfig,
    pub workload: Workload,
    pub ntssl: NtsslParams,
    pub cluster: ClusterParams,
    pub sweep: SweepConfig,
    pub node_b_network: NetworkConfig,
    pub node_b_workload: Workload,
}

fn known_keys() -> Vec<String> {
    let mut keys = Vec::new();
    let mut add = |section: &str, names: &[&str]| keys.extend(names.iter().map(|k| format!("{section}.{k}")));
    add("netsim", NetworkConfig::KEYS);
    add("workload", Workload::KEYS);
    add("detect", DetectorParams::KEYS);
    add("gbdt", GbdtParams::KEYS);
    add("ntssl", NtsslParams::KEYS);
    add("txcluster", ClusterParams::KEYS);
    add("eval", EVAL_KEYS);
    add(NODE_B, NetworkConfig::KEYS);
    add(NODE_B, Workload::KEYS);
    keys
}

impl Settings {
    /// Loads `path` (if any), applies `overrides` (`section.key=value`) and
    /// builds every module's parameters. `seed` seeds the network; node B
    /// derives its own.
    pub fn load(path: Option<&Path>, overrides: &[String], seed: u64) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        for o in overrides {
            cfg.set_override(o)?;
        }
        let known = known_keys();
        let known: Vec<&str> = known.iter().map(String::as_str).collect();
        cfg.check_known(&known)?;
        Self::from_config(&cfg, seed)
    }

    pub fn from_config(cfg: &Config, seed: u64) -> Result<Self, ConfigError> {
        let mut network = NetworkConfig { seed, ..NetworkConfig::default() };
        network.apply(cfg, "netsim")?;
        let mut workload = Workload::default();
        workload.apply(cfg, "workload")?;

        let mut ntssl = NtsslParams { seed, ..NtsslParams::default() };
        ntssl.detect.apply(cfg, "detect")?;
        ntssl.gbdt.apply(cfg, "gbdt")?;
        ntssl.apply(cfg, "ntssl")?;
        ntssl.detect.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        ntssl.gbdt.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let mut cluster = ClusterParams::default();
        cluster.apply(cfg, "txcluster")?;

        let mut sweep = SweepConfig { seed, ..SweepConfig::default() };
        cfg.read_list_into("eval.coverages", &mut sweep.coverages)?;
        cfg.read_into("eval.repeats", &mut sweep.repeats)?;
        cfg.read_into("eval.folds", &mut sweep.folds)?;
        cfg.read_into("eval.include_outbound", &mut sweep.include_outbound)?;
        sweep.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let mut node_b_network = NetworkConfig {
            seed: origintrace::seed::derive(seed, "node-b", 0),
            target_inbound_capacity: network.target_inbound_capacity / NODE_B_INBOUND_DIVISOR,
            ..network.clone()
        };
        node_b_network.apply(cfg, NODE_B)?;
        let mut node_b_workload = workload.clone();
        node_b_workload.apply(cfg, NODE_B)?;

        Ok(Settings { network, workload, ntssl, cluster, sweep, node_b_network, node_b_workload })
    }
}
