use std::str::FromStr;

use crate::config::{Config, ConfigError};

use super::SimError;

/// Topology and timing of the simulated network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Number of background (non-target, non-probe) nodes.
    pub n_nodes: usize,
    pub target_outbound: usize,
    pub target_inbound_capacity: usize,
    /// Share of the inbound capacity occupied by probes.
    pub probe_fraction: f64,
    /// Background nodes that take an inbound slot of the target (not probed).
    pub background_inbound: usize,
    pub background_out_degree: usize,
    /// Outbound links each probe keeps into the background network.
    pub probe_out_degree: usize,
    /// Mean of the exponential announce delay on outbound links, seconds.
    pub mean_delay_out: f64,
    /// Mean of the exponential announce delay on inbound links, seconds.
    pub mean_delay_in: f64,
    /// Wait before requesting an announced tx over an inbound link, seconds.
    pub getdata_inbound_delay: f64,
    /// Transactions originate in `[0, horizon)`; messages are simulated up to
    /// `horizon + drain`.
    pub horizon: f64,
    pub drain: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n_nodes: 1000,
            target_outbound: 10,
            target_inbound_capacity: 114,
            probe_fraction: 1.0,
            background_inbound: 0,
            background_out_degree: 24,
            probe_out_degree: 8,
            mean_delay_out: 2.5,
            mean_delay_in: 5.0,
            getdata_inbound_delay: 2.0,
            horizon: 3600.0,
            drain: 300.0,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub const KEYS: &'static [&'static str] = &[
        "n_nodes",
        "target_outbound",
        "target_inbound_capacity",
        "probe_fraction",
        "background_inbound",
        "background_out_degree",
        "probe_out_degree",
        "mean_delay_out",
        "mean_delay_in",
        "getdata_inbound_delay",
        "horizon",
        "drain",
    ];

    pub fn apply(&mut self, cfg: &Config, section: &str) -> Result<(), ConfigError> {
        let k = |name: &str| format!("{section}.{name}");
        cfg.read_into(&k("n_nodes"), &mut self.n_nodes)?;
        cfg.read_into(&k("target_outbound"), &mut self.target_outbound)?;
        cfg.read_into(&k("target_inbound_capacity"), &mut self.target_inbound_capacity)?;
        cfg.read_into(&k("probe_fraction"), &mut self.probe_fraction)?;
        cfg.read_into(&k("background_inbound"), &mut self.background_inbound)?;
        cfg.read_into(&k("background_out_degree"), &mut self.background_out_degree)?;
        cfg.read_into(&k("probe_out_degree"), &mut self.probe_out_degree)?;
        cfg.read_into(&k("mean_delay_out"), &mut self.mean_delay_out)?;
        cfg.read_into(&k("mean_delay_in"), &mut self.mean_delay_in)?;
        cfg.read_into(&k("getdata_inbound_delay"), &mut self.getdata_inbound_delay)?;
        cfg.read_into(&k("horizon"), &mut self.horizon)?;
        cfg.read_into(&k("drain"), &mut self.drain)?;
        Ok(())
    }

    pub fn n_probes(&self) -> usize {
        super::round_half_up(self.probe_fraction * self.target_inbound_capacity as f64)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Config(m));
        if self.n_nodes == 0 {
            return fail("n_nodes must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.probe_fraction) {
            return fail(format!("probe_fraction {} outside [0, 1]", self.probe_fraction));
        }
        for (name, v) in [
            ("mean_delay_out", self.mean_delay_out),
            ("mean_delay_in", self.mean_delay_in),
            ("getdata_inbound_delay", self.getdata_inbound_delay),
            ("drain", self.drain),
        ] {
            if !v.is_finite() || v < 0.0 {
                return fail(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            return fail(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.target_outbound > self.n_nodes {
            return fail(format!("target_outbound {} exceeds n_nodes {}", self.target_outbound, self.n_nodes));
        }
        if self.n_probes() + self.background_inbound > self.target_inbound_capacity {
            return fail(format!(
                "{} probes plus {} background inbound peers exceed inbound capacity {}",
                self.n_probes(),
                self.background_inbound,
                self.target_inbound_capacity
            ));
        }
        if self.target_outbound + self.background_inbound > self.n_nodes {
            return fail("not enough background nodes for the target's links".into());
        }
        Ok(())
    }
}

/// When the target's own transactions are issued.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Uniform,
    /// Bursts of transactions from one wallet; consecutive members are at most
    /// `intra_gap` seconds apart.
    Clustered { n_clusters: usize, intra_gap: f64 },
}

impl FromStr for Schedule {
    type Err = String;

    /// `uniform` or `clustered:<n_clusters>:<intra_gap>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        match parts.as_slice() {
            ["uniform"] => Ok(Schedule::Uniform),
            ["clustered", n, gap] => Ok(Schedule::Clustered {
                n_clusters: n.parse().map_err(|e| format!("n_clusters: {e}"))?,
                intra_gap: gap.parse().map_err(|e| format!("intra_gap: {e}"))?,
            }),
            _ => Err(format!("expected uniform or clustered:<n>:<gap>, got {s:?}")),
        }
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Schedule::Uniform => f.write_str("uniform"),
            Schedule::Clustered { n_clusters, intra_gap } => write!(f, "clustered:{n_clusters}:{intra_gap}"),
        }
    }
}

/// Synthetic wallet behaviour used to give every transaction chain-layer
/// inputs and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct WalletParams {
    /// Probability that a background session contains several transactions.
    pub background_burst_prob: f64,
    /// Largest background burst.
    pub background_burst_max: usize,
    /// Gap scale between transactions of one background burst, seconds.
    pub background_intra_gap: f64,
    /// Share of background transactions that are equal-output mixes.
    pub coinjoin_fraction: f64,
    pub coinjoin_width: usize,
    /// Probability that a target wallet also spends once through some other
    /// node, far away in time.
    pub stray_prob: f64,
    /// Minimum time separation of such a stray spend, seconds.
    pub stray_separation: f64,
}

impl Default for WalletParams {
    fn default() -> Self {
        WalletParams {
            background_burst_prob: 0.2,
            background_burst_max: 8,
            background_intra_gap: 60.0,
            coinjoin_fraction: 0.005,
            coinjoin_width: 5,
            stray_prob: 0.3,
            stray_separation: 1200.0,
        }
    }
}

/// Transaction arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    /// Network-wide Poisson rate of background transactions, per second.
    pub background_tx_rate: f64,
    pub target_origin_count: usize,
    pub schedule: Schedule,
    pub wallets: WalletParams,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            background_tx_rate: 4.15,
            target_origin_count: 90,
            schedule: Schedule::Uniform,
            wallets: WalletParams::default(),
        }
    }
}

impl Workload {
    pub const KEYS: &'static [&'static str] = &[
        "background_tx_rate",
        "target_origin_count",
        "schedule",
        "background_burst_prob",
        "background_burst_max",
        "background_intra_gap",
        "coinjoin_fraction",
        "coinjoin_width",
        "stray_prob",
        "stray_separation",
    ];

    pub fn apply(&mut self, cfg: &Config, section: &str) -> Result<(), ConfigError> {
        let k = |name: &str| format!("{section}.{name}");
        cfg.read_into(&k("background_tx_rate"), &mut self.background_tx_rate)?;
        cfg.read_into(&k("target_origin_count"), &mut self.target_origin_count)?;
        cfg.read_into(&k("schedule"), &mut self.schedule)?;
        let w = &mut self.wallets;
        cfg.read_into(&k("background_burst_prob"), &mut w.background_burst_prob)?;
        cfg.read_into(&k("background_burst_max"), &mut w.background_burst_max)?;
        cfg.read_into(&k("background_intra_gap"), &mut w.background_intra_gap)?;
        cfg.read_into(&k("coinjoin_fraction"), &mut w.coinjoin_fraction)?;
        cfg.read_into(&k("coinjoin_width"), &mut w.coinjoin_width)?;
        cfg.read_into(&k("stray_prob"), &mut w.stray_prob)?;
        cfg.read_into(&k("stray_separation"), &mut w.stray_separation)?;
        Ok(())
    }

    pub fn validate(&self, horizon: f64) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Workload(m));
        if !self.background_tx_rate.is_finite() || self.background_tx_rate < 0.0 {
            return fail(format!("background_tx_rate must be non-negative, got {}", self.background_tx_rate));
        }
        if let Schedule::Clustered { n_clusters, intra_gap } = self.schedule {
            if n_clusters == 0 && self.target_origin_count > 0 {
                return fail("clustered schedule needs at least one cluster".into());
            }
            if !intra_gap.is_finite() || intra_gap <= 0.0 {
                return fail(format!("intra_gap must be positive, got {intra_gap}"));
            }
            if n_clusters > 0 && intra_gap * (self.target_origin_count.div_ceil(n_clusters)) as f64 >= horizon {
                return fail("clustered bursts do not fit in the horizon".into());
            }
        }
        let w = &self.wallets;
        for (name, p) in [
            ("background_burst_prob", w.background_burst_prob),
            ("coinjoin_fraction", w.coinjoin_fraction),
            ("stray_prob", w.stray_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if w.background_burst_max < 2 && w.background_burst_prob > 0.0 {
            return fail("background_burst_max must be at least 2".into());
        }
        if w.coinjoin_width < 2 {
            return fail("coinjoin_width must be at least 2".into());
        }
        Ok(())
    }

    /// Largest gap between consecutive target transactions of one burst.
    pub fn max_intra_gap(&self) -> Option<f64> {
        match self.schedule {
            Schedule::Clustered { intra_gap, .. } => Some(intra_gap),
            Schedule::Uniform => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_parse() {
        assert_eq!("uniform".parse::<Schedule>().unwrap(), Schedule::Uniform);
        assert_eq!(
            "clustered:15:120".parse::<Schedule>().unwrap(),
            Schedule::Clustered { n_clusters: 15, intra_gap: 120.0 }
        );
        assert!("clustered:x:1".parse::<Schedule>().is_err());
        let s = Schedule::Clustered { n_clusters: 3, intra_gap: 12.5 };
        assert_eq!(s.to_string().parse::<Schedule>().unwrap(), s);
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::default().validate().is_ok());
        let bad = NetworkConfig { horizon: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = NetworkConfig { mean_delay_in: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = NetworkConfig { background_inbound: 1, ..Default::default() };
        assert!(bad.validate().is_err());
        assert_eq!(NetworkConfig { probe_fraction: 0.25, ..Default::default() }.n_probes(), 29);
    }
}
