use rand::Rng;
use rand_distr::{Distribution, Exp};

/// Direction of a link from the point of view of the node using it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    /// This node dialed the peer.
    Outbound,
    /// The peer dialed this node.
    Inbound,
}

/// Exponential announce delays with per-direction means (seconds).
#[derive(Debug, Clone, Copy)]
pub struct DelayModel {
    out: Option<Exp<f64>>,
    inb: Option<Exp<f64>>,
}

impl DelayModel {
    /// A mean of zero yields instantaneous announcements.
    pub fn new(mean_out: f64, mean_in: f64) -> Self {
        let exp = |mean: f64| if mean > 0.0 { Exp::new(1.0 / mean).ok() } else { None };
        DelayModel { out: exp(mean_out), inb: exp(mean_in) }
    }

    pub fn sample<R: Rng + ?Sized>(&self, kind: LinkKind, rng: &mut R) -> f64 {
        let dist = match kind {
            LinkKind::Outbound => &self.out,
            LinkKind::Inbound => &self.inb,
        };
        dist.as_ref().map_or(0.0, |d| d.sample(rng))
    }
}

/// One announce delay in seconds for a link of the given kind.
pub fn sample_announce_delay<R: Rng + ?Sized>(kind: LinkKind, model: &DelayModel, rng: &mut R) -> f64 {
    model.sample(kind, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn means_match_configuration() {
        let model = DelayModel::new(2.5, 5.0);
        let mut rng = seed::rng(11);
        let n = 10_000;
        let out: Vec<f64> = (0..n).map(|_| sample_announce_delay(LinkKind::Outbound, &model, &mut rng)).collect();
        let inb: Vec<f64> = (0..n).map(|_| sample_announce_delay(LinkKind::Inbound, &model, &mut rng)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((2.375..=2.625).contains(&mean(&out)), "outbound mean {}", mean(&out));
        assert!((4.75..=5.25).contains(&mean(&inb)), "inbound mean {}", mean(&inb));
        assert!(out.iter().chain(&inb).all(|&d| d >= 0.0));
    }

    #[test]
    fn zero_mean_is_immediate() {
        let model = DelayModel::new(0.0, 0.0);
        let mut rng = seed::rng(1);
        assert_eq!(model.sample(LinkKind::Inbound, &mut rng), 0.0);
    }
}
