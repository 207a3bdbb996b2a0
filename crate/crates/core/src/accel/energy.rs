use super::counts::{to_f64, AccessCounts, Level};

/// Per-access costs normalized to one MAC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub dram: f64,
    pub l2: f64,
    pub l1: f64,
    pub prf: f64,
    pub arf: f64,
    pub wrf: f64,
    pub crf: f64,
    pub mac: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            dram: 200.0,
            l2: 15.0,
            l1: 6.0,
            prf: 0.22,
            arf: 0.11,
            wrf: 0.02,
            crf: 0.02,
            mac: 1.0,
        }
    }
}

impl EnergyModel {
    pub fn cost(&self, level: Level) -> f64 {
        match level {
            Level::Dram => self.dram,
            Level::L2 => self.l2,
            Level::L1 => self.l1,
            Level::Prf => self.prf,
            Level::Arf => self.arf,
            Level::Wrf => self.wrf,
            Level::Crf => self.crf,
            Level::Mac => self.mac,
        }
    }

    /// Scales the MAC cost by the fraction of MACs that still toggle.
    pub fn with_gating(mut self, gated_fraction: f64) -> Self {
        self.mac *= 1.0 - gated_fraction;
        self
    }
}

/// Fraction of MACs whose operand registers are held because the weight or
/// the activation is zero, assuming the two are independent.
pub fn zero_gating_savings(weight_zero_fraction: f64, act_zero_fraction: f64) -> f64 {
    1.0 - (1.0 - weight_zero_fraction) * (1.0 - act_zero_fraction)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// Energy per level, in [`Level::ALL`] order.
    pub per_level: [f64; 8],
    pub total: f64,
}

impl EnergyReport {
    pub fn level(&self, level: Level) -> f64 {
        self.per_level[Level::ALL.iter().position(|l| *l == level).expect("known level")]
    }

    /// Everything except the MAC term.
    pub fn data_access(&self) -> f64 {
        self.total - self.level(Level::Mac)
    }

    pub fn percent(&self, level: Level) -> f64 {
        if self.total == 0.0 {
            0.0
        } else {
            100.0 * self.level(level) / self.total
        }
    }
}

pub fn energy_report(counts: &AccessCounts, model: &EnergyModel) -> EnergyReport {
    let mut per_level = [0.0; 8];
    for (slot, level) in per_level.iter_mut().zip(Level::ALL) {
        *slot = to_f64(counts.get(level)) * model.cost(level);
    }
    EnergyReport {
        per_level,
        total: per_level.iter().sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accel::counts::Count;

    #[test]
    fn single_dram_access() {
        let counts = AccessCounts {
            dram: Count::from_integer(1),
            ..Default::default()
        };
        let r = energy_report(&counts, &EnergyModel::default());
        assert_eq!(r.total, 200.0);
        assert_eq!(r.percent(Level::Dram), 100.0);
        assert_eq!(energy_report(&AccessCounts::default(), &EnergyModel::default()).total, 0.0);
    }

    #[test]
    fn gating() {
        assert_eq!(zero_gating_savings(0.0, 0.0), 0.0);
        assert_eq!(zero_gating_savings(1.0, 0.3), 1.0);
        assert!((zero_gating_savings(0.25, 0.5) - 0.625).abs() < 1e-15);
        let m = EnergyModel::default().with_gating(0.625);
        assert_eq!(m.mac, 0.375);
    }

    #[test]
    fn linear_in_counts() {
        let a = AccessCounts {
            l1: Count::new(7, 2),
            macs: Count::from_integer(10),
            ..Default::default()
        };
        let mut b = a.clone();
        b += &a;
        let m = EnergyModel::default();
        assert!((energy_report(&b, &m).total - 2.0 * energy_report(&a, &m).total).abs() < 1e-12);
    }
}
