//! Analytical model of a WS/EWS systolic accelerator running compressed
//! weights: access counts, energy, roofline and sparse-tile resources.
//!
//! Everything here is closed-form; nothing is cycle-accurate.

mod config;
mod counts;
mod energy;
mod roofline;
mod tile;

use std::fmt::Write as _;

pub use config::{AccelConfig, Compression, Dataflow, LayerSpec, Setting};
pub use counts::{ews_access_counts, to_f64, weight_stream_bits, AccessCounts, Count, Level};
pub use energy::{energy_report, zero_gating_savings, EnergyModel, EnergyReport};
pub use roofline::{roofline, Bound, Roofline};
pub use tile::{lzc_encode_mask, sparse_tile_resources, ResourceColumn, TileResources, RF_DEPTH};

use crate::error::Result;

/// ResNet-18 convolution and classifier layers at 224x224 input.
pub const RESNET18_TABLE: &str = include_str!("../../data/resnet18.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedLayer {
    pub name: String,
    pub spec: LayerSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub name: String,
    pub counts: AccessCounts,
    pub energy: EnergyReport,
    pub roofline: Roofline,
    pub cycles: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub label: String,
    pub config: AccelConfig,
    pub layers: Vec<LayerReport>,
    pub totals: AccessCounts,
    pub energy: EnergyReport,
    pub cycles: f64,
    /// `None` when the pattern does not give an integral number of active
    /// PEs per group.
    pub resources: Option<TileResources>,
    dense_macs: u128,
}

impl SimReport {
    /// Dense-equivalent MACs per cycle over the whole network, as a
    /// fraction of the array peak.
    pub fn peak_fraction(&self) -> f64 {
        if self.cycles == 0.0 {
            return 0.0;
        }
        self.dense_macs as f64 / self.cycles / (self.config.rows * self.config.cols) as f64
    }
}

pub fn simulate(
    label: &str,
    layers: &[NamedLayer],
    cfg: &AccelConfig,
    model: &EnergyModel,
) -> Result<SimReport> {
    cfg.validate()?;
    let model = model.with_gating(zero_gating_savings(
        cfg.weight_zero_fraction,
        cfg.act_zero_fraction,
    ));
    let reports = layers
        .iter()
        .map(|l| {
            let counts = ews_access_counts(&l.spec, cfg)?;
            let roof = roofline(&l.spec, cfg)?;
            Ok(LayerReport {
                name: l.name.clone(),
                energy: energy_report(&counts, &model),
                cycles: l.spec.macs() as f64 / roof.attainable,
                roofline: roof,
                counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let totals: AccessCounts = reports.iter().map(|r| &r.counts).sum();
    let resources = sparse_tile_resources(
        cfg.rows as u64,
        cfg.d as u64,
        cfg.pattern,
        u64::from(cfg.weight_bits),
        u64::from(cfg.psum_bits),
    )
    .ok();
    Ok(SimReport {
        label: label.to_string(),
        config: *cfg,
        energy: energy_report(&totals, &model),
        cycles: reports.iter().map(|r| r.cycles).sum(),
        dense_macs: layers.iter().map(|l| l.spec.macs()).sum(),
        layers: reports,
        totals,
        resources,
    })
}

/// Runs every setting in `settings` against the same base configuration.
pub fn simulate_settings(
    layers: &[NamedLayer],
    base: &AccelConfig,
    settings: &[Setting],
    model: &EnergyModel,
) -> Result<Vec<SimReport>> {
    settings
        .iter()
        .map(|s| simulate(s.name(), layers, &s.apply(base), model))
        .collect()
}

pub const CSV_HEADER: &str = "setting,layer,level,count,energy,percent";

/// Long-format CSV rows (no header): one row per layer and level, then the
/// network totals under the layer name `TOTAL`.
pub fn render_csv(r: &SimReport) -> String {
    let mut out = String::new();
    let rows = r
        .layers
        .iter()
        .map(|l| (l.name.as_str(), &l.counts, &l.energy))
        .chain(std::iter::once(("TOTAL", &r.totals, &r.energy)));
    for (name, counts, energy) in rows {
        for level in Level::ALL {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4}",
                r.label,
                name,
                level.name(),
                to_f64(counts.get(level)),
                energy.level(level),
                energy.percent(level)
            );
        }
    }
    out
}

pub fn render_text(r: &SimReport) -> String {
    let c = &r.config;
    let (a, b, d) = c.extensions();
    let mut out = String::new();
    let _ = writeln!(out, "== {} ==", r.label);
    let _ = writeln!(
        out,
        "array {}x{}  ext A={a} B={b} D={d}  d={} k={} {}  dma {} bits  L1 {} KB",
        c.rows,
        c.cols,
        c.d,
        c.k,
        c.pattern,
        c.dma_bits,
        c.l1_bytes / 1024
    );
    let _ = writeln!(out, "{:<6} {:>18} {:>18} {:>7}", "level", "count", "energy", "%");
    for level in Level::ALL {
        let _ = writeln!(
            out,
            "{:<6} {:>18.1} {:>18.1} {:>6.2}%",
            level.name(),
            to_f64(r.totals.get(level)),
            r.energy.level(level),
            r.energy.percent(level)
        );
    }
    let _ = writeln!(out, "total energy       {:.1}", r.energy.total);
    let _ = writeln!(out, "data-access energy {:.1}", r.energy.data_access());
    let _ = writeln!(out, "cycles             {:.1}", r.cycles);
    let _ = writeln!(out, "peak fraction      {:.4}", r.peak_fraction());
    if !r.layers.is_empty() {
        let _ = writeln!(
            out,
            "{:<22} {:>14} {:>12} {:>12} {:>10}",
            "layer", "energy", "cycles", "bits/weight", "bound"
        );
        for l in &r.layers {
            let _ = writeln!(
                out,
                "{:<22} {:>14.1} {:>12.1} {:>12.4} {:>10}",
                l.name,
                l.energy.total,
                l.cycles,
                l.roofline.bits_per_weight,
                l.roofline.bound.name()
            );
        }
    }
    if let Some(t) = &r.resources {
        let _ = writeln!(out, "tile {}x{} resources (dense / sparse):", c.rows, c.d);
        let rows = [
            ("multipliers", t.dense.multipliers, t.sparse.multipliers),
            ("adders", t.dense.adders, t.sparse.adders),
            ("rf bits", t.dense.rf_bits, t.sparse.rf_bits),
            ("lzc", t.dense.lzc, t.sparse.lzc),
            ("demux", t.dense.demux, t.sparse.demux),
            ("mux", t.dense.mux, t.sparse.mux),
            ("parallelism", t.dense.parallelism, t.sparse.parallelism),
        ];
        for (name, dense, sparse) in rows {
            let _ = writeln!(out, "  {name:<12} {dense:>10} {sparse:>10}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_layer_table;

    fn resnet() -> Vec<NamedLayer> {
        parse_layer_table(RESNET18_TABLE).unwrap()
    }

    #[test]
    fn ews_cm_energy_reduction_on_resnet18() {
        let r = simulate_settings(
            &resnet(),
            &AccelConfig::default(),
            &[Setting::Ews, Setting::EwsCm, Setting::Ws],
            &EnergyModel::default(),
        )
        .unwrap();
        let reduction = r[0].energy.data_access() / r[1].energy.data_access();
        assert!((3.0..=5.0).contains(&reduction), "{reduction}");
        assert!(r[0].energy.level(Level::L1) < r[2].energy.level(Level::L1));
    }

    #[test]
    fn totals_are_permutation_invariant() {
        let layers = resnet();
        let mut rev = layers.clone();
        rev.reverse();
        let cfg = AccelConfig::default();
        let m = EnergyModel::default();
        let a = simulate("x", &layers, &cfg, &m).unwrap();
        let b = simulate("x", &rev, &cfg, &m).unwrap();
        assert_eq!(a.totals, b.totals);
        assert!((a.energy.total - b.energy.total).abs() <= 1e-9 * a.energy.total);
    }

    #[test]
    fn empty_table_gives_empty_report() {
        let r = simulate("ews", &[], &AccelConfig::default(), &EnergyModel::default()).unwrap();
        assert!(r.layers.is_empty());
        assert_eq!(r.energy.total, 0.0);
        assert_eq!(render_csv(&r).lines().count(), Level::ALL.len());
        assert!(render_text(&r).contains("== ews =="));
    }

    #[test]
    fn gating_scales_only_mac_energy() {
        let layers = resnet();
        let cfg = AccelConfig::default();
        let gated = AccelConfig {
            weight_zero_fraction: 0.25,
            act_zero_fraction: 0.5,
            ..cfg
        };
        let m = EnergyModel::default();
        let a = simulate("a", &layers, &cfg, &m).unwrap();
        let b = simulate("b", &layers, &gated, &m).unwrap();
        assert_eq!(a.energy.data_access(), b.energy.data_access());
        let ratio = b.energy.level(Level::Mac) / a.energy.level(Level::Mac);
        assert!((ratio - 0.375).abs() < 1e-12);
    }
}
