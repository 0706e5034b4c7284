//! Compression run reporting: JSON (stable key order) and an aligned
//! plain-text table.

use serde::Serialize;

use super::config::{CompressionConfig, ResolvedConfig};
use crate::lowrank::ReshapeMode;
use crate::prune::PruneReport;

/// Prune outcome for one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerPrune {
    pub zeroed: usize,
    pub threshold_magnitude: Option<f32>,
}

/// Factorization outcome for one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSvd {
    pub realized_rank: usize,
    pub factored_params: usize,
    pub recon_frobenius_error: f64,
    /// Fraction of nonzero elements after reconstructing the dense tensor;
    /// factorization generally destroys the exact zeros pruning created.
    pub post_nonzero_fraction: f64,
    pub mode: ReshapeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub name: String,
    pub shape: Vec<usize>,
    pub orig_params: usize,
    /// Why factorization did not run ("selector" or "min-elements").
    pub skipped: Option<String>,
    pub prune: Option<LayerPrune>,
    pub svd: Option<LayerSvd>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTotals {
    pub orig_params: usize,
    /// Element count of what the output store holds for the reported
    /// layers: factored params where factorization ran, original params
    /// elsewhere.
    pub output_params: usize,
    pub zeroed_elements: usize,
    pub layers_factored: usize,
    pub layers_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    pub label: String,
    /// Stage order actually applied.
    pub order: Vec<String>,
    pub config: CompressionConfig,
    pub store_factored: bool,
    pub layers: Vec<LayerReport>,
    pub totals: ReportTotals,
    pub bytes_before: u64,
    pub bytes_after: u64,
}

pub(crate) fn assemble(
    config: CompressionConfig,
    resolved: &ResolvedConfig,
    prune: Option<PruneReport>,
    layers: Vec<LayerReport>,
    bytes_before: u64,
    bytes_after: u64,
) -> CompressionReport {
    let mut order = Vec::new();
    if prune.is_some() {
        order.push("prune".to_string());
    }
    if resolved.svd.is_some() {
        order.push("svd".to_string());
    }
    let totals = ReportTotals {
        orig_params: layers.iter().map(|l| l.orig_params).sum(),
        output_params: layers
            .iter()
            .map(|l| l.svd.as_ref().map_or(l.orig_params, |s| s.factored_params))
            .sum(),
        zeroed_elements: layers
            .iter()
            .filter_map(|l| l.prune.as_ref().map(|p| p.zeroed))
            .sum(),
        layers_factored: layers.iter().filter(|l| l.svd.is_some()).count(),
        layers_skipped: layers.iter().filter(|l| l.skipped.is_some()).count(),
    };
    CompressionReport {
        label: config.label(),
        order,
        config,
        store_factored: resolved.store_factored,
        layers,
        totals,
        bytes_before,
        bytes_after,
    }
}

impl CompressionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Aligned text rendering: a model summary row (mAP is measured by the
    /// evaluation command, not here) and per-layer parameter columns.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let mb = |b: u64| b as f64 / 1_000_000.0;
        out.push_str(&format!(
            "{:<24} {:>8} {:>18} {:>18}\n",
            "model", "mAP@50", "weight size (MB)", "input size (MB)"
        ));
        out.push_str(&format!(
            "{:<24} {:>8} {:>18.3} {:>18.3}\n\n",
            self.label,
            "-",
            mb(self.bytes_after),
            mb(self.bytes_before)
        ));

        out.push_str(&format!(
            "{:<20} {:<16} {:>12} {:>6} {:>15} {:>8} {:>10} {:<12}\n",
            "layer", "shape", "orig params", "rank", "factored params", "zeroed", "nonzero %", "skipped"
        ));
        for l in &self.layers {
            let shape = format!(
                "[{}]",
                l.shape
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            );
            let (rank, factored, nonzero) = match &l.svd {
                Some(s) => (
                    s.realized_rank.to_string(),
                    s.factored_params.to_string(),
                    format!("{:.1}", 100.0 * s.post_nonzero_fraction),
                ),
                None => ("-".into(), "-".into(), "-".into()),
            };
            let zeroed = l
                .prune
                .as_ref()
                .map_or("-".to_string(), |p| p.zeroed.to_string());
            out.push_str(&format!(
                "{:<20} {:<16} {:>12} {:>6} {:>15} {:>8} {:>10} {:<12}\n",
                l.name,
                shape,
                l.orig_params,
                rank,
                factored,
                zeroed,
                nonzero,
                l.skipped.as_deref().unwrap_or("-")
            ));
        }
        out.push_str(&format!(
            "{:<20} {:<16} {:>12} {:>6} {:>15} {:>8}\n",
            "totals",
            "",
            self.totals.orig_params,
            "",
            self.totals.output_params,
            self.totals.zeroed_elements
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_key_order_is_stable() {
        let config = CompressionConfig::prune_only(0.3);
        let resolved = config.validate().unwrap();
        let report = assemble(config.clone(), &resolved, None, Vec::new(), 100, 100);
        let json = report.to_json();
        let label_pos = json.find("\"label\"").unwrap();
        let order_pos = json.find("\"order\"").unwrap();
        let totals_pos = json.find("\"totals\"").unwrap();
        assert!(label_pos < order_pos && order_pos < totals_pos);
    }

    #[test]
    fn table_contains_the_summary_columns() {
        let config = CompressionConfig::prune_only(0.3);
        let resolved = config.validate().unwrap();
        let report = assemble(config, &resolved, None, Vec::new(), 2_000_000, 1_000_000);
        let table = report.render_table();
        assert!(table.contains("mAP@50"));
        assert!(table.contains("weight size (MB)"));
        assert!(table.contains("1.000"));
        assert!(table.contains("2.000"));
    }
}
