//! Metrics and fragmentation reports as JSON.

use locpar_core::eval_par::Metrics;
use locpar_core::layout::FragReport;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fragmentation {
    pub total_regions: u64,
    pub extra_regions: u64,
    pub indirections: u64,
    pub total_cells: u64,
    pub serialized_fraction: f64,
    pub total_bytes: u64,
    pub link_bytes: u64,
    pub serialized_byte_fraction: f64,
}

impl From<&FragReport> for Fragmentation {
    fn from(r: &FragReport) -> Self {
        Fragmentation {
            total_regions: r.total_regions,
            extra_regions: r.extra_regions,
            indirections: r.indirections,
            total_cells: r.total_cells,
            serialized_fraction: r.serialized_fraction,
            total_bytes: r.total_bytes,
            link_bytes: r.link_bytes,
            serialized_byte_fraction: r.serialized_byte_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub forks: u64,
    pub joins: u64,
    pub extra_regions: u64,
    pub indirections: u64,
    pub steps: u64,
    pub newreg_firings: u64,
    pub forks_with_newreg: u64,
    pub cells_written: u64,
    pub regions_created: u64,
    pub peak_live_tasks: u64,
    pub end_witness_checks: u64,
    pub end_witness_mismatches: u64,
    pub fragmentation: Fragmentation,
}

impl MetricsReport {
    pub fn new(m: &Metrics, frag: &FragReport) -> Self {
        MetricsReport {
            forks: m.forks,
            joins: m.joins,
            extra_regions: m.extra_regions,
            indirections: m.indirections,
            steps: m.steps,
            newreg_firings: m.newreg_firings,
            forks_with_newreg: m.forks_with_newreg,
            cells_written: m.cells_written,
            regions_created: m.regions_created,
            peak_live_tasks: m.peak_live_tasks,
            end_witness_checks: m.ew_checks,
            end_witness_mismatches: m.ew_mismatches,
            fragmentation: frag.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}
