use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::Mutex;

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

/// Collects per-key latency samples (keys are role names plus the
/// `mapping_total` / `query_total` phase totals).
#[derive(Debug, Default)]
pub struct LatencyRecorder {
    samples: Mutex<BTreeMap<String, Vec<f64>>>,
}

pub const MAPPING_TOTAL: &str = "mapping_total";
pub const QUERY_TOTAL: &str = "query_total";

impl LatencyRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, key: &str, ms: f64) {
        let ms = if ms.is_finite() { ms.max(0.0) } else { 0.0 };
        self.samples.lock().expect("latency log poisoned").entry(key.to_string()).or_default().push(ms);
    }

    pub fn report(&self) -> LatencyReport {
        let samples = self.samples.lock().expect("latency log poisoned");
        let rows = samples
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| {
                let mut sorted = v.clone();
                sorted.sort_by(f64::total_cmp);
                // nearest-rank percentile
                let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
                let stats = LatencyStats {
                    count: v.len(),
                    mean_ms: v.iter().sum::<f64>() / v.len() as f64,
                    p95_ms: sorted[rank - 1],
                };
                (k.clone(), stats)
            })
            .collect();
        LatencyReport { rows }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Default)]
pub struct LatencyReport {
    pub rows: BTreeMap<String, LatencyStats>,
}

impl LatencyReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&LatencyStats> {
        self.rows.get(key)
    }

    fn secs(&self, key: &str) -> String {
        self.rows.get(key).map_or_else(|| "-".to_string(), |s| format!("{:.3}", s.mean_ms / 1000.0))
    }

    /// Table grouped by phase, one column of mean seconds.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, name: &str, v: String| {
            let _ = writeln!(out, "  {name:<28} {v:>10}");
        };
        let _ = writeln!(out, "{:<30} {:>10}", "Module", "mean (s)");
        let _ = writeln!(out, "Mapping Phase");
        line(&mut out, "Node Desc. (s/node)", self.secs("summarizer"));
        line(&mut out, "Rel. Verify (s/edge)", self.secs("relation"));
        line(&mut out, "Total Mapping (s)", self.secs(MAPPING_TOTAL));
        let _ = writeln!(out, "Retrieval Phase");
        line(&mut out, "Intent Parse (s)", self.secs("parser"));
        line(&mut out, "VLM Verify (s)", self.secs("verifier"));
        line(&mut out, "Total Query (s)", self.secs(QUERY_TOTAL));
        out
    }
}
