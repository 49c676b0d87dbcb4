use serde::{Deserialize, Serialize};

use crate::lang::ErrorBucket;

/// Arithmetic mean and sample standard deviation (n - 1 denominator, 0 for
/// a single value). Sums run over the sorted values so any permutation of
/// the input gives bit-identical results.
pub fn aggregate(scores: &[f64]) -> (f64, f64) {
    if scores.is_empty() {
        return (0.0, 0.0);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    if sorted.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq: Vec<f64> = sorted.iter().map(|s| (s - mean).powi(2)).collect();
    sq.sort_by(f64::total_cmp);
    (mean, (sq.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

/// What one evaluated sample contributes to the histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleOutcome {
    Failed(ErrorBucket),
    Executed(f64),
}

pub const DEFAULT_IOU_EDGES: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub label: String,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub total: usize,
    pub bins: Vec<Bin>,
}

fn fmt_edge(e: f64) -> String {
    format!("{e}")
}

/// Bin labels: the three failure buckets, `=0`, then half-open score
/// ranges `(a,b]` over `0, edges..., 1`.
pub fn bin_labels(edges: &[f64]) -> Vec<String> {
    let mut labels: Vec<String> = ErrorBucket::ALL.iter().map(|b| b.as_str().to_string()).collect();
    labels.push("=0".into());
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(edges);
    bounds.push(1.0);
    for w in bounds.windows(2) {
        labels.push(format!("({},{}]", fmt_edge(w[0]), fmt_edge(w[1])));
    }
    labels
}

pub fn validate_edges(edges: &[f64]) -> Result<(), String> {
    let mut prev = 0.0;
    for &e in edges {
        if !(e > prev && e < 1.0) {
            return Err(format!("histogram edges must increase strictly inside (0, 1), got {edges:?}"));
        }
        prev = e;
    }
    Ok(())
}

fn bin_index(outcome: SampleOutcome, edges: &[f64]) -> usize {
    match outcome {
        SampleOutcome::Failed(b) => ErrorBucket::ALL.iter().position(|x| *x == b).unwrap(),
        SampleOutcome::Executed(s) if s <= 0.0 => 3,
        SampleOutcome::Executed(s) => 4 + edges.iter().filter(|e| s > **e).count(),
    }
}

/// Fractions are over all samples; an empty input yields explicit zero rows.
pub fn error_analysis(outcomes: &[SampleOutcome], edges: &[f64]) -> Histogram {
    let labels = bin_labels(edges);
    let mut counts = vec![0usize; labels.len()];
    for o in outcomes {
        counts[bin_index(*o, edges)] += 1;
    }
    let total = outcomes.len();
    let bins = labels
        .into_iter()
        .zip(counts)
        .map(|(label, count)| Bin {
            label,
            count,
            fraction: if total == 0 { 0.0 } else { count as f64 / total as f64 },
        })
        .collect();
    Histogram { total, bins }
}

impl Histogram {
    pub fn fraction(&self, label: &str) -> Option<f64> {
        self.bins.iter().find(|b| b.label == label).map(|b| b.fraction)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count,fraction\n");
        for b in &self.bins {
            out.push_str(&format!("{},{},{}\n", b.label, b.count, b.fraction));
        }
        out
    }
}
