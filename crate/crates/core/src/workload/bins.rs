use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Histogram bins given by strictly increasing inclusive upper edges.
///
/// Bin 0 is `..=edges[0]`, bin `i` is `edges[i-1]+1..=edges[i]`, and a final
/// overflow bin catches everything above the last edge, so any value lands
/// in exactly one bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct Bins {
    edges: Vec<u64>,
}

impl Bins {
    pub fn new(edges: Vec<u64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidBins("at least one edge is required".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBins(format!(
                "edges must be strictly increasing: {edges:?}"
            )));
        }
        Ok(Bins { edges })
    }

    /// 128, 129-256, 257-512, 513-1024, >1024 nodes.
    pub fn capability_sizes() -> Self {
        Bins {
            edges: vec![128, 256, 512, 1024],
        }
    }

    /// 1, 2-32, 33-128, >128 nodes.
    pub fn capacity_sizes() -> Self {
        Bins {
            edges: vec![1, 32, 128],
        }
    }

    /// 10 min, 30 min, 1 h, 2 h, 4.17 h, 8.3 h, and beyond.
    pub fn runtimes() -> Self {
        Bins {
            edges: vec![600, 1_800, 3_600, 7_200, 15_012, 29_880],
        }
    }

    pub fn edges(&self) -> &[u64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, value: u64) -> usize {
        self.edges.partition_point(|&e| e < value)
    }

    pub fn label(&self, index: usize) -> String {
        let n = self.edges.len();
        if index == 0 {
            let e = self.edges[0];
            if e <= 1 {
                e.to_string()
            } else {
                format!("<={e}")
            }
        } else if index < n {
            let lo = self.edges[index - 1] + 1;
            let hi = self.edges[index];
            if lo == hi {
                lo.to_string()
            } else {
                format!("{lo}-{hi}")
            }
        } else {
            format!(">{}", self.edges[n - 1])
        }
    }

    pub fn histogram(&self, values: impl IntoIterator<Item = u64>) -> Histogram {
        let mut counts = vec![0usize; self.len()];
        for v in values {
            counts[self.index_of(v)] += 1;
        }
        let total: usize = counts.iter().sum();
        let bins = counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| BinCount {
                label: self.label(i),
                count,
                percent: if total == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / total as f64
                },
            })
            .collect();
        Histogram { total, bins }
    }
}

impl TryFrom<Vec<u64>> for Bins {
    type Error = Error;

    fn try_from(edges: Vec<u64>) -> Result<Self> {
        Bins::new(edges)
    }
}

impl From<Bins> for Vec<u64> {
    fn from(b: Bins) -> Self {
        b.edges
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinCount {
    pub label: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub total: usize,
    pub bins: Vec<BinCount>,
}
