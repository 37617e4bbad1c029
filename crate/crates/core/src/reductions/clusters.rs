use serde::{Deserialize, Serialize};

/// Frozen thresholds for counting peaks of an opinion profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterThresholds {
    /// A peak must exceed this multiple of the uniform level.
    pub height_factor: f64,
    /// Peaks at most this many cells apart are merged.
    pub merge_cells: usize,
}

impl Default for ClusterThresholds {
    fn default() -> Self {
        Self {
            height_factor: 1.2,
            merge_cells: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cluster {
    /// Mass-weighted centroid of the basin.
    pub position: f64,
    /// Profile mass in the basin (sum of the entries; multiply by Δx for densities).
    pub mass: f64,
    /// Index of the peak cell.
    pub peak: usize,
}

/// Clusters of a nonnegative profile `p` sampled at `x`, with the default thresholds.
pub fn cluster_detect(p: &[f64], x: &[f64]) -> Vec<Cluster> {
    cluster_detect_with(p, x, &ClusterThresholds::default())
}

pub fn cluster_detect_with(p: &[f64], x: &[f64], th: &ClusterThresholds) -> Vec<Cluster> {
    let n = p.len();
    assert_eq!(n, x.len(), "profile and coordinates differ in length");
    if n == 0 {
        return Vec::new();
    }
    let level = th.height_factor * p.iter().sum::<f64>() / n as f64;
    let mut peaks: Vec<usize> = Vec::new();
    for j in 0..n {
        let rises = j == 0 || p[j] > p[j - 1];
        let holds = j + 1 == n || p[j] >= p[j + 1];
        if !(rises && holds && p[j] > level) {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if j - *last <= th.merge_cells => {
                if p[j] > p[*last] {
                    *last = j;
                }
            }
            _ => peaks.push(j),
        }
    }
    if peaks.is_empty() {
        return Vec::new();
    }
    let mut bounds = vec![0];
    for w in peaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        // ties split at their midpoint so mirrored profiles split symmetrically
        let low = p[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
        let first = (a..=b).find(|&i| p[i] == low).unwrap();
        let last = (a..=b).rev().find(|&i| p[i] == low).unwrap();
        bounds.push((first + last + 1) / 2);
    }
    bounds.push(n);
    peaks
        .iter()
        .enumerate()
        .map(|(c, &peak)| {
            let range = bounds[c]..bounds[c + 1];
            let mass: f64 = p[range.clone()].iter().sum();
            let moment: f64 = range.map(|j| p[j] * x[j]).sum();
            Cluster {
                position: if mass > 0.0 { moment / mass } else { x[peak] },
                mass,
                peak,
            }
        })
        .collect()
}
