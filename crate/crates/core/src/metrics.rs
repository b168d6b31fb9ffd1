//! Path comparison metrics against the straight line between the endpoints.

use serde::{Deserialize, Serialize};

/// Sample count for arclength integrals.
pub const ARCLENGTH_SAMPLES: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub path_diff_pct: f64,
    pub obj_fun_gap_pct: f64,
}

/// Total length of a polyline.
pub fn polyline_length(corners: &[&[f64]]) -> f64 {
    corners.windows(2).map(|w| dist(w[0], w[1])).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Point at normalized arclength `s ∈ [0, 1]` along a polyline.
pub fn point_at_arclength(corners: &[&[f64]], s: f64) -> Vec<f64> {
    let total = polyline_length(corners);
    let mut target = s.clamp(0.0, 1.0) * total;
    for w in corners.windows(2) {
        let len = dist(w[0], w[1]);
        if target <= len && len > 0.0 {
            let a = target / len;
            return w[0].iter().zip(w[1]).map(|(x, y)| x + a * (y - x)).collect();
        }
        target -= len;
    }
    corners.last().map_or_else(Vec::new, |c| c.to_vec())
}

/// Composite trapezoid over `n` equally spaced samples of `[0, 1]`.
fn integrate(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|j| {
            let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            w * f(j as f64 * h)
        })
        .sum::<f64>()
        * h
}

/// Metrics of a path (corners including both endpoints) relative to the
/// segment between its first and last corners, both parameterized by
/// normalized arclength.
pub fn path_metrics(corners: &[&[f64]]) -> PathMetrics {
    path_metrics_sampled(corners, ARCLENGTH_SAMPLES)
}

pub fn path_metrics_sampled(corners: &[&[f64]], samples: usize) -> PathMetrics {
    assert!(corners.len() >= 2 && samples >= 2);
    let line = [corners[0], corners[corners.len() - 1]];
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = integrate(samples, |s| {
        dist(&point_at_arclength(corners, s), &point_at_arclength(&line, s))
    });
    let base = integrate(samples, |s| norm(&point_at_arclength(&line, s)));
    let len_p = polyline_length(corners);
    let len_l = polyline_length(&line);
    PathMetrics {
        path_diff_pct: if base > 0.0 { 100.0 * diff / base } else { 0.0 },
        obj_fun_gap_pct: if len_l > 0.0 { 100.0 * (len_p - len_l) / len_l } else { 0.0 },
    }
}
