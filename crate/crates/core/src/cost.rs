//! Analytic models: disk-memory vs disk-cache-memory batch time, dense vs
//! sparse storage estimation, threshold sweeps, and compression ratios.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{total_degree, DegreeMode, Graph};

/// Parameters of the batch-processing time models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostParams {
    /// Batch size S(B).
    pub batch_size: f64,
    /// Cache size S(C).
    pub cache_size: f64,
    /// Cache refresh rate in [0, 1].
    pub alpha_refresh: f64,
    /// Memory processing speed v_m.
    pub v_m: f64,
    /// Cache processing speed v_c.
    pub v_c: f64,
}

impl CostParams {
    pub fn new(
        batch_size: f64,
        cache_size: f64,
        alpha_refresh: f64,
        v_m: f64,
        v_c: f64,
    ) -> Result<Self> {
        if !(batch_size > 0.0) {
            return Err(Error::invalid_argument("batch size must be positive"));
        }
        if cache_size < 0.0 || cache_size > batch_size {
            return Err(Error::invalid_argument(
                "cache size must satisfy 0 <= S(C) <= S(B)",
            ));
        }
        if !(0.0..=1.0).contains(&alpha_refresh) {
            return Err(Error::invalid_argument("refresh rate must be in [0, 1]"));
        }
        if !(v_m > 0.0) || !(v_c > 0.0) {
            return Err(Error::invalid_argument(
                "processing speeds must be positive",
            ));
        }
        Ok(CostParams {
            batch_size,
            cache_size,
            alpha_refresh,
            v_m,
            v_c,
        })
    }
}

/// Batch time of the disk-memory model: `S(B) / v_m`.
pub fn t_disk_memory(params: &CostParams) -> f64 {
    params.batch_size / params.v_m
}

/// Batch time of the disk-cache-memory model:
/// `(S(B) - S(C)) / v_m + (1 - alpha) * S(C) / v_c`.
pub fn t_disk_cache_memory(params: &CostParams) -> f64 {
    (params.batch_size - params.cache_size) / params.v_m
        + (1.0 - params.alpha_refresh) * params.cache_size / params.v_c
}

/// Edge-storage estimate for a degree-threshold split: sparse regions are
/// stored in full (out-degree each), dense regions are capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StorageEstimate {
    pub theta: i64,
    pub sparse_edges: u64,
    pub resampled_edges: u64,
    pub total: u64,
}

/// Computes the storage estimate at one threshold.
///
/// `sparse_edges` sums the out-degree of every node with total degree at
/// most theta; `resampled_edges` sums `min(total_degree, dense_cap)` over
/// the dense nodes.
pub fn storage_estimate(g: &Graph, theta: i64, dense_cap: usize) -> Result<StorageEstimate> {
    let out = total_degree(g, DegreeMode::Out)?;
    let total = total_degree(g, DegreeMode::Total)?;
    let mut sparse_edges = 0u64;
    let mut resampled_edges = 0u64;
    for v in 0..g.node_count() {
        if total.degrees[v] as i64 > theta {
            resampled_edges += total.degrees[v].min(dense_cap) as u64;
        } else {
            sparse_edges += out.degrees[v] as u64;
        }
    }
    Ok(StorageEstimate {
        theta,
        sparse_edges,
        resampled_edges,
        total: sparse_edges + resampled_edges,
    })
}

/// Storage reduction as a percentage: `100 * (original - optimized) / original`.
pub fn compression_ratio(original: u64, optimized: u64) -> f64 {
    if original == 0 {
        return 0.0;
    }
    100.0 * (original as f64 - optimized as f64) / original as f64
}

/// One estimate per threshold plus the argmin index over totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepResult {
    pub estimates: Vec<StorageEstimate>,
    pub argmin: Option<usize>,
}

pub fn sweep_threshold(g: &Graph, thetas: &[i64], dense_cap: usize) -> Result<SweepResult> {
    let mut estimates = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        estimates.push(storage_estimate(g, theta, dense_cap)?);
    }
    let argmin = estimates
        .iter()
        .enumerate()
        .min_by_key(|(_, e)| e.total)
        .map(|(i, _)| i);
    Ok(SweepResult { estimates, argmin })
}

impl SweepResult {
    /// CSV export: `theta,sparse_edges,resampled_edges,total`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta,sparse_edges,resampled_edges,total")?;
        for e in &self.estimates {
            writeln!(
                w,
                "{},{},{},{}",
                e.theta, e.sparse_edges, e.resampled_edges, e.total
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, generate_synthetic, SyntheticModel};

    fn params(b: f64, c: f64, a: f64, vm: f64, vc: f64) -> CostParams {
        CostParams::new(b, c, a, vm, vc).unwrap()
    }

    #[test]
    fn disk_memory_formula() {
        assert_eq!(t_disk_memory(&params(100.0, 0.0, 0.0, 1.0, 1.0)), 100.0);
        assert_eq!(t_disk_memory(&params(64.0, 0.0, 0.0, 64.0, 1.0)), 1.0);
        let p = params(37.5, 10.0, 0.3, 2.5, 4.0);
        assert_eq!(t_disk_memory(&p), 37.5 / 2.5);
    }

    #[test]
    fn disk_cache_memory_formula() {
        // (100 - 40)/1 + (1 - 0.25) * 40 / 10 = 60 + 3
        let p = params(100.0, 40.0, 0.25, 1.0, 10.0);
        assert_eq!(t_disk_cache_memory(&p), 63.0);
        // S(C) = 0 reduces to the disk-memory model
        let p = params(100.0, 0.0, 0.25, 1.0, 10.0);
        assert_eq!(t_disk_cache_memory(&p), t_disk_memory(&p));
        // alpha = 1: the cached share costs nothing
        let p = params(100.0, 40.0, 1.0, 2.0, 10.0);
        assert_eq!(t_disk_cache_memory(&p), (100.0 - 40.0) / 2.0);
    }

    #[test]
    fn cost_params_validation() {
        assert!(CostParams::new(0.0, 0.0, 0.5, 1.0, 1.0).is_err());
        assert!(CostParams::new(10.0, 20.0, 0.5, 1.0, 1.0).is_err());
        assert!(CostParams::new(10.0, 5.0, 1.5, 1.0, 1.0).is_err());
        assert!(CostParams::new(10.0, 5.0, 0.5, 0.0, 1.0).is_err());
        assert!(CostParams::new(10.0, 5.0, 0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn storage_estimate_star() {
        let g = build_graph(&[(0, 1), (0, 2), (0, 3), (0, 4)], 5, true, false).unwrap();
        let e = storage_estimate(&g, 3, 2).unwrap();
        assert_eq!(e.sparse_edges, 4);
        assert_eq!(e.resampled_edges, 2);
        assert_eq!(e.total, 6);
        // theta at or above max degree: everything sparse
        let e = storage_estimate(&g, 8, 2).unwrap();
        assert_eq!(e.resampled_edges, 0);
        assert_eq!(e.sparse_edges, g.edge_count() as u64);
    }

    #[test]
    fn compression_ratio_paper_rows() {
        assert!((compression_ratio(1_166_243, 552_228) - 52.65).abs() <= 0.01);
        assert!((compression_ratio(123_718_280, 20_449_813) - 83.47).abs() <= 0.01);
        assert!((compression_ratio(5_416_271, 556_904) - 89.72).abs() <= 0.01);
        assert_eq!(compression_ratio(10, 10), 0.0);
        assert_eq!(compression_ratio(10, 0), 100.0);
    }

    #[test]
    fn sweep_monotone_components() {
        let g = generate_synthetic(SyntheticModel::PreferentialAttachment { n: 800, m: 4 }, 3)
            .unwrap();
        let thetas: Vec<i64> = (5..=60).step_by(5).collect();
        let sweep = sweep_threshold(&g, &thetas, 10).unwrap();
        assert_eq!(sweep.estimates.len(), thetas.len());
        for w in sweep.estimates.windows(2) {
            assert!(w[0].sparse_edges <= w[1].sparse_edges);
            assert!(w[0].resampled_edges >= w[1].resampled_edges);
        }
        // singleton sweep matches a direct estimate
        let single = sweep_threshold(&g, &[20], 10).unwrap();
        assert_eq!(single.estimates[0], storage_estimate(&g, 20, 10).unwrap());
        assert_eq!(single.argmin, Some(0));
    }

    #[test]
    fn sweep_estimates_match_filter_oracle() {
        let g = generate_synthetic(SyntheticModel::ErdosRenyi { n: 120, p: 0.08 }, 21).unwrap();
        let total = total_degree(&g, DegreeMode::Total).unwrap();
        let out = total_degree(&g, DegreeMode::Out).unwrap();
        for theta in [2i64, 10, 25] {
            let e = storage_estimate(&g, theta, 7).unwrap();
            let sparse: u64 = (0..g.node_count())
                .filter(|&v| total.degrees[v] as i64 <= theta)
                .map(|v| out.degrees[v] as u64)
                .sum();
            let resampled: u64 = (0..g.node_count())
                .filter(|&v| total.degrees[v] as i64 > theta)
                .map(|v| total.degrees[v].min(7) as u64)
                .sum();
            assert_eq!(e.sparse_edges, sparse);
            assert_eq!(e.resampled_edges, resampled);
            assert_eq!(e.total, sparse + resampled);
        }
    }

    #[test]
    fn sweep_csv_shape() {
        let g = build_graph(&[(0, 1)], 2, true, false).unwrap();
        let sweep = sweep_threshold(&g, &[0, 5], 3).unwrap();
        let mut buf = Vec::new();
        sweep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theta,sparse_edges,resampled_edges,total\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
