//! Cache-aware graph neighbor sampling with simulated tiered storage.
//!
//! The crate provides:
//!
//! - [`graph`]: immutable CSR graphs, degree analytics, k-hop queries,
//!   degree-threshold splitting, and synthetic generators.
//! - [`storage`]: a virtual-clock disk/cache/memory simulation whose access
//!   log backs every benchmark counter.
//! - [`cache`]: the layered amplified-neighbor cache with full, partial,
//!   mixed-fetch, and shared refresh paths.
//! - [`sampler`]: the strategy layer (FBL, FCR, the OTF family, shared
//!   caches, and the dense/sparse dual pipeline).
//! - [`snapshot`]: static/dynamic snapshot mixing, hierarchical updates,
//!   importance-weighted snapshots, and the cost/quality objective.
//! - [`cost`]: analytic batch-time and storage models with threshold sweeps.
//! - [`harness`]: deterministic benchmark runs and CSV/JSON reporting.

pub mod cache;
pub mod config;
pub mod cost;
pub mod error;
pub mod graph;
pub mod harness;
pub mod rng;
pub mod sampler;
pub mod snapshot;
pub mod storage;

pub use cache::{
    fetch_mixed, init_cache, refresh_cache_full, refresh_cache_partial, sample_from_cache,
    shared_refresh, CachedNeighborhood, FetchPolicy, LayeredCache, RefreshPolicy, SharedCache,
};
pub use cost::{
    compression_ratio, storage_estimate, sweep_threshold, t_disk_cache_memory, t_disk_memory,
    CostParams, StorageEstimate, SweepResult,
};
pub use error::{Error, Result};
pub use graph::{
    build_graph, generate_synthetic, k_hop, read_edge_list, read_edge_list_file, split_by_degree,
    total_degree, write_edge_list, DegreeMode, DegreeVector, Graph, NodeId, SplitResult,
    SyntheticModel,
};
pub use harness::{run_bench, BenchReport, RunConfig};
pub use sampler::{
    sample_blocks_dual, sample_blocks_fbl, sample_blocks_fcr, sample_blocks_otf_fetch,
    sample_blocks_otf_pr_ff, sample_blocks_otf_pr_pf, sample_blocks_otf_refresh,
    sample_blocks_shared, BatchContext, Block, DualSampler, SampledBlocks, SamplerStrategy,
    SharedStrategyKind,
};
pub use snapshot::{
    combine_snapshot, hierarchical_update, objective, sampling_cost, select_best_snapshot,
    weighted_snapshot, CostQualityParams, DegreeSumQuality, HierarchyParams, ImportanceWeights,
    MixWeights, Provenance, QualityScorer, SizeQuality, Snapshot,
};
pub use storage::{
    AccessPattern, ChargeTag, Counters, IOCostOptimizer, IOLogEntry, LatencyModel, LogMode,
    OpKind, OptimizeContext, OptimizedPlan, Plan, PlanOp, TieredStore,
};
