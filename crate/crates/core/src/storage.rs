//! Tiered disk/cache/memory simulation: latency charging against a virtual
//! clock, an LRU-buffered payload store, an I/O cost optimizer, and the
//! access log that backs every benchmark counter.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;

use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::rng::{self, domain};

/// Environment variable overriding the latency scale.
pub const SCALE_ENV: &str = "GSS_SIM_SCALE";

/// Default latency scale; keeps simulated runs in the millisecond range.
pub const DEFAULT_SCALE: f64 = 1e-3;

pub const DISK_READ_UNITS: f64 = 5.0011;
pub const DISK_WRITE_UNITS: f64 = 1.0045;
pub const CACHE_ACCESS_UNITS: f64 = 0.0146;

/// Fixed per-operation latencies, charged as `units * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyModel {
    pub disk_read: f64,
    pub disk_write: f64,
    pub cache_access: f64,
    pub scale: f64,
}

impl LatencyModel {
    pub fn with_scale(scale: f64) -> Self {
        LatencyModel {
            disk_read: DISK_READ_UNITS,
            disk_write: DISK_WRITE_UNITS,
            cache_access: CACHE_ACCESS_UNITS,
            scale,
        }
    }

    /// Default scale, overridden by `GSS_SIM_SCALE` when set.
    pub fn from_env() -> Self {
        let scale = std::env::var(SCALE_ENV)
            .ok()
            .and_then(|v| v.parse::<f64>().ok())
            .unwrap_or(DEFAULT_SCALE);
        Self::with_scale(scale)
    }

    pub fn charge_units(&self, op: OpKind) -> f64 {
        let units = match op {
            OpKind::DiskRead => self.disk_read,
            OpKind::DiskWrite => self.disk_write,
            OpKind::CacheAccess => self.cache_access,
        };
        units * self.scale
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self::with_scale(DEFAULT_SCALE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    DiskRead,
    DiskWrite,
    CacheAccess,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::DiskRead => "disk_read",
            OpKind::DiskWrite => "disk_write",
            OpKind::CacheAccess => "cache_access",
        }
    }
}

/// Which phase of a run charged an operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeTag {
    Init,
    Refresh,
    Fetch,
    Sample,
}

impl ChargeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ChargeTag::Init => "init",
            ChargeTag::Refresh => "refresh",
            ChargeTag::Fetch => "fetch",
            ChargeTag::Sample => "sample",
        }
    }
}

/// One charged operation. `node` is absent for bulk pattern charges.
#[derive(Debug, Clone, PartialEq)]
pub struct IOLogEntry {
    pub op: OpKind,
    pub tag: ChargeTag,
    pub node: Option<NodeId>,
    pub batch: u64,
    pub time: f64,
}

/// Log retention policy. `Full` keeps one entry per charge and supports CSV
/// export; `Counts` aggregates per (op, tag, batch) so long benchmark runs
/// stay small.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogMode {
    Full,
    Counts,
}

#[derive(Debug, Clone)]
enum LogStore {
    Full(Vec<IOLogEntry>),
    Counts(BTreeMap<(OpKind, ChargeTag, u64), u64>),
}

/// Monotone counters over all charges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub disk_reads: u64,
    pub disk_writes: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

/// Simulated disk + bounded LRU buffer + virtual clock.
///
/// Payloads are deterministic pseudo-random `d`-byte blobs per node, so
/// dumps reproduce across runs. The store is single-writer; concurrent
/// consumers must serialize charges through it.
#[derive(Debug, Clone)]
pub struct TieredStore {
    node_count: usize,
    payload_dim: usize,
    payload_seed: u64,
    written: HashMap<NodeId, Vec<u8>>,
    buffer: HashMap<NodeId, Vec<u8>>,
    lru: VecDeque<NodeId>,
    buffer_capacity: usize,
    latency: LatencyModel,
    clock: f64,
    counters: Counters,
    log: LogStore,
    batch: u64,
}

impl TieredStore {
    pub fn new(node_count: usize, buffer_capacity: usize, latency: LatencyModel) -> Self {
        Self::with_payloads(node_count, buffer_capacity, latency, 128, 0)
    }

    pub fn with_payloads(
        node_count: usize,
        buffer_capacity: usize,
        latency: LatencyModel,
        payload_dim: usize,
        payload_seed: u64,
    ) -> Self {
        TieredStore {
            node_count,
            payload_dim,
            payload_seed,
            written: HashMap::new(),
            buffer: HashMap::new(),
            lru: VecDeque::new(),
            buffer_capacity: buffer_capacity.max(1),
            latency,
            clock: 0.0,
            counters: Counters::default(),
            log: LogStore::Full(Vec::new()),
            batch: 0,
        }
    }

    pub fn set_log_mode(&mut self, mode: LogMode) {
        self.log = match mode {
            LogMode::Full => LogStore::Full(Vec::new()),
            LogMode::Counts => LogStore::Counts(BTreeMap::new()),
        };
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    pub fn payload_dim(&self) -> usize {
        self.payload_dim
    }

    /// Simulated time accumulated so far. Charges accumulate in charge
    /// order, so in Full log mode the clock equals a fold over the log.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn set_batch(&mut self, t: u64) {
        self.batch = t;
    }

    pub fn batch(&self) -> u64 {
        self.batch
    }

    /// Charges one operation against the clock, counters, and log.
    pub fn charge(&mut self, op: OpKind, tag: ChargeTag, node: Option<NodeId>) {
        let time = self.latency.charge_units(op);
        self.clock += time;
        match op {
            OpKind::DiskRead => self.counters.disk_reads += 1,
            OpKind::DiskWrite => self.counters.disk_writes += 1,
            OpKind::CacheAccess => self.counters.cache_hits += 1,
        }
        match &mut self.log {
            LogStore::Full(entries) => entries.push(IOLogEntry {
                op,
                tag,
                node,
                batch: self.batch,
                time,
            }),
            LogStore::Counts(counts) => {
                *counts.entry((op, tag, self.batch)).or_insert(0) += 1;
            }
        }
    }

    /// The full log, in charge order. Empty in Counts mode.
    pub fn log(&self) -> &[IOLogEntry] {
        match &self.log {
            LogStore::Full(entries) => entries,
            LogStore::Counts(_) => &[],
        }
    }

    /// Per-(op, tag, batch) charge counts, available in both log modes.
    pub fn log_counts(&self) -> BTreeMap<(OpKind, ChargeTag, u64), u64> {
        match &self.log {
            LogStore::Full(entries) => {
                let mut counts = BTreeMap::new();
                for e in entries {
                    *counts.entry((e.op, e.tag, e.batch)).or_insert(0u64) += 1;
                }
                counts
            }
            LogStore::Counts(counts) => counts.clone(),
        }
    }

    /// Exports the full log as `op,tag,node,batch,time` CSV.
    pub fn export_log_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match &self.log {
            LogStore::Counts(_) => Err(Error::State(
                "I/O log CSV export requires full log mode".into(),
            )),
            LogStore::Full(entries) => {
                writeln!(w, "op,tag,node,batch,time")?;
                for e in entries {
                    let node = e.node.map(|n| n.to_string()).unwrap_or_default();
                    writeln!(
                        w,
                        "{},{},{},{},{:.7}",
                        e.op.as_str(),
                        e.tag.as_str(),
                        node,
                        e.batch,
                        e.time
                    )?;
                }
                Ok(())
            }
        }
    }

    fn payload_for(&self, node: NodeId) -> Vec<u8> {
        if let Some(p) = self.written.get(&node) {
            return p.clone();
        }
        let mut rng = rng::rng_from(rng::derive(
            self.payload_seed,
            &[domain::PAYLOAD, node as u64],
        ));
        let mut buf = vec![0u8; self.payload_dim];
        rng.fill_bytes(&mut buf);
        buf
    }

    fn touch_lru(&mut self, node: NodeId) {
        if let Some(pos) = self.lru.iter().position(|&n| n == node) {
            self.lru.remove(pos);
        }
        self.lru.push_back(node);
    }

    fn insert_buffered(&mut self, node: NodeId, payload: Vec<u8>) {
        if !self.buffer.contains_key(&node) && self.buffer.len() >= self.buffer_capacity {
            if let Some(victim) = self.lru.pop_front() {
                self.buffer.remove(&victim);
            }
        }
        self.buffer.insert(node, payload);
        self.touch_lru(node);
    }

    fn check_disk_node(&self, node: NodeId) -> Result<()> {
        if (node as usize) < self.node_count {
            Ok(())
        } else {
            Err(Error::Lookup(format!(
                "node {node} not on disk (node_count {})",
                self.node_count
            )))
        }
    }

    /// Pre-loads payloads into the buffer, charging one disk read each.
    pub fn buffer_load(&mut self, nodes: &[NodeId]) -> Result<()> {
        for &node in nodes {
            self.check_disk_node(node)?;
            self.charge(OpKind::DiskRead, ChargeTag::Fetch, Some(node));
            let payload = self.payload_for(node);
            self.insert_buffered(node, payload);
        }
        Ok(())
    }

    /// Buffer lookup. A hit charges one cache access; a miss charges one
    /// disk read, inserts the payload (evicting LRU on overflow), and counts
    /// a cache miss.
    pub fn buffer_get(&mut self, node: NodeId) -> Result<Vec<u8>> {
        self.check_disk_node(node)?;
        if self.buffer.contains_key(&node) {
            self.charge(OpKind::CacheAccess, ChargeTag::Fetch, Some(node));
            self.touch_lru(node);
            Ok(self.buffer[&node].clone())
        } else {
            self.counters.cache_misses += 1;
            self.charge(OpKind::DiskRead, ChargeTag::Fetch, Some(node));
            let payload = self.payload_for(node);
            self.insert_buffered(node, payload.clone());
            Ok(payload)
        }
    }

    /// Writes a payload through to disk, charging one disk write.
    pub fn buffer_store(&mut self, node: NodeId, payload: Vec<u8>) -> Result<()> {
        self.check_disk_node(node)?;
        self.charge(OpKind::DiskWrite, ChargeTag::Fetch, Some(node));
        self.written.insert(node, payload.clone());
        self.insert_buffered(node, payload);
        Ok(())
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Charges `count` repetitions of a named access pattern.
    pub fn charge_pattern(&mut self, pattern: AccessPattern, count: u64) {
        for _ in 0..count {
            match pattern {
                AccessPattern::KHopSampling => {
                    self.charge(OpKind::DiskRead, ChargeTag::Sample, None);
                    self.charge(OpKind::DiskWrite, ChargeTag::Sample, None);
                }
                AccessPattern::KHopRetrieval => {
                    self.charge(OpKind::CacheAccess, ChargeTag::Sample, None);
                }
                AccessPattern::KHopResampling => {
                    self.charge(OpKind::DiskRead, ChargeTag::Refresh, None);
                    self.charge(OpKind::DiskWrite, ChargeTag::Refresh, None);
                }
            }
        }
    }
}

/// Simulated access patterns: sampling and resampling move data between
/// disk and memory; retrieval touches only the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessPattern {
    KHopSampling,
    KHopRetrieval,
    KHopResampling,
}

/// Linear read/write cost model with load-dependent scaling and two plan
/// rewrites.
#[derive(Debug, Clone, PartialEq)]
pub struct IOCostOptimizer {
    pub read_cost: f64,
    pub write_cost: f64,
    pub load_factor: f64,
    /// `high_load` defers reads beyond this many per plan.
    pub read_ceiling: usize,
}

impl Default for IOCostOptimizer {
    fn default() -> Self {
        IOCostOptimizer {
            read_cost: DISK_READ_UNITS,
            write_cost: DISK_WRITE_UNITS,
            load_factor: 0.0,
            read_ceiling: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanOp {
    Read(NodeId),
    Write(NodeId),
}

/// An ordered sequence of planned I/O operations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Plan {
    pub ops: Vec<PlanOp>,
}

impl Plan {
    pub fn from_ops(ops: Vec<PlanOp>) -> Self {
        Plan { ops }
    }

    pub fn read_count(&self) -> u64 {
        self.ops
            .iter()
            .filter(|op| matches!(op, PlanOp::Read(_)))
            .count() as u64
    }

    pub fn write_count(&self) -> u64 {
        self.ops
            .iter()
            .filter(|op| matches!(op, PlanOp::Write(_)))
            .count() as u64
    }
}

/// A plan after optimization; deferred reads are recorded but not charged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptimizedPlan {
    pub plan: Plan,
    pub deferred_reads: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizeContext {
    HighLoad,
    LowCost,
}

impl IOCostOptimizer {
    /// Estimated cost of `reads` read and `writes` write operations.
    pub fn estimate(&self, reads: u64, writes: u64) -> f64 {
        reads as f64 * self.read_cost + writes as f64 * self.write_cost
    }

    pub fn plan_estimate(&self, plan: &Plan) -> f64 {
        self.estimate(plan.read_count(), plan.write_count())
    }

    /// Scales both costs by `(1 + load)` and records the load factor.
    pub fn adjust(&mut self, load: f64) -> Result<()> {
        if load < 0.0 {
            return Err(Error::invalid_argument("load must be non-negative"));
        }
        self.read_cost *= 1.0 + load;
        self.write_cost *= 1.0 + load;
        self.load_factor = load;
        Ok(())
    }

    /// Rewrites a plan for the given context. `HighLoad` caps charged reads
    /// at the ceiling, deferring the excess as a recorded batch. `LowCost`
    /// merges duplicate reads and moves writes after reads. The estimated
    /// cost of the charged plan never increases.
    pub fn optimize(&self, plan: &Plan, context: OptimizeContext) -> OptimizedPlan {
        match context {
            OptimizeContext::HighLoad => {
                let mut kept = Vec::with_capacity(plan.ops.len());
                let mut deferred = Vec::new();
                let mut reads = 0usize;
                for &op in &plan.ops {
                    match op {
                        PlanOp::Read(node) => {
                            reads += 1;
                            if reads <= self.read_ceiling {
                                kept.push(op);
                            } else {
                                deferred.push(node);
                            }
                        }
                        PlanOp::Write(_) => kept.push(op),
                    }
                }
                OptimizedPlan {
                    plan: Plan { ops: kept },
                    deferred_reads: deferred,
                }
            }
            OptimizeContext::LowCost => {
                let mut seen = std::collections::BTreeSet::new();
                let mut reads = Vec::new();
                let mut writes = Vec::new();
                for &op in &plan.ops {
                    match op {
                        PlanOp::Read(node) => {
                            if seen.insert(node) {
                                reads.push(op);
                            }
                        }
                        PlanOp::Write(_) => writes.push(op),
                    }
                }
                reads.extend(writes);
                OptimizedPlan {
                    plan: Plan { ops: reads },
                    deferred_reads: Vec::new(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(cap: usize) -> TieredStore {
        TieredStore::new(16, cap, LatencyModel::with_scale(1.0))
    }

    #[test]
    fn latency_constants_exact() {
        let m = LatencyModel::with_scale(1.0);
        assert_eq!(m.charge_units(OpKind::DiskRead), 5.0011);
        assert_eq!(m.charge_units(OpKind::DiskWrite), 1.0045);
        assert_eq!(m.charge_units(OpKind::CacheAccess), 0.0146);
    }

    #[test]
    fn buffer_hit_and_miss_charges() {
        let mut s = store(2);
        s.buffer_load(&[0, 1]).unwrap();
        let clock0 = s.clock();
        s.buffer_get(0).unwrap();
        assert_eq!(s.clock() - clock0, 0.0146);
        assert_eq!(s.counters().cache_hits, 1);
        assert_eq!(s.counters().cache_misses, 0);

        let clock1 = s.clock();
        s.buffer_get(2).unwrap();
        assert_eq!(s.clock() - clock1, 5.0011);
        assert_eq!(s.counters().cache_misses, 1);
        assert!(s.buffer.contains_key(&2));
    }

    #[test]
    fn buffer_store_charges_write_and_updates_disk() {
        let mut s = store(2);
        let clock0 = s.clock();
        s.buffer_store(3, vec![9; 4]).unwrap();
        assert_eq!(s.clock() - clock0, 1.0045);
        assert_eq!(s.payload_for(3), vec![9; 4]);
        assert!(s.buffer_get(99).is_err());
    }

    #[test]
    fn lru_eviction_keeps_recent() {
        let mut s = store(2);
        s.buffer_load(&[0, 1]).unwrap();
        s.buffer_get(0).unwrap(); // 0 most recent
        s.buffer_get(2).unwrap(); // evicts 1
        assert!(s.buffer.contains_key(&0));
        assert!(!s.buffer.contains_key(&1));
        assert!(s.buffer_len() <= 2);
        // most recently touched key never misses while within capacity
        let misses = s.counters().cache_misses;
        s.buffer_get(2).unwrap();
        assert_eq!(s.counters().cache_misses, misses);
    }

    #[test]
    fn payloads_are_deterministic_per_node() {
        let a = store(2).payload_for(5);
        let b = store(2).payload_for(5);
        assert_eq!(a, b);
        assert_eq!(a.len(), 128);
        assert_ne!(a, store(2).payload_for(6));
    }

    #[test]
    fn charge_pattern_table() {
        let mut s = store(2);
        s.charge_pattern(AccessPattern::KHopRetrieval, 3);
        assert_eq!(s.counters().cache_hits, 3);
        assert_eq!(s.counters().disk_reads, 0);
        s.charge_pattern(AccessPattern::KHopSampling, 1);
        assert_eq!(s.counters().disk_reads, 1);
        assert_eq!(s.counters().disk_writes, 1);
        let before = s.counters();
        s.charge_pattern(AccessPattern::KHopResampling, 0);
        assert_eq!(s.counters(), before);
    }

    #[test]
    fn clock_reconciles_with_log_and_counters() {
        let mut s = store(4);
        s.buffer_load(&[0, 1, 2]).unwrap();
        s.buffer_get(0).unwrap();
        s.buffer_get(9).unwrap();
        s.buffer_store(1, vec![1]).unwrap();
        s.charge_pattern(AccessPattern::KHopSampling, 2);

        let mut folded = 0.0;
        for e in s.log() {
            folded += e.time;
        }
        assert_eq!(folded, s.clock());

        let c = s.counters();
        let log = s.log();
        let count = |op: OpKind| log.iter().filter(|e| e.op == op).count() as u64;
        assert_eq!(c.disk_reads, count(OpKind::DiskRead));
        assert_eq!(c.disk_writes, count(OpKind::DiskWrite));
        assert_eq!(c.cache_hits, count(OpKind::CacheAccess));
    }

    #[test]
    fn counts_mode_aggregates() {
        let mut s = store(4);
        s.set_log_mode(LogMode::Counts);
        s.set_batch(3);
        s.buffer_load(&[0, 1]).unwrap();
        assert!(s.log().is_empty());
        let counts = s.log_counts();
        assert_eq!(
            counts.get(&(OpKind::DiskRead, ChargeTag::Fetch, 3)),
            Some(&2)
        );
        assert!(s.export_log_csv(Vec::new()).is_err());
    }

    #[test]
    fn csv_export_shape() {
        let mut s = store(2);
        s.buffer_get(0).unwrap();
        let mut buf = Vec::new();
        s.export_log_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("op,tag,node,batch,time"));
        assert_eq!(lines.next(), Some("disk_read,fetch,0,0,5.0011000"));
    }

    #[test]
    fn io_estimate_linear_form() {
        let opt = IOCostOptimizer::default();
        assert!((opt.estimate(2, 1) - 11.0067).abs() < 1e-12);
        assert_eq!(opt.estimate(0, 0), 0.0);
        assert!((opt.estimate(4, 2) - 2.0 * opt.estimate(2, 1)).abs() < 1e-12);
    }

    #[test]
    fn io_adjust_scales_costs() {
        let mut opt = IOCostOptimizer::default();
        let base = opt.estimate(3, 2);
        opt.adjust(0.0).unwrap();
        assert_eq!(opt.estimate(3, 2), base);
        opt.adjust(1.0).unwrap();
        assert!((opt.estimate(3, 2) - 2.0 * base).abs() < 1e-9);
        assert_eq!(opt.load_factor, 1.0);
        assert!(opt.adjust(-0.5).is_err());
    }

    #[test]
    fn optimize_low_cost_merges_and_reorders() {
        let opt = IOCostOptimizer::default();
        let plan = Plan::from_ops(vec![
            PlanOp::Write(7),
            PlanOp::Read(1),
            PlanOp::Read(1),
            PlanOp::Read(2),
        ]);
        let before = opt.plan_estimate(&plan);
        let out = opt.optimize(&plan, OptimizeContext::LowCost);
        assert_eq!(
            out.plan.ops,
            vec![PlanOp::Read(1), PlanOp::Read(2), PlanOp::Write(7)]
        );
        assert!(opt.plan_estimate(&out.plan) < before);
    }

    #[test]
    fn optimize_high_load_caps_reads() {
        let mut opt = IOCostOptimizer::default();
        opt.read_ceiling = 2;
        let plan = Plan::from_ops(vec![
            PlanOp::Read(1),
            PlanOp::Read(2),
            PlanOp::Read(3),
            PlanOp::Write(4),
        ]);
        let out = opt.optimize(&plan, OptimizeContext::HighLoad);
        assert_eq!(out.plan.read_count(), 2);
        assert_eq!(out.deferred_reads, vec![3]);
        assert!(opt.plan_estimate(&out.plan) <= opt.plan_estimate(&plan));

        // within ceiling: unchanged
        let small = Plan::from_ops(vec![PlanOp::Read(1)]);
        let out = opt.optimize(&small, OptimizeContext::HighLoad);
        assert_eq!(out.plan, small);
        assert!(out.deferred_reads.is_empty());

        // empty plan: unchanged, cost 0
        let empty = Plan::default();
        let out = opt.optimize(&empty, OptimizeContext::LowCost);
        assert_eq!(out.plan, empty);
        assert_eq!(opt.plan_estimate(&out.plan), 0.0);
    }
}
