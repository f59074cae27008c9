//! The layered amplified-neighbor cache with full, partial, and mixed-fetch
//! refresh paths, a generation-consistent shared variant, and a versioned
//! binary dump format.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::RwLock;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{derive, domain, rng_from};
use crate::storage::{ChargeTag, OpKind, TieredStore};

/// Magic bytes of the binary dump format shared by caches and snapshots.
pub const DUMP_MAGIC: &[u8; 5] = b"GSSC1";
pub(crate) const DUMP_KIND_CACHE: u8 = 1;
pub(crate) const DUMP_KIND_SNAPSHOT: u8 = 2;

/// One node's cached neighbor sample at a fixed layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedNeighborhood {
    pub node: NodeId,
    pub entries: Vec<NodeId>,
    /// Batch counter at which each entry was inserted, parallel to `entries`.
    pub insertion_epoch: Vec<u64>,
    pub capacity: usize,
}

/// Per-layer, per-node amplified neighbor lists with refresh bookkeeping.
///
/// Layer `l` holds, for every node `v`, a uniform sample of `v`'s neighbors
/// of size `min(deg(v), ceil(fanouts[l] * amp_rate))`. The cache is
/// initialized over all nodes of the graph it serves.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredCache {
    layers: Vec<Vec<CachedNeighborhood>>,
    fanouts: Vec<usize>,
    amp_rate: f64,
    batch: u64,
    refresh_period: u64,
}

/// Fraction of each node's entries replaced by a periodic partial refresh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshPolicy {
    pub gamma: f64,
    pub period: u64,
}

impl RefreshPolicy {
    pub fn new(gamma: f64, period: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid_argument("refresh rate must be in [0, 1]"));
        }
        if period == 0 {
            return Err(Error::invalid_argument("refresh period must be >= 1"));
        }
        Ok(RefreshPolicy { gamma, period })
    }
}

/// Fraction of each sample drawn fresh from disk by a mixed fetch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetchPolicy {
    pub delta: f64,
    pub fetch_period: u64,
}

impl FetchPolicy {
    pub fn new(delta: f64, fetch_period: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::invalid_argument("fetch rate must be in [0, 1]"));
        }
        if fetch_period == 0 {
            return Err(Error::invalid_argument("fetch period must be >= 1"));
        }
        Ok(FetchPolicy { delta, fetch_period })
    }
}

pub(crate) fn amplified_capacity(fanout: usize, amp_rate: f64) -> usize {
    (fanout as f64 * amp_rate).ceil() as usize
}

/// Uniform sample without replacement of `k` positions from `list`,
/// deduplicated by value (duplicates only arise on multigraph edge lists).
fn sample_without_replacement<R: Rng>(rng: &mut R, list: &[NodeId], k: usize) -> Vec<NodeId> {
    let k = k.min(list.len());
    if k == 0 {
        return Vec::new();
    }
    let picked = index::sample(rng, list.len(), k);
    let mut out = Vec::with_capacity(k);
    let mut seen = BTreeSet::new();
    for i in picked.iter() {
        let v = list[i];
        if seen.insert(v) {
            out.push(v);
        }
    }
    out
}

fn charge_each(
    store: &mut Option<&mut TieredStore>,
    op: OpKind,
    tag: ChargeTag,
    node: NodeId,
    count: usize,
) {
    if let Some(s) = store.as_deref_mut() {
        for _ in 0..count {
            s.charge(op, tag, Some(node));
        }
    }
}

/// Pre-samples the cache for every node and layer. Every inserted entry
/// charges one simulated disk read when a store is attached.
pub fn init_cache(
    g: &Graph,
    fanouts: &[usize],
    amp_rate: f64,
    seed: u64,
    mut store: Option<&mut TieredStore>,
) -> Result<LayeredCache> {
    if amp_rate < 1.0 {
        return Err(Error::config("amp_rate must be >= 1"));
    }
    let mut layers = Vec::with_capacity(fanouts.len());
    for (l, &fanout) in fanouts.iter().enumerate() {
        let capacity = amplified_capacity(fanout, amp_rate);
        let mut layer = Vec::with_capacity(g.node_count());
        let mut rng = rng_from(derive(seed, &[domain::INIT, l as u64]));
        for v in g.nodes() {
            let entries = sample_without_replacement(&mut rng, g.out_neighbors(v), capacity);
            charge_each(&mut store, OpKind::DiskRead, ChargeTag::Init, v, entries.len());
            let epochs = vec![0; entries.len()];
            layer.push(CachedNeighborhood {
                node: v,
                entries,
                insertion_epoch: epochs,
                capacity,
            });
        }
        layers.push(layer);
    }
    Ok(LayeredCache {
        layers,
        fanouts: fanouts.to_vec(),
        amp_rate,
        batch: 0,
        refresh_period: 1,
    })
}

impl LayeredCache {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn node_count(&self) -> usize {
        self.layers.first().map_or(0, |l| l.len())
    }

    pub fn fanouts(&self) -> &[usize] {
        &self.fanouts
    }

    pub fn amp_rate(&self) -> f64 {
        self.amp_rate
    }

    pub fn batch(&self) -> u64 {
        self.batch
    }

    /// Advances the batch counter; it never decreases.
    pub fn set_batch(&mut self, t: u64) {
        debug_assert!(t >= self.batch, "batch counter must not decrease");
        self.batch = self.batch.max(t);
    }

    pub fn refresh_period(&self) -> u64 {
        self.refresh_period
    }

    pub fn set_refresh_period(&mut self, period: u64) {
        self.refresh_period = period.max(1);
    }

    pub fn neighborhood(&self, layer: usize, node: NodeId) -> Result<&CachedNeighborhood> {
        let l = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::invalid_argument(format!("layer {layer} out of range")))?;
        l.get(node as usize).ok_or_else(|| {
            Error::State(format!("cache holds no entry for node {node}; not initialized"))
        })
    }

    /// Total live entries across all layers; the runtime-memory proxy.
    pub fn total_entries(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.iter().map(|n| n.entries.len()).sum::<usize>())
            .sum()
    }
}

/// Freshly resamples every per-node entry list to capacity, as at init.
pub fn refresh_cache_full(
    cache: &mut LayeredCache,
    g: &Graph,
    seed: u64,
    mut store: Option<&mut TieredStore>,
) -> Result<()> {
    let t = cache.batch;
    for l in 0..cache.layers.len() {
        let capacity = amplified_capacity(cache.fanouts[l], cache.amp_rate);
        let mut rng = rng_from(derive(seed, &[domain::REFRESH, l as u64]));
        for v in 0..cache.layers[l].len() as NodeId {
            let entries = sample_without_replacement(&mut rng, g.out_neighbors(v), capacity);
            charge_each(
                &mut store,
                OpKind::DiskRead,
                ChargeTag::Refresh,
                v,
                entries.len(),
            );
            let slot = &mut cache.layers[l][v as usize];
            slot.insertion_epoch = vec![t; entries.len()];
            slot.entries = entries;
            slot.capacity = capacity;
        }
    }
    Ok(())
}

/// Replaces `ceil(gamma * |entries|)` entries per node in one layer.
///
/// Evicted entries are the oldest by insertion epoch (ties by ascending
/// neighbor id); replacements are fresh uniform disk samples drawn from
/// neighbors not currently retained, each charging one disk read.
pub fn refresh_cache_partial(
    cache: &mut LayeredCache,
    layer: usize,
    gamma: f64,
    g: &Graph,
    seed: u64,
    mut store: Option<&mut TieredStore>,
) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid_argument("gamma must be in [0, 1]"));
    }
    if layer >= cache.layers.len() {
        return Err(Error::invalid_argument(format!("layer {layer} out of range")));
    }
    if gamma == 0.0 {
        return Ok(());
    }
    let t = cache.batch;
    let mut rng = rng_from(derive(seed, &[domain::REFRESH, layer as u64]));
    for v in 0..cache.layers[layer].len() as NodeId {
        let slot = &mut cache.layers[layer][v as usize];
        let n = slot.entries.len();
        let n_new = (gamma * n as f64).ceil() as usize;
        if n_new == 0 {
            continue;
        }
        // oldest epoch first, ties by ascending neighbor id
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (slot.insertion_epoch[i], slot.entries[i]));
        let retained_idx: BTreeSet<usize> = order[n_new..].iter().copied().collect();
        let mut retained_entries = Vec::with_capacity(n - n_new);
        let mut retained_epochs = Vec::with_capacity(n - n_new);
        for i in 0..n {
            if retained_idx.contains(&i) {
                retained_entries.push(slot.entries[i]);
                retained_epochs.push(slot.insertion_epoch[i]);
            }
        }
        let retained_set: BTreeSet<NodeId> = retained_entries.iter().copied().collect();
        let candidates: Vec<NodeId> = g
            .out_neighbors(v)
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|x| !retained_set.contains(x))
            .collect();
        let fresh = sample_without_replacement(&mut rng, &candidates, n_new);
        charge_each(&mut store, OpKind::DiskRead, ChargeTag::Refresh, v, fresh.len());
        for x in fresh {
            retained_entries.push(x);
            retained_epochs.push(t);
        }
        slot.entries = retained_entries;
        slot.insertion_epoch = retained_epochs;
    }
    Ok(())
}

/// Uniform per-seed sample of `min(f_l, |entries|)` cached neighbors.
/// Charges one simulated cache access per seed and performs no disk reads.
pub fn sample_from_cache(
    cache: &LayeredCache,
    layer: usize,
    seeds: &[NodeId],
    fanout: usize,
    seed: u64,
    mut store: Option<&mut TieredStore>,
) -> Result<BTreeMap<NodeId, Vec<NodeId>>> {
    let mut rng = rng_from(derive(seed, &[domain::SAMPLE, layer as u64]));
    let mut out = BTreeMap::new();
    for &s in seeds {
        let hood = cache.neighborhood(layer, s)?;
        if let Some(st) = store.as_deref_mut() {
            st.charge(OpKind::CacheAccess, ChargeTag::Sample, Some(s));
        }
        let picked = sample_without_replacement(&mut rng, &hood.entries, fanout);
        out.insert(s, picked);
    }
    Ok(out)
}

/// Mixed disk/cache fetch: `ceil(delta * f_l)` neighbors freshly sampled
/// from the base graph (disk-charged) and the rest from the cache
/// (cache-charged), duplicates avoided across the two sources, shortfall
/// backfilled from cache then disk. With `delta = 0` this is exactly
/// [`sample_from_cache`].
#[allow(clippy::too_many_arguments)]
pub fn fetch_mixed(
    cache: &mut LayeredCache,
    layer: usize,
    seeds: &[NodeId],
    fanout: usize,
    delta: f64,
    g: &Graph,
    seed: u64,
    mut store: Option<&mut TieredStore>,
    write_back: bool,
) -> Result<BTreeMap<NodeId, Vec<NodeId>>> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::invalid_argument("delta must be in [0, 1]"));
    }
    if delta == 0.0 {
        return sample_from_cache(cache, layer, seeds, fanout, seed, store);
    }
    let t = cache.batch;
    let mut rng = rng_from(derive(seed, &[domain::FETCH, layer as u64]));
    let mut out = BTreeMap::new();
    for &s in seeds {
        let n_disk = (delta * fanout as f64).ceil() as usize;
        let distinct_neighbors: Vec<NodeId> = g
            .out_neighbors(s)
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let disk_part = sample_without_replacement(&mut rng, &distinct_neighbors, n_disk);
        charge_each(&mut store, OpKind::DiskRead, ChargeTag::Fetch, s, disk_part.len());

        let taken: BTreeSet<NodeId> = disk_part.iter().copied().collect();
        let hood = cache.neighborhood(layer, s)?;
        let cache_pool: Vec<NodeId> = hood
            .entries
            .iter()
            .copied()
            .filter(|x| !taken.contains(x))
            .collect();
        let n_cache = fanout.saturating_sub(n_disk);
        let mut cache_part = sample_without_replacement(&mut rng, &cache_pool, n_cache);

        // Shortfall: top up from cache first, then disk.
        let mut result = disk_part.clone();
        result.append(&mut cache_part);
        if result.len() < fanout {
            let have: BTreeSet<NodeId> = result.iter().copied().collect();
            let more_cache: Vec<NodeId> = hood
                .entries
                .iter()
                .copied()
                .filter(|x| !have.contains(x))
                .collect();
            let extra = sample_without_replacement(&mut rng, &more_cache, fanout - result.len());
            result.extend(extra);
        }
        let cache_charged = result.len() - disk_part.len();
        charge_each(&mut store, OpKind::CacheAccess, ChargeTag::Fetch, s, cache_charged);
        if result.len() < fanout {
            let have: BTreeSet<NodeId> = result.iter().copied().collect();
            let more_disk: Vec<NodeId> = distinct_neighbors
                .iter()
                .copied()
                .filter(|x| !have.contains(x))
                .collect();
            let extra = sample_without_replacement(&mut rng, &more_disk, fanout - result.len());
            charge_each(&mut store, OpKind::DiskRead, ChargeTag::Fetch, s, extra.len());
            result.extend(extra);
        }

        if write_back {
            let slot = &mut cache.layers[layer][s as usize];
            for &x in &disk_part {
                if slot.entries.contains(&x) {
                    continue;
                }
                if slot.entries.len() >= slot.capacity {
                    // replace the oldest entry, ties by ascending id
                    if let Some(victim) = (0..slot.entries.len())
                        .min_by_key(|&i| (slot.insertion_epoch[i], slot.entries[i]))
                    {
                        slot.entries[victim] = x;
                        slot.insertion_epoch[victim] = t;
                    }
                } else {
                    slot.entries.push(x);
                    slot.insertion_epoch.push(t);
                }
            }
        }
        out.insert(s, result);
    }
    Ok(out)
}

/// One cache generation served to many concurrent consumers.
///
/// Readers take the lock in shared mode and always observe a complete
/// generation: the per-layer generation tags are only ever advanced while
/// the exclusive refresh lock is held.
#[derive(Debug)]
pub struct SharedCache {
    inner: RwLock<SharedInner>,
    rho: f64,
}

#[derive(Debug)]
struct SharedInner {
    cache: LayeredCache,
    generation: u64,
    layer_generations: Vec<u64>,
}

impl SharedCache {
    pub fn new(cache: LayeredCache, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid_argument("rho must be in [0, 1]"));
        }
        let layer_generations = vec![0; cache.layer_count()];
        Ok(SharedCache {
            inner: RwLock::new(SharedInner {
                cache,
                generation: 0,
                layer_generations,
            }),
            rho,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn generation(&self) -> u64 {
        self.inner.read().unwrap().generation
    }

    /// Runs `f` against a consistent view of the cache and its per-layer
    /// generation tags.
    pub fn read<R>(&self, f: impl FnOnce(&LayeredCache, &[u64]) -> R) -> R {
        let guard = self.inner.read().unwrap();
        f(&guard.cache, &guard.layer_generations)
    }

    /// Exclusive access for the benchmark driver (batch bookkeeping).
    pub fn with_cache_mut<R>(&self, f: impl FnOnce(&mut LayeredCache) -> R) -> R {
        let mut guard = self.inner.write().unwrap();
        f(&mut guard.cache)
    }

    fn refresh_with(
        &self,
        g: &Graph,
        seed: u64,
        mut store: Option<&mut TieredStore>,
        full: bool,
        rho: f64,
    ) -> Result<()> {
        let mut guard = self.inner.write().unwrap();
        if !full && rho == 0.0 {
            return Ok(());
        }
        let next = guard.generation + 1;
        let layer_count = guard.cache.layer_count();
        if full {
            // same code path as the non-shared variant so a single-consumer
            // shared run reproduces it exactly
            refresh_cache_full(&mut guard.cache, g, seed, store.as_deref_mut())?;
            for l in 0..layer_count {
                guard.layer_generations[l] = next;
            }
        } else {
            for l in 0..layer_count {
                refresh_cache_partial(&mut guard.cache, l, rho, g, seed, store.as_deref_mut())?;
                guard.layer_generations[l] = next;
            }
        }
        guard.generation = next;
        Ok(())
    }

    /// Atomic partial refresh of every layer with the configured proportion.
    pub fn refresh_shared(
        &self,
        g: &Graph,
        seed: u64,
        store: Option<&mut TieredStore>,
    ) -> Result<()> {
        self.refresh_with(g, seed, store, false, self.rho)
    }

    /// Atomic full refresh of every layer.
    pub fn refresh_full(
        &self,
        g: &Graph,
        seed: u64,
        store: Option<&mut TieredStore>,
    ) -> Result<()> {
        self.refresh_with(g, seed, store, true, 1.0)
    }
}

/// Applies a partial refresh with `gamma = rho` to every layer atomically.
pub fn shared_refresh(
    shared: &SharedCache,
    rho: f64,
    g: &Graph,
    seed: u64,
    store: Option<&mut TieredStore>,
) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid_argument("rho must be in [0, 1]"));
    }
    shared.refresh_with(g, seed, store, false, rho)
}

// --- binary dump ---------------------------------------------------------

pub(crate) struct DumpWriter {
    pub buf: Vec<u8>,
}

impl DumpWriter {
    pub fn new(kind: u8) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(DUMP_MAGIC);
        buf.push(kind);
        DumpWriter { buf }
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
}

pub(crate) struct DumpReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> DumpReader<'a> {
    pub fn new(buf: &'a [u8], kind: u8) -> Result<Self> {
        if buf.len() < 6 || &buf[..5] != DUMP_MAGIC {
            return Err(Error::parse("bad dump magic; expected GSSC1"));
        }
        if buf[5] != kind {
            return Err(Error::parse(format!(
                "dump kind mismatch: expected {kind}, found {}",
                buf[5]
            )));
        }
        Ok(DumpReader { buf, pos: 6 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::parse("truncated dump"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::parse("trailing bytes in dump"))
        }
    }
}

impl LayeredCache {
    /// Serializes to the versioned `GSSC1` dump.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = DumpWriter::new(DUMP_KIND_CACHE);
        w.u32(self.layers.len() as u32);
        w.u32(self.node_count() as u32);
        w.f64(self.amp_rate);
        w.u64(self.batch);
        w.u64(self.refresh_period);
        for (l, layer) in self.layers.iter().enumerate() {
            w.u32(self.fanouts[l] as u32);
            w.u32(layer.len() as u32);
            for hood in layer {
                w.u32(hood.entries.len() as u32);
                for &e in &hood.entries {
                    w.u32(e);
                }
                for &t in &hood.insertion_epoch {
                    w.u64(t);
                }
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = DumpReader::new(bytes, DUMP_KIND_CACHE)?;
        let layer_count = r.u32()? as usize;
        let node_count = r.u32()? as usize;
        let amp_rate = r.f64()?;
        let batch = r.u64()?;
        let refresh_period = r.u64()?;
        let mut fanouts = Vec::with_capacity(layer_count);
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let fanout = r.u32()? as usize;
            let n = r.u32()? as usize;
            if n != node_count {
                return Err(Error::parse("layer node count mismatch"));
            }
            let capacity = amplified_capacity(fanout, amp_rate);
            let mut layer = Vec::with_capacity(n);
            for v in 0..n {
                let len = r.u32()? as usize;
                let mut entries = Vec::with_capacity(len);
                for _ in 0..len {
                    entries.push(r.u32()?);
                }
                let mut epochs = Vec::with_capacity(len);
                for _ in 0..len {
                    epochs.push(r.u64()?);
                }
                layer.push(CachedNeighborhood {
                    node: v as NodeId,
                    entries,
                    insertion_epoch: epochs,
                    capacity,
                });
            }
            fanouts.push(fanout);
            layers.push(layer);
        }
        r.finish()?;
        Ok(LayeredCache {
            layers,
            fanouts,
            amp_rate,
            batch,
            refresh_period,
        })
    }
}
