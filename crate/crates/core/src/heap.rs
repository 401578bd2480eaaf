//! Deterministic generational heap with reference counting and
//! per-generation mark-and-sweep.
//!
//! Objects enter generation 1. Reference counts are maintained eagerly and an
//! object whose count reaches zero is freed immediately, recursively. Cycles
//! survive reference counting and are only reclaimed by [`Heap::collect`],
//! which marks from the root set plus every object in an older (uncollected)
//! generation, frees whatever is unmarked, and promotes the survivors.
//!
//! Time is virtual: allocations and per-object scans advance a tick counter.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time unit.
pub type Ticks = u64;

/// Identifier of a heap object. Never reused within a heap's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectId(pub u64);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A program location that performs allocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteId(pub u32);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeapError {
    #[error("object {0} is not live")]
    UnknownObject(ObjectId),
    #[error("allocation size must be positive")]
    ZeroSize,
    #[error("object {0} is not in the root set")]
    NotRooted(ObjectId),
    #[error("no edge {from} -> {to}")]
    MissingEdge { from: ObjectId, to: ObjectId },
    #[error("generation {generation} outside 1..={max}")]
    GenerationOutOfRange { generation: u8, max: u8 },
    #[error("object {id} still has {ref_count} references")]
    StillReferenced { id: ObjectId, ref_count: u32 },
    #[error("heap needs at least one generation")]
    NoGenerations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeapConfig {
    pub num_generations: u8,
    pub alloc_cost_ticks: Ticks,
    pub scan_cost_ticks: Ticks,
}

impl Default for HeapConfig {
    fn default() -> Self {
        Self {
            num_generations: 3,
            alloc_cost_ticks: 1,
            scan_cost_ticks: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeapObject {
    pub id: ObjectId,
    pub site: SiteId,
    pub size: u64,
    /// 1-based generation index.
    pub generation: u8,
    /// Outgoing references; duplicates allowed.
    pub out_refs: Vec<ObjectId>,
    /// Root entries plus incoming edges from live objects.
    pub ref_count: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub generation_collected: u8,
    pub objects_scanned: u64,
    pub objects_freed: u64,
    pub bytes_freed: u64,
    pub cost_ticks: Ticks,
}

/// Running totals since the heap was created.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HeapCounters {
    pub allocations: u64,
    pub refcount_frees: u64,
    pub collector_frees: u64,
}

#[derive(Debug, Clone)]
pub struct Heap {
    config: HeapConfig,
    objects: FxHashMap<ObjectId, HeapObject>,
    roots: FxHashMap<ObjectId, u32>,
    members: Vec<FxHashSet<ObjectId>>,
    live_bytes: u64,
    clock: Ticks,
    next_id: u64,
    counters: HeapCounters,
}

impl Heap {
    pub fn new(config: HeapConfig) -> Result<Self, HeapError> {
        if config.num_generations == 0 {
            return Err(HeapError::NoGenerations);
        }
        Ok(Self {
            config,
            objects: FxHashMap::default(),
            roots: FxHashMap::default(),
            members: vec![FxHashSet::default(); config.num_generations as usize],
            live_bytes: 0,
            clock: 0,
            next_id: 0,
            counters: HeapCounters::default(),
        })
    }

    pub fn config(&self) -> &HeapConfig {
        &self.config
    }

    pub fn num_generations(&self) -> u8 {
        self.config.num_generations
    }

    pub fn live_bytes(&self) -> u64 {
        self.live_bytes
    }

    pub fn clock(&self) -> Ticks {
        self.clock
    }

    /// Charges mutator work to the virtual clock.
    pub fn advance_clock(&mut self, ticks: Ticks) {
        self.clock += ticks;
    }

    pub fn counters(&self) -> HeapCounters {
        self.counters
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn is_live(&self, id: ObjectId) -> bool {
        self.objects.contains_key(&id)
    }

    pub fn object(&self, id: ObjectId) -> Option<&HeapObject> {
        self.objects.get(&id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &HeapObject> {
        self.objects.values()
    }

    /// Number of root entries naming `id` (0 if unrooted).
    pub fn root_count(&self, id: ObjectId) -> u32 {
        self.roots.get(&id).copied().unwrap_or(0)
    }

    /// Root multiset as `(id, multiplicity)` pairs.
    pub fn roots(&self) -> impl Iterator<Item = (ObjectId, u32)> + '_ {
        self.roots.iter().map(|(&id, &n)| (id, n))
    }

    pub fn generation_len(&self, generation: u8) -> usize {
        generation
            .checked_sub(1)
            .and_then(|i| self.members.get(i as usize))
            .map_or(0, |m| m.len())
    }

    pub fn allocate(
        &mut self,
        site: SiteId,
        size: u64,
        initial_refs: &[ObjectId],
    ) -> Result<ObjectId, HeapError> {
        if size == 0 {
            return Err(HeapError::ZeroSize);
        }
        if let Some(&bad) = initial_refs.iter().find(|r| !self.objects.contains_key(r)) {
            return Err(HeapError::UnknownObject(bad));
        }
        let id = ObjectId(self.next_id);
        self.next_id += 1;
        for target in initial_refs {
            self.obj_mut(*target).ref_count += 1;
        }
        self.objects.insert(
            id,
            HeapObject {
                id,
                site,
                size,
                generation: 1,
                out_refs: initial_refs.to_vec(),
                ref_count: 0,
            },
        );
        self.members[0].insert(id);
        self.live_bytes += size;
        self.clock += self.config.alloc_cost_ticks;
        self.counters.allocations += 1;
        Ok(id)
    }

    pub fn add_root(&mut self, id: ObjectId) -> Result<(), HeapError> {
        let obj = self
            .objects
            .get_mut(&id)
            .ok_or(HeapError::UnknownObject(id))?;
        obj.ref_count += 1;
        *self.roots.entry(id).or_insert(0) += 1;
        Ok(())
    }

    /// Drops one root entry; frees by cascade if nothing else refers to `id`.
    /// Returns the bytes freed.
    pub fn remove_root(&mut self, id: ObjectId) -> Result<u64, HeapError> {
        let slot = self.roots.get_mut(&id).ok_or(HeapError::NotRooted(id))?;
        *slot -= 1;
        if *slot == 0 {
            self.roots.remove(&id);
        }
        self.release(id)
    }

    pub fn add_ref(&mut self, from: ObjectId, to: ObjectId) -> Result<(), HeapError> {
        if !self.objects.contains_key(&to) {
            return Err(HeapError::UnknownObject(to));
        }
        self.objects
            .get_mut(&from)
            .ok_or(HeapError::UnknownObject(from))?
            .out_refs
            .push(to);
        self.obj_mut(to).ref_count += 1;
        Ok(())
    }

    /// Removes one `from -> to` edge. Returns the bytes freed by the cascade.
    pub fn remove_ref(&mut self, from: ObjectId, to: ObjectId) -> Result<u64, HeapError> {
        if !self.objects.contains_key(&to) {
            return Err(HeapError::UnknownObject(to));
        }
        let src = self
            .objects
            .get_mut(&from)
            .ok_or(HeapError::UnknownObject(from))?;
        let pos = src
            .out_refs
            .iter()
            .position(|&r| r == to)
            .ok_or(HeapError::MissingEdge { from, to })?;
        src.out_refs.swap_remove(pos);
        self.release(to)
    }

    fn release(&mut self, id: ObjectId) -> Result<u64, HeapError> {
        let obj = self.obj_mut(id);
        obj.ref_count -= 1;
        if obj.ref_count == 0 {
            self.cascade_free(id)
        } else {
            Ok(0)
        }
    }

    /// Frees an object whose reference count is zero, then everything that
    /// drops to zero as a consequence.
    pub fn cascade_free(&mut self, id: ObjectId) -> Result<u64, HeapError> {
        let obj = self.objects.get(&id).ok_or(HeapError::UnknownObject(id))?;
        if obj.ref_count != 0 {
            return Err(HeapError::StillReferenced {
                id,
                ref_count: obj.ref_count,
            });
        }
        let mut freed = 0;
        let mut pending = vec![id];
        while let Some(next) = pending.pop() {
            let obj = self.remove_object(next);
            freed += obj.size;
            self.counters.refcount_frees += 1;
            for target in obj.out_refs {
                let t = self.obj_mut(target);
                t.ref_count -= 1;
                if t.ref_count == 0 {
                    pending.push(target);
                }
            }
        }
        Ok(freed)
    }

    /// Mark-and-sweep over generations `1..=generation`.
    ///
    /// Candidates are all objects in those generations. A candidate is an
    /// external root if its reference count exceeds the references it gets
    /// from other candidates, i.e. it is referenced by the root set or by an
    /// older generation. Everything reachable from those within the candidate
    /// set survives and is promoted to `min(generation + 1, |G|)`.
    pub fn collect(&mut self, generation: u8) -> Result<CollectionStats, HeapError> {
        let max = self.config.num_generations;
        if generation == 0 || generation > max {
            return Err(HeapError::GenerationOutOfRange { generation, max });
        }
        let young = generation as usize;

        let mut external: FxHashMap<ObjectId, i64> = FxHashMap::default();
        for set in &self.members[..young] {
            for id in set {
                external.insert(*id, i64::from(self.objects[id].ref_count));
            }
        }
        for set in &self.members[..young] {
            for id in set {
                for target in &self.objects[id].out_refs {
                    if let Some(n) = external.get_mut(target) {
                        *n -= 1;
                    }
                }
            }
        }

        let mut marked: FxHashSet<ObjectId> = FxHashSet::default();
        let mut queue: VecDeque<ObjectId> = external
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(&id, _)| id)
            .collect();
        marked.extend(queue.iter().copied());
        while let Some(id) = queue.pop_front() {
            for target in &self.objects[&id].out_refs {
                if external.contains_key(target) && marked.insert(*target) {
                    queue.push_back(*target);
                }
            }
        }

        let garbage: Vec<ObjectId> = external
            .keys()
            .filter(|id| !marked.contains(id))
            .copied()
            .collect();
        let garbage_set: FxHashSet<ObjectId> = garbage.iter().copied().collect();

        let mut bytes_freed = 0;
        for id in &garbage {
            let obj = self.remove_object(*id);
            bytes_freed += obj.size;
            // survivors lose the incoming edge; liveness is already decided
            for target in obj.out_refs {
                if !garbage_set.contains(&target) {
                    self.obj_mut(target).ref_count -= 1;
                }
            }
        }
        self.counters.collector_frees += garbage.len() as u64;

        let dest = generation.saturating_add(1).min(max);
        let dest_idx = dest as usize - 1;
        for src_idx in 0..young {
            if src_idx == dest_idx {
                continue;
            }
            let moved = std::mem::take(&mut self.members[src_idx]);
            for id in &moved {
                self.obj_mut(*id).generation = dest;
            }
            self.members[dest_idx].extend(moved);
        }

        let scanned = external.len() as u64;
        let cost = scanned * self.config.scan_cost_ticks;
        self.clock += cost;
        Ok(CollectionStats {
            generation_collected: generation,
            objects_scanned: scanned,
            objects_freed: garbage.len() as u64,
            bytes_freed,
            cost_ticks: cost,
        })
    }

    /// Objects reachable from the root set by plain graph traversal.
    pub fn reachable_set(&self) -> FxHashSet<ObjectId> {
        let mut seen: FxHashSet<ObjectId> = self.roots.keys().copied().collect();
        let mut stack: Vec<ObjectId> = seen.iter().copied().collect();
        while let Some(id) = stack.pop() {
            for target in &self.objects[&id].out_refs {
                if seen.insert(*target) {
                    stack.push(*target);
                }
            }
        }
        seen
    }

    /// Recounts reference counts and live bytes from scratch and compares
    /// them to the stored values.
    pub fn check_consistency(&self) -> Result<(), String> {
        let mut counts: FxHashMap<ObjectId, u32> = FxHashMap::default();
        let mut bytes = 0;
        for (&id, &n) in &self.roots {
            if !self.objects.contains_key(&id) {
                return Err(format!("root {id} is not live"));
            }
            *counts.entry(id).or_insert(0) += n;
        }
        for obj in self.objects.values() {
            bytes += obj.size;
            if self
                .members
                .get(obj.generation as usize - 1)
                .map(|m| m.contains(&obj.id))
                != Some(true)
            {
                return Err(format!(
                    "object {} missing from generation {}",
                    obj.id, obj.generation
                ));
            }
            for target in &obj.out_refs {
                if !self.objects.contains_key(target) {
                    return Err(format!(
                        "edge {} -> {target} points at a dead object",
                        obj.id
                    ));
                }
                *counts.entry(*target).or_insert(0) += 1;
            }
        }
        for obj in self.objects.values() {
            let expected = counts.get(&obj.id).copied().unwrap_or(0);
            if obj.ref_count != expected {
                return Err(format!(
                    "object {} stores ref_count {} but has {expected} references",
                    obj.id, obj.ref_count
                ));
            }
        }
        if bytes != self.live_bytes {
            return Err(format!(
                "live_bytes {} but objects sum to {bytes}",
                self.live_bytes
            ));
        }
        let member_total: usize = self.members.iter().map(|m| m.len()).sum();
        if member_total != self.objects.len() {
            return Err("generation membership out of sync".into());
        }
        Ok(())
    }

    /// Writes the object graph as a sorted edge list: `R id` for each root
    /// entry, then `from to` for each edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut roots: Vec<_> = self.roots.iter().collect();
        roots.sort();
        for (id, n) in roots {
            for _ in 0..*n {
                writeln!(out, "R {id}")?;
            }
        }
        let mut edges: Vec<(ObjectId, ObjectId)> = self
            .objects
            .values()
            .flat_map(|o| o.out_refs.iter().map(move |t| (o.id, *t)))
            .collect();
        edges.sort();
        for (from, to) in edges {
            writeln!(out, "{from} {to}")?;
        }
        Ok(())
    }

    fn obj_mut(&mut self, id: ObjectId) -> &mut HeapObject {
        self.objects
            .get_mut(&id)
            .unwrap_or_else(|| panic!("heap invariant broken: {id} referenced but not live"))
    }

    fn remove_object(&mut self, id: ObjectId) -> HeapObject {
        let obj = self
            .objects
            .remove(&id)
            .unwrap_or_else(|| panic!("heap invariant broken: freeing dead object {id}"));
        self.members[obj.generation as usize - 1].remove(&id);
        self.live_bytes -= obj.size;
        obj
    }
}
