#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use learned_gc::{Heap, HeapConfig, ObjectId, SiteId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// the heap's maps use a fixed hasher, so iteration order is reproducible
fn live_ids(heap: &Heap) -> Vec<ObjectId> {
    heap.objects().map(|o| o.id).collect()
}

pub fn drop_random_root(heap: &mut Heap, rng: &mut ChaCha8Rng) {
    let rooted: Vec<ObjectId> = heap.roots().map(|(id, _)| id).collect();
    if !rooted.is_empty() {
        heap.remove_root(rooted[rng.gen_range(0..rooted.len())])
            .unwrap();
    }
}

/// One random mutation: allocate, link, unlink, unroot or collect.
pub fn random_mutation(heap: &mut Heap, rng: &mut ChaCha8Rng, collect_prob: f64) {
    let ids = live_ids(heap);
    let roll: f64 = rng.gen();
    if ids.is_empty() || roll < 0.4 {
        let n = rng.gen_range(0..=3.min(ids.len()));
        let refs: Vec<ObjectId> = (0..n).map(|_| ids[rng.gen_range(0..ids.len())]).collect();
        let id = heap
            .allocate(SiteId(rng.gen_range(0..8)), rng.gen_range(1..512), &refs)
            .unwrap();
        heap.add_root(id).unwrap();
        if rng.gen_bool(0.5) {
            heap.remove_root(id).unwrap();
        }
    } else if roll < 0.65 {
        let from = ids[rng.gen_range(0..ids.len())];
        let to = ids[rng.gen_range(0..ids.len())];
        heap.add_ref(from, to).unwrap();
    } else if roll < 0.8 {
        let from = ids[rng.gen_range(0..ids.len())];
        let refs = heap.object(from).unwrap().out_refs.clone();
        if !refs.is_empty() {
            heap.remove_ref(from, refs[rng.gen_range(0..refs.len())])
                .unwrap();
        }
    } else if roll < 1.0 - collect_prob {
        drop_random_root(heap, rng);
    } else {
        let g = rng.gen_range(1..=heap.num_generations());
        heap.collect(g).unwrap();
    }
}

/// A heap of at most `max_objects` live objects spread over all
/// generations, with random cycles and roots.
pub fn random_heap(seed: u64, max_objects: usize) -> Heap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heap = Heap::new(HeapConfig::default()).unwrap();
    let target = rng.gen_range(1..=max_objects);
    let mut steps = 0;
    while heap.len() < target && steps < 20 * max_objects {
        random_mutation(&mut heap, &mut rng, 0.02);
        steps += 1;
    }
    heap
}

/// Objects in generations `<= g` that are not reachable from the roots or
/// from any object in an older generation. Plain BFS over the whole graph.
pub fn oracle_garbage(heap: &Heap, g: u8) -> HashSet<ObjectId> {
    let mut seen: HashSet<ObjectId> = HashSet::new();
    let mut queue: VecDeque<ObjectId> = VecDeque::new();
    for (id, _) in heap.roots() {
        if seen.insert(id) {
            queue.push_back(id);
        }
    }
    for o in heap.objects().filter(|o| o.generation > g) {
        if seen.insert(o.id) {
            queue.push_back(o.id);
        }
    }
    while let Some(id) = queue.pop_front() {
        for &t in &heap.object(id).unwrap().out_refs {
            if seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    heap.objects()
        .filter(|o| o.generation <= g && !seen.contains(&o.id))
        .map(|o| o.id)
        .collect()
}

/// The objects `collect(g)` actually freed.
pub fn collect_and_diff(heap: &mut Heap, g: u8) -> HashSet<ObjectId> {
    let before: HashSet<ObjectId> = heap.objects().map(|o| o.id).collect();
    heap.collect(g).unwrap();
    let after: HashSet<ObjectId> = heap.objects().map(|o| o.id).collect();
    before.difference(&after).copied().collect()
}
