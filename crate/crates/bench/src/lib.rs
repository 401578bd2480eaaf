//! Fixtures shared by the simulator benchmarks.

use learned_gc::{Heap, HeapConfig, ObjectId, SiteId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A heap of `objects` objects with about `edges_per_object` random
/// out-edges each and roughly one root in `root_every`.
pub fn random_heap(objects: usize, edges_per_object: usize, root_every: usize, seed: u64) -> Heap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heap = Heap::new(HeapConfig::default()).expect("default config is valid");
    let mut ids: Vec<ObjectId> = Vec::with_capacity(objects);
    for _ in 0..objects {
        let id = heap
            .allocate(SiteId(rng.gen_range(0..16)), 64, &[])
            .expect("positive size");
        heap.add_root(id).expect("fresh object");
        ids.push(id);
    }
    for &from in &ids {
        for _ in 0..edges_per_object {
            let to = ids[rng.gen_range(0..ids.len())];
            heap.add_ref(from, to).expect("both live");
        }
    }
    for (i, &id) in ids.iter().enumerate() {
        if i % root_every.max(1) != 0 {
            heap.remove_root(id).expect("rooted once");
        }
    }
    heap
}
