//! The living population: an ordered multiset of fitnesses in `[0, 1]`.
//!
//! Two stores back a [`Population`]:
//!
//! * materialized fitnesses, kept in a chunked sorted list indexed by a
//!   Fenwick tree over chunk sizes, so rank queries and removal of the `k`
//!   smallest cost `O(log n)` plus the chunk edit;
//! * a lazy dyadic block holding points known only to be i.i.d. uniform on
//!   `[0, 1)`. A node stores how many points fall in its dyadic interval;
//!   children receive a `Binomial(pending, 1/2)` split only when a query
//!   needs to look inside. Leaves are revealed into the materialized store
//!   once they hold at most [`LEAF_CAP`] points. This keeps batches of
//!   billions of newborns representable in a few kilobytes while every
//!   answer stays exactly distributed.

use std::cmp::Ordering;

use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::rng::{Lane, RngStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PopulationError {
    #[error("fitness {value} is outside [0, 1]")]
    OutOfRangeFitness { value: f64 },
    #[error("rank {rank} out of range for population of size {size}")]
    IndexOutOfRange { rank: u64, size: u64 },
}

/// Target chunk length; chunks split at twice this.
const LOAD: usize = 512;
/// Lazy leaves with at most this many points are revealed whole.
pub const LEAF_CAP: u64 = 32;
/// Dyadic depth at which lazy leaves are revealed regardless of size.
const MAX_DEPTH: u32 = 48;

#[derive(Clone, Copy, Debug)]
struct Entry {
    fitness: f64,
    seq: u64,
}

impl Entry {
    fn cmp_key(&self, other: &Entry) -> Ordering {
        self.fitness
            .total_cmp(&other.fitness)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Sorted list of entries split into chunks of roughly [`LOAD`] elements.
#[derive(Clone, Debug, Default)]
struct SortedChunks {
    chunks: Vec<Vec<Entry>>,
    /// 1-based Fenwick tree over chunk lengths.
    fenwick: Vec<u64>,
    len: u64,
}

impl SortedChunks {
    fn rebuild(&mut self) {
        let n = self.chunks.len();
        self.fenwick = vec![0; n + 1];
        for (i, c) in self.chunks.iter().enumerate() {
            self.fenwick[i + 1] += c.len() as u64;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                self.fenwick[parent] = self.fenwick[parent].wrapping_add(self.fenwick[i + 1]);
            }
        }
    }

    fn fenwick_add(&mut self, chunk: usize, delta: i64) {
        let mut i = chunk + 1;
        while i < self.fenwick.len() {
            self.fenwick[i] = self.fenwick[i].wrapping_add(delta as u64);
            i += i & i.wrapping_neg();
        }
    }

    /// Total length of `chunks[..chunk]`.
    fn prefix(&self, chunk: usize) -> u64 {
        let mut i = chunk;
        let mut sum = 0u64;
        while i > 0 {
            sum = sum.wrapping_add(self.fenwick[i]);
            i -= i & i.wrapping_neg();
        }
        sum
    }

    fn insert(&mut self, e: Entry) {
        self.len += 1;
        if self.chunks.is_empty() {
            self.chunks.push(vec![e]);
            self.rebuild();
            return;
        }
        let last = self.chunks.len() - 1;
        let i = self
            .chunks
            .partition_point(|c| {
                c.last().expect("chunks are never empty").cmp_key(&e) == Ordering::Less
            })
            .min(last);
        let chunk = &mut self.chunks[i];
        let pos = chunk.partition_point(|x| x.cmp_key(&e) == Ordering::Less);
        chunk.insert(pos, e);
        if chunk.len() > 2 * LOAD {
            let tail = chunk.split_off(LOAD);
            self.chunks.insert(i + 1, tail);
            self.rebuild();
        } else {
            self.fenwick_add(i, 1);
        }
    }

    fn remove_smallest(&mut self, k: u64) {
        let mut rest = k.min(self.len);
        self.len -= rest;
        let whole = self
            .chunks
            .iter()
            .take_while(|c| {
                let fits = c.len() as u64 <= rest;
                if fits {
                    rest -= c.len() as u64;
                }
                fits
            })
            .count();
        if whole > 0 {
            self.chunks.drain(..whole);
        }
        if rest > 0 {
            self.chunks[0].drain(..rest as usize);
        }
        if whole > 0 {
            self.rebuild();
        } else if rest > 0 {
            self.fenwick_add(0, -(rest as i64));
        }
    }

    fn count_below(&self, x: f64) -> u64 {
        let i = self
            .chunks
            .partition_point(|c| c.last().expect("chunks are never empty").fitness < x);
        let within = self
            .chunks
            .get(i)
            .map_or(0, |c| c.partition_point(|e| e.fitness < x) as u64);
        self.prefix(i) + within
    }

    /// The `k`-th smallest (1-based).
    fn kth(&self, k: u64) -> Option<f64> {
        if k == 0 || k > self.len {
            return None;
        }
        // Fenwick descent for the last chunk whose prefix is < k
        let n = self.chunks.len();
        let mut pos = 0usize;
        let mut rem = k;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.fenwick[next] < rem {
                pos = next;
                rem -= self.fenwick[next];
            }
            step >>= 1;
        }
        Some(self.chunks[pos][(rem - 1) as usize].fitness)
    }

    fn iter(&self) -> impl Iterator<Item = &Entry> + '_ {
        self.chunks.iter().flatten()
    }

    fn clear(&mut self) {
        self.chunks.clear();
        self.fenwick = vec![0];
        self.len = 0;
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Node {
    total: u64,
    /// Points not yet split between the children. Equals `total` when
    /// there are no children.
    pending: u64,
    kids: Option<Box<[Node; 2]>>,
}

/// Randomness for the lazy block. Every split and every reveal draws from
/// its own substream keyed by the node's position and the number of lazy
/// batches added so far. Between two batches a node is split or revealed at
/// most once, so keys never repeat, and the values realized for a given
/// state do not depend on the order in which queries explore the tree.
#[derive(Clone, Debug, PartialEq)]
struct Keys {
    base: RngStream,
    generation: u64,
}

impl Keys {
    fn stream(&self, depth: u32, index: u64, reveal: bool) -> RngStream {
        debug_assert!(depth <= MAX_DEPTH);
        let id = u64::from(depth) << 56 | index;
        let pos = u128::from(self.generation) << 36 | u128::from(reveal) << 35;
        self.base.substream(id, pos)
    }
}

/// Lower edge of dyadic interval `index` at `depth`.
fn lower_edge(depth: u32, index: u64) -> f64 {
    index as f64 * width_at(depth)
}

impl Node {
    fn is_leaf_ready(&self, depth: u32) -> bool {
        self.kids.is_none() && (self.total <= LEAF_CAP || depth >= MAX_DEPTH)
    }

    fn push(&mut self, keys: &Keys, depth: u32, index: u64) {
        let kids = self.kids.get_or_insert_with(Default::default);
        if self.pending > 0 {
            let left = binomial_half(self.pending, &mut keys.stream(depth, index, false));
            let right = self.pending - left;
            kids[0].total += left;
            kids[0].pending += left;
            kids[1].total += right;
            kids[1].pending += right;
            self.pending = 0;
        }
    }

    /// Realizes this leaf's points, sorted, and empties it.
    fn reveal(&mut self, keys: &Keys, depth: u32, index: u64) -> Vec<f64> {
        let pts = reveal_points(
            lower_edge(depth, index),
            width_at(depth),
            self.total,
            &mut keys.stream(depth, index, true),
        );
        *self = Node::default();
        pts
    }

    fn after_reveal(&mut self, revealed: u64) {
        self.total -= revealed;
        if self.total == 0 {
            *self = Node::default();
        }
    }
}

fn binomial_half(n: u64, rng: &mut RngStream) -> u64 {
    use rand::RngCore;
    if n <= 64 {
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        u64::from((rng.next_u64() & mask).count_ones())
    } else {
        Binomial::new(n, 0.5).expect("p = 1/2 is valid").sample(rng)
    }
}

fn width_at(depth: u32) -> f64 {
    0.5f64.powi(depth as i32)
}

/// `count` sorted i.i.d. uniforms on `[lo, lo + width)`.
fn reveal_points(lo: f64, width: f64, count: u64, rng: &mut RngStream) -> Vec<f64> {
    let hi = lo + width;
    let mut pts: Vec<f64> = (0..count)
        .map(|_| {
            let x = lo + width * rng.next_unit();
            if x >= hi {
                hi.next_down()
            } else {
                x
            }
        })
        .collect();
    pts.sort_by(f64::total_cmp);
    pts
}

/// Lazily split block of i.i.d. `U[0, 1)` points.
#[derive(Clone, Debug, PartialEq)]
struct LazyUniform {
    root: Node,
    keys: Keys,
}

impl LazyUniform {
    fn total(&self) -> u64 {
        self.root.total
    }

    fn add(&mut self, count: u64) {
        if count == 0 {
            return;
        }
        self.keys.generation += 1;
        self.root.total += count;
        self.root.pending += count;
    }

    /// Lazy points below `x`. Leaves straddling `x` are revealed into `out`.
    fn count_below(&mut self, x: f64, out: &mut Vec<f64>) -> u64 {
        fn rec(
            node: &mut Node,
            depth: u32,
            index: u64,
            x: f64,
            keys: &Keys,
            out: &mut Vec<f64>,
        ) -> (u64, u64) {
            let lo = lower_edge(depth, index);
            if node.total == 0 || lo >= x {
                return (0, 0);
            }
            if lo + width_at(depth) <= x {
                return (node.total, 0);
            }
            if node.is_leaf_ready(depth) {
                let c = node.total;
                out.extend(node.reveal(keys, depth, index));
                return (0, c);
            }
            node.push(keys, depth, index);
            let kids = node.kids.as_mut().expect("pushed");
            let (a, ra) = rec(&mut kids[0], depth + 1, 2 * index, x, keys, out);
            let (b, rb) = rec(&mut kids[1], depth + 1, 2 * index + 1, x, keys, out);
            node.after_reveal(ra + rb);
            (a + b, ra + rb)
        }
        rec(&mut self.root, 0, 0, x, &self.keys, out).0
    }

    /// Lower edge of the leftmost non-empty leaf, splitting as needed.
    fn min_bound(&mut self) -> Option<f64> {
        let mut node = &mut self.root;
        let (mut depth, mut index) = (0, 0);
        loop {
            if node.total == 0 {
                return None;
            }
            if node.is_leaf_ready(depth) {
                return Some(lower_edge(depth, index));
            }
            node.push(&self.keys, depth, index);
            let kids = node.kids.as_mut().expect("pushed");
            index *= 2;
            if kids[0].total > 0 {
                node = &mut kids[0];
            } else {
                index += 1;
                node = &mut kids[1];
            }
            depth += 1;
        }
    }

    /// Reveals the leftmost non-empty leaf into `out`; returns how many.
    fn reveal_leftmost(&mut self, out: &mut Vec<f64>) -> u64 {
        fn rec(node: &mut Node, depth: u32, index: u64, keys: &Keys, out: &mut Vec<f64>) -> u64 {
            if node.total == 0 {
                return 0;
            }
            if node.is_leaf_ready(depth) {
                let c = node.total;
                out.extend(node.reveal(keys, depth, index));
                return c;
            }
            node.push(keys, depth, index);
            let kids = node.kids.as_mut().expect("pushed");
            let c = if kids[0].total > 0 {
                rec(&mut kids[0], depth + 1, 2 * index, keys, out)
            } else {
                rec(&mut kids[1], depth + 1, 2 * index + 1, keys, out)
            };
            node.after_reveal(c);
            c
        }
        rec(&mut self.root, 0, 0, &self.keys, out)
    }

    fn clear(&mut self) {
        self.root = Node::default();
    }
}

/// Receives the population in non-decreasing order from
/// [`Population::walk_sorted`].
pub trait SortedVisitor {
    /// `count` not-yet-itemized points, all inside `[lo, hi)`, come next.
    /// Return `true` to have them itemized; `false` consumes the whole block
    /// at once (the visitor accounts for `count` itself).
    fn block(&mut self, lo: f64, hi: f64, count: u64) -> bool;

    fn point(&mut self, x: f64);
}

struct Collect<F: FnMut(f64)>(F);

impl<F: FnMut(f64)> SortedVisitor for Collect<F> {
    fn block(&mut self, _: f64, _: f64, _: u64) -> bool {
        true
    }

    fn point(&mut self, x: f64) {
        (self.0)(x)
    }
}

/// Ordered multiset of fitnesses. Ties are broken by insertion order,
/// oldest first.
#[derive(Clone, Debug)]
pub struct Population {
    mat: SortedChunks,
    lazy: LazyUniform,
    next_seq: u64,
    inserted: u64,
    removed: u64,
    scratch: Vec<f64>,
}

impl Default for Population {
    fn default() -> Self {
        Self::new()
    }
}

impl Population {
    pub fn new() -> Self {
        Self::with_lazy_stream(RngStream::new(0, 0, Lane::Lazy))
    }

    /// Empty population whose lazy blocks draw from `rng`.
    pub fn with_lazy_stream(rng: RngStream) -> Self {
        Self {
            mat: SortedChunks {
                fenwick: vec![0],
                ..Default::default()
            },
            lazy: LazyUniform {
                root: Node::default(),
                keys: Keys {
                    base: rng,
                    generation: 0,
                },
            },
            next_seq: 0,
            inserted: 0,
            removed: 0,
            scratch: Vec::new(),
        }
    }

    pub fn from_values(values: &[f64]) -> Result<Self, PopulationError> {
        let mut pop = Self::new();
        pop.insert_batch(values)?;
        Ok(pop)
    }

    pub fn size(&self) -> u64 {
        self.mat.len + self.lazy.total()
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }

    /// Points still held in the lazy block (not individually realized).
    pub fn lazy_len(&self) -> u64 {
        self.lazy.total()
    }

    /// Total insertions minus total removals since creation.
    pub fn net_insertions(&self) -> u64 {
        self.inserted - self.removed
    }

    fn push_entry(&mut self, fitness: f64) {
        let e = Entry {
            // normalize -0.0
            fitness: fitness + 0.0,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.mat.insert(e);
    }

    /// Inserts every value; the batch is rejected whole if any value lies
    /// outside `[0, 1]`.
    pub fn insert_batch(&mut self, fitnesses: &[f64]) -> Result<(), PopulationError> {
        if let Some(&value) = fitnesses.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(PopulationError::OutOfRangeFitness { value });
        }
        for &f in fitnesses {
            self.push_entry(f);
        }
        self.inserted += fitnesses.len() as u64;
        Ok(())
    }

    /// Adds `count` i.i.d. `U[0, 1)` fitnesses without realizing them.
    pub fn insert_uniform_lazy(&mut self, count: u64) {
        self.lazy.add(count);
        self.inserted += count;
    }

    fn absorb_scratch(&mut self) {
        let pts = std::mem::take(&mut self.scratch);
        for &x in &pts {
            self.push_entry(x);
        }
        self.scratch = pts;
        self.scratch.clear();
    }

    /// Removes the `min(k, size)` smallest fitnesses and returns how many
    /// were removed.
    pub fn remove_k_smallest(&mut self, k: u64) -> u64 {
        let size = self.size();
        let k = k.min(size);
        self.removed += k;
        if k == size {
            self.mat.clear();
            self.lazy.clear();
            return k;
        }
        let mut left = k;
        while left > 0 {
            let cutoff = self.mat.kth(left).unwrap_or(f64::INFINITY);
            match self.lazy.min_bound() {
                Some(lo) if lo <= cutoff => {
                    self.lazy.reveal_leftmost(&mut self.scratch);
                    self.absorb_scratch();
                }
                _ => {
                    self.mat.remove_smallest(left);
                    left = 0;
                }
            }
        }
        k
    }

    /// Number of fitnesses strictly below `x`.
    pub fn count_below(&mut self, x: f64) -> u64 {
        let lazy = self.lazy.count_below(x, &mut self.scratch);
        self.absorb_scratch();
        lazy + self.mat.count_below(x)
    }

    /// The `k`-th smallest fitness, `1 <= k <= size`.
    pub fn kth_smallest(&mut self, k: u64) -> Result<f64, PopulationError> {
        let size = self.size();
        if k == 0 || k > size {
            return Err(PopulationError::IndexOutOfRange { rank: k, size });
        }
        loop {
            let cand = self.mat.kth(k);
            match (self.lazy.min_bound(), cand) {
                (None, Some(x)) => return Ok(x),
                (Some(lo), Some(x)) if lo > x => return Ok(x),
                _ => {
                    self.lazy.reveal_leftmost(&mut self.scratch);
                    self.absorb_scratch();
                }
            }
        }
    }

    /// Visits every fitness in non-decreasing order. Works on a copy of the
    /// lazy block, so the population itself is unchanged and the visit is
    /// reproducible.
    pub fn walk_sorted<V: SortedVisitor>(&self, visitor: &mut V) {
        let mat: Vec<f64> = self.mat.iter().map(|e| e.fitness).collect();
        let mut lazy = self.lazy.clone();
        let mut idx = 0;
        walk_node(&mut lazy.root, 0, 0, &lazy.keys, &mat, &mut idx, visitor);
        for &x in &mat[idx..] {
            visitor.point(x);
        }
    }

    pub fn for_each_sorted(&self, f: impl FnMut(f64)) {
        self.walk_sorted(&mut Collect(f));
    }

    /// Sorted copy of every fitness.
    pub fn snapshot_sorted(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.size().min(1 << 24) as usize);
        self.for_each_sorted(|x| out.push(x));
        out
    }
}

fn walk_node<V: SortedVisitor>(
    node: &mut Node,
    depth: u32,
    index: u64,
    keys: &Keys,
    mat: &[f64],
    idx: &mut usize,
    visitor: &mut V,
) {
    let lo = lower_edge(depth, index);
    while *idx < mat.len() && mat[*idx] < lo {
        visitor.point(mat[*idx]);
        *idx += 1;
    }
    if node.total == 0 {
        return;
    }
    let hi = lo + width_at(depth);
    let inside = mat[*idx..].partition_point(|&x| x < hi);
    if !visitor.block(lo, hi, node.total + inside as u64) {
        *idx += inside;
        return;
    }
    if node.is_leaf_ready(depth) {
        let pts = node.reveal(keys, depth, index);
        let ours = &mat[*idx..*idx + inside];
        let (mut a, mut b) = (0, 0);
        while a < pts.len() || b < ours.len() {
            if b == ours.len() || (a < pts.len() && pts[a] < ours[b]) {
                visitor.point(pts[a]);
                a += 1;
            } else {
                visitor.point(ours[b]);
                b += 1;
            }
        }
        *idx += inside;
        return;
    }
    node.push(keys, depth, index);
    let kids = node.kids.as_mut().expect("pushed");
    walk_node(&mut kids[0], depth + 1, 2 * index, keys, mat, idx, visitor);
    walk_node(
        &mut kids[1],
        depth + 1,
        2 * index + 1,
        keys,
        mat,
        idx,
        visitor,
    );
}

impl PartialEq for Population {
    fn eq(&self, other: &Self) -> bool {
        self.size() == other.size()
            && self.lazy.root == other.lazy.root
            && self
                .mat
                .iter()
                .zip(other.mat.iter())
                .all(|(a, b)| a.fitness.to_bits() == b.fitness.to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop(values: &[f64]) -> Population {
        Population::from_values(values).unwrap()
    }

    #[test]
    fn insert_examples() {
        let mut p = pop(&[0.2, 0.8]);
        assert_eq!(p.size(), 2);
        assert_eq!(p.kth_smallest(1).unwrap(), 0.2);

        let mut p = pop(&[0.5]);
        p.insert_batch(&[]).unwrap();
        assert_eq!(p.size(), 1);
        p.insert_batch(&[0.5]).unwrap();
        assert_eq!(p.snapshot_sorted(), vec![0.5, 0.5]);
    }

    #[test]
    fn out_of_range_batch_is_rejected_whole() {
        let mut p = pop(&[0.5]);
        let err = p.insert_batch(&[0.1, 1.5]).unwrap_err();
        assert_eq!(err, PopulationError::OutOfRangeFitness { value: 1.5 });
        assert!(p.insert_batch(&[f64::NAN]).is_err());
        assert!(p.insert_batch(&[-0.1]).is_err());
        assert_eq!(p.size(), 1);
        p.insert_batch(&[0.0, 1.0]).unwrap();
        assert_eq!(p.size(), 3);
    }

    #[test]
    fn removal_examples() {
        let mut p = pop(&[0.1, 0.5, 0.9]);
        assert_eq!(p.remove_k_smallest(2), 2);
        assert_eq!(p.snapshot_sorted(), vec![0.9]);

        let mut p = pop(&[0.1, 0.5, 0.9]);
        assert_eq!(p.remove_k_smallest(5), 3);
        assert!(p.is_empty());

        let mut p = Population::new();
        assert_eq!(p.remove_k_smallest(4), 0);
        assert_eq!(p.remove_k_smallest(0), 0);
    }

    #[test]
    fn count_below_is_strict() {
        let mut p = pop(&[0.1, 0.5, 0.9]);
        assert_eq!(p.count_below(0.5), 1);
        assert_eq!(p.count_below(0.0), 0);
        assert_eq!(p.count_below(1.0), 3);
        assert_eq!(p.count_below(1.0 + 1e-9), 3);
        let mut q = pop(&[0.3, 1.0]);
        assert_eq!(q.count_below(1.0) + 1, q.size());
    }

    #[test]
    fn rank_and_snapshot() {
        let mut p = pop(&[0.3, 0.7]);
        assert_eq!(p.kth_smallest(2).unwrap(), 0.7);
        assert!(matches!(
            p.kth_smallest(3),
            Err(PopulationError::IndexOutOfRange { rank: 3, size: 2 })
        ));
        assert!(p.kth_smallest(0).is_err());
        assert_eq!(Population::new().size(), 0);
        let p = pop(&[0.3, 0.7, 0.1]);
        assert_eq!(p.snapshot_sorted(), vec![0.1, 0.3, 0.7]);
        assert_eq!(p.size(), 3);
    }

    #[test]
    fn ties_remove_oldest_first() {
        let mut p = pop(&[0.5, 0.5, 0.2]);
        p.remove_k_smallest(2);
        assert_eq!(p.snapshot_sorted(), vec![0.5]);
        assert_eq!(p.mat.iter().next().unwrap().seq, 1);
    }

    #[test]
    fn many_chunks() {
        let mut r = RngStream::new(1, 0, Lane::Fitness);
        let mut p = Population::new();
        let mut reference = Vec::new();
        for round in 0..40 {
            let batch: Vec<f64> = (0..500).map(|_| r.next_unit()).collect();
            reference.extend_from_slice(&batch);
            p.insert_batch(&batch).unwrap();
            let k = (round * 37) % 300;
            reference.sort_by(f64::total_cmp);
            reference.drain(..k);
            assert_eq!(p.remove_k_smallest(k as u64), k as u64);
            assert_eq!(p.size(), reference.len() as u64);
            for x in [0.0, 0.25, 0.5, 0.9] {
                let want = reference.iter().filter(|&&v| v < x).count() as u64;
                assert_eq!(p.count_below(x), want);
            }
            let mid = reference.len() as u64 / 2;
            assert_eq!(p.kth_smallest(mid).unwrap(), reference[mid as usize - 1]);
        }
        assert_eq!(p.snapshot_sorted(), reference);
        assert_eq!(p.net_insertions(), p.size());
    }

    #[test]
    fn lazy_block_counts_are_consistent() {
        let mut p = Population::new();
        p.insert_batch(&[0.05, 0.6]).unwrap();
        p.insert_uniform_lazy(100_000);
        assert_eq!(p.size(), 100_002);
        let below = p.count_below(0.5);
        assert_eq!(p.count_below(0.5), below);
        // a dyadic cut needs no reveals; any other cut reveals a leaf
        assert_eq!(p.lazy_len(), 100_000);
        let below_third = p.count_below(1.0 / 3.0);
        assert_eq!(p.count_below(1.0 / 3.0), below_third);
        assert!(p.lazy_len() < 100_000);
        let snap = p.snapshot_sorted();
        assert_eq!(snap.len(), 100_002);
        assert!(snap.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(snap.iter().filter(|&&x| x < 0.5).count() as u64, below);
        // binomial(100000, 1/2) plus the one materialized point below 1/2
        assert!((below as f64 - 50_001.0).abs() < 5.0 * 158.2);
    }

    #[test]
    fn realized_values_do_not_depend_on_query_order() {
        let mut a = Population::with_lazy_stream(RngStream::new(3, 1, Lane::Lazy));
        a.insert_uniform_lazy(50_000);
        a.insert_batch(&[0.25]).unwrap();
        a.insert_uniform_lazy(7_000);
        let mut b = a.clone();
        let untouched = a.snapshot_sorted();
        a.count_below(0.3);
        a.count_below(0.71);
        b.kth_smallest(20_000).unwrap();
        assert_eq!(a.snapshot_sorted(), untouched);
        assert_eq!(b.snapshot_sorted(), untouched);
        a.remove_k_smallest(1_000);
        b.remove_k_smallest(1_000);
        assert_eq!(a.snapshot_sorted(), b.snapshot_sorted());
        assert_eq!(a.snapshot_sorted(), untouched[1_000..]);
    }

    #[test]
    fn lazy_removal_takes_true_minimum() {
        let mut p = Population::new();
        p.insert_uniform_lazy(10_000);
        p.insert_batch(&[0.0]).unwrap();
        let before = p.snapshot_sorted();
        assert_eq!(p.remove_k_smallest(1), 1);
        assert_eq!(p.size(), 10_000);
        // 0.0 was the unique minimum
        assert!(p.snapshot_sorted().iter().all(|&x| x > 0.0));
        assert_eq!(before[0], 0.0);

        p.remove_k_smallest(500);
        let m = p.kth_smallest(1).unwrap();
        let snap = p.snapshot_sorted();
        assert_eq!(snap[0], m);
        assert_eq!(snap.len(), 9_500);
        // about 5% of the uniform mass is gone
        assert!(m > 0.03 && m < 0.07, "{m}");
        assert_eq!(p.remove_k_smallest(u64::MAX), 9_500);
        assert!(p.is_empty());
    }

    #[test]
    fn walk_is_pure() {
        let mut p = Population::new();
        p.insert_uniform_lazy(5_000);
        p.insert_batch(&[0.3, 0.7]).unwrap();
        let a = p.snapshot_sorted();
        let b = p.snapshot_sorted();
        assert_eq!(a, b);
        let q = p.clone();
        assert_eq!(p, q);
    }

    #[test]
    fn binomial_half_small_and_large() {
        let mut r = RngStream::new(2, 0, Lane::Lazy);
        assert_eq!(binomial_half(0, &mut r), 0);
        assert!(binomial_half(1, &mut r) <= 1);
        assert!(binomial_half(64, &mut r) <= 64);
        let n = 1u64 << 40;
        let k = binomial_half(n, &mut r);
        assert!((k as f64 - n as f64 / 2.0).abs() < 5.0 * (n as f64).sqrt() / 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        #[derive(Clone, Debug)]
        enum Op {
            Insert(Vec<u8>),
            Remove(u64),
            Lazy(u64),
        }

        fn op() -> impl Strategy<Value = Op> {
            prop_oneof![
                // coarse values make ties common
                prop::collection::vec(0u8..=16, 0..40).prop_map(Op::Insert),
                (0u64..60).prop_map(Op::Remove),
            ]
        }

        proptest! {
            #[test]
            fn matches_sorted_reference(ops in prop::collection::vec(op(), 1..60)) {
                let mut p = Population::new();
                let mut reference: Vec<f64> = Vec::new();
                for op in ops {
                    match op {
                        Op::Insert(vals) => {
                            let vals: Vec<f64> = vals.iter().map(|&v| f64::from(v) / 16.0).collect();
                            p.insert_batch(&vals).unwrap();
                            reference.extend(vals);
                            reference.sort_by(f64::total_cmp);
                        }
                        Op::Remove(k) => {
                            let before: Vec<u64> =
                                [0.25, 0.5, 1.0].iter().map(|&x| p.count_below(x)).collect();
                            let want = k.min(reference.len() as u64);
                            prop_assert_eq!(p.remove_k_smallest(k), want);
                            reference.drain(..want as usize);
                            for (i, &x) in [0.25, 0.5, 1.0].iter().enumerate() {
                                prop_assert!(p.count_below(x) <= before[i]);
                            }
                        }
                        Op::Lazy(_) => unreachable!(),
                    }
                    prop_assert_eq!(p.size(), reference.len() as u64);
                    prop_assert_eq!(p.net_insertions(), p.size());
                    let ones = reference.iter().filter(|&&v| v == 1.0).count() as u64;
                    prop_assert_eq!(p.count_below(1.0) + ones, p.size());
                    for x in [0.0, 0.3, 0.5, 0.9375] {
                        let want = reference.iter().filter(|&&v| v < x).count() as u64;
                        prop_assert_eq!(p.count_below(x), want);
                    }
                }
                prop_assert_eq!(p.snapshot_sorted(), reference);
            }

            #[test]
            fn lazy_mix_stays_ordered(
                ops in prop::collection::vec(
                    prop_oneof![
                        (0u64..5_000).prop_map(Op::Lazy),
                        (0u64..3_000).prop_map(Op::Remove),
                        prop::collection::vec(0u8..=16, 0..10).prop_map(Op::Insert),
                    ],
                    1..20,
                ),
            ) {
                let mut p = Population::new();
                let mut size = 0u64;
                for op in ops {
                    match op {
                        Op::Lazy(n) => {
                            p.insert_uniform_lazy(n);
                            size += n;
                        }
                        Op::Remove(k) => {
                            let snap = p.snapshot_sorted();
                            let removed = p.remove_k_smallest(k);
                            prop_assert_eq!(removed, k.min(size));
                            size -= removed;
                            prop_assert_eq!(p.snapshot_sorted(), snap[removed as usize..].to_vec());
                        }
                        Op::Insert(vals) => {
                            let vals: Vec<f64> = vals.iter().map(|&v| f64::from(v) / 16.0).collect();
                            p.insert_batch(&vals).unwrap();
                            size += vals.len() as u64;
                        }
                    }
                    prop_assert_eq!(p.size(), size);
                }
                let snap = p.snapshot_sorted();
                prop_assert!(snap.windows(2).all(|w| w[0] <= w[1]));
                prop_assert_eq!(snap.len() as u64, size);
            }
        }
    }
}
