//! Product-code computing time: a `sqrt_n x sqrt_n` grid whose rows and
//! columns are `(sqrt_n, sqrt_k)` MDS codes, decoded by peeling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{total_cmp, CompletionSample};
use crate::scalar::Scalar;
use crate::stream::{self, Domain};

/// Uniform random map from worker index to grid cell (`row * side + col`).
pub fn product_placement(cells: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = stream::substream(seed, Domain::ProductPlacement, stream);
    let mut perm: Vec<usize> = (0..cells).collect();
    for i in (1..cells).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Grows `known` to its peeling fixpoint: a row or column with at least
/// `sqrt_k` known cells becomes fully known.
pub fn peel_closure(sqrt_n: usize, sqrt_k: usize, known: &mut [bool]) {
    let mut scratch = ProductScratch::default();
    peel(sqrt_n, sqrt_k, known, &mut scratch);
}

/// Whether every data cell (top-left `sqrt_k x sqrt_k` block) is known.
fn data_known(sqrt_n: usize, sqrt_k: usize, known: &[bool]) -> bool {
    (0..sqrt_k).all(|r| known[r * sqrt_n..r * sqrt_n + sqrt_k].iter().all(|&b| b))
}

#[derive(Debug, Default)]
pub(crate) struct ProductScratch {
    order: Vec<usize>,
    placement: Vec<usize>,
    known: Vec<bool>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    queue: Vec<Line>,
}

#[derive(Debug, Clone, Copy)]
enum Line {
    Row(usize),
    Col(usize),
}

fn peel(side: usize, threshold: usize, known: &mut [bool], s: &mut ProductScratch) {
    s.rows.clear();
    s.rows.resize(side, 0);
    s.cols.clear();
    s.cols.resize(side, 0);
    for (cell, _) in known.iter().enumerate().filter(|(_, &b)| b) {
        s.rows[cell / side] += 1;
        s.cols[cell % side] += 1;
    }
    s.queue.clear();
    s.queue
        .extend((0..side).filter(|&r| s.rows[r] >= threshold).map(Line::Row));
    s.queue
        .extend((0..side).filter(|&c| s.cols[c] >= threshold).map(Line::Col));
    // Each line enters the queue at most once: either initially, or when its
    // count crosses the threshold exactly.
    while let Some(line) = s.queue.pop() {
        for i in 0..side {
            let (r, c) = match line {
                Line::Row(r) => (r, i),
                Line::Col(c) => (i, c),
            };
            let cell = r * side + c;
            if known[cell] {
                continue;
            }
            known[cell] = true;
            s.rows[r] += 1;
            s.cols[c] += 1;
            if matches!(line, Line::Col(_)) && s.rows[r] == threshold {
                s.queue.push(Line::Row(r));
            }
            if matches!(line, Line::Row(_)) && s.cols[c] == threshold {
                s.queue.push(Line::Col(c));
            }
        }
    }
}

/// Product-code computing time on one realization, with the worker placement
/// drawn from `seed` (placement stream 0).
pub fn comp_time_product<T: Scalar>(
    sample: &CompletionSample<T>,
    sqrt_n: usize,
    sqrt_k: usize,
    seed: u64,
) -> Result<T> {
    comp_time_product_trial(sample, sqrt_n, sqrt_k, seed, 0)
}

/// Like [`comp_time_product`] with an independent placement per trial.
pub fn comp_time_product_trial<T: Scalar>(
    sample: &CompletionSample<T>,
    sqrt_n: usize,
    sqrt_k: usize,
    seed: u64,
    trial: u64,
) -> Result<T> {
    comp_time_product_with(
        sample,
        sqrt_n,
        sqrt_k,
        seed,
        trial,
        &mut ProductScratch::default(),
    )
}

/// Arrivals are processed in time order; the returned time is that of the
/// shortest arrival prefix whose peeling closure covers the data block. The
/// closure only grows with the prefix, so the prefix is found by bisection.
pub(crate) fn comp_time_product_with<T: Scalar>(
    sample: &CompletionSample<T>,
    sqrt_n: usize,
    sqrt_k: usize,
    seed: u64,
    trial: u64,
    s: &mut ProductScratch,
) -> Result<T> {
    let cells = sqrt_n * sqrt_n;
    if sample.total_workers() != cells {
        return Err(Error::ShapeMismatch(format!(
            "product code over {cells} cells, sample has {} workers",
            sample.total_workers()
        )));
    }
    if sqrt_k == 0 {
        return Err(Error::InvalidDims {
            n: sqrt_n,
            k: sqrt_k,
        });
    }
    let times = sample.all();
    s.placement = product_placement(cells, seed, trial);
    s.order.clear();
    s.order.extend(0..cells);
    s.order
        .sort_unstable_by(|&a, &b| total_cmp(&times[a], &times[b]).then(a.cmp(&b)));

    let mut known = std::mem::take(&mut s.known);
    let mut decodable = |m: usize, s: &mut ProductScratch| {
        known.clear();
        known.resize(cells, false);
        for &w in &s.order[..m] {
            known[s.placement[w]] = true;
        }
        peel(sqrt_n, sqrt_k, &mut known, s);
        data_known(sqrt_n, sqrt_k, &known)
    };

    let result = if sqrt_k > sqrt_n || !decodable(cells, s) {
        Err(Error::NotDecodableEvenComplete)
    } else {
        // Invariant: prefix `hi` decodes, prefix `lo` does not.
        let (mut lo, mut hi) = (sqrt_k * sqrt_k - 1, cells);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if decodable(mid, s) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(times[s.order[hi - 1]])
    };
    s.known = known;
    result
}
