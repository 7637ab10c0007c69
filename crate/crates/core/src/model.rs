//! Group systems, task allocations and sampled worker completion times.

use std::cmp::Ordering;

use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stream::{self, Domain};

/// `L` groups of workers; group `i` has `n_i` workers whose completion times
/// are exponential with rate proportional to `mu_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSystem<T> {
    group_sizes: Vec<usize>,
    rates: Vec<T>,
    #[serde(skip)]
    offsets: Vec<usize>,
}

impl<T: Scalar> GroupSystem<T> {
    pub fn new(group_sizes: Vec<usize>, rates: Vec<T>) -> Result<Self> {
        if group_sizes.len() != rates.len() {
            return Err(Error::MismatchedLengths {
                sizes: group_sizes.len(),
                rates: rates.len(),
            });
        }
        if group_sizes.is_empty() {
            return Err(Error::EmptySystem);
        }
        if let Some(group) = group_sizes.iter().position(|&n| n == 0) {
            return Err(Error::NonPositiveSize { group });
        }
        if let Some(group) = rates
            .iter()
            .position(|&mu| !(mu > T::zero() && mu.is_finite()))
        {
            return Err(Error::NonPositiveRate { group });
        }
        let mut offsets = Vec::with_capacity(group_sizes.len() + 1);
        offsets.push(0);
        for &n in &group_sizes {
            offsets.push(offsets.last().unwrap() + n);
        }
        Ok(Self {
            group_sizes,
            rates,
            offsets,
        })
    }

    /// Number of groups `L`.
    pub fn num_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    pub fn size(&self, group: usize) -> usize {
        self.group_sizes[group]
    }

    pub fn rate(&self, group: usize) -> T {
        self.rates[group]
    }

    pub fn total_workers(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Flat index of the first worker of `group`.
    pub fn offset(&self, group: usize) -> usize {
        self.offsets[group]
    }

    /// Same system with every group size multiplied by `factor`.
    pub fn scaled(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.group_sizes.iter().map(|&n| n * factor).collect(),
            self.rates.clone(),
        )
    }
}

/// Integer split of `k_total` tasks over the groups.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Allocation {
    per_group: Vec<usize>,
    k_total: usize,
}

impl Allocation {
    /// Allocation with `k_total` equal to the sum of `per_group`.
    pub fn new(per_group: Vec<usize>) -> Result<Self> {
        let k_total = per_group.iter().sum();
        if k_total == 0 {
            return Err(Error::ZeroTasks);
        }
        Ok(Self { per_group, k_total })
    }

    /// Allocation validated against `system`.
    pub fn for_system<T: Scalar>(system: &GroupSystem<T>, per_group: Vec<usize>) -> Result<Self> {
        let alloc = Self::new(per_group)?;
        alloc.check_against(system)?;
        Ok(alloc)
    }

    /// Tasks split as evenly as possible, earlier groups taking the remainder.
    pub fn even<T: Scalar>(system: &GroupSystem<T>, k_total: usize) -> Result<Self> {
        let l = system.num_groups();
        let per_group = (0..l)
            .map(|i| k_total / l + usize::from(i < k_total % l))
            .collect();
        Self::for_system(system, per_group)
    }

    pub fn check_against<T: Scalar>(&self, system: &GroupSystem<T>) -> Result<()> {
        if self.per_group.len() != system.num_groups() {
            return Err(Error::InvalidAllocation(format!(
                "{} entries for {} groups",
                self.per_group.len(),
                system.num_groups()
            )));
        }
        for (group, (&k_i, &n_i)) in self.per_group.iter().zip(system.group_sizes()).enumerate() {
            if k_i > n_i {
                return Err(Error::AllocationExceedsGroup { group, k_i, n_i });
            }
        }
        Ok(())
    }

    pub fn per_group(&self) -> &[usize] {
        &self.per_group
    }

    pub fn get(&self, group: usize) -> usize {
        self.per_group[group]
    }

    pub fn k_total(&self) -> usize {
        self.k_total
    }

    pub fn num_groups(&self) -> usize {
        self.per_group.len()
    }

    /// Largest per-group share; sets the parallel decoding cost.
    pub fn k_max(&self) -> usize {
        self.per_group.iter().copied().max().unwrap_or(0)
    }
}

/// One realization of every worker's completion time.
///
/// Stored flat in group-major order; `group(i)` slices out group `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionSample<T> {
    times: Vec<T>,
    offsets: Vec<usize>,
    k_total: usize,
}

impl<T: Scalar> CompletionSample<T> {
    /// Builds a sample from explicit per-group times.
    pub fn from_groups(groups: Vec<Vec<T>>, k_total: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::EmptySystem);
        }
        let mut offsets = vec![0];
        let mut times = Vec::new();
        for (i, g) in groups.into_iter().enumerate() {
            if g.is_empty() {
                return Err(Error::NonPositiveSize { group: i });
            }
            if g.iter().any(|t| !(t.is_finite() && *t > T::zero())) {
                return Err(Error::ShapeMismatch(format!(
                    "group {} has a non-positive or non-finite time",
                    i + 1
                )));
            }
            times.extend(g);
            offsets.push(times.len());
        }
        Ok(Self {
            times,
            offsets,
            k_total,
        })
    }

    /// Empty buffer shaped for `system`, to be filled with [`Self::refill`].
    pub fn zeroed(system: &GroupSystem<T>) -> Self {
        let mut offsets = Vec::with_capacity(system.num_groups() + 1);
        offsets.extend((0..system.num_groups()).map(|i| system.offset(i)));
        offsets.push(system.total_workers());
        Self {
            times: vec![T::zero(); system.total_workers()],
            offsets,
            k_total: 1,
        }
    }

    /// Overwrites this buffer with trial `trial` of `(system, k_total, seed)`.
    pub fn refill(&mut self, system: &GroupSystem<T>, k_total: usize, seed: u64, trial: u64) {
        if !self.matches(system) {
            *self = Self::zeroed(system);
        }
        self.k_total = k_total;
        let mut rng = stream::substream(seed, Domain::CompletionTimes, trial);
        let k = k_total as f64;
        for g in 0..system.num_groups() {
            let inv_rate = 1.0 / (k * system.rate(g).to_f64_lossy());
            let (lo, hi) = (self.offsets[g], self.offsets[g + 1]);
            for t in &mut self.times[lo..hi] {
                let u = stream::open_unit(rng.next_u64());
                *t = T::of(-u.ln() * inv_rate);
            }
        }
    }

    pub fn num_groups(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn group(&self, i: usize) -> &[T] {
        &self.times[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn group_len(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// All times, flattened in group-major order.
    pub fn all(&self) -> &[T] {
        &self.times
    }

    pub fn total_workers(&self) -> usize {
        self.times.len()
    }

    /// The `k` used to scale the rates.
    pub fn k_total(&self) -> usize {
        self.k_total
    }

    /// Checks the sample has the shape of `system`.
    pub fn matches(&self, system: &GroupSystem<T>) -> bool {
        self.num_groups() == system.num_groups()
            && (0..self.num_groups()).all(|i| self.group_len(i) == system.size(i))
    }
}

/// Draws every `T_j^(i)` as an independent exponential with rate
/// `k_total * mu_i` (inverse CDF on a counter-based uniform stream).
///
/// Equivalent to trial 0 of [`sample_trial`].
pub fn sample_completion_times<T: Scalar>(
    system: &GroupSystem<T>,
    k_total: usize,
    seed: u64,
) -> Result<CompletionSample<T>> {
    sample_trial(system, k_total, seed, 0)
}

/// Trial `trial` of the sampling stream rooted at `seed`.
pub fn sample_trial<T: Scalar>(
    system: &GroupSystem<T>,
    k_total: usize,
    seed: u64,
    trial: u64,
) -> Result<CompletionSample<T>> {
    if k_total == 0 {
        return Err(Error::ZeroTasks);
    }
    let mut sample = CompletionSample::zeroed(system);
    sample.refill(system, k_total, seed, trial);
    Ok(sample)
}

#[inline]
pub(crate) fn total_cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// The `k`-th smallest element (1-indexed); `values` is left untouched.
pub fn kth_smallest<T: Scalar>(values: &[T], k: usize) -> Result<T> {
    let mut scratch = values.to_vec();
    kth_smallest_in_place(&mut scratch, k)
}

/// Like [`kth_smallest`] but partially reorders `values` instead of copying.
pub fn kth_smallest_in_place<T: Scalar>(values: &mut [T], k: usize) -> Result<T> {
    if k == 0 || k > values.len() {
        return Err(Error::IndexOutOfRange {
            k,
            len: values.len(),
        });
    }
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, total_cmp);
    Ok(*kth)
}
