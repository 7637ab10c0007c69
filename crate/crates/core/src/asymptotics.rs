//! Large-`n` limits of group order statistics.
//!
//! For group `i` the `k_i`-th smallest of `n_i` exponential completion times
//! with rate `k * mu_i` concentrates, as `n` grows with `k_i / n_i` fixed, at
//! the `k_i / n_i` quantile
//!
//! ```text
//! xi_i = -ln(1 - k_i / n_i) / (k * mu_i)
//! ```
//!
//! and the expected computing time of a group code converges to `max_i xi_i`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    kth_smallest, kth_smallest_in_place, Allocation, CompletionSample, GroupSystem,
};
use crate::scalar::Scalar;

/// Limit mean of one group's order statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiValue<T> {
    /// `+inf` when the group must wait for all of its workers.
    pub value: T,
    pub group_index: usize,
    /// `k_i / n_i`.
    pub load_fraction: T,
}

/// `-ln(1 - k_i/n_i) / (k_total * mu_i)`; `+inf` when `k_i == n_i`.
pub fn xi<T: Scalar>(mu_i: T, n_i: usize, k_i: usize, k_total: usize) -> Result<T> {
    if k_i > n_i {
        return Err(Error::AllocationExceedsGroup { group: 0, k_i, n_i });
    }
    if k_total == 0 {
        return Err(Error::ZeroTasks);
    }
    Ok(xi_real(mu_i, T::of_usize(n_i), T::of_usize(k_i), k_total))
}

/// Same formula on a real-valued load; used by the continuous solver.
#[inline]
pub(crate) fn xi_real<T: Scalar>(mu_i: T, n_i: T, k_i: T, k_total: usize) -> T {
    if k_i >= n_i {
        return T::infinity();
    }
    -(-(k_i / n_i)).ln_1p() / (T::of_usize(k_total) * mu_i)
}

/// `xi` for every group of `alloc`.
pub fn xi_table<T: Scalar>(system: &GroupSystem<T>, alloc: &Allocation) -> Result<Vec<XiValue<T>>> {
    alloc.check_against(system)?;
    (0..system.num_groups())
        .map(|i| {
            let (n_i, k_i) = (system.size(i), alloc.get(i));
            let value = xi(system.rate(i), n_i, k_i, alloc.k_total())
                .map_err(|_| Error::AllocationExceedsGroup { group: i, k_i, n_i })?;
            Ok(XiValue {
                value,
                group_index: i,
                load_fraction: T::of_usize(k_i) / T::of_usize(n_i),
            })
        })
        .collect()
}

/// Limit of the expected group-code computing time: `max_i xi_i`.
pub fn asymptotic_group_time<T: Scalar>(system: &GroupSystem<T>, alloc: &Allocation) -> Result<T> {
    Ok(xi_table(system, alloc)?
        .into_iter()
        .fold(T::zero(), |m, x| m.max(x.value)))
}

/// Optimum of a two-group system whose first group is twice as fast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfRateOptimum<T> {
    pub k1_star: T,
    pub k2_star: T,
    /// Limit expected computing time at the optimum.
    pub time: T,
}

/// Closed-form optimal split for `mu = (2 * mu2, mu2)`.
///
/// `k1_star` depends only on the rate ratio; `mu2` only scales `time`.
pub fn closed_form_l2_half_rate<T: Scalar>(
    n1: usize,
    n2: usize,
    k_total: usize,
    mu2: T,
) -> Result<HalfRateOptimum<T>> {
    if n1 == 0 {
        return Err(Error::NonPositiveSize { group: 0 });
    }
    if n2 == 0 {
        return Err(Error::NonPositiveSize { group: 1 });
    }
    if !(mu2 > T::zero()) {
        return Err(Error::NonPositiveRate { group: 1 });
    }
    let (n1f, n2f, k) = (T::of_usize(n1), T::of_usize(n2), T::of_usize(k_total));
    let two = T::of(2.0);
    let b = n2f + n2f * n2f / (two * n1f);
    let disc = b * b - k * n2f * n2f / n1f;
    if disc < T::zero() || k_total > n1 + n2 {
        return Err(Error::NegativeDiscriminant);
    }
    let k1_star = (k - b + disc.sqrt()).max(T::zero()).min(n1f);
    let k2_star = k - k1_star;
    let time = if k_total == 0 {
        T::zero()
    } else {
        let a = n2f / (two * n1f);
        let inner = ((T::one() + a) * (T::one() + a) - k / n1f).sqrt() - a;
        -inner.ln() / (k * mu2)
    };
    Ok(HalfRateOptimum {
        k1_star,
        k2_star,
        time,
    })
}

/// The three quantities of the order-statistic sandwich on one realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsReport<T> {
    /// `min_i T_{k_i:n_i}`.
    pub lower: T,
    /// `T_{k:n}` over all workers.
    pub mds_time: T,
    /// `max_i T_{k_i:n_i}`.
    pub upper: T,
    pub holds: bool,
}

/// Evaluates `min_i T_{k_i:n_i} <= T_{k:n} <= max_i T_{k_i:n_i}` exactly.
pub fn check_order_bounds<T: Scalar>(
    sample: &CompletionSample<T>,
    alloc: &Allocation,
) -> Result<BoundsReport<T>> {
    let mut scratch = Vec::new();
    check_order_bounds_with(sample, alloc, &mut scratch)
}

pub(crate) fn check_order_bounds_with<T: Scalar>(
    sample: &CompletionSample<T>,
    alloc: &Allocation,
    scratch: &mut Vec<T>,
) -> Result<BoundsReport<T>> {
    if alloc.num_groups() != sample.num_groups() {
        return Err(Error::InvalidAllocation(format!(
            "{} entries for {} groups",
            alloc.num_groups(),
            sample.num_groups()
        )));
    }
    let mut lower = T::infinity();
    let mut upper = T::neg_infinity();
    for i in 0..sample.num_groups() {
        let (k_i, n_i) = (alloc.get(i), sample.group_len(i));
        if k_i == 0 {
            return Err(Error::ZeroAllocation { group: i });
        }
        if k_i > n_i {
            return Err(Error::AllocationExceedsGroup { group: i, k_i, n_i });
        }
        scratch.clear();
        scratch.extend_from_slice(sample.group(i));
        let t = kth_smallest_in_place(scratch, k_i)?;
        lower = lower.min(t);
        upper = upper.max(t);
    }
    scratch.clear();
    scratch.extend_from_slice(sample.all());
    let mds_time = kth_smallest_in_place(scratch, alloc.k_total())?;
    Ok(BoundsReport {
        lower,
        mds_time,
        upper,
        holds: lower <= mds_time && mds_time <= upper,
    })
}

/// Empirical `T_{k_i:n_i}` for each group of one realization.
pub fn group_order_statistics<T: Scalar>(
    sample: &CompletionSample<T>,
    alloc: &Allocation,
) -> Result<Vec<T>> {
    (0..sample.num_groups())
        .map(|i| {
            let k_i = alloc.get(i);
            if k_i == 0 {
                Err(Error::ZeroAllocation { group: i })
            } else {
                kth_smallest(sample.group(i), k_i)
            }
        })
        .collect()
}
