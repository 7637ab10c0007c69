//! Optimal task allocation.
//!
//! The limit computing time `max_i xi_i` is minimized by the split that makes
//! every `xi_i` equal. Fixing the pivot group's share `k_p`, equal `xi` forces
//!
//! ```text
//! k_j = n_j * (1 - (1 - k_p / n_p)^(mu_j / mu_p))
//! ```
//!
//! so the whole problem reduces to the scalar equation `h(k_p) = k` with
//! `h(k_p) = k_p + sum_{j != p} k_j(k_p)`. `h` is strictly increasing with
//! `h(0) = 0` and `h(n_p) = n`, so bisection on the bracket
//! `[max(0, k - n + n_p), min(n_p, k)]` always converges.

use log::warn;
use serde::Serialize;

use crate::asymptotics::{asymptotic_group_time, xi, xi_real};
use crate::error::{Error, Result};
use crate::model::{Allocation, GroupSystem};
use crate::scalar::Scalar;

/// Bisection iteration cap. The bracket halves every step, so the interval
/// collapses to adjacent floats long before this.
pub const MAX_ITERATIONS: usize = 200;

/// Real-valued equalizing allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousAllocation<T> {
    pub per_group: Vec<T>,
    pub k_total: usize,
    /// `|h(k_p) - k|` at termination.
    pub residual: T,
    pub pivot: usize,
    /// The common `xi` every group is equalized to (`+inf` when degenerate).
    pub common_xi: T,
    /// Set when `k_total == n`: every worker is needed and every `xi` is
    /// infinite. The allocation is still the unique valid one.
    pub degenerate: bool,
}

impl<T: Scalar> ContinuousAllocation<T> {
    /// `xi` of every group at the continuous shares.
    pub fn xi_values(&self, system: &GroupSystem<T>) -> Vec<T> {
        self.per_group
            .iter()
            .enumerate()
            .map(|(i, &k_i)| {
                xi_real(
                    system.rate(i),
                    T::of_usize(system.size(i)),
                    k_i,
                    self.k_total,
                )
            })
            .collect()
    }
}

/// Share of group `j` that equalizes its `xi` with the pivot's at `k_pivot`.
fn equalized_share<T: Scalar>(system: &GroupSystem<T>, pivot: usize, k_pivot: T, j: usize) -> T {
    if j == pivot {
        return k_pivot;
    }
    let n_p = T::of_usize(system.size(pivot));
    let n_j = T::of_usize(system.size(j));
    let exponent = system.rate(j) / system.rate(pivot);
    // 1 - (1 - x)^e, evaluated without cancellation for small x.
    let log_rest = (-(k_pivot / n_p)).ln_1p();
    if log_rest == T::neg_infinity() {
        return n_j;
    }
    n_j * -(exponent * log_rest).exp_m1()
}

/// `h(k_pivot) = k_pivot + sum_{j != pivot} n_j (1 - (1 - k_pivot/n_pivot)^(mu_j/mu_pivot))`.
pub fn h_load<T: Scalar>(system: &GroupSystem<T>, pivot: usize, k_pivot: T) -> Result<T> {
    if pivot >= system.num_groups() {
        return Err(Error::IndexOutOfRange {
            k: pivot + 1,
            len: system.num_groups(),
        });
    }
    let upper = T::of_usize(system.size(pivot));
    if !(k_pivot >= T::zero() && k_pivot <= upper) {
        return Err(Error::OutOfBracket {
            value: k_pivot.to_f64_lossy(),
            upper: upper.to_f64_lossy(),
        });
    }
    Ok(h_unchecked(system, pivot, k_pivot))
}

fn h_unchecked<T: Scalar>(system: &GroupSystem<T>, pivot: usize, k_pivot: T) -> T {
    (0..system.num_groups())
        .map(|j| equalized_share(system, pivot, k_pivot, j))
        .sum()
}

/// Bracket `[max(0, k - n + n_p), min(n_p, k)]` known to contain the root.
pub fn bracket<T: Scalar>(system: &GroupSystem<T>, pivot: usize, k_total: usize) -> (T, T) {
    let n = system.total_workers();
    let n_p = system.size(pivot);
    let lo = (k_total + n_p).saturating_sub(n);
    let hi = n_p.min(k_total);
    (T::of_usize(lo), T::of_usize(hi))
}

/// Solves `h(k_1) = k` with group 0 as pivot.
pub fn solve_allocation_continuous<T: Scalar>(
    system: &GroupSystem<T>,
    k_total: usize,
    tol: T,
) -> Result<ContinuousAllocation<T>> {
    solve_allocation_continuous_with_pivot(system, k_total, tol, 0)
}

pub fn solve_allocation_continuous_with_pivot<T: Scalar>(
    system: &GroupSystem<T>,
    k_total: usize,
    tol: T,
    pivot: usize,
) -> Result<ContinuousAllocation<T>> {
    let n = system.total_workers();
    if k_total == 0 || k_total > n {
        return Err(Error::InfeasibleK { k: k_total, n });
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    if pivot >= system.num_groups() {
        return Err(Error::IndexOutOfRange {
            k: pivot + 1,
            len: system.num_groups(),
        });
    }
    let k = T::of_usize(k_total);
    let build = |per_group: Vec<T>, common_xi: T, residual: T| ContinuousAllocation {
        per_group,
        k_total,
        residual,
        pivot,
        common_xi,
        degenerate: common_xi.is_infinite(),
    };
    if k_total == n {
        let full = system
            .group_sizes()
            .iter()
            .map(|&n_i| T::of_usize(n_i))
            .collect();
        return Ok(build(full, T::infinity(), T::zero()));
    }

    // The root is bisected in the common-xi coordinate t, where the pivot's
    // share is n_p (1 - exp(-k mu_p t)). The map is monotone, so this is the
    // same root of h on the same bracket, but shares of a nearly saturated
    // pivot stay resolvable in floating point.
    let (k_lo, k_hi) = bracket(system, pivot, k_total);
    let pivot_time = |k_p: T| {
        xi_real(
            system.rate(pivot),
            T::of_usize(system.size(pivot)),
            k_p,
            k_total,
        )
    };
    let (mu_min, mu_max) = system
        .rates()
        .iter()
        .fold((T::infinity(), T::zero()), |(lo, hi), &mu| {
            (lo.min(mu), hi.max(mu))
        });
    let quantile = -(-(k / T::of_usize(n))).ln_1p() / k;
    let mut lo = pivot_time(k_lo).max(quantile / mu_max);
    let mut hi = pivot_time(k_hi).min(quantile / mu_min);
    let shares = |t: T| -> Vec<T> {
        (0..system.num_groups())
            .map(|j| {
                let n_j = T::of_usize(system.size(j));
                (-n_j * (-(k * system.rate(j) * t)).exp_m1()).min(n_j)
            })
            .collect()
    };
    let residual_at = |t: T| shares(t).into_iter().sum::<T>() - k;

    for _ in 0..MAX_ITERATIONS {
        let mid = lo + (hi - lo) / T::of(2.0);
        let f = residual_at(mid);
        if f.abs() <= tol {
            return Ok(build(shares(mid), mid, f.abs()));
        }
        if mid <= lo || mid >= hi {
            // Bracket collapsed onto adjacent floats; take the better end.
            let (r_lo, r_hi) = (residual_at(lo).abs(), residual_at(hi).abs());
            let (best, r) = if r_lo <= r_hi { (lo, r_lo) } else { (hi, r_hi) };
            return Ok(build(shares(best), best, r));
        }
        if f < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: residual_at(lo + (hi - lo) / T::of(2.0))
            .abs()
            .to_f64_lossy(),
    })
}

fn xi_f64<T: Scalar>(system: &GroupSystem<T>, group: usize, k_i: usize, k_total: usize) -> f64 {
    xi(
        system.rate(group).to_f64_lossy(),
        system.size(group),
        k_i,
        k_total,
    )
    .unwrap_or(f64::INFINITY)
}

fn objective<T: Scalar>(system: &GroupSystem<T>, per_group: &[usize], k_total: usize) -> f64 {
    per_group
        .iter()
        .enumerate()
        .map(|(i, &k_i)| xi_f64(system, i, k_i, k_total))
        .fold(0.0, f64::max)
}

/// Cost of giving group `i` one more task.
fn xi_increase<T: Scalar>(system: &GroupSystem<T>, i: usize, k_i: usize, k_total: usize) -> f64 {
    xi_f64(system, i, k_i + 1, k_total) - xi_f64(system, i, k_i, k_total)
}

/// Largest-remainder rounding with sum repair, followed by a one-task-move
/// local search on `max_i xi_i`.
pub fn round_allocation<T: Scalar>(
    system: &GroupSystem<T>,
    continuous: &ContinuousAllocation<T>,
) -> Result<Allocation> {
    let l = system.num_groups();
    if continuous.per_group.len() != l {
        return Err(Error::InvalidAllocation(format!(
            "{} continuous shares for {} groups",
            continuous.per_group.len(),
            l
        )));
    }
    let k = continuous.k_total;
    if k == 0 || k > system.total_workers() {
        return Err(Error::InfeasibleAfterClamp { k });
    }

    let mut counts = Vec::with_capacity(l);
    let mut fractions = Vec::with_capacity(l);
    for (i, &v) in continuous.per_group.iter().enumerate() {
        let v = v.to_f64_lossy().max(0.0);
        let f = v.floor();
        counts.push((f as usize).min(system.size(i)));
        fractions.push(v - f);
    }

    let mut assigned: usize = counts.iter().sum();
    // Only reachable when the continuous sum overshoots by rounding noise.
    while assigned > k {
        let i = (0..l)
            .filter(|&i| counts[i] > 0)
            .min_by(|&a, &b| fractions[a].total_cmp(&fractions[b]))
            .ok_or(Error::InfeasibleAfterClamp { k })?;
        counts[i] -= 1;
        fractions[i] = 1.0;
        assigned -= 1;
    }

    let mut order: Vec<usize> = (0..l).filter(|&i| counts[i] < system.size(i)).collect();
    order.sort_by(|&a, &b| {
        fractions[b]
            .total_cmp(&fractions[a])
            .then_with(|| {
                xi_increase(system, a, counts[a], k)
                    .total_cmp(&xi_increase(system, b, counts[b], k))
            })
            .then(a.cmp(&b))
    });
    for &i in &order {
        if assigned == k {
            break;
        }
        counts[i] += 1;
        assigned += 1;
    }
    // Clamping can leave a deficit larger than the number of groups.
    while assigned < k {
        let i = (0..l)
            .filter(|&i| counts[i] < system.size(i))
            .min_by(|&a, &b| {
                xi_increase(system, a, counts[a], k)
                    .total_cmp(&xi_increase(system, b, counts[b], k))
            })
            .ok_or(Error::InfeasibleAfterClamp { k })?;
        counts[i] += 1;
        assigned += 1;
    }

    local_search(system, &mut counts, k);
    Allocation::for_system(system, counts)
}

/// Applies the best strictly improving single-task move until none remains.
fn local_search<T: Scalar>(system: &GroupSystem<T>, counts: &mut [usize], k: usize) {
    let l = counts.len();
    let mut current = objective(system, counts, k);
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for from in 0..l {
            if counts[from] == 0 {
                continue;
            }
            for to in 0..l {
                if to == from || counts[to] >= system.size(to) {
                    continue;
                }
                counts[from] -= 1;
                counts[to] += 1;
                let value = objective(system, counts, k);
                counts[from] += 1;
                counts[to] -= 1;
                let bar = best.map_or(current, |b| b.2);
                if value < bar {
                    best = Some((from, to, value));
                }
            }
        }
        match best {
            Some((from, to, value)) => {
                counts[from] -= 1;
                counts[to] += 1;
                current = value;
            }
            None => return,
        }
    }
}

/// Integer allocation minimizing the limit computing time.
pub fn optimal_allocation<T: Scalar>(
    system: &GroupSystem<T>,
    k_total: usize,
) -> Result<Allocation> {
    let tol = T::of(1e-10) * T::of_usize(system.total_workers());
    let continuous = solve_allocation_continuous(system, k_total, tol)?;
    if continuous.degenerate {
        warn!("k_total equals the worker count; every group must wait for all of its workers");
    }
    round_allocation(system, &continuous)
}

/// Integer allocation together with its limit computing time.
pub fn optimal_allocation_with_time<T: Scalar>(
    system: &GroupSystem<T>,
    k_total: usize,
) -> Result<(Allocation, T)> {
    let alloc = optimal_allocation(system, k_total)?;
    let time = asymptotic_group_time(system, &alloc)?;
    Ok((alloc, time))
}
