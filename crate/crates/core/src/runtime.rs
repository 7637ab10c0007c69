//! Local execution of a group-coded matrix product: one thread per worker,
//! injected completion delays, and a gatherer that decodes each group as soon
//! as its quota arrives.
//!
//! The gatherer waits for the `k_i` workers of each group with the smallest
//! scheduled delays. Thread timing jitter therefore never changes which
//! results are decoded, and two runs with the same schedule produce the same
//! bytes.

use std::io::Write;
use std::sync::{Barrier, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, RecvTimeoutError};
use log::{debug, info};
use serde::Serialize;

use crate::codec::{assemble_groups, decode_single_group, group_encode, Matrix};
use crate::error::{Error, Result};
use crate::model::{Allocation, CompletionSample, GroupSystem};
use crate::scalar::Scalar;

/// Scheduler overhead tolerated when comparing observed and injected times.
pub const DEFAULT_SLACK: Duration = Duration::from_millis(50);

/// Source of per-worker delays. `None` means the worker never responds.
pub trait DelayInjector: Sync {
    fn delay(&self, group: usize, worker: usize) -> Option<Duration>;
}

impl<F> DelayInjector for F
where
    F: Fn(usize, usize) -> Option<Duration> + Sync,
{
    fn delay(&self, group: usize, worker: usize) -> Option<Duration> {
        self(group, worker)
    }
}

/// Every worker responds immediately.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDelay;

impl DelayInjector for NoDelay {
    fn delay(&self, _: usize, _: usize) -> Option<Duration> {
        Some(Duration::ZERO)
    }
}

/// Delays taken from a completion-time realization, `time_scale` seconds
/// per model time unit, with optional dead groups.
#[derive(Debug, Clone)]
pub struct SampledDelays {
    sample: CompletionSample<f64>,
    time_scale: f64,
    killed: Vec<bool>,
}

impl SampledDelays {
    pub fn new(sample: CompletionSample<f64>, time_scale: f64) -> Self {
        let killed = vec![false; sample.num_groups()];
        Self {
            sample,
            time_scale,
            killed,
        }
    }

    /// Draws trial 0 of `(system, k_total, seed)`.
    pub fn draw(system: &GroupSystem<f64>, k_total: usize, seed: u64, time_scale: f64) -> Self {
        let mut sample = CompletionSample::zeroed(system);
        sample.refill(system, k_total, seed, 0);
        Self::new(sample, time_scale)
    }

    /// Every worker of `group` stops responding.
    pub fn kill_group(mut self, group: usize) -> Self {
        self.killed[group] = true;
        self
    }

    pub fn sample(&self) -> &CompletionSample<f64> {
        &self.sample
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }
}

impl DelayInjector for SampledDelays {
    fn delay(&self, group: usize, worker: usize) -> Option<Duration> {
        if self.killed[group] {
            return None;
        }
        Some(Duration::from_secs_f64(
            self.sample.group(group)[worker] * self.time_scale,
        ))
    }
}

/// What happened to one worker. Times are seconds since the common start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkerEvent {
    /// Worker index over the whole system.
    pub worker: usize,
    pub group: usize,
    /// Index within the group, which is also the codeword row.
    pub index: usize,
    pub scheduled: Option<f64>,
    pub dispatch_ts: f64,
    pub complete_ts: Option<f64>,
    pub used: bool,
}

#[derive(Debug, Clone)]
pub struct JobTrace<T> {
    pub events: Vec<WorkerEvent>,
    /// Latest observed completion among used workers, in seconds.
    pub t_comp_observed: f64,
    /// Latest scheduled delay among used workers, in seconds.
    pub t_comp_scheduled: f64,
    pub result: Matrix<T>,
}

impl<T> JobTrace<T> {
    /// `(group, index)` of every worker whose result was decoded.
    pub fn used_workers(&self) -> Vec<(usize, usize)> {
        self.events
            .iter()
            .filter(|e| e.used)
            .map(|e| (e.group, e.index))
            .collect()
    }

    /// One JSON object per worker.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Sent by every worker once: its product, or `None` when it was cancelled
/// or never responds.
struct Report<T> {
    worker: usize,
    dispatched: Instant,
    outcome: Option<(Vec<T>, Instant)>,
}

struct Slot {
    group: usize,
    index: usize,
    delay: Option<Duration>,
}

/// Encodes `a`, lets every worker multiply its coded block by `x` after its
/// injected delay, and decodes `a * x` from the earliest `k_i` results of
/// each group.
pub fn run_coded_job<T: Scalar>(
    a: &Matrix<T>,
    x: &Matrix<T>,
    system: &GroupSystem<T>,
    alloc: &Allocation,
    delays: &dyn DelayInjector,
    seed: u64,
) -> Result<JobTrace<T>> {
    if a.cols() != x.rows() {
        return Err(Error::ShapeMismatch(format!(
            "A is {}x{}, x is {}x{}",
            a.rows(),
            a.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let assignment = group_encode(a, system, alloc, seed)?;
    let groups = system.num_groups();

    let slots: Vec<Slot> = (0..groups)
        .flat_map(|g| (0..system.size(g)).map(move |j| (g, j)))
        .map(|(group, index)| Slot {
            group,
            index,
            delay: delays.delay(group, index),
        })
        .collect();

    // The quota of each group: its k_i live workers with the smallest delays.
    let wanted = (0..groups)
        .map(|g| {
            let k_i = alloc.get(g);
            let mut live: Vec<usize> = (system.offset(g)..system.offset(g) + system.size(g))
                .filter(|&w| slots[w].delay.is_some())
                .collect();
            if live.len() < k_i {
                return Err(Error::GroupShortfall {
                    group: g,
                    got: live.len(),
                    needed: k_i,
                });
            }
            live.sort_by(|&u, &v| slots[u].delay.cmp(&slots[v].delay).then(u.cmp(&v)));
            live.truncate(k_i);
            Ok(live)
        })
        .collect::<Result<Vec<Vec<usize>>>>()?;

    let (tx, rx) = unbounded::<Report<T>>();
    let mut cancel_tx = Vec::with_capacity(groups);
    let mut cancel_rx = Vec::with_capacity(groups);
    for _ in 0..groups {
        let (s, r) = bounded::<()>(0);
        cancel_tx.push(Some(s));
        cancel_rx.push(r);
    }
    let barrier = Barrier::new(slots.len() + 1);
    // The first thread out of the barrier fixes the common time origin.
    let origin = OnceLock::new();
    let assignment = &assignment;

    thread::scope(|scope| -> Result<JobTrace<T>> {
        for (w, slot) in slots.iter().enumerate() {
            let tx = tx.clone();
            let cancel = cancel_rx[slot.group].clone();
            let (barrier, origin) = (&barrier, &origin);
            let block = assignment.block(slot.group, slot.index);
            scope.spawn(move || {
                barrier.wait();
                let start = *origin.get_or_init(Instant::now);
                let dispatched = Instant::now();
                let outcome = match (slot.delay, block) {
                    (Some(delay), Some(block)) => match cancel.recv_deadline(start + delay) {
                        Err(RecvTimeoutError::Timeout) => block
                            .matmul(x)
                            .ok()
                            .map(|p| (p.into_data(), Instant::now())),
                        _ => None,
                    },
                    _ => None,
                };
                let _ = tx.send(Report {
                    worker: w,
                    dispatched,
                    outcome,
                });
            });
        }
        drop(tx);
        drop(cancel_rx);
        // Owned here so that every exit from the gatherer releases the workers.
        let mut cancel_tx = cancel_tx;
        let rx = rx;
        barrier.wait();
        let start = *origin.get_or_init(Instant::now);
        let since = |t: Instant| t.saturating_duration_since(start).as_secs_f64();
        info!("dispatched {} workers over {groups} groups", slots.len());

        let mut events: Vec<WorkerEvent> = slots
            .iter()
            .enumerate()
            .map(|(w, s)| WorkerEvent {
                worker: w,
                group: s.group,
                index: s.index,
                scheduled: s.delay.map(|d| d.as_secs_f64()),
                dispatch_ts: 0.0,
                complete_ts: None,
                used: false,
            })
            .collect();
        let mut payloads: Vec<Option<Vec<T>>> = vec![None; slots.len()];
        let mut decoded: Vec<Option<Vec<Vec<T>>>> = vec![None; groups];
        let mut pending = 0;
        for g in 0..groups {
            if wanted[g].is_empty() {
                decoded[g] = Some(Vec::new());
                cancel_tx[g] = None;
            } else {
                pending += 1;
            }
        }

        while pending > 0 {
            let Ok(report) = rx.recv() else {
                let g = (0..groups).find(|&g| decoded[g].is_none()).unwrap_or(0);
                let got = wanted[g].iter().filter(|&&w| payloads[w].is_some()).count();
                return Err(Error::GroupShortfall {
                    group: g,
                    got,
                    needed: alloc.get(g),
                });
            };
            let worker = report.worker;
            events[worker].dispatch_ts = since(report.dispatched);
            let Some((payload, at)) = report.outcome else {
                continue;
            };
            let g = slots[worker].group;
            events[worker].complete_ts = Some(since(at));
            if decoded[g].is_some() {
                continue;
            }
            payloads[worker] = Some(payload);
            if wanted[g].iter().all(|&w| payloads[w].is_some()) {
                cancel_tx[g] = None;
                let results: Vec<(usize, Vec<T>)> = wanted[g]
                    .iter()
                    .map(|&w| (slots[w].index, payloads[w].take().expect("present")))
                    .collect();
                decoded[g] = Some(decode_single_group(g, &results, assignment)?);
                for &w in &wanted[g] {
                    events[w].used = true;
                }
                pending -= 1;
                debug!("group {} decoded", g + 1);
            }
        }

        // Release sleeping workers, then record anything that still lands.
        cancel_tx.clear();
        for report in rx.iter() {
            events[report.worker].dispatch_ts = since(report.dispatched);
            if let Some((_, at)) = report.outcome {
                events[report.worker].complete_ts = Some(since(at));
            }
        }

        let result = assemble_groups(
            decoded.into_iter().map(|d| d.expect("decoded")).collect(),
            assignment,
        )?;
        let used = || events.iter().filter(|e| e.used);
        let t_comp_observed = used().filter_map(|e| e.complete_ts).fold(0.0, f64::max);
        let t_comp_scheduled = used().filter_map(|e| e.scheduled).fold(0.0, f64::max);
        Ok(JobTrace {
            events,
            t_comp_observed,
            t_comp_scheduled,
            result,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::group_decode;
    use crate::montecarlo::comp_time_group;

    fn two_groups() -> (Matrix<f64>, Matrix<f64>, GroupSystem<f64>, Allocation) {
        let sys = GroupSystem::new(vec![3, 4], vec![1.0, 1.0]).unwrap();
        let alloc = Allocation::for_system(&sys, vec![2, 3]).unwrap();
        (
            Matrix::random(10, 4, 1),
            Matrix::random(4, 1, 2),
            sys,
            alloc,
        )
    }

    #[test]
    fn zero_delays_give_the_exact_product() {
        let (a, x, sys, alloc) = two_groups();
        let trace = run_coded_job(&a, &x, &sys, &alloc, &NoDelay, 0).unwrap();
        assert!(trace.result.relative_error(&a.matmul(&x).unwrap()) < 1e-10);
        assert_eq!(
            trace.used_workers(),
            [(0, 0), (0, 1), (1, 0), (1, 1), (1, 2)]
        );
    }

    #[test]
    fn sampled_delays_are_deterministic() {
        let (a, x, sys, alloc) = two_groups();
        let delays = SampledDelays::draw(&sys, 5, 9, 0.02);
        let one = run_coded_job(&a, &x, &sys, &alloc, &delays, 3).unwrap();
        let two = run_coded_job(&a, &x, &sys, &alloc, &delays, 3).unwrap();
        assert_eq!(one.used_workers(), two.used_workers());
        assert_eq!(one.result, two.result);
        assert_eq!(one.t_comp_scheduled, two.t_comp_scheduled);
        let scheduled: Vec<_> = one.events.iter().map(|e| e.scheduled).collect();
        assert_eq!(
            scheduled,
            two.events.iter().map(|e| e.scheduled).collect::<Vec<_>>()
        );
        assert!(one.result.relative_error(&a.matmul(&x).unwrap()) < 1e-8);
    }

    #[test]
    fn observed_time_tracks_injected_group_time() {
        let (a, x, sys, alloc) = two_groups();
        let delays = SampledDelays::draw(&sys, 5, 4, 0.05);
        let trace = run_coded_job(&a, &x, &sys, &alloc, &delays, 0).unwrap();
        let expected = comp_time_group(delays.sample(), &alloc).unwrap() * delays.time_scale();
        // Durations carry whole nanoseconds.
        assert!((trace.t_comp_scheduled - expected).abs() < 1e-8);
        assert!(trace.t_comp_observed + 1e-3 >= expected);
        assert!(trace.t_comp_observed - expected <= DEFAULT_SLACK.as_secs_f64());
    }

    #[test]
    fn pipelined_decode_matches_batch_decode() {
        let (a, x, sys, alloc) = two_groups();
        let delays = SampledDelays::draw(&sys, 5, 6, 0.01);
        let trace = run_coded_job(&a, &x, &sys, &alloc, &delays, 8).unwrap();
        let asg = group_encode(&a, &sys, &alloc, 8).unwrap();
        let mut per_group = vec![Vec::new(), Vec::new()];
        let mut used: Vec<_> = trace.events.iter().filter(|e| e.used).collect();
        used.sort_by(|p, q| {
            p.scheduled
                .partial_cmp(&q.scheduled)
                .unwrap()
                .then(p.worker.cmp(&q.worker))
        });
        for e in used {
            let block = asg.block(e.group, e.index).unwrap().matmul(&x).unwrap();
            per_group[e.group].push((e.index, block.into_data()));
        }
        assert_eq!(group_decode(&per_group, &asg).unwrap(), trace.result);
    }

    #[test]
    fn dead_group_is_reported() {
        let (a, x, sys, alloc) = two_groups();
        let delays = SampledDelays::draw(&sys, 5, 1, 0.0).kill_group(1);
        assert_eq!(
            run_coded_job(&a, &x, &sys, &alloc, &delays, 0).unwrap_err(),
            Error::GroupShortfall {
                group: 1,
                got: 0,
                needed: 3
            }
        );
    }

    #[test]
    fn late_results_do_not_change_the_output() {
        let (a, x, sys, alloc) = two_groups();
        // Worker 2 of group 1 and worker 3 of group 2 are slow but alive.
        let slow = |g: usize, j: usize| {
            let ms = if (g, j) == (0, 2) || (g, j) == (1, 3) {
                30
            } else {
                0
            };
            Some(Duration::from_millis(ms))
        };
        let trace = run_coded_job(&a, &x, &sys, &alloc, &slow, 0).unwrap();
        let fast = run_coded_job(&a, &x, &sys, &alloc, &NoDelay, 0).unwrap();
        assert_eq!(trace.result, fast.result);
        assert!(!trace.events[2].used && !trace.events[6].used);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (a, _, sys, alloc) = two_groups();
        let x = Matrix::<f64>::random(5, 1, 0);
        assert!(matches!(
            run_coded_job(&a, &x, &sys, &alloc, &NoDelay, 0),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn trace_is_json_lines() {
        let (a, x, sys, alloc) = two_groups();
        let trace = run_coded_job(&a, &x, &sys, &alloc, &NoDelay, 0).unwrap();
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let lines: Vec<serde_json::Value> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 7);
        for key in ["worker", "group", "dispatch_ts", "complete_ts", "used"] {
            assert!(lines[0].get(key).is_some(), "{key}");
        }
    }
}
