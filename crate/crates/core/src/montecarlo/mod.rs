//! Per-realization computing times for MDS, group and product codes, the
//! decoding-complexity model, and the parallel trial engine.

pub mod experiment;
pub mod product;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{kth_smallest_in_place, Allocation, CompletionSample, GroupSystem};
use crate::scalar::Scalar;

pub use experiment::{
    run_experiment, AllocationRule, CodeConfig, CodeSummary, ExecPoint, ExperimentConfig,
    ExperimentSummary, GeneratorConfig, NamedAllocation, SortRule, Stats, SystemConfig,
    SCHEMA_VERSION,
};
pub use product::{comp_time_product, comp_time_product_trial, peel_closure, product_placement};

/// `T_{k:n}`: the `k`-th smallest completion time over all workers.
pub fn comp_time_mds<T: Scalar>(sample: &CompletionSample<T>, k: usize) -> Result<T> {
    comp_time_mds_with(sample, k, &mut Vec::new())
}

pub(crate) fn comp_time_mds_with<T: Scalar>(
    sample: &CompletionSample<T>,
    k: usize,
    scratch: &mut Vec<T>,
) -> Result<T> {
    scratch.clear();
    scratch.extend_from_slice(sample.all());
    kth_smallest_in_place(scratch, k)
}

/// `max_i T^(i)_{k_i:n_i}`; groups with `k_i = 0` contribute 0.
pub fn comp_time_group<T: Scalar>(sample: &CompletionSample<T>, alloc: &Allocation) -> Result<T> {
    comp_time_group_with(sample, alloc, &mut Vec::new())
}

pub(crate) fn comp_time_group_with<T: Scalar>(
    sample: &CompletionSample<T>,
    alloc: &Allocation,
    scratch: &mut Vec<T>,
) -> Result<T> {
    if alloc.num_groups() != sample.num_groups() {
        return Err(Error::InvalidAllocation(format!(
            "{} entries for {} groups",
            alloc.num_groups(),
            sample.num_groups()
        )));
    }
    let mut worst = T::zero();
    for g in 0..sample.num_groups() {
        let (k_i, n_i) = (alloc.get(g), sample.group_len(g));
        if k_i == 0 {
            continue;
        }
        if k_i > n_i {
            return Err(Error::AllocationExceedsGroup { group: g, k_i, n_i });
        }
        scratch.clear();
        scratch.extend_from_slice(sample.group(g));
        worst = worst.max(kth_smallest_in_place(scratch, k_i)?);
    }
    Ok(worst)
}

/// The code families compared by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum CodeVariant<T> {
    Mds {
        n: usize,
        k: usize,
    },
    Group {
        system: GroupSystem<T>,
        alloc: Allocation,
    },
    Product {
        sqrt_n: usize,
        sqrt_k: usize,
    },
}

/// A code together with its decoding exponent `beta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeSpec<T> {
    variant: CodeVariant<T>,
    beta: T,
}

impl<T: Scalar> CodeSpec<T> {
    pub fn new(variant: CodeVariant<T>, beta: T) -> Result<Self> {
        if !(beta > T::one()) || !beta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "beta must exceed 1, got {beta}"
            )));
        }
        match &variant {
            CodeVariant::Mds { n, k } => {
                if *k == 0 || k > n {
                    return Err(Error::InvalidDims { n: *n, k: *k });
                }
            }
            CodeVariant::Group { system, alloc } => alloc.check_against(system)?,
            CodeVariant::Product { sqrt_n, sqrt_k } => {
                if *sqrt_k == 0 || sqrt_k > sqrt_n {
                    return Err(Error::InvalidDims {
                        n: *sqrt_n,
                        k: *sqrt_k,
                    });
                }
            }
        }
        Ok(Self { variant, beta })
    }

    pub fn mds(n: usize, k: usize, beta: T) -> Result<Self> {
        Self::new(CodeVariant::Mds { n, k }, beta)
    }

    pub fn group(system: GroupSystem<T>, alloc: Allocation, beta: T) -> Result<Self> {
        Self::new(CodeVariant::Group { system, alloc }, beta)
    }

    pub fn product(sqrt_n: usize, sqrt_k: usize, beta: T) -> Result<Self> {
        Self::new(CodeVariant::Product { sqrt_n, sqrt_k }, beta)
    }

    pub fn variant(&self) -> &CodeVariant<T> {
        &self.variant
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// Number of source tasks `k`.
    pub fn k(&self) -> usize {
        match &self.variant {
            CodeVariant::Mds { k, .. } => *k,
            CodeVariant::Group { alloc, .. } => alloc.k_total(),
            CodeVariant::Product { sqrt_k, .. } => sqrt_k * sqrt_k,
        }
    }

    /// Number of workers `n`.
    pub fn n(&self) -> usize {
        match &self.variant {
            CodeVariant::Mds { n, .. } => *n,
            CodeVariant::Group { system, .. } => system.total_workers(),
            CodeVariant::Product { sqrt_n, .. } => sqrt_n * sqrt_n,
        }
    }

    /// Computing time of this code on one realization. `seed` and `trial`
    /// only matter for the product code's worker placement.
    pub fn comp_time(&self, sample: &CompletionSample<T>, seed: u64, trial: u64) -> Result<T> {
        self.comp_time_with(sample, seed, trial, &mut EvalScratch::default())
    }

    pub(crate) fn comp_time_with(
        &self,
        sample: &CompletionSample<T>,
        seed: u64,
        trial: u64,
        scratch: &mut EvalScratch<T>,
    ) -> Result<T> {
        if sample.total_workers() != self.n() {
            return Err(Error::ShapeMismatch(format!(
                "sample has {} workers, code has {}",
                sample.total_workers(),
                self.n()
            )));
        }
        match &self.variant {
            CodeVariant::Mds { k, .. } => comp_time_mds_with(sample, *k, &mut scratch.values),
            CodeVariant::Group { system, alloc } => {
                if !sample.matches(system) {
                    return Err(Error::ShapeMismatch(
                        "sample groups differ from the code's system".into(),
                    ));
                }
                comp_time_group_with(sample, alloc, &mut scratch.values)
            }
            CodeVariant::Product { sqrt_n, sqrt_k } => product::comp_time_product_with(
                sample,
                *sqrt_n,
                *sqrt_k,
                seed,
                trial,
                &mut scratch.product,
            ),
        }
    }

    pub fn evaluate(
        &self,
        sample: &CompletionSample<T>,
        seed: u64,
        trial: u64,
    ) -> Result<TimingResult<T>> {
        Ok(TimingResult {
            t_comp: self.comp_time(sample, seed, trial)?,
            dec_units: dec_units(self),
        })
    }
}

/// Reusable buffers for repeated evaluations.
#[derive(Debug, Default)]
pub(crate) struct EvalScratch<T> {
    values: Vec<T>,
    product: product::ProductScratch,
}

/// Computing time and decoding cost of one code on one realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingResult<T> {
    pub t_comp: T,
    pub dec_units: T,
}

impl<T: Scalar> TimingResult<T> {
    /// `T_exec = T_comp + alpha * T_dec`.
    pub fn t_exec(&self, alpha: T) -> T {
        self.t_comp + alpha * self.dec_units
    }
}

/// Decoding cost in raw complexity units: `k^beta` for MDS,
/// `sqrt(k)^(beta + 1)` for the product code (2 sqrt(k) row and column
/// decodes of dimension sqrt(k)), and `k_max^beta` for the group code.
pub fn dec_units<T: Scalar>(spec: &CodeSpec<T>) -> T {
    let beta = spec.beta;
    match &spec.variant {
        CodeVariant::Mds { k, .. } => T::of_usize(*k).powf(beta),
        CodeVariant::Product { sqrt_k, .. } => T::of_usize(*sqrt_k).powf(beta + T::one()),
        CodeVariant::Group { alloc, .. } => T::of_usize(alloc.k_max()).powf(beta),
    }
}

/// Group-to-MDS decoding ratio `(k_max / k)^beta`.
pub fn rho_dec<T: Scalar>(alloc: &Allocation, beta: T) -> T {
    (T::of_usize(alloc.k_max()) / T::of_usize(alloc.k_total())).powf(beta)
}

/// Whether a group code with largest share `k_max` decodes in fewer units
/// than a product code over the same `k` tasks.
///
/// Compares `k_max^beta` with `sqrt(k)^(beta + 1)`, which is the condition
/// `k_max < sqrt(k)^(1 + 1/beta)` without the fractional exponent.
pub fn group_decodes_cheaper<T: Scalar>(k_max: usize, k: usize, beta: T) -> bool {
    let sqrt_k = T::of_usize(k).sqrt();
    T::of_usize(k_max).powf(beta) < sqrt_k.powf(beta + T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_sample() -> CompletionSample<f64> {
        CompletionSample::from_groups(vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.4]], 3).unwrap()
    }

    fn six_groups() -> GroupSystem<f64> {
        GroupSystem::new(
            vec![180, 170, 160, 140, 130, 120],
            vec![1.25, 1.35, 1.45, 1.55, 1.65, 1.75],
        )
        .unwrap()
    }

    #[test]
    fn mds_time_examples() {
        let s = small_sample();
        assert_eq!(comp_time_mds(&s, 3).unwrap(), 0.3);
        assert_eq!(comp_time_mds(&s, 1).unwrap(), 0.1);
        assert_eq!(comp_time_mds(&s, 5).unwrap(), 0.5);
        assert_eq!(
            comp_time_mds(&s, 6),
            Err(Error::IndexOutOfRange { k: 6, len: 5 })
        );
    }

    #[test]
    fn group_time_examples() {
        let s = small_sample();
        let alloc = Allocation::new(vec![2, 1]).unwrap();
        assert_eq!(comp_time_group(&s, &alloc).unwrap(), 0.3);
        let full = Allocation::new(vec![3, 2]).unwrap();
        assert_eq!(comp_time_group(&s, &full).unwrap(), 0.5);
        let idle = Allocation::new(vec![2, 0]).unwrap();
        assert_eq!(comp_time_group(&s, &idle).unwrap(), 0.3);
        let over = Allocation::new(vec![1, 3]).unwrap();
        assert_eq!(
            comp_time_group(&s, &over),
            Err(Error::AllocationExceedsGroup {
                group: 1,
                k_i: 3,
                n_i: 2
            })
        );
    }

    #[test]
    fn single_group_reduces_to_mds() {
        let s = CompletionSample::from_groups(vec![vec![0.4, 0.1, 0.9, 0.3]], 2).unwrap();
        let alloc = Allocation::new(vec![2]).unwrap();
        assert_eq!(
            comp_time_group(&s, &alloc).unwrap(),
            comp_time_mds(&s, 2).unwrap()
        );
    }

    #[test]
    fn six_group_decoding_units() {
        let alloc = Allocation::new(vec![71, 71, 70, 65, 63, 60]).unwrap();
        assert_eq!(dec_units(&CodeSpec::mds(900, 400, 2.0).unwrap()), 160000.0);
        assert_eq!(dec_units(&CodeSpec::product(30, 20, 2.0).unwrap()), 8000.0);
        let group = CodeSpec::group(six_groups(), alloc.clone(), 2.0).unwrap();
        assert_eq!(dec_units(&group), 5041.0);
        assert_eq!(rho_dec(&alloc, 2.0), (71.0f64 / 400.0).powi(2));
    }

    #[test]
    fn rho_dec_examples() {
        let even = Allocation::new(vec![30, 30, 30, 30]).unwrap();
        assert!((rho_dec(&even, 2.0f64) - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(rho_dec(&Allocation::new(vec![40]).unwrap(), 3.0), 1.0);
    }

    #[test]
    fn crossover_matches_fractional_form() {
        for beta in [1.5f64, 2.0, 2.5, 3.7] {
            for sqrt_k in 1..=30usize {
                let k = sqrt_k * sqrt_k;
                let bound = (sqrt_k as f64).powf(1.0 + 1.0 / beta);
                for k_max in 1..=k {
                    if (k_max as f64 - bound).abs() < 1e-9 * bound {
                        continue;
                    }
                    assert_eq!(
                        group_decodes_cheaper(k_max, k, beta),
                        (k_max as f64) < bound
                    );
                }
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(CodeSpec::<f64>::mds(10, 11, 2.0).is_err());
        assert!(CodeSpec::<f64>::mds(10, 5, 1.0).is_err());
        assert!(CodeSpec::<f64>::product(3, 4, 2.0).is_err());
        let bad = Allocation::new(vec![200, 200]).unwrap();
        assert!(CodeSpec::group(
            GroupSystem::new(vec![100, 400], vec![1.0, 1.0]).unwrap(),
            bad,
            2.0
        )
        .is_err());
    }

    #[test]
    fn exec_time_is_affine_in_alpha() {
        let r = TimingResult {
            t_comp: 0.5f64,
            dec_units: 100.0,
        };
        assert_eq!(r.t_exec(0.0), 0.5);
        assert_eq!(r.t_exec(0.01), 1.5);
    }

    #[test]
    fn spec_rejects_mismatched_sample() {
        let spec = CodeSpec::mds(4, 2, 2.0).unwrap();
        assert!(matches!(
            spec.comp_time(&small_sample(), 0, 0),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn mds_dominates_on_six_groups() {
        let sys = six_groups();
        let group = CodeSpec::group(
            sys.clone(),
            Allocation::new(vec![71, 71, 70, 65, 63, 60]).unwrap(),
            2.0,
        )
        .unwrap();
        let product = CodeSpec::product(30, 20, 2.0).unwrap();
        let mut sample = CompletionSample::zeroed(&sys);
        for trial in 0..200 {
            sample.refill(&sys, 400, 5, trial);
            let mds = comp_time_mds(&sample, 400).unwrap();
            assert!(mds <= group.comp_time(&sample, 5, trial).unwrap());
            assert!(mds <= product.comp_time(&sample, 5, trial).unwrap());
        }
    }
}
