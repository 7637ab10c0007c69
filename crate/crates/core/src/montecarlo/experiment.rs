//! Declarative experiment configuration and the paired, parallel trial loop.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{comp_time_mds_with, dec_units, rho_dec, CodeSpec, CodeVariant, EvalScratch};
use crate::allocator::optimal_allocation;
use crate::asymptotics::check_order_bounds_with;
use crate::error::{Error, Result};
use crate::model::{Allocation, CompletionSample, GroupSystem};
use crate::stream::{self, Domain};

/// Version of the configuration document layout understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// One simulation run: a system (fixed or redrawn every trial), the codes to
/// compare on each realization, and the decoding-cost weights to report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    pub k: usize,
    pub codes: Vec<CodeConfig>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub alpha_grid: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_beta() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub sizes: Vec<usize>,
    pub rates: Vec<f64>,
}

/// Random systems: `groups` groups whose integer sizes are uniform in
/// `[(1 - size_spread) n / L, (1 + size_spread) n / L]` and sum to
/// `total_workers`, with rates uniform in `rate_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub groups: usize,
    pub total_workers: usize,
    #[serde(default = "default_spread")]
    pub size_spread: f64,
    #[serde(default = "default_rate_range")]
    pub rate_range: [f64; 2],
    #[serde(default)]
    pub sort_rule: SortRule,
}

fn default_spread() -> f64 {
    0.3
}

fn default_rate_range() -> [f64; 2] {
    [1.0, 2.0]
}

/// How drawn sizes and rates are paired across groups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortRule {
    /// Leave the draw order alone.
    #[default]
    None,
    /// Sizes ascending, rates descending: the fastest group is the smallest.
    #[serde(alias = "scenario1")]
    Imbalanced,
    /// Sizes and rates both ascending: the fastest group is the largest.
    #[serde(alias = "scenario2")]
    Balanced,
}

impl SortRule {
    pub fn apply(self, sizes: &mut [usize], rates: &mut [f64]) {
        match self {
            SortRule::None => {}
            SortRule::Imbalanced => {
                sizes.sort_unstable();
                rates.sort_unstable_by(|a, b| b.total_cmp(a));
            }
            SortRule::Balanced => {
                sizes.sort_unstable();
                rates.sort_unstable_by(f64::total_cmp);
            }
        }
    }
}

const MAX_SIZE_DRAWS: usize = 100_000;

impl GeneratorConfig {
    fn size_bounds(&self) -> (usize, usize) {
        let share = self.total_workers as f64 / self.groups as f64;
        let lo = ((1.0 - self.size_spread) * share - 1e-9).ceil().max(1.0) as usize;
        let hi = ((1.0 + self.size_spread) * share + 1e-9).floor() as usize;
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::InvalidConfig(
                "generator.groups must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.size_spread) {
            return Err(Error::InvalidConfig(
                "generator.size_spread must lie in [0, 1)".into(),
            ));
        }
        let [lo, hi] = self.rate_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(
                "generator.rate_range must satisfy 0 < low <= high".into(),
            ));
        }
        let (a, b) = self.size_bounds();
        if a > b || a * self.groups > self.total_workers || b * self.groups < self.total_workers {
            return Err(Error::InvalidConfig(
                "generator.total_workers cannot be split into groups within the size bounds".into(),
            ));
        }
        Ok(())
    }

    /// Sizes and rates of draw `index`, before sorting.
    ///
    /// The first `L - 1` sizes are uniform integers within the bounds and the
    /// last takes the remainder; draws whose remainder leaves the bounds are
    /// rejected, which leaves the sizes uniform over all in-bound splits.
    pub fn draw_unsorted(&self, seed: u64, index: u64) -> Result<(Vec<usize>, Vec<f64>)> {
        let (lo, hi) = self.size_bounds();
        let mut rng = stream::substream(seed, Domain::SystemDraw, index);
        let l = self.groups;
        let mut sizes = vec![0; l];
        let mut accepted = false;
        for _ in 0..MAX_SIZE_DRAWS {
            for s in &mut sizes[..l - 1] {
                *s = rng.random_range(lo..=hi);
            }
            let used: usize = sizes[..l - 1].iter().sum();
            if let Some(last) = self.total_workers.checked_sub(used) {
                if (lo..=hi).contains(&last) {
                    sizes[l - 1] = last;
                    accepted = true;
                    break;
                }
            }
        }
        if !accepted {
            return Err(Error::InvalidConfig(
                "generator could not draw group sizes within bounds".into(),
            ));
        }
        let [rlo, rhi] = self.rate_range;
        let rates = (0..l)
            .map(|_| {
                if rlo == rhi {
                    rlo
                } else {
                    rng.random_range(rlo..rhi)
                }
            })
            .collect();
        Ok((sizes, rates))
    }

    /// System of draw `index` with the configured sort rule applied.
    pub fn draw(&self, seed: u64, index: u64) -> Result<GroupSystem<f64>> {
        let (mut sizes, mut rates) = self.draw_unsorted(seed, index)?;
        self.sort_rule.apply(&mut sizes, &mut rates);
        GroupSystem::new(sizes, rates)
    }
}

/// A code to evaluate on each realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CodeConfig {
    Mds,
    Group {
        #[serde(default)]
        allocation: AllocationRule,
    },
    /// Grid sides default to the square roots of `n` and `k`.
    Product {
        #[serde(default)]
        sqrt_n: Option<usize>,
        #[serde(default)]
        sqrt_k: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AllocationRule {
    Named(NamedAllocation),
    Explicit(Vec<usize>),
}

impl Default for AllocationRule {
    fn default() -> Self {
        AllocationRule::Named(NamedAllocation::Optimal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedAllocation {
    Optimal,
    Even,
}

impl CodeConfig {
    pub fn label(&self) -> String {
        match self {
            CodeConfig::Mds => "mds".into(),
            CodeConfig::Group {
                allocation: AllocationRule::Named(NamedAllocation::Optimal),
            } => "group_opt".into(),
            CodeConfig::Group {
                allocation: AllocationRule::Named(NamedAllocation::Even),
            } => "group_even".into(),
            CodeConfig::Group {
                allocation: AllocationRule::Explicit(_),
            } => "group".into(),
            CodeConfig::Product { .. } => "product".into(),
        }
    }

    fn build(&self, system: &GroupSystem<f64>, k: usize, beta: f64) -> Result<CodeSpec<f64>> {
        let n = system.total_workers();
        match self {
            CodeConfig::Mds => CodeSpec::mds(n, k, beta),
            CodeConfig::Group { allocation } => {
                let alloc = match allocation {
                    AllocationRule::Named(NamedAllocation::Optimal) => {
                        optimal_allocation(system, k)?
                    }
                    AllocationRule::Named(NamedAllocation::Even) => Allocation::even(system, k)?,
                    AllocationRule::Explicit(v) => {
                        let alloc = Allocation::for_system(system, v.clone())?;
                        if alloc.k_total() != k {
                            return Err(Error::InvalidConfig(format!(
                                "explicit allocation sums to {}, k is {k}",
                                alloc.k_total()
                            )));
                        }
                        alloc
                    }
                };
                CodeSpec::group(system.clone(), alloc, beta)
            }
            CodeConfig::Product { sqrt_n, sqrt_k } => {
                let side = |given: Option<usize>, total: usize, name: &str| match given {
                    Some(s) => Ok(s),
                    None => exact_sqrt(total).ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "product code needs {name} when {total} is not a perfect square"
                        ))
                    }),
                };
                let (sn, sk) = (side(*sqrt_n, n, "sqrt_n")?, side(*sqrt_k, k, "sqrt_k")?);
                if sn * sn != n || sk * sk != k {
                    return Err(Error::InvalidConfig(format!(
                        "product grid ({sn}, {sk}) does not match n = {n}, k = {k}"
                    )));
                }
                CodeSpec::product(sn, sk, beta)
            }
        }
    }
}

fn exact_sqrt(v: usize) -> Option<usize> {
    let r = (v as f64).sqrt().round() as usize;
    (r * r == v).then_some(r)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match (&self.system, &self.generator) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::InvalidConfig(
                    "exactly one of system or generator must be given".into(),
                ))
            }
            (Some(s), None) => {
                GroupSystem::new(s.sizes.clone(), s.rates.clone())?;
            }
            (None, Some(g)) => g.validate()?,
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.codes.is_empty() {
            return Err(Error::InvalidConfig(
                "codes must list at least one code".into(),
            ));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta must exceed 1, got {}",
                self.beta
            )));
        }
        if let Some(a) = self
            .alpha_grid
            .iter()
            .find(|a| !(**a >= 0.0 && a.is_finite()))
        {
            return Err(Error::InvalidConfig(format!(
                "alpha_grid entries must be finite and >= 0, got {a}"
            )));
        }
        let n = self.total_workers();
        if self.k == 0 || self.k > n {
            return Err(Error::InfeasibleK { k: self.k, n });
        }
        Ok(())
    }

    pub fn total_workers(&self) -> usize {
        match (&self.system, &self.generator) {
            (Some(s), _) => s.sizes.iter().sum(),
            (None, Some(g)) => g.total_workers,
            (None, None) => 0,
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.codes.iter().map(CodeConfig::label).collect()
    }
}

/// Mean, standard error and range of a per-trial quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`; 0 for a single trial.
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Welford accumulation in iteration order.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
            min = min.min(v);
            max = max.max(v);
        }
        let std_error = if n > 1 {
            (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        // Rounding can nudge the running mean just outside the range.
        let mean = if n > 0 {
            mean.clamp(min, max)
        } else {
            f64::NAN
        };
        Self {
            trials: n,
            mean,
            std_error,
            min,
            max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecPoint {
    pub alpha: f64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSummary {
    pub label: String,
    pub t_comp: Stats,
    pub dec_units: Stats,
    /// Mean `T_exec` for every entry of the configured alpha grid.
    pub exec: Vec<ExecPoint>,
    /// Present for group codes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_dec: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub trials: usize,
    pub master_seed: u64,
    pub codes: Vec<CodeSummary>,
    /// Realizations on which the order-statistic sandwich was checked (one
    /// per group code with every `k_i >= 1`) and how many failed.
    pub sandwich_checks: usize,
    pub sandwich_violations: usize,
    /// Realizations on which `T_MDS <= T_code` was checked, and failures.
    pub dominance_checks: usize,
    pub dominance_violations: usize,
}

impl ExperimentSummary {
    pub fn code(&self, label: &str) -> Option<&CodeSummary> {
        self.codes.iter().find(|c| c.label == label)
    }
}

struct TrialOutcome {
    t_comp: Vec<f64>,
    dec_units: Vec<f64>,
    rho: Vec<Option<f64>>,
    sandwich: (usize, usize),
    dominance: (usize, usize),
}

struct TrialScratch {
    sample: CompletionSample<f64>,
    eval: EvalScratch<f64>,
    values: Vec<f64>,
}

fn run_trial(
    config: &ExperimentConfig,
    fixed: Option<&(GroupSystem<f64>, Vec<CodeSpec<f64>>)>,
    trial: u64,
    scratch: &mut TrialScratch,
) -> Result<TrialOutcome> {
    let drawn;
    let (system, specs) = match fixed {
        Some((s, c)) => (s, c),
        None => {
            let generator = config.generator.as_ref().expect("validated");
            let system = generator.draw(config.master_seed, trial)?;
            let specs = build_specs(config, &system)?;
            drawn = (system, specs);
            (&drawn.0, &drawn.1)
        }
    };
    let k = config.k;
    let seed = config.master_seed;
    scratch.sample.refill(system, k, seed, trial);
    let sample = &scratch.sample;
    let mds_time = comp_time_mds_with(sample, k, &mut scratch.values)?;

    let mut out = TrialOutcome {
        t_comp: Vec::with_capacity(specs.len()),
        dec_units: Vec::with_capacity(specs.len()),
        rho: Vec::with_capacity(specs.len()),
        sandwich: (0, 0),
        dominance: (0, 0),
    };
    for spec in specs {
        let t = match spec.variant() {
            CodeVariant::Mds { .. } => mds_time,
            _ => spec.comp_time_with(sample, seed, trial, &mut scratch.eval)?,
        };
        out.dominance.0 += 1;
        if mds_time > t {
            out.dominance.1 += 1;
        }
        let mut rho = None;
        if let CodeVariant::Group { alloc, .. } = spec.variant() {
            rho = Some(rho_dec(alloc, spec.beta()));
            if alloc.per_group().iter().all(|&k_i| k_i >= 1) {
                let report = check_order_bounds_with(sample, alloc, &mut scratch.values)?;
                out.sandwich.0 += 1;
                if !report.holds || report.upper != t {
                    out.sandwich.1 += 1;
                }
            }
        }
        out.t_comp.push(t);
        out.dec_units.push(dec_units(spec));
        out.rho.push(rho);
    }
    Ok(out)
}

fn build_specs(config: &ExperimentConfig, system: &GroupSystem<f64>) -> Result<Vec<CodeSpec<f64>>> {
    config
        .codes
        .iter()
        .map(|c| c.build(system, config.k, config.beta))
        .collect()
}

/// Runs every trial on its own realization, evaluating all configured codes
/// on that same realization. Trials run in parallel on the current rayon
/// pool and are aggregated in trial order, so the summary does not depend on
/// the degree of parallelism.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let fixed = match &config.system {
        Some(s) => {
            let system = GroupSystem::new(s.sizes.clone(), s.rates.clone())?;
            let specs = build_specs(config, &system)?;
            Some((system, specs))
        }
        None => None,
    };
    let shape = fixed.as_ref().map(|(s, _)| s.clone()).unwrap_or_else(|| {
        GroupSystem::new(vec![config.total_workers()], vec![1.0]).expect("validated")
    });

    let outcomes = (0..config.trials as u64)
        .into_par_iter()
        .map_init(
            || TrialScratch {
                sample: CompletionSample::zeroed(&shape),
                eval: EvalScratch::default(),
                values: Vec::new(),
            },
            |scratch, trial| run_trial(config, fixed.as_ref(), trial, scratch),
        )
        .collect::<Result<Vec<_>>>()?;

    let codes = config
        .codes
        .iter()
        .enumerate()
        .map(|(c, code)| {
            let t_comp = Stats::from_values(outcomes.iter().map(|o| o.t_comp[c]));
            let dec = Stats::from_values(outcomes.iter().map(|o| o.dec_units[c]));
            let exec = config
                .alpha_grid
                .iter()
                .map(|&alpha| {
                    let s = Stats::from_values(
                        outcomes
                            .iter()
                            .map(|o| o.t_comp[c] + alpha * o.dec_units[c]),
                    );
                    ExecPoint {
                        alpha,
                        mean: s.mean,
                        std_error: s.std_error,
                    }
                })
                .collect();
            let rho_dec = matches!(code, CodeConfig::Group { .. })
                .then(|| Stats::from_values(outcomes.iter().filter_map(|o| o.rho[c])));
            CodeSummary {
                label: code.label(),
                t_comp,
                dec_units: dec,
                exec,
                rho_dec,
            }
        })
        .collect();

    let sum = |f: fn(&TrialOutcome) -> usize| outcomes.iter().map(f).sum();
    Ok(ExperimentSummary {
        config: config.clone(),
        trials: config.trials,
        master_seed: config.master_seed,
        codes,
        sandwich_checks: sum(|o| o.sandwich.0),
        sandwich_violations: sum(|o| o.sandwich.1),
        dominance_checks: sum(|o| o.dominance.0),
        dominance_violations: sum(|o| o.dominance.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3_config(n: usize, trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            system: Some(SystemConfig {
                sizes: vec![3 * n / 4, n / 4],
                rates: vec![1.0, 2.0],
            }),
            generator: None,
            k: 100,
            codes: vec![
                CodeConfig::Mds,
                CodeConfig::Group {
                    allocation: AllocationRule::default(),
                },
                CodeConfig::Group {
                    allocation: AllocationRule::Named(NamedAllocation::Even),
                },
            ],
            beta: 2.0,
            alpha_grid: vec![0.0, 1e-6],
            trials,
            master_seed: 7,
        }
    }

    #[test]
    fn parses_documented_toml() {
        let text = r#"
            schema_version = 1
            k = 100
            beta = 2.0
            alpha_grid = [0.0, 1e-7]
            trials = 50
            master_seed = 3

            [system]
            sizes = [300, 100]
            rates = [1.0, 2.0]

            [[codes]]
            type = "mds"

            [[codes]]
            type = "group"
            allocation = "optimal"

            [[codes]]
            type = "group"
            allocation = [50, 50]
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(
            config.codes[2],
            CodeConfig::Group {
                allocation: AllocationRule::Explicit(vec![50, 50])
            }
        );
        assert_eq!(config.labels(), ["mds", "group_opt", "group"]);
        let summary = run_experiment(&config).unwrap();
        assert_eq!(summary.codes.len(), 3);
        assert_eq!(summary.codes[0].exec.len(), 2);
    }

    #[test]
    fn parses_generator_toml() {
        let text = r#"
            schema_version = 1
            k = 120
            trials = 20
            codes = [{ type = "group" }]
            [generator]
            groups = 4
            total_workers = 240
            sort_rule = "scenario2"
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(
            config.generator.as_ref().unwrap().sort_rule,
            SortRule::Balanced
        );
        let summary = run_experiment(&config).unwrap();
        let rho = summary.codes[0].rho_dec.unwrap();
        assert!(rho.min >= 1.0 / 16.0 - 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = fig3_config(400, 10);
        c.schema_version = 2;
        assert!(matches!(run_experiment(&c), Err(Error::InvalidConfig(_))));
        let mut c = fig3_config(400, 10);
        c.trials = 0;
        assert!(run_experiment(&c).is_err());
        let mut c = fig3_config(400, 10);
        c.k = 401;
        assert_eq!(
            run_experiment(&c).unwrap_err(),
            Error::InfeasibleK { k: 401, n: 400 }
        );
        let mut c = fig3_config(400, 10);
        c.beta = 1.0;
        assert!(run_experiment(&c).is_err());
        let mut c = fig3_config(400, 10);
        c.codes.push(CodeConfig::Product {
            sqrt_n: None,
            sqrt_k: None,
        });
        c.k = 99;
        assert!(matches!(run_experiment(&c), Err(Error::InvalidConfig(_))));
        assert!(toml::from_str::<ExperimentConfig>(
            "schema_version = 1\nk = 1\ntrials = 1\ncodes = []\nbogus = 1"
        )
        .is_err());
    }

    #[test]
    fn single_trial_mean_is_that_trial() {
        let c = fig3_config(400, 1);
        let s = run_experiment(&c).unwrap();
        let sys = GroupSystem::new(vec![300, 100], vec![1.0, 2.0]).unwrap();
        let sample = crate::model::sample_trial(&sys, 100, 7, 0).unwrap();
        let mds = crate::model::kth_smallest(sample.all(), 100).unwrap();
        assert_eq!(s.codes[0].t_comp.mean, mds);
        assert_eq!(s.codes[0].t_comp.std_error, 0.0);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let c = fig3_config(400, 300);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let three = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let a = one.install(|| run_experiment(&c)).unwrap();
        let b = three.install(|| run_experiment(&c)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bounds_hold_on_every_trial() {
        let s = run_experiment(&fig3_config(400, 2000)).unwrap();
        assert_eq!(s.sandwich_checks, 4000);
        assert_eq!(s.sandwich_violations, 0);
        assert_eq!(s.dominance_violations, 0);
        for code in &s.codes {
            assert!(code.t_comp.min <= code.t_comp.mean && code.t_comp.mean <= code.t_comp.max);
        }
        let (mds, opt, even) = (&s.codes[0], &s.codes[1], &s.codes[2]);
        assert!(mds.t_comp.mean <= opt.t_comp.mean);
        assert!(opt.t_comp.mean < even.t_comp.mean);
        let expected = opt.t_comp.mean + 1e-6 * opt.dec_units.mean;
        assert!((opt.exec[1].mean - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn stats_match_direct_formulas() {
        let v = [1.0, 2.0, 4.0, 7.0];
        let s = Stats::from_values(v);
        let mean = 3.5;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0;
        assert!((s.mean - mean).abs() < 1e-15);
        assert!((s.std_error - (var / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max, s.trials), (1.0, 7.0, 4));
    }

    #[test]
    fn generator_draws_stay_in_bounds() {
        for groups in 2..=8 {
            let g = GeneratorConfig {
                groups,
                total_workers: 240,
                size_spread: 0.3,
                rate_range: [1.0, 2.0],
                sort_rule: SortRule::Imbalanced,
            };
            let share = 240.0 / groups as f64;
            for i in 0..200 {
                let sys = g.draw(1, i).unwrap();
                assert_eq!(sys.total_workers(), 240);
                for (j, &n_i) in sys.group_sizes().iter().enumerate() {
                    assert!(n_i as f64 >= 0.7 * share - 1e-9 && n_i as f64 <= 1.3 * share + 1e-9);
                    if j > 0 {
                        assert!(sys.group_sizes()[j - 1] <= n_i);
                        assert!(sys.rates()[j - 1] >= sys.rates()[j]);
                    }
                }
                assert!(sys.rates().iter().all(|&r| (1.0..2.0).contains(&r)));
            }
        }
    }

    #[test]
    fn balanced_sort_pairs_large_with_fast() {
        let mut sizes = vec![50, 70, 60];
        let mut rates = vec![1.9, 1.2, 1.5];
        SortRule::Balanced.apply(&mut sizes, &mut rates);
        assert_eq!(sizes, [50, 60, 70]);
        assert_eq!(rates, [1.2, 1.5, 1.9]);
    }
}
