//! Parameter sweeps behind the three simulation figures, returning rows
//! ready to be written as CSV.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::allocator::optimal_allocation;
use crate::error::{Error, Result};
use crate::model::GroupSystem;
use crate::montecarlo::{
    rho_dec, run_experiment, AllocationRule, CodeConfig, ExperimentConfig, ExperimentSummary,
    GeneratorConfig, NamedAllocation, SortRule, SystemConfig, SCHEMA_VERSION,
};

/// A row that can be written as one CSV line.
pub trait CsvRow {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Writes a header line followed by one line per row.
pub fn write_csv<R: CsvRow>(rows: &[R], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{}", R::HEADER.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.fields().join(","))?;
    }
    Ok(())
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    Ok(())
}

/// Two groups `[3n/4, n/4]` with rates `[1, 2]`; MDS against the group code
/// at the optimal and at the even allocation, swept over `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Recipe {
    pub n_grid: Vec<usize>,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for Fig3Recipe {
    fn default() -> Self {
        Self {
            n_grid: vec![200, 400, 600, 800, 1000, 1500, 2000, 2500, 3000, 3500, 4000],
            k: 100,
            trials: 10_000,
            seed: 1,
        }
    }
}

impl Fig3Recipe {
    pub fn config(&self, n: usize) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            system: Some(SystemConfig {
                sizes: vec![3 * n / 4, n / 4],
                rates: vec![1.0, 2.0],
            }),
            generator: None,
            k: self.k,
            codes: vec![
                CodeConfig::Mds,
                CodeConfig::Group {
                    allocation: AllocationRule::Named(NamedAllocation::Optimal),
                },
                CodeConfig::Group {
                    allocation: AllocationRule::Named(NamedAllocation::Even),
                },
            ],
            beta: 2.0,
            alpha_grid: Vec::new(),
            trials: self.trials,
            master_seed: self.seed,
        }
    }

    pub fn run(&self) -> Result<Vec<Fig3Row>> {
        check_trials(self.trials)?;
        if let Some(&n) = self.n_grid.iter().find(|&&n| n % 4 != 0 || n < 4) {
            return Err(Error::InvalidConfig(format!(
                "fig3 n must be a positive multiple of 4, got {n}"
            )));
        }
        self.n_grid
            .iter()
            .map(|&n| Ok(Fig3Row::from_summary(n, &run_experiment(&self.config(n))?)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Row {
    pub n: usize,
    pub mean_mds: f64,
    pub mean_group_opt: f64,
    pub mean_group_even: f64,
    pub se_mds: f64,
    pub se_group_opt: f64,
    pub se_group_even: f64,
}

impl Fig3Row {
    fn from_summary(n: usize, s: &ExperimentSummary) -> Self {
        let (m, o, e) = (&s.codes[0].t_comp, &s.codes[1].t_comp, &s.codes[2].t_comp);
        Self {
            n,
            mean_mds: m.mean,
            mean_group_opt: o.mean,
            mean_group_even: e.mean,
            se_mds: m.std_error,
            se_group_opt: o.std_error,
            se_group_even: e.std_error,
        }
    }
}

impl CsvRow for Fig3Row {
    const HEADER: &'static [&'static str] = &[
        "n",
        "mean_mds",
        "mean_group_opt",
        "mean_group_even",
        "se_mds",
        "se_group_opt",
        "se_group_even",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.mean_mds.to_string(),
            self.mean_group_opt.to_string(),
            self.mean_group_even.to_string(),
            self.se_mds.to_string(),
            self.se_group_opt.to_string(),
            self.se_group_even.to_string(),
        ]
    }
}

/// Mean `rho_dec` of the optimal allocation over random systems, for the
/// imbalanced and balanced pairings of sizes and rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig4Recipe {
    pub l_grid: Vec<usize>,
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for Fig4Recipe {
    fn default() -> Self {
        Self {
            l_grid: (2..=8).collect(),
            n: 240,
            k: 120,
            beta: 2.0,
            draws: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig4Row {
    pub l: usize,
    pub scenario1: f64,
    pub scenario2: f64,
    /// `(1/L)^beta`, reached when every group gets `k/L` tasks.
    pub floor: f64,
    /// Scenario 2 at the first grid point, decaying as `(L0/L)^beta`.
    pub trend: f64,
}

impl CsvRow for Fig4Row {
    const HEADER: &'static [&'static str] = &["L", "scenario1", "scenario2", "floor", "trend"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.l.to_string(),
            self.scenario1.to_string(),
            self.scenario2.to_string(),
            self.floor.to_string(),
            self.trend.to_string(),
        ]
    }
}

impl Fig4Recipe {
    pub fn generator(&self, l: usize) -> GeneratorConfig {
        GeneratorConfig {
            groups: l,
            total_workers: self.n,
            size_spread: 0.3,
            rate_range: [1.0, 2.0],
            sort_rule: SortRule::None,
        }
    }

    /// Mean `rho_dec` for both scenarios at one `L`. Both scenarios see the
    /// same draws and differ only in how sizes and rates are paired.
    pub fn point(&self, l: usize) -> Result<(f64, f64)> {
        let generator = self.generator(l);
        generator.validate()?;
        let per_draw = (0..self.draws as u64)
            .into_par_iter()
            .map(|d| {
                let (sizes, rates) = generator.draw_unsorted(self.seed, ((l as u64) << 32) | d)?;
                let mut out = [0.0; 2];
                for (slot, rule) in out
                    .iter_mut()
                    .zip([SortRule::Imbalanced, SortRule::Balanced])
                {
                    let (mut s, mut r) = (sizes.clone(), rates.clone());
                    rule.apply(&mut s, &mut r);
                    let alloc = optimal_allocation(&GroupSystem::new(s, r)?, self.k)?;
                    *slot = rho_dec(&alloc, self.beta);
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = |i: usize| per_draw.iter().map(|p| p[i]).sum::<f64>() / per_draw.len() as f64;
        Ok((mean(0), mean(1)))
    }

    pub fn run(&self) -> Result<Vec<Fig4Row>> {
        check_trials(self.draws)?;
        if !(self.beta > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta must exceed 1, got {}",
                self.beta
            )));
        }
        let Some(&l0) = self.l_grid.first() else {
            return Err(Error::InvalidConfig("fig4 needs at least one L".into()));
        };
        let mut rows = Vec::with_capacity(self.l_grid.len());
        let mut anchor = None;
        for &l in &self.l_grid {
            let (scenario1, scenario2) = self.point(l)?;
            let anchor = *anchor.get_or_insert(scenario2);
            rows.push(Fig4Row {
                l,
                scenario1,
                scenario2,
                floor: (1.0 / l as f64).powf(self.beta),
                trend: anchor * (l0 as f64 / l as f64).powf(self.beta),
            });
        }
        Ok(rows)
    }
}

/// Execution time against the decoding weight `alpha` on the six-group
/// system, for the MDS, product and group codes.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig5Recipe {
    pub alpha_low: Vec<f64>,
    pub alpha_high: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub beta: f64,
}

pub const SIX_GROUP_SIZES: [usize; 6] = [180, 170, 160, 140, 130, 120];
pub const SIX_GROUP_RATES: [f64; 6] = [1.25, 1.35, 1.45, 1.55, 1.65, 1.75];
pub const SIX_GROUP_K: usize = 400;

impl Default for Fig5Recipe {
    fn default() -> Self {
        Self {
            // Computing times are around 1e-3 and decoding units span 5e3 to
            // 1.6e5, so the MDS code loses its lead near alpha = 1e-9.
            alpha_low: (0..=20).map(|i| i as f64 / 5e9).collect(),
            alpha_high: (0..=20).map(|i| i as f64 / 2e8).collect(),
            trials: 10_000,
            seed: 1,
            beta: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig5Row {
    pub alpha: f64,
    pub exec_mds: f64,
    pub exec_product: f64,
    pub exec_group: f64,
}

impl CsvRow for Fig5Row {
    const HEADER: &'static [&'static str] = &["alpha", "exec_mds", "exec_product", "exec_group"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.alpha.to_string(),
            self.exec_mds.to_string(),
            self.exec_product.to_string(),
            self.exec_group.to_string(),
        ]
    }
}

impl Fig5Recipe {
    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            system: Some(SystemConfig {
                sizes: SIX_GROUP_SIZES.to_vec(),
                rates: SIX_GROUP_RATES.to_vec(),
            }),
            generator: None,
            k: SIX_GROUP_K,
            codes: vec![
                CodeConfig::Mds,
                CodeConfig::Product {
                    sqrt_n: Some(30),
                    sqrt_k: Some(20),
                },
                CodeConfig::Group {
                    allocation: AllocationRule::Named(NamedAllocation::Optimal),
                },
            ],
            beta: self.beta,
            alpha_grid: self
                .alpha_low
                .iter()
                .chain(&self.alpha_high)
                .copied()
                .collect(),
            trials: self.trials,
            master_seed: self.seed,
        }
    }

    /// Rows for the low-alpha and the large-alpha panel, from one paired run.
    pub fn run(&self) -> Result<(Vec<Fig5Row>, Vec<Fig5Row>)> {
        let summary = run_experiment(&self.config())?;
        let rows: Vec<Fig5Row> = (0..summary.config.alpha_grid.len())
            .map(|i| Fig5Row {
                alpha: summary.codes[0].exec[i].alpha,
                exec_mds: summary.codes[0].exec[i].mean,
                exec_product: summary.codes[1].exec[i].mean,
                exec_group: summary.codes[2].exec[i].mean,
            })
            .collect();
        let (low, high) = rows.split_at(self.alpha_low.len());
        Ok((low.to_vec(), high.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_headers_are_stable() {
        assert_eq!(
            Fig3Row::HEADER.join(","),
            "n,mean_mds,mean_group_opt,mean_group_even,se_mds,se_group_opt,se_group_even"
        );
        assert_eq!(
            Fig4Row::HEADER.join(","),
            "L,scenario1,scenario2,floor,trend"
        );
        assert_eq!(
            Fig5Row::HEADER.join(","),
            "alpha,exec_mds,exec_product,exec_group"
        );
    }

    #[test]
    fn csv_writer_emits_header_and_rows() {
        let rows = vec![Fig4Row {
            l: 2,
            scenario1: 0.3,
            scenario2: 0.26,
            floor: 0.25,
            trend: 0.26,
        }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "L,scenario1,scenario2,floor,trend\n2,0.3,0.26,0.25,0.26\n"
        );
    }

    #[test]
    fn fig3_small_run_orders_codes() {
        let recipe = Fig3Recipe {
            n_grid: vec![400],
            trials: 500,
            ..Default::default()
        };
        let row = &recipe.run().unwrap()[0];
        assert!(row.mean_mds <= row.mean_group_opt && row.mean_group_opt < row.mean_group_even);
        assert!(Fig3Recipe {
            n_grid: vec![402],
            ..recipe
        }
        .run()
        .is_err());
    }

    #[test]
    fn fig4_small_run_respects_floor() {
        let recipe = Fig4Recipe {
            l_grid: vec![2, 3, 4],
            draws: 200,
            ..Default::default()
        };
        let rows = recipe.run().unwrap();
        assert_eq!(rows[0].trend, rows[0].scenario2);
        for r in &rows {
            assert!(r.scenario1 >= r.floor && r.scenario2 >= r.floor);
        }
        assert!((rows[2].trend - rows[0].scenario2 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn fig4_is_deterministic() {
        let recipe = Fig4Recipe {
            l_grid: vec![3],
            draws: 100,
            ..Default::default()
        };
        assert_eq!(recipe.run().unwrap(), recipe.run().unwrap());
    }

    #[test]
    fn fig5_small_run_has_both_panels() {
        let recipe = Fig5Recipe {
            trials: 50,
            ..Default::default()
        };
        let (low, high) = recipe.run().unwrap();
        assert_eq!((low.len(), high.len()), (21, 21));
        assert!(low[0].exec_mds <= low[0].exec_group);
        assert!(high.last().unwrap().exec_mds > high.last().unwrap().exec_group);
    }
}
