//! The four CLI commands as library calls. Each validates the configuration, runs
//! inside a pool of `threads` workers when one is requested, writes its files to
//! `output_dir` together with the effective configuration, and returns what it wrote.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::decomposition::{var_drh, var_increment, var_wh, PathSimulator};
use crate::driver::{replica_seed, replica_seeds, BrownianDriver};
use crate::error::{Error, Result};
use crate::fracops::{GammaOperator, StrategyVector};
use crate::optimizer::{drift_rhs, OptimalSolver, SolverKind};
use crate::output::{num, with_provenance, write_json, write_text, Provenance};
use crate::stats::BATCH;
use crate::verify::{run_suite, CheckReport};

/// Replicas simulated per streaming chunk in [`cmd_simulate`].
const SIMULATE_CHUNK: usize = 16 * BATCH;

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
    }
}

fn prepare(cfg: &RunConfig) -> Result<(RunConfig, Provenance, PathBuf)> {
    let eff = cfg.effective()?;
    let prov = Provenance::new(&eff)?;
    let config_path = write_text(&cfg.output_dir, "config.json", &(eff.to_json() + "\n"))?;
    Ok((eff, prov, config_path))
}

/// Running mean and unbiased variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n < 2.0 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1.0)
        }
    }
}

/// Writes `paths.csv` (`replica,time,w,r,dr,increment`, one row per replica and future
/// node) and `summary.csv` (per-node sample moments beside their closed forms).
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (eff, prov, config_path) = prepare(cfg)?;
    with_threads(cfg.threads, || {
        let params = eff.hurst()?;
        let grid = eff.grid()?;
        let sim = PathSimulator::new(&grid, &params)?;
        let n = grid.n_future();
        let times = &grid.future_nodes()[1..];

        let mut paths = prov.csv_comment();
        paths.push_str("replica,time,w,r,dr,increment\n");
        let mut acc = vec![[Welford::default(); 4]; n];

        let mut start = 0;
        while start < eff.replicas {
            let len = SIMULATE_CHUNK.min(eff.replicas - start);
            let batches: Vec<_> = (0..len.div_ceil(BATCH))
                .into_par_iter()
                .map(|b| {
                    let lo = start + b * BATCH;
                    let seeds = replica_seeds(eff.seed, lo, BATCH.min(start + len - lo));
                    (lo, sim.simulate_batch(&seeds))
                })
                .collect();
            for (lo, (w, r, dr)) in batches {
                for j in 0..w.ncols() {
                    for i in 0..n {
                        let vals = [w[(i, j)], r[(i, j)], dr[(i, j)], w[(i, j)] + r[(i, j)]];
                        let _ = writeln!(
                            paths,
                            "{},{},{},{},{},{}",
                            lo + j,
                            num(times[i]),
                            num(vals[0]),
                            num(vals[1]),
                            num(vals[2]),
                            num(vals[3])
                        );
                        for (a, v) in acc[i].iter_mut().zip(vals) {
                            a.push(v);
                        }
                    }
                }
            }
            start += len;
        }

        let mut summary = prov.csv_comment();
        summary.push_str(
            "time,mean_w,var_w,theory_var_w,mean_r,var_r,theory_var_r,mean_dr,var_dr,theory_var_dr,\
             mean_increment,var_increment,theory_var_increment\n",
        );
        let s = grid.s();
        for (i, &t) in times.iter().enumerate() {
            let vw = var_wh(t, s, &params)?;
            let vinc = var_increment(t, s, &params)?;
            let theory = [vw, vinc - vw, var_drh(t, s, &params)?, vinc];
            let mut row = num(t);
            for (a, th) in acc[i].iter().zip(theory) {
                let _ = write!(row, ",{},{},{}", num(a.mean), num(a.variance()), num(th));
            }
            summary.push_str(&row);
            summary.push('\n');
        }
        Ok(vec![
            config_path,
            write_text(&cfg.output_dir, "paths.csv", &paths)?,
            write_text(&cfg.output_dir, "summary.csv", &summary)?,
        ])
    })
}

#[derive(Serialize)]
struct OperatorSummary {
    dim: usize,
    cell_width: f64,
    sigma: f64,
    hurst: f64,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
    symmetry_defect: f64,
    bound_constant: f64,
    ones_quadratic_form: f64,
}

/// Writes `operator.csv`, the Gram matrix `M` with `(γ, Γγ) = γᵀ M γ` on the future
/// cells, and `operator.json` with its spectral summary.
pub fn cmd_operator(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (eff, prov, config_path) = prepare(cfg)?;
    with_threads(cfg.threads, || {
        let grid = eff.grid()?;
        let op = GammaOperator::build(&grid, &eff.hurst()?, eff.sigma)?;
        let mut csv = prov.csv_comment().into_bytes();
        op.write_csv(&mut csv)?;
        let (lo, hi) = op.eigen_range();
        let summary = OperatorSummary {
            dim: op.dim(),
            cell_width: grid.delta_future(),
            sigma: op.sigma(),
            hurst: eff.h,
            min_eigenvalue: lo,
            max_eigenvalue: hi,
            symmetry_defect: op.symmetry_defect(),
            bound_constant: op.bound_constant(),
            ones_quadratic_form: op.quadratic_form(&StrategyVector::constant(&grid, 1.0)?)?,
        };
        Ok(vec![
            config_path,
            write_text(&cfg.output_dir, "operator.csv", &String::from_utf8(csv).expect("ascii"))?,
            write_json(&cfg.output_dir, "operator.json", &with_provenance(&prov, "operator", &summary)?)?,
        ])
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyRecord {
    pub replica: usize,
    pub past_seed: u64,
    pub gamma_hat: Vec<f64>,
    pub objective: f64,
    /// Relative residual of the normal equations.
    pub residual: f64,
    pub e0_xt: f64,
    pub var0_xt: f64,
    pub penalty: f64,
}

/// One optimal strategy per past realization: `strategies.csv`
/// (`replica,time,gamma`, time = left cell edge) and `results.json`.
pub fn cmd_optimize(cfg: &RunConfig) -> Result<(Vec<StrategyRecord>, Vec<PathBuf>)> {
    let (eff, prov, config_path) = prepare(cfg)?;
    with_threads(cfg.threads, || {
        let params = eff.hurst()?;
        let market = eff.market()?;
        let grid = eff.grid()?;
        let op = GammaOperator::build(&grid, &params, market.sigma)?;
        let solver = OptimalSolver::new(&op, &market, SolverKind::Auto)?;
        let sim = PathSimulator::new(&grid, &params)?;
        let records: Vec<StrategyRecord> = (0..eff.replicas)
            .into_par_iter()
            .map(|i| {
                let past_seed = replica_seed(eff.seed, i as u64);
                let path = sim.simulate(&BrownianDriver::sample(&grid, past_seed))?;
                let res = solver.solve(&drift_rhs(&path, &market))?;
                Ok(StrategyRecord {
                    replica: i,
                    past_seed,
                    objective: res.objective_value,
                    residual: res.relative_residual(),
                    e0_xt: res.conditional_mean,
                    var0_xt: res.conditional_variance,
                    penalty: res.penalty,
                    gamma_hat: res.gamma_hat.into_values(),
                })
            })
            .collect::<Result<_>>()?;

        let mut csv = prov.csv_comment();
        csv.push_str("replica,time,gamma\n");
        let left = &grid.future_nodes()[..grid.n_future()];
        for rec in &records {
            for (t, g) in left.iter().zip(&rec.gamma_hat) {
                let _ = writeln!(csv, "{},{},{}", rec.replica, num(*t), num(*g));
            }
        }
        let files = vec![
            config_path,
            write_text(&cfg.output_dir, "strategies.csv", &csv)?,
            write_json(&cfg.output_dir, "results.json", &with_provenance(&prov, "results", &records)?)?,
        ];
        Ok((records, files))
    })
}

#[derive(Serialize)]
struct ReportEntry<'a> {
    #[serde(flatten)]
    report: &'a CheckReport,
    config_hash: &'a str,
}

/// Runs the verification suite and writes `report.json`, a JSON array of reports.
pub fn cmd_verify(cfg: &RunConfig) -> Result<(Vec<CheckReport>, Vec<PathBuf>)> {
    let (eff, prov, config_path) = prepare(cfg)?;
    with_threads(cfg.threads, || {
        let reports = run_suite(&eff)?;
        let entries: Vec<ReportEntry> = reports
            .iter()
            .map(|report| ReportEntry {
                report,
                config_hash: &prov.config_hash,
            })
            .collect();
        let path = write_json(&cfg.output_dir, "report.json", &entries)?;
        Ok((reports, vec![config_path, path]))
    })
}
