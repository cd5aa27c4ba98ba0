//! Paired Monte Carlo runs: every filter in a run consumes the same
//! simulated trajectory.

use binklf_core::{simulate, Trajectory};
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::filters::{check_supported, run_filter, FilterKind, FilterRun};
use crate::scenarios::Scenario;

/// Environment variable capping the number of Monte Carlo worker threads.
pub const THREADS_ENV: &str = "BINKLF_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    pub runs: usize,
    pub steps: usize,
    pub base_seed: u64,
    /// Worker threads; `None` reads [`THREADS_ENV`] and falls back to rayon's default.
    pub threads: Option<usize>,
    /// Largest tolerated fraction of failed runs.
    pub max_failure_fraction: f64,
}

impl McOptions {
    pub fn new(runs: usize, steps: usize, base_seed: u64) -> Self {
        McOptions {
            runs,
            steps,
            base_seed,
            threads: None,
            max_failure_fraction: 0.01,
        }
    }

    pub fn seed_of(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }
}

pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub run: usize,
    pub seed: u64,
    pub filter: Option<FilterKind>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSummary {
    pub kind: FilterKind,
    /// `√(mean over runs of ‖x_k − x̂_k‖²)`, index `k − 1`.
    pub rmse: Vec<f64>,
    pub mean_sensors_used: Vec<f64>,
    pub mean_step_seconds: f64,
    /// Largest `Tr(Φ̂_k)` seen over all runs and steps.
    pub max_trace: f64,
}

impl FilterSummary {
    /// Mean of `rmse` over steps `from..=to` (1-based, clipped to the horizon).
    pub fn mean_rmse(&self, from: usize, to: usize) -> f64 {
        window_mean(&self.rmse, from, to)
    }

    pub fn overall_mean_sensors_used(&self) -> f64 {
        window_mean(&self.mean_sensors_used, 1, self.mean_sensors_used.len())
    }
}

pub fn window_mean(values: &[f64], from: usize, to: usize) -> f64 {
    let lo = from.max(1) - 1;
    let hi = to.min(values.len());
    if lo >= hi {
        return f64::NAN;
    }
    values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub scenario: String,
    pub runs: usize,
    pub steps: usize,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    /// Trajectory checksum of every successful run, in run order.
    pub checksums: Vec<Option<u64>>,
    pub failures: Vec<RunFailure>,
    pub filters: Vec<FilterSummary>,
}

impl McReport {
    pub fn filter(&self, kind: FilterKind) -> Option<&FilterSummary> {
        self.filters.iter().find(|f| f.kind == kind)
    }

    pub fn successful_runs(&self) -> usize {
        self.runs - self.failures.len()
    }
}

struct RunOutcome {
    checksum: u64,
    runs: Vec<FilterRun>,
    squared_errors: Vec<Vec<f64>>,
}

fn one_run(
    scenario: &Scenario,
    filters: &[FilterKind],
    inputs: &[nalgebra::DVector<f64>],
    run: usize,
    opts: &McOptions,
) -> std::result::Result<RunOutcome, RunFailure> {
    let seed = opts.seed_of(run);
    let fail = |filter: Option<FilterKind>, e: HarnessError| RunFailure {
        run,
        seed,
        filter,
        message: e.to_string(),
    };
    let traj: Trajectory = simulate(
        scenario.model.as_system(),
        inputs,
        &scenario.x0_true,
        seed,
        opts.steps,
    )
    .map_err(|e| fail(None, e.into()))?;
    let checksum = traj.checksum();
    let mut runs = Vec::with_capacity(filters.len());
    let mut squared_errors = Vec::with_capacity(filters.len());
    for &kind in filters {
        let r = run_filter(scenario, kind, &traj).map_err(|e| fail(Some(kind), e))?;
        if traj.checksum() != checksum {
            return Err(fail(
                Some(kind),
                HarnessError::TrajectoryMutated {
                    run,
                    filter: kind.name(),
                },
            ));
        }
        squared_errors.push(r.squared_errors(&traj));
        runs.push(r);
    }
    Ok(RunOutcome {
        checksum,
        runs,
        squared_errors,
    })
}

/// Runs every filter on `opts.runs` seeded trajectories and aggregates per
/// step. Results do not depend on the number of threads: per-run outputs are
/// stored by run index and reduced in that order.
pub fn run_monte_carlo(
    scenario: &Scenario,
    filters: &[FilterKind],
    opts: &McOptions,
) -> Result<McReport> {
    if opts.runs == 0 || opts.steps == 0 {
        return Err(HarnessError::Config(
            "runs and steps must be at least 1".into(),
        ));
    }
    let mut kinds: Vec<FilterKind> = Vec::new();
    for &k in filters {
        check_supported(scenario, k)?;
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    if kinds.is_empty() {
        return Err(HarnessError::Config("no filters selected".into()));
    }
    let inputs = scenario.inputs(opts.steps);

    let work = || {
        (0..opts.runs)
            .into_par_iter()
            .map(|run| one_run(scenario, &kinds, &inputs, run, opts))
            .collect::<Vec<_>>()
    };
    let threads = opts.threads.or_else(threads_from_env);
    let outcomes = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let failures: Vec<RunFailure> = outcomes
        .iter()
        .filter_map(|o| o.as_ref().err().cloned())
        .collect();
    if failures.len() as f64 > opts.max_failure_fraction * opts.runs as f64 {
        return Err(HarnessError::TooManyFailures {
            count: failures.len(),
            runs: opts.runs,
            first: failures[0].message.clone(),
        });
    }
    let good: Vec<&RunOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let count = good.len() as f64;

    let summaries = kinds
        .iter()
        .enumerate()
        .map(|(f, &kind)| {
            let mut sq = vec![0.0; opts.steps];
            let mut used = vec![0.0; opts.steps];
            let mut seconds = 0.0;
            let mut max_trace: f64 = 0.0;
            for outcome in &good {
                let run = &outcome.runs[f];
                for (k, e) in outcome.squared_errors[f].iter().enumerate() {
                    sq[k] += e;
                    used[k] += run.sensors_used[k] as f64;
                }
                seconds += run.step_seconds.iter().sum::<f64>();
                for est in &run.estimates {
                    max_trace = max_trace.max(est.phi_hat.trace());
                }
            }
            FilterSummary {
                kind,
                rmse: sq.iter().map(|s| (s / count).sqrt()).collect(),
                mean_sensors_used: used.iter().map(|u| u / count).collect(),
                mean_step_seconds: seconds / (count * opts.steps as f64),
                max_trace,
            }
        })
        .collect();

    Ok(McReport {
        scenario: scenario.name.clone(),
        runs: opts.runs,
        steps: opts.steps,
        base_seed: opts.base_seed,
        seeds: (0..opts.runs).map(|r| opts.seed_of(r)).collect(),
        checksums: outcomes
            .iter()
            .map(|o| o.as_ref().ok().map(|r| r.checksum))
            .collect(),
        failures,
        filters: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{build, ScenarioOptions};

    #[test]
    fn window_mean_is_one_based_and_clipped() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(window_mean(&v, 1, 4), 2.5);
        assert_eq!(window_mean(&v, 2, 3), 2.5);
        assert_eq!(window_mean(&v, 3, 100), 3.5);
        assert!(window_mean(&v, 5, 6).is_nan());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let s = build("o2", &ScenarioOptions::default()).unwrap();
        let filters = [FilterKind::Lbklf, FilterKind::OpenLoop];
        let mut one = McOptions::new(6, 40, 11);
        one.threads = Some(1);
        let mut four = one.clone();
        four.threads = Some(4);
        let a = run_monte_carlo(&s, &filters, &one).unwrap();
        let b = run_monte_carlo(&s, &filters, &four).unwrap();
        for (x, y) in a.filters.iter().zip(&b.filters) {
            assert_eq!(x.rmse, y.rmse);
            assert_eq!(x.mean_sensors_used, y.mean_sensors_used);
        }
        assert_eq!(a.checksums, b.checksums);
    }

    #[test]
    fn seeds_follow_the_run_index() {
        let s = build("o2", &ScenarioOptions::default()).unwrap();
        let r = run_monte_carlo(&s, &[FilterKind::OpenLoop], &McOptions::new(3, 5, 100)).unwrap();
        assert_eq!(r.seeds, vec![100, 101, 102]);
        assert_eq!(r.successful_runs(), 3);
        assert!(r.checksums.iter().all(Option::is_some));
    }

    #[test]
    fn single_run_clairvoyant_beats_open_loop_on_most_steps() {
        let s = build("o2", &ScenarioOptions::default()).unwrap();
        let r = run_monte_carlo(
            &s,
            &[FilterKind::OpenLoop, FilterKind::Clairvoyant],
            &McOptions::new(1, 200, 0),
        )
        .unwrap();
        let ol = &r.filter(FilterKind::OpenLoop).unwrap().rmse;
        let kf = &r.filter(FilterKind::Clairvoyant).unwrap().rmse;
        let wins = ol.iter().zip(kf).filter(|(o, k)| k <= o).count();
        assert!(
            wins as f64 >= 0.95 * 200.0,
            "clairvoyant won {wins} of 200 steps"
        );
    }

    #[test]
    fn duplicate_filters_are_collapsed_and_empty_lists_rejected() {
        let s = build("o2", &ScenarioOptions::default()).unwrap();
        let r = run_monte_carlo(
            &s,
            &[FilterKind::OpenLoop, FilterKind::OpenLoop],
            &McOptions::new(1, 3, 0),
        )
        .unwrap();
        assert_eq!(r.filters.len(), 1);
        assert!(run_monte_carlo(&s, &[], &McOptions::new(1, 3, 0)).is_err());
        assert!(run_monte_carlo(&s, &[FilterKind::OpenLoop], &McOptions::new(0, 3, 0)).is_err());
    }

    #[test]
    fn failing_runs_fail_the_report() {
        // A negative initial covariance makes every run fail at step 1.
        let mut s = build("nonlinear", &ScenarioOptions::default()).unwrap();
        s.phi0 = -s.phi0.clone();
        let err = run_monte_carlo(&s, &[FilterKind::Nbklf], &McOptions::new(3, 5, 0)).unwrap_err();
        assert!(
            matches!(
                err,
                HarnessError::TooManyFailures {
                    count: 3,
                    runs: 3,
                    ..
                }
            ),
            "{err}"
        );
        assert_eq!(err.exit_code(), 3);
    }
}
