//! Accuracy scores and aggregation of trajectories into the plotted series.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::Condition;
use crate::engine::Trajectory;
use crate::prob::Probability;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("cannot summarize an empty population")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[inline]
fn indicator(truth: bool) -> f64 {
    if truth {
        1.0
    } else {
        0.0
    }
}

/// Squared error of a belief against the 0/1 truth.
pub fn brier(belief: Probability, truth: bool) -> f64 {
    let d = belief.value() - indicator(truth);
    d * d
}

pub fn absolute_error(belief: Probability, truth: bool) -> f64 {
    (belief.value() - indicator(truth)).abs()
}

/// Population summary of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub mean_belief: f64,
    /// Population variance (divides by N).
    pub belief_variance: f64,
    pub mean_world_trust: f64,
}

pub fn step_stats(step: usize, beliefs: &[f64], world_trusts: &[f64]) -> Result<StepStats, MetricsError> {
    if beliefs.is_empty() {
        return Err(MetricsError::Empty);
    }
    if beliefs.len() != world_trusts.len() {
        return Err(MetricsError::Shape(format!(
            "{} beliefs but {} trust values",
            beliefs.len(),
            world_trusts.len()
        )));
    }
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &b) in beliefs.iter().enumerate() {
        let delta = b - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (b - mean);
    }
    let n = beliefs.len() as f64;
    Ok(StepStats {
        step,
        mean_belief: mean.clamp(0.0, 1.0),
        belief_variance: (m2 / n).max(0.0),
        mean_world_trust: world_trusts.iter().sum::<f64>() / n,
    })
}

/// Per-step statistics of a whole trajectory, steps numbered from 1.
pub fn trajectory_stats(t: &Trajectory) -> Vec<StepStats> {
    (1..=t.steps())
        .map(|s| {
            let rec = t.at_step(s);
            let beliefs: Vec<f64> = rec.iter().map(|r| r.belief).collect();
            let trusts: Vec<f64> = rec.iter().map(|r| r.world_trust).collect();
            step_stats(s, &beliefs, &trusts).expect("non-empty population")
        })
        .collect()
}

/// Cross-run series for one condition.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateSeries {
    pub condition: Condition,
    /// `(run, per-step stats)` in run order.
    pub runs: Vec<(usize, Vec<StepStats>)>,
    /// Mean over runs of each run's mean belief, per step.
    pub grand_mean: Vec<f64>,
    /// Population variance over runs of the run mean belief, per step.
    pub between_run_variance: Vec<f64>,
}

impl AggregateSeries {
    pub fn grand_mean_at(&self, step: usize) -> f64 {
        self.grand_mean[step - 1]
    }
}

/// Streaming fold over trajectories. Partial aggregators over disjoint runs
/// can be merged in any order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Aggregator {
    shape: Option<(usize, usize)>,
    series: BTreeMap<Condition, BTreeMap<usize, Vec<StepStats>>>,
}

impl Aggregator {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_shape(&mut self, shape: (usize, usize)) -> Result<(), MetricsError> {
        match self.shape {
            None => {
                self.shape = Some(shape);
                Ok(())
            }
            Some(s) if s == shape => Ok(()),
            Some((steps, n)) => Err(MetricsError::Shape(format!(
                "expected {steps} steps x {n} agents, got {} x {}",
                shape.0, shape.1
            ))),
        }
    }

    pub fn push(&mut self, t: &Trajectory) -> Result<(), MetricsError> {
        self.check_shape((t.steps(), t.n_agents))?;
        let runs = self.series.entry(t.condition).or_default();
        if runs.contains_key(&t.run) {
            return Err(MetricsError::Shape(format!(
                "run {} of {} pushed twice",
                t.run, t.condition
            )));
        }
        runs.insert(t.run, trajectory_stats(t));
        Ok(())
    }

    pub fn merge(mut self, other: Aggregator) -> Result<Aggregator, MetricsError> {
        if let Some(shape) = other.shape {
            self.check_shape(shape)?;
        }
        for (condition, runs) in other.series {
            let mine = self.series.entry(condition).or_default();
            for (run, stats) in runs {
                if mine.insert(run, stats).is_some() {
                    return Err(MetricsError::Shape(format!("run {run} of {condition} present in both")));
                }
            }
        }
        Ok(self)
    }

    pub fn finish(self) -> BTreeMap<Condition, AggregateSeries> {
        let steps = self.shape.map_or(0, |s| s.0);
        self.series
            .into_iter()
            .map(|(condition, runs)| {
                let n = runs.len() as f64;
                let mut grand_mean = vec![0.0; steps];
                for stats in runs.values() {
                    for (g, s) in grand_mean.iter_mut().zip(stats) {
                        *g += s.mean_belief;
                    }
                }
                grand_mean.iter_mut().for_each(|g| *g /= n);
                let mut between_run_variance = vec![0.0; steps];
                for stats in runs.values() {
                    for ((v, s), g) in between_run_variance.iter_mut().zip(stats).zip(&grand_mean) {
                        *v += (s.mean_belief - g).powi(2);
                    }
                }
                between_run_variance.iter_mut().for_each(|v| *v /= n);
                let series = AggregateSeries {
                    condition,
                    runs: runs.into_iter().collect(),
                    grand_mean,
                    between_run_variance,
                };
                (condition, series)
            })
            .collect()
    }
}

pub fn aggregate<'a, I>(trajectories: I) -> Result<BTreeMap<Condition, AggregateSeries>, MetricsError>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    let mut agg = Aggregator::new();
    for t in trajectories {
        agg.push(t)?;
    }
    Ok(agg.finish())
}

/// Mean final-step scores of one condition over many runs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AccuracyTally {
    pub brier_sum: f64,
    pub abs_sum: f64,
    pub count: u64,
}

impl AccuracyTally {
    /// Adds every agent's final belief of `t`. A zero-step trajectory
    /// contributes nothing.
    pub fn push(&mut self, t: &Trajectory) {
        let steps = t.steps();
        if steps == 0 {
            return;
        }
        for r in t.at_step(steps) {
            let b = Probability::saturating(r.belief);
            self.brier_sum += brier(b, t.truth);
            self.abs_sum += absolute_error(b, t.truth);
            self.count += 1;
        }
    }

    pub fn mean_brier(&self) -> f64 {
        self.brier_sum / self.count as f64
    }

    pub fn mean_absolute_error(&self) -> f64 {
        self.abs_sum / self.count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{AgentStep, Diagnostics};
    use proptest::prelude::*;

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(p(1.0), true), 0.0);
        assert_eq!(brier(p(0.5), true), 0.25);
        assert_eq!(brier(p(0.5), false), 0.25);
        assert!((brier(p(0.66), true) - 0.1156).abs() < 1e-15);
    }

    #[test]
    fn absolute_error_examples() {
        assert_eq!(absolute_error(p(1.0), true), 0.0);
        assert!((absolute_error(p(0.66), true) - 0.34).abs() < 1e-15);
        assert_eq!(absolute_error(p(0.0), true), 1.0);
    }

    #[test]
    fn step_stats_examples() {
        let s = step_stats(1, &[0.3; 5], &[0.66; 5]).unwrap();
        assert!((s.mean_belief - 0.3).abs() < 1e-15);
        assert!(s.belief_variance.abs() < 1e-15);
        let s = step_stats(1, &[0.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!((s.mean_belief, s.belief_variance), (0.5, 0.25));
        let s = step_stats(1, &[0.2, 0.4, 0.9], &[0.5; 3]).unwrap();
        assert!((s.mean_belief - 0.5).abs() < 1e-15);
        assert!((s.belief_variance - 0.26 / 3.0).abs() < 1e-15);
        assert_eq!(step_stats(1, &[], &[]), Err(MetricsError::Empty));
        assert!(step_stats(1, &[0.1], &[]).is_err());
    }

    fn constant_trajectory(run: usize, value: f64, steps: usize, n: usize) -> Trajectory {
        Trajectory {
            run,
            condition: Condition::ShadowFixed,
            truth: true,
            n_agents: n,
            records: vec![
                AgentStep {
                    belief: value,
                    world_trust: 0.66
                };
                steps * n
            ],
            diagnostics: Diagnostics {
                graph_components: n,
                degenerate_updates: 0,
            },
        }
    }

    #[test]
    fn aggregate_examples() {
        let one = aggregate([&constant_trajectory(0, 0.7, 3, 4)]).unwrap();
        let s = &one[&Condition::ShadowFixed];
        assert_eq!(
            s.grand_mean,
            s.runs[0].1.iter().map(|x| x.mean_belief).collect::<Vec<_>>()
        );
        let a = constant_trajectory(0, 0.2, 3, 4);
        let b = constant_trajectory(1, 0.6, 3, 4);
        let two = aggregate([&a, &b]).unwrap();
        let s = &two[&Condition::ShadowFixed];
        assert!(s.grand_mean.iter().all(|g| (g - 0.4).abs() < 1e-15));
        assert!(s.between_run_variance.iter().all(|v| (v - 0.04).abs() < 1e-15));
        let bad = constant_trajectory(2, 0.6, 4, 4);
        assert!(aggregate([&a, &bad]).is_err());
    }

    #[test]
    fn accuracy_tally() {
        let mut t = AccuracyTally::default();
        t.push(&constant_trajectory(0, 0.5, 2, 3));
        t.push(&constant_trajectory(1, 1.0, 2, 3));
        assert_eq!(t.count, 6);
        assert!((t.mean_brier() - 0.125).abs() < 1e-15);
        assert!((t.mean_absolute_error() - 0.25).abs() < 1e-15);
    }

    fn two_pass(beliefs: &[f64]) -> (f64, f64) {
        let n = beliefs.len() as f64;
        let mean = beliefs.iter().sum::<f64>() / n;
        let var = beliefs.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    proptest! {
        #[test]
        fn brier_is_squared_absolute_error(b in 0.0..=1.0f64, truth in any::<bool>()) {
            let a = absolute_error(p(b), truth);
            prop_assert!((brier(p(b), truth) - a * a).abs() < 1e-15);
        }

        #[test]
        fn step_stats_match_two_pass(beliefs in prop::collection::vec(0.0..=1.0f64, 1..200)) {
            let trusts = vec![0.5; beliefs.len()];
            let s = step_stats(1, &beliefs, &trusts).unwrap();
            let (mean, var) = two_pass(&beliefs);
            prop_assert!((s.mean_belief - mean).abs() < 1e-12);
            prop_assert!((s.belief_variance - var).abs() < 1e-12);
        }

        #[test]
        fn merge_equals_single_pass(values in prop::collection::vec(0.0..=1.0f64, 1..12), split in 0usize..12) {
            let ts: Vec<Trajectory> = values.iter().enumerate().map(|(r, v)| constant_trajectory(r, *v, 3, 2)).collect();
            let split = split.min(ts.len());
            let mut left = Aggregator::new();
            ts[..split].iter().for_each(|t| left.push(t).unwrap());
            let mut right = Aggregator::new();
            ts[split..].iter().for_each(|t| right.push(t).unwrap());
            let merged = right.merge(left).unwrap().finish();
            prop_assert_eq!(merged, aggregate(&ts).unwrap());
        }
    }
}
