//! Seeded scheduler for inquiry and communication over all requested
//! conditions of one run, plus the batch runner.
//!
//! A step is an inquiry phase followed by a communication phase:
//!
//! 1. Every agent independently receives a world datum with probability
//!    `inquiry_prob`. The datum's claim matches the truth with probability
//!    `p_obj`. Occurrence and value for `(run, agent, step)` come from a
//!    stream keyed by those indices alone (plus the evidence group under
//!    per-pair sharing), so every condition in the group sees the same data.
//! 2. Every communicating agent whose belief is outside the silence band
//!    tosses one coin with probability `comm_prob`. Winners broadcast their
//!    claim to all neighbours. Claims are fixed before anyone listens; each
//!    listener then processes its incoming reports in ascending sender order.
//!
//! Beliefs and world-trust expectations are recorded after every step.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::agent::{AgentState, Report, SourceId};
use crate::config::{Condition, ConfigError, EvidenceSharing, SimConfig, TruthMode};
use crate::model::{decide_assertion, Claim, ModelError};
use crate::prob::Probability;
use crate::seed::{Purpose, StreamKey};
use crate::topology::{watts_strogatz, Graph, TopologyError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {run}: {source}")]
    Topology {
        run: usize,
        #[source]
        source: TopologyError,
    },
    #[error("run {run}: {source}")]
    Model {
        run: usize,
        #[source]
        source: ModelError,
    },
    #[error("run {run}: output sink failed: {source}")]
    Sink {
        run: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

/// Agents of one condition within a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub condition: Condition,
    pub agents: Vec<AgentState>,
    pub degenerate_updates: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub run_index: usize,
    pub truth: bool,
    pub graph: Graph,
    pub populations: Vec<Population>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentStep {
    pub belief: f64,
    pub world_trust: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Diagnostics {
    /// Connected components of the run's graph (isolated runs count every
    /// agent as its own component).
    pub graph_components: usize,
    pub degenerate_updates: u64,
}

impl Diagnostics {
    pub fn connected(&self) -> bool {
        self.graph_components <= 1
    }
}

/// Belief and world-trust history of every agent of one condition in one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub run: usize,
    pub condition: Condition,
    pub truth: bool,
    pub n_agents: usize,
    /// Step-major: record `t * n_agents + i` is agent `i` after step `t + 1`.
    pub records: Vec<AgentStep>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.records.len().checked_div(self.n_agents).unwrap_or(0)
    }

    /// Records after step `step` (1-based).
    pub fn at_step(&self, step: usize) -> &[AgentStep] {
        assert!(
            step >= 1 && step <= self.steps(),
            "step {step} out of 1..={}",
            self.steps()
        );
        let start = (step - 1) * self.n_agents;
        &self.records[start..start + self.n_agents]
    }

    pub fn beliefs_at(&self, step: usize) -> impl Iterator<Item = f64> + '_ {
        self.at_step(step).iter().map(|r| r.belief)
    }

    pub fn agent_beliefs(&self, agent: usize) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().skip(agent).step_by(self.n_agents).map(|r| r.belief)
    }
}

/// All trajectories of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub run: usize,
    pub truth: bool,
    pub graph: Graph,
    pub trajectories: Vec<Trajectory>,
}

impl RunOutput {
    pub fn trajectory(&self, condition: Condition) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.condition == condition)
    }
}

/// Runs one configuration.
#[derive(Clone, Debug)]
pub struct Simulator<'a> {
    config: &'a SimConfig,
    negate_world_claims: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(config: &'a SimConfig) -> Result<Self, EngineError> {
        config.validate()?;
        Ok(Simulator {
            config,
            negate_world_claims: false,
        })
    }

    /// World data become the claim-wise negation of the data a run at
    /// reliability `1 - p_obj` would receive under the same seed. Such a
    /// stream still matches the truth with probability `p_obj`.
    pub fn with_negated_world_claims(mut self) -> Self {
        self.negate_world_claims = true;
        self
    }

    pub fn config(&self) -> &SimConfig {
        self.config
    }

    fn key(&self, run: usize, purpose: Purpose, group: u64, agent: usize, step: usize) -> StreamKey {
        StreamKey {
            master_seed: self.config.master_seed,
            run: run as u64,
            purpose,
            group,
            agent: agent as u64,
            step: step as u64,
        }
    }

    pub fn init_state(&self, run_index: usize) -> Result<SimState, EngineError> {
        let c = self.config;
        let run_key = |purpose| StreamKey::run_level(c.master_seed, run_index as u64, purpose);
        let graph = if c.has_network() {
            watts_strogatz(
                c.n_agents,
                c.topology.k,
                c.topology.p_rewire.value(),
                &mut run_key(Purpose::Topology).rng(),
            )
            .map_err(|source| EngineError::Topology { run: run_index, source })?
        } else {
            Graph::empty(c.n_agents)
        };
        let truth = match c.truth {
            TruthMode::FixedTrue => true,
            TruthMode::Sampled { base_rate } => run_key(Purpose::Truth).rng().random::<f64>() < base_rate.value(),
        };
        let belief = c.initial_belief();
        let populations = c
            .conditions
            .iter()
            .map(|&condition| {
                let prior = c.trust_model_for(condition);
                let agents = (0..c.n_agents)
                    .map(|i| {
                        let mut agent = AgentState::new(
                            i,
                            belief,
                            prior.clone(),
                            condition.communicates(),
                            condition.updates_trust(),
                        );
                        if condition.communicates() {
                            for &j in graph.adjacent(i) {
                                agent.register_source(SourceId::Peer(j), prior.clone());
                            }
                        }
                        agent
                    })
                    .collect();
                Population {
                    condition,
                    agents,
                    degenerate_updates: 0,
                }
            })
            .collect();
        Ok(SimState {
            run_index,
            truth,
            graph,
            populations,
        })
    }

    fn evidence_group(&self, condition: Condition) -> u64 {
        match self.config.evidence_sharing {
            EvidenceSharing::AllConditions => 0,
            EvidenceSharing::PerPair => condition.pair_group(),
        }
    }

    /// The world datum agent `agent` receives at `step` (0-based), if any.
    pub fn world_datum(&self, run: usize, group: u64, agent: usize, step: usize, truth: bool) -> Option<Claim> {
        let mut rng = self.key(run, Purpose::Evidence, group, agent, step).rng();
        let occurs = rng.random::<f64>() < self.config.inquiry_prob.value();
        let u = rng.random::<f64>();
        if !occurs {
            return None;
        }
        let p = self.config.p_obj.value();
        let matches_truth = if self.negate_world_claims { u >= 1.0 - p } else { u < p };
        Some(Claim {
            asserts_h: matches_truth == truth,
        })
    }

    pub fn inquiry_phase(&self, state: &mut SimState, step: usize) -> Result<(), EngineError> {
        if self.config.inquiry_prob == Probability::ZERO {
            return Ok(());
        }
        let run = state.run_index;
        let mut cache: Vec<(u64, Vec<Option<Claim>>)> = Vec::new();
        for pop in &mut state.populations {
            let group = self.evidence_group(pop.condition);
            let data = match cache.iter().position(|(g, _)| *g == group) {
                Some(pos) => &cache[pos].1,
                None => {
                    let data = (0..pop.agents.len())
                        .map(|i| self.world_datum(run, group, i, step, state.truth))
                        .collect();
                    cache.push((group, data));
                    &cache.last().unwrap().1
                }
            };
            for (agent, datum) in pop.agents.iter_mut().zip(data) {
                if let Some(claim) = datum {
                    let outcome = agent
                        .receive_report(Report::world(*claim), None)
                        .map_err(|source| EngineError::Model { run, source })?;
                    pop.degenerate_updates += u64::from(outcome.degenerate);
                }
            }
        }
        Ok(())
    }

    /// Communication coin of every agent at `step`.
    fn speak_coins(&self, run: usize, n: usize, step: usize) -> Vec<bool> {
        let p = self.config.comm_prob.value();
        (0..n)
            .map(|i| self.key(run, Purpose::Communication, 0, i, step).rng().random::<f64>() < p)
            .collect()
    }

    pub fn communication_phase(&self, state: &mut SimState, step: usize) -> Result<(), EngineError> {
        if !self.config.has_network() {
            return Ok(());
        }
        let run = state.run_index;
        let coins = self.speak_coins(run, state.graph.n(), step);
        let threshold = self.config.assertion_threshold;
        for pop in state.populations.iter_mut().filter(|p| p.condition.communicates()) {
            let mut said = Vec::with_capacity(pop.agents.len());
            for (agent, &coin) in pop.agents.iter().zip(&coins) {
                let claim =
                    decide_assertion(agent.belief, threshold).map_err(|source| EngineError::Model { run, source })?;
                said.push(claim.filter(|_| coin && agent.communicates));
            }
            for (i, agent) in pop.agents.iter_mut().enumerate() {
                for &sender in state.graph.adjacent(i) {
                    if let Some(claim) = said[sender] {
                        let outcome = agent
                            .receive_report(Report::peer(sender, claim), None)
                            .map_err(|source| EngineError::Model { run, source })?;
                        pop.degenerate_updates += u64::from(outcome.degenerate);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn run(&self, run_index: usize) -> Result<RunOutput, EngineError> {
        let c = self.config;
        let mut state = self.init_state(run_index)?;
        let mut records: Vec<Vec<AgentStep>> = state
            .populations
            .iter()
            .map(|_| Vec::with_capacity(c.steps * c.n_agents))
            .collect();
        for step in 0..c.steps {
            self.inquiry_phase(&mut state, step)?;
            self.communication_phase(&mut state, step)?;
            for (pop, out) in state.populations.iter().zip(&mut records) {
                out.extend(pop.agents.iter().map(|a| AgentStep {
                    belief: a.belief.value(),
                    world_trust: a.world_trust().value(),
                }));
            }
        }
        let graph_components = state.graph.component_count();
        let trajectories = state
            .populations
            .iter()
            .zip(records)
            .map(|(pop, records)| Trajectory {
                run: run_index,
                condition: pop.condition,
                truth: state.truth,
                n_agents: c.n_agents,
                records,
                diagnostics: Diagnostics {
                    graph_components,
                    degenerate_updates: pop.degenerate_updates,
                },
            })
            .collect();
        Ok(RunOutput {
            run: run_index,
            truth: state.truth,
            graph: state.graph,
            trajectories,
        })
    }

    /// Executes runs `0..runs`, handing each result to `sink` in run order.
    ///
    /// `threads == 1` runs inline; otherwise runs are computed on a rayon
    /// pool of that size (`0` = rayon's default) in chunks, and each chunk
    /// is drained in order. Output does not depend on `threads`.
    pub fn run_batch<F, E>(&self, threads: usize, mut sink: F) -> Result<(), EngineError>
    where
        F: FnMut(RunOutput) -> Result<(), E>,
        E: Into<Box<dyn std::error::Error + Send + Sync>>,
    {
        let runs = self.config.runs;
        let mut deliver = |out: RunOutput| {
            let run = out.run;
            sink(out).map_err(|e| EngineError::Sink { run, source: e.into() })
        };
        if threads == 1 {
            for run in 0..runs {
                deliver(self.run(run)?)?;
            }
            return Ok(());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
        let chunk = 4 * pool.current_num_threads().max(1);
        let mut start = 0;
        while start < runs {
            let end = (start + chunk).min(runs);
            let outputs: Vec<Result<RunOutput, EngineError>> =
                pool.install(|| (start..end).into_par_iter().map(|r| self.run(r)).collect());
            for out in outputs {
                deliver(out?)?;
            }
            start = end;
        }
        Ok(())
    }
}

pub fn init_state(config: &SimConfig, run_index: usize) -> Result<SimState, EngineError> {
    Simulator::new(config)?.init_state(run_index)
}

pub fn run(config: &SimConfig, run_index: usize) -> Result<RunOutput, EngineError> {
    Simulator::new(config)?.run(run_index)
}

/// All runs of `config`, ordered by run index.
pub fn run_batch(config: &SimConfig, threads: usize) -> Result<Vec<RunOutput>, EngineError> {
    let mut all = Vec::with_capacity(config.runs);
    Simulator::new(config)?.run_batch(threads, |out| {
        all.push(out);
        Ok::<_, std::convert::Infallible>(())
    })?;
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ConfigLayer, PriorBelief, TrustPrior};
    use crate::model::{make_beta_grid, TrustModel};

    fn config(f: impl FnOnce(&mut ConfigLayer)) -> SimConfig {
        let mut layer = ConfigLayer {
            p_obj: Some(0.66),
            ..Default::default()
        };
        f(&mut layer);
        layer.resolve().unwrap()
    }

    #[test]
    fn default_network_updaters_start_from_priors() {
        let c = config(|l| l.conditions = Some(vec![Condition::NetworkUpdater]));
        let s = init_state(&c, 0).unwrap();
        let pop = &s.populations[0];
        assert_eq!(pop.agents.len(), 50);
        let beta21 = TrustModel::Grid(make_beta_grid(2.0, 1.0, 1000).unwrap());
        for (i, a) in pop.agents.iter().enumerate() {
            assert_eq!(a.belief.value(), 0.5);
            assert_eq!(a.trust.len(), 1 + s.graph.degree(i));
            for (src, m) in &a.trust {
                if let SourceId::Peer(j) = src {
                    assert!(s.graph.adjacent(i).contains(j));
                }
                assert_eq!(m, &beta21);
            }
        }
        assert!(s.truth);
        assert_eq!(init_state(&c, 0).unwrap(), s);
    }

    #[test]
    fn no_inquiry_leaves_state_unchanged() {
        let c = config(|l| l.inquiry_prob = Some(0.0));
        let sim = Simulator::new(&c).unwrap();
        let mut s = sim.init_state(3).unwrap();
        let before = s.clone();
        sim.inquiry_phase(&mut s, 0).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn certain_inquiry_moves_fixed_agents_by_odds() {
        let c = config(|l| {
            l.inquiry_prob = Some(1.0);
            l.p_obj = Some(1.0);
            l.conditions = Some(vec![Condition::ShadowFixed]);
        });
        let sim = Simulator::new(&c).unwrap();
        let mut s = sim.init_state(0).unwrap();
        sim.inquiry_phase(&mut s, 0).unwrap();
        assert!(s.populations[0]
            .agents
            .iter()
            .all(|a| (a.belief.value() - 0.66).abs() < 1e-15));
        sim.inquiry_phase(&mut s, 1).unwrap();
        let odds: f64 = (0.66f64 / 0.34).powi(2);
        let expected = odds / (1.0 + odds);
        assert!((expected - 0.79027).abs() < 1e-5);
        assert!(s.populations[0]
            .agents
            .iter()
            .all(|a| (a.belief.value() - expected).abs() < 1e-12));
    }

    #[test]
    fn silence_band_sends_nothing() {
        let c = config(|l| l.comm_prob = Some(1.0));
        let sim = Simulator::new(&c).unwrap();
        let mut s = sim.init_state(0).unwrap();
        for pop in &mut s.populations {
            for (i, a) in pop.agents.iter_mut().enumerate() {
                a.belief = Probability::new(0.21 + 0.58 * i as f64 / 50.0).unwrap();
            }
        }
        let before = s.clone();
        sim.communication_phase(&mut s, 0).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn two_confident_neighbours_exchange_once() {
        // n = 3 ring: everyone is adjacent to everyone
        let c = config(|l| {
            l.n_agents = Some(3);
            l.comm_prob = Some(1.0);
            l.conditions = Some(vec![Condition::NetworkFixed]);
        });
        let sim = Simulator::new(&c).unwrap();
        let mut s = sim.init_state(0).unwrap();
        let agents = &mut s.populations[0].agents;
        agents[0].belief = Probability::new(0.85).unwrap();
        agents[1].belief = Probability::new(0.85).unwrap();
        agents[2].belief = Probability::new(0.5).unwrap();
        sim.communication_phase(&mut s, 0).unwrap();
        let agents = &s.populations[0].agents;
        let once = 0.66 * 0.85 / (0.66 * 0.85 + 0.34 * 0.15);
        assert!((agents[0].belief.value() - once).abs() < 1e-12);
        assert!((agents[1].belief.value() - once).abs() < 1e-12);
        // the silent agent hears both, in sender order
        let odds = (0.66f64 / 0.34).powi(2);
        assert!((agents[2].belief.value() - odds / (1.0 + odds)).abs() < 1e-12);
    }

    #[test]
    fn trajectory_shape_and_determinism() {
        let c = config(|l| {
            l.steps = Some(7);
            l.n_agents = Some(12);
        });
        let a = run(&c, 5).unwrap();
        assert_eq!(a, run(&c, 5).unwrap());
        assert_eq!(a.trajectories.len(), 4);
        for t in &a.trajectories {
            assert_eq!(t.records.len(), 7 * 12);
            assert_eq!(t.steps(), 7);
        }
        let zero = config(|l| l.steps = Some(0));
        let out = run(&zero, 0).unwrap();
        assert!(out.trajectories.iter().all(|t| t.records.is_empty()));
    }

    #[test]
    fn batch_is_thread_count_independent() {
        let c = config(|l| {
            l.runs = Some(9);
            l.steps = Some(10);
            l.n_agents = Some(10);
        });
        let seq = run_batch(&c, 1).unwrap();
        let par = run_batch(&c, 3).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq[0], run(&c, 0).unwrap());
        assert!(seq.iter().enumerate().all(|(i, o)| o.run == i));
    }

    #[test]
    fn sink_errors_carry_run_index() {
        let c = config(|l| {
            l.runs = Some(4);
            l.steps = Some(1);
        });
        let err = Simulator::new(&c)
            .unwrap()
            .run_batch(1, |out| if out.run == 2 { Err("disk full") } else { Ok(()) })
            .unwrap_err();
        assert!(matches!(err, EngineError::Sink { run: 2, .. }), "{err}");
    }

    #[test]
    fn optimal_agent_trusts_at_p_obj() {
        let c = config(|l| {
            l.p_obj = Some(0.9);
            l.conditions = Some(vec![Condition::Optimal]);
            l.n_agents = Some(1);
            l.trust_prior = Some(TrustPrior::Fixed(Probability::new(0.6).unwrap()));
            l.prior_belief = Some(PriorBelief::Value(Probability::new(0.5).unwrap()));
        });
        let s = init_state(&c, 0).unwrap();
        assert_eq!(s.populations[0].agents[0].world_trust().value(), 0.9);
        assert_eq!(s.graph.edge_count(), 0);
    }
}
