use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use crate::model::{belief_posterior, expected_trust, update_trust_grid, Claim, ModelError, TrustModel};
use crate::prob::Probability;

/// Origin of a report: the world (inquiry) or a neighbouring agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceId {
    World,
    Peer(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Report {
    pub source: SourceId,
    pub claim: Claim,
}

impl Report {
    pub fn world(claim: Claim) -> Self {
        Report {
            source: SourceId::World,
            claim,
        }
    }

    pub fn peer(sender: usize, claim: Claim) -> Self {
        Report {
            source: SourceId::Peer(sender),
            claim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub belief: Probability,
    pub trust: BTreeMap<SourceId, TrustModel>,
    pub communicates: bool,
    pub updates_trust: bool,
}

/// What happened while processing one report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ReportOutcome {
    /// The belief update hit the undefined `0/0` case and was skipped.
    pub degenerate: bool,
}

impl AgentState {
    /// Agent whose only registered source is the world.
    pub fn new(
        id: usize,
        belief: Probability,
        world_trust: TrustModel,
        communicates: bool,
        updates_trust: bool,
    ) -> Self {
        let mut trust = BTreeMap::new();
        trust.insert(SourceId::World, world_trust);
        AgentState {
            id,
            belief,
            trust,
            communicates,
            updates_trust,
        }
    }

    pub fn register_source(&mut self, source: SourceId, model: TrustModel) {
        self.trust.insert(source, model);
    }

    pub fn world_trust(&self) -> Probability {
        expected_trust(&self.trust[&SourceId::World])
    }

    /// Processes one report in place. Belief and trust are both revised from
    /// the belief held before the report, then committed together.
    ///
    /// With `fallback` set, an unknown source is registered with that prior
    /// first; otherwise it is an error.
    pub fn receive_report(
        &mut self,
        report: Report,
        fallback: Option<&TrustModel>,
    ) -> Result<ReportOutcome, ModelError> {
        let model = match (self.trust.entry(report.source), fallback) {
            (Entry::Occupied(e), _) => e.into_mut(),
            (Entry::Vacant(e), Some(prior)) => e.insert(prior.clone()),
            (Entry::Vacant(_), None) => return Err(ModelError::UnknownSource(report.source)),
        };
        let before = self.belief;
        let posterior = belief_posterior(before, expected_trust(model), report.claim);
        if self.updates_trust {
            if let TrustModel::Grid(grid) = model {
                *grid = update_trust_grid(grid, before, report.claim)?;
            }
        }
        Ok(match posterior {
            Some(b) => {
                self.belief = b;
                ReportOutcome::default()
            }
            None => ReportOutcome { degenerate: true },
        })
    }
}

/// Pure wrapper around [`AgentState::receive_report`] for registered sources.
pub fn receive_report(agent: &AgentState, report: Report) -> Result<AgentState, ModelError> {
    let mut next = agent.clone();
    next.receive_report(report, None)?;
    Ok(next)
}
