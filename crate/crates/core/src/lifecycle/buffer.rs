//! FIFO buffer of rejected flows awaiting clustering.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::heads::OpenSetVerdict;
use crate::ingest::{FlowKey, FlowSource, FlowTensor, LabeledFlow};

/// A flow seen by the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedFlow {
    pub id: String,
    pub key: FlowKey,
    pub tensor: FlowTensor,
    pub source: FlowSource,
}

impl From<LabeledFlow> for ObservedFlow {
    fn from(f: LabeledFlow) -> Self {
        ObservedFlow {
            id: f.id,
            key: f.key,
            tensor: f.tensor,
            source: f.source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferedFlow {
    pub flow: ObservedFlow,
    pub verdict: OpenSetVerdict,
    pub particularized: Vec<f32>,
    /// Generation of the model that produced the verdict.
    pub generation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestOutcome {
    /// Known verdict: counted, not buffered.
    Logged,
    Buffered,
    /// Buffered, and the buffer just reached the trigger.
    ClusteringScheduled,
}

#[derive(Debug)]
pub struct NoveltyBuffer {
    capacity: usize,
    trigger: usize,
    flows: VecDeque<BufferedFlow>,
    since_clustering: usize,
    scheduled: bool,
    evicted: u64,
    known_seen: u64,
}

impl NoveltyBuffer {
    pub fn new(capacity: usize, trigger: usize) -> Self {
        NoveltyBuffer {
            capacity: capacity.max(1),
            trigger: trigger.max(1),
            flows: VecDeque::new(),
            since_clustering: 0,
            scheduled: false,
            evicted: 0,
            known_seen: 0,
        }
    }

    /// Only unknown verdicts are buffered. A clustering job is scheduled once
    /// each time `trigger` unknowns have arrived since the last job.
    pub fn ingest_verdict(&mut self, entry: BufferedFlow) -> IngestOutcome {
        if !entry.verdict.is_unknown() {
            self.known_seen += 1;
            return IngestOutcome::Logged;
        }
        if self.flows.len() == self.capacity {
            self.flows.pop_front();
            self.evicted += 1;
        }
        self.flows.push_back(entry);
        self.since_clustering += 1;
        if !self.scheduled && self.since_clustering >= self.trigger {
            self.scheduled = true;
            return IngestOutcome::ClusteringScheduled;
        }
        IngestOutcome::Buffered
    }

    pub fn is_scheduled(&self) -> bool {
        self.scheduled
    }

    /// Claims the scheduled job, if any.
    pub fn take_job(&mut self) -> bool {
        let had = self.scheduled;
        self.scheduled = false;
        if had {
            self.since_clustering = 0;
        }
        had
    }

    /// Schedules a job regardless of the trigger, unless one is pending.
    pub fn force_schedule(&mut self) -> bool {
        if self.scheduled || self.flows.is_empty() {
            return false;
        }
        self.scheduled = true;
        true
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn evicted(&self) -> u64 {
        self.evicted
    }

    pub fn known_seen(&self) -> u64 {
        self.known_seen
    }

    pub fn iter(&self) -> impl Iterator<Item = &BufferedFlow> {
        self.flows.iter()
    }

    pub fn get(&self, id: &str) -> Option<&BufferedFlow> {
        self.flows.iter().find(|f| f.flow.id == id)
    }

    /// Keeps the flows for which `keep` returns true, in order.
    pub fn retain(&mut self, keep: impl FnMut(&BufferedFlow) -> bool) {
        self.flows.retain(keep);
    }

    /// Replaces every buffered entry in place, keeping order.
    pub fn replace_all(&mut self, flows: Vec<BufferedFlow>) {
        self.flows = flows.into_iter().collect();
        while self.flows.len() > self.capacity {
            self.flows.pop_front();
            self.evicted += 1;
        }
    }

    pub fn drain(&mut self) -> Vec<BufferedFlow> {
        self.flows.drain(..).collect()
    }
}
