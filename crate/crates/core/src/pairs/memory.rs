use alloc::collections::VecDeque;

use crate::frame::MotionSequence;
use crate::{Error, Result};

/// One rollout: the agent's rendered frames and the synchronized
/// demonstration frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub agent: MotionSequence,
    pub demo: MotionSequence,
    pub class_id: usize,
    pub steps: usize,
}

impl Episode {
    pub fn new(agent: MotionSequence, demo: MotionSequence, class_id: usize) -> Result<Self> {
        if agent.len() != demo.len() {
            return Err(Error::LengthMismatch(agent.len(), demo.len()));
        }
        if agent.is_empty() {
            return Err(Error::EmptySequence);
        }
        let steps = agent.len();
        Ok(Self {
            agent,
            demo,
            class_id,
            steps,
        })
    }

    pub fn len(&self) -> usize {
        self.agent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agent.is_empty()
    }
}

/// Bounded FIFO of episodes. Stored episodes are only ever read.
#[derive(Clone, Debug)]
pub struct ExperienceMemory {
    capacity: usize,
    episodes: VecDeque<Episode>,
}

impl ExperienceMemory {
    pub const DEFAULT_CAPACITY: usize = 200;

    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            episodes: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, episode: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Oldest first.
    pub fn get(&self, i: usize) -> Option<&Episode> {
        self.episodes.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }
}

impl Default for ExperienceMemory {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAPACITY)
    }
}
