use super::{compute_gae, PpoError};

/// One agent step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f32>,
    /// Pre-squash continuous draw the log-probability refers to.
    pub raw: Vec<f32>,
    pub discrete: Vec<usize>,
    pub log_prob: f32,
    pub value: f32,
    /// Extrinsic environment reward.
    pub reward: f64,
    /// Observation after the step; kept only when a curiosity model needs it.
    pub next_obs: Option<Vec<f32>>,
}

/// Flattened transitions with their advantage targets.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f32>,
    pub returns: Vec<f32>,
    /// Reward that entered the advantage computation (blend of extrinsic and intrinsic).
    pub train_rewards: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Per-agent segments, each closed at `time_horizon`, episode end or buffer
/// flush, then advantage-estimated and appended to the flat store. Segments
/// never mix agents.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    segments: Vec<Vec<Transition>>,
    store: Batch,
}

impl RolloutBuffer {
    pub fn new(n_slots: usize) -> Self {
        Self {
            segments: vec![Vec::new(); n_slots],
            store: Batch::default(),
        }
    }

    pub fn push(&mut self, slot: usize, t: Transition) {
        self.segments[slot].push(t);
    }

    pub fn segment_len(&self, slot: usize) -> usize {
        self.segments[slot].len()
    }

    /// Transitions already flattened.
    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    /// Transitions flattened plus those still in open segments.
    pub fn total(&self) -> usize {
        self.store.len() + self.segments.iter().map(Vec::len).sum::<usize>()
    }

    /// Closes `slot`'s segment. `terminal` drops the bootstrap value; the
    /// training reward is `extrinsic_strength * reward + intrinsic(t)`.
    #[allow(clippy::too_many_arguments)]
    pub fn finish_segment(
        &mut self,
        slot: usize,
        bootstrap_value: f64,
        terminal: bool,
        gamma: f64,
        lambda: f64,
        extrinsic_strength: f64,
        intrinsic: impl Fn(&Transition) -> f64,
    ) -> Result<(), PpoError> {
        let seg = std::mem::take(&mut self.segments[slot]);
        if seg.is_empty() {
            return Ok(());
        }
        let rewards: Vec<f64> = seg
            .iter()
            .map(|t| extrinsic_strength * t.reward + intrinsic(t))
            .collect();
        let values: Vec<f64> = seg.iter().map(|t| t.value as f64).collect();
        let mut dones = vec![false; seg.len()];
        *dones.last_mut().expect("non-empty") = terminal;
        let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap_value, gamma, lambda)?;
        self.store.advantages.extend(adv.iter().map(|&a| a as f32));
        self.store.returns.extend(ret.iter().map(|&r| r as f32));
        self.store.train_rewards.extend(rewards);
        self.store.transitions.extend(seg);
        Ok(())
    }

    /// Hands out the flattened store. Open segments stay in place.
    pub fn take_batch(&mut self) -> Batch {
        std::mem::take(&mut self.store)
    }
}
