use crate::game::Observation;

/// One transition `(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub obs: Observation,
    pub joint: usize,
    pub next_obs: Observation,
}

/// The two buffers of one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepData {
    /// Triples whose state is drawn from the current step's roll-in.
    pub main: Vec<Triple>,
    /// Triples whose state follows one uniform action from the previous step.
    pub tilde: Vec<Triple>,
}

impl StepData {
    /// `D_h` followed by `D~_h`.
    pub fn union(&self) -> impl Iterator<Item = &Triple> + Clone {
        self.main.iter().chain(self.tilde.iter())
    }

    pub fn len(&self) -> usize {
        self.main.len() + self.tilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Append-only per-step buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub steps: Vec<StepData>,
}

impl Dataset {
    pub fn new(horizon: usize) -> Self {
        Self {
            steps: vec![StepData::default(); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn push(&mut self, h: usize, main: Triple, tilde: Triple) {
        self.steps[h].main.push(main);
        self.steps[h].tilde.push(tilde);
    }
}
