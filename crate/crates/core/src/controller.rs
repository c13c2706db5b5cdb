//! Common interface for anything that turns observations into valve commands.

use crate::dynamics::PlatformState;
use crate::env::{Observation, TaskSpec};
use crate::lqr::{LqrController, LqrGoal};
use crate::ThrusterBits;

pub trait Controller {
    /// Called at the start of every episode.
    fn reset(&mut self);

    /// `observed` is the (possibly noisy) state behind `obs`.
    fn act(&mut self, obs: &Observation, observed: &PlatformState, task: &TaskSpec) -> ThrusterBits;

    fn label(&self) -> String;

    /// Steps on which the controller could not compute a command and idled.
    fn failures(&self) -> u64 {
        0
    }
}

impl Controller for LqrController {
    fn reset(&mut self) {
        LqrController::reset(self);
    }

    fn act(&mut self, _obs: &Observation, observed: &PlatformState, task: &TaskSpec) -> ThrusterBits {
        let goal = LqrGoal::from_task(task, observed);
        self.act_or_idle(observed, &goal)
    }

    fn label(&self) -> String {
        "LQR".into()
    }

    fn failures(&self) -> u64 {
        LqrController::failures(self) as u64
    }
}
