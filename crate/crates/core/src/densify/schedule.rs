//! Iteration schedule of densification events.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Critical identification, aggressive clone and depth reinitialization.
    Aggressive,
    /// Gradient-driven clone and split with periodic opacity resets.
    Progressive,
}

/// Event fired by the densification schedule at a given iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensifyEvent {
    VanillaCloneSplit,
    IdentifyClone,
    DepthReinit,
    OpacityReset,
}

/// Iteration constants of one densification strategy. All windows are
/// half-open `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensifySchedule {
    pub strategy: Strategy,
    pub start: usize,
    pub end: usize,
    /// Cadence of gradient-driven clone and split; 0 disables it.
    pub vanilla_interval: usize,
    /// Cadence of identification plus aggressive clone; 0 disables it.
    pub clone_interval: usize,
    pub reinit_iter: Option<usize>,
    /// Cadence of opacity resets; 0 disables them.
    pub opacity_reset_interval: usize,
    /// Keep gradient-driven densification running alongside the aggressive clone.
    pub vanilla_in_aggressive: bool,
}

fn on_cadence(iter: usize, start: usize, end: usize, interval: usize) -> bool {
    interval > 0 && iter >= start && iter < end && (iter - start).is_multiple_of(interval)
}

impl DensifySchedule {
    /// Events due at `iter`, in execution order.
    pub fn events(&self, iter: usize) -> Vec<DensifyEvent> {
        let mut ev = Vec::new();
        let vanilla = match self.strategy {
            Strategy::Progressive => true,
            Strategy::Aggressive => self.vanilla_in_aggressive,
        };
        if vanilla && on_cadence(iter, self.start, self.end, self.vanilla_interval) {
            ev.push(DensifyEvent::VanillaCloneSplit);
        }
        if self.strategy == Strategy::Aggressive {
            if on_cadence(iter, self.start, self.end, self.clone_interval) {
                ev.push(DensifyEvent::IdentifyClone);
            }
            if self.reinit_iter == Some(iter) {
                ev.push(DensifyEvent::DepthReinit);
            }
        }
        if iter > 0 && on_cadence(iter, 0, self.end, self.opacity_reset_interval) {
            ev.push(DensifyEvent::OpacityReset);
        }
        ev
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aggressive() -> DensifySchedule {
        DensifySchedule {
            strategy: Strategy::Aggressive,
            start: 500,
            end: 3000,
            vanilla_interval: 100,
            clone_interval: 250,
            reinit_iter: Some(2000),
            opacity_reset_interval: 0,
            vanilla_in_aggressive: false,
        }
    }

    #[test]
    fn aggressive_events() {
        let s = aggressive();
        assert_eq!(s.events(499), vec![]);
        assert_eq!(s.events(500), vec![DensifyEvent::IdentifyClone]);
        assert_eq!(s.events(600), vec![]);
        assert_eq!(s.events(750), vec![DensifyEvent::IdentifyClone]);
        assert_eq!(
            s.events(2000),
            vec![DensifyEvent::IdentifyClone, DensifyEvent::DepthReinit]
        );
        assert_eq!(s.events(2750), vec![DensifyEvent::IdentifyClone]);
        assert_eq!(s.events(3000), vec![]);
        assert_eq!(s.events(3100), vec![]);
        let with_vanilla = DensifySchedule {
            vanilla_in_aggressive: true,
            ..s
        };
        assert_eq!(
            with_vanilla.events(600),
            vec![DensifyEvent::VanillaCloneSplit]
        );
    }

    #[test]
    fn progressive_events() {
        let s = DensifySchedule {
            strategy: Strategy::Progressive,
            start: 500,
            end: 15000,
            vanilla_interval: 100,
            clone_interval: 250,
            reinit_iter: Some(2000),
            opacity_reset_interval: 3000,
            vanilla_in_aggressive: false,
        };
        assert_eq!(s.events(0), vec![]);
        assert_eq!(s.events(700), vec![DensifyEvent::VanillaCloneSplit]);
        assert_eq!(s.events(750), vec![]);
        assert_eq!(s.events(2000), vec![DensifyEvent::VanillaCloneSplit]);
        assert_eq!(
            s.events(3000),
            vec![DensifyEvent::VanillaCloneSplit, DensifyEvent::OpacityReset]
        );
        assert_eq!(s.events(15000), vec![]);
        let total = (0..20000)
            .filter(|&i| s.events(i).contains(&DensifyEvent::VanillaCloneSplit))
            .count();
        assert_eq!(total, 145);
    }
}
