//! The fourteen benchmark tasks and their static metadata.

use crate::decision::{Platform, Skill};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Find,
    Track,
    Interaction,
    ComplexFind,
    ComplexInteraction,
    Transport,
    ComplexTransport,
    BananaIn,
    PepperIn,
    CarrotOut,
    KiwifruitOut,
    OpenDrawer,
    LhCarrot,
    LhPepper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Middle,
    Hard,
}

/// Gesture a human shows in the interaction tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gesture {
    Come,
    Sit,
    Shake,
    Touch,
    None,
}

impl Gesture {
    pub const REQUESTS: [Gesture; 4] = [Gesture::Come, Gesture::Sit, Gesture::Shake, Gesture::Touch];

    /// Skill that answers the gesture once the robot stands near the human.
    pub fn response(self) -> Skill {
        match self {
            Gesture::Sit => Skill::Sit,
            Gesture::Shake => Skill::Shake,
            Gesture::Touch => Skill::Touch,
            Gesture::Come | Gesture::None => Skill::Walk,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Gesture::Come => "come",
            Gesture::Sit => "sit",
            Gesture::Shake => "shake",
            Gesture::Touch => "touch",
            Gesture::None => "none",
        }
    }
}

impl TaskId {
    pub const ALL: [TaskId; 14] = [
        TaskId::Find,
        TaskId::Track,
        TaskId::Interaction,
        TaskId::ComplexFind,
        TaskId::ComplexInteraction,
        TaskId::Transport,
        TaskId::ComplexTransport,
        TaskId::BananaIn,
        TaskId::PepperIn,
        TaskId::CarrotOut,
        TaskId::KiwifruitOut,
        TaskId::OpenDrawer,
        TaskId::LhCarrot,
        TaskId::LhPepper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Find => "find",
            TaskId::Track => "track",
            TaskId::Interaction => "interaction",
            TaskId::ComplexFind => "complex_find",
            TaskId::ComplexInteraction => "complex_interaction",
            TaskId::Transport => "transport",
            TaskId::ComplexTransport => "complex_transport",
            TaskId::BananaIn => "banana_in",
            TaskId::PepperIn => "pepper_in",
            TaskId::CarrotOut => "carrot_out",
            TaskId::KiwifruitOut => "kiwifruit_out",
            TaskId::OpenDrawer => "open_drawer",
            TaskId::LhCarrot => "lh_carrot",
            TaskId::LhPepper => "lh_pepper",
        }
    }

    pub fn from_name(name: &str) -> Option<TaskId> {
        TaskId::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Column title used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            TaskId::Find => "Find",
            TaskId::Track => "Track",
            TaskId::Interaction => "Interaction",
            TaskId::ComplexFind => "Complex Find",
            TaskId::ComplexInteraction => "Complex Interaction",
            TaskId::Transport => "Transport",
            TaskId::ComplexTransport => "Complex Transport",
            TaskId::BananaIn => "Banana into Box",
            TaskId::PepperIn => "Pepper into Box",
            TaskId::CarrotOut => "Carrot out of Box",
            TaskId::KiwifruitOut => "Kiwifruit out of Box",
            TaskId::OpenDrawer => "Open Drawer",
            TaskId::LhCarrot => "Long-Horizon Carrot",
            TaskId::LhPepper => "Long-Horizon Pepper",
        }
    }

    pub fn platform(self) -> Platform {
        match self {
            TaskId::Find
            | TaskId::Track
            | TaskId::Interaction
            | TaskId::ComplexFind
            | TaskId::ComplexInteraction
            | TaskId::Transport
            | TaskId::ComplexTransport => Platform::Legged,
            _ => Platform::Arm,
        }
    }

    pub fn difficulty(self) -> Difficulty {
        match self {
            TaskId::Find | TaskId::Track | TaskId::Interaction => Difficulty::Easy,
            TaskId::ComplexFind | TaskId::ComplexInteraction | TaskId::Transport => Difficulty::Middle,
            TaskId::ComplexTransport => Difficulty::Hard,
            TaskId::BananaIn | TaskId::PepperIn | TaskId::CarrotOut | TaskId::KiwifruitOut => Difficulty::Easy,
            TaskId::OpenDrawer => Difficulty::Middle,
            TaskId::LhCarrot | TaskId::LhPepper => Difficulty::Hard,
        }
    }

    pub fn is_interaction(self) -> bool {
        matches!(self, TaskId::Interaction | TaskId::ComplexInteraction)
    }

    pub fn is_complex(self) -> bool {
        matches!(
            self,
            TaskId::ComplexFind | TaskId::ComplexInteraction | TaskId::ComplexTransport
        )
    }

    /// Trials in one battery: interaction tasks run each of the four
    /// gestures five times, everything else ten times.
    pub fn trial_count(self) -> usize {
        if self.is_interaction() {
            20
        } else {
            10
        }
    }

    /// Gesture shown in trial `index` of an interaction task.
    pub fn gesture_for_trial(self, index: usize) -> Gesture {
        if self.is_interaction() {
            Gesture::REQUESTS[(index / 5) % 4]
        } else {
            Gesture::None
        }
    }

    pub fn prompt(self) -> &'static str {
        match self {
            TaskId::Find => "Find the red ball and walk up to it.",
            TaskId::Track => "Follow the red ball as it moves and stay close to it.",
            TaskId::Interaction => {
                "Read the gesture of the person, walk over and answer it with the right action."
            }
            TaskId::ComplexFind => "Walk to the green bottle, going around anything in the way.",
            TaskId::ComplexInteraction => {
                "Go around the obstacle to the person, read their gesture and answer it."
            }
            TaskId::Transport => "Carry the basket to the blue bin and empty it there.",
            TaskId::ComplexTransport => {
                "Carry the basket around the obstacle to the blue bin and empty it there."
            }
            TaskId::BananaIn => "Put the banana into the box.",
            TaskId::PepperIn => "Put the pepper into the box.",
            TaskId::CarrotOut => "Take the carrot out of the box and leave it on the table.",
            TaskId::KiwifruitOut => "Take the kiwifruit out of the box and leave it on the table.",
            TaskId::OpenDrawer => "The drawer is half open. Pull it fully open.",
            TaskId::LhCarrot => "Open the drawer, then take the carrot out of it and leave it on the table.",
            TaskId::LhPepper => "Open the drawer, then take the pepper out of it and leave it on the table.",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in TaskId::ALL {
            assert_eq!(TaskId::from_name(t.name()), Some(t));
        }
        assert_eq!(TaskId::from_name("fly"), None);
    }

    #[test]
    fn seven_per_platform() {
        let legged = TaskId::ALL.iter().filter(|t| t.platform() == Platform::Legged).count();
        assert_eq!(legged, 7);
    }

    #[test]
    fn interaction_gestures_cycle_in_blocks_of_five() {
        let g: Vec<_> = (0..20).map(|i| TaskId::Interaction.gesture_for_trial(i)).collect();
        assert_eq!(g[0], Gesture::Come);
        assert_eq!(g[4], Gesture::Come);
        assert_eq!(g[5], Gesture::Sit);
        assert_eq!(g[19], Gesture::Touch);
    }
}
