//! Skill library and rule-based segment classification.

use serde::{Deserialize, Serialize};

use super::MilestoneError;
use crate::toyworld::state::{is_open, planar_distance};
use crate::toyworld::Episode;

pub const MAX_SKILLS: usize = 50;

/// Minimum drop in planar distance for a segment to count as moving toward
/// something.
pub const PROGRESS_DISTANCE: f32 = 0.02;
/// Approach segments stay at or above this height throughout.
pub const APPROACH_MIN_Z: f32 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skill {
    pub id: usize,
    pub verb: String,
    pub template: String,
    /// Auxiliary skills are folded into a neighbouring primary skill when
    /// segments are merged.
    pub auxiliary: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillLibrary {
    pub skills: Vec<Skill>,
}

pub const APPROACH: &str = "approach";
pub const PICK_UP: &str = "pick up";
pub const PLACE_ONTO: &str = "place onto";
pub const MOVE: &str = "move";
pub const ADJUST: &str = "adjust";

impl Default for SkillLibrary {
    fn default() -> Self {
        let entries = [
            (APPROACH, "Approach the {obj}", false),
            (PICK_UP, "Pick up the {obj}", false),
            (PLACE_ONTO, "Place the {obj} onto the plate", false),
            (MOVE, "Move the {obj} toward the plate", true),
            (ADJUST, "Adjust the gripper", true),
        ];
        SkillLibrary {
            skills: entries
                .iter()
                .enumerate()
                .map(|(id, (verb, template, auxiliary))| Skill {
                    id,
                    verb: verb.to_string(),
                    template: template.to_string(),
                    auxiliary: *auxiliary,
                })
                .collect(),
        }
    }
}

impl SkillLibrary {
    pub fn validate(&self) -> Result<(), MilestoneError> {
        if self.skills.is_empty() || self.skills.len() > MAX_SKILLS {
            return Err(MilestoneError::InvalidLibrary(format!(
                "library holds {} skills, expected 1..={MAX_SKILLS}",
                self.skills.len()
            )));
        }
        for (i, s) in self.skills.iter().enumerate() {
            if s.id != i {
                return Err(MilestoneError::InvalidLibrary(format!("skill ids not dense at {i}")));
            }
            if self.skills[..i].iter().any(|o| o.verb == s.verb) {
                return Err(MilestoneError::InvalidLibrary(format!("duplicate verb {:?}", s.verb)));
            }
        }
        for verb in [APPROACH, PICK_UP, PLACE_ONTO, MOVE, ADJUST] {
            self.id_of(verb)?;
        }
        Ok(())
    }

    pub fn id_of(&self, verb: &str) -> Result<usize, MilestoneError> {
        self.skills
            .iter()
            .find(|s| s.verb == verb)
            .map(|s| s.id)
            .ok_or_else(|| MilestoneError::InvalidLibrary(format!("library lacks the {verb:?} skill")))
    }

    pub fn get(&self, id: usize) -> Option<&Skill> {
        self.skills.get(id)
    }

    pub fn is_auxiliary(&self, id: usize) -> bool {
        self.get(id).is_some_and(|s| s.auxiliary)
    }

    pub fn describe(&self, id: usize, object: &str) -> Option<String> {
        self.get(id).map(|s| s.template.replace("{obj}", object))
    }
}

/// The inclusive frame span `[from, to]` and its skill.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledSegment {
    pub from: usize,
    pub to: usize,
    pub skill_id: usize,
}

/// Classifies each span between consecutive boundaries. Rules apply in order:
/// a closing crossing inside the span is a pick-up, an opening crossing a
/// place; otherwise a high empty-handed move toward the target is an
/// approach, a loaded move toward the plate a move, and anything else an
/// adjustment.
pub fn assign_skills(
    episode: &Episode,
    boundaries: &[usize],
    library: &SkillLibrary,
) -> Result<Vec<LabeledSegment>, MilestoneError> {
    library.validate()?;
    check_boundaries(boundaries, episode.len())?;
    let ids = [
        library.id_of(APPROACH)?,
        library.id_of(PICK_UP)?,
        library.id_of(PLACE_ONTO)?,
        library.id_of(MOVE)?,
        library.id_of(ADJUST)?,
    ];
    let target = episode.target_id();
    let plate = episode.states[0].plate.map(|p| p.center);
    let mut out = Vec::with_capacity(boundaries.len() - 1);
    for w in boundaries.windows(2) {
        let (from, to) = (w[0], w[1]);
        let states = &episode.states[from..=to];
        let mut closes = false;
        let mut opens = false;
        for pair in states.windows(2) {
            match (is_open(pair[0].gripper_open), is_open(pair[1].gripper_open)) {
                (true, false) => closes = true,
                (false, true) => opens = true,
                _ => {}
            }
        }
        let (a, b) = (&states[0], &states[states.len() - 1]);
        let target_dist = |s: &crate::toyworld::WorldState| {
            s.object(target).map(|o| planar_distance(s.gripper_xy(), o.center))
        };
        let holding = a.held_object().is_some();
        let min_z = states.iter().map(|s| s.gripper_pose[2]).fold(f32::INFINITY, f32::min);
        let toward_target = match (target_dist(a), target_dist(b)) {
            (Some(da), Some(db)) => da - db >= PROGRESS_DISTANCE,
            _ => false,
        };
        let toward_plate = plate.is_some_and(|p| {
            planar_distance(a.gripper_xy(), p) - planar_distance(b.gripper_xy(), p) >= PROGRESS_DISTANCE
        });
        let skill_id = if closes {
            ids[1]
        } else if opens {
            ids[2]
        } else if !holding && toward_target && min_z >= APPROACH_MIN_Z {
            ids[0]
        } else if holding && toward_plate {
            ids[3]
        } else {
            ids[4]
        };
        out.push(LabeledSegment { from, to, skill_id });
    }
    Ok(out)
}

pub(crate) fn check_boundaries(boundaries: &[usize], len: usize) -> Result<(), MilestoneError> {
    let ok = boundaries.len() >= 2
        && boundaries[0] == 0
        && boundaries[boundaries.len() - 1] + 1 == len
        && boundaries.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(MilestoneError::InvalidSegments(format!(
            "boundaries {boundaries:?} do not partition {len} frames"
        )))
    }
}
