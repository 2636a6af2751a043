use serde::{Deserialize, Serialize};

use super::WorldError;

/// Largest magnitude allowed for any action component, per control step.
pub const ACTION_BOUND: f32 = 0.1;
/// Openness at which the gripper flips between open (>=) and closed (<).
pub const GRIPPER_THRESHOLD: f32 = 0.5;
/// Planar distance within which a closing gripper grasps an object.
pub const GRASP_DISTANCE: f32 = 0.05;
/// Highest gripper z at which a grasp can engage.
pub const GRASP_MAX_Z: f32 = 0.1;
pub const OBJECT_RADIUS: f32 = 0.03;
pub const PLATE_RADIUS: f32 = 0.1;
/// Control rate; one second of motion is this many frames.
pub const CONTROL_HZ: usize = 10;

pub const FIRST_OBJECT_CODE: u8 = 16;
pub const LAST_OBJECT_CODE: u8 = 31;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableObject {
    pub id: u32,
    pub code: u8,
    pub center: [f32; 2],
    pub held: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plate {
    pub center: [f32; 2],
    pub radius: f32,
}

impl Plate {
    pub fn contains(&self, p: [f32; 2]) -> bool {
        planar_distance(self.center, p) <= self.radius
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub gripper_pose: [f32; 3],
    pub gripper_open: f32,
    pub objects: Vec<TableObject>,
    pub plate: Option<Plate>,
    pub tablecloth: u8,
    pub step_index: u32,
    pub rng_seed: u64,
}

pub fn planar_distance(a: [f32; 2], b: [f32; 2]) -> f32 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

pub fn is_open(openness: f32) -> bool {
    openness >= GRIPPER_THRESHOLD
}

impl WorldState {
    pub fn gripper_xy(&self) -> [f32; 2] {
        [self.gripper_pose[0], self.gripper_pose[1]]
    }

    pub fn object(&self, id: u32) -> Option<&TableObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn held_object(&self) -> Option<&TableObject> {
        self.objects.iter().find(|o| o.held)
    }

    pub fn proprio(&self) -> [f32; 4] {
        let [x, y, z] = self.gripper_pose;
        [x, y, z, self.gripper_open]
    }

    /// True when the physical configuration matches, ignoring the step counter.
    pub fn same_configuration(&self, other: &WorldState) -> bool {
        self.gripper_pose == other.gripper_pose
            && self.gripper_open == other.gripper_open
            && self.objects == other.objects
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let in_unit = |v: f32| (0.0..=1.0).contains(&v);
        if !self.gripper_pose.iter().copied().all(in_unit) || !in_unit(self.gripper_open) {
            return Err(WorldError::InvalidState("gripper outside [0,1]".into()));
        }
        if !(1..=8).contains(&self.tablecloth) {
            return Err(WorldError::InvalidState(format!(
                "tablecloth code {} outside 1..=8",
                self.tablecloth
            )));
        }
        if self.objects.iter().filter(|o| o.held).count() > 1 {
            return Err(WorldError::InvalidState("more than one held object".into()));
        }
        let mut codes: Vec<u8> = self.objects.iter().map(|o| o.code).collect();
        codes.sort_unstable();
        codes.dedup();
        if codes.len() != self.objects.len() {
            return Err(WorldError::InvalidState("duplicate object palette code".into()));
        }
        for o in &self.objects {
            if !(FIRST_OBJECT_CODE..=LAST_OBJECT_CODE).contains(&o.code) {
                return Err(WorldError::InvalidState(format!(
                    "object {} has palette code {} outside 16..=31",
                    o.id, o.code
                )));
            }
            if !o.center.iter().copied().all(in_unit) {
                return Err(WorldError::InvalidState(format!("object {} off the table", o.id)));
            }
        }
        if let Some(p) = &self.plate {
            if !p.center.iter().copied().all(in_unit) || !(p.radius > 0.0) {
                return Err(WorldError::InvalidState("invalid plate".into()));
            }
        }
        Ok(())
    }
}

/// A per-step delta command `(dx, dy, dz, dgrip)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f32; 4]", into = "[f32; 4]")]
pub struct Action {
    delta: [f32; 4],
}

impl Action {
    pub const ZERO: Action = Action { delta: [0.0; 4] };

    pub fn new(delta: [f32; 4]) -> Result<Self, WorldError> {
        for (component, &v) in delta.iter().enumerate() {
            if !v.is_finite() || v.abs() > ACTION_BOUND {
                return Err(WorldError::ActionOutOfBounds { component, value: v });
            }
        }
        Ok(Action { delta })
    }

    pub fn delta(&self) -> [f32; 4] {
        self.delta
    }
}

impl TryFrom<[f32; 4]> for Action {
    type Error = WorldError;
    fn try_from(value: [f32; 4]) -> Result<Self, Self::Error> {
        Action::new(value)
    }
}

impl From<Action> for [f32; 4] {
    fn from(a: Action) -> Self {
        a.delta
    }
}

/// Advances the world by one control step.
pub fn step(state: &WorldState, action: &Action) -> WorldState {
    let d = action.delta();
    let mut next = state.clone();
    for (axis, v) in next.gripper_pose.iter_mut().enumerate() {
        *v = (*v + d[axis]).clamp(0.0, 1.0);
    }
    next.gripper_open = (state.gripper_open + d[3]).clamp(0.0, 1.0);
    let was_open = is_open(state.gripper_open);
    let now_open = is_open(next.gripper_open);
    let grip = next.gripper_xy();

    if !was_open && now_open {
        for o in next.objects.iter_mut() {
            o.held = false;
        }
    } else if was_open && !now_open && next.held_object().is_none() && next.gripper_pose[2] <= GRASP_MAX_Z
    {
        let candidate = next
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| (i, planar_distance(o.center, grip), o.id))
            .filter(|&(_, dist, _)| dist <= GRASP_DISTANCE)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)));
        if let Some((i, _, _)) = candidate {
            next.objects[i].held = true;
        }
    }
    for o in next.objects.iter_mut().filter(|o| o.held) {
        o.center = grip;
    }
    next.step_index = state.step_index + 1;
    next
}
