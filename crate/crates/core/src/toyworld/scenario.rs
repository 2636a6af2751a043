//! Scenario descriptors and the four generator families.
//!
//! Objects sit on a fixed grid of ten slots in the lower half of the table and
//! the plate on one of three slots in the upper half. A layout picks five
//! object slots and a plate slot. Fifteen training layouts carry the five
//! training objects (codes 16..=20); a separate pool of thirty-two layouts is
//! reserved for the novel family.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::state::{Plate, TableObject, WorldState, FIRST_OBJECT_CODE, LAST_OBJECT_CODE, PLATE_RADIUS};
use super::WorldError;
use crate::rng::{derive_seed, derived_rng, rng_from_seed};

pub const TRAINING_CODES: [u8; 5] = [16, 17, 18, 19, 20];
pub const HELD_OUT_CODES: [u8; 11] = [21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31];
pub const TRAINING_LAYOUTS: usize = 15;
pub const NOVEL_LAYOUTS: usize = 32;
pub const TABLECLOTHS: u8 = 8;
pub const START_JITTER: f32 = 0.03;
pub const START_HEIGHT: f32 = 0.5;

const OBJECT_SLOT_COLS: [u8; 5] = [2, 5, 8, 11, 14];
const OBJECT_SLOT_ROWS: [u8; 2] = [2, 5];
const PLATE_SLOT_COLS: [u8; 3] = [3, 8, 12];
const PLATE_SLOT_ROW: u8 = 11;
const TRAINING_LAYOUT_SEED: u64 = 0x7ab1_e5e7;
const NOVEL_LAYOUT_SEED: u64 = 0x0dd_1a70;

const OBJECTS: [(&str, &str); 16] = [
    ("apple", "fruit"),
    ("banana", "fruit"),
    ("cup", "container"),
    ("egg", "other"),
    ("orange", "fruit"),
    ("bottle", "bottle"),
    ("bread", "bread"),
    ("box", "box"),
    ("carton", "box"),
    ("lemon", "fruit"),
    ("grape", "fruit"),
    ("can", "bottle"),
    ("sponge", "other"),
    ("pear", "fruit"),
    ("mug", "container"),
    ("peach", "fruit"),
];

pub fn object_name(code: u8) -> Option<&'static str> {
    object_entry(code).map(|e| e.0)
}

pub fn object_category(code: u8) -> Option<&'static str> {
    object_entry(code).map(|e| e.1)
}

fn object_entry(code: u8) -> Option<(&'static str, &'static str)> {
    (FIRST_OBJECT_CODE..=LAST_OBJECT_CODE)
        .contains(&code)
        .then(|| OBJECTS[(code - FIRST_OBJECT_CODE) as usize])
}

fn cell_center(col: u8, row: u8) -> [f32; 2] {
    [(col as f32 + 0.5) / 16.0, (row as f32 + 0.5) / 16.0]
}

pub fn object_slot(index: usize) -> [f32; 2] {
    let col = OBJECT_SLOT_COLS[index % OBJECT_SLOT_COLS.len()];
    let row = OBJECT_SLOT_ROWS[index / OBJECT_SLOT_COLS.len()];
    cell_center(col, row)
}

pub fn plate_slot(index: usize) -> [f32; 2] {
    cell_center(PLATE_SLOT_COLS[index], PLATE_SLOT_ROW)
}

pub const OBJECT_SLOTS: usize = OBJECT_SLOT_COLS.len() * OBJECT_SLOT_ROWS.len();
pub const PLATE_SLOTS: usize = PLATE_SLOT_COLS.len();

/// Five object slots (in object-id order) plus a plate slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    pub object_slots: [usize; 5],
    pub plate_slot: usize,
}

fn random_layout(rng: &mut crate::rng::Rng) -> Layout {
    let mut slots: Vec<usize> = (0..OBJECT_SLOTS).collect();
    slots.shuffle(rng);
    let mut object_slots = [0; 5];
    object_slots.copy_from_slice(&slots[..5]);
    Layout { object_slots, plate_slot: rng.random_range(0..PLATE_SLOTS) }
}

/// The fixed training layouts; layout `k` also fixes tablecloth `1 + k % 8`
/// and the code order of the five training objects.
pub fn training_layouts() -> Vec<(Layout, [u8; 5], u8)> {
    let mut rng = rng_from_seed(TRAINING_LAYOUT_SEED);
    (0..TRAINING_LAYOUTS)
        .map(|k| {
            let layout = random_layout(&mut rng);
            let mut codes = TRAINING_CODES;
            codes.shuffle(&mut rng);
            (layout, codes, 1 + (k as u8 % TABLECLOTHS))
        })
        .collect()
}

/// Layouts used only by the novel family; none coincides with a training
/// layout up to slot order.
pub fn novel_layouts() -> Vec<Layout> {
    let canon = |l: &Layout| {
        let mut s = l.object_slots;
        s.sort_unstable();
        (s, l.plate_slot)
    };
    let mut seen: HashSet<_> = training_layouts().iter().map(|(l, _, _)| canon(l)).collect();
    let mut rng = rng_from_seed(NOVEL_LAYOUT_SEED);
    let mut out = Vec::with_capacity(NOVEL_LAYOUTS);
    while out.len() < NOVEL_LAYOUTS {
        let layout = random_layout(&mut rng);
        if seen.insert(canon(&layout)) {
            out.push(layout);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    InDomain,
    UnseenDistractor,
    UnseenTarget,
    Novel,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::InDomain,
        ScenarioKind::UnseenDistractor,
        ScenarioKind::UnseenTarget,
        ScenarioKind::Novel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::InDomain => "in_domain",
            ScenarioKind::UnseenDistractor => "unseen_distractor",
            ScenarioKind::UnseenTarget => "unseen_target",
            ScenarioKind::Novel => "novel",
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = WorldError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| WorldError::InvalidScenario(format!("unknown scenario kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    pub code: u8,
    pub center: [f32; 2],
}

/// Everything needed to build the initial world state of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDescriptor {
    pub id: u32,
    pub kind: ScenarioKind,
    pub layout: u32,
    pub seed: u64,
    pub target_id: u32,
    pub objects: Vec<ObjectSpec>,
    pub plate_center: [f32; 2],
    pub tablecloth: u8,
    pub start_pose: [f32; 3],
}

impl ScenarioDescriptor {
    pub fn target(&self) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == self.target_id)
    }

    pub fn target_code(&self) -> u8 {
        self.target().map_or(0, |o| o.code)
    }

    pub fn target_name(&self) -> &'static str {
        object_name(self.target_code()).unwrap_or("object")
    }

    pub fn instruction(&self) -> String {
        format!("Put the {} on the plate", self.target_name())
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let target = self.target().ok_or_else(|| {
            WorldError::InvalidScenario(format!("target id {} not on the table", self.target_id))
        })?;
        let plate = Plate { center: self.plate_center, radius: PLATE_RADIUS };
        if plate.contains(target.center) {
            return Err(WorldError::InvalidScenario(format!(
                "target {} is occluded by the plate at spawn",
                self.target_id
            )));
        }
        self.build_state().validate()
    }

    fn build_state(&self) -> WorldState {
        WorldState {
            gripper_pose: self.start_pose,
            gripper_open: 1.0,
            objects: self
                .objects
                .iter()
                .map(|o| TableObject { id: o.id, code: o.code, center: o.center, held: false })
                .collect(),
            plate: Some(Plate { center: self.plate_center, radius: PLATE_RADIUS }),
            tablecloth: self.tablecloth,
            step_index: 0,
            rng_seed: self.seed,
        }
    }

    pub fn initial_state(&self) -> Result<WorldState, WorldError> {
        self.validate()?;
        Ok(self.build_state())
    }
}

fn descriptor(
    id: u32,
    kind: ScenarioKind,
    layout_index: usize,
    layout: &Layout,
    codes: [u8; 5],
    target: usize,
    tablecloth: u8,
    seed: u64,
) -> ScenarioDescriptor {
    let mut rng = rng_from_seed(seed);
    let jitter = |rng: &mut crate::rng::Rng| rng.random_range(-START_JITTER..=START_JITTER);
    let start_pose = [0.5 + jitter(&mut rng), 0.5 + jitter(&mut rng), START_HEIGHT];
    ScenarioDescriptor {
        id,
        kind,
        layout: layout_index as u32,
        seed,
        target_id: target as u32,
        objects: (0..5)
            .map(|i| ObjectSpec { id: i as u32, code: codes[i], center: object_slot(layout.object_slots[i]) })
            .collect(),
        plate_center: plate_slot(layout.plate_slot),
        tablecloth,
        start_pose,
    }
}

/// Number of distinct (target code, tablecloth, layout) combinations the
/// novel family can produce.
pub fn novel_capacity() -> usize {
    HELD_OUT_CODES.len() * TABLECLOTHS as usize * NOVEL_LAYOUTS
}

/// Generates `count` scenarios of one family. Output is a pure function of
/// `(kind, count, seed)`.
pub fn gen_scenarios(
    kind: ScenarioKind,
    count: usize,
    seed: u64,
) -> Result<Vec<ScenarioDescriptor>, WorldError> {
    if count == 0 {
        return Err(WorldError::InvalidScenario("count must be at least 1".into()));
    }
    if kind == ScenarioKind::Novel && count > novel_capacity() {
        return Err(WorldError::CapacityExceeded { requested: count, cap: novel_capacity() });
    }
    let mut rng = derived_rng(seed, &[kind.tag()]);
    let training = training_layouts();
    let novel = if kind == ScenarioKind::Novel { novel_layouts() } else { Vec::new() };
    let mut used = HashSet::new();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let scenario_seed = derive_seed(seed, &[kind.tag(), i as u64]);
        let d = match kind {
            ScenarioKind::Novel => loop {
                let layout_index = rng.random_range(0..NOVEL_LAYOUTS);
                let target_code = *HELD_OUT_CODES.choose(&mut rng).expect("non-empty");
                let tablecloth = rng.random_range(1..=TABLECLOTHS);
                if !used.insert((target_code, tablecloth, layout_index)) {
                    continue;
                }
                let target = rng.random_range(0..5);
                let mut others: Vec<u8> = (FIRST_OBJECT_CODE..=LAST_OBJECT_CODE)
                    .filter(|&c| c != target_code)
                    .collect();
                others.shuffle(&mut rng);
                let mut codes = [0u8; 5];
                let mut next = others.into_iter();
                for (slot, code) in codes.iter_mut().enumerate() {
                    *code = if slot == target { target_code } else { next.next().expect("enough codes") };
                }
                break descriptor(
                    i as u32,
                    kind,
                    layout_index,
                    &novel[layout_index],
                    codes,
                    target,
                    tablecloth,
                    scenario_seed,
                );
            },
            _ => {
                let layout_index = rng.random_range(0..TRAINING_LAYOUTS);
                let (layout, mut codes, tablecloth) = training[layout_index].clone();
                let target = rng.random_range(0..5);
                let mut held_out = HELD_OUT_CODES.to_vec();
                held_out.shuffle(&mut rng);
                match kind {
                    ScenarioKind::UnseenTarget => codes[target] = held_out[0],
                    ScenarioKind::UnseenDistractor => {
                        let swaps = rng.random_range(1..=3);
                        let mut distractors: Vec<usize> = (0..5).filter(|&j| j != target).collect();
                        distractors.shuffle(&mut rng);
                        for (k, &j) in distractors.iter().take(swaps).enumerate() {
                            codes[j] = held_out[k];
                        }
                    }
                    _ => {}
                }
                descriptor(i as u32, kind, layout_index, &layout, codes, target, tablecloth, scenario_seed)
            }
        };
        d.validate()?;
        out.push(d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_object_slot_and_plate_slot_appears_in_training() {
        let layouts = training_layouts();
        let slots: HashSet<usize> = layouts.iter().flat_map(|(l, _, _)| l.object_slots).collect();
        let plates: HashSet<usize> = layouts.iter().map(|(l, _, _)| l.plate_slot).collect();
        assert_eq!(slots.len(), OBJECT_SLOTS);
        assert_eq!(plates.len(), PLATE_SLOTS);
    }

    #[test]
    fn slots_never_overlap_the_plate() {
        for o in 0..OBJECT_SLOTS {
            for p in 0..PLATE_SLOTS {
                let plate = Plate { center: plate_slot(p), radius: PLATE_RADIUS };
                assert!(!plate.contains(object_slot(o)));
            }
        }
    }

    #[test]
    fn zero_count_and_over_capacity_are_rejected() {
        assert!(gen_scenarios(ScenarioKind::InDomain, 0, 1).is_err());
        let err = gen_scenarios(ScenarioKind::Novel, novel_capacity() + 1, 1).unwrap_err();
        assert!(err.to_string().contains(&novel_capacity().to_string()));
    }

    #[test]
    fn kinds_parse_from_their_names() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.as_str().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!("bogus".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn occluded_target_is_rejected() {
        let mut d = gen_scenarios(ScenarioKind::InDomain, 1, 3).unwrap().remove(0);
        let t = d.target_id as usize;
        d.objects[t].center = d.plate_center;
        assert!(matches!(d.validate(), Err(WorldError::InvalidScenario(_))));
    }
}
