//! Recorded trajectories and their JSON file format.
//!
//! A state serializes as one flat numeric array:
//! `[x, y, z, open, tablecloth, step_index, rng_seed, has_plate, plate_x,
//! plate_y, plate_radius, n_objects, (id, code, cx, cy, held) * n_objects]`.
//! Floats are written in the shortest decimal form that parses back to the
//! same 32-bit value, so replays from a loaded file are bit-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::render::{render, Observation, Raster, View};
use super::scenario::ScenarioDescriptor;
use super::state::{step, Action, Plate, TableObject, WorldState};
use super::WorldError;
use crate::milestone::MilestonePlan;

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub instruction: String,
    pub seed: u64,
    pub scenario: ScenarioDescriptor,
    pub states: Vec<WorldState>,
    pub actions: Vec<Action>,
    pub rasters: Vec<Observation>,
    pub milestones: Option<MilestonePlan>,
}

impl Episode {
    /// Builds an episode from a state/action trace, rendering every frame.
    pub fn record(
        scenario: ScenarioDescriptor,
        states: Vec<WorldState>,
        actions: Vec<Action>,
    ) -> Result<Episode, WorldError> {
        if states.is_empty() || actions.len() + 1 != states.len() {
            return Err(WorldError::InvalidEpisode(format!(
                "{} states do not match {} actions",
                states.len(),
                actions.len()
            )));
        }
        let rasters = states.iter().map(render).collect();
        Ok(Episode {
            instruction: scenario.instruction(),
            seed: scenario.seed,
            scenario,
            states,
            actions,
            rasters,
            milestones: None,
        })
    }

    /// Number of frames.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_frame(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn target_id(&self) -> u32 {
        self.scenario.target_id
    }

    pub fn poses(&self) -> Vec<[f32; 3]> {
        self.states.iter().map(|s| s.gripper_pose).collect()
    }

    pub fn openness(&self) -> Vec<f32> {
        self.states.iter().map(|s| s.gripper_open).collect()
    }

    /// Checks length consistency, replay determinism and raster fidelity.
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.states.is_empty()
            || self.actions.len() + 1 != self.states.len()
            || self.rasters.len() != self.states.len()
        {
            return Err(WorldError::InvalidEpisode(format!(
                "inconsistent lengths: {} states, {} actions, {} raster pairs",
                self.states.len(),
                self.actions.len(),
                self.rasters.len()
            )));
        }
        for (t, s) in self.states.iter().enumerate() {
            s.validate()?;
            if t > 0 && step(&self.states[t - 1], &self.actions[t - 1]) != *s {
                return Err(WorldError::InvalidEpisode(format!("replay diverges at frame {t}")));
            }
            if render(s) != self.rasters[t] {
                return Err(WorldError::InvalidEpisode(format!("raster mismatch at frame {t}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&EpisodeFile::from(self)).expect("episode serializes")
    }

    pub fn from_json(text: &str) -> Result<Episode, WorldError> {
        let file: EpisodeFile = serde_json::from_str(text)
            .map_err(|e| WorldError::InvalidEpisode(format!("malformed episode JSON: {e}")))?;
        let episode = file.into_episode()?;
        episode.validate()?;
        Ok(episode)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| WorldError::InvalidEpisode(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Episode, WorldError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorldError::InvalidEpisode(format!("cannot read {}: {e}", path.display())))?;
        Episode::from_json(&text)
            .map_err(|e| WorldError::InvalidEpisode(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Num {
    Int(u64),
    Float(f32),
}

impl Num {
    fn float(self) -> f32 {
        match self {
            Num::Int(v) => v as f32,
            Num::Float(v) => v,
        }
    }

    fn int(self) -> Result<u64, WorldError> {
        match self {
            Num::Int(v) => Ok(v),
            Num::Float(v) => Err(WorldError::InvalidEpisode(format!("expected an integer, got {v}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpisodeFile {
    instruction: String,
    seed: u64,
    scenario: ScenarioDescriptor,
    states: Vec<Vec<Num>>,
    actions: Vec<Action>,
    rasters: Vec<[Vec<u8>; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    milestones: Option<MilestonePlan>,
}

fn encode_state(s: &WorldState) -> Vec<Num> {
    let mut v = vec![
        Num::Float(s.gripper_pose[0]),
        Num::Float(s.gripper_pose[1]),
        Num::Float(s.gripper_pose[2]),
        Num::Float(s.gripper_open),
        Num::Int(s.tablecloth as u64),
        Num::Int(s.step_index as u64),
        Num::Int(s.rng_seed),
    ];
    match &s.plate {
        Some(p) => v.extend([Num::Int(1), Num::Float(p.center[0]), Num::Float(p.center[1]), Num::Float(p.radius)]),
        None => v.extend([Num::Int(0), Num::Float(0.0), Num::Float(0.0), Num::Float(0.0)]),
    }
    v.push(Num::Int(s.objects.len() as u64));
    for o in &s.objects {
        v.extend([
            Num::Int(o.id as u64),
            Num::Int(o.code as u64),
            Num::Float(o.center[0]),
            Num::Float(o.center[1]),
            Num::Int(o.held as u64),
        ]);
    }
    v
}

fn decode_state(v: &[Num]) -> Result<WorldState, WorldError> {
    const HEAD: usize = 12;
    if v.len() < HEAD {
        return Err(WorldError::InvalidEpisode(format!("state array has {} entries", v.len())));
    }
    let n = v[11].int()? as usize;
    if v.len() != HEAD + 5 * n {
        return Err(WorldError::InvalidEpisode(format!(
            "state array declares {n} objects but has {} entries",
            v.len()
        )));
    }
    let small = |x: Num, what: &str| -> Result<u64, WorldError> {
        let i = x.int()?;
        if i > u32::MAX as u64 {
            return Err(WorldError::InvalidEpisode(format!("{what} out of range")));
        }
        Ok(i)
    };
    let plate = match v[7].int()? {
        0 => None,
        1 => Some(Plate { center: [v[8].float(), v[9].float()], radius: v[10].float() }),
        other => return Err(WorldError::InvalidEpisode(format!("plate flag {other}"))),
    };
    let objects = v[HEAD..]
        .chunks_exact(5)
        .map(|o| {
            Ok(TableObject {
                id: small(o[0], "object id")? as u32,
                code: u8::try_from(o[1].int()?).map_err(|_| WorldError::InvalidEpisode("object code".into()))?,
                center: [o[2].float(), o[3].float()],
                held: match o[4].int()? {
                    0 => false,
                    1 => true,
                    other => return Err(WorldError::InvalidEpisode(format!("held flag {other}"))),
                },
            })
        })
        .collect::<Result<Vec<_>, WorldError>>()?;
    Ok(WorldState {
        gripper_pose: [v[0].float(), v[1].float(), v[2].float()],
        gripper_open: v[3].float(),
        objects,
        plate,
        tablecloth: u8::try_from(v[4].int()?).map_err(|_| WorldError::InvalidEpisode("tablecloth".into()))?,
        step_index: small(v[5], "step index")? as u32,
        rng_seed: v[6].int()?,
    })
}

impl From<&Episode> for EpisodeFile {
    fn from(e: &Episode) -> Self {
        EpisodeFile {
            instruction: e.instruction.clone(),
            seed: e.seed,
            scenario: e.scenario.clone(),
            states: e.states.iter().map(encode_state).collect(),
            actions: e.actions.clone(),
            rasters: e
                .rasters
                .iter()
                .map(|[h, w]| [h.cells.to_vec(), w.cells.to_vec()])
                .collect(),
            milestones: e.milestones.clone(),
        }
    }
}

impl EpisodeFile {
    fn into_episode(self) -> Result<Episode, WorldError> {
        let states = self.states.iter().map(|s| decode_state(s)).collect::<Result<Vec<_>, _>>()?;
        let rasters = self
            .rasters
            .iter()
            .map(|[h, w]| Ok([Raster::from_cells(View::Head, h)?, Raster::from_cells(View::Wrist, w)?]))
            .collect::<Result<Vec<_>, WorldError>>()?;
        Ok(Episode {
            instruction: self.instruction,
            seed: self.seed,
            scenario: self.scenario,
            states,
            actions: self.actions,
            rasters,
            milestones: self.milestones,
        })
    }
}
