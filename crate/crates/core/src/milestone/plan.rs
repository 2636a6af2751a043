//! Milestone plans, segment merging and the annotator contract.

use serde::{Deserialize, Serialize};

use super::skills::{check_boundaries, LabeledSegment, SkillLibrary};
use super::MilestoneError;
use crate::toyworld::Episode;

/// Upper bound on plan length; each stage contributes two goal images and a
/// sequence holds at most sixteen.
pub const MAX_SEGMENTS: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub subtask: String,
    pub from: usize,
    pub to: usize,
    /// Goal frame for the `[head, wrist]` views.
    pub goal_frames: [usize; 2],
    pub skill_id: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MilestonePlan {
    pub instruction: String,
    pub segments: Vec<Segment>,
}

impl MilestonePlan {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn boundaries(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.segments.iter().map(|s| s.from).collect();
        if let Some(last) = self.segments.last() {
            b.push(last.to);
        }
        b
    }

    pub fn labeled(&self) -> Vec<LabeledSegment> {
        self.segments
            .iter()
            .map(|s| LabeledSegment { from: s.from, to: s.to, skill_id: s.skill_id })
            .collect()
    }

    /// Stage whose span contains frame `t`; a shared boundary frame belongs
    /// to the later stage, except the final frame which belongs to the last.
    pub fn stage_of(&self, t: usize) -> usize {
        self.segments
            .iter()
            .position(|s| s.from <= t && t < s.to)
            .unwrap_or(self.segments.len().saturating_sub(1))
    }

    pub fn validate(&self, episode_len: usize) -> Result<(), MilestoneError> {
        let n = self.segments.len();
        if n == 0 || n > MAX_SEGMENTS {
            return Err(MilestoneError::InvalidSegments(format!(
                "{n} segments, expected 1..={MAX_SEGMENTS}"
            )));
        }
        check_boundaries(&self.boundaries(), episode_len)?;
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 && self.segments[i - 1].to != s.from {
                return Err(MilestoneError::InvalidSegments(format!("gap before segment {i}")));
            }
            if s.goal_frames.iter().any(|&g| g < s.from || g > s.to) {
                return Err(MilestoneError::InvalidSegments(format!(
                    "goal frame of segment {i} outside its span"
                )));
            }
        }
        Ok(())
    }
}

/// Annotated span returned by an annotator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSegment {
    pub from: usize,
    pub to: usize,
    pub subtask: String,
}

/// Maps merged, skill-labeled segments to subtask texts. An annotator may
/// coarsen the segmentation but only along the boundaries it was given.
pub trait Annotator {
    fn annotate(
        &self,
        episode: &Episode,
        segments: &[LabeledSegment],
        library: &SkillLibrary,
    ) -> Result<Vec<AnnotatedSegment>, MilestoneError>;
}

/// Fills each skill's template with the target object's name.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleAnnotator;

impl Annotator for RuleAnnotator {
    fn annotate(
        &self,
        episode: &Episode,
        segments: &[LabeledSegment],
        library: &SkillLibrary,
    ) -> Result<Vec<AnnotatedSegment>, MilestoneError> {
        let object = episode.scenario.target_name();
        segments
            .iter()
            .map(|s| {
                let subtask = library
                    .describe(s.skill_id, object)
                    .ok_or(MilestoneError::UnknownSkill(s.skill_id))?;
                Ok(AnnotatedSegment { from: s.from, to: s.to, subtask })
            })
            .collect()
    }
}

fn merge_equal(segments: Vec<LabeledSegment>) -> Vec<LabeledSegment> {
    let mut out: Vec<LabeledSegment> = Vec::with_capacity(segments.len());
    for s in segments {
        match out.last_mut() {
            Some(prev) if prev.skill_id == s.skill_id => prev.to = s.to,
            _ => out.push(s),
        }
    }
    out
}

/// Folds runs of auxiliary skills into the following primary segment (or the
/// preceding one at the end), merges equal neighbours and enforces the
/// segment cap by repeatedly merging the shortest segment into its shorter
/// neighbour.
pub fn consolidate(segments: &[LabeledSegment], library: &SkillLibrary) -> Vec<LabeledSegment> {
    let mut out: Vec<LabeledSegment> = Vec::with_capacity(segments.len());
    let mut pending: Option<usize> = None;
    for s in segments {
        if library.is_auxiliary(s.skill_id) {
            pending.get_or_insert(s.from);
            continue;
        }
        let from = pending.take().unwrap_or(s.from);
        out.push(LabeledSegment { from, ..*s });
    }
    if let Some(start) = pending {
        match out.last_mut() {
            Some(prev) => prev.to = segments.last().expect("non-empty").to,
            None => out.extend(segments.iter().filter(|s| s.from >= start).copied()),
        }
    }
    let mut out = merge_equal(out);
    while out.len() > MAX_SEGMENTS {
        let len = |s: &LabeledSegment| s.to - s.from;
        let i = (0..out.len()).min_by_key(|&i| (len(&out[i]), i)).expect("non-empty");
        let j = match (i.checked_sub(1), (i + 1 < out.len()).then_some(i + 1)) {
            (Some(p), Some(n)) => {
                if len(&out[n]) < len(&out[p]) {
                    n
                } else {
                    p
                }
            }
            (Some(p), None) => p,
            (None, Some(n)) => n,
            (None, None) => break,
        };
        let (lo, hi) = (i.min(j), i.max(j));
        out[lo] = LabeledSegment { from: out[lo].from, to: out[hi].to, skill_id: out[j].skill_id };
        out.remove(hi);
        out = merge_equal(out);
    }
    out
}

/// Merges labeled segments, asks the annotator for texts and validates the
/// resulting plan. Goal frames are each segment's last frame.
pub fn merge_and_describe(
    episode: &Episode,
    labeled: &[LabeledSegment],
    annotator: &dyn Annotator,
    library: &SkillLibrary,
) -> Result<MilestonePlan, MilestoneError> {
    if labeled.is_empty() {
        return Err(MilestoneError::InvalidSegments("no segments".into()));
    }
    let mut bounds: Vec<usize> = labeled.iter().map(|s| s.from).collect();
    bounds.push(labeled[labeled.len() - 1].to);
    check_boundaries(&bounds, episode.len())?;
    if labeled.windows(2).any(|w| w[0].to != w[1].from) {
        return Err(MilestoneError::InvalidSegments("segments are not contiguous".into()));
    }
    let merged = consolidate(labeled, library);
    let annotated = annotator.annotate(episode, &merged, library)?;
    let allowed: Vec<usize> = merged.iter().map(|s| s.from).chain([episode.last_frame()]).collect();
    let mut segments = Vec::with_capacity(annotated.len());
    for a in &annotated {
        for b in [a.from, a.to] {
            if allowed.binary_search(&b).is_err() {
                return Err(MilestoneError::InvalidSegments(format!(
                    "annotator introduced boundary {b}"
                )));
            }
        }
        let skill_id = merged
            .iter()
            .find(|m| m.from <= a.from && a.from < m.to)
            .map_or(merged[merged.len() - 1].skill_id, |m| m.skill_id);
        segments.push(Segment {
            subtask: a.subtask.clone(),
            from: a.from,
            to: a.to,
            goal_frames: [a.to, a.to],
            skill_id,
        });
    }
    let plan = MilestonePlan { instruction: episode.instruction.clone(), segments };
    plan.validate(episode.len())?;
    Ok(plan)
}
