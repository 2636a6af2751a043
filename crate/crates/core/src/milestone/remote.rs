//! HTTP client for an external annotation service.
//!
//! Request body:
//! `{"episode_id": str, "segments": [{"from", "to", "skill"}], "thumbnails": [base64]}`
//! with one thumbnail (the 256 head-view palette codes of the segment's last
//! frame) per segment. Response body: `{"segments": [{"from", "to", "subtask"}]}`.

use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::plan::{AnnotatedSegment, Annotator};
use super::skills::{LabeledSegment, SkillLibrary};
use super::MilestoneError;
use crate::toyworld::Episode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_secs: f64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig { endpoint: String::new(), timeout_secs: 30.0, retries: 3, backoff_ms: 250 }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireSegment {
    pub from: usize,
    pub to: usize,
    pub skill: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub episode_id: String,
    pub segments: Vec<WireSegment>,
    pub thumbnails: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationResponse {
    pub segments: Vec<AnnotatedSegment>,
}

/// Stable identifier of an episode in annotation requests.
pub fn episode_id(episode: &Episode) -> String {
    format!("{}-{:05}-{:016x}", episode.scenario.kind, episode.scenario.id, episode.seed)
}

pub struct RemoteAnnotator {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteAnnotator {
    pub fn new(config: RemoteConfig) -> Result<Self, MilestoneError> {
        if config.endpoint.is_empty() {
            return Err(MilestoneError::Remote("no annotation endpoint configured".into()));
        }
        if !(config.timeout_secs > 0.0) {
            return Err(MilestoneError::Remote("timeout must be positive".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(true)
            .build()
            .into();
        Ok(RemoteAnnotator { config, agent })
    }

    pub fn request(
        episode: &Episode,
        segments: &[LabeledSegment],
        library: &SkillLibrary,
    ) -> AnnotationRequest {
        AnnotationRequest {
            episode_id: episode_id(episode),
            segments: segments
                .iter()
                .map(|s| WireSegment {
                    from: s.from,
                    to: s.to,
                    skill: library.get(s.skill_id).map_or_else(String::new, |k| k.verb.clone()),
                })
                .collect(),
            thumbnails: segments
                .iter()
                .map(|s| STANDARD.encode(episode.rasters[s.to][0].cells))
                .collect(),
        }
    }

    fn send_once(&self, body: &AnnotationRequest) -> Result<AnnotationResponse, String> {
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .send_json(body)
            .map_err(|e| e.to_string())?;
        response.body_mut().read_json::<AnnotationResponse>().map_err(|e| e.to_string())
    }

    /// Sends one request, retrying failed attempts with exponential backoff.
    pub fn send(&self, body: &AnnotationRequest) -> Result<AnnotationResponse, MilestoneError> {
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1)));
            }
            match self.send_once(body) {
                Ok(r) => return Ok(r),
                Err(e) => last = e,
            }
        }
        Err(MilestoneError::Remote(format!(
            "{} failed after {} attempts: {last}",
            body.episode_id,
            self.config.retries + 1
        )))
    }

    /// Annotates a batch in order. On failure the error carries every result
    /// completed so far so the caller can resume from the failed index.
    pub fn annotate_batch(
        &self,
        items: &[(&Episode, Vec<LabeledSegment>)],
        library: &SkillLibrary,
    ) -> Result<Vec<Vec<AnnotatedSegment>>, BatchError> {
        let mut done = Vec::with_capacity(items.len());
        for (i, (episode, segments)) in items.iter().enumerate() {
            match self.annotate(episode, segments, library) {
                Ok(a) => done.push(a),
                Err(source) => return Err(BatchError { completed: done, failed_index: i, source }),
            }
        }
        Ok(done)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("annotation batch stopped at item {failed_index} after {} completed: {source}", completed.len())]
pub struct BatchError {
    pub completed: Vec<Vec<AnnotatedSegment>>,
    pub failed_index: usize,
    pub source: MilestoneError,
}

impl Annotator for RemoteAnnotator {
    fn annotate(
        &self,
        episode: &Episode,
        segments: &[LabeledSegment],
        library: &SkillLibrary,
    ) -> Result<Vec<AnnotatedSegment>, MilestoneError> {
        let body = Self::request(episode, segments, library);
        Ok(self.send(&body)?.segments)
    }
}
