use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::run::SessionError;
use super::UtteranceItem;
use crate::behavior::{validate_face, validate_trajectory, CannedStage, Joint, JointTrajectory, RobotProfile};
use crate::domain::{FaceExpression, GesturePrimitive, GestureTiming};
use crate::pipeline::StoryPackage;
use crate::provider::{ProviderError, Providers, VoiceParams};

/// Timing of one spoken item on the session clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackRecord {
    pub text: String,
    pub requested_ms: u64,
    pub first_chunk_ready_ms: u64,
    pub full_ready_ms: u64,
    pub playback_start_ms: u64,
    pub playback_end_ms: u64,
    pub face: FaceExpression,
    pub face_start_ms: u64,
    pub gesture: GesturePrimitive,
    pub gesture_start_ms: u64,
}

/// Speak one item. Playback starts on the first chunk and each later chunk
/// plays as soon as both it is ready and the previous one has finished.
pub fn deliver_utterance(
    item: &UtteranceItem,
    providers: &Providers,
    voice: &VoiceParams,
    now_ms: u64,
) -> Result<PlaybackRecord, ProviderError> {
    if item.text.trim().is_empty() {
        return Err(ProviderError::Precondition("utterance text is empty".to_string()));
    }
    let synthesis = providers.speech.synthesize_speech(&item.text, voice)?;
    synthesis.handle.validate()?;
    let first = now_ms + synthesis.first_chunk_ready_ms();
    let mut cursor = first;
    for chunk in &synthesis.chunks {
        cursor = cursor.max(now_ms + chunk.ready_at_ms) + (chunk.end_ms - chunk.start_ms);
    }
    let end = cursor.max(first + synthesis.handle.duration_ms);
    let gesture_start_ms = match item.gesture.timing {
        GestureTiming::Onset => first,
        GestureTiming::Middle => first + (end - first) / 2,
        GestureTiming::End => end,
    };
    Ok(PlaybackRecord {
        text: item.text.clone(),
        requested_ms: now_ms,
        first_chunk_ready_ms: first,
        full_ready_ms: now_ms + synthesis.full_ready_ms,
        playback_start_ms: first,
        playback_end_ms: end,
        face: item.face,
        face_start_ms: first,
        gesture: item.gesture,
        gesture_start_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub stage_index: usize,
    pub scheduled_ms: u64,
    pub dispatched_ms: u64,
    pub target_deg: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryPlayback {
    pub story_id: String,
    pub playback_start_ms: u64,
    pub audio_end_ms: u64,
    pub stages: Vec<DispatchRecord>,
    /// Session times at which each face keyframe was applied.
    pub keyframes_ms: Vec<u64>,
    /// When narration, face and body have all finished.
    pub end_ms: u64,
}

/// Narrate a packaged story with its compiled programs. Audio is already
/// synthesized, so playback starts immediately.
pub fn deliver_story(package: &StoryPackage, profile: &RobotProfile, now_ms: u64) -> Result<StoryPlayback, SessionError> {
    let id = package.story.story_id.clone();
    let (Some(audio), Some(program)) = (&package.audio, &package.behavior) else {
        return Err(SessionError::CompilationMissing(id));
    };
    for report in [validate_trajectory(&program.body, profile, audio), validate_face(&program.face, profile, audio)] {
        if !report.is_empty() {
            return Err(SessionError::InvalidProgram { story_id: id, report: report.to_string() });
        }
    }
    let stages: Vec<DispatchRecord> = program
        .body
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| DispatchRecord {
            stage_index: i,
            scheduled_ms: now_ms + s.t_start_ms,
            dispatched_ms: now_ms + s.t_start_ms,
            target_deg: s.target_deg,
        })
        .collect();
    let keyframes_ms: Vec<u64> = program.face.keyframes.iter().map(|k| now_ms + k.t_ms).collect();
    let audio_end_ms = now_ms + audio.duration_ms;
    let end_ms = audio_end_ms.max(now_ms + program.body.end_ms()).max(keyframes_ms.last().copied().unwrap_or(now_ms));
    Ok(StoryPlayback { story_id: id, playback_start_ms: now_ms, audio_end_ms, stages, keyframes_ms, end_ms })
}

/// Run a canned animation from the rest pose. Returns the trajectory on the
/// session clock.
pub fn deliver_canned(stages: &[CannedStage], profile: &RobotProfile, now_ms: u64) -> JointTrajectory {
    let mut traj = JointTrajectory::empty(profile.rest_deg);
    let mut pose = profile.rest_deg;
    let mut t = now_ms;
    for s in stages {
        for (joint, v) in &s.targets {
            if let Some(j) = Joint::parse(joint) {
                pose[j.index()] = profile.limits.get(j).clamp(*v);
            }
        }
        let d = s.duration_ms.max(profile.min_stage_ms);
        traj.push_to(t, d, pose);
        t += d;
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FaceName, GestureName};

    fn item(text: &str, timing: GestureTiming) -> UtteranceItem {
        UtteranceItem {
            text: text.into(),
            face: FaceExpression::new(FaceName::Happy, 0.7),
            gesture: GesturePrimitive { name: GestureName::Nod, timing },
        }
    }

    #[test]
    fn twelve_words_start_on_first_chunk() {
        let p = Providers::mock();
        let r = deliver_utterance(
            &item("one two three four five six seven eight nine ten eleven twelve", GestureTiming::Onset),
            &p,
            &VoiceParams::default(),
            1000,
        )
        .unwrap();
        // Mock schedule: first chunk of 8 words ready at 200 + 15 * 8.
        assert_eq!(r.playback_start_ms, 1000 + 320);
        assert!(r.playback_start_ms < r.full_ready_ms);
        assert_eq!(r.playback_end_ms, r.playback_start_ms + 12 * 450);
        assert!(r.gesture_start_ms.abs_diff(r.playback_start_ms) <= 100);
        assert!(r.face_start_ms.abs_diff(r.playback_start_ms) <= 100);
    }

    #[test]
    fn empty_text_rejected() {
        let e = deliver_utterance(&item("  ", GestureTiming::Onset), &Providers::mock(), &VoiceParams::default(), 0);
        assert!(matches!(e, Err(ProviderError::Precondition(_))));
    }

    #[test]
    fn sequential_items_do_not_overlap() {
        let p = Providers::mock();
        let a = deliver_utterance(&item("Wow, great job!", GestureTiming::Onset), &p, &VoiceParams::default(), 0).unwrap();
        let b =
            deliver_utterance(&item("What happened next?", GestureTiming::End), &p, &VoiceParams::default(), a.playback_end_ms).unwrap();
        assert!(b.playback_start_ms >= a.playback_end_ms);
        assert_eq!(b.gesture_start_ms, b.playback_end_ms);
    }

    #[test]
    fn canned_wake_is_valid() {
        let profile = RobotProfile::default();
        let t = deliver_canned(&profile.wake, &profile, 0);
        assert_eq!(t.stages.len(), profile.wake.len());
        assert_eq!(t.end_ms(), 1700);
        assert_eq!(t.stages.last().unwrap().target_deg, [0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
