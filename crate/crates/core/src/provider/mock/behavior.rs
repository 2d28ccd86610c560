//! Segmentation, cue extraction and behavior description mocks.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::behavior::{Channel, CueKind};
use crate::domain::normalize_token;
use crate::provider::wire::{
    self, var, CueContext, CueDraft, CuesDraft, DescriptionDraft, DescriptionsDraft, SegmentBounds, SegmentContext, SegmentDraft,
    SegmentationDraft,
};
use crate::provider::{ProviderError, TextGenRequest};
use crate::util::mix;

const PALETTES: &[(&str, &[&str])] = &[
    ("exposition", &["#FFD166", "#06D6A0", "#118AB2", "#F4F1DE"]),
    ("conflict", &["#EF476F", "#073B4C", "#FF9F1C", "#5E548E"]),
    ("resolution", &["#8AC926", "#FFCA3A", "#6A4C93", "#FFAFCC"]),
];

const EMOTION: &[&str] = &[
    "happy",
    "smile",
    "smiled",
    "smiling",
    "laughed",
    "giggle",
    "giggled",
    "sad",
    "cried",
    "scared",
    "afraid",
    "worried",
    "excited",
    "surprised",
    "proud",
    "wow",
    "cheered",
    "hug",
];
const ACTION: &[&str] = &[
    "jumped", "jump", "ran", "climbed", "climb", "danced", "flew", "spun", "waved", "hopped", "fell", "slipped", "rolled", "clapped",
    "built", "crossed",
];
const SPATIAL: &[&str] = &["up", "down", "high", "tall", "far", "around", "above", "below", "left", "right", "top", "over"];

fn words_of(req: &TextGenRequest) -> Vec<&str> {
    req.get(var::WORDS).split_whitespace().collect()
}

fn ends_sentence(token: &str) -> bool {
    token.trim_end_matches(['"', '\'', ')']).ends_with(['.', '!', '?'])
}

pub(super) fn segment(req: &TextGenRequest) -> Result<String, ProviderError> {
    let words = words_of(req);
    if words.is_empty() {
        return Err(ProviderError::MalformedOutput("nothing to segment".to_string()));
    }
    let mut sentences: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for (i, w) in words.iter().enumerate() {
        if ends_sentence(w) || i + 1 == words.len() {
            sentences.push((start, i));
            start = i + 1;
        }
    }
    let n = words.len();
    let wanted = ((n + 20) / 40).clamp(1, 8).min(sentences.len());
    let mut segments: Vec<(usize, usize)> = Vec::with_capacity(wanted);
    let mut seg_start = 0;
    for (si, &(_, end)) in sentences.iter().enumerate() {
        let done = segments.len();
        let sentences_left = sentences.len() - si - 1;
        let segments_left = wanted - done - 1;
        let reached = (end + 1) * wanted >= (done + 1) * n;
        if done + 1 < wanted && (reached || sentences_left == segments_left) && sentences_left >= segments_left {
            segments.push((seg_start, end));
            seg_start = end + 1;
        }
    }
    segments.push((seg_start, n - 1));

    let jitter = mix(req.seed) as usize;
    let count = segments.len();
    let out = segments
        .into_iter()
        .enumerate()
        .map(|(i, (first, last))| {
            let role_idx = if count == 1 { 0 } else { (i * 3 / count).min(2) };
            let (role, colors) = PALETTES[role_idx];
            let take = 2 + (jitter + i) % 3;
            let rot = (jitter / 7 + i) % colors.len();
            let palette = (0..take).map(|k| colors[(rot + k) % colors.len()].to_string()).collect();
            SegmentDraft { first, last, palette, role: role.to_string() }
        })
        .collect();
    Ok(wire::render(&SegmentationDraft { segments: out }))
}

fn classify(token: &str, targets: &[&str]) -> Option<CueKind> {
    let n = normalize_token(token);
    if n.is_empty() {
        return None;
    }
    if targets.contains(&n.as_str()) {
        Some(CueKind::Emphasis)
    } else if EMOTION.contains(&n.as_str()) {
        Some(CueKind::Emotion)
    } else if ACTION.contains(&n.as_str()) {
        Some(CueKind::Action)
    } else if SPATIAL.contains(&n.as_str()) {
        Some(CueKind::Spatial)
    } else {
        None
    }
}

fn priority(kind: CueKind) -> u8 {
    match kind {
        CueKind::Emphasis => 0,
        CueKind::Emotion => 1,
        CueKind::Action => 2,
        CueKind::Spatial => 3,
    }
}

pub(super) fn cues(req: &TextGenRequest) -> Result<String, ProviderError> {
    let words = words_of(req);
    let segments: Vec<SegmentBounds> = wire::parse(req.get(var::SEGMENTS))?;
    let forms: Vec<String> = req.get(var::TARGET_FORMS).split(',').map(normalize_token).filter(|s| !s.is_empty()).collect();
    let forms: Vec<&str> = forms.iter().map(String::as_str).collect();
    let per_cue: usize = req.get(var::WORDS_PER_CUE).trim().parse().unwrap_or(10).max(1);
    let mut out = Vec::new();
    for (si, seg) in segments.iter().enumerate() {
        let last = seg.last.min(words.len().saturating_sub(1));
        if seg.first > last {
            continue;
        }
        let mut found: Vec<CueDraft> = (seg.first..=last)
            .filter_map(|wi| {
                classify(words[wi], &forms).map(|kind| CueDraft { segment: si, word: wi, kind, note: normalize_token(words[wi]) })
            })
            .collect();
        let cap = (last - seg.first + 1).div_ceil(per_cue);
        found.sort_by_key(|c| (priority(c.kind), c.word));
        found.truncate(cap);
        found.sort_by_key(|c| c.word);
        out.extend(found);
    }
    Ok(wire::render(&CuesDraft { cues: out }))
}

fn face_for(cue: &CueContext) -> Option<&'static str> {
    match cue.kind {
        CueKind::Emphasis => Some("widen eyes, brighten"),
        CueKind::Emotion => Some(match cue.word.as_str() {
            "sad" | "cried" => "frown softly",
            "scared" | "afraid" | "worried" | "surprised" | "wow" => "look surprised",
            "excited" => "widen eyes, brighten",
            _ => "smile",
        }),
        _ => None,
    }
}

fn body_for(cue: &CueContext) -> Option<&'static str> {
    match cue.kind {
        CueKind::Emphasis => Some("lean in"),
        CueKind::Emotion => None,
        CueKind::Action => Some(match cue.word.as_str() {
            "jumped" | "jump" | "hopped" | "clapped" | "cheered" => "both arms up",
            "waved" => "wave right arm",
            "climbed" | "climb" => "wave left arm",
            "fell" | "slipped" => "tilt head",
            "built" => "nod",
            _ => "small base turn",
        }),
        CueKind::Spatial => Some(match cue.word.as_str() {
            "left" => "look left, set head_yaw=40",
            "right" => "look right, set head_yaw=-40",
            "down" | "below" => "nod",
            "far" | "around" => "small base turn",
            _ => "tilt head up",
        }),
    }
}

pub(super) fn describe(req: &TextGenRequest) -> Result<String, ProviderError> {
    let seg: SegmentContext = wire::parse(req.get(var::SEGMENT))?;
    let cues: Vec<CueContext> = wire::parse(req.get(var::CUES))?;
    let prior: Vec<DescriptionDraft> = wire::parse(req.get(var::PRIOR))?;
    let glow = seg.palette.first().cloned().unwrap_or_else(|| "#FFFFFF".to_string());
    let clamp_t = |t: u64| t.clamp(seg.start_ms, seg.end_ms);

    let mut last_body: Option<String> = prior.iter().rev().find(|d| d.channel == Channel::Body).map(|d| d.description.clone());
    let mut out: Vec<DescriptionDraft> = Vec::new();
    for cue in &cues {
        let t = clamp_t(cue.t_ms);
        if let Some(face) = face_for(cue) {
            out.push(DescriptionDraft { t_ms: t, channel: Channel::Face, description: alloc::format!("{face}, glow {glow}") });
        }
        if let Some(body) = body_for(cue) {
            // Avoid repeating the previous gesture back to back.
            let body = if last_body.as_deref() == Some(body) {
                if body == "nod" {
                    "tilt head"
                } else {
                    "nod"
                }
            } else {
                body
            };
            last_body = Some(body.to_string());
            out.push(DescriptionDraft { t_ms: t, channel: Channel::Body, description: body.to_string() });
        }
    }
    if out.is_empty() {
        out.push(DescriptionDraft {
            t_ms: seg.start_ms + (seg.end_ms - seg.start_ms) / 2,
            channel: Channel::Body,
            description: "idle sway".to_string(),
        });
    }
    Ok(wire::render(&DescriptionsDraft { descriptions: out }))
}
