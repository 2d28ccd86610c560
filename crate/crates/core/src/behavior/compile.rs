//! Deterministic compilers from behavior descriptions to executable face
//! and body programs, and the validators that check their output.

use alloc::string::String;
use alloc::vec::Vec;

use super::{BehaviorDescription, BehaviorError, Channel, FaceKeyframeProgram, Joint, JointTrajectory, Keyframe, RobotProfile};
use crate::domain::{FaceExpression, FaceName, GestureName, ValidationReport};
use crate::provider::AudioHandle;

const SLOPE_EPS: f64 = 1e-9;

/// What the face verifier had to change.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaceCompileReport {
    pub unresolved: usize,
    pub shifted: usize,
    pub clamped: usize,
}

/// Values written as `name=value` anywhere in a description.
fn assignments(text: &str) -> impl Iterator<Item = (&str, &str)> {
    text.split(|c: char| c.is_whitespace() || c == ',' || c == ';').filter_map(|tok| tok.split_once('=')).map(|(k, v)| (k.trim(), v.trim()))
}

fn duration_hint(text: &str) -> Option<u64> {
    if let Some(v) = assignments(text).find(|(k, _)| k.eq_ignore_ascii_case("duration")).map(|(_, v)| v) {
        return v.trim_end_matches("ms").parse().ok();
    }
    let mut toks = text.split_whitespace();
    while let Some(t) = toks.next() {
        if t.eq_ignore_ascii_case("for") {
            if let Some(n) = toks.next().and_then(|n| n.trim_end_matches(|c: char| !c.is_ascii_digit()).parse().ok()) {
                return Some(n);
            }
        }
    }
    None
}

fn resolve_face(desc: &str, profile: &RobotProfile) -> Option<FaceExpression> {
    let lower = desc.to_lowercase();
    let def = profile.face_bank.iter().find(|f| f.keywords.iter().any(|k| !k.is_empty() && lower.contains(&k.to_lowercase())))?;
    let name = FaceName::parse(&def.name)?;
    let mut intensity = def.intensity;
    if let Some(v) = assignments(&lower).find(|(k, _)| *k == "intensity").and_then(|(_, v)| v.parse::<f64>().ok()) {
        intensity = v;
    }
    let intensity = if intensity.is_finite() { intensity.clamp(0.0, 1.0) } else { def.intensity };
    Some(FaceExpression::new(name, intensity))
}

/// Keep the last of any requests sharing a timestamp, in time order.
fn latest_per_time<T>(mut items: Vec<(u64, T)>) -> Vec<(u64, T)> {
    items.sort_by_key(|(t, _)| *t);
    let mut out: Vec<(u64, T)> = Vec::with_capacity(items.len());
    for item in items {
        match out.last_mut() {
            Some(last) if last.0 == item.0 => *last = item,
            _ => out.push(item),
        }
    }
    out
}

pub fn compile_face(
    descriptions: &[BehaviorDescription],
    audio: &AudioHandle,
    profile: &RobotProfile,
) -> Result<(FaceKeyframeProgram, FaceCompileReport), BehaviorError> {
    let mut report = FaceCompileReport::default();
    let mut requests = Vec::new();
    for d in descriptions.iter().filter(|d| d.channel == Channel::Face) {
        match resolve_face(&d.description, profile) {
            Some(e) => requests.push((d.t_ms, e)),
            None => report.unresolved += 1,
        }
    }
    let limit_end = audio.duration_ms + profile.end_slack_ms;
    let spacing = profile.face_min_spacing_ms.max(1);
    let mut program = FaceKeyframeProgram::neutral();
    for (t, expression) in latest_per_time(requests) {
        let last = *program.keyframes.last().expect("program starts with a keyframe");
        if t == 0 && program.keyframes.len() == 1 {
            program.keyframes[0].expression = expression;
            continue;
        }
        let at = t.max(last.t_ms + spacing);
        if at != t {
            report.shifted += 1;
        }
        if at > limit_end {
            return Err(BehaviorError::CompilationFailed(alloc::format!(
                "face keyframe requested at {t} ms cannot be placed before {limit_end} ms"
            )));
        }
        program.keyframes.push(Keyframe { t_ms: at, expression });
    }

    // Verification pass: bound the intensity slope between neighbours.
    for i in 1..program.keyframes.len() {
        let prev = program.keyframes[i - 1];
        let cur = &mut program.keyframes[i];
        let allowed = profile.face_max_slope_per_ms * (cur.t_ms - prev.t_ms) as f64;
        let delta = cur.expression.intensity - prev.expression.intensity;
        if delta.abs() > allowed {
            cur.expression.intensity = (prev.expression.intensity + allowed.copysign(delta)).clamp(0.0, 1.0);
            report.clamped += 1;
        }
    }
    Ok((program, report))
}

pub fn validate_face(program: &FaceKeyframeProgram, profile: &RobotProfile, audio: &AudioHandle) -> ValidationReport {
    let mut r = ValidationReport::default();
    if program.keyframes.is_empty() {
        r.violate("keyframes", " is empty");
        return r;
    }
    for (i, k) in program.keyframes.iter().enumerate() {
        let v = k.expression.intensity;
        if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
            r.violate(alloc::format!("keyframes[{i}].intensity"), alloc::format!("={v}, expected [0, 1]"));
        }
        if k.t_ms > audio.duration_ms + profile.end_slack_ms {
            r.violate(alloc::format!("keyframes[{i}].t_ms"), alloc::format!("={} past end of audio", k.t_ms));
        }
    }
    for (i, w) in program.keyframes.windows(2).enumerate() {
        if w[1].t_ms <= w[0].t_ms {
            r.violate(alloc::format!("keyframes[{}].t_ms", i + 1), " not strictly increasing");
            continue;
        }
        let dt = w[1].t_ms - w[0].t_ms;
        if dt < profile.face_min_spacing_ms {
            r.violate(
                alloc::format!("keyframes[{}].spacing", i + 1),
                alloc::format!("={dt} ms, expected >= {}", profile.face_min_spacing_ms),
            );
        }
        let delta = (w[1].expression.intensity - w[0].expression.intensity).abs();
        if delta > profile.face_max_slope_per_ms * dt as f64 + SLOPE_EPS {
            r.violate(alloc::format!("keyframes[{}].slope", i + 1), alloc::format!("=|{delta:.4}| over {dt} ms"));
        }
    }
    r
}

struct StageRequest {
    t_ms: u64,
    targets: [Option<f64>; 5],
    duration_ms: u64,
    returns: bool,
}

fn resolve_body(desc: &str, profile: &RobotProfile) -> Option<StageRequest> {
    let lower = desc.to_lowercase();
    let gesture = profile
        .gesture_bank
        .iter()
        .find(|g| GestureName::parse(&g.name).is_some() && g.keywords.iter().any(|k| !k.is_empty() && lower.contains(&k.to_lowercase())));
    let mut targets = [None; 5];
    let mut duration_ms = profile.default_gesture_ms;
    let mut returns = true;
    if let Some(g) = gesture {
        for (joint, v) in &g.targets {
            if let Some(j) = Joint::parse(joint) {
                targets[j.index()] = Some(*v);
            }
        }
        duration_ms = g.duration_ms;
        returns = g.returns;
    }
    let mut overridden = false;
    for (k, v) in assignments(&lower) {
        if let (Some(j), Ok(v)) = (Joint::parse(k), v.trim_end_matches("deg").parse::<f64>()) {
            targets[j.index()] = Some(v);
            overridden = true;
        }
    }
    if gesture.is_none() && !overridden {
        return None;
    }
    if let Some(d) = duration_hint(&lower) {
        duration_ms = d;
    }
    Some(StageRequest { t_ms: 0, targets, duration_ms, returns })
}

/// Compile body descriptions to a staged trajectory. Angles are clamped to
/// the profile limits (non-finite requests hold the joint), short stages are
/// stretched to the minimum, and stages are laid end to end so they never
/// overlap. Fails only when the stages cannot fit before the end of audio.
pub fn compile_body(
    descriptions: &[BehaviorDescription],
    audio: &AudioHandle,
    profile: &RobotProfile,
) -> Result<JointTrajectory, BehaviorError> {
    let requests: Vec<(u64, StageRequest)> = descriptions
        .iter()
        .filter(|d| d.channel == Channel::Body)
        .filter_map(|d| {
            resolve_body(&d.description, profile).map(|mut r| {
                r.t_ms = d.t_ms;
                (d.t_ms, r)
            })
        })
        .collect();
    let requests = latest_per_time(requests);
    let limit_end = audio.duration_ms + profile.end_slack_ms;
    let min = profile.min_stage_ms.max(1);
    let mut traj = JointTrajectory::empty(profile.rest_deg);
    let mut pose = profile.rest_deg;
    let mut cursor = 0u64;
    for (i, (_, req)) in requests.iter().enumerate() {
        let mut target = pose;
        for j in Joint::ALL {
            if let Some(v) = req.targets[j.index()] {
                if v.is_finite() {
                    target[j.index()] = profile.limits.get(j).clamp(v);
                }
            }
        }
        let duration = req.duration_ms.max(min);
        let mut start = req.t_ms.max(cursor);
        if start + duration > limit_end {
            start = cursor.max(limit_end.saturating_sub(duration));
        }
        if start + duration > limit_end {
            return Err(BehaviorError::CompilationFailed(alloc::format!(
                "stage {i} needs {duration} ms from {start} ms but audio ends at {limit_end} ms"
            )));
        }
        traj.push_to(start, duration, target);
        cursor = start + duration;
        let next_t = requests.get(i + 1).map_or(limit_end, |(t, _)| (*t).min(limit_end));
        if req.returns && target != pose && cursor + min <= next_t {
            traj.push_to(cursor, min, pose);
            cursor += min;
        } else {
            pose = target;
        }
    }
    Ok(traj)
}

/// Exhaustive invariant scan of a trajectory, independent of the compiler.
pub fn validate_trajectory(traj: &JointTrajectory, profile: &RobotProfile, audio: &AudioHandle) -> ValidationReport {
    let mut r = ValidationReport::default();
    if traj.joints != Joint::ALL {
        r.violate("joints", " are not the fixed five-joint order");
    }
    let in_limits = |r: &mut ValidationReport, label: String, angles: &[f64; 5]| {
        for j in Joint::ALL {
            let v = angles[j.index()];
            let lim = profile.limits.get(j);
            if !lim.contains(v) {
                r.violate(alloc::format!("{label}.{}", j.as_str()), alloc::format!("={v}, limits [{}, {}]", lim.min, lim.max));
            }
        }
    };
    in_limits(&mut r, String::from("rest_deg"), &traj.rest_deg);
    let mut prev_end = 0u64;
    let mut prev_target = traj.rest_deg;
    for (k, s) in traj.stages.iter().enumerate() {
        if s.duration_ms < profile.min_stage_ms {
            r.violate(
                alloc::format!("stages[{k}].duration_ms"),
                alloc::format!("={}, expected >= {}", s.duration_ms, profile.min_stage_ms),
            );
        }
        in_limits(&mut r, alloc::format!("stages[{k}].target"), &s.target_deg);
        in_limits(&mut r, alloc::format!("stages[{k}].from"), &s.from_deg);
        if k > 0 && s.t_start_ms < prev_end {
            r.violate(
                alloc::format!("stages[{k}].t_start_ms"),
                alloc::format!("={} overlaps previous stage ending {prev_end}", s.t_start_ms),
            );
        }
        if s.from_deg != prev_target {
            r.violate(alloc::format!("stages[{k}].continuity"), " does not start from the previous target");
        }
        prev_end = s.t_start_ms + s.duration_ms;
        prev_target = s.target_deg;
    }
    let limit = audio.duration_ms + profile.end_slack_ms;
    r.measure("end_ms", prev_end);
    if prev_end > limit {
        r.violate("end_ms", alloc::format!("={prev_end}, expected <= {limit}"));
    }
    r
}
