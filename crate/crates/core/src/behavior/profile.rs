//! Robot profile: joint limits, timing constraints and the expressive banks.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Joint;
use crate::domain::{FaceName, GestureName};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointRange {
    pub min: f64,
    pub max: f64,
}

impl JointRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub head_yaw: JointRange,
    pub head_pitch: JointRange,
    pub arm_left: JointRange,
    pub arm_right: JointRange,
    pub base_rotation: JointRange,
}

impl JointLimits {
    pub fn get(&self, j: Joint) -> JointRange {
        match j {
            Joint::HeadYaw => self.head_yaw,
            Joint::HeadPitch => self.head_pitch,
            Joint::ArmLeft => self.arm_left,
            Joint::ArmRight => self.arm_right,
            Joint::BaseRotation => self.base_rotation,
        }
    }
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            head_yaw: JointRange::new(-90.0, 90.0),
            head_pitch: JointRange::new(-30.0, 30.0),
            arm_left: JointRange::new(0.0, 180.0),
            arm_right: JointRange::new(0.0, 180.0),
            base_rotation: JointRange::new(-180.0, 180.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceDef {
    pub name: String,
    pub keywords: Vec<String>,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureDef {
    pub name: String,
    pub keywords: Vec<String>,
    /// Joint name to target angle in degrees; joints not listed hold.
    pub targets: BTreeMap<String, f64>,
    pub duration_ms: u64,
    /// Append a return stage back to the prior pose when time allows.
    #[serde(default)]
    pub returns: bool,
}

/// A canned animation step (wake-up, sleep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedStage {
    pub duration_ms: u64,
    pub targets: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotProfile {
    pub name: String,
    pub limits: JointLimits,
    pub rest_deg: [f64; 5],
    pub min_stage_ms: u64,
    /// Allowed overrun of the last stage past the end of audio.
    pub end_slack_ms: u64,
    /// Largest face intensity change per millisecond between keyframes.
    pub face_max_slope_per_ms: f64,
    pub face_min_spacing_ms: u64,
    pub default_gesture_ms: u64,
    pub face_bank: Vec<FaceDef>,
    pub gesture_bank: Vec<GestureDef>,
    pub wake: Vec<CannedStage>,
    pub sleep: Vec<CannedStage>,
}

fn targets(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| ((*k).to_string(), *v)).collect()
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|s| (*s).to_string()).collect()
}

impl Default for RobotProfile {
    fn default() -> Self {
        let face = |name: &str, kw: &[&str], intensity: f64| FaceDef { name: name.to_string(), keywords: words(kw), intensity };
        let gesture = |name: &str, kw: &[&str], t: &[(&str, f64)], duration_ms: u64| GestureDef {
            name: name.to_string(),
            keywords: words(kw),
            targets: targets(t),
            duration_ms,
            returns: true,
        };
        Self {
            name: "ella-desk".to_string(),
            limits: JointLimits::default(),
            rest_deg: [0.0; 5],
            min_stage_ms: 300,
            end_slack_ms: 100,
            face_max_slope_per_ms: 0.002,
            face_min_spacing_ms: 150,
            default_gesture_ms: 500,
            face_bank: alloc::vec![
                face("excited", &["widen eyes", "brighten", "excited"], 0.8),
                face("happy", &["smile", "grin", "happy"], 0.7),
                face("surprised", &["surprised", "gasp", "wow"], 0.8),
                face("sad", &["frown", "sad"], 0.5),
                face("curious", &["curious", "raise brow", "wonder"], 0.6),
                face("thinking", &["think", "ponder"], 0.5),
                face("sleepy", &["sleepy", "yawn"], 0.5),
                face("neutral", &["neutral", "relax", "calm"], 0.0),
            ],
            gesture_bank: alloc::vec![
                gesture("wave_right", &["wave right"], &[("arm_right", 150.0)], 600),
                gesture("wave_left", &["wave left"], &[("arm_left", 150.0)], 600),
                gesture("both_arms_up", &["both arms", "arms up"], &[("arm_left", 170.0), ("arm_right", 170.0)], 700),
                gesture("nod", &["nod"], &[("head_pitch", 15.0)], 400),
                gesture("head_tilt", &["tilt head", "head tilt"], &[("head_pitch", -12.0), ("head_yaw", 10.0)], 500),
                gesture("lean_in", &["lean in", "lean"], &[("head_pitch", 20.0)], 500),
                gesture("base_turn_small", &["base turn"], &[("base_rotation", 20.0)], 800),
                gesture("idle_sway", &["idle", "sway"], &[("base_rotation", 6.0), ("head_yaw", -6.0)], 900),
            ],
            wake: alloc::vec![
                CannedStage { duration_ms: 600, targets: targets(&[("head_pitch", -20.0)]) },
                CannedStage { duration_ms: 600, targets: targets(&[("head_pitch", 0.0), ("arm_left", 60.0), ("arm_right", 60.0)]) },
                CannedStage { duration_ms: 500, targets: targets(&[("arm_left", 0.0), ("arm_right", 0.0)]) },
            ],
            sleep: alloc::vec![
                CannedStage { duration_ms: 800, targets: targets(&[("head_pitch", 25.0), ("arm_left", 0.0), ("arm_right", 0.0)]) },
                CannedStage { duration_ms: 700, targets: targets(&[("head_yaw", 0.0), ("base_rotation", 0.0)]) },
            ],
        }
    }
}

impl RobotProfile {
    /// Every problem with the profile; empty when usable.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for j in Joint::ALL {
            let r = self.limits.get(j);
            if !(r.min.is_finite() && r.max.is_finite() && r.min < r.max) {
                errs.push(alloc::format!("limits.{}: min {} must be below max {}", j.as_str(), r.min, r.max));
            }
            if !r.contains(self.rest_deg[j.index()]) {
                errs.push(alloc::format!("rest_deg.{} = {} outside limits", j.as_str(), self.rest_deg[j.index()]));
            }
        }
        if self.min_stage_ms == 0 {
            errs.push("min_stage_ms must be positive".to_string());
        }
        if !(self.face_max_slope_per_ms.is_finite() && self.face_max_slope_per_ms > 0.0) {
            errs.push("face_max_slope_per_ms must be positive".to_string());
        }
        if self.face_min_spacing_ms == 0 {
            errs.push("face_min_spacing_ms must be positive".to_string());
        }
        for f in &self.face_bank {
            if FaceName::parse(&f.name).is_none() {
                errs.push(alloc::format!("face_bank: unknown expression {:?}", f.name));
            }
            if !(0.0..=1.0).contains(&f.intensity) {
                errs.push(alloc::format!("face_bank.{}: intensity {} outside [0, 1]", f.name, f.intensity));
            }
        }
        for g in &self.gesture_bank {
            if GestureName::parse(&g.name).is_none() {
                errs.push(alloc::format!("gesture_bank: unknown gesture {:?}", g.name));
            }
            check_targets(&mut errs, &alloc::format!("gesture_bank.{}", g.name), &g.targets);
        }
        for (label, stages) in [("wake", &self.wake), ("sleep", &self.sleep)] {
            for (i, s) in stages.iter().enumerate() {
                if s.duration_ms < self.min_stage_ms {
                    errs.push(alloc::format!("{label}[{i}]: duration {} below min_stage_ms", s.duration_ms));
                }
                check_targets(&mut errs, &alloc::format!("{label}[{i}]"), &s.targets);
            }
        }
        errs
    }

    pub fn face_names(&self) -> Vec<FaceName> {
        self.face_bank.iter().filter_map(|f| FaceName::parse(&f.name)).collect()
    }

    pub fn gesture_names(&self) -> Vec<GestureName> {
        self.gesture_bank.iter().filter_map(|g| GestureName::parse(&g.name)).collect()
    }

    pub fn gesture(&self, name: GestureName) -> Option<&GestureDef> {
        self.gesture_bank.iter().find(|g| GestureName::parse(&g.name) == Some(name))
    }
}

fn check_targets(errs: &mut Vec<String>, label: &str, targets: &BTreeMap<String, f64>) {
    for (joint, v) in targets {
        if Joint::parse(joint).is_none() {
            errs.push(alloc::format!("{label}: unknown joint {joint:?}"));
        }
        if !v.is_finite() {
            errs.push(alloc::format!("{label}.{joint}: angle is not finite"));
        }
    }
}
