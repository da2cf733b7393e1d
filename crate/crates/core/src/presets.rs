//! Built-in scenarios on an 8×8 patch grid with a 4×5 face region.
//!
//! Face reflectance is 0.5 and background 0.05, so the face delivers `0.5 · L` codes
//! per ms at unit responsivity while the background stays dark.

use crate::scene::{
    HeartRateProfile, IlluminationEvent, IlluminationField, PatchGrid, Roi, ScenarioFile,
    SkinFile, SpatialGain,
};

pub const GRID: PatchGrid = PatchGrid::new(8, 8);

pub fn face_roi() -> Roi {
    Roi::rect(2, 1, 4, 5)
}

/// Scenes with this many face codes per ms at unit responsivity.
fn level_for(face_codes_per_ms: f64) -> f64 {
    face_codes_per_ms / 0.5
}

fn base(name: &str, duration: f64, face_codes_per_ms: f64) -> ScenarioFile {
    ScenarioFile {
        name: name.into(),
        duration,
        cycle_rate: 45.0,
        noise_seed: 0,
        grid: GRID,
        roi: face_roi(),
        illumination: IlluminationField::constant(level_for(face_codes_per_ms)),
        skin: SkinFile {
            face_variation: 0.2,
            heart_rate: HeartRateProfile::Constant { hz: 1.2 },
            ..SkinFile::default()
        },
    }
}

fn flicker(start: f64, duration: f64) -> IlluminationEvent {
    IlluminationEvent::ShadowFlicker {
        start,
        duration: Some(duration),
        magnitude: 0.3,
        period: 0.5,
        duty: 0.5,
    }
}

fn step(start: f64, magnitude: f64, duration: Option<f64>) -> IlluminationEvent {
    IlluminationEvent::Step { start, magnitude, duration }
}

/// 120 s drive at 72 bpm: two tree-shadow stretches, a tunnel-like dimming and a
/// brightening step.
pub fn typical_drive() -> ScenarioFile {
    let mut s = base("typical-drive", 120.0, 30.0);
    s.illumination.events = vec![
        flicker(10.0, 25.0),
        step(40.0, 0.5, Some(20.0)),
        flicker(70.0, 25.0),
        step(100.0, 1.6, None),
    ];
    s
}

/// Roadside-tree shadows throughout most of the drive.
pub fn shadow_flicker() -> ScenarioFile {
    let mut s = base("shadow-flicker", 60.0, 30.0);
    s.illumination.events = vec![flicker(5.0, 50.0)];
    s
}

/// Direct sun on the face.
pub fn extreme_glare() -> ScenarioFile {
    let mut s = base("extreme-glare", 60.0, 80.0);
    s.illumination.events = vec![IlluminationEvent::Sinusoid {
        start: 0.0,
        magnitude: 0.2,
        frequency: 0.05,
        duration: None,
    }];
    s
}

/// Night driving: even `t_max` leaves the face far below target.
pub fn low_light_ceiling() -> ScenarioFile {
    base("low-light-ceiling", 60.0, 1.5)
}

/// Sun visor: dark forehead rows over a brightly lit chin.
pub fn visor_gradient() -> ScenarioFile {
    let mut s = base("visor-gradient", 60.0, 20.0);
    let rows = (0..GRID.height)
        .map(|y| vec![if (1..=3).contains(&y) { 0.1 } else { 1.0 }; GRID.width])
        .collect();
    s.illumination.spatial = Some(SpatialGain { rows, start: 0.0, end: None });
    s
}

/// Sunny drives with tree shadows and a glare stretch.
pub fn sunny_suite() -> Vec<ScenarioFile> {
    [(25.0, 1.1, 20.0), (30.0, 1.3, 50.0), (35.0, 1.0, 80.0)]
        .into_iter()
        .enumerate()
        .map(|(i, (codes, hz, glare_at))| {
            let mut s = base(&format!("sunny-{}", i + 1), 120.0, codes);
            s.skin.heart_rate = HeartRateProfile::Constant { hz };
            s.illumination.events = vec![
                flicker(5.0, 10.0),
                step(glare_at, 2.0, Some(15.0)),
                flicker(glare_at + 25.0, 10.0),
            ];
            s
        })
        .collect()
}

/// Static scene with one step of `factor` at `at` seconds.
pub fn step_change(name: &str, face_codes_per_ms: f64, factor: f64, at: f64, duration: f64) -> ScenarioFile {
    let mut s = base(name, duration, face_codes_per_ms);
    s.illumination.events = vec![step(at, factor, None)];
    s
}

pub const BUILTIN_NAMES: &[&str] = &[
    "shadow-flicker",
    "extreme-glare",
    "low-light-ceiling",
    "visor-gradient",
    "typical-drive",
    "sunny-1",
    "sunny-2",
    "sunny-3",
    "step-up",
    "step-down",
];

/// The four demo cases.
pub const DEMO_NAMES: &[&str] = &["shadow-flicker", "extreme-glare", "low-light-ceiling", "visor-gradient"];

pub fn builtin(name: &str) -> Option<ScenarioFile> {
    Some(match name {
        "shadow-flicker" => shadow_flicker(),
        "extreme-glare" => extreme_glare(),
        "low-light-ceiling" => low_light_ceiling(),
        "visor-gradient" => visor_gradient(),
        "typical-drive" => typical_drive(),
        "step-up" => step_change("step-up", 10.0, 4.0, 30.0, 60.0),
        "step-down" => step_change("step-down", 40.0, 0.25, 30.0, 60.0),
        other => {
            let i: usize = other.strip_prefix("sunny-")?.parse().ok()?;
            sunny_suite().into_iter().nth(i.checked_sub(1)?)?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_validates_and_round_trips() {
        for name in BUILTIN_NAMES {
            let file = builtin(name).unwrap();
            let spec = file.build().unwrap();
            assert_eq!(spec.name, *name);
            let text = toml::to_string(&file).unwrap();
            let back = crate::scene::ScenarioSpec::from_toml_str(&text).unwrap();
            assert_eq!(back, spec, "{name}");
        }
        assert!(builtin("sunny-4").is_none());
        assert!(builtin("nope").is_none());
    }
}
