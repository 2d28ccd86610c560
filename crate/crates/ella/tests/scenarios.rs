use std::path::{Path, PathBuf};

use ella::core::turn::{run_turn, TurnConfig};
use ella::formats::{format_events, parse_scenario};

fn scenario_files() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/turn");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
}

#[test]
fn every_scenario_meets_its_expectation() {
    let files = scenario_files();
    assert_eq!(files.len(), 14);
    for f in files {
        let s = parse_scenario(&std::fs::read_to_string(&f).unwrap()).unwrap();
        let e = s.expect.clone().unwrap_or_else(|| panic!("{} has no expectation", f.display()));
        let got = run_turn(&s.events, &TurnConfig::default()).unwrap();
        let name = f.file_name().unwrap().to_string_lossy().into_owned();
        assert_eq!(Some(got.reason), e.reason, "{name}");
        assert_eq!(Some(got.t_end_ms), e.t_end_ms, "{name}");
        assert_eq!(Some(got.t_start_ms), e.t_start_ms, "{name}");
        assert_eq!(Some(got.transcript), e.transcript, "{name}");
    }
}

#[test]
fn scenario_events_round_trip_through_the_text_format() {
    for f in scenario_files() {
        let s = parse_scenario(&std::fs::read_to_string(&f).unwrap()).unwrap();
        let again = parse_scenario(&format_events(&s.events)).unwrap();
        assert_eq!(again.events, s.events);
    }
}
