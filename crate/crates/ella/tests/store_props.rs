mod common;

use std::collections::BTreeSet;
use std::sync::OnceLock;

use ella::core::pipeline::{DaySchedule, PackageStatus, Pipeline};
use ella::core::provider::Providers;
use ella::store::{FileStore, JOURNAL};
use proptest::prelude::*;

fn days() -> &'static [DaySchedule] {
    static D: OnceLock<Vec<DaySchedule>> = OnceLock::new();
    D.get_or_init(|| {
        let mut c = common::curriculum("c01", "Sarah");
        c.deployment_days = 2;
        let mut ds = Pipeline::new(Providers::mock()).build_schedule(&c, 8).unwrap();
        for p in ds.iter_mut().flat_map(|d| d.stories.iter_mut()) {
            p.status = PackageStatus::Approved;
        }
        ds
    })
}

fn check_partition(store: &FileStore) {
    for d in days() {
        let (remaining, state) = store.fetch_day("c01", d.day_index).unwrap();
        let delivered: BTreeSet<&str> = state.delivered_story_ids.iter().map(String::as_str).collect();
        let rest: BTreeSet<&str> = remaining.iter().map(|p| p.story.story_id.as_str()).collect();
        let all: BTreeSet<&str> = d.stories.iter().map(|p| p.story.story_id.as_str()).collect();
        assert_eq!(delivered.len(), state.delivered_story_ids.len(), "no story delivered twice");
        assert!(delivered.is_disjoint(&rest));
        assert_eq!(delivered.union(&rest).copied().collect::<BTreeSet<_>>(), all);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Truncating the journal anywhere (a crash mid-write) reopens to a
    /// state where each day's stories split exactly into delivered and
    /// remaining, and the store keeps accepting writes.
    #[test]
    fn crash_anywhere_keeps_delivery_consistent(
        marks in proptest::collection::vec((0usize..2, 0usize..5), 1..12),
        cut in 0.0f64..1.0,
    ) {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = FileStore::open(dir.path()).unwrap();
            s.put_schedule("c01", days()).unwrap();
            for (t, (d, i)) in marks.iter().enumerate() {
                let day = &days()[*d];
                let id = day.stories.get(*i).map_or("missing", |p| p.story.story_id.as_str());
                let _ = s.mark_delivered("c01", day.day_index, id, t as u64);
            }
            check_partition(&s);
        }
        let path = dir.path().join(JOURNAL);
        let bytes = std::fs::read(&path).unwrap();
        let first_line = bytes.iter().position(|b| *b == b'\n').unwrap() + 1;
        let keep = first_line + ((bytes.len() - first_line) as f64 * cut) as usize;
        std::fs::write(&path, &bytes[..keep]).unwrap();

        let mut s = FileStore::open(dir.path()).unwrap();
        check_partition(&s);
        let (remaining, _) = s.fetch_day("c01", 1).unwrap();
        if let Some(p) = remaining.first() {
            s.mark_delivered("c01", 1, &p.story.story_id, 99).unwrap();
        }
        drop(s);
        check_partition(&FileStore::open(dir.path()).unwrap());
    }
}
