mod common;

use std::io::Write;

use adaptest_core::datastore::{
    ingest_log_file, ingest_logs, load_pool, parse_event_log, read_event_log, save_pool, DatastoreError,
    EventLogWriter, LogFormat,
};
use adaptest_core::selector::SelectionPolicy;
use adaptest_core::session::{replay_session, start_session, submit_grade, StoppingRule};
use adaptest_core::simulator::{assign_concepts, generate_pool};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn large_pool_round_trips_exactly() {
    let mut pool = generate_pool(2_242, 3);
    assign_concepts(&mut pool, &[("Algebra", 1_000), ("Geometry", 1_242)]);
    pool.content.insert("q0001".into(), "2+2=?".into());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.json");
    save_pool(&path, &pool).unwrap();
    let back = load_pool(&path).unwrap();
    assert_eq!(back, pool);
    for (a, b) in pool.items.values().zip(back.items.values()) {
        assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
        assert_eq!(a.beta.to_bits(), b.beta.to_bits());
        assert_eq!(a.c.to_bits(), b.c.to_bits());
    }
    // The temp file was renamed into place.
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn legacy_version_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("old.json");
    std::fs::write(&path, r#"{"format_version": 0, "questions": []}"#).unwrap();
    assert!(matches!(load_pool(&path), Err(DatastoreError::VersionMismatch { .. })));
}

#[test]
fn mooc_shaped_manifest() {
    // 592 questions and 66,437 logs.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mooc.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).unwrap());
    writeln!(f, "examinee_id,question_id,correct,concept").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..66_437usize {
        let q = k % 592;
        let e = k / 592;
        let concept = ["Function", "Geometry", "Probability"][q % 3];
        writeln!(f, "e{e},q{q},{},{concept}", u8::from(rng.random_bool(0.6))).unwrap();
    }
    drop(f);
    let got = ingest_log_file(&path).unwrap();
    let m = &got.manifest;
    assert_eq!(m.name, "mooc");
    assert_eq!(m.question_count, 592);
    assert_eq!(m.log_count, 66_437);
    assert_eq!(m.examinee_count, 66_437usize.div_ceil(592));
    assert_eq!(m.concepts.values().sum::<usize>(), 592);

    let again = ingest_log_file(&path).unwrap();
    assert_eq!(again.manifest, got.manifest);
    let json = serde_json::to_string(m).unwrap();
    assert_eq!(serde_json::from_str::<adaptest_core::datastore::DatasetManifest>(&json).unwrap(), *m);
}

#[test]
fn event_log_survives_a_torn_write() {
    let registry = common::session_registry();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s1.jsonl");
    let (mut s, _) = start_session(&registry, "s1", "main", None, SelectionPolicy::Fisher, StoppingRule::default())
        .unwrap();
    let mut writer = EventLogWriter::open(&path).unwrap();
    writer.append(&s.events()[0]).unwrap();
    for k in 0..4 {
        submit_grade(&registry, &mut s, k != 2).unwrap();
        let events = s.events();
        writer.append(events.last().unwrap()).unwrap();
    }
    drop(writer);
    let log = read_event_log(&path).unwrap();
    assert!(!log.torn_tail);
    assert_eq!(replay_session(&registry, &log.events).unwrap(), s);

    // Crash halfway through the fifth record.
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.extend_from_slice(br#"{"event":"grade","session_id":"s1","st"#);
    std::fs::write(&path, &bytes).unwrap();
    let log = read_event_log(&path).unwrap();
    assert!(log.torn_tail);
    let replayed = replay_session(&registry, &log.events).unwrap();
    assert_eq!(replayed, s);
    assert!(replayed.awaiting().is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pools_round_trip_bit_for_bit(seed in any::<u64>(), n in 1usize..50) {
        let pool = generate_pool(n, seed);
        let text = adaptest_core::datastore::pool_to_json(&pool);
        let back = adaptest_core::datastore::pool_from_json(&text).unwrap();
        prop_assert_eq!(&back, &pool);
        let again = adaptest_core::datastore::pool_to_json(&back);
        prop_assert_eq!(text, again);
    }

    #[test]
    fn ingestion_is_deterministic(rows in prop::collection::vec((0u8..20, 0u8..30, any::<bool>()), 0..200)) {
        let mut text = String::from("examinee_id,question_id,correct\n");
        for (e, q, y) in &rows {
            text.push_str(&format!("e{e},q{q},{}\n", u8::from(*y)));
        }
        let a = ingest_logs(text.as_bytes(), LogFormat::Csv).unwrap();
        let b = ingest_logs(text.as_bytes(), LogFormat::Csv).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.manifest.log_count + a.manifest.duplicates, rows.len());
    }

    #[test]
    fn event_logs_round_trip(seed in 0u64..10_000) {
        let registry = common::session_registry();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, _) = start_session(&registry, "s", "main", None, SelectionPolicy::Random { seed }, StoppingRule::default())
            .unwrap();
        while !s.is_stopped() {
            submit_grade(&registry, &mut s, rng.random_bool(0.5)).unwrap();
        }
        let events = s.events();
        let text: String = events.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect();
        let parsed = parse_event_log(&text).unwrap();
        prop_assert_eq!(&parsed.events, &events);
    }
}
