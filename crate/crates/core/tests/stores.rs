use std::io::Write;
use std::sync::Arc;
use std::thread;

use svctrust_core::dqmm::{DataQualityLevel, EdqStore};
use svctrust_core::pmm::PerfDb;
use svctrust_core::store::StoreError;
use svctrust_core::tmm::{TrustHistory, TrustRecord};
use svctrust_core::trust::{trust_index, FactorKind, FactorLevel, TrustWeights};
use svctrust_core::ServiceId;

fn level(id: &str, value: f64, at: f64) -> FactorLevel {
    FactorLevel::new(id.into(), FactorKind::Performance, value, at).unwrap()
}

#[test]
fn concurrent_readers_never_see_time_go_backwards() {
    let db = Arc::new(PerfDb::in_memory());
    let services: Vec<ServiceId> = (0..4).map(|i| format!("s{i}").into()).collect();
    const PER_WRITER: usize = 2_000;

    let writers: Vec<_> = services
        .iter()
        .cloned()
        .map(|id| {
            let db = db.clone();
            thread::spawn(move || {
                for k in 0..PER_WRITER {
                    let at = k as f64 * 300.0;
                    db.append(
                        FactorLevel::new(
                            id.clone(),
                            FactorKind::Performance,
                            (k % 100) as f64 / 100.0,
                            at,
                        )
                        .unwrap(),
                    )
                    .unwrap();
                }
            })
        })
        .collect();
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let db = db.clone();
            let services = services.clone();
            thread::spawn(move || {
                let mut last = vec![f64::NEG_INFINITY; services.len()];
                for _ in 0..5_000 {
                    for (i, id) in services.iter().enumerate() {
                        if let Some(l) = db.latest(id) {
                            assert!(l.evaluated_at >= last[i], "latest went backwards for {id}");
                            assert!((0.0..=1.0).contains(&l.value));
                            assert_eq!(&l.service_id, id);
                            last[i] = l.evaluated_at;
                        }
                    }
                }
            })
        })
        .collect();
    for h in writers.into_iter().chain(readers) {
        h.join().unwrap();
    }
    assert_eq!(db.len(), services.len() * PER_WRITER);
    for id in &services {
        assert_eq!(
            db.latest(id).unwrap().evaluated_at,
            (PER_WRITER - 1) as f64 * 300.0
        );
    }
}

#[test]
fn reopened_stores_replay_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let awkward = [
        0.1 + 0.2,
        1.0 / 3.0,
        1e-17,
        0.999_999_999_999_999_9,
        0.0,
        1.0,
    ];

    let perf_path = dir.path().join("perfdb.log");
    let edq_path = dir.path().join("edq.log");
    let hist_path = dir.path().join("trust_history.log");
    let (perf_before, edq_before, hist_before) = {
        let perf = PerfDb::open(&perf_path).unwrap();
        let edq = EdqStore::open(&edq_path).unwrap();
        let hist = TrustHistory::open(&hist_path).unwrap();
        for (i, &v) in awkward.iter().enumerate() {
            let at = 300.0 * i as f64 + 0.1;
            perf.append(level("a", v, at)).unwrap();
            edq.append(DataQualityLevel::new("a".into(), at, v, 1.0 - v).unwrap())
                .unwrap();
            let w = TrustWeights::new(0.7, 0.30000000000000004).unwrap();
            hist.append(TrustRecord {
                service_id: "a".into(),
                requested_at: at,
                alpha: w.alpha(),
                beta: w.beta(),
                performance: v,
                data_quality: 1.0 - v,
                trust: trust_index(v, 1.0 - v, &w).unwrap(),
            })
            .unwrap();
        }
        (perf.all(), edq.all(), hist.all())
    };

    let perf = PerfDb::open(&perf_path).unwrap();
    let edq = EdqStore::open(&edq_path).unwrap();
    let hist = TrustHistory::open(&hist_path).unwrap();
    assert_eq!(perf.all(), perf_before);
    assert_eq!(edq.all(), edq_before);
    assert_eq!(hist.all(), hist_before);
    for (a, b) in perf.all().iter().zip(&perf_before) {
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.evaluated_at.to_bits(), b.evaluated_at.to_bits());
    }
    assert!(hist.all().iter().all(TrustRecord::is_consistent));

    // appending after a replay keeps one header
    perf.append(level("b", 0.5, 9_000.0)).unwrap();
    drop(perf);
    let text = std::fs::read_to_string(&perf_path).unwrap();
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with("service_id,"))
            .count(),
        1
    );
    assert_eq!(PerfDb::open(&perf_path).unwrap().len(), awkward.len() + 1);
}

#[test]
fn corrupt_files_are_rejected_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("perfdb.log");
    {
        let db = PerfDb::open(&path).unwrap();
        db.append(level("a", 0.5, 1.0)).unwrap();
    }
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap();
    writeln!(f, "a,performance,2.0,not-a-number").unwrap();
    drop(f);
    match PerfDb::open(&path) {
        Err(StoreError::Malformed { line, .. }) => assert_eq!(line, 3),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("corrupt line accepted"),
    }

    let other = dir.path().join("edq.log");
    std::fs::write(&other, "something,else\n").unwrap();
    assert!(matches!(
        EdqStore::open(&other),
        Err(StoreError::Header { .. })
    ));

    let out_of_range = dir.path().join("perf2.log");
    std::fs::write(
        &out_of_range,
        "service_id,kind,evaluated_at,value\na,performance,1,1.5\n",
    )
    .unwrap();
    assert!(matches!(
        PerfDb::open(&out_of_range),
        Err(StoreError::Malformed { line: 2, .. })
    ));
}
