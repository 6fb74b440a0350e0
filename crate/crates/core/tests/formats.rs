//! Waveform files, ground-truth sidecars, configs and reports: round trips
//! and hostile input.

use proptest::prelude::*;
use snspd_pnr::config::{ExperimentConfig, TemplateBackend};
use snspd_pnr::electrothermal::ElectrothermalParams;
use snspd_pnr::experiment::run_experiment;
use snspd_pnr::io::{
    decode_waveforms, encode_waveforms, read_ground_truth, write_ground_truth, GroundTruthRow,
    HEADER_BYTES,
};
use snspd_pnr::pipeline::ReconstructionReport;
use snspd_pnr::waveform::{EventRecord, SlotCounts, SlotKind};
use snspd_pnr::Error;

fn events_strategy() -> impl Strategy<Value = (u32, Vec<EventRecord>)> {
    (2u32..24).prop_flat_map(|len| {
        let record = (1u64..50, 1u16..40, any::<bool>(), prop::collection::vec(-2.0f32..2.0, len as usize));
        (Just(len), prop::collection::vec(record, 0..30)).prop_map(|(len, raw)| {
            let mut slot = 0;
            let events = raw
                .into_iter()
                .map(|(gap, n, leaked, w)| {
                    slot += gap;
                    EventRecord {
                        slot_index: slot,
                        slot_kind: if leaked { SlotKind::Suppressed } else { SlotKind::Main },
                        true_photon_count: n,
                        waveform: Some(w),
                        crossing_times: Vec::new(),
                    }
                })
                .collect();
            (len, events)
        })
    })
}

fn counts_for(events: &[EventRecord], slack: u64) -> SlotCounts {
    let total = events.last().map_or(0, |e| e.slot_index + 1) + slack;
    SlotCounts {
        total_slots: total,
        main_slots: total.div_ceil(2),
        events: events.len() as u64,
    }
}

proptest! {
    #[test]
    fn waveform_files_round_trip((len, events) in events_strategy(), slack in 0u64..3) {
        let counts = counts_for(&events, slack);
        let bytes = encode_waveforms(40e9, len, counts, &events).unwrap();
        prop_assert_eq!(bytes.len(), HEADER_BYTES + events.len() * (11 + 4 * len as usize));
        let (header, back) = decode_waveforms(&bytes).unwrap();
        prop_assert_eq!(header.counts, counts);
        prop_assert_eq!(header.record_length, len);
        prop_assert_eq!(back, events);
    }

    #[test]
    fn corrupted_waveform_files_fail_cleanly(
        (len, events) in events_strategy(),
        flips in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..4),
        cut in any::<prop::sample::Index>(),
        truncate in any::<bool>(),
    ) {
        let mut bytes = encode_waveforms(40e9, len, counts_for(&events, 0), &events).unwrap();
        for (i, b) in flips {
            let i = i.index(bytes.len());
            bytes[i] ^= b;
        }
        if truncate {
            bytes.truncate(cut.index(bytes.len() + 1));
        }
        if let Err(e) = decode_waveforms(&bytes) {
            prop_assert!(matches!(e, Error::Format(_) | Error::Io(_)), "{e:?}");
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_waveforms(&bytes);
        let mut framed = b"SNWF\x01\x00\x00\x00".to_vec();
        framed.extend(&bytes);
        let _ = decode_waveforms(&framed);
    }

    #[test]
    fn ground_truth_round_trips((_, events) in events_strategy()) {
        let rows: Vec<GroundTruthRow> = events.iter().map(GroundTruthRow::from).collect();
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, rows.iter().copied()).unwrap();
        prop_assert_eq!(read_ground_truth(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn ground_truth_reader_never_panics(text in "[a-z_,0-9\\n-]{0,200}") {
        let _ = read_ground_truth(text.as_bytes());
        let _ = read_ground_truth(format!("slot_index,slot_kind,true_photon_count\n{text}").as_bytes());
    }

    #[test]
    fn configs_round_trip(
        seed in any::<u64>(),
        n_events in 1u64..1_000_000,
        lambda in 0.0f64..10.0,
        leak in 0u32..4,
        levels in prop::collection::btree_set(1u32..1000, 1..9),
        analytic in any::<bool>(),
        custom_wire in prop::option::of(100e-6f64..2e-3),
        bin in prop::option::of(1e-13f64..1e-10),
    ) {
        let mut c = ExperimentConfig::from_json(r#"{"seed": 0, "n_events": 1, "output_dir": "x"}"#).unwrap();
        c.seed = seed;
        c.n_events = n_events;
        c.source.mean_photons = lambda;
        c.source.suppressed_slots_per_main = leak;
        c.tagging.trigger_levels_volts = levels.into_iter().map(|l| l as f64 / 1000.0).collect();
        c.template_backend = if analytic { TemplateBackend::Analytic } else { TemplateBackend::Electrothermal };
        c.electrothermal = custom_wire.map(|w| ElectrothermalParams { wire_length_meters: w, ..Default::default() });
        c.pipeline.bin_width_seconds = bin;
        let text = c.to_json().unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }
}

#[test]
fn unknown_config_keys_are_rejected_at_every_depth() {
    let base = r#"{"seed": 1, "n_events": 10, "output_dir": "x"}"#;
    assert!(ExperimentConfig::from_json(base).is_ok());
    let sections = [
        "source", "timing", "frontend", "electrothermal", "tagging", "pipeline", "stats",
    ];
    for s in sections {
        let text = format!(r#"{{"seed": 1, "n_events": 10, "output_dir": "x", "{s}": {{"bogus_key": 1}}}}"#);
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{s}: {err:?}");
    }
    let top = r#"{"seed": 1, "n_events": 10, "output_dir": "x", "extra": true}"#;
    assert!(matches!(ExperimentConfig::from_json(top), Err(Error::Config(_))));
    let missing = r#"{"seed": 1, "output_dir": "x"}"#;
    assert!(matches!(ExperimentConfig::from_json(missing), Err(Error::Config(_))));
}

#[test]
fn reports_round_trip_and_reject_tampering() {
    let mut c = ExperimentConfig::from_json(r#"{"seed": 3, "n_events": 30000, "output_dir": "x"}"#).unwrap();
    c.source.mean_photons = 1.98;
    c.tagging.trigger_levels_volts = vec![0.5, 0.6];
    let (_, sweep) = run_experiment(&c).unwrap();
    let report = &sweep.optimal_analysis().unwrap().report;
    let text = report.to_json().unwrap();
    let back = ReconstructionReport::from_json(&text).unwrap();
    assert_eq!(&back, report);
    assert_eq!(back.to_json().unwrap(), text);

    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["schema_version"] = 2.into();
    assert!(ReconstructionReport::from_json(&value.to_string()).is_err());

    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["surprise"] = 1.into();
    assert!(ReconstructionReport::from_json(&value.to_string()).is_err());

    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["peaks"][0]["photon_number"] = 7.into();
    assert!(ReconstructionReport::from_json(&value.to_string()).is_err());

    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["per_k"].as_array_mut().unwrap().pop();
    assert!(ReconstructionReport::from_json(&value.to_string()).is_err());
}
