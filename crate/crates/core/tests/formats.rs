mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use octo_core::encoder::{load_model, model_from_json, model_to_json, save_model, train, EncoderModel, TrainConfig};
use octo_core::eval::{emit_report, read_report, run_guessing, EvalConfig, EvalReport, Variant};
use octo_core::index::{build_index, index_from_json, index_to_json, load_index, save_index, IndexFileError};
use octo_core::io::{decode_tact, encode_tact, read_dataset, write_dataset, DatasetIoError};
use octo_core::llm::{LlmBackend, MockRules, ScriptedMock};
use octo_core::saliency::SaliencyConfig;
use octo_core::{PadType, Split, TactileFrame, TactileVideo};
use proptest::prelude::*;

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn quick_model(d: &octo_core::Dataset) -> EncoderModel {
    let cfg = TrainConfig {
        epochs: 2,
        hidden_dim: 6,
        embed_dim: 4,
        saliency: SaliencyConfig::with_k(3),
        ..TrainConfig::default()
    };
    train(d, &cfg).unwrap().0
}

proptest! {
    #[test]
    fn tact_payloads_round_trip_bit_exactly(
        h in 1u32..5,
        w in 1u32..5,
        n in 1usize..6,
        dotted in any::<bool>(),
        bits in prop::collection::vec(0u32..=0x3f80_0000, 100),
    ) {
        let px = (h * w) as usize;
        let frames: Vec<TactileFrame> = (0..n)
            .map(|f| TactileFrame::new(h, w, (0..px).map(|p| f32::from_bits(bits[(f * px + p) % bits.len()])).collect()).unwrap())
            .collect();
        let pad = if dotted { PadType::Dotted } else { PadType::Plain };
        let video = TactileVideo::new("s", "o", "p", pad, frames.clone()).unwrap();
        let bytes = encode_tact(&video).unwrap();
        let back = decode_tact(&bytes, "mem").unwrap();
        prop_assert_eq!(back.pad_type, pad);
        prop_assert_eq!(&back.frames, &frames);
        let again = encode_tact(&back.into_video("s", "o", "p").unwrap()).unwrap();
        prop_assert_eq!(again, bytes);
    }
}

#[test]
fn truncated_and_foreign_tact_files_are_rejected() {
    let d = common::tiny_dataset(3);
    let bytes = encode_tact(&d.videos[0]).unwrap();
    assert!(matches!(
        decode_tact(b"NOPE....", "x"),
        Err(DatasetIoError::BadMagic { .. })
    ));
    assert!(matches!(
        decode_tact(&bytes[..bytes.len() - 1], "x"),
        Err(DatasetIoError::Truncated { .. })
    ));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(
        decode_tact(&long, "x"),
        Err(DatasetIoError::TrailingBytes { .. })
    ));
}

#[test]
fn dataset_directories_round_trip_bit_exactly() {
    let d = common::tiny_dataset(3);
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    write_dataset(&d, &a).unwrap();
    let loaded = read_dataset(&a).unwrap();
    assert_eq!(loaded, d);
    write_dataset(&loaded, &b).unwrap();
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn models_indices_and_reports_round_trip_bit_exactly() {
    let d = common::tiny_dataset(4);
    let model = quick_model(&d);
    let tmp = tempfile::tempdir().unwrap();

    let mp = tmp.path().join("model.json");
    save_model(&model, &mp).unwrap();
    let loaded = load_model(&mp).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(model_to_json(&loaded), fs::read_to_string(&mp).unwrap());
    assert!(model_from_json(
        &fs::read_to_string(&mp)
            .unwrap()
            .replace("octo-tactile-encoder", "other")
    )
    .is_err());

    let index = build_index(&d, &model, &[Split::Train], &SaliencyConfig::with_k(3)).unwrap();
    let ip = tmp.path().join("index.json");
    save_index(&index, &ip).unwrap();
    let li = load_index(&ip).unwrap();
    assert_eq!(index_to_json(&li), fs::read_to_string(&ip).unwrap());
    assert_eq!(li.entries(), index.entries());
    let text = fs::read_to_string(&ip).unwrap();
    assert!(matches!(
        index_from_json(&text.replace("\"version\": 1", "\"version\": 9")),
        Err(IndexFileError::UnsupportedVersion(9))
    ));

    let llm = LlmBackend::ScriptedMock(ScriptedMock::new(MockRules::from_dataset(&d)));
    let mut cfg = EvalConfig::default();
    cfg.saliency = SaliencyConfig::with_k(3);
    for c in &mut cfg.categories {
        c.objects = 2;
        c.offset = 0;
    }
    let report = run_guessing(&d, &model, &index, &llm, llm.name(), &Variant::ALL, &cfg).unwrap();
    let rp = tmp.path().join("report.json");
    emit_report(&report, &rp).unwrap();
    let lr = read_report(&rp).unwrap();
    assert_eq!(lr, report);
    assert_eq!(lr.to_json(), fs::read_to_string(&rp).unwrap());
    assert_eq!(EvalReport::from_json(&report.to_json()).unwrap(), report);
}
