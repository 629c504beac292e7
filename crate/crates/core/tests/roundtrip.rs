use mmfuse::dataset::{compute_stats, load_manifest, parse_manifest, save_manifest, TextKind};
use mmfuse::encoders::{load_embeddings, save_embeddings, EmbeddingSequence};
use mmfuse::model::{train, Modality};
use mmfuse::synth::{planted, toy_model_config, wbms_mirror, write_planted, PlantedConfig, TOY_VOCAB};
use mmfuse::{Category, Error, Matrix, Model};

#[test]
fn manifest_survives_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let records = wbms_mirror();
    let path = dir.path().join("m.jsonl");
    save_manifest(&path, &records).unwrap();
    assert_eq!(load_manifest(&path).unwrap(), records);
}

#[test]
fn mirror_matches_benchmark_counts() {
    let records = wbms_mirror();
    assert_eq!(records.len(), 2130);
    assert!(records.iter().filter(|r| r.text_kind == TextKind::Image).all(|r| r.meme_text().is_empty()));
    let stats = compute_stats(&records);
    let kitchen = stats.rows.iter().find(|(c, _)| *c == Category::Kitchen).unwrap().1.clone();
    assert_eq!((kitchen.count, kitchen.different, kitchen.same, kitchen.image), (1076, 780, 125, 171));
}

#[test]
fn manifest_errors_name_the_line() {
    let good = r#"{"id":"a","category":"Kitchen","text_kind":"Same","caption":"x","overlay":"x","image_ref":"a.mme"}"#;
    let text = format!("{good}\n{{not json\n");
    match parse_manifest(&text) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let dup = format!("{good}\n{good}\n");
    let err = parse_manifest(&dup).unwrap_err().to_string();
    assert!(err.contains("duplicate id a"), "{err}");
}

#[test]
fn embeddings_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let m = Matrix::from_rows(&[[1.0, -0.0, f64::MIN_POSITIVE], [1e300, -2.5, 1.0 / 3.0]]);
    let seq = EmbeddingSequence::new(m).unwrap();
    let path = dir.path().join("e.mme");
    save_embeddings(&path, &seq).unwrap();
    let back = load_embeddings(&path).unwrap();
    let bits = |s: &EmbeddingSequence| s.as_matrix().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&seq));
}

#[test]
fn checkpoint_reproduces_predictions() {
    let memes = planted(&PlantedConfig { memes: 16, ..Default::default() });
    let data: Vec<_> = memes.iter().map(|m| m.example(TOY_VOCAB)).collect();
    let mut tc = mmfuse::synth::toy_train_config();
    tc.epochs = 5;
    let (model, _) = train(&data, toy_model_config(3, Modality::Multimodal), &tc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mmh");
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    for e in &data {
        assert_eq!(model.predict(&e.input).unwrap(), back.predict(&e.input).unwrap());
    }
    std::fs::write(&path, b"MMH1 truncated").unwrap();
    assert!(Model::load(&path).is_err());
}

#[test]
fn planted_corpus_loads_back_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let memes = planted(&PlantedConfig::default());
    let manifest = write_planted(dir.path(), &memes).unwrap();
    let records = load_manifest(&manifest).unwrap();
    assert_eq!(records.len(), 64);
    for (r, m) in records.iter().zip(&memes) {
        let patches = mmfuse::encoders::load_matrix(dir.path().join(&r.image_ref)).unwrap();
        assert_eq!(patches, m.patches);
    }
}
