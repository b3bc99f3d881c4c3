mod common;

use rand::seq::SliceRandom;
use rand::Rng;

use social_processes::checkpoint::Checkpoint;
use social_processes::datasets::{
    generate_glancing_dataset, window_indices, Dataset, DatasetKind, GroupTimeline, Split,
    Standardization, StoreHeader, WindowingConfig, LAYOUT_VERSION,
};
use social_processes::models::FeatureLayout;
use social_processes::models::{ModelConfig, Paths, ProcessModel, Variant};
use social_processes::nn::ParamArchive;
use social_processes::Error;

use common::rng;

fn archive(seed: u64) -> ParamArchive {
    let v: Variant = "sp-gru".parse().unwrap();
    let mut cfg = ModelConfig::glancing(v, Paths::LatentDet);
    cfg.seq_hidden = 8;
    ProcessModel::new(cfg, seed).unwrap().params.to_archive()
}

#[test]
fn averaging_is_independent_of_archive_order() {
    let archives: Vec<ParamArchive> = (0..5).map(archive).collect();
    let mean = ParamArchive::average(&archives).unwrap();
    let mut r = rng(1);
    for _ in 0..10 {
        let mut shuffled = archives.clone();
        shuffled.shuffle(&mut r);
        assert_eq!(ParamArchive::average(&shuffled).unwrap(), mean);
    }
    let single = ParamArchive::average(&archives[..1]).unwrap();
    assert_eq!(single, archives[0]);
    let (name, t) = mean.entries.iter().next().unwrap();
    let by_hand: f64 = archives
        .iter()
        .map(|a| a.entries[name].data[0])
        .sum::<f64>()
        / 5.0;
    assert!((t.data[0] - by_hand).abs() < 1e-15);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    for name in ["np", "sp-mlp", "asp-gru-multihead"] {
        let v: Variant = name.parse().unwrap();
        let mut cfg = ModelConfig::glancing(v, Paths::LatentDet);
        cfg.seq_hidden = 8;
        let mut model = ProcessModel::new(cfg, 5).unwrap();
        // awkward values survive the text format
        let id = model.params.ids().next().unwrap();
        model.params.get_mut(id)[[0, 0]] = 0.1 + 0.2;
        model.params.get_mut(id)[[0, 1]] = -1.0e-310;
        let mut ck = Checkpoint::new(&model, Standardization::identity(1));
        ck.val_nll = Some(-0.12345678901234568);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let restored = back.to_model().unwrap();
        for id in model.params.ids() {
            let (a, b) = (model.params.get(id), restored.params.get(id));
            assert!(a
                .iter()
                .zip(b.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn checkpoint_rejects_other_layouts() {
    let v: Variant = "np".parse().unwrap();
    let model = ProcessModel::new(ModelConfig::glancing(v, Paths::Latent), 0).unwrap();
    let ck = Checkpoint::new(&model, Standardization::identity(1));
    assert!(matches!(
        ck.check_layout(LAYOUT_VERSION + 1),
        Err(Error::LayoutVersion { .. })
    ));
}

#[test]
fn dataset_store_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(2);

    let glance = Dataset::glancing(generate_glancing_dataset(0.05).unwrap());
    let p = dir.path().join("glancing.jsonl");
    glance.write(&p).unwrap();
    assert_eq!(Dataset::read(&p).unwrap(), glance);

    let tl = GroupTimeline {
        group_id: "g1".into(),
        split: Split::Train,
        sample_rate: 10.0,
        start_frame: 3,
        participants: vec!["a".into(), "b".into()],
        dim: 2,
        n_frames: 40,
        values: (0..160).map(|_| r.random_range(-1.0..1.0)).collect(),
    };
    let steps = WindowingConfig {
        obs_len: 0.5,
        fut_len: 0.5,
        max_offset: 0.3,
        ..Default::default()
    }
    .steps()
    .unwrap();
    let mut ds = Dataset {
        header: StoreHeader::new(DatasetKind::Windows, FeatureLayout::Generic, 2),
        timelines: vec![tl.clone()],
        windows: window_indices(tl.n_frames, steps)
            .into_iter()
            .map(|w| (0, w))
            .collect(),
        sequences: Vec::new(),
    };
    ds.header.standardization = Some(Standardization::identity(2));
    let p = dir.path().join("windows.jsonl");
    ds.write(&p).unwrap();
    let back = Dataset::read(&p).unwrap();
    assert_eq!(back, ds);
    let samples = back.samples(Some(Split::Train));
    assert_eq!(samples.len(), ds.windows.len());
    assert!(back.samples(Some(Split::Test)).is_empty());

    // a future layout version is refused
    let text = std::fs::read_to_string(&p).unwrap();
    let bumped = text.replacen(
        &format!("\"layout_version\":{LAYOUT_VERSION}"),
        &format!("\"layout_version\":{}", LAYOUT_VERSION + 1),
        1,
    );
    assert_ne!(bumped, text);
    std::fs::write(&p, bumped).unwrap();
    assert!(matches!(
        Dataset::read(&p),
        Err(Error::LayoutVersion { .. })
    ));
}
