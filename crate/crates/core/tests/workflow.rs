use impnet::autonet::{
    checkpoint_path, checkpoint_size, load_checkpoint, sample_losses, split_for_seed, train,
    ArchMode, Architecture, AutoencoderModel, CheckpointPolicy, TrainConfig,
};
use impnet::latentmap::{embed_groups, write_embedding_csv, TsneConfig};
use impnet::spectra::{
    gen_dataset, imps_file_size, read_dataset, write_dataset, FrequencyGrid, OpRanges, VscParams,
};
use impnet::tensorize::{fit_norm, flatten, normalize, FlatSample};

fn dataset(n: usize, t: usize) -> impnet::spectra::Dataset {
    let grid = FrequencyGrid::integer_hz(t).unwrap();
    gen_dataset(n, 11, &VscParams::default(), &OpRanges::default(), &grid).unwrap()
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(12, 40);
    let path = dir.path().join("d.imps");
    write_dataset(&ds, &path).unwrap();
    assert_eq!(
        std::fs::metadata(&path).unwrap().len() as usize,
        imps_file_size(40, 12)
    );
    let back = read_dataset(&path).unwrap();
    assert_eq!(back, ds);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 1);
    std::fs::write(&path, &bytes).unwrap();
    assert!(read_dataset(&path).is_err());
}

#[test]
fn training_writes_and_prunes_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(30, 8);
    let arch = Architecture::new(ArchMode::Monolithic, 64, vec![16], 4).unwrap();
    let cfg = TrainConfig {
        epochs: 6,
        learning_rate: 1e-3,
        checkpoint: CheckpointPolicy {
            dir: Some(dir.path().to_path_buf()),
            keep_last: Some(2),
            with_adam_state: true,
        },
        ..TrainConfig::default()
    };
    let out = train(&ds, (20, 10), arch.clone(), &cfg).unwrap();
    assert_eq!(out.history.len(), 6);
    assert_eq!(split_for_seed(30, (20, 10), cfg.seed).unwrap(), out.split);

    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["epoch_0005.aeck", "epoch_0006.aeck"]);

    let last = checkpoint_path(dir.path(), 6);
    assert_eq!(
        std::fs::metadata(&last).unwrap().len() as usize,
        checkpoint_size(&arch, true)
    );
    let (model, adam) = load_checkpoint(&last).unwrap();
    assert_eq!(model, out.model);
    assert_eq!(adam.unwrap(), out.adam);

    // Same seed, same result.
    let again = train(
        &ds,
        (20, 10),
        arch,
        &TrainConfig {
            checkpoint: CheckpointPolicy::default(),
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(again.model, out.model);
}

#[test]
fn zero_model_has_unit_loss() {
    let ds = dataset(5, 8);
    let flat: Vec<FlatSample> = ds.curves().map(flatten).collect();
    let norm = fit_norm(flat.iter()).unwrap();
    let arch = Architecture::new(ArchMode::Grouped, 64, vec![16], 8).unwrap();
    let model = AutoencoderModel::zeros(arch, norm).unwrap();
    let xs: Vec<FlatSample> = flat.iter().map(|x| normalize(x, &norm)).collect();
    for l in sample_losses(&model, &xs, 1e-8, 4).unwrap() {
        assert!((l - 1.0).abs() < 1e-6, "{l}");
    }
}

#[test]
fn grouped_latents_embed_and_export() {
    let ds = dataset(40, 8);
    let arch = Architecture::new(ArchMode::Grouped, 64, vec![16], 16).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let out = train(&ds, (40, 0), arch, &cfg).unwrap();
    let latents: Vec<_> = ds
        .curves()
        .map(|c| out.model.encode(&flatten(c), false).unwrap())
        .collect();
    let tsne = TsneConfig {
        perplexity: 10.0,
        iterations: 300,
        ..TsneConfig::default()
    };
    let emb = embed_groups(&latents, &tsne).unwrap();
    assert_eq!(emb.joint.len(), 160);
    assert!((-1.0..=1.0).contains(&emb.joint_silhouette));
    // n = 40 > 3 * 10, so every element gets its own map.
    assert_eq!(emb.per_element.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("joint.csv");
    write_embedding_csv(&emb.joint, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("sample_index,element,x,y"));
    assert_eq!(text.lines().count(), 161);
}
