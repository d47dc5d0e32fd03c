//! File-level integration: a dataset written to disk, loaded back through
//! the manifest, preprocessed, used to train and serialize models, and
//! evaluated: the whole chain the CLI drives.

use skyseg::evaluation::{
    default_lambda_grid, loo_cross_validate, roc_select_lambda, ConfusionMatrix, EvalReport,
    GridSpec,
};
use skyseg::features::{extract, FeatureFamily, FeatureFrame, FeatureSpec, Neighborhood};
use skyseg::imaging::manifest::load_manifest;
use skyseg::imaging::{io, Split};
use skyseg::model::{load_model, save_model, train, ModelFamily, TrainConfig};
use skyseg::preprocess::Preprocessor;
use skyseg::synth::{synth_dataset, SceneParams};

#[test]
fn dataset_round_trip_train_segment_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let params = SceneParams::well_separated();
    let manifest = synth_dataset(1234, 5, 3, &params, dir.path()).unwrap();
    assert_eq!(manifest.entries.len(), 8);

    // Reload purely from disk.
    let reloaded = load_manifest(&dir.path().join("manifest.csv")).unwrap();
    assert_eq!(reloaded, manifest);
    let dataset = reloaded.load().unwrap();
    assert!(dataset.entries.iter().all(|e| e.prev.is_some()));

    let mut pre = Preprocessor::new();
    pre.calibrate(&dataset.entries);
    let spec = FeatureSpec::new(FeatureFamily::X3, Neighborhood::First);
    let frames: Vec<FeatureFrame> = dataset
        .entries
        .iter()
        .map(|e| {
            let derived = pre.derive(&e.frame, &e.weather, e.prev.as_ref()).unwrap();
            let mut f = extract(&derived, &spec).unwrap();
            f.attach_labels(e.label.as_ref().unwrap()).unwrap();
            f
        })
        .collect();
    let train_frames: Vec<&FeatureFrame> = dataset
        .entries
        .iter()
        .zip(&frames)
        .filter(|(e, _)| e.split == Split::Train)
        .map(|(_, f)| f)
        .collect();

    let mut config = TrainConfig::new(ModelFamily::Gda, spec);
    config.gamma = 0.5;
    let mut model = train(&config, &train_frames).unwrap();
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for f in &train_frames {
        scores.extend(model.score_frame(f).unwrap());
        truth.extend_from_slice(f.labels.as_ref().unwrap());
    }
    model.lambda = roc_select_lambda(&scores, &truth, &default_lambda_grid()).lambda;

    // Serialize, reload, and verify identical predictions.
    let model_path = dir.path().join("gda.model");
    save_model(&model, &model_path).unwrap();
    let restored = load_model(&model_path).unwrap();
    assert_eq!(model, restored);

    let mut images = Vec::new();
    for (entry, features) in dataset.entries.iter().zip(&frames) {
        if entry.split != Split::Test {
            continue;
        }
        let (_, mask) = restored.predict_frame(features).unwrap();

        // Masks written in the label format feed back as inputs.
        let mask_path = dir.path().join("out_mask.txt");
        let as_label = skyseg::imaging::LabelMask::new(mask.clone()).unwrap();
        io::save_label(&as_label, &mask_path).unwrap();
        let mask_reloaded = io::load_label(&mask_path).unwrap();
        assert_eq!(mask_reloaded.grid(), &mask);

        images.push(ConfusionMatrix::from_masks(
            &mask,
            entry.label.as_ref().unwrap().grid(),
        ));
    }
    let report = EvalReport::from_images(images);
    assert!(
        report.aggregate.j_stat() >= 0.9,
        "file round-trip J {}",
        report.aggregate.j_stat()
    );
    let csv = report.to_csv();
    assert!(csv.lines().count() >= 4); // header + 3 images + aggregate
    assert!(csv.starts_with("image,tp,fp,tn,fn"));
}

#[test]
fn loo_report_serializes_and_picks_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(77, 4, 0, &SceneParams::noisy_boundary(), dir.path()).unwrap();
    let dataset = manifest.load().unwrap();
    let mut pre = Preprocessor::new();
    pre.calibrate(&dataset.entries);
    let spec = FeatureSpec::new(FeatureFamily::X3, Neighborhood::Single);
    let frames: Vec<FeatureFrame> = dataset
        .entries
        .iter()
        .map(|e| {
            let derived = pre.derive(&e.frame, &e.weather, e.prev.as_ref()).unwrap();
            let mut f = extract(&derived, &spec).unwrap();
            f.attach_labels(e.label.as_ref().unwrap()).unwrap();
            f
        })
        .collect();

    let mut grid = GridSpec::new(ModelFamily::Gda, vec![spec]);
    grid.gammas = vec![0.1, 1.0];
    grid.lambdas = vec![0.8, 1.0, 1.25];
    let report = loo_cross_validate(&frames, &grid).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert!(report.best.mean_j > 0.5);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.contains("gda"));
}
