use gsapool_core::dataset::{stratified_folds, synthetic_motif_dataset};
use gsapool_core::model::GsaPoolNet;
use gsapool_core::train::{accuracy, train_fold};
use gsapool_core::{Graph, ModelConfig, TrainConfig};

#[test]
fn synthetic_motifs_are_learned() {
    let d = synthetic_motif_dataset(200, 7).unwrap();
    let plan = stratified_folds(&d, 5, 0).unwrap();
    let split = plan.split(0, &d.labels()).unwrap();
    let pick = |idx: &[usize]| idx.iter().map(|&i| &d.graphs[i]).collect::<Vec<&Graph>>();
    let (train, valid) = (pick(&split.train), pick(&split.valid));
    let model = GsaPoolNet::new(ModelConfig::default(), d.feature_dim, d.num_classes).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        ..TrainConfig::default()
    };
    let (params, curves) = train_fold(&model, &train, &valid, &cfg, 0).unwrap();
    let train_acc = accuracy(&model, &params, &train).unwrap();
    let valid_acc = accuracy(&model, &params, &valid).unwrap();
    let counts = d.class_counts();
    let majority = *counts.iter().max().unwrap() as f64 / d.len() as f64;
    assert!(train_acc >= 0.90, "train accuracy {train_acc}");
    assert!(
        valid_acc >= majority + 0.30,
        "valid accuracy {valid_acc} vs majority {majority}"
    );
    assert!(curves.train_loss.first() > curves.train_loss.last());
}
