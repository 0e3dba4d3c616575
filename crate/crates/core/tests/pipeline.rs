use dimabsa::dataio::{flatten_asr, group_predictions, DatasetSplit, PredictionRow, SplitMeta};
use dimabsa::regressor::{
    mean_predictor_rmse, train, LossConfig, Regressor, ToyEncoder, ToyEncoderConfig, TrainConfig,
};
use dimabsa::{synthetic, Annotation, Subtask};

fn small_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        max_epochs: 6,
        seed: 9,
        ..TrainConfig::default()
    }
}

fn model() -> Regressor<ToyEncoder> {
    Regressor::new(ToyEncoder::new(ToyEncoderConfig::default()), 9)
}

#[test]
fn flatten_train_predict_group_keeps_counts() {
    let (train_split, dev_split) = synthetic::train_dev(120, 0.25, 4);
    let (tr, dev) = (flatten_asr(&train_split), flatten_asr(&dev_split));
    let mut m = model();
    let report = train(&mut m, &tr, &dev, &small_config(), &LossConfig::default()).unwrap();
    assert!(!report.history.is_empty());
    let best = report.best_val_rmse.unwrap();
    assert!(
        best < mean_predictor_rmse(&tr, &dev).unwrap(),
        "best {best}"
    );

    let vas = m.predict(&dev).unwrap();
    assert_eq!(vas.len(), dev.len());
    let rows: Vec<PredictionRow> = dev
        .iter()
        .zip(vas)
        .map(|(r, va)| PredictionRow {
            review_id: r.review_id.clone(),
            aspect: r.aspect.clone(),
            occurrence: r.occurrence,
            va,
        })
        .collect();
    let entries = group_predictions(&dev, &rows).unwrap();
    assert_eq!(entries.len(), dev_split.len());
    for (e, r) in entries.iter().zip(&dev_split.records) {
        let (Annotation::Aspects(got), Annotation::Aspects(want)) = (&e.payload, &r.annotation)
        else {
            panic!("ASR payload expected");
        };
        assert_eq!(got.len(), want.len());
        assert!(got.iter().zip(want).all(|(g, w)| g.aspect == w.aspect));
    }
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let (train_split, dev_split) = synthetic::train_dev(40, 0.25, 5);
    let mut m = model();
    let before = m.head.clone();
    let cfg = TrainConfig {
        max_epochs: 0,
        ..small_config()
    };
    let report = train(
        &mut m,
        &flatten_asr(&train_split),
        &flatten_asr(&dev_split),
        &cfg,
        &LossConfig::default(),
    )
    .unwrap();
    assert!(report.history.is_empty());
    assert_eq!(report.best_val_rmse, None);
    assert_eq!(m.head, before);
}

#[test]
fn same_seed_gives_identical_history() {
    let (train_split, dev_split) = synthetic::train_dev(60, 0.25, 6);
    let (tr, dev) = (flatten_asr(&train_split), flatten_asr(&dev_split));
    let run = || {
        let mut m = model();
        train(&mut m, &tr, &dev, &small_config(), &LossConfig::default()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.best_epoch, b.best_epoch);
}

#[test]
fn predictions_stay_on_scale_and_repeat() {
    let split = DatasetSplit::new(
        SplitMeta::default(),
        Subtask::Asr,
        synthetic::generate(20, 8),
    );
    let rows = flatten_asr(&split);
    let mut m = model();
    for w in m
        .head
        .heads
        .w_v
        .iter_mut()
        .chain(m.head.heads.w_a.iter_mut())
    {
        *w *= 1e4;
    }
    let vas = m.predict(&rows).unwrap();
    for va in &vas {
        assert!((1.0..=9.0).contains(&va.valence()) && (1.0..=9.0).contains(&va.arousal()));
    }
    let doubled = m.predict(&[rows[0].clone(), rows[0].clone()]).unwrap();
    assert_eq!(doubled[0], doubled[1]);
    assert_eq!(doubled[0], vas[0]);
}
