//! Study drivers on tiny data: wiring, not accuracy.

use std::collections::BTreeSet;

use tactile_twin::experiments::{
    run_ablation, run_crossface, run_face, run_table1, run_unseen, split, AblationParams, CrossfaceParams, ModelSpec,
    ReadVariant, SplitSpec, Study, StudyConfig, UnseenParams, BASELINE_BIN,
};
use tactile_twin::model::TINY_LAYERS;

fn tiny(study: Study, faces: Vec<u8>) -> StudyConfig {
    let mut model = ModelSpec::small();
    model.layers = TINY_LAYERS.to_vec();
    model.train.max_epochs = 2;
    StudyConfig::new(study, faces, 0.01, 11, model)
}

#[test]
fn ablation_at_factor_one_retrains_the_baseline_exactly() {
    let cfg = tiny(Study::Ablation(AblationParams::default()), vec![2]);
    let base = run_face(&cfg, 2).unwrap();
    let params = AblationParams { factors: vec![0, 3] };
    let fresh = run_ablation(&cfg, 2, &params, None).unwrap();
    let reused = run_ablation(&cfg, 2, &params, Some(&base)).unwrap();
    assert_eq!(fresh.runs[0].trained.checkpoint, base.trained.checkpoint);
    assert_eq!(reused.runs[0].trained.checkpoint, base.trained.checkpoint);
    assert_eq!(fresh.runs[1].trained.checkpoint, reused.runs[1].trained.checkpoint);
    assert_eq!(fresh.runs[1].train_samples, base.split.train.len().div_ceil(8));
    // the test set never changes
    assert_eq!(fresh.runs[1].test.records.len(), base.test.records.len());
}

#[test]
fn splits_partition_every_case() {
    let cfg = tiny(Study::Table1, vec![4]);
    let run = run_face(&cfg, 4).unwrap();
    let s = &run.split;
    let all: BTreeSet<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
    assert_eq!(all.len(), run.dataset.len());
    assert_eq!(s.train.len() + s.validation.len() + s.test.len(), run.dataset.len());
    // every single-contact case with enough records shows up in all three parts
    let cases = |idx: &[usize]| -> BTreeSet<&str> { idx.iter().map(|&i| run.dataset.records[i].case_id.as_str()).collect() };
    let (tr, va, te) = (cases(&s.train), cases(&s.validation), cases(&s.test));
    for c in tr.iter().filter(|c| c.starts_with('s')) {
        assert!(va.contains(c) && te.contains(c), "{c}");
    }
    // and the split is a pure function of the data and the seed
    assert_eq!(split(&run.dataset, &cfg.split).unwrap(), *s);
    let other = SplitSpec {
        seed: cfg.split.seed + 1,
        ..cfg.split.clone()
    };
    assert_ne!(split(&run.dataset, &other).unwrap().train, s.train);
}

#[test]
fn unseen_study_tests_only_unseen_locations() {
    let params = UnseenParams::default();
    let cfg = tiny(Study::Unseen(params.clone()), vec![1]);
    let r = run_unseen(&cfg, 1, &params).unwrap();
    assert!(r.unseen.records.iter().all(|m| m.location.is_some_and(|c| !params.is_seen(c))));
    // the seen test split also holds non-contact records, which have no location
    assert!(r.seen.records.iter().filter_map(|m| m.location).all(|c| params.is_seen(c)));
    assert!(r.seen.records.iter().any(|m| m.location.is_none()));
    let locations: BTreeSet<_> = r.unseen.records.iter().filter_map(|m| m.location).collect();
    assert_eq!(locations.len(), 75);
    assert_eq!(r.unseen_location_e_loc().len(), 75);
}

#[test]
fn crossface_isolated_reads_do_not_see_the_opposite_load() {
    let params = CrossfaceParams {
        samples_per_layout: 2,
        ..CrossfaceParams::default()
    };
    let cfg = tiny(Study::Crossface(params.clone()), vec![1, 2, 3, 4, 5]);
    let t1 = run_table1(&cfg).unwrap();
    let r = run_crossface(&cfg, &t1, &params).unwrap();
    for face in params.grasp_faces {
        let base = &r.cell(ReadVariant::Full, face, BASELINE_BIN).unwrap().contact;
        for &bin in &params.bins {
            let iso = &r.cell(ReadVariant::Isolated, face, bin).unwrap().contact;
            assert!((iso.mean_e_f_percent() - base.mean_e_f_percent()).abs() < 1e-3, "face {face} bin {bin}");
            assert!((iso.mean_a_sim() - base.mean_a_sim()).abs() < 1e-4);
        }
        assert_eq!(r.e_f_series(ReadVariant::Full, face).len(), params.bins.len());
        let shifted = r.cell(ReadVariant::Shifted, face, 1.0).unwrap();
        assert_eq!(shifted.a_non.len(), 3);
    }
}
