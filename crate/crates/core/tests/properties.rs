use proptest::prelude::*;

use driftgauge::descriptors::{compute_delta, ShiftDescriptor, SwdConfig};
use driftgauge::evaluator::model_file::{decode_model, encode_model};
use driftgauge::evaluator::{predict, train, TrainConfig};
use driftgauge::metaset::MetaInstance;
use driftgauge::synth::{gen_gaussian_workload, shift_family, GaussianWorkloadSpec, MixtureComponent};
use driftgauge::workload::{load_embedding_set, moments, save_embedding_set};
use driftgauge::seed;
use rand::Rng;

fn linear_instances(n: usize, seed_: u64) -> Vec<MetaInstance> {
    let mut rng = seed::rng(seed_);
    (0..n)
        .map(|i| {
            let f: [f64; 5] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            MetaInstance {
                task_id: "t".into(),
                sample_set_id: i.to_string(),
                sample_set_size: 10,
                delta: ShiftDescriptor::from_features(f, "d"),
                accuracy: 0.3 + 0.2 * f[0] + 0.1 * f[1] - 0.1 * f[2] + 0.15 * f[3] + 0.05 * f[4],
            }
        })
        .collect()
}

#[test]
fn overfit_loss_is_nearly_monotone() {
    let set = linear_instances(10, 6);
    let model = train(&set, &TrainConfig { patience: 100, ..TrainConfig::default() }).unwrap();
    let curve = model.report.unwrap().train_loss_curve;
    let rises = curve.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 2, "{curve:?}");
}

#[test]
fn descriptors_track_mean_shift() {
    let base = GaussianWorkloadSpec::isotropic(32, 5000, 0.0, 1.0);
    let src = gen_gaussian_workload(&base, 1).unwrap();
    let family = shift_family(&base, &[0.0, 0.5, 1.0, 2.0, 4.0]).unwrap();
    let deltas: Vec<ShiftDescriptor> = family
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let tgt = gen_gaussian_workload(s, 10 + i as u64).unwrap();
            compute_delta(&src, &tgt, &SwdConfig::default(), 1e-8).unwrap()
        })
        .collect();
    for get in [|d: &ShiftDescriptor| d.sd_f, |d: &ShiftDescriptor| d.euclid_mean, |d: &ShiftDescriptor| d.sd_sw] {
        let v: Vec<f64> = deltas.iter().map(get).collect();
        assert!(v.windows(2).all(|w| w[0] < w[1]), "{v:?}");
    }
}

fn arb_spec() -> impl Strategy<Value = GaussianWorkloadSpec> {
    (1usize..6, 1usize..40, -3.0f64..3.0, 0.1f64..2.0, any::<bool>()).prop_map(|(dim, count, mean, sd, mix)| {
        let mut spec = GaussianWorkloadSpec::isotropic(dim, count, mean, sd);
        if mix {
            spec.mixture = Some(vec![
                MixtureComponent { weight: 0.3, mean: vec![mean; dim], stddev: vec![sd; dim] },
                MixtureComponent { weight: 0.7, mean: vec![-mean; dim], stddev: vec![0.5 * sd; dim] },
            ]);
        }
        spec
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_workloads_round_trip(spec in arb_spec(), seed_ in any::<u64>()) {
        let set = gen_gaussian_workload(&spec, seed_).unwrap();
        prop_assert!(set.data().iter().all(|v| v.is_finite()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.fsemb");
        save_embedding_set(&set, &path).unwrap();
        let back = load_embedding_set(&path).unwrap();
        prop_assert_eq!(back.data(), set.data());
        prop_assert_eq!((back.rows(), back.dim()), (spec.count, spec.dim));
        prop_assert!(moments(&back, 1e-8).std().all(|s| s > 0.0));
    }

    #[test]
    fn predictions_stay_in_unit_interval_across_reserialization(
        features in proptest::collection::vec(-50.0f64..50.0, 5),
    ) {
        let origin = std::path::Path::new("m");
        let (loaded, _) = decode_model(&encode_model(trained(), None).unwrap(), origin).unwrap();
        let delta = ShiftDescriptor::from_features(features.try_into().unwrap(), "d");
        let p = predict(&loaded, &delta).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((0.0..=1.0).contains(&predict(trained(), &delta).unwrap()));
        let (again, _) = decode_model(&encode_model(&loaded, None).unwrap(), origin).unwrap();
        prop_assert_eq!(predict(&again, &delta).unwrap().to_bits(), p.to_bits());
    }
}

fn trained() -> &'static driftgauge::evaluator::Evaluator {
    static MODEL: std::sync::OnceLock<driftgauge::evaluator::Evaluator> = std::sync::OnceLock::new();
    MODEL.get_or_init(|| train(&linear_instances(30, 2), &TrainConfig::default()).unwrap())
}
