use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitseg::synth::{
    dataset_digest, generate_split, load_dataset, sample_plan, save_dataset, split_validation_per_class, Split,
};
use splitseg::{ClassLabel, Dataset, DatasetSpec};

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Independent draw of one sample's class list: a count, then each class
/// by inverse CDF over the cumulative weights.
fn oracle_plan(spec: &DatasetSpec, tag: u64, index: u64) -> Vec<u32> {
    let seed = mix(mix(spec.seed ^ tag).wrapping_add(index));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(spec.min_instances..=spec.max_instances);
    let weights: Vec<f64> = (1..=spec.num_classes as u32)
        .map(|c| if spec.rare_class == Some(c) { spec.rare_weight } else { 1.0 })
        .collect();
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap();
    (0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            (cumulative.partition_point(|&c| c <= u) + 1).min(weights.len()) as u32
        })
        .collect()
}

const TRAIN_TAG: u64 = 0x7452_4149_4e00_0001;

#[test]
fn class_counts_follow_the_sampler() {
    let spec = DatasetSpec {
        train_samples: 500,
        val_samples: 0,
        ..DatasetSpec::default()
    };
    let samples = generate_split(&spec, Split::Train).unwrap();
    let mut got = [0usize; 5];
    let mut want = [0usize; 5];
    for s in &samples {
        let plan = oracle_plan(&spec, TRAIN_TAG, s.sample_id);
        let drawn: Vec<u32> = s.annotations.iter().map(|a| a.class.0).collect();
        assert_eq!(drawn, plan, "sample {}", s.sample_id);
        for c in plan {
            want[c as usize - 1] += 1;
        }
        for a in &s.annotations {
            got[a.class.index() - 1] += 1;
        }
    }
    assert_eq!(got, want);
    let total: usize = got.iter().sum();
    let rare = got[4] as f64 / total as f64;
    assert!((rare - 0.35 / 4.35).abs() < 0.02, "rare share {rare}, counts {got:?}");
}

#[test]
fn per_class_validation_matches_linear_scan() {
    let spec = DatasetSpec {
        train_samples: 0,
        val_samples: 80,
        ..DatasetSpec::default()
    };
    let val = generate_split(&spec, Split::Val).unwrap();
    for c in 1..=5u32 {
        let class = ClassLabel(c);
        let sub = split_validation_per_class(&val, class);
        let mut ids = Vec::new();
        let mut instances = 0;
        for s in &val {
            let n = s.annotations.iter().filter(|a| a.class == class).count();
            if n > 0 {
                ids.push(s.sample_id);
                instances += n;
            }
        }
        assert_eq!(sub.samples.iter().map(|s| s.sample_id).collect::<Vec<_>>(), ids);
        assert_eq!(sub.samples.iter().map(|s| s.annotations.len()).sum::<usize>(), instances);
        assert!(sub.samples.iter().flat_map(|s| &s.annotations).all(|a| a.class == class));
        assert_eq!(sub.absent, ids.is_empty());
    }
    assert!(split_validation_per_class(&val, ClassLabel(9)).absent);
}

#[test]
fn saved_dataset_round_trips_with_stable_digest() {
    let spec = DatasetSpec {
        train_samples: 6,
        val_samples: 0,
        ..DatasetSpec::default()
    };
    let ds = Dataset {
        catalog: spec.catalog(),
        samples: generate_split(&spec, Split::Train).unwrap(),
    };
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(
        dataset_digest(&back.catalog, &back.samples).unwrap(),
        dataset_digest(&ds.catalog, &ds.samples).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn samples_depend_only_on_their_index(seed in any::<u64>(), n in 2usize..6, k in 1usize..6) {
        let k = k.min(n);
        let long = DatasetSpec { seed, train_samples: n, val_samples: 0, ..DatasetSpec::default() };
        let short = DatasetSpec { train_samples: k, ..long.clone() };
        let a = generate_split(&long, Split::Train).unwrap();
        let b = generate_split(&short, Split::Train).unwrap();
        prop_assert_eq!(&a[..k], &b[..]);
        for s in &a {
            prop_assert_eq!(
                s.annotations.iter().map(|x| x.class).collect::<Vec<_>>(),
                sample_plan(&long, Split::Train, s.sample_id)
            );
        }
    }
}
