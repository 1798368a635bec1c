//! Binary formats: bit-exact roundtrips, version checks and determinism.

mod common;

use metassm::nssm::{read_checkpoint, write_checkpoint, NeuralSsm};
use metassm::vdp::{read_dataset, write_dataset, SourceSpec};
use proptest::prelude::*;

use common::checks::{codec_spec, roundtrips_hold};

#[test]
fn dataset_and_checkpoint_roundtrips() {
    for seed in 0..5 {
        assert!(roundtrips_hold(seed), "seed {seed}");
    }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let gen = |seed| {
        let data = SourceSpec {
            n_systems: 4,
            t_final_range: [1.0, 2.0],
            seed,
            ..SourceSpec::default()
        }
        .generate()
        .unwrap();
        write_dataset(&data.trajectories, None)
    };
    assert_eq!(gen(8), gen(8));
    assert_ne!(gen(8), gen(9));
    let ckpt = |seed| write_checkpoint(&NeuralSsm::init(&codec_spec(4, vec![8]), seed).unwrap(), None);
    assert_eq!(ckpt(1), ckpt(1));
    assert_ne!(ckpt(1), ckpt(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn checkpoint_roundtrip_any_architecture(
        seed in 0u64..1000,
        n_z in 1usize..6,
        hidden in prop::collection::vec(1usize..9, 0..3),
    ) {
        let model = NeuralSsm::init(&codec_spec(n_z, hidden), seed).unwrap();
        let (back, _) = read_checkpoint(&write_checkpoint(&model, None)).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn truncated_files_are_rejected(cut in 1usize..64) {
        let model = NeuralSsm::init(&codec_spec(3, vec![4]), 0).unwrap();
        let bytes = write_checkpoint(&model, None);
        prop_assert!(read_checkpoint(&bytes[..bytes.len() - cut]).is_err());
        let data = SourceSpec { n_systems: 1, t_final_range: [0.5, 0.5], ..SourceSpec::default() }.generate().unwrap();
        let bytes = write_dataset(&data.trajectories, None);
        prop_assert!(read_dataset(&bytes[..bytes.len() - cut]).is_err());
    }
}
