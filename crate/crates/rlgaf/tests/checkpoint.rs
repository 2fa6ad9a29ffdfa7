use proptest::prelude::*;

use rlgaf::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Role, MAGIC};
use rlgaf::RunError;
use rlgaf_core::discriminator::DiscModel;
use rlgaf_core::seqmodel::{Architecture, GenModel, ModelConfig};
use rlgaf_core::RngRoot;

fn model(seed: u64, architecture: Architecture, hidden: usize, terminator: Option<u32>) -> GenModel {
    let cfg = ModelConfig { architecture, hidden_dim: hidden, terminator, ..Default::default() };
    let mut gen = GenModel::new(cfg, &mut RngRoot::new(seed).stream("model-init")).unwrap();
    let mut rng = RngRoot::new(seed).stream("perturb");
    gen.params_mut().fill_uniform(3.0, &mut rng);
    gen
}

fn bits(gen: &GenModel) -> Vec<u64> {
    gen.params().flat_values().map(f64::to_bits).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_is_bit_exact(seed in any::<u64>(), attention in any::<bool>(), hidden in 1usize..24, term in any::<bool>()) {
        let arch = if attention { Architecture::Attention } else { Architecture::Recurrent };
        let gen = model(seed, arch, hidden, term.then_some(31));
        let ckpt = Checkpoint::of_generator(&gen, seed);
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        prop_assert_eq!(&back, &ckpt);
        let loaded = back.into_generator().unwrap();
        prop_assert_eq!(bits(&loaded), bits(&gen));
        prop_assert_eq!(loaded.config(), gen.config());
    }
}

#[test]
fn file_round_trip_and_role_check() {
    let dir = tempfile::tempdir().unwrap();
    let gen = model(1, Architecture::Recurrent, 32, Some(31));
    let disc = DiscModel::from_generator(&gen, &mut RngRoot::new(1).stream("disc-init")).unwrap();
    let gp = dir.path().join("g.ckpt");
    let dp = dir.path().join("d.ckpt");
    save_checkpoint(&Checkpoint::of_generator(&gen, 9), &gp).unwrap();
    save_checkpoint(&Checkpoint::of_discriminator(&disc, 9), &dp).unwrap();
    let g = load_checkpoint(&gp).unwrap();
    assert_eq!((g.seed, g.role), (9, Role::Generator));
    assert_eq!(bits(&g.into_generator().unwrap()), bits(&gen));
    let d = load_checkpoint(&dp).unwrap();
    assert_eq!(d.role, Role::Discriminator);
    assert_eq!(d.clone().into_discriminator().unwrap().params(), disc.params());
    assert!(matches!(d.into_generator(), Err(RunError::Format(_))));
}

#[test]
fn header_layout() {
    let gen = model(2, Architecture::Recurrent, 4, Some(31));
    let bytes = Checkpoint::of_generator(&gen, 0x0102030405060708).to_bytes();
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
    assert_eq!(&bytes[8..16], &0x0102030405060708u64.to_le_bytes());
}

#[test]
fn bad_magic_is_a_format_error() {
    let mut bytes = Checkpoint::of_generator(&model(3, Architecture::Recurrent, 4, Some(31)), 0).to_bytes();
    bytes[..4].copy_from_slice(b"XXXX");
    let err = Checkpoint::from_bytes(&bytes).unwrap_err();
    assert!(matches!(err, RunError::Format(ref m) if m.contains("magic")), "{err:?}");
}

#[test]
fn version_mismatch_is_rejected() {
    let mut bytes = Checkpoint::of_generator(&model(3, Architecture::Recurrent, 4, Some(31)), 0).to_bytes();
    bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
    let err = Checkpoint::from_bytes(&bytes).unwrap_err();
    assert!(matches!(err, RunError::Format(ref m) if m.contains("version")), "{err:?}");
}

#[test]
fn every_truncation_is_a_format_error() {
    let bytes = Checkpoint::of_generator(&model(4, Architecture::Attention, 3, None), 0).to_bytes();
    for cut in 0..bytes.len() {
        let err = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, RunError::Format(_)), "cut {cut}: {err:?}");
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(Checkpoint::from_bytes(&extra), Err(RunError::Format(_))));
}

#[test]
fn absurd_tensor_sizes_fail_without_allocating() {
    let gen = model(5, Architecture::Recurrent, 2, Some(31));
    let mut bytes = Checkpoint::of_generator(&gen, 0).to_bytes();
    let name_len = gen.params().entries().next().unwrap().0.len();
    let header = 4 + 4 + 8 + 1 + 20 + 5 + 1 + 8 + 4;
    let dim_at = header + 4 + name_len + 4;
    bytes[dim_at..dim_at + 8].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(RunError::Format(_))));
}
