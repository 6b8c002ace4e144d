//! Manifest and blob round trips, chain validation through the file format,
//! and loader error paths.

use proptest::prelude::*;

use spikesim_core::gen;
use spikesim_core::ir::{
    load_manifest, save_manifest, Coding, LayerConfig, LayerShape, NetworkDesc, NeuronParams,
    NeuronType, PolicyMode, PoolMode, WeightTensor,
};
use spikesim_core::Error;

fn tiny_net() -> NetworkDesc {
    NetworkDesc {
        name: "tiny".into(),
        t: 1,
        layers: vec![LayerConfig {
            name: "only".into(),
            shape: LayerShape::new(1, 1, 1, 1, 1, 1, 0, 1, 1).unwrap(),
            coding: Coding::BinarySpike,
            neuron: NeuronParams {
                neuron_type: NeuronType::If,
                threshold: 1,
                leak_shift: 0,
                bias: vec![0],
            },
            pool: PoolMode::None,
            width_policy: PolicyMode::Saturate,
            residual: None,
            post_shift_left: 0,
        }],
        weights: vec![WeightTensor::from_data(1, 1, 1, 1, vec![3]).unwrap()],
        classes: 1,
        ann_flops: None,
    }
}

#[test]
fn minimal_single_layer_manifest_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = save_manifest(&tiny_net(), dir.path()).unwrap();
    let net = load_manifest(&path).unwrap();
    assert_eq!(net.layers.len(), 1);
    assert_eq!(net, tiny_net());
}

#[test]
fn inconsistent_declared_output_is_a_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = save_manifest(&tiny_net(), dir.path()).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    // break the declared output size
    let broken = text.replace("\"output\": {\n        \"h\": 1,", "\"output\": {\n        \"h\": 2,");
    assert_ne!(text, broken, "fixture edit failed");
    std::fs::write(&path, broken).unwrap();
    let err = load_manifest(&path).unwrap_err();
    assert!(
        matches!(err, Error::Manifest(ref m) if m.contains("stride formula")),
        "{err}"
    );
}

#[test]
fn missing_blob_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = save_manifest(&tiny_net(), dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("only.w.bin")).unwrap();
    assert!(load_manifest(&path).is_err());
}

#[test]
fn corrupted_blob_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = save_manifest(&tiny_net(), dir.path()).unwrap();
    std::fs::write(dir.path().join("only.w.bin"), b"garbage").unwrap();
    let err = load_manifest(&path).unwrap_err();
    assert!(matches!(err, Error::Blob(_)), "{err}");
}

#[test]
fn snn7_manifest_loads_with_seven_layers() {
    let dir = tempfile::tempdir().unwrap();
    let net = gen::snn7_cifar10();
    assert_eq!(net.t, 4);
    let path = save_manifest(&net, dir.path()).unwrap();
    let loaded = load_manifest(&path).unwrap();
    assert_eq!(loaded.layers.len(), 7);
    assert_eq!(loaded.classes, 10);
    assert_eq!(loaded, net);
}

#[test]
fn chain_violations_fail_the_loader() {
    // legal in isolation, broken as a chain: 2-bit second layer after a
    // binary first layer
    let mut net = gen::snn7_cifar10();
    net.layers[2].coding = Coding::Spike2Bit;
    let dir = tempfile::tempdir().unwrap();
    let path = save_manifest(&net, dir.path()).unwrap();
    let err = load_manifest(&path).unwrap_err();
    assert!(
        matches!(err, Error::Manifest(ref m) if m.contains("chain validation")),
        "{err}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// save(load(manifest)) reproduces an identical NetworkDesc for random
    /// legal networks.
    #[test]
    fn manifest_round_trip(seed in 0u64..5000) {
        let (net, _) = gen::random_network(seed);
        let dir = tempfile::tempdir().unwrap();
        let path = save_manifest(&net, dir.path()).unwrap();
        let loaded = load_manifest(&path).unwrap();
        prop_assert_eq!(&loaded, &net);
        // and saving the loaded network reproduces the same files
        let dir2 = tempfile::tempdir().unwrap();
        let path2 = save_manifest(&loaded, dir2.path()).unwrap();
        let again = load_manifest(&path2).unwrap();
        prop_assert_eq!(&again, &net);
    }
}
