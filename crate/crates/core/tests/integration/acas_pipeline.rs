//! Region-wise repair through the NNet loader and the bundled property-2
//! file, on small networks with the ACAS Xu input normalization.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use netrepair::fixtures::{random_network, sample_box};
use netrepair::repair::region_wise_repair;
use netrepair::specio::{load_model, parse_properties, write_nnet, NnetModel, Normalization};
use netrepair::{ActivationKind, RepairConfig};

fn acas_normalization() -> Normalization {
    Normalization {
        input_min: vec![0.0, -PI, -PI, 100.0, 0.0],
        input_max: vec![60760.0, PI, PI, 1200.0, 1200.0],
        input_mean: vec![19791.091, 0.0, 0.0, 650.0, 600.0],
        input_range: vec![60261.0, 2.0 * PI, 2.0 * PI, 1100.0, 1200.0],
        output_mean: 7.5188840201005975,
        output_range: 373.94992,
    }
}

#[test]
fn property_two_region_repair_on_nnet_models() {
    let dir = tempfile::tempdir().unwrap();
    let props_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/prop2.json");
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut repaired = 0;
    for i in 0..4 {
        let net = random_network(&mut rng, &[5, 16, 16, 16, 5], ActivationKind::Relu);
        let path = dir.path().join(format!("net{i}.nnet"));
        write_nnet(&NnetModel { network: net, normalization: acas_normalization() }, &path).unwrap();
        let model = load_model(&path).unwrap();
        let props = parse_properties(&props_path, Some(&model)).unwrap();
        let out = region_wise_repair(&model.network, &props, &RepairConfig::default()).unwrap();
        eprintln!("net{i}: {:?} {} props {} refinements {:?}", out.status, out.stats.final_properties, out.stats.refinements, out.stats.wall_time);
        if !out.is_repaired() {
            continue;
        }
        repaired += 1;
        for p in &props {
            for _ in 0..100_000 {
                let x = sample_box(&mut rng, p.input());
                assert!(out.network.satisfies(&x, p), "net{i} violates {} at {x:?}", p.label());
            }
        }
    }
    assert!(repaired >= 3, "only {repaired} of 4 repaired");
}
