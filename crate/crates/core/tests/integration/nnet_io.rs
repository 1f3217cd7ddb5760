use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netrepair::fixtures::random_network;
use netrepair::specio::{
    load_model, nnet_to_string, parse_nnet, parse_nnet_str, parse_properties, write_nnet, NnetModel, Normalization,
};
use netrepair::{ActivationKind, Error};

fn normalization(rng: &mut ChaCha8Rng, n: usize) -> Normalization {
    let input_min: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..0.0)).collect();
    let input_max: Vec<f64> = input_min.iter().map(|m| m + rng.gen_range(1.0..10.0)).collect();
    Normalization {
        input_mean: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        input_range: (0..n).map(|_| rng.gen_range(0.5..20.0)).collect(),
        input_min,
        input_max,
        output_mean: rng.gen_range(-2.0..2.0),
        output_range: rng.gen_range(0.5..50.0),
    }
}

/// Straight reading of the text format: clamp, normalize, ReLU hidden
/// layers, linear output, de-normalize.
fn reference_eval(text: &str, x: &[f64]) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("//"))
        .map(|l| {
            l.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().unwrap())
                .collect()
        })
        .collect();
    let n_layers = rows[0][0] as usize;
    let sizes: Vec<usize> = rows[1].iter().map(|&v| v as usize).collect();
    let (mins, maxs, means, ranges) = (&rows[3], &rows[4], &rows[5], &rows[6]);
    let n_in = sizes[0];
    let mut a: Vec<f64> = (0..n_in)
        .map(|i| (x[i].clamp(mins[i], maxs[i]) - means[i]) / ranges[i])
        .collect();
    let mut r = 7;
    for l in 0..n_layers {
        let (rows_n, cols) = (sizes[l + 1], sizes[l]);
        let w = &rows[r..r + rows_n];
        let b = &rows[r + rows_n..r + 2 * rows_n];
        r += 2 * rows_n;
        let mut z: Vec<f64> = (0..rows_n)
            .map(|i| (0..cols).map(|j| w[i][j] * a[j]).sum::<f64>() + b[i][0])
            .collect();
        if l + 1 < n_layers {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        a = z;
    }
    a.iter().map(|v| v * ranges[n_in] + means[n_in]).collect()
}

#[test]
fn round_trip_matches_reference_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let dir = tempfile::tempdir().unwrap();
    for case in 0..5 {
        let dims = [5, 12, 9, 7, 5];
        let model = NnetModel {
            network: random_network(&mut rng, &dims, ActivationKind::Relu),
            normalization: normalization(&mut rng, 5),
        };
        let path = dir.path().join(format!("m{case}.nnet"));
        write_nnet(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back = parse_nnet(&path).unwrap();
        assert_eq!(back.normalization, model.normalization);
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-8.0..12.0)).collect();
            let want = reference_eval(&text, &x);
            let a = model.evaluate(&x).unwrap();
            let b = back.evaluate(&x).unwrap();
            for ((p, q), r) in a.iter().zip(&b).zip(&want) {
                assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()), "{p} vs {q}");
                assert!((q - r).abs() <= 1e-9 * (1.0 + r.abs()), "{q} vs reference {r}");
            }
        }
    }
}

#[test]
fn truncated_file_names_missing_section() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let model = NnetModel {
        network: random_network(&mut rng, &[3, 4, 2], ActivationKind::Relu),
        normalization: normalization(&mut rng, 3),
    };
    let text = nnet_to_string(&model).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    for keep in [3, 8, lines.len() - 1] {
        let cut = lines[..keep].join("\n");
        match parse_nnet_str(&cut, Path::new("cut.nnet")) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("missing"), "{message}"),
            other => panic!("expected parse error after {keep} lines, got {other:?}"),
        }
    }
}

#[test]
fn property_two_is_physical_and_normalized_on_load() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let norm = Normalization {
        input_min: vec![0.0, -PI, -PI, 100.0, 0.0],
        input_max: vec![60760.0, PI, PI, 1200.0, 1200.0],
        input_mean: vec![19791.091, 0.0, 0.0, 650.0, 600.0],
        input_range: vec![60261.0, 2.0 * PI, 2.0 * PI, 1100.0, 1200.0],
        output_mean: 7.5188840201005975,
        output_range: 373.94992,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("acas.nnet");
    let nnet = NnetModel {
        network: random_network(&mut rng, &[5, 6, 5], ActivationKind::Relu),
        normalization: norm.clone(),
    };
    write_nnet(&nnet, &path).unwrap();
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/prop2.json");

    let raw = parse_properties(&file, None).unwrap();
    assert_eq!(raw.len(), 1);
    let p = &raw[0];
    assert_eq!(p.input().lower().as_slice(), &[55947.691, -PI, -PI, 1145.0, 0.0]);
    assert_eq!(p.input().upper().as_slice(), &[60760.0, PI, PI, 1200.0, 60.0]);
    // COC is never the strictly highest score
    assert_eq!(p.constraints().len(), 4);
    for (j, c) in p.constraints().iter().enumerate() {
        let mut want = vec![0.0; 5];
        want[0] = -1.0;
        want[j + 1] = 1.0;
        assert_eq!(c.coeffs.as_slice(), want.as_slice());
        assert_eq!(c.bias, 0.0);
    }

    let model = load_model(&path).unwrap();
    let q = &parse_properties(&file, Some(&model)).unwrap()[0];
    for i in 0..5 {
        let lo = (p.input().lower()[i] - norm.input_mean[i]) / norm.input_range[i];
        let hi = (p.input().upper()[i] - norm.input_mean[i]) / norm.input_range[i];
        assert!((q.input().lower()[i] - lo).abs() < 1e-12);
        assert!((q.input().upper()[i] - hi).abs() < 1e-12);
    }
    // normalized constraints on raw network outputs equal the physical ones
    for _ in 0..1000 {
        let x: Vec<f64> = (0..5)
            .map(|i| rng.gen_range(p.input().lower()[i]..=p.input().upper()[i]))
            .collect();
        let phys = nnet.evaluate(&x).unwrap();
        let inner = model.network.forward(&model.prepare_input(&x)).unwrap();
        for (cp, cq) in p.constraints().iter().zip(q.constraints()) {
            let (a, b) = (cp.eval(&phys), cq.eval(&inner));
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}
