use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use netrepair::fixtures::{random_network, sample_box};
use netrepair::specio::{load_model, parse_properties, run_from, save_model, write_properties, Dataset, Model};
use netrepair::{ActivationKind, Hyperbox, LinearConstraint, Layer, Matrix, Network, Property};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("netrepair").chain(args.iter().copied());
    let code = run_from(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    net: PathBuf,
    props: PathBuf,
}

impl Fixture {
    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Two-class network that prefers class 1 somewhere in the unit box, with a
/// property asking for class 0 everywhere.
fn violated_fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (net, prop) = loop {
        let net = random_network(&mut rng, &[2, 8, 8, 2], ActivationKind::Relu);
        let prop = Property::new(
            Hyperbox::new(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap(),
            vec![LinearConstraint::at_least(2, 0, 1)],
            "class0",
        )
        .unwrap();
        let mid = net.forward(&[0.25, 0.25]).unwrap();
        if mid[0] < mid[1] {
            break (net, prop);
        }
    };
    let net_path = dir.path().join("net.json");
    let props_path = dir.path().join("props.json");
    save_model(&Model::plain(net), &net_path).unwrap();
    write_properties(&[prop], &props_path).unwrap();
    Fixture {
        dir,
        net: net_path,
        props: props_path,
    }
}

fn identity_fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let l0 = Layer::new(Matrix::identity(2), vec![0.0, 0.0], ActivationKind::Relu).unwrap();
    let l1 = Layer::new(Matrix::identity(2), vec![0.0, 0.0], ActivationKind::Identity).unwrap();
    let net = Network::new(vec![l0, l1]).unwrap();
    let prop = Property::new(
        Hyperbox::new(vec![0.6, 0.0], vec![1.0, 0.4]).unwrap(),
        vec![LinearConstraint::at_least(2, 0, 1)],
        "first-wins",
    )
    .unwrap();
    let net_path = dir.path().join("id.json");
    let props_path = dir.path().join("id-props.json");
    save_model(&Model::plain(net), &net_path).unwrap();
    write_properties(&[prop], &props_path).unwrap();
    Fixture {
        dir,
        net: net_path,
        props: props_path,
    }
}

#[test]
fn binary_rejects_unknown_flag_with_usage_code() {
    let status = Command::new(env!("CARGO_BIN_EXE_netrepair"))
        .args(["verify", "--no-such-flag", "a", "b"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("--no-such-flag"));
}

#[test]
fn help_exits_zero() {
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("repair"));
}

#[test]
fn verify_reports_each_property() {
    let fx = identity_fixture();
    let (code, out, _) = run(&["verify", path_str(&fx.net), path_str(&fx.props)]);
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("VERIFIED first-wins min_lb="), "{out}");

    let bad = violated_fixture();
    let (code, out, _) = run(&["verify", path_str(&bad.net), path_str(&bad.props)]);
    assert_eq!(code, 1);
    assert!(out.starts_with("UNVERIFIED class0"), "{out}");
}

#[test]
fn missing_input_is_an_error() {
    let fx = identity_fixture();
    let missing = fx.file("nope.json");
    let (code, _, err) = run(&["verify", path_str(&missing), path_str(&fx.props)]);
    assert_eq!(code, 2);
    assert!(err.contains("nope.json"), "{err}");
}

#[test]
fn region_repair_writes_report_and_model() {
    let fx = violated_fixture();
    let report = fx.file("report.json");
    let repaired = fx.file("repaired.json");
    let (code, out, err) = run(&[
        "repair",
        "region",
        path_str(&fx.net),
        path_str(&fx.props),
        "--samples",
        "2000",
        "--report",
        path_str(&report),
        "--out",
        path_str(&repaired),
    ]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.starts_with("REPAIRED 1 properties"), "{out}");
    assert!(out.contains("sampled violations: 0"), "{out}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["command"], "repair region");
    assert_eq!(json["status"], "repaired");
    assert_eq!(json["sampling"]["violations"], 0);
    assert!(json.get("wall_time_secs").is_none());

    // the saved model is the repaired one; whole-box verification may stay
    // inconclusive because repair verified refined sub-boxes
    let model = load_model(&repaired).unwrap();
    let props = parse_properties(&fx.props, Some(&model)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let x = sample_box(&mut rng, props[0].input());
        assert!(model.network.satisfies(&x, &props[0]), "violation at {x:?}");
    }
}

#[test]
fn seeded_reports_are_byte_identical() {
    let fx = violated_fixture();
    let mut texts = Vec::new();
    for (i, extra) in [&[][..], &["--sequential"][..], &[][..]].iter().enumerate() {
        let report = fx.file(&format!("r{i}.json"));
        let mut args = vec![
            "repair",
            "region",
            path_str(&fx.net),
            path_str(&fx.props),
            "--seed",
            "7",
            "--samples",
            "500",
            "--report",
            path_str(&report),
        ];
        args.extend_from_slice(extra);
        assert_eq!(run(&args).0, 0);
        texts.push(std::fs::read(&report).unwrap());
    }
    assert_eq!(texts[0], texts[2]);
    // the execution mode is part of the recorded config, nothing else differs
    let strip = |b: &[u8]| String::from_utf8(b.to_vec()).unwrap().replace("\"sequential\"", "\"parallel\"");
    assert_eq!(strip(&texts[0]), strip(&texts[1]));

    let timed = fx.file("timed.json");
    let args = [
        "repair",
        "region",
        path_str(&fx.net),
        path_str(&fx.props),
        "--timing",
        "--report",
        path_str(&timed),
    ];
    assert_eq!(run(&args).0, 0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&timed).unwrap()).unwrap();
    assert!(json["wall_time_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn failed_repair_exits_one() {
    let fx = violated_fixture();
    let (code, out, _) = run(&["repair", "region", path_str(&fx.net), path_str(&fx.props), "--budget", "1", "--repair-iters", "1"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.starts_with("FAILED"), "{out}");
}

#[test]
fn eval_prints_metrics() {
    let fx = identity_fixture();
    let csv = fx.file("test.csv");
    Dataset::new(vec![vec![1.0, 0.0].into(), vec![0.0, 1.0].into(), vec![0.0, 2.0].into()], vec![0, 1, 0])
        .unwrap()
        .write_csv(&csv)
        .unwrap();
    let (code, out, _) = run(&["eval", path_str(&fx.net), path_str(&csv), path_str(&fx.props)]);
    assert_eq!(code, 0);
    let m: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert!((m["acc"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(m["psr"], 1.0);
    assert!(m["gene"].is_null());
}

#[test]
fn synth_box_prints_trajectory_csv() {
    let fx = identity_fixture();
    let (code, out, err) = run(&["synth-box", path_str(&fx.net), "0.3,0.5", path_str(&fx.props)]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "label,step,min_lb,h0,h1");
    assert!(lines.len() >= 2);
    assert!(lines[1].starts_with("first-wins,0,"));
    assert!(err.contains("certified"), "{err}");
}
