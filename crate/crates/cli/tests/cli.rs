use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvnclust"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// Items at the given points with covariance `var·I`.
fn write_points(dir: &Path, name: &str, points: &[Vec<f64>], var: f64) -> PathBuf {
    let p = points[0].len();
    let cov: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| if i == j { var } else { 0.0 }).collect())
        .collect();
    let items: Vec<Value> = points
        .iter()
        .enumerate()
        .map(|(i, x)| json!({"id": format!("p{i}"), "mean": x, "covariance": cov}))
        .collect();
    let path = dir.join(name);
    fs::write(
        &path,
        serde_json::to_string(&json!({"dimension": p, "items": items})).unwrap(),
    )
    .unwrap();
    path
}

fn separated_toy(dir: &Path) -> PathBuf {
    let pts = [-10.0, -10.05, 10.0, 9.96].map(|x| vec![x]);
    write_points(dir, "toy.json", &pts, 0.01)
}

fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    let choose2 = |x: usize| (x * x.saturating_sub(1) / 2) as f64;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ra: HashMap<usize, usize> = HashMap::new();
    let mut rb: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.values().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.values().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(a.len());
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

fn labels(path: PathBuf) -> Vec<usize> {
    csv_rows(path)
        .iter()
        .map(|r| r[1].parse().unwrap())
        .collect()
}

#[test]
fn simulate_preset_writes_benchmark() {
    let tmp = TempDir::new().unwrap();
    ok(
        &[
            "simulate", "--preset", "high-snr", "--seed", "5", "--out", "sim",
        ],
        tmp.path(),
    );
    let ds = read_json(tmp.path().join("sim/dataset.json"));
    assert_eq!(ds["dimension"], 10);
    assert_eq!(ds["items"].as_array().unwrap().len(), 300);
    let truth = labels(tmp.path().join("sim/truth.csv"));
    assert_eq!(truth.len(), 300);
    assert_eq!(truth.iter().max(), Some(&50));
    let manifest = read_json(tmp.path().join("sim/manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seeds"], json!([5]));
    let ratio = read_json(tmp.path().join("sim/simulation.json"))["snr"]["ratio"]
        .as_f64()
        .unwrap();
    assert!((ratio / 8.0 - 1.0).abs() < 0.15, "{ratio}");
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        ok(
            &[
                "simulate",
                "--preset",
                "low-snr-noisy",
                "--seed",
                "9",
                "--out",
                dir,
            ],
            tmp.path(),
        );
    }
    for file in ["dataset.json", "truth.csv", "simulation.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(file)).unwrap(),
            fs::read(tmp.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn zero_noise_config_keeps_cluster_covariances() {
    let tmp = TempDir::new().unwrap();
    let cfg = "p = 3\ncluster_sizes = [3, 4, 2]\ns0 = 2.0\na0 = 1.0\nb0 = 0.0\nc = 0.0\nn_candidates = 300\nseed = 4\n";
    fs::write(tmp.path().join("sim.toml"), cfg).unwrap();
    ok(
        &["simulate", "--config", "sim.toml", "--out", "sim"],
        tmp.path(),
    );
    let ds = read_json(tmp.path().join("sim/dataset.json"));
    let clusters = read_json(tmp.path().join("sim/simulation.json"))["clusters"].clone();
    let truth = labels(tmp.path().join("sim/truth.csv"));
    for (item, g) in ds["items"].as_array().unwrap().iter().zip(truth) {
        assert_eq!(item["covariance"], clusters[g - 1]["covariance"]);
    }
}

#[test]
fn bad_config_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("rank1.toml"),
        "s0 = 1.0\na0 = 0.0\nb0 = 0.5\n",
    )
    .unwrap();
    let out = run(
        &["simulate", "--config", "rank1.toml", "--out", "x"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a0"));

    fs::write(
        tmp.path().join("typo.toml"),
        "s0 = 1.0\na0 = 1.0\nb0 = 0.0\nsizes = [2]\n",
    )
    .unwrap();
    let out = run(
        &["simulate", "--config", "typo.toml", "--out", "x"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sizes") && err.contains("line 4"), "{err}");
}

#[test]
fn select_at_k_equal_n_is_trivial() {
    let tmp = TempDir::new().unwrap();
    separated_toy(tmp.path());
    ok(
        &[
            "select", "--input", "toy.json", "--out", "sel", "--k-min", "4", "--k-max", "4",
        ],
        tmp.path(),
    );
    let rows = csv_rows(tmp.path().join("sel/curve.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "4");
    assert_eq!(rows[0][1], "0");
    assert_eq!(rows[0][5], "1");
}

#[test]
fn select_flags_two_clusters_on_separated_toy() {
    let tmp = TempDir::new().unwrap();
    separated_toy(tmp.path());
    ok(
        &[
            "select", "--input", "toy.json", "--out", "sel", "--prior", "normal",
        ],
        tmp.path(),
    );
    let summary = read_json(tmp.path().join("sel/summary.json"));
    assert_eq!(summary["best_k_flat"], 2);
    assert_eq!(summary["best_k_normal"], 2);
    assert_eq!(summary["fewest_k_not_rejected"], 2);
    let header = fs::read_to_string(tmp.path().join("sel/curve.csv")).unwrap();
    assert!(header.starts_with("k,neg_loglik_flat,neg_loglik_normal,chisq,dof,p_value\n"));
    let parts = csv_rows(tmp.path().join("sel/partitions.csv"));
    assert_eq!(parts.len(), 4);
    let manifest = read_json(tmp.path().join("sel/manifest.json"));
    assert_eq!(
        manifest["outputs"],
        json!(["curve.csv", "partitions.csv", "summary.json"])
    );
}

#[test]
fn curve_values_round_trip() {
    let tmp = TempDir::new().unwrap();
    ok(
        &[
            "simulate", "--preset", "low-snr", "--seed", "2", "--out", "sim",
        ],
        tmp.path(),
    );
    ok(
        &[
            "select",
            "--input",
            "sim/dataset.json",
            "--out",
            "sel",
            "--k-min",
            "2",
            "--k-max",
            "60",
        ],
        tmp.path(),
    );
    for row in csv_rows(tmp.path().join("sel/curve.csv")) {
        for field in &row[1..] {
            let v: f64 = field.parse().unwrap();
            assert_eq!(&mvnclust::io::format_f64(v), field);
        }
    }
}

#[test]
fn cluster_with_k_equal_n_gives_singletons() {
    let tmp = TempDir::new().unwrap();
    separated_toy(tmp.path());
    ok(
        &["cluster", "--input", "toy.json", "--out", "cl", "--k", "4"],
        tmp.path(),
    );
    assert_eq!(
        labels(tmp.path().join("cl/assignment.csv")),
        vec![1, 2, 3, 4]
    );
    let report = read_json(tmp.path().join("cl/breakdown.json"));
    assert_eq!(report["breakdown"]["total"], 0.0);
}

fn three_cluster_toy(dir: &Path) -> (PathBuf, Vec<usize>) {
    let centres = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
    let offsets = [
        [0.05, 0.0],
        [-0.05, 0.03],
        [0.0, -0.06],
        [0.02, 0.04],
        [-0.03, -0.02],
    ];
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (g, c) in centres.iter().enumerate() {
        for o in &offsets {
            pts.push(vec![c[0] + o[0], c[1] + o[1]]);
            truth.push(g + 1);
        }
    }
    (write_points(dir, "three.json", &pts, 0.01), truth)
}

#[test]
fn greedy_recovers_separated_clusters() {
    let tmp = TempDir::new().unwrap();
    let (_, truth) = three_cluster_toy(tmp.path());
    ok(
        &[
            "cluster",
            "--input",
            "three.json",
            "--out",
            "cl",
            "--k",
            "15",
            "--search",
            "greedy",
            "--restarts",
            "3",
            "--seed",
            "7",
        ],
        tmp.path(),
    );
    let found = labels(tmp.path().join("cl/assignment.csv"));
    assert!(adjusted_rand(&found, &truth) >= 0.95);
}

#[test]
fn metropolis_rerun_is_identical() {
    let tmp = TempDir::new().unwrap();
    three_cluster_toy(tmp.path());
    for dir in ["a", "b"] {
        ok(
            &[
                "cluster",
                "--input",
                "three.json",
                "--out",
                dir,
                "--search",
                "metropolis",
                "--sweeps",
                "200",
                "--seed",
                "11",
                "--restarts",
                "1",
            ],
            tmp.path(),
        );
    }
    for file in ["assignment.csv", "breakdown.json", "visits.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(file)).unwrap(),
            fs::read(tmp.path().join("b").join(file)).unwrap()
        );
    }
}

#[test]
fn evaluate_singletons_and_missing_ids() {
    let tmp = TempDir::new().unwrap();
    separated_toy(tmp.path());
    fs::write(
        tmp.path().join("single.csv"),
        "id,cluster\np0,1\np1,2\np2,3\np3,4\n",
    )
    .unwrap();
    let out = ok(
        &[
            "evaluate",
            "--input",
            "toy.json",
            "--assignment",
            "single.csv",
            "--out",
            "ev",
        ],
        tmp.path(),
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["breakdown"]["total"], 0.0);
    assert_eq!(report["chisq"]["p_value"], 1.0);
    assert!(tmp.path().join("ev/manifest.json").exists());

    fs::write(
        tmp.path().join("short.csv"),
        "id,cluster\np0,1\np1,1\np2,2\n",
    )
    .unwrap();
    let out = run(
        &[
            "evaluate",
            "--input",
            "toy.json",
            "--assignment",
            "short.csv",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p3"));
}

#[test]
fn csv_dataset_input() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("toy.csv"),
        "id,mean_1,cov_1_1\na,-10,0.01\nb,-10.05,0.01\nc,10,0.01\nd,9.96,0.01\n",
    )
    .unwrap();
    ok(
        &["select", "--input", "toy.csv", "--out", "sel"],
        tmp.path(),
    );
    assert_eq!(
        read_json(tmp.path().join("sel/summary.json"))["best_k_flat"],
        2
    );
}

#[test]
fn non_positive_definite_input_is_a_numeric_error() {
    let tmp = TempDir::new().unwrap();
    let text = json!({"dimension": 2, "items": [
        {"id": "a", "mean": [0.0, 0.0], "covariance": [[1.0, 2.0], [2.0, 1.0]]}
    ]});
    fs::write(tmp.path().join("bad.json"), text.to_string()).unwrap();
    let out = run(&["select", "--input", "bad.json", "--out", "x"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn normal_prior_from_precision_file() {
    let tmp = TempDir::new().unwrap();
    separated_toy(tmp.path());
    fs::write(tmp.path().join("g0.json"), "[[0.5]]").unwrap();
    ok(
        &[
            "cluster",
            "--input",
            "toy.json",
            "--out",
            "a",
            "--k",
            "2",
            "--prior",
            "normal",
            "--prior-precision-file",
            "g0.json",
        ],
        tmp.path(),
    );
    ok(
        &[
            "cluster",
            "--input",
            "toy.json",
            "--out",
            "b",
            "--k",
            "2",
            "--prior",
            "normal",
            "--prior-sigma2",
            "2",
        ],
        tmp.path(),
    );
    let a = read_json(tmp.path().join("a/breakdown.json"));
    let b = read_json(tmp.path().join("b/breakdown.json"));
    let (x, y) = (
        a["breakdown"]["total"].as_f64().unwrap(),
        b["breakdown"]["total"].as_f64().unwrap(),
    );
    assert!((x - y).abs() < 1e-12);

    fs::write(tmp.path().join("g2.json"), "[[1.0, 0.0], [0.0, 1.0]]").unwrap();
    let out = run(
        &[
            "cluster",
            "--input",
            "toy.json",
            "--out",
            "c",
            "--prior",
            "normal",
            "--prior-precision-file",
            "g2.json",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
