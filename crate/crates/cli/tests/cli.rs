use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn avacc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avacc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const RUN_CONFIG: &str = r#"
horizon = 200
reps = 10
seed = 5

[problem]
d = 6
spectrum_m = 2
r = 1.0
seed = 3

[noise]
kind = "structured"
sigma = 0.5

[[algorithms]]
algorithm = "unified"
schedule = { kind = "optimal_structured" }

[[algorithms]]
algorithm = "ac_sa"
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_curves_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", RUN_CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(avacc(&["run", "--config", &cfg], &a).status.success());
    assert!(avacc(&["run", "--config", &cfg], &b).status.success());
    for name in ["optimal_structured.csv", "ac_sa.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs between runs");
        let table = rows(&a.join(name));
        assert_eq!(table[0], ["n", "mean", "stderr", "diverged"]);
        assert_eq!(table.len(), 202);
        assert!(table[100][2].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn single_noiseless_replication_has_zero_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let text = RUN_CONFIG.replace("kind = \"structured\"\nsigma = 0.5", "kind = \"none\"");
    let cfg = write_config(dir.path(), "run.toml", &text);
    let out = avacc(&["run", "--config", &cfg, "--reps", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("optimal_structured.csv"));
    assert!(table[1..].iter().all(|r| r[2] == "0"));
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "horizon = 10\n");
    assert_eq!(avacc(&["run", "--config", &cfg], dir.path()).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    let out = avacc(&["run", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let text = RUN_CONFIG.replace("sigma = 0.5", "sigma = -1.0");
    let cfg = write_config(dir.path(), "neg.toml", &text);
    assert_eq!(avacc(&["run", "--config", &cfg], dir.path()).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_three_unless_expected() {
    let dir = tempfile::tempdir().unwrap();
    let text = RUN_CONFIG
        .replace(
            "{ kind = \"optimal_structured\" }",
            "{ kind = \"custom\", alpha = 3.0, beta = 3.0 }",
        )
        .replace("horizon = 200", "horizon = 2000");
    let cfg = write_config(dir.path(), "div.toml", &text);
    assert_eq!(avacc(&["run", "--config", &cfg], dir.path()).status.code(), Some(3));
    let table = rows(&dir.path().join("custom.csv"));
    assert_eq!(table.last().unwrap()[3], "10");

    let text = format!("expect_divergence = true\n{text}");
    let cfg = write_config(dir.path(), "div_ok.toml", &text);
    assert!(avacc(&["run", "--config", &cfg], dir.path()).status.success());
}

#[test]
fn stability_map_corner_probes() {
    let dir = tempfile::tempdir().unwrap();
    let out = avacc(
        &["stability-map", "--alpha", "0,4", "--beta", "0,2", "--resolution", "4"],
        dir.path(),
    );
    assert!(out.status.success());
    let table = rows(&dir.path().join("stability_map.csv"));
    assert_eq!(table[0], ["alpha", "beta", "class", "stability", "max_root_modulus"]);
    let find = |a: f64, b: f64| {
        table[1..]
            .iter()
            .find(|r| {
                (r[0].parse::<f64>().unwrap() - a).abs() < 1e-9 && (r[1].parse::<f64>().unwrap() - b).abs() < 1e-9
            })
            .unwrap()
            .clone()
    };
    let origin = find(0.0, 0.0);
    assert_eq!(
        (origin[2].as_str(), origin[3].as_str()),
        ("coalescing", "marginally_stable")
    );
    assert_eq!(find(4.0, 0.0)[3], "marginally_stable");
    assert_eq!(find(4.0 / 3.0, 2.0 / 3.0)[3], "strictly_stable");

    let out = avacc(&["stability-map", "--alpha", "1,1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bounds_check_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let out = avacc(
        &["bounds-check", "--theorem", "iterate", "--resolution", "23"],
        dir.path(),
    );
    assert!(out.status.success());
    let table = rows(&dir.path().join("bounds_check.csv"));
    assert_eq!(
        table[0],
        ["alpha", "beta", "N", "empirical", "bound", "slack", "preconditions_met"]
    );
    assert_eq!(table.len(), 1 + 23 * 23);
    let valid: Vec<_> = table[1..].iter().filter(|r| r[6] == "true").collect();
    assert!(valid.len() > 250);
    assert!(valid.iter().all(|r| r[5].parse::<f64>().unwrap() >= 0.0));

    let cfg = write_config(dir.path(), "empty.toml", "alpha = [-2.0, -1.0]\nresolution = 4\n");
    let out = avacc(
        &["bounds-check", "--theorem", "noiseless", "--config", &cfg],
        dir.path(),
    );
    assert!(out.status.success());
    let table = rows(&dir.path().join("bounds_check.csv"));
    assert!(table[1..].iter().all(|r| r[6] == "false"));
}

#[test]
fn structured_bound_at_averaged_gd() {
    let dir = tempfile::tempdir().unwrap();
    let text = "horizon = 500\nresolution = 2\nalpha = [0.0, 1.0]\nbeta = [1.0, 2.0]\n\
                problem = { d = 5, spectrum_m = 1, r = 2.0, seed = 1 }\nnoise = { kind = \"structured\", sigma = 0.3 }\n";
    let cfg = write_config(dir.path(), "avgd.toml", text);
    assert!(avacc(
        &["bounds-check", "--theorem", "structured", "--config", &cfg],
        dir.path()
    )
    .status
    .success());
    let table = rows(&dir.path().join("bounds_check.csv"));
    let row = &table[1];
    assert_eq!(
        (row[0].parse::<f64>().unwrap(), row[1].parse::<f64>().unwrap()),
        (0.0, 1.0)
    );
    // L = 1, r = 2, tr(CH⁻¹) = 0.09·5
    let expected = 4.0 * 4.0 / 500.0 + 8.0 * 0.45 / 500.0;
    assert!((row[4].parse::<f64>().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn lower_bound_rows() {
    let dir = tempfile::tempdir().unwrap();
    assert!(avacc(&["lower-bound", "--regime", "second"], dir.path())
        .status
        .success());
    let table = rows(&dir.path().join("lower_bound.csv"));
    assert_eq!(table[0], ["n", "curvature", "scaled_excess", "limit", "rel_error"]);
    assert_eq!(table[1][0], "1");
    assert!(table[1][4].parse::<f64>().unwrap() > 1.0);
    let errs: Vec<f64> = table[1..].iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]));
    assert!(*errs.last().unwrap() < 0.05);

    let out = avacc(&["lower-bound", "--regime", "first", "--n", "10,1000"], dir.path());
    assert!(out.status.success());
    assert_eq!(rows(&dir.path().join("lower_bound.csv")).len(), 3);
}

#[test]
fn compare_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cmp.toml", "horizon = 300\nreps = 2\nd = 5\n");
    let out = avacc(&["compare", "--config", &cfg, "--seed", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let slopes = rows(&dir.path().join("compare_slopes.csv"));
    assert_eq!(slopes[0][0], "algorithm");
    let names: Vec<&str> = slopes[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["unified", "av_gd", "acc_gd", "ac_sa", "sage", "acc_rda"]);
    let curves = rows(&dir.path().join("compare_curves.csv"));
    assert_eq!(
        curves[0],
        [
            "algorithm",
            "n",
            "log10_n",
            "mean",
            "stderr",
            "log10_mean",
            "exact",
            "diverged"
        ]
    );
    let first = fs::read(dir.path().join("compare_curves.csv")).unwrap();
    assert!(avacc(&["compare", "--config", &cfg, "--seed", "4"], dir.path())
        .status
        .success());
    assert_eq!(first, fs::read(dir.path().join("compare_curves.csv")).unwrap());
}
