use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pacbayes");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).env_remove("PACBAYES_OUT").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
seed = 3
out_dir = "run"

[data]
n_train = 600
n_test = 300
dim = 12
separation = 20.0

[net]
hidden = [24]

[train]
epochs = 30

[certify]
families = ["iso-zero", "iso-init"]
m = 10

[grids.iso-zero]
beta = { lo = 1.0, hi = 5.0, count = 3 }
lambda = { lo = 0.031, hi = 0.3, count = 3 }

[grids.iso-init]
beta = { lo = 1.0, hi = 5.0, count = 3 }
lambda = { lo = 0.031, hi = 0.3, count = 3 }

[probe]
max_samples = 200
"#;

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn train_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run/manifest.json")).unwrap()).unwrap()
}

#[test]
fn train_is_accurate_and_reproducible() {
    let dir = setup(SMALL);
    let o = run(&["train", "-c", "run.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let m = train_json(dir.path());
    assert!(m["summary"]["train_error"].as_f64().unwrap() < 0.02, "{m}");
    let first = fs::read(dir.path().join("run/manifest.json")).unwrap();
    let o = run(&["train", "-c", "run.toml"], dir.path());
    assert!(o.status.success());
    assert_eq!(fs::read(dir.path().join("run/manifest.json")).unwrap(), first);
}

#[test]
fn certify_probe_and_plot() {
    let dir = setup(SMALL);
    assert!(run(&["train", "-c", "run.toml"], dir.path()).status.success());
    let o = run(&["certify", "-c", "run.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("run/certify/certificates.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "schema_version");
    let col = header.iter().position(|h| h == "bound_value").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 18);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r[col].parse::<f64>().unwrap())));
    for f in ["pareto_iso-zero.csv", "pareto_iso-init.csv", "reference.csv", "failures.csv"] {
        assert!(dir.path().join("run/certify").join(f).exists(), "{f}");
    }

    // Same config and seed, same bytes.
    let o = run(&["certify", "-c", "run.toml"], dir.path());
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("run/certify/certificates.csv")).unwrap(), csv);

    let o = run(&["probe", "-c", "run.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let land = fs::read_to_string(dir.path().join("run/probe/landscape.csv")).unwrap();
    let dirs: std::collections::BTreeSet<&str> = land.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(dirs.len(), 4);
    assert_eq!(land.lines().count(), 1 + 4 * 81);

    let o = run(&["plot", "run/certify/certificates.csv", "--reference", "run/certify/reference.csv", "-o", "fig.svg"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("fig.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("iso-init") && svg.contains("class=\"reference\""));

    let m = train_json(dir.path());
    for key in ["certify/certificates.csv", "probe/landscape.csv", "train/theta_star.bin"] {
        assert_eq!(m["files"][key].as_str().unwrap().len(), 64, "{key}");
    }
}

#[test]
fn invalid_prior_rows_are_marked() {
    let config = SMALL.replace(r#"families = ["iso-zero", "iso-init"]"#, r#"families = ["closed-joint"]"#)
        + "\n[grids.closed-joint]\nbeta = { lo = 0.0001, hi = 0.001, count = 2 }\n";
    let dir = setup(&config);
    assert!(run(&["train", "-c", "run.toml"], dir.path()).status.success());
    let o = run(&["certify", "-c", "run.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("run/certify/certificates.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.starts_with("1,closed-joint,invalid-prior,false,")));
}

#[test]
fn zero_cells_give_header_only() {
    let dir = setup(SMALL);
    assert!(run(&["train", "-c", "run.toml"], dir.path()).status.success());
    let o =
        run(&["certify", "-c", "run.toml", "--set", "grids.iso-zero.beta.count=0", "--set", "grids.iso-init.lambda.count=0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("run/certify/certificates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("schema_version,family,"));
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = setup("[data]\nsource = \"idx\"\ntrain_images = \"nowhere/train-images\"\ntrain_labels = \"nowhere/train-labels\"\ntest_images = \"a\"\ntest_labels = \"b\"\n");
    let o = run(&["train", "-c", "run.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere/train-images"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = setup("seeed = 1\n");
    assert_eq!(run(&["train", "-c", "run.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["train", "-c", "absent.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["certify"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["train", "--set", "train.batch_size=0"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_one() {
    // A huge step size makes training diverge.
    let dir = setup(SMALL);
    let o = run(
        &["train", "-c", "run.toml", "--set", "train.optimizer = { kind = \"sgd\", lr = 1e300, momentum = 0.0, decay = 0.0 }"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = setup(SMALL);
    let root = dir.path().join("root");
    let o = Command::new(BIN)
        .args(["train", "-c", "run.toml", "--set", "train.epochs=1"])
        .current_dir(dir.path())
        .env("PACBAYES_OUT", &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(root.join("run/manifest.json").exists());
    let o = run(&["train", "-c", "run.toml", "--set", "train.epochs=1", "--out", "elsewhere"], dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("elsewhere/manifest.json").exists());
}

#[test]
fn plot_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plot.svg");
    let o = run(
        &[
            "plot",
            fixture("fixtures/certificates.csv").to_str().unwrap(),
            "--reference",
            fixture("fixtures/reference.csv").to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = fixture("golden/plot.svg");
    let got = fs::read_to_string(&out).unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &got).unwrap();
    }
    assert_eq!(got, fs::read_to_string(&golden).unwrap());
}

#[test]
fn plot_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "not,a,certificate\n1,2,3\n").unwrap();
    let o = run(&["plot", "bad.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["plot", "header.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_certificates_plot_axes_only() {
    let dir = tempfile::tempdir().unwrap();
    let header = fs::read_to_string(fixture("fixtures/certificates.csv")).unwrap();
    fs::write(dir.path().join("empty.csv"), header.lines().next().unwrap().to_string() + "\n").unwrap();
    let o = run(&["plot", "empty.csv"], dir.path());
    assert!(o.status.success());
    let svg = String::from_utf8(o.stdout).unwrap();
    assert!(!svg.contains("<circle"));
    assert_eq!(svg.matches("<polyline").count(), 1);
}
