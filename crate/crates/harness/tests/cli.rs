use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use plent_harness::RunConfig;

const SYNTHETIC: &str = r#"
seed = 4

[model]
arch = "custom"
input_shape = [1, 4, 4]
layers = [
    { name = "conv1", kind = "conv3x3", in_channels = 1, out_channels = 2 },
    { name = "act1", kind = "tanh" },
    { name = "pool1", kind = "max_pool2x2" },
    { name = "flatten", kind = "flatten" },
    { name = "fc1", kind = "dense", inputs = 8, outputs = 10 },
]

[dataset]
name = "synthetic"
synthetic = { train = 64, test = 32, classes = 4 }

[loss]
kind = "plea"
radius = 0.05
samples = 2
mask = ["fc1"]

[optimizer]
lr = 0.05
momentum = 0.9

[schedule]
epochs = 3
batch_size = 16

[telemetry]
window = 2
"#;

fn plent(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plent"))
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(args)
        .env_remove("PLENT_DATA_ROOT")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_reports_field_errors_with_exit_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write(tmp.path(), "good.toml", SYNTHETIC);
    let o = plent(tmp.path(), &["validate", &good]);
    assert!(o.status.success(), "{}", stderr(&o));
    let id = RunConfig::parse(SYNTHETIC).unwrap().run_id();
    assert!(String::from_utf8_lossy(&o.stdout).contains(&id));

    let pooled = write(tmp.path(), "pool.toml", &SYNTHETIC.replace(r#"mask = ["fc1"]"#, r#"mask = ["pool1"]"#));
    let o = plent(tmp.path(), &["validate", &pooled]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("loss.mask"), "{}", stderr(&o));

    let unknown = write(tmp.path(), "unknown.toml", &SYNTHETIC.replace("[optimizer]", "[optimizer]\nnesterov = true"));
    let o = plent(tmp.path(), &["validate", &unknown]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nesterov"), "{}", stderr(&o));

    let several = SYNTHETIC.replace("lr = 0.05", "lr = -1.0").replace("momentum = 0.9", "momentum = 1.5");
    let o = plent(tmp.path(), &["validate", &write(tmp.path(), "several.toml", &several)]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("optimizer.lr") && e.contains("optimizer.momentum"), "{e}");
}

#[test]
fn missing_data_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SYNTHETIC.replace(
        "[dataset]\nname = \"synthetic\"\nsynthetic = { train = 64, test = 32, classes = 4 }",
        "[dataset]\nname = \"mnist\"",
    );
    let cfg = cfg.replace("input_shape = [1, 4, 4]", "input_shape = [1, 28, 28]").replace("inputs = 8,", "inputs = 392,");
    let path = write(tmp.path(), "mnist.toml", &cfg);
    let o = Command::new(env!("CARGO_BIN_EXE_plent"))
        .args(["--quiet", "--data-root"])
        .arg(tmp.path().join("nowhere"))
        .arg("--out")
        .arg(tmp.path())
        .args(["run", &path])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn run_is_idempotent_and_feeds_plot_emission() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", SYNTHETIC);
    let out = tmp.path().join("runs");
    let o = plent(&out, &["run", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let id = RunConfig::parse(SYNTHETIC).unwrap().run_id();
    let dir = out.join(&id);
    for f in ["report.json", "config.toml", "telemetry.csv"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    // The stored canonical config reloads to the same run id.
    let stored = RunConfig::load(&dir.join("config.toml")).unwrap();
    assert_eq!(stored.run_id(), id);

    let first = fs::read_to_string(dir.join("report.json")).unwrap();
    let o = plent(&out, &["run", &cfg]);
    assert!(o.status.success());
    assert_eq!(fs::read_dir(&out).unwrap().count(), 1);
    assert_eq!(fs::read_to_string(dir.join("report.json")).unwrap(), first);

    let plots = tmp.path().join("plots");
    let o = plent(&plots, &["emit-plots", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["accuracy_vs_radius.csv", "telemetry_log.csv", "curves.csv"] {
        let text = fs::read_to_string(plots.join(f)).unwrap();
        assert!(text.lines().count() > 1, "{f} is empty");
    }
    let curves = fs::read_to_string(plots.join("curves.csv")).unwrap();
    // Header, the initial evaluation and three epochs.
    assert_eq!(curves.lines().count(), 5);
}

#[test]
fn emit_plots_without_readable_runs_fails_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let plots = tmp.path().join("plots");
    let o = plent(&plots, &["emit-plots", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!plots.exists());
}

#[test]
fn sweep_writes_one_summary_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let base = SYNTHETIC.replace("epochs = 3", "epochs = 1");
    let mut grid = String::new();
    for line in base.lines() {
        match line.strip_prefix('[') {
            Some(rest) => grid += &format!("[base.{rest}\n"),
            None if line.starts_with("seed") => grid += &format!("[base]\n{line}\n"),
            None => grid += &format!("{line}\n"),
        }
    }
    grid += "\n[sweep]\nkinds = [\"ce\", \"plea\"]\nmasks = \"all\"\nradius = [0.01, 0.1]\nseeds = [1, 2]\n";
    let path = write(tmp.path(), "grid.toml", &grid);
    let out = tmp.path().join("sweep");
    let o = plent(&out, &["sweep", &path]);
    assert!(o.status.success(), "{}", stderr(&o));
    // CE: 2 seeds. PLEA: 3 masks (two synaptic layers) x 2 radii x 2 seeds.
    let rows = csv::Reader::from_path(out.join("summary.csv")).unwrap().records().count();
    assert_eq!(rows, 2 + 3 * 2 * 2);
    let failures = csv::Reader::from_path(out.join("failures.csv")).unwrap().records().count();
    assert_eq!(failures, 0);
}

#[test]
fn kernel_curves_cover_every_sharpness() {
    let tmp = tempfile::tempdir().unwrap();
    let o = plent(tmp.path(), &["kernel-curves", "--k", "4,16", "--points", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv::Reader::from_path(tmp.path().join("kernel_curves.csv")).unwrap().records().count();
    assert_eq!(rows, 22);
}
