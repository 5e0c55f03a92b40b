use std::fs;
use std::path::{Path, PathBuf};

use modechoice::cli::run_with;
use modechoice::commands::{Overrides, Run};
use tempfile::TempDir;

fn repo_config(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    fs::read_to_string(p).unwrap()
}

/// Writes a scaled-down copy of the shipped generator and simulates it.
fn synth(dir: &Path) -> PathBuf {
    let cfg = repo_config("synth.toml")
        .replace("n_individuals = 600", "n_individuals = 80")
        .replace("n_occasions = 5", "n_occasions = 3");
    fs::create_dir_all(dir).unwrap();
    let gen = dir.join("gen.toml");
    fs::write(&gen, cfg).unwrap();
    let out = dir.join("synth");
    assert_eq!(run(&["synth", "--config", s(&gen), "--out", s(&out)]), 0);
    out.join("data.csv")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run(args: &[&str]) -> i32 {
    run_with(std::iter::once("modechoice").chain(args.iter().copied()))
}

const UTILITY: &str = r#"
terms = [
  { feature = "tt", coef = "b_tt" },
  { feature = "cost", coef = "b_cost" },
  { feature = "wait", coef = "b_wait" },
]
constants = [{ alt = "bike", coef = "asc_bike" }, { alt = "pt", coef = "asc_pt" }, { alt = "car", coef = "asc_car" }]
"#;

fn run_config(data: &Path, extra: &str) -> String {
    format!(
        r#"
seed = 3

[data]
path = "{}"

[[models]]
type = "mnl"
[models.utility]
{UTILITY}

[[models]]
type = "mixed_logit"
random = ["b_tt"]
n_draws = 20
[models.utility]
{UTILITY}

[[models]]
type = "random_forest"
n_trees = 20
mtry = 3

[[models]]
type = "neural_net"
options = {{ epochs = 100 }}

[crossval]
k = 4

[[interpret.pd]]
column = "tt_pt"
target = "pt"
points = 7

[[interpret.sensitivity]]
variable = "wait"
column = "wait_pt"
target = "pt"
measure = "marginal_effect"
delta = 2
unit = "min"
constrained = true

[[interpret.sensitivity]]
variable = "tt"
column = "tt_pt"
target = "pt"
measure = "marginal_effect"
delta = 1
unit = "min"

[interpret.value_of_time]
reference = "tt"
{extra}
"#,
        data.display()
    )
}

fn setup(extra: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, run_config(&data, extra)).unwrap();
    (dir, cfg)
}

fn body(p: &Path) -> String {
    fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

#[test]
fn fit_writes_models_and_reports_deterministically() {
    let (dir, cfg) = setup("");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(run(&["fit", "--config", s(&cfg), "--out", s(out)]), 0);
    }
    for name in ["mnl", "mixl", "rf", "nn"] {
        assert!(a.join(format!("models/{name}.json")).exists());
    }
    let coef = body(&a.join("coef_mnl.csv"));
    assert!(coef.starts_with("coef,estimate,std_error,beta_std_x,significance"));
    assert!(coef.contains("b_tt,"));
    for f in ["coef_mnl.csv", "coef_mixl.csv", "fit_mnl.json", "vif.csv", "models/rf.json", "models/nn.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let head = fs::read_to_string(a.join("coef_mnl.csv")).unwrap();
    assert!(head.starts_with("# modechoice "));
    assert!(head.contains("# seed 3"));
}

#[test]
fn seed_flag_overrides_config() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("o");
    assert_eq!(run(&["crossval", "--config", s(&cfg), "--out", s(&out), "--seed", "11", "--jobs", "1"]), 0);
    assert!(fs::read_to_string(out.join("cv_l1.csv")).unwrap().contains("# seed 11"));
}

#[test]
fn crossval_shape_and_validation() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("cv");
    assert_eq!(run(&["crossval", "--config", s(&cfg), "--out", s(&out)]), 0);
    let folds = body(&out.join("cv_folds.csv"));
    assert_eq!(folds.lines().count(), 1 + 4 * 4);
    let acc = body(&out.join("cv_accuracy.csv"));
    assert!(acc.starts_with("model,mean,sd,walk_mean,walk_sd"));
    assert_eq!(body(&out.join("folds.csv")).lines().count(), 1 + 240);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("cv.json")).unwrap()).unwrap();
    assert_eq!(json["crossval"]["report"]["models"].as_array().unwrap().len(), 4);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, fs::read_to_string(&cfg).unwrap().replace("k = 4", "k = 1")).unwrap();
    assert_eq!(run(&["crossval", "--config", s(&bad), "--out", s(&out)]), 1);
}

#[test]
fn missing_column_is_named() {
    let (dir, cfg) = setup("");
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, fs::read_to_string(&cfg).unwrap().replace("feature = \"wait\"", "feature = \"waiting\"")).unwrap();
    let out = dir.path().join("x");
    assert_eq!(run(&["fit", "--config", s(&bad), "--out", s(&out)]), 1);
    let ov = Overrides { out: Some(out), ..Default::default() };
    let e = format!("{}", Run::load(&bad, &ov).err().unwrap());
    assert!(e.contains("waiting"), "{e}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["fit"]), 1);
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["fit", "--config", "/nonexistent/run.toml", "--out", "/tmp/x"]), 1);
}

#[test]
fn interpret_emits_tables_curves_and_labels() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("i");
    assert_eq!(run(&["fit", "--config", s(&cfg), "--out", s(&out)]), 0);
    assert_eq!(run(&["interpret", "--config", s(&cfg), "--out", s(&out)]), 0);

    let grid = |m: &str| -> Vec<String> {
        body(&out.join(format!("pd_tt_pt_{m}.csv")))
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().to_string())
            .collect()
    };
    assert_eq!(grid("rf"), grid("mnl"));
    assert_eq!(grid("rf").len(), 7);

    let sens = body(&out.join("sensitivity.csv"));
    assert!(sens.lines().any(|l| l.starts_with("wait,marginal_effect,2,1 or 2 min,rf,constrained,")));

    // the logit utilities leave out `transfer` and `income`
    let table = body(&out.join("importance.csv"));
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "feature,mnl,mixl,rf,nn");
    let transfer = table.lines().find(|l| l.starts_with("transfer,")).unwrap();
    assert!(transfer.starts_with("transfer,/,/,"), "{transfer}");

    let vot = body(&out.join("value_of_time.csv"));
    assert!(vot.lines().any(|l| l.starts_with("mnl,tt,1")));
}

#[test]
fn interpret_rejects_models_from_other_data() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("m");
    assert_eq!(run(&["fit", "--config", s(&cfg), "--out", s(&out)]), 0);
    // same config on data without the `wait` attribute
    let data = dir.path().join("synth/data.csv");
    let text = fs::read_to_string(&data).unwrap();
    let dropped: Vec<String> = text
        .lines()
        .map(|l| {
            if l.starts_with('#') {
                return l.to_string();
            }
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(6);
            f.join(",")
        })
        .collect();
    let other = dir.path().join("other.csv");
    fs::write(&other, dropped.join("\n")).unwrap();
    let cfg2 = dir.path().join("other.toml");
    let text = fs::read_to_string(&cfg).unwrap().replace(s(&data), s(&other));
    let text = text.replace("  { feature = \"wait\", coef = \"b_wait\" },\n", "");
    let text = text.replace(&text[text.find("[[interpret.sensitivity]]").unwrap()..], "");
    fs::write(&cfg2, text).unwrap();
    let ov = Overrides { out: Some(out.clone()), ..Default::default() };
    let r = Run::load(&cfg2, &ov).unwrap();
    let e = modechoice::commands::interpret(&r, &out.join("models")).err().unwrap();
    assert_eq!(e.exit_code(), 1);
    assert!(format!("{e}").contains("wait"), "{e}");
}

#[test]
fn synth_reruns_are_identical() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir.path().join("a"));
    let b = synth(&dir.path().join("b"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let truth = a.parent().unwrap().join("truth.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(truth).unwrap()).unwrap();
    assert_eq!(v["truth"]["n_obs"], 240);
    assert_eq!(v["meta"]["seed"], 2024);
}
