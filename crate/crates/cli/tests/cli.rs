use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn euroem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_euroem")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn bundled() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ieee118-3z")
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn write_config(dir: &Path, dataset: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "dataset = {:?}\nhours = 24\nrepresentative_hours = 1\ncontingencies = 5\nout = \"out\"\n{extra}\n",
        dataset.to_str().unwrap()
    );
    fs::write(&path, text).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn validate_reports_the_bundled_dataset() {
    let out = euroem(&["validate", "--dataset", bundled().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("118 buses") && text.contains("186 branches"), "{text}");
}

#[test]
fn missing_dataset_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = euroem(&["validate", "--dataset", dir.path().join("nothing").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn broken_participation_factors_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&bundled(), dir.path());
    let path = dir.path().join("demand_buses.csv");
    let text = fs::read_to_string(&path).unwrap().replacen("d1,b1,0.0529595016", "d1,b1,0.2529595016", 1);
    fs::write(&path, text).unwrap();
    let out = euroem(&["validate", "--dataset", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("d1"));
}

#[test]
fn malformed_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "dataset = [unterminated\n").unwrap();
    assert_eq!(code(&euroem(&["run", "--config", path.to_str().unwrap()])), 2);
    assert_eq!(code(&euroem(&["run", "--config", dir.path().join("absent.toml").to_str().unwrap()])), 2);
}

#[test]
fn out_override_receives_the_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &bundled(), "model = \"ed\"");
    let target = dir.path().join("elsewhere");
    let out = euroem(&["run", "--config", config.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("metrics.json").is_file());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn seed_override_changes_only_what_it_should() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &bundled(), "model = \"dam\"");
    let run = |seed: &str, out: &str| {
        let target = dir.path().join(out);
        let o = euroem(&["run", "--config", config.to_str().unwrap(), "--out", target.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(target.join("positions.csv")).unwrap()
    };
    let a = run("5", "a");
    let b = run("5", "b");
    let c = run("6", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn infeasible_dispatch_exits_with_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("surplus");
    copy_dir(&bundled(), &data);
    // Demand at 1% leaves the slow units' minimum output with nowhere to go.
    let path = data.join("timeseries/demand.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let mut scaled = vec![lines.next().unwrap().to_string()];
    for line in lines {
        let mut cells = line.split(',');
        let hour = cells.next().unwrap().to_string();
        let rest = cells.map(|c| format!("{}", c.parse::<f64>().unwrap() * 0.01));
        scaled.push(std::iter::once(hour).chain(rest).collect::<Vec<_>>().join(","));
    }
    fs::write(&path, scaled.join("\n") + "\n").unwrap();
    let config = write_config(dir.path(), &data, "model = \"ed\"");
    let out = euroem(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out").join("RUN_INCOMPLETE").exists());
}
