use std::path::Path;
use std::process::{Command, Output};

fn acuc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acuc"))
        .args(args)
        .env_remove("ACUC_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_case(dir: &Path) -> std::path::PathBuf {
    let case = dir.join("case.json");
    let o = acuc(&["gen", "--buses", "5", "--devices", "6", "--periods", "4", "--seed", "3", "--out", p(&case)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    case
}

#[test]
fn solve_then_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case(dir.path());
    let sol = dir.path().join("sol.json");
    let stats = dir.path().join("stats.json");
    let o = acuc(&["solve", "--case", p(&case), "--algorithm", "3", "--out", p(&sol), "--stats", p(&stats)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let st: serde_json::Value = serde_json::from_slice(&std::fs::read(&stats).unwrap()).unwrap();
    let solver_obj = st["objective"].as_f64().unwrap();

    let report = dir.path().join("report.json");
    let best = format!("{solver_obj}");
    let o = acuc(&["eval", "--case", p(&case), "--solution", p(&sol), "--best-known", &best, "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("p-penalty"), "{stdout}");
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let obj = r["objective"].as_f64().unwrap();
    assert!((obj - solver_obj).abs() <= 1e-6 * obj.abs().max(1.0), "{obj} vs {solver_obj}");
    assert!(r["violations"].as_array().unwrap().is_empty());
    assert!(r["gap_percent"].as_f64().unwrap().abs() < 0.005);
}

#[test]
fn bad_algorithm_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case(dir.path());
    let sol = dir.path().join("sol.json");
    let o = acuc(&["solve", "--case", p(&case), "--algorithm", "7", "--out", p(&sol)]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn thread_count_does_not_change_the_solution_file() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case(dir.path());
    let mut files = Vec::new();
    for th in ["1", "8"] {
        let sol = dir.path().join(format!("sol{th}.json"));
        let o = acuc(&["solve", "--case", p(&case), "--algorithm", "4", "--threads", th, "--out", p(&sol)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read(&sol).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn corrupted_solution_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case(dir.path());
    let sol = dir.path().join("sol.json");
    let o = acuc(&["solve", "--case", p(&case), "--algorithm", "2", "--out", p(&sol)]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&sol).unwrap();
    std::fs::write(&sol, &text[..text.len() / 2]).unwrap();
    let o = acuc(&["eval", "--case", p(&case), "--solution", p(&sol)]);
    assert_eq!(code(&o), 2);

    let missing = dir.path().join("nope.json");
    let o = acuc(&["eval", "--case", p(&missing), "--solution", p(&sol)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn preset_goc73_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("c.json");
    let o = acuc(&["gen", "--preset", "goc73", "--out", p(&case)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&case).unwrap()).unwrap();
    assert_eq!(v["buses"].as_array().unwrap().len(), 73);
    assert_eq!(v["devices"].as_array().unwrap().len(), 208);
}

#[test]
fn gen_without_size_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = acuc(&["gen", "--out", p(&dir.path().join("c.json"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn report_rows_and_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case(dir.path());
    let mut stats = Vec::new();
    for th in ["1", "2"] {
        let sol = dir.path().join(format!("s{th}.json"));
        let st = dir.path().join(format!("st{th}.json"));
        let o = acuc(&[
            "solve", "--case", p(&case), "--algorithm", "4", "--threads", th, "--out", p(&sol), "--stats", p(&st),
        ]);
        assert_eq!(code(&o), 0);
        stats.push(st);
    }
    let o = acuc(&["report", "--stats", p(&stats[0]), p(&stats[1]), "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("file,algorithm,threads"));
    assert!(lines[0].contains("opf_seconds"));

    let o = acuc(&["report", "--stats", p(&stats[0]), "--format", "md"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("| file |"));

    let o = acuc(&["report", "--format", "csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gamma_percent_alias() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case(dir.path());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let (sa, sb) = (dir.path().join("sa.json"), dir.path().join("sb.json"));
    let o = acuc(&["solve", "--case", p(&case), "--algorithm", "3", "--gamma", "0.5", "--out", p(&a), "--stats", p(&sa)]);
    assert_eq!(code(&o), 0);
    let o = acuc(&[
        "solve", "--case", p(&case), "--algorithm", "3", "--gamma-percent", "50", "--out", p(&b), "--stats", p(&sb),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let g: serde_json::Value = serde_json::from_slice(&std::fs::read(&sb).unwrap()).unwrap();
    assert_eq!(g["gamma"].as_f64().unwrap(), 0.5);
}
