use envylab::cli::{run, run_with_hooks, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use envylab::mechanisms::deferred_acceptance;
use envylab::verify::VerifyHooks;
use envylab::{MarketInstance, Matching};

fn call(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["envylab"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn help_on_every_subcommand() {
    for sub in ["simulate", "predict", "verify", "coupon"] {
        let (code, out, _) = call(&[sub, "--help"]);
        assert_eq!(code, EXIT_OK, "{sub}");
        assert!(out.contains("Usage"), "{sub}: {out}");
    }
    assert_eq!(call(&["--help"]).0, EXIT_OK);
}

#[test]
fn usage_errors_exit_2() {
    let (code, _, err) = call(&["simulate", "--sizes", "0", "--out", "/dev/null"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("sizes must be ≥ 1"), "{err}");
    assert_eq!(call(&["simulate", "--reps", "0"]).0, EXIT_USAGE);
    assert_eq!(call(&["simulate", "--mechanisms", "boston"]).0, EXIT_USAGE);
    assert_eq!(call(&["simulate", "--queue", "stack"]).0, EXIT_USAGE);
    assert_eq!(call(&["predict"]).0, EXIT_USAGE);
    assert_eq!(call(&["predict", "--n", "0"]).0, EXIT_USAGE);
    assert_eq!(call(&["coupon", "--n", "0"]).0, EXIT_USAGE);
    assert_eq!(call(&["nonsense"]).0, EXIT_USAGE);
    assert_eq!(call(&["verify", "--threads", "0"]).0, EXIT_USAGE);
}

#[test]
fn verify_size_guard() {
    let (code, _, err) = call(&["verify", "--max-n", "10"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--force"), "{err}");
}

#[test]
fn predict_values() {
    let (code, out, _) = call(&["predict", "--n", "1"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.matches("1.000000").count(), 4, "{out}");

    let (_, out, _) = call(&["predict", "--n", "3"]);
    assert!(out.contains("1.833333") && out.contains("2.000000"), "{out}");

    let (_, out, _) = call(&["predict", "--n", "10000"]);
    assert!(out.contains("9.787606"), "{out}");
    assert!(out.contains("1021.7"), "{out}");
    assert!(out.contains("5000.500000"), "{out}");
}

#[test]
fn simulate_writes_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let (code, out, _) = call(&["simulate", "--sizes", "5", "--reps", "50", "--out", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("wrote 2 records"), "{out}");
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "n,mechanism,metric,mean,std_error,replications,prediction,prediction_exact");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("5,da,unenvied,"));
    assert!(lines[2].starts_with("5,da,envy_nobody,"));
}

#[test]
fn simulate_unwritable_output_exits_1() {
    let (code, _, err) = call(&["simulate", "--sizes", "3", "--reps", "2", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn coupon_n1_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let (code, out, _) = call(&["coupon", "--n", "1", "--reps", "100", "--out", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("singletons"), "{out}");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("1,singletons,1,0,100,1"), "{text}");
    assert!(text.contains("1,stopping_time,1,0,100,1"), "{text}");
}

fn broken_da(m: &MarketInstance) -> Matching {
    let mut a = deferred_acceptance(m).assignment().to_vec();
    a.rotate_left(1);
    Matching::new(a).unwrap()
}

#[test]
fn verify_reports_broken_mechanism() {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with_hooks(["envylab", "verify", "--max-n", "2"], &mut out, &mut err, VerifyHooks { da: broken_da });
    assert_eq!(code, EXIT_FAILURE);
    assert!(String::from_utf8(out).unwrap().contains("FAIL"));
}

#[test]
fn verify_passes_small() {
    let (code, out, _) = call(&["verify", "--max-n", "2", "--threads", "2"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("0 failed"));
}
