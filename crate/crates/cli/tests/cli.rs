use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn bog_lab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bog-lab"))
        .args(args)
        .arg("--output")
        .arg(out)
        .env_remove("BOG_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn summary(out: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("{command}.summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn csv(out: &Path, command: &str) -> String {
    std::fs::read_to_string(out.join(format!("{command}.csv"))).unwrap()
}

fn all_pass(s: &Value) -> bool {
    s["assertions"].as_array().unwrap().iter().all(|a| a["pass"] == Value::Bool(true))
}

#[test]
fn exponent_table_over_the_default_grid_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bog_lab(dir.path(), &["exponent-table", "--delta", "0:1:0.01", "--alpha", "0:2:0.01"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = csv(dir.path(), "exponent-table");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("delta,alpha,q,beta1,beta2,beta3,beta,branch"));
    assert_eq!(lines.count(), 101 * 201);
    let s = summary(dir.path(), "exponent-table");
    assert_eq!(s["command"], "exponent-table");
    assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
    assert!(all_pass(&s));
    for a in s["assertions"].as_array().unwrap() {
        for key in ["name", "pass", "value", "bound"] {
            assert!(a.get(key).is_some(), "{key}");
        }
    }
}

#[test]
fn constant_sweep_reports_the_thin_shell_band() {
    let dir = tempfile::tempdir().unwrap();
    let o = bog_lab(dir.path(), &["constant-sweep", "--kind", "annulus3d", "--L", "2,1.5,1.25,1.125", "--q", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = csv(dir.path(), "constant-sweep");
    assert_eq!(text.lines().next(), Some("domain_kind,R,L,q,method,c_star,resolution,residual"));
    assert_eq!(text.lines().count(), 5);
    let s = summary(dir.path(), "constant-sweep");
    let band = s["assertions"].as_array().unwrap().iter().find(|a| a["name"] == "thin_shell_band[R=1]").unwrap();
    assert_eq!(band["pass"], true);
    assert!(band["value"].as_f64().unwrap() <= 3.0);
}

#[test]
fn empty_ratio_list_is_rejected_with_the_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = bog_lab(dir.path(), &["constant-sweep", "--L", ""]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`L`"));
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "L = []\n").unwrap();
    let o = bog_lab(dir.path(), &["constant-sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`L`"));
    assert!(!dir.path().join("constant-sweep.csv").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "L = [2, 1.5]\nq = 2\nresolution = [4, 8, 8]\nseed = 11\n").unwrap();
    let o = bog_lab(dir.path(), &["constant-sweep", "--config", config.to_str().unwrap(), "--L", "1.25"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path(), "constant-sweep");
    assert_eq!(s["config"]["L"], serde_json::json!([1.25]));
    assert_eq!(s["config"]["resolution"], serde_json::json!([4, 8, 8]));
    assert_eq!(s["config"]["seed"], 11);
    assert_eq!(csv(dir.path(), "constant-sweep").lines().count(), 2);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["pressure-check", "--q", "2", "--count", "3", "--probes", "2", "--resolution", "4,4,8"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(bog_lab(a.path(), &args).status.success());
    assert!(bog_lab(b.path(), &args).status.success());
    assert_eq!(csv(a.path(), "pressure-check"), csv(b.path(), "pressure-check"));
    assert_eq!(summary(a.path(), "pressure-check"), summary(b.path(), "pressure-check"));
    let c = tempfile::tempdir().unwrap();
    let mut other = args.to_vec();
    other.extend(["--seed", "99"]);
    assert!(bog_lab(c.path(), &other).status.success());
    assert_ne!(csv(a.path(), "pressure-check"), csv(c.path(), "pressure-check"));
}

#[test]
fn every_command_writes_its_documented_header() {
    let cases: [(&str, &[&str], &str); 7] = [
        ("exponent-table", &["--delta", "0,1", "--alpha", "0,3/19"], "delta,alpha,q,beta1,beta2,beta3,beta,branch"),
        ("constant-sweep", &["--L", "2", "--resolution", "4,8,8"], "domain_kind,R,L,q,method,c_star,resolution,residual"),
        ("transform-verify", &["--L", "1.5", "--resolution", "8"], "variant,L,resolution,div_residual,norm_ratio"),
        ("pressure-check", &["--q", "2", "--count", "2", "--probes", "1", "--resolution", "4,4,8"], "q,lhs,N,c1,slack"),
        ("energy-check", &["--resolution", "8,8,16"], "R,lhs,I1,I2,I3,residual"),
        ("criterion-sweep", &["--R", "10,100"], "R,value,fit_exponent"),
        (
            "covering-stats",
            &["--sigma", "1/8", "--samples", "2000"],
            "R,L,sigma,balls,coverage,max_multiplicity,mean_multiplicity,containment_margin",
        ),
    ];
    for (command, extra, header) in cases {
        let dir = tempfile::tempdir().unwrap();
        let mut args = vec![command];
        args.extend_from_slice(extra);
        let o = bog_lab(dir.path(), &args);
        assert!(o.status.code().is_some_and(|c| c < 2), "{command}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(csv(dir.path(), command).lines().next(), Some(header), "{command}");
        assert_eq!(summary(dir.path(), command)["command"], command);
    }
}

#[test]
fn failed_assertions_set_the_exit_code() {
    // a coarse ledger misses the 1e-3 residual bound but still writes artifacts
    let dir = tempfile::tempdir().unwrap();
    let o = bog_lab(dir.path(), &["energy-check", "--resolution", "8,8,16"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!all_pass(&summary(dir.path(), "energy-check")));
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_bog-lab"))
            .args(["criterion-sweep", "--R", "10,100", "--output"])
            .arg(dir.path())
            .env("BOG_LAB_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(run("1").status.success());
    let bad = run("zero");
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("BOG_LAB_THREADS"));
}

#[test]
fn downstream_errors_name_their_module() {
    let dir = tempfile::tempdir().unwrap();
    let o = bog_lab(dir.path(), &["energy-check", "--sigma", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("energy:"));
}
