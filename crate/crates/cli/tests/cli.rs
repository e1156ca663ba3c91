use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsu-fresh"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SYMMETRIC: [&str; 4] = ["--r-ul", "1000", "--r-dl", "1000"];

/// `args` with the symmetric rates inserted after the subcommand.
fn with(args: &[&'static str]) -> Vec<&'static str> {
    let mut v = vec![args[0]];
    v.extend(SYMMETRIC);
    v.extend_from_slice(&args[1..]);
    v
}

#[test]
fn analytic_rsuc_aoi() {
    let mut args = vec!["analytic", "--scheme", "rsuc", "--metric", "aoi", "--items", "1", "--beta", "0.5"];
    args.extend(SYMMETRIC);
    let o = run(&args);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "scheme  beta  aoi\nrsuc    0.5   0.006\n");
}

#[test]
fn analytic_csv_is_full_precision() {
    let mut args = vec!["analytic", "--scheme", "conventional", "--items", "1", "--lambda-total", "200", "--format", "csv"];
    args.extend(SYMMETRIC);
    let o = run(&args);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "scheme,beta,latency,aoi,capacity");
    let fields: Vec<f64> = lines.next().unwrap().split(',').skip(1).map(|x| x.parse().unwrap()).collect();
    assert_eq!(fields[0], 0.5);
    assert!((fields[1] - 2.0 / 300.0).abs() < 1e-15);
    assert!((fields[3] - 500.0).abs() < 1e-12);
}

#[test]
fn optimize_p4_worked_example() {
    let o = run(&with(&["optimize", "--problem", "p4", "--aoi-cap", "0.02", "--lambda-list", "150,50", "--format", "json"]));
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let p = v[0]["update_prob"].as_array().unwrap();
    assert!((p[0].as_f64().unwrap() - 0.27504).abs() < 1e-4);
    assert!((p[1].as_f64().unwrap() - 0.47636).abs() < 1e-4);
    assert_eq!(v[0]["clamped"], "");
}

#[test]
fn optimize_all_problems() {
    for (problem, extra) in [("p1", None), ("p2", Some(("--weight-aoi", "1"))), ("p3", Some(("--aoi-cap", "0.006")))] {
        let mut args = with(&["optimize", "--problem", problem, "--items", "1", "--lambda-total", "200"]);
        if let Some((k, v)) = extra {
            args.extend([k, v]);
        }
        let o = run(&args);
        assert_eq!(code(&o), 0, "{problem}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("beta"));
    }
}

#[test]
fn exit_codes() {
    // Usage: missing key, unknown flag.
    assert_eq!(code(&run(&["analytic", "--scheme", "rsuc", "--r-ul", "1000"])), 2);
    assert_eq!(code(&run(&["analytic", "--nope"])), 2);
    assert_eq!(code(&run(&with(&["optimize", "--items", "1", "--lambda-total", "1"]))), 2);
    // Infeasible AoI cap.
    let o = run(&with(&["optimize", "--problem", "p3", "--aoi-cap", "0.001", "--items", "1", "--lambda-total", "200"]));
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("floor"));
    // Overload, analytic and simulated.
    let o = run(&with(&["analytic", "--scheme", "conventional", "--beta", "0.5", "--items", "1", "--lambda-total", "600"]));
    assert_eq!(code(&o), 4);
    let o = run(&with(&[
        "simulate", "--scheme", "rsuc", "--beta", "0.5", "--items", "1", "--lambda-total", "600",
        "--requests", "100000", "--divergence-bound", "500", "--replications", "2",
    ]));
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("downlink"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let rec = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let go = |path: &str| {
        run(&with(&[
            "simulate", "--scheme", "rea", "--update-prob", "0.3,0.6", "--lambda-list", "120,80",
            "--requests", "20000", "--replications", "3", "--seed", "7", "--records",
        ])
        .into_iter()
        .map(str::to_owned)
        .chain([path.to_owned()])
        .collect::<Vec<_>>()
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>())
    };
    let (a, b) = (go(&rec("a.csv")), go(&rec("b.csv")));
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let (ra, rb) = (fs::read(rec("a.csv")).unwrap(), fs::read(rec("b.csv")).unwrap());
    assert_eq!(ra, rb);
    let text = String::from_utf8(ra).unwrap();
    assert!(text.starts_with("item,arrival_time,delivery_start,delivery_complete,content_generation_time,latency,aoi\n"));
    assert_eq!(text.lines().count(), 20_001);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(
        &path,
        "r_ul = 1000.0\nr_dl = 1000.0\nitems = 1\nlambda_total = 200.0\n[scheme]\nkind = \"rsuc\"\nbeta = 0.2\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let o = run(&["analytic", "--config", p, "--metric", "latency", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let v: f64 = stdout(&o).lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((v - 1.0 / 600.0).abs() < 1e-15);
    let o = run(&["analytic", "--config", p, "--metric", "latency", "--beta", "0.5", "--format", "csv"]);
    let v: f64 = stdout(&o).lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((v - 1.0 / 300.0).abs() < 1e-15);

    fs::write(&path, "r_ul = 1000.0\nspeed = 3\n").unwrap();
    let o = run(&["analytic", "--config", p]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));
}

#[test]
fn sweep_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    for ext in ["csv", "json"] {
        let out = dir.path().join(format!("t.{ext}"));
        let o = run(&with(&[
            "sweep", "--family", "capacity_aoi", "--items", "1", "--lambda-total", "200", "--grid", "0.006,0.01,0.1",
            "--output",
        ])
        .into_iter()
        .chain([out.to_str().unwrap()])
        .collect::<Vec<_>>());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(&out).unwrap();
        match ext {
            "csv" => {
                assert!(text.starts_with("aoi_cap,scheme,status,capacity,knob\n"));
                assert_eq!(text.lines().count(), 7);
            }
            _ => assert_eq!(serde_json::from_str::<serde_json::Value>(&text).unwrap().as_array().unwrap().len(), 6),
        }
    }
}

#[test]
fn sweep_validation_without_simulation_to_stdout() {
    let o = run(&with(&["sweep", "--family", "validation", "--items", "1", "--lambda-total", "200", "--simulate", "false"]));
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 1 + 24);
}

#[test]
fn sweep_trace_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    fs::write(&trace, "time,lambda\n0,100\n20,300\n40,0\n").unwrap();
    let o = run(&with(&[
        "sweep", "--family", "trace", "--items", "1", "--lambda-total", "200", "--replications", "2", "--trace",
    ])
    .into_iter()
    .chain([trace.to_str().unwrap()])
    .collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // Three schemes, two buckets plus a summary each.
    assert_eq!(stdout(&o).lines().count(), 1 + 9);
}

#[test]
fn help_lists_config_keys() {
    for sub in ["analytic", "simulate", "optimize", "sweep"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(code(&o), 0);
        let text = stdout(&o);
        for key in ["--r-ul", "--r-dl", "--items", "--lambda-total", "--popularity", "--lambda-list", "--scheme", "--beta", "--update-prob", "--config"] {
            assert!(text.contains(key), "{sub} help lacks {key}");
        }
    }
    let text = stdout(&run(&["simulate", "--help"]));
    for key in ["--seed", "--requests", "--warmup-fraction", "--replications", "--service", "--divergence-bound", "--records", "--trace"] {
        assert!(text.contains(key), "simulate help lacks {key}");
    }
}
