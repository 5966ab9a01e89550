use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use aniflow::diagnostics::{convergence_order, read_diagnostics_csv};
use tempfile::TempDir;

fn aniflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aniflow"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn square(dir: &Path, name: &str, x0: f64, y0: f64) -> String {
    // clockwise unit square
    let text = format!(
        "x,y\n{x0},{y0}\n{x0},{}\n{},{}\n{},{y0}\n",
        y0 + 1.0,
        x0 + 1.0,
        y0 + 1.0,
        x0 + 1.0
    );
    write(dir, name, &text)
}

fn config(flow: &str, anisotropy: &str, n: usize, tau: f64, t_end: f64, extra: &str) -> String {
    format!(
        r#"{{"flow":"{flow}","anisotropy":{anisotropy},"N":{n},"tau":{tau:e},"t_end":{t_end:e},
            "initial_shape":{{"kind":"ellipse","a":2,"b":0.5}},"snapshot_every":10,"output_dir":"out"{extra}}}"#
    )
}

fn table_column(csv: &str) -> Vec<(f64, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

#[test]
fn simulate_writes_snapshots_diagnostics_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "sd.json",
        &config(
            "surface_diffusion",
            r#"{"kind":"kfold","beta":0.333333,"k":3}"#,
            32,
            1.0 / 1024.0,
            0.02,
            "",
        ),
    );
    let o = aniflow(&["simulate", "--config", &cfg, "--plots"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    for step in [0, 10, 20, 21] {
        assert!(out.join(format!("curve_{step:06}.csv")).exists(), "snapshot {step}");
    }
    assert!(out.join("plot.py").exists());
    let records = read_diagnostics_csv(out.join("diagnostics.csv")).unwrap();
    assert_eq!(records.len(), 22);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["monotone_energy"], true);
    assert!(summary["max_abs_rel_area_loss"].as_f64().unwrap() <= 1e-10);
    assert_eq!(summary["steps"], 21);
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &config("curvature_flow", r#"{"kind":"case1"}"#, 24, 1e-3, 0.01, ""),
    );
    let read_all = |d: &Path| {
        let mut files: Vec<_> = fs::read_dir(d).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(code(&aniflow(&["simulate", "--config", &cfg], dir.path())), 0);
    let first = read_all(&dir.path().join("out"));
    assert_eq!(
        code(&aniflow(
            &["simulate", "--config", &cfg, "--output-dir", "again"],
            dir.path()
        )),
        0
    );
    assert_eq!(first, read_all(&dir.path().join("again")));
}

#[test]
fn curvature_flow_area_strictly_decreases() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "cf.json",
        &config(
            "curvature_flow",
            r#"{"kind":"kfold","beta":0.333333,"k":3}"#,
            32,
            1.0 / 1024.0,
            0.02,
            "",
        ),
    );
    assert_eq!(code(&aniflow(&["simulate", "--config", &cfg], dir.path())), 0);
    let records = read_diagnostics_csv(dir.path().join("out/diagnostics.csv")).unwrap();
    assert!(records.windows(2).all(|w| w[1].area < w[0].area));
}

#[test]
fn semi_implicit_flag_keeps_the_schema() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &config("surface_diffusion", r#"{"kind":"case1"}"#, 24, 1e-3, 0.01, ""),
    );
    let o = aniflow(
        &["simulate", "--config", &cfg, "--semi-implicit", "--output-dir", "semi"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = aniflow(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let header = |p: &str| {
        fs::read_to_string(dir.path().join(p))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(header("semi/diagnostics.csv"), header("out/diagnostics.csv"));
    let semi = read_diagnostics_csv(dir.path().join("semi/diagnostics.csv")).unwrap();
    assert!(semi.iter().skip(1).all(|r| r.newton_iterations == 1));
    let full = read_diagnostics_csv(dir.path().join("out/diagnostics.csv")).unwrap();
    assert_ne!(semi.last().unwrap().area, full.last().unwrap().area);
}

#[test]
fn simulate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let short = write(
        dir.path(),
        "short.json",
        &config("surface_diffusion", r#"{"kind":"case1"}"#, 16, 0.1, 0.01, ""),
    );
    assert_eq!(code(&aniflow(&["simulate", "--config", &short], dir.path())), 2);
    assert_eq!(code(&aniflow(&["simulate", "--config", "missing.json"], dir.path())), 2);
    let garbage = write(dir.path(), "garbage.json", "{ not json");
    assert_eq!(code(&aniflow(&["simulate", "--config", &garbage], dir.path())), 2);

    let violated = write(
        dir.path(),
        "v.json",
        &config(
            "curvature_flow",
            r#"{"kind":"kfold","beta":0.6,"k":3}"#,
            16,
            1e-3,
            2e-3,
            r#","stabilizer":{"kind":"constant","value":1.0}"#,
        ),
    );
    let o = aniflow(&["simulate", "--config", &violated], dir.path());
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("--force"));
    let o = aniflow(&["simulate", "--config", &violated, "--force"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let starved = write(
        dir.path(),
        "starved.json",
        &config(
            "surface_diffusion",
            r#"{"kind":"case1"}"#,
            16,
            1e-2,
            0.05,
            r#","newton":{"max_iterations":1}"#,
        ),
    );
    let o = aniflow(&["simulate", "--config", &starved], dir.path());
    assert_eq!(code(&o), 4);
    let msg = stderr(&o);
    assert!(msg.contains("step 1") && msg.contains("smaller tau"), "{msg}");
    assert!(dir.path().join("out/diagnostics.csv").exists());

    assert_eq!(code(&aniflow(&["simulate"], dir.path())), 2);
    assert_eq!(code(&aniflow(&["--help"], dir.path())), 0);
}

#[test]
fn k0_table_command() {
    let dir = TempDir::new().unwrap();
    let o = aniflow(&["k0-table", "--anisotropy", "isotropic"], dir.path());
    assert_eq!(code(&o), 0);
    let rows = table_column(&stdout(&o));
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|&(_, k)| k == 0.0));

    let o = aniflow(
        &[
            "k0-table",
            "--anisotropy",
            "kfold:beta=0.333333,k=3",
            "--points",
            "18",
            "--out",
            "k0.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("k0.csv")).unwrap();
    assert!(text.starts_with("theta,k0\n"));
    let rows = table_column(&text);
    assert_eq!(rows.len(), 18);
    for i in 0..18 {
        assert!((rows[i].0 - 2.0 * PI * i as f64 / 18.0).abs() < 1e-15);
        assert!((rows[i].1 - rows[(i + 6) % 18].1).abs() <= 1e-8, "row {i}");
    }

    let o = aniflow(&["k0-table", "--anisotropy", "kfold:beta=0.6,k=3"], dir.path());
    assert_eq!(code(&o), 3);
    assert_eq!(
        code(&aniflow(&["k0-table", "--anisotropy", "hexagonal"], dir.path())),
        2
    );
}

#[test]
fn stabilizer_table_round_trips_through_config() {
    let dir = TempDir::new().unwrap();
    let o = aniflow(
        &["k0-table", "--anisotropy", "case1", "--points", "720", "--out", "k.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let from_file = write(
        dir.path(),
        "file.json",
        &config(
            "surface_diffusion",
            r#"{"kind":"case1"}"#,
            24,
            1e-3,
            0.005,
            r#","stabilizer":{"kind":"file","file":"k.csv"}"#,
        ),
    );
    let auto = write(
        dir.path(),
        "auto.json",
        &config("surface_diffusion", r#"{"kind":"case1"}"#, 24, 1e-3, 0.005, ""),
    );
    assert_eq!(
        code(&aniflow(
            &["simulate", "--config", &from_file, "--output-dir", "f"],
            dir.path()
        )),
        0
    );
    assert_eq!(
        code(&aniflow(
            &["simulate", "--config", &auto, "--output-dir", "a"],
            dir.path()
        )),
        0
    );
    assert_eq!(
        fs::read(dir.path().join("f/diagnostics.csv")).unwrap(),
        fs::read(dir.path().join("a/diagnostics.csv")).unwrap()
    );
}

#[test]
fn check_gamma_command() {
    let dir = TempDir::new().unwrap();
    let o = aniflow(&["check-gamma", "--anisotropy", "case1"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("holds"));

    let o = aniflow(
        &["check-gamma", "--anisotropy", "kfold:beta=0.3333333333333333,k=3"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let margin: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("min margin: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((margin - 2.0 / 3.0).abs() < 1e-12, "{margin}");

    assert_eq!(
        code(&aniflow(
            &["check-gamma", "--anisotropy", "kfold:beta=0.6,k=3"],
            dir.path()
        )),
        3
    );
}

#[test]
fn distance_command() {
    let dir = TempDir::new().unwrap();
    let a = square(dir.path(), "a.csv", 0.0, 0.0);
    let b = square(dir.path(), "b.csv", 0.5, 0.0);
    let c = square(dir.path(), "c.csv", 3.0, 0.0);
    let run = |x: &str, y: &str| -> f64 {
        let o = aniflow(&["distance", x, y], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        stdout(&o).trim().parse().unwrap()
    };
    assert_eq!(run(&a, &a), 0.0);
    assert!((run(&a, &b) - 1.0).abs() < 1e-12);
    assert_eq!(run(&a, &c), 2.0);

    let bow = write(dir.path(), "bow.csv", "x,y\n0,0\n1,1\n1,0\n0,1\n");
    assert_eq!(code(&aniflow(&["distance", &a, &bow], dir.path())), 2);
    assert_eq!(code(&aniflow(&["distance", &a, "nope.csv"], dir.path())), 2);
}

#[test]
fn converge_command() {
    let dir = TempDir::new().unwrap();
    let anis = r#"{"kind":"kfold","beta":0.1111111111111111,"k":3}"#;
    let cfg = write(
        dir.path(),
        "c.json",
        &config("surface_diffusion", anis, 8, 1.0, 1.0, ""),
    );
    let reference = write(
        dir.path(),
        "ref.json",
        &config("surface_diffusion", anis, 32, 1.0 / 1024.0, 1.0, ""),
    );

    // the finest member coincides with the reference run
    let o = aniflow(
        &[
            "converge",
            "--config",
            &cfg,
            "--h",
            "0.125,0.0625,0.03125",
            "--reference",
            &reference,
            "--time",
            "0.05",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("h,error,order"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    let errors: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    assert_eq!(errors[2].1, 0.0);
    assert!(errors[0].1 > errors[1].1 && errors[1].1 > 0.0);
    assert!(rows.iter().all(|r| r[2].is_empty()));
    for n in [8, 16, 32] {
        assert!(dir.path().join(format!("out/h_{n}/final.csv")).exists());
    }

    // a curve file as reference, orders consistent with the errors
    fs::copy(dir.path().join("out/h_32/final.csv"), dir.path().join("ref.csv")).unwrap();
    let o = aniflow(
        &[
            "converge",
            "--config",
            &cfg,
            "--h",
            "0.125,0.0625",
            "--reference",
            "ref.csv",
            "--time",
            "0.05",
            "--output-dir",
            "two",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("two/convergence.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().unwrap())
                .collect()
        })
        .collect();
    assert_eq!(rows[0].len(), 2);
    assert_eq!((rows[0][1], rows[1][1]), (errors[0].1, errors[1].1));
    let expected = convergence_order(&[(rows[0][0], rows[0][1]), (rows[1][0], rows[1][1])]).unwrap();
    assert_eq!(rows[1][2], expected[0]);

    let o = aniflow(
        &[
            "converge",
            "--config",
            &cfg,
            "--h",
            "0.125,0.1",
            "--reference",
            "ref.csv",
            "--time",
            "0.05",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn converge_respects_thread_cap() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &config("curvature_flow", r#"{"kind":"isotropic"}"#, 8, 1.0, 1.0, ""),
    );
    let r = write(
        dir.path(),
        "r.json",
        &config("curvature_flow", r#"{"kind":"isotropic"}"#, 16, 1.0 / 256.0, 1.0, ""),
    );
    let args = [
        "converge",
        "--config",
        &cfg,
        "--h",
        "0.125,0.0625",
        "--reference",
        &r,
        "--time",
        "0.02",
    ];
    let o = Command::new(env!("CARGO_BIN_EXE_aniflow"))
        .args(args)
        .current_dir(dir.path())
        .env("ANIFLOW_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_aniflow"))
        .args(args)
        .current_dir(dir.path())
        .env("ANIFLOW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
