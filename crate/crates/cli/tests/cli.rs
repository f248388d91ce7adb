use std::path::Path;
use std::process::{Command, Output};

fn kramers(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kramers"))
        .args(args)
        .env_remove("KRAMERS_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_record(o: &Output) -> serde_json::Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    serde_json::from_str(text.lines().next().expect("error line")).expect("json error record")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn zero_field_levels() {
    let o = kramers(&["levels", "--site", "I", "--state", "ground", "--B", "0", "--no-stamp"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("Bx_mT,By_mT,Bz_mT,E1_GHz,E2_GHz,E3_GHz,E4_GHz"));
    let e: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .skip(3)
        .map(|v| v.parse().unwrap())
        .collect();
    for (got, want) in e.iter().zip([-1.7228, -0.9028, 1.1433, 1.4823]) {
        assert!((got - want).abs() < 1e-3, "{e:?}");
    }
}

#[test]
fn stamp_is_first_line_unless_disabled() {
    let with = stdout(&kramers(&["levels", "--B", "0"]));
    assert!(with.starts_with("# kramers "));
    let without = stdout(&kramers(&["levels", "--B", "0", "--no-stamp"]));
    assert_eq!(
        with.lines().skip(1).collect::<Vec<_>>(),
        without.lines().collect::<Vec<_>>()
    );
}

#[test]
fn empty_shb_sweep_fails_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("map.csv");
    let pgm = dir.path().join("map.pgm");
    let o = kramers(&[
        "shb-map",
        "--B",
        "",
        "-o",
        csv.to_str().unwrap(),
        "--pgm",
        pgm.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err = error_record(&o);
    assert_eq!(err["key"], "B");
    assert!(err["code"].is_string() && err["message"].is_string());
    assert!(!csv.exists() && !pgm.exists());
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for k in 0..2 {
        let csv = dir.path().join(format!("map{k}.csv"));
        let pgm = dir.path().join(format!("map{k}.pgm"));
        let o = kramers(&[
            "shb-map",
            "--site",
            "I",
            "--B",
            "0:40:10",
            "--burn",
            "track:1-1",
            "--grid=-1:1:0.05",
            "--no-stamp",
            "-o",
            csv.to_str().unwrap(),
            "--pgm",
            pgm.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push((std::fs::read(&csv).unwrap(), std::fs::read(&pgm).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    let pgm = &runs[0].1;
    assert!(pgm.starts_with(b"P5\n41 5\n255\n"));
    assert_eq!(pgm.len(), b"P5\n41 5\n255\n".len() + 41 * 5);
}

#[test]
fn thread_count_does_not_change_output() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_kramers"))
            .args(["epr-map", "--step", "15", "--no-stamp"])
            .env("KRAMERS_THREADS", threads)
            .output()
            .unwrap()
    };
    let (one, four) = (run("1"), run("4"));
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    let bad = run("zero");
    assert!(!bad.status.success());
    assert_eq!(error_record(&bad)["key"], "KRAMERS_THREADS");
}

#[test]
fn every_subcommand_has_a_schema() {
    for cmd in [
        "levels",
        "transitions",
        "absorption",
        "shb-map",
        "odmr",
        "epr-map",
        "fit",
        "invert",
        "ordering",
        "zefoz",
        "selftest",
    ] {
        let o = kramers(&[cmd, "--schema"]);
        assert!(o.status.success(), "{cmd}");
        let text = stdout(&o);
        assert!(text.starts_with("file,column,description\n"), "{cmd}");
        assert!(text.lines().count() > 1, "{cmd}");
    }
}

#[test]
fn schema_matches_output_header() {
    let schema = stdout(&kramers(&["transitions", "--schema"]));
    let columns: Vec<&str> = schema.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    let out = stdout(&kramers(&["transitions", "--B", "10", "--no-stamp"]));
    assert_eq!(out.lines().next().unwrap(), columns.join(","));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", "[site]\npreset = \"II\"\nlinewidth = 3\n");
    let o = kramers(&["levels", "--B", "0", "--config", &cfg]);
    assert!(!o.status.success());
    let err = error_record(&o);
    assert_eq!(err["code"], "config");
    assert_eq!(err["key"], "site.linewidth");
}

#[test]
fn config_selects_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", "[site]\npreset = \"II\"\n");
    let from_cfg = stdout(&kramers(&["odmr", "--B", "0", "--no-stamp", "--config", &cfg]));
    let from_flag = stdout(&kramers(&["odmr", "--B", "0", "--no-stamp", "--site", "II"]));
    assert_eq!(from_cfg, from_flag);
    assert!(from_cfg.contains(",2370.4"));
}

#[test]
fn usage_errors_are_json() {
    let o = kramers(&["levels", "--bogus"]);
    assert!(!o.status.success());
    let err = error_record(&o);
    assert_eq!(err["code"], "usage");
    assert_eq!(err["key"], "bogus");
}

#[test]
fn selftest_reports_each_item() {
    let o = kramers(&["selftest", "--no-stamp"]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.contains(",PASS,") || r.contains(",FAIL,")));
    assert!(rows.iter().any(|r| r.starts_with("odmr site-II,PASS")));
    assert!(rows.iter().any(|r| r.starts_with("avoided crossing site-I ground")));
    assert_eq!(o.status.success(), rows.iter().all(|r| r.contains(",PASS,")));
}

#[test]
fn inversion_of_site_two_lines() {
    let o = kramers(&["invert", "--site", "II", "--no-stamp"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let a3: f64 = row[2].parse().unwrap();
    assert!((a3 - 4.8668).abs() < 2e-3, "{row:?}");
}

#[test]
fn fit_from_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let levels = |b: &str| {
        let text = stdout(&kramers(&["transitions", "--B", b, "--dir", "D2", "--no-stamp"]));
        text.lines()
            .skip(1)
            .map(|l| {
                let c: Vec<&str> = l.split(',').collect();
                let ghz: f64 = c[5].parse::<f64>().unwrap() * 1e-3;
                format!("shb,ground,0,1,0,{b},{ghz},0.002,{}-{}\n", c[3], c[4])
            })
            .collect::<String>()
    };
    let mut data = String::from("kind,state,dir_x,dir_y,dir_z,B_mT,value,sigma,label\n");
    for b in ["10", "40", "80", "120"] {
        data += &levels(b);
    }
    let path = write(dir.path(), "data.csv", &data);
    let res = dir.path().join("res.csv");
    let o = kramers(&[
        "fit",
        "--data",
        &path,
        "--restarts",
        "2",
        "--no-stamp",
        "--residuals",
        res.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rms: f64 = text
        .lines()
        .find(|l| l.starts_with("rms_MHz,"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!(rms < 1e-3, "{text}");
    assert_eq!(std::fs::read_to_string(&res).unwrap().lines().count(), 25);
}

#[test]
fn missing_data_file_is_reported() {
    let o = kramers(&["fit", "--data", "/nonexistent/data.csv"]);
    assert!(!o.status.success());
    assert_eq!(error_record(&o)["key"], "data");
}
