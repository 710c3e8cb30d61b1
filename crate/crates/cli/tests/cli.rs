use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wits_cli::config::{parse_config, parse_grid_file, resolved_toml};
use wits_core::bench::{DatasetSpec, KernelSpec, LambdaSpec, Method, SweepAxis};
use wits_core::data::{blobs_rotated, write_csv};

fn wits(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wits"))
        .args(args)
        .env_remove("WITS_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_blobs(dir: &Path, n: usize, theta: f64, seed: u64) -> (PathBuf, PathBuf) {
    let ts = blobs_rotated(n, n, theta, seed).unwrap();
    let (x, y) = (dir.join("x.csv"), dir.join("y.csv"));
    write_csv(&x, &ts.x).unwrap();
    write_csv(&y, &ts.y).unwrap();
    (x, y)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn identical_files_do_not_reject() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = write_blobs(dir.path(), 60, 0.0, 1);
    let out = wits(&["test", s(&x), s(&x), "--method", "kfda-witness", "--sigma", "0.3", "--lambda", "0.01"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("fail to reject H0"), "{text}");
    assert!(text.contains("method,x,y,n,m,r,sigma,lambda,alpha,B,statistic,p_value,threshold,reject,seed"));
}

#[test]
fn shifted_data_rejects_with_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = write_blobs(dir.path(), 500, std::f64::consts::FRAC_PI_4, 2);
    let report = dir.path().join("report.csv");
    let out = wits(&[
        "test", s(&x), s(&y), "--method", "kfda-witness", "--r", "0.5", "--alpha", "0.05", "--B", "200", "--grid",
        "default", "--out", s(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rows = csv::Reader::from_path(&report).unwrap();
    let row = rows.records().next().unwrap().unwrap();
    assert_eq!(&row[0], "kfda-witness");
    assert_eq!(&row[3], "500");
    assert_eq!(&row[13], "true");
}

#[test]
fn every_method_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = write_blobs(dir.path(), 40, 0.5, 3);
    for method in ["kfda-witness", "opt-mmd-witness", "mmd-boot", "kfda-boot"] {
        let out = wits(&["test", s(&x), s(&y), "--method", method, "--B", "50", "--grid", "none"]);
        assert!(out.status.success(), "{method}: {}", stderr(&out));
        assert!(stdout(&out).contains(method));
    }
    let out = wits(&[
        "test", s(&x), s(&y), "--sigma", "0.3", "--lambda", "0.01", "--falkon-centers", "30", "--cg-iters", "20",
        "--threshold", "analytic",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("threshold"));
}

#[test]
fn grid_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = write_blobs(dir.path(), 40, 0.5, 4);
    let grid = dir.path().join("grid.toml");
    fs::write(&grid, "sigma_grid = [0.25]\nlambda_grid = [0.5]\n").unwrap();
    let out = wits(&["test", s(&x), s(&y), "--grid", s(&grid), "--B", "20"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("kfda-witness,"));
    assert!(stdout(&out).contains(",0.25,0.5,"));
}

#[test]
fn missing_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = wits(&["test", s(&missing), s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.csv"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = write_blobs(dir.path(), 20, 0.0, 5);
    assert_eq!(wits(&["test", s(&x), s(&y), "--method", "bogus"]).status.code(), Some(1));
    assert_eq!(wits(&["test", s(&x), s(&y), "--alpha", "2"]).status.code(), Some(1));
    assert_eq!(wits(&["test", s(&x), s(&y), "--cg-iters", "3"]).status.code(), Some(1));
    assert_eq!(wits(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(wits(&["--help"]).status.code(), Some(0));
}

#[test]
fn dimension_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    fs::write(&x, "a,b\n1,2\n3,4\n5,6\n").unwrap();
    fs::write(&y, "a\n1\n2\n3\n").unwrap();
    let out = wits(&["test", s(&x), s(&y), "--method", "mmd-boot", "--sigma", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn witness_constant_on_test_data_is_numerical() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    fs::write(&x, "v\n1\n1\n1\n1\n1\n1\n").unwrap();
    let out = wits(&["test", s(&x), s(&x), "--sigma", "1", "--lambda", "1", "--threshold", "analytic"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

const NULL_CONFIG: &str = r#"
[dataset]
kind = "blobs_rotated"
n = 30
theta = 0.0

[method]
name = "mmd-boot"

[stage1]
sigma = 0.2

[stage2]
permutations = 40

[harness]
repetitions = 6
seed = 11
"#;

#[test]
fn power_runs_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("null.toml");
    fs::write(&cfg, NULL_CONFIG).unwrap();
    let out_csv = dir.path().join("res.csv");
    let out = wits(&["power", s(&cfg), "--out", s(&out_csv)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(&out_csv).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,dataset,n,m,r,sigma,lambda,alpha,B,R,rejection_rate,std_err,seed"
    );
    assert!(lines.next().unwrap().starts_with("mmd-boot,"));

    let resolved = fs::read_to_string(dir.path().join("res.resolved.toml")).unwrap();
    let a = parse_config(NULL_CONFIG, dir.path()).unwrap();
    let b = parse_config(&resolved, dir.path()).unwrap();
    assert_eq!(a, b);
    assert!(resolved.contains("alpha = 0.05"));

    // Same config, same numbers.
    let again = dir.path().join("again.csv");
    assert!(wits(&["power", s(&cfg), "--out", s(&again)]).status.success());
    assert_eq!(table, fs::read_to_string(&again).unwrap());
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    let text = format!("{NULL_CONFIG}\n[sweep]\naxis = \"method\"\nvalues = [\"mmd-boot\", \"kfda-boot\"]\n");
    fs::write(&cfg, text).unwrap();
    let out_csv = dir.path().join("sweep.csv");
    let out = wits(&["sweep", s(&cfg), "--out", s(&out_csv)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(&out_csv).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("\nkfda-boot,"));

    let plain = dir.path().join("plain.toml");
    fs::write(&plain, NULL_CONFIG).unwrap();
    assert_eq!(wits(&["sweep", s(&plain), "--out", s(&out_csv)]).status.code(), Some(1));
}

#[test]
fn config_errors_name_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = NULL_CONFIG.replace("theta = 0.0", "theta = 0.0\ncolour = 1").replace("seed = 11", "seed = 11\nspeed = 2")
        + "\n[stage2x]\nalpha = 0.1\n";
    fs::write(&cfg, text).unwrap();
    let out = wits(&["power", s(&cfg), "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    for field in ["dataset.colour", "harness.speed", "stage2x"] {
        assert!(err.contains(field), "{field} missing from {err}");
    }
}

#[test]
fn syntax_errors_report_the_line() {
    let err = parse_config("[dataset]\nkind = \n", Path::new(".")).unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[test]
fn type_errors_are_all_listed() {
    let text = NULL_CONFIG.replace("n = 30", "n = \"thirty\"").replace("permutations = 40", "permutations = -1");
    let err = parse_config(&text, Path::new(".")).unwrap_err();
    assert_eq!(err.problems.len(), 2, "{err}");
    assert!(err.problems[0].contains("dataset.n"));
    assert!(err.problems[1].contains("stage2.permutations"));
}

#[test]
fn missing_required_fields_are_reported() {
    let err = parse_config("[dataset]\nn = 3\n", Path::new(".")).unwrap_err();
    let all = err.to_string();
    assert!(all.contains("dataset.kind") && all.contains("method.name"), "{all}");
}

#[test]
fn method_dependent_defaults() {
    let witness = parse_config("[dataset]\nkind = \"blobs_liu\"\nn = 10\n[method]\nname = \"kfda-witness\"\n", Path::new("."))
        .unwrap()
        .experiment;
    assert!(matches!(witness.kernel, KernelSpec::Grid(ref k) if k.len() == 10));
    assert!(matches!(witness.lambda, LambdaSpec::Grid(ref l) if l.len() == 5));
    let boot = parse_config("[dataset]\nkind = \"blobs_liu\"\nn = 10\n[method]\nname = \"kfda-boot\"\n", Path::new("."))
        .unwrap()
        .experiment;
    assert_eq!(boot.kernel, KernelSpec::MedianHeuristic);
    assert_eq!(boot.lambda, LambdaSpec::Fixed(1e-2));
}

#[test]
fn resolved_config_round_trips() {
    let texts = [
        NULL_CONFIG.to_string(),
        "[dataset]\nkind = \"blobs_liu\"\nn = 20\nm = 30\nnull = true\n[method]\nname = \"kfda-witness\"\n\
         [stage1]\nsigma = \"grid\"\nsigma_grid = [0.1, 0.2]\nlambda_grid = [1, 2]\nfalkon_centers = 10\n\
         [stage2]\nthreshold = \"analytic\"\nplus_one = true\n[harness]\nseed = 18446744073709551615\n"
            .replace("seed = 18446744073709551615", "seed = \"18446744073709551615\""),
        "[dataset]\nkind = \"csv\"\nx_path = \"a.csv\"\ny_path = \"b.csv\"\ncolumns = [1, 0]\ndelimiter = \";\"\n\
         [method]\nname = \"opt-mmd-witness\"\n[stage1]\nsigma = \"linear\"\n[sweep]\naxis = \"split_ratio\"\n\
         values = [0.25, 0.5]\n"
            .to_string(),
    ];
    for text in texts {
        let base = Path::new("/data");
        let a = parse_config(&text, base).unwrap();
        let echoed = resolved_toml(&a);
        let b = parse_config(&echoed, Path::new("/elsewhere")).unwrap();
        assert_eq!(a, b, "{echoed}");
        assert_eq!(echoed, resolved_toml(&b));
    }
    let csv = parse_config(
        "[dataset]\nkind = \"csv\"\nx_path = \"a.csv\"\ny_path = \"b.csv\"\n[method]\nname = \"mmd-boot\"\n",
        Path::new("/data"),
    )
    .unwrap();
    assert!(matches!(csv.experiment.dataset, DatasetSpec::Csv { ref x_path, .. } if x_path == Path::new("/data/a.csv")));
    assert_eq!(csv.experiment.method, Method::MmdBoot);
}

#[test]
fn sweep_axes_parse() {
    let cfg = format!("{NULL_CONFIG}\n[sweep]\naxis = \"sample_size\"\nvalues = [10, 20]\n");
    assert_eq!(parse_config(&cfg, Path::new(".")).unwrap().sweep, Some(SweepAxis::SampleSize(vec![10, 20])));
    let bad = format!("{NULL_CONFIG}\n[sweep]\naxis = \"colour\"\nvalues = [1]\n");
    assert!(parse_config(&bad, Path::new(".")).is_err());
    let empty = format!("{NULL_CONFIG}\n[sweep]\naxis = \"lambda\"\nvalues = []\n");
    assert!(parse_config(&empty, Path::new(".")).is_err());
}

#[test]
fn grid_files_validate() {
    let g = parse_grid_file("sigma_grid = [0.5, 1]\n").unwrap();
    assert_eq!(g.kernels().len(), 2);
    assert_eq!(g.lambdas().len(), 5);
    assert!(parse_grid_file("sigma_grid = [-1]\n").is_err());
    assert!(parse_grid_file("sigmas = [1]\n").unwrap_err().to_string().contains("sigmas"));
}
