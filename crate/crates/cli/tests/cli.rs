use std::io::Write;
use std::process::{Command, Output};

use asian_lsv::asymptotics::atm_price_slope;
use asian_lsv::model::{expansion_inputs, make_sabr, MarketState};

fn run(args: &[&str], config: Option<&str>) -> Output {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_asian-lsv"));
    cmd.args(args);
    if let Some(text) = config {
        file.write_all(text.as_bytes()).unwrap();
        cmd.arg("--config").arg(file.path());
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SABR: &str = "model.kind = sabr\nmodel.sigma = 2\nmodel.rho = 0\nmarket.s0 = 1\nmarket.v0 = 0.1\n";

#[test]
fn table1_prints_nine_rows() {
    let o = run(&["table1"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[0], "model,rho,sigma_atm,skew,convexity");
    assert_eq!(lines[1], "SABR,-0.7,0.183,-0.224,0.085");
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn smile_rows_center_on_atm_vol() {
    let cfg = format!("{SABR}request.x = -0.1, 0, 0.1\n");
    let o = run(&["smile"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "0");
    let atm: f64 = rows[1][2].parse().unwrap();
    assert!((atm - (0.1f64 / 3.0).sqrt()).abs() < 1e-11);
}

#[test]
fn wide_grid_warns() {
    let cfg = format!("{SABR}request.x = 0.5\n");
    let o = run(&["smile"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn price_rows_have_parity_and_atm_slope() {
    let t: f64 = 1.0 / 252.0;
    let cfg = format!("{SABR}request.x = 0\nrequest.maturity = {t}\n");
    let o = run(&["price"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<String>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    let c: f64 = rows[0][3].parse().unwrap();
    let p: f64 = rows[1][3].parse().unwrap();
    assert!((c - p).abs() < 1e-12);
    let market = MarketState::new(1.0, 0.1, 0.0, 0.0).unwrap();
    let slope = atm_price_slope(&market, &expansion_inputs(&make_sabr(2.0).unwrap(), &market).unwrap());
    assert!((c / t.sqrt() / slope - 1.0).abs() < 0.01);
}

#[test]
fn mc_is_reproducible_and_seed_is_required() {
    let cfg = format!("{SABR}request.x = -0.05, 0, 0.05\nrequest.maturity = 0.02\nmc.n_paths = 4000\nmc.n_steps = 50\n");
    let missing = run(&["mc"], Some(&cfg));
    assert_eq!(missing.status.code(), Some(2));
    let a = run(&["mc", "--seed", "11"], Some(&cfg));
    let b = run(&["mc", "--seed", "11"], Some(&cfg));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["mc", "--seed", "12"], Some(&cfg));
    assert_ne!(a.stdout, c.stdout);
    assert!(stdout(&a).starts_with("x,K,price_mc,stderr,sigma_mc,sigma_asym,diff\n"));
}

#[test]
fn mc_without_implied_vol_exits_three() {
    let cfg = format!("{SABR}request.x = 0.6\nrequest.maturity = 0.002\nmc.n_paths = 1000\nmc.n_steps = 10\nmc.seed = 3\n");
    let o = run(&["mc"], Some(&cfg));
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4], "");
}

#[test]
fn zero_vol_mc_has_zero_stderr() {
    let cfg = "model.kind = local-vol\nmodel.f0 = 1\nmarket.s0 = 1\nmarket.v0 = 1e-300\nmarket.r = 0.05\nrequest.x = 0\nrequest.maturity = 0.1\nmc.n_paths = 100\nmc.n_steps = 10\nmc.seed = 1\nrequest.side = call\n";
    let o = run(&["mc"], Some(cfg));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3], "0");
}

#[test]
fn oracle_modes() {
    let cfg = format!("{SABR}request.x = 0.01\noracle.nodes = 101, 201\n");
    let o = run(&["oracle"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(row[3].parse::<f64>().unwrap() < 1e-6);
    assert_eq!(row[4], "true");

    let pm = cfg.replace("model.rho = 0", "model.rho = 1");
    let o = run(&["oracle", "--mode", "rho-pm"], Some(&pm));
    assert_eq!(o.status.code(), Some(0));

    let o = run(&["oracle", "--mode", "local-vol"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["oracle", "--mode", "floating"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "");

    let o = run(&["oracle", "--mode", "bogus"], Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_rejects_atm() {
    let cfg = format!("{SABR}request.x = 0\n");
    assert_eq!(run(&["oracle"], Some(&cfg)).status.code(), Some(2));
}

#[test]
fn malformed_configs_exit_two() {
    for bad in [
        "model.kind = sabr\nmodel.sigma = two\nmarket.s0 = 1\nmarket.v0 = 0.1\nrequest.x = 0\n",
        "model.kind = sabr\nmarket.s0 = 1\nmarket.v0 = 0.1\nrequest.x = 0\n",
        "not a config line",
        "\u{0}\u{1}garbage = =",
    ] {
        let o = run(&["smile"], Some(bad));
        assert_eq!(o.status.code(), Some(2), "{bad:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    }
    assert_eq!(run(&["smile"], None).status.code(), Some(2));
}

#[test]
fn writes_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let o = run(&["table1", "--out", path.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 10);
}
