use asian_lsv::asymptotics::{rate_at, rate_series};
use asian_lsv::model::{expansion_inputs, make_local_vol, make_sabr, Curve, MarketState};
use asian_lsv::oracle::{
    el_residual, lambda_functional, lv_rate, rho_pm_rate, solve_fixed, solve_floating,
    OracleOptions,
};

fn sabr_market() -> MarketState {
    MarketState::new(1.0, 0.1, 0.0, 0.0).unwrap()
}

#[test]
fn fixed_strike_tracks_series_at_small_moneyness() {
    let market = sabr_market();
    for rho in [-0.5, 0.0, 0.5] {
        let model = make_sabr(2.0).unwrap().with_rho(rho).unwrap();
        let series = rate_series(&expansion_inputs(&model, &market).unwrap()).unwrap();
        for x in [-0.01, 0.01_f64] {
            let sol = solve_fixed(&model, &market, x.exp(), &OracleOptions::default()).unwrap();
            assert!(sol.converged);
            assert!((sol.rate - rate_at(&series, x)).abs() < 1e-6, "rho {rho} x {x}");
            assert!(sol.rate > 0.0);
        }
    }
}

#[test]
fn grid_refinement_is_monotone_and_second_order() {
    let market = sabr_market();
    let model = make_sabr(2.0).unwrap().with_rho(-0.7).unwrap();
    let sol = solve_fixed(&model, &market, 0.1_f64.exp(), &OracleOptions::default()).unwrap();
    let r: Vec<f64> = sol.grid_rates.iter().map(|g| g.1).collect();
    let (d1, d2) = ((r[1] - r[0]).abs(), (r[2] - r[1]).abs());
    assert!(d2 < d1);
    assert!((d1 / d2 - 4.0).abs() < 0.5, "ratio {}", d1 / d2);
}

#[test]
fn solution_is_stationary_and_recomputes_its_action() {
    let market = sabr_market();
    let model = make_sabr(2.0).unwrap().with_rho(0.3).unwrap();
    let sol = solve_fixed(&model, &market, 0.95, &OracleOptions::default()).unwrap();
    let (rg, rh) = el_residual(&sol.paths, sol.lagrange_lambda, &model).unwrap();
    assert!(rg < 1e-6 && rh < 1e-6, "{rg} {rh}");
    let recomputed = lambda_functional(&sol.paths, &model).unwrap();
    assert!((recomputed / sol.rate - 1.0).abs() < 1e-3);
    let avg: f64 = {
        let n = sol.paths.n_nodes();
        let e: Vec<f64> = sol.paths.g.iter().map(|g| g.exp()).collect();
        (e.iter().sum::<f64>() - 0.5 * (e[0] + e[n - 1])) / (n - 1) as f64
    };
    assert!((avg - 0.95).abs() < 1e-8);
    let csv = sol.paths.to_csv();
    assert!(csv.starts_with("t,g,h\n"));
    assert_eq!(csv.lines().count(), sol.paths.n_nodes() + 1);
}

#[test]
fn large_moneyness_uses_continuation() {
    let market = sabr_market();
    let model = make_sabr(2.0).unwrap().with_rho(0.0).unwrap();
    let sol = solve_fixed(&model, &market, 0.4_f64.exp(), &OracleOptions::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.start_disagreement.is_some());
    assert!(!sol.starts_disagree());
}

#[test]
fn perfect_correlation_limit_is_continuous() {
    let market = sabr_market();
    for sign in [1.0, -1.0] {
        let pm = make_sabr(2.0).unwrap().with_rho(sign).unwrap();
        let near = make_sabr(2.0).unwrap().with_rho(0.999 * sign).unwrap();
        let k = 0.03_f64.exp();
        let a = rho_pm_rate(&pm, &market, k, sign, &OracleOptions::default()).unwrap();
        let b = solve_fixed(&near, &market, k, &OracleOptions::default()).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.rate / b.rate - 1.0).abs() < 1e-2);
        // asset path is slaved to the variance path
        let g_end = *a.paths.g.last().unwrap();
        let h_end = *a.paths.h.last().unwrap();
        let exact = sign * ((0.5 * h_end).exp() - 0.1_f64.sqrt());
        assert!((g_end - exact).abs() < 1e-9);
    }
}

#[test]
fn local_vol_matches_zero_vol_of_vol_series() {
    let market = MarketState::new(1.0, 1.0, 0.0, 0.0).unwrap();
    let eta = Curve::Tanh {
        f0: 1.0,
        f1: -0.5,
        x0: 0.0,
        anchor: 1.0,
    };
    let series = rate_series(&expansion_inputs(&make_local_vol(eta.clone()), &market).unwrap()).unwrap();
    let sol = lv_rate(&eta, &market, 0.1_f64.exp(), &OracleOptions::default()).unwrap();
    assert!((sol.rate - rate_at(&series, 0.1)).abs() < 1e-3);
    let flat = lv_rate(&Curve::Constant(0.5), &market, 0.01_f64.exp(), &OracleOptions::default()).unwrap();
    assert!((flat.rate / (6.0 * 1e-4) - 1.0).abs() < 0.02);
}

#[test]
fn floating_strike_shrinks_towards_atm() {
    let market = sabr_market();
    let model = make_sabr(2.0).unwrap();
    let opts = OracleOptions::default();
    let near = solve_floating(&model, &market, 0.01_f64.exp(), &opts).unwrap();
    let far = solve_floating(&model, &market, 0.1_f64.exp(), &opts).unwrap();
    assert!(near.converged && far.converged);
    assert!(near.rate < far.rate);
    // leading coefficient shared with the fixed strike
    assert!((near.rate / 1e-4 / 15.0 - 1.0).abs() < 0.01);
    assert!(solve_floating(&model, &market, 1.0, &opts).is_err());
}

#[test]
fn bad_options_are_rejected() {
    let market = sabr_market();
    let model = make_sabr(2.0).unwrap();
    let opts = OracleOptions {
        nodes: vec![201, 101],
        ..OracleOptions::default()
    };
    assert!(solve_fixed(&model, &market, 1.05, &opts).is_err());
    let opts = OracleOptions {
        tol_gradient: 0.0,
        ..OracleOptions::default()
    };
    assert!(solve_fixed(&model, &market, 1.05, &opts).is_err());
}
