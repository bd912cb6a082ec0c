//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Every tolerance lives in the constants
//! below.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use platoon_core::controllers::{idm_equilibrium_gap, ControlContext, Controller, Kinematics, StrategyParams};
use platoon_core::energy::{emission_rate, equilibrium_curves, nfr, Pollutant};
use platoon_core::experiment::{
    emit_plot_data, p_grid, run_sweep, verify_probability_model, write_metrics_csv, MetricsRow, SweepSpec,
};
use platoon_core::fleet::{class_probabilities, VehicleClass};
use platoon_core::par::Execution;
use platoon_core::platoon::{Assignment, RearGap, StrategyCombo, StrategyMap};
use platoon_core::sim::{ring_gaps, RingSim, SimConfig};
use platoon_core::stability::{equilibrium_partials, log_grid, stability_margin, string_stable, transfer_magnitude};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// 1
const VTG1_MARGIN: f64 = 0.0624;
const VTG1_MARGIN_TOL: f64 = 1e-4;
// 2
const FIT_VEHICLES: usize = 100;
const FIT_RUNS: usize = 200;
const FIT_P_STEP: f64 = 0.01;
const FIT_R2_MARKOV: f64 = 0.90;
const FIT_RMSE_LV1_CLUSTERED: f64 = 0.02;
const FIT_R2_PV_CLUSTERED: f64 = 0.99;
const FIT_TIME_LIMIT: Duration = Duration::from_secs(60);
// 3
const CLOSURE_TRIPLES: usize = 1000;
const CLOSURE_TOL: f64 = 1e-12;
const LIMIT_TOL: f64 = 1e-6;
const LIMIT_EPS: f64 = 1e-9;
// 4
const PARTIAL_SPEEDS: usize = 10;
const PARTIAL_REL_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-4;
const SIGN_SPEEDS: usize = 5;
const SWEEP_POINTS: usize = 200_000;
const PEAK_TOL: f64 = 1e-9;
// 5
const HOLD_SPEED: f64 = 15.0;
const HOLD_VEHICLES: usize = 20;
const HOLD_SECONDS: f64 = 100.0;
const HOLD_DRIFT_TOL: f64 = 1e-3;
const HOLD_ACCEL_TOL: f64 = 1e-6;
// 6
const NOX_DECEL_RATE: f64 = 2.17e-4;
const PM_ZERO_ABOVE: f64 = 20.0;
const NOX_ZERO_ABOVE: f64 = 25.0;
const CURVE_STEP: f64 = 0.01;
// 7
const DESK_DURATION: f64 = 600.0;
const DESK_WARMUP: f64 = 300.0;
const SPREAD_LIMIT: f64 = 0.10;
const DESK_TIME_LIMIT: Duration = Duration::from_secs(15 * 60);

struct Report {
    failed: usize,
    total: usize,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, detail: String) {
        self.total += 1;
        if !ok {
            self.failed += 1;
        }
        println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0, total: 0 };
    stability_scalar(&mut r);
    probability_fit(&mut r);
    probability_closure(&mut r);
    partials_oracle(&mut r);
    equilibrium_hold(&mut r);
    fuel_points(&mut r);
    let desk = desk_rankings(&mut r);
    determinism(&mut r, &desk);
    println!("acceptance: {} of {} checks passed", r.total - r.failed, r.total);
    if r.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn stability_scalar(r: &mut Report) {
    let s = string_stable(Controller::Vtg1, &StrategyParams::default(), 20.0).unwrap();
    let ok = s.stable && (s.margin - VTG1_MARGIN).abs() <= VTG1_MARGIN_TOL;
    r.line(
        "1",
        ok,
        format!(
            "VTG1 margin {:.6} (want {VTG1_MARGIN} +- {VTG1_MARGIN_TOL}), stable={}",
            s.margin, s.stable
        ),
    );
}

fn probability_fit(r: &mut Report) {
    let t0 = Instant::now();
    let grid = p_grid(FIT_P_STEP);
    let rep =
        verify_probability_model(&grid, &[0.0, 1.0], FIT_VEHICLES, FIT_RUNS, 4, 2024, Execution::Parallel).unwrap();
    let elapsed = t0.elapsed();
    let get = |o: f64, c: VehicleClass| rep.row(o, c).unwrap().clone();
    let markov: Vec<_> = [VehicleClass::Lv1, VehicleClass::Lv2, VehicleClass::Pv]
        .map(|c| get(0.0, c))
        .into();
    let lv1 = get(1.0, VehicleClass::Lv1);
    let pv = get(1.0, VehicleClass::Pv);
    let ok = markov.iter().all(|m| m.r_squared >= FIT_R2_MARKOV)
        && lv1.rmse <= FIT_RMSE_LV1_CLUSTERED
        && pv.r_squared >= FIT_R2_PV_CLUSTERED
        && elapsed <= FIT_TIME_LIMIT;
    r.line(
        "2",
        ok,
        format!(
            "O=0 r2 LV1/LV2/PV = {:.4}/{:.4}/{:.4} (>= {FIT_R2_MARKOV}); O=1 rmse LV1 {:.4} (<= {FIT_RMSE_LV1_CLUSTERED}), r2 PV {:.4} (>= {FIT_R2_PV_CLUSTERED}); {:.1?}",
            markov[0].r_squared, markov[1].r_squared, markov[2].r_squared, lv1.rmse, pv.r_squared, elapsed
        ),
    );
}

fn probability_closure(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_sum = 0.0f64;
    let mut worst_limit = 0.0f64;
    for _ in 0..CLOSURE_TRIPLES {
        let p: f64 = rng.random_range(0.0..=1.0);
        let o: f64 = rng.random_range(0.0..=1.0);
        let s: usize = rng.random_range(1..=12);
        let d = class_probabilities(p, o, s).unwrap();
        worst_sum = worst_sum.max((d.lv1 + d.lv2 + d.pv - p).abs());
        let near = class_probabilities(p, 1.0 - LIMIT_EPS, s).unwrap();
        let at = class_probabilities(p, 1.0, s).unwrap();
        let diff = (near.lv1 - at.lv1)
            .abs()
            .max((near.lv2 - at.lv2).abs())
            .max((near.pv - at.pv).abs());
        worst_limit = worst_limit.max(diff);
    }
    let ok = worst_sum <= CLOSURE_TOL && worst_limit <= LIMIT_TOL;
    r.line(
        "3",
        ok,
        format!("{CLOSURE_TRIPLES} triples: max |sum - p| {worst_sum:.2e} (<= {CLOSURE_TOL:e}), max O->1 gap {worst_limit:.2e} (<= {LIMIT_TOL:e})"),
    );
}

fn partials_oracle(r: &mut Report) {
    let params = StrategyParams::default();
    let len = params.bdbm.length;
    let ctx = |v: f64, x: f64, dv: f64, ap: f64| {
        ControlContext::following(
            Kinematics::new(0.0, v, 0.0),
            Kinematics::new(x, v + dv, ap),
            x - len,
            len,
        )
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut disagreements = 0;
    let controllers = [Controller::Ctg { headway: 1.1 }, Controller::Vtg1, Controller::Vtg2];
    for c in controllers {
        for _ in 0..PARTIAL_SPEEDS {
            let v: f64 = rng.random_range(1.0..33.0);
            let x = c.desired_gap(&ctx(v, 100.0, 0.0, 0.0), &params) + len;
            let f = |v: f64, x: f64, dv: f64, ap: f64| c.accel(&ctx(v, x, dv, ap), &params).unwrap();
            let h = FD_STEP;
            let fd_v = (f(v + h, x, -h, 0.0) - f(v - h, x, h, 0.0)) / (2.0 * h);
            let fd_dv = (f(v, x, h, 0.0) - f(v, x, -h, 0.0)) / (2.0 * h);
            let fd_dx = (f(v, x + h, 0.0, 0.0) - f(v, x - h, 0.0, 0.0)) / (2.0 * h);
            let fd_k = (f(v, x, 0.0, h) - f(v, x, 0.0, -h)) / (2.0 * h);
            let p = equilibrium_partials(c, &params, v).unwrap();
            for (fd, exact) in [(fd_v, p.g_v - p.g_dv), (fd_dv, p.g_dv), (fd_dx, p.g_dx), (fd_k, p.k)] {
                worst = worst.max((fd - exact).abs() / exact.abs());
            }
        }
        let grid = log_grid(1e-4, 100.0, SWEEP_POINTS);
        for _ in 0..SIGN_SPEEDS {
            let v: f64 = rng.random_range(0.5..33.0);
            let p = equilibrium_partials(c, &params, v).unwrap();
            let peak = grid.iter().map(|&w| transfer_magnitude(&p, w)).fold(0.0, f64::max);
            if (stability_margin(&p) >= 0.0) != (peak <= 1.0 + PEAK_TOL) {
                disagreements += 1;
            }
        }
    }
    let ok = worst <= PARTIAL_REL_TOL && disagreements == 0;
    r.line(
        "4",
        ok,
        format!("CTG/VTG1/VTG2 worst partial rel. error {worst:.2e} (<= {PARTIAL_REL_TOL:e}); margin/peak sign disagreements {disagreements}"),
    );
}

fn hold(controller: Controller, params: &StrategyParams) -> (f64, f64) {
    let len = params.bdbm.length;
    let probe = ControlContext::following(
        Kinematics::new(0.0, HOLD_SPEED, 0.0),
        Kinematics::new(100.0, HOLD_SPEED, 0.0),
        100.0 - len,
        len,
    );
    let gap = match controller {
        Controller::Idm | Controller::Bdbm => idm_equilibrium_gap(HOLD_SPEED, &params.bdbm),
        c => c.desired_gap(&probe, params),
    };
    let spacing = gap + len;
    let ring = spacing * HOLD_VEHICLES as f64;
    let rear = if controller == Controller::Bdbm {
        RearGap::Own
    } else {
        RearGap::None
    };
    let map = StrategyMap {
        combo: None,
        platoons: Vec::new(),
        assignments: vec![
            Assignment {
                class: if controller == Controller::Idm {
                    VehicleClass::Hv
                } else {
                    VehicleClass::Lv2
                },
                controller,
                platoon: None,
                leader: None,
                rear,
            };
            HOLD_VEHICLES
        ],
    };
    let state = (0..HOLD_VEHICLES)
        .map(|i| Kinematics::new((HOLD_VEHICLES - 1 - i) as f64 * spacing, HOLD_SPEED, 0.0))
        .collect();
    let cfg = SimConfig {
        ring_length: ring,
        duration: HOLD_SECONDS,
        warmup: 0.0,
        record_every: 1,
        params: *params,
        ..SimConfig::default()
    };
    let log = RingSim::from_parts(cfg, map, state).unwrap().run().unwrap();
    let (mut drift, mut accel) = (0.0f64, 0.0f64);
    for k in 0..log.len() {
        let s = log.sample(k);
        for g in ring_gaps(s, ring, len) {
            drift = drift.max((g - gap).abs());
        }
        for v in s {
            accel = accel.max(v.a.abs());
        }
    }
    (drift, accel)
}

fn equilibrium_hold(r: &mut Report) {
    let params = StrategyParams::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for c in [
        Controller::Ctg {
            headway: params.headway_lv,
        },
        Controller::Ctg {
            headway: params.headway_pv,
        },
        Controller::Vtg1,
        Controller::Vtg2,
        Controller::Bdbm,
        Controller::Idm,
    ] {
        let (drift, accel) = hold(c, &params);
        ok &= drift < HOLD_DRIFT_TOL && accel < HOLD_ACCEL_TOL;
        let name = match c.headway() {
            Some(h) => format!("CTG(h={h})"),
            None => c.label().to_string(),
        };
        parts.push(format!("{name} {drift:.1e}/{accel:.1e}"));
    }
    r.line(
        "5",
        ok,
        format!(
            "max drift/|a| over {HOLD_SECONDS} s (< {HOLD_DRIFT_TOL:e} m / {HOLD_ACCEL_TOL:e} m/s2): {}",
            parts.join(", ")
        ),
    );
}

fn fuel_points(r: &mut Report) {
    let nfr_ok = nfr(-5.0) == 1.0;
    let speeds: Vec<f64> = (0..=3330).map(|i| i as f64 * 0.01).collect();
    let nox_ok = speeds
        .iter()
        .all(|&v| emission_rate(v, -1.0, Pollutant::Nox) == NOX_DECEL_RATE);
    let above = |lo: f64| -> Vec<f64> {
        let n = ((33.3 - lo) / CURVE_STEP).floor() as usize;
        (1..=n).map(|i| lo + i as f64 * CURVE_STEP).collect()
    };
    let curves = |lo: f64| equilibrium_curves(&above(lo)).unwrap();
    let first_positive = |lo: f64, p: Pollutant| {
        curves(lo)
            .into_iter()
            .find(|c| c.pollutants[p as usize] > 0.0)
            .map(|c| (c.v, c.pollutants[p as usize]))
    };
    let pm = first_positive(PM_ZERO_ABOVE, Pollutant::Pm);
    let nox = first_positive(NOX_ZERO_ABOVE, Pollutant::Nox);
    let last_nox = curves(NOX_ZERO_ABOVE)
        .into_iter()
        .filter(|c| c.pollutants[Pollutant::Nox as usize] > 0.0)
        .map(|c| c.v)
        .fold(f64::NAN, f64::max);
    let describe = |x: Option<(f64, f64)>| match x {
        None => "zero throughout".to_string(),
        Some((v, g)) => format!("positive from v={v:.2} ({g:.3e} g/km)"),
    };
    let ok = nfr_ok && nox_ok && pm.is_none() && nox.is_none();
    let mut detail = format!(
        "nfr(-5)==1 {nfr_ok}; NOx(a=-1)==2.17e-4 for all v {nox_ok}; PM above {PM_ZERO_ABOVE} m/s {}; NOx above {NOX_ZERO_ABOVE} m/s {}",
        describe(pm),
        describe(nox)
    );
    if nox.is_some() {
        detail.push_str(&format!(
            " (cruise NOx coefficients cross zero near {last_nox:.2} m/s, so no implementation can satisfy the 25 m/s bound)"
        ));
    }
    r.line("6", ok, detail);
}

struct Desk {
    spec: SweepSpec,
    rows: Vec<MetricsRow>,
}

fn desk_spec() -> SweepSpec {
    let mut spec = SweepSpec {
        densities: vec![15.0, 55.0, 95.0],
        penetrations: vec![0.6, 0.8, 1.0],
        combos: StrategyCombo::ALL.to_vec(),
        ..SweepSpec::default()
    };
    spec.base.duration = DESK_DURATION;
    spec.base.warmup = DESK_WARMUP;
    spec
}

fn desk_rankings(r: &mut Report) -> Desk {
    let spec = desk_spec();
    let t0 = Instant::now();
    let rows = run_sweep(&spec, Execution::Parallel).unwrap();
    let elapsed = t0.elapsed();
    let cell = |d: f64, p: f64, name: &str| {
        rows.iter()
            .find(|x| x.density == d && x.penetration == p && x.combo.name() == name)
            .unwrap_or_else(|| panic!("missing cell {d} {p} {name}"))
    };
    let nff = |x: &MetricsRow| x.footprint.and_then(|f| f.nff).unwrap_or(f64::NAN);

    // a
    let light: Vec<f64> = StrategyCombo::ALL
        .iter()
        .map(|c| nff(cell(15.0, 0.8, &c.name())))
        .collect();
    let mean = light.iter().sum::<f64>() / light.len() as f64;
    let spread = light.iter().cloned().fold(f64::MIN, f64::max) - light.iter().cloned().fold(f64::MAX, f64::min);
    r.line(
        "7a",
        spread <= SPREAD_LIMIT * mean,
        format!(
            "density 15, p=0.8: NFF spread {:.2}% of mean {mean:.3} g/km (<= {:.0}%)",
            100.0 * spread / mean,
            100.0 * SPREAD_LIMIT
        ),
    );

    // b
    let bs: Vec<f64> = [0.6, 0.8, 1.0].iter().map(|&p| nff(cell(55.0, p, "BS-BS"))).collect();
    let ok_b = bs.windows(2).all(|w| w[1] >= w[0]);
    r.line(
        "7b",
        ok_b,
        format!(
            "density 55 BS-BS NFF over p=0.6/0.8/1.0: {:.9}/{:.9}/{:.9} g/km",
            bs[0], bs[1], bs[2]
        ),
    );

    // c
    let mut heavy: Vec<(String, f64)> = StrategyCombo::ALL
        .iter()
        .map(|c| (c.name(), nff(cell(95.0, 1.0, &c.name()))))
        .collect();
    heavy.sort_by(|a, b| a.1.total_cmp(&b.1));
    let bottom_two: Vec<&str> = heavy[..2].iter().map(|x| x.0.as_str()).collect();
    let ok_c = bottom_two.contains(&"VTG1-CS") && bottom_two.contains(&"VTG2-CS") && heavy[2].0 == "CTG-CS";
    r.line(
        "7c",
        ok_c,
        format!(
            "density 95, p=1 NFF order: {}",
            heavy
                .iter()
                .map(|(n, v)| format!("{n} {v:.1}"))
                .collect::<Vec<_>>()
                .join(" < ")
        ),
    );

    // d
    let mut parts = Vec::new();
    let mut ok_d = true;
    for p in Pollutant::ALL {
        let g = |name: &str| {
            cell(95.0, 1.0, name)
                .footprint
                .and_then(|f| f.pollutant(p))
                .unwrap_or(f64::NAN)
        };
        let base = g("CTG-CTG");
        let cs: Vec<f64> = ["VTG1-CS", "VTG2-CS", "CTG-CS"].iter().map(|n| g(n)).collect();
        ok_d &= cs.iter().all(|x| *x < base);
        parts.push(format!("{p} {:.3e}/{:.3e}/{:.3e} vs {base:.3e}", cs[0], cs[1], cs[2]));
    }
    r.line(
        "7d",
        ok_d,
        format!(
            "density 95, p=1, VTG1-CS/VTG2-CS/CTG-CS vs CTG-CTG g/km: {}",
            parts.join("; ")
        ),
    );
    r.line(
        "7-runtime",
        elapsed <= DESK_TIME_LIMIT,
        format!(
            "{} cells of {DESK_DURATION} s in {elapsed:.1?} (<= {DESK_TIME_LIMIT:?})",
            rows.len()
        ),
    );
    Desk { spec, rows }
}

fn determinism(r: &mut Report, desk: &Desk) {
    let dir = tempfile::tempdir().unwrap();
    let rerun = run_sweep(&desk.spec, Execution::Sequential).unwrap();
    let write = |rows: &[MetricsRow], name: &str| {
        let sub = dir.path().join(name);
        std::fs::create_dir_all(&sub).unwrap();
        write_metrics_csv(rows, &sub.join("metrics.csv")).unwrap();
        let out = emit_plot_data(rows, &sub.join("plots")).unwrap();
        let mut files = vec![sub.join("metrics.csv")];
        files.extend(out.files);
        files
            .iter()
            .map(|f| (f.file_name().unwrap().to_owned(), std::fs::read(f).unwrap()))
            .collect::<Vec<_>>()
    };
    let a = write(&desk.rows, "a");
    let b = write(&rerun, "b");
    let ok = a == b && !a.is_empty();
    r.line(
        "8",
        ok,
        format!(
            "{} CSV files from a parallel run and a sequential re-run are byte-identical: {ok}",
            a.len()
        ),
    );
}
