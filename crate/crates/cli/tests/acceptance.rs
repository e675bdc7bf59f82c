//! Acceptance suite. Each test prints one `criterion N ...: PASS|FAIL` line.
//!
//! The tests share one lock so the timed run is not competing for the CPU,
//! and criteria 2, 5 and 7 share a single full-year `compare` run.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use euroem_core::baseline::{economic_dispatch, unit_commitment, DispatchOptions};
use euroem_core::bidding::{Bid, BidSet, ThermalBids};
use euroem_core::cascades::{simulate_cascade, CascadeParams, Contingency, Failure};
use euroem_core::grid::GridBranch;
use euroem_core::model::{Demand, SpeedClass, ThermalTech, ThermalUnit};
use euroem_core::pipeline::ModelRun;
use euroem_core::{clear_market, compare, load_system, run_pipeline, Grid, MarketOptions, ModelKind, OperatingPoint, RunConfig, SystemModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// Written straight to stderr so the line shows even when output is captured.
fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion} ({name}): {verdict}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn dataset() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ieee118-3z")
}

fn gas_unit(id: String, p_min: f64, p_max: f64, cost: Vec<f64>) -> ThermalUnit {
    ThermalUnit {
        id,
        bus: 0,
        technology: if p_min > 0.0 { ThermalTech::HardCoal } else { ThermalTech::Gas },
        speed: if p_min > 0.0 { SpeedClass::Slow } else { SpeedClass::Fast },
        p_min,
        p_max,
        ramp_up: p_max,
        ramp_down: p_max,
        marginal_cost: cost,
        startup_cost: 0.0,
        shutdown_cost: 0.0,
        initially_on: p_min > 0.0,
    }
}

fn single_bus(name: &str, horizon: usize, demand: Vec<f64>, bid_price: f64) -> SystemModel {
    let mut sys = SystemModel::new(name, horizon);
    let z = sys.add_zone("Z1");
    sys.add_bus("b1", z);
    sys.demands.push(Demand {
        id: "d".into(),
        bus: 0,
        scheduled: demand,
        bid_price,
        shed_cost: bid_price,
        shares: Vec::new(),
    });
    sys
}

struct YearRun {
    system: SystemModel,
    runs: BTreeMap<&'static str, ModelRun>,
    seconds: f64,
    _out: tempfile::TempDir,
}

fn year() -> &'static YearRun {
    static YEAR: OnceLock<YearRun> = OnceLock::new();
    YEAR.get_or_init(|| {
        let out = tempfile::tempdir().unwrap();
        let mut config = RunConfig::new(dataset());
        config.out = out.path().to_path_buf();
        let clock = Instant::now();
        let runs = compare(&config).expect("full-year compare");
        YearRun {
            system: load_system(&dataset()).unwrap(),
            runs: runs.into_iter().map(|r| (r.model.label(), r)).collect(),
            seconds: clock.elapsed().as_secs_f64(),
            _out: out,
        }
    })
}

/// Accepts offers cheapest first until demand is met or offers exceed the
/// demand bid. Returns accepted volumes and the clearing price.
fn merit_order_oracle(offers: &[(f64, f64)], demand: f64, bid_price: f64) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..offers.len()).collect();
    order.sort_by(|&a, &b| offers[a].1.total_cmp(&offers[b].1));
    let mut accepted = vec![0.0; offers.len()];
    let mut left = demand;
    for i in order {
        let (q, p) = offers[i];
        if p >= bid_price {
            break;
        }
        if q >= left {
            accepted[i] = left;
            return (accepted, p);
        }
        accepted[i] = q;
        left -= q;
    }
    (accepted, bid_price)
}

#[test]
fn criterion_1_merit_order_oracle() {
    let _guard = serial();
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = Vec::new();
    let mut instances = 0;
    while instances < 200 {
        let n = rng.gen_range(1..=6);
        let offers: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(1.0..150.0f64).round(), rng.gen_range(0.0..100.0f64).round() + 0.25))
            .collect();
        let demand = rng.gen_range(1.0..500.0f64).round() + 0.5;
        let cheapest = offers.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
        let bid_price = rng.gen_range(cheapest + 1.0..cheapest + 120.0).round() + 0.5;
        let mut prices: Vec<f64> = offers.iter().map(|o| o.1).collect();
        prices.sort_by(f64::total_cmp);
        if prices.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        instances += 1;

        let mut sys = single_bus("oracle", 1, vec![demand], bid_price);
        for (i, &(q, p)) in offers.iter().enumerate() {
            sys.thermal.push(gas_unit(format!("g{i}"), 0.0, q, vec![p]));
        }
        let bids = BidSet {
            horizon: 1,
            thermal: offers
                .iter()
                .map(|&(q, p)| ThermalBids {
                    positive: vec![Bid::new(q, p)],
                    negative: vec![Bid::default()],
                })
                .collect(),
            storage: Vec::new(),
        };
        let result = clear_market(&bids, &sys, &MarketOptions::default()).unwrap();
        let (expected, price) = merit_order_oracle(&offers, demand, bid_price);
        let cleared = result.dispatch.prices.as_ref().unwrap()[0][0];
        let quantities_ok = expected
            .iter()
            .enumerate()
            .all(|(g, q)| (result.dispatch.thermal[g][0] - q).abs() <= 1e-6);
        if !quantities_ok || (cleared - price).abs() > 1e-6 {
            mismatches.push(format!("instance {instances}: price {cleared} vs {price}"));
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let pass = mismatches.is_empty() && secs < 60.0;
    report(1, "merit-order oracle", pass, &format!("{} of 200 instances match, {secs:.2} s", 200 - mismatches.len()));
    assert!(pass, "{mismatches:?}");
}

#[test]
fn criterion_2_constraint_residuals() {
    let _guard = serial();
    let year = year();
    let mut worst = (0.0f64, String::new());
    let mut rows = 0;
    for label in ["dam", "ed", "uc"] {
        let checks = &year.runs[label].checks;
        rows += checks.checked_rows;
        if checks.max_constraint_residual >= worst.0 {
            worst = (checks.max_constraint_residual, format!("{label} {}", checks.worst_constraint.clone().unwrap_or_default()));
        }
    }
    let pass = worst.0 <= 1e-6 && rows > 0;
    report(
        2,
        "constraint residuals",
        pass,
        &format!("max residual {:.3e} over {rows} rows ({})", worst.0, worst.1.trim()),
    );
    assert!(pass);
}

#[test]
fn criterion_3_commitment_never_costs_more() {
    let _guard = serial();
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for i in 0..50 {
        let horizon = 24;
        let n = rng.gen_range(2..=6);
        let units: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| {
                let p_max = rng.gen_range(20.0..200.0);
                let p_min = if rng.gen_bool(0.5) { p_max * rng.gen_range(0.2..0.6) } else { 0.0 };
                (p_min, p_max, rng.gen_range(5.0..120.0))
            })
            .collect();
        let floor: f64 = units.iter().map(|u| u.0).sum();
        let cap: f64 = units.iter().map(|u| u.1).sum();
        let demand: Vec<f64> = (0..horizon).map(|_| rng.gen_range(floor + 1.0..floor + 0.9 * (cap - floor) + 2.0)).collect();
        let mut sys = single_bus(&format!("dominance{i}"), horizon, demand, 3000.0);
        for (g, &(p_min, p_max, cost)) in units.iter().enumerate() {
            let series = (0..horizon).map(|_| cost * rng.gen_range(0.9..1.1)).collect();
            sys.thermal.push(gas_unit(format!("g{g}"), p_min, p_max, series));
        }
        let options = DispatchOptions::default();
        let ed = economic_dispatch(&sys, &options).unwrap().total_cost;
        let uc = unit_commitment(&sys, &options).unwrap().0.total_cost;
        worst = worst.max((uc - ed) / ed);
        if uc > ed * (1.0 + 1e-4) {
            violations += 1;
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let pass = violations == 0 && secs < 300.0;
    report(
        3,
        "UC dominates ED",
        pass,
        &format!("{violations} of 50 instances violate, worst (UC-ED)/ED {worst:.2e}, {secs:.2} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_dc_physics() {
    let _guard = serial();
    let branch = |from, to| GridBranch {
        from,
        to,
        reactance: 0.1,
        rating: 100.0,
    };
    let ring = Grid::new(3, vec![branch(0, 1), branch(1, 2), branch(0, 2)]);
    let f = ring.dc_power_flow(&[90.0, 0.0, -90.0]).unwrap();
    let ring_ok = (f[2] - 60.0).abs() <= 1e-9 && (f[0] - 30.0).abs() <= 1e-9 && (f[1] - 30.0).abs() <= 1e-9;

    let sys = load_system(&dataset()).unwrap();
    let grid = Grid::from_system(&sys);
    let ptdf = grid.ptdf().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut draw = || -> Vec<f64> {
            let mut v: Vec<f64> = (0..grid.n_bus).map(|_| rng.gen_range(-200.0..200.0)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            v
        };
        let (a, b) = (draw(), draw());
        let k = rng.gen_range(-5.0..5.0);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| k * x + y).collect();
        let (fa, fb, fm) = (ptdf.flows(&a), ptdf.flows(&b), ptdf.flows(&mix));
        let direct = grid.dc_power_flow(&mix).unwrap();
        for l in 0..fm.len() {
            worst = worst.max((fm[l] - (k * fa[l] + fb[l])).abs()).max((fm[l] - direct[l]).abs());
        }
    }
    let pass = ring_ok && worst <= 1e-9;
    report(
        4,
        "DC physics",
        pass,
        &format!("ring flows {:.9}/{:.9}/{:.9}, worst linearity error {worst:.2e} over 100 vectors", f[2], f[0], f[1]),
    );
    assert!(pass);
}

#[test]
fn criterion_5_redispatch_feasibility() {
    let _guard = serial();
    let year = year();
    let grid = Grid::from_system(&year.system);
    let ptdf = grid.ptdf().unwrap();
    let mut worst = 0.0f64;
    let mut hours = BTreeMap::new();
    for label in ["dam", "ed", "uc"] {
        let results = &year.runs[label].redispatch;
        hours.insert(label, results.len());
        for r in results {
            let flows = ptdf.flows(&r.point.bus_injections(&year.system));
            for (flow, br) in flows.iter().zip(&grid.branches) {
                worst = worst.max(flow.abs() / br.rating);
            }
        }
    }
    let opf_cost: f64 = year.runs["opf"].redispatch.iter().map(|r| r.cost).sum();
    let full_year = hours.values().all(|&h| h == 8760);
    let pass = full_year && worst <= 1.0 + 1e-6 && opf_cost == 0.0;
    report(
        5,
        "redispatch feasibility",
        pass,
        &format!("max loading {worst:.9} over {hours:?} hours, OPF redispatch cost {opf_cost} EUR"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_cascade_hand_case() {
    let _guard = serial();
    let mut sys = single_bus("pocket", 1, vec![150.0], 3000.0);
    let z = sys.buses[0].zone;
    sys.add_bus("b2", z);
    sys.demands[0].bus = 1;
    sys.add_branch("a", 0, 1, 0.1, 100.0);
    sys.add_branch("b", 0, 1, 0.1, 100.0);
    sys.thermal.push(gas_unit("g".into(), 0.0, 300.0, vec![10.0]));
    let grid = Grid::from_system(&sys);
    let point = OperatingPoint {
        hour: 0,
        thermal: vec![150.0],
        storage_net: Vec::new(),
        renewable: Vec::new(),
        demand: vec![150.0],
        load_relief: vec![0.0; 2],
    };
    let c = Contingency { id: 0, branches: vec![0] };
    let r = simulate_cascade(&point, &[true], &sys, &grid, &c, &CascadeParams::default());
    let sequence = vec![Failure { branch: 0, iteration: 0 }, Failure { branch: 1, iteration: 1 }];
    let pass = r.dns == 150.0 && r.failures == sequence;
    report(6, "cascade hand case", pass, &format!("DNS {} MW, {} failures", r.dns, r.failures.len()));
    assert!(pass, "{r:?}");
}

#[test]
fn criterion_7_directional_reproduction() {
    let _guard = serial();
    let year = year();
    let m = |label: &str| &year.runs[label].metrics;
    let fast = |label: &str| m(label).activation_by_speed.get("fast").copied().unwrap_or(0.0);
    let charging = |label: &str| m(label).total_storage_charging_mwh;
    let mean_price = |label: &str| m(label).prices.as_ref().map(|p| p.mean).unwrap_or(f64::NAN);
    let dns = |label: &str| m(label).cascades.cumulative_dns_mw;
    let rd_max = |label: &str| m(label).redispatch.as_ref().map(|r| r.daily_max_eur).unwrap_or(f64::NAN);

    let parts = [
        (
            "a",
            fast("dam") > fast("uc") && fast("uc") > fast("ed"),
            format!("fast activation DAM {:.4} > UC {:.4} > ED {:.4}", fast("dam"), fast("uc"), fast("ed")),
        ),
        (
            "b",
            charging("dam") > charging("uc") && charging("uc") > charging("ed"),
            format!("storage charging DAM {:.0} > UC {:.0} > ED {:.0} MWh", charging("dam"), charging("uc"), charging("ed")),
        ),
        (
            "c",
            mean_price("dam") > mean_price("ed"),
            format!("mean price DAM {:.2} > ED {:.2} EUR/MWh", mean_price("dam"), mean_price("ed")),
        ),
        (
            "d",
            dns("dam") > dns("ed") && dns("dam") > dns("uc") && dns("dam") > dns("opf"),
            format!(
                "cumulative DNS DAM {:.0} > ED {:.0}, UC {:.0}, OPF {:.0} MW",
                dns("dam"),
                dns("ed"),
                dns("uc"),
                dns("opf")
            ),
        ),
        (
            "e",
            rd_max("ed") > rd_max("dam") && rd_max("uc") > rd_max("dam"),
            format!("redispatch daily max ED {:.0}, UC {:.0} > DAM {:.0} EUR", rd_max("ed"), rd_max("uc"), rd_max("dam")),
        ),
    ];
    for (tag, pass, detail) in &parts {
        report(7, &format!("direction {tag}"), *pass, detail);
    }
    let failed: Vec<&str> = parts.iter().filter(|p| !p.1).map(|p| p.0).collect();
    report(
        7,
        "directional reproduction",
        failed.is_empty(),
        &format!("full-year compare in {:.0} s, failing parts {failed:?}", year.seconds),
    );
    assert!(failed.is_empty(), "directions not reproduced: {failed:?}");
}

#[test]
fn criterion_8_full_year_runtime() {
    let _guard = serial();
    let out = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(dataset());
    config.model = ModelKind::Dam;
    config.representative_hours = 6;
    config.contingencies = 100;
    config.out = out.path().to_path_buf();
    let clock = Instant::now();
    let run = run_pipeline(&config).expect("full-year DAM run");
    let secs = clock.elapsed().as_secs_f64();
    let pass = secs < 3600.0 && run.metrics.hours == 8760 && run.cascades.len() == 600;
    report(
        8,
        "full-year runtime",
        pass,
        &format!("DAM, redispatch and 6 x 100 cascades over {} h in {secs:.0} s", run.metrics.hours),
    );
    assert!(pass);
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_9_determinism() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("compare.toml");
    fs::write(
        &config,
        format!(
            "dataset = {:?}\nhours = 336\nrepresentative_hours = 6\ncontingencies = 100\nseed = 99\n",
            dataset().to_str().unwrap()
        ),
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let output = Command::new(env!("CARGO_BIN_EXE_euroem"))
            .args(["compare", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        files(&out)
    };
    let (a, b) = (run("first"), run("second"));
    let differing: Vec<_> = a.keys().filter(|k| b.get(*k) != a.get(*k)).cloned().collect();
    let pass = a.len() == b.len() && differing.is_empty() && !a.is_empty();
    report(
        9,
        "determinism",
        pass,
        &format!("{} artifact files from two compare runs, {} differ", a.len(), differing.len()),
    );
    assert!(pass, "{differing:?}");
}
