//! End-to-end runs: dispatch model, redispatch, cascades, metrics and artifacts.
//!
//! Randomness comes from one root seed. Each consumer derives its own stream
//! with [`derive_seed`]: forecast noise uses stage `"forecast"` with the
//! unit's position in [`SystemModel::units`], and the contingency list uses
//! stage `"contingencies"` with index 0.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::{economic_dispatch, unit_commitment, DispatchOptions};
use crate::bidding::{form_bids, BidSet};
use crate::cascades::{
    classify_all, generate_contingencies, risk_curve, run_security, select_representative_hours, CascadeParams,
    CascadeResult, Contingency, DEFAULT_MIX,
};
use crate::dispatch::{Blocking, DispatchResult};
use crate::error::{Error, Result};
use crate::grid::{max_loading, redispatch_hours, solve_dc_opf, Grid, OpfOptions, PtdfMatrix, RedispatchOptions, RedispatchResult, UnitState};
use crate::ltpo::{optimize_positions, LtpoOptions, PositionSchedule};
use crate::market::{clear_market, MarketOptions, MarketResult};
use crate::metrics::{compute_metrics, MetricsOptions, MetricsReport};
use crate::model::{derive_seed, load_system, PriceForecast, SystemModel, UnitRef};
use crate::solver::DEFAULT_REL_GAP;
use crate::verify::{check_dispatch, check_market, check_positions, Residuals};

/// Present in a run directory until every artifact has been written.
pub const INCOMPLETE_MARKER: &str = "RUN_INCOMPLETE";

const ARTIFACTS: [&str; 11] = [
    "market_result.csv",
    "prices.csv",
    "flows.csv",
    "positions.csv",
    "bids.csv",
    "redispatch_costs.csv",
    "cascade_results.csv",
    "risk_curve.csv",
    "metrics.json",
    "checks.json",
    "representative_hours.csv",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dam,
    Ed,
    Uc,
    Opf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Dam, ModelKind::Ed, ModelKind::Uc, ModelKind::Opf];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Dam => "dam",
            ModelKind::Ed => "ed",
            ModelKind::Uc => "uc",
            ModelKind::Opf => "opf",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::validation("model", format!("`{s}` is not one of dam, ed, uc, opf")))
    }
}

fn default_model() -> ModelKind {
    ModelKind::Dam
}
fn default_k() -> usize {
    18
}
fn default_n() -> usize {
    1000
}
fn default_mix() -> Vec<f64> {
    DEFAULT_MIX.to_vec()
}
fn default_out() -> PathBuf {
    PathBuf::from("runs/latest")
}
fn default_block() -> usize {
    24
}
fn default_gap() -> f64 {
    DEFAULT_REL_GAP
}
fn default_trip() -> f64 {
    1.0
}
fn default_iterations() -> usize {
    100
}
fn default_threshold() -> f64 {
    100.0
}

/// Everything that parameterises a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub renewable_priority: bool,
    /// Root seed; the dataset manifest's seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_k")]
    pub representative_hours: usize,
    #[serde(default = "default_n")]
    pub contingencies: usize,
    #[serde(default = "default_mix")]
    pub contingency_mix: Vec<f64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Restricts the run to the first hours of the dataset.
    #[serde(default)]
    pub hours: Option<usize>,
    /// Hours per sequentially solved block in every dispatch model.
    #[serde(default = "default_block")]
    pub block_hours: usize,
    /// Relative MIP gap of unit commitment and position optimisation.
    #[serde(default = "default_gap")]
    pub rel_gap: f64,
    #[serde(default = "default_trip")]
    pub trip_factor: f64,
    #[serde(default = "default_iterations")]
    pub max_cascade_iterations: usize,
    #[serde(default = "default_threshold")]
    pub high_price_threshold: f64,
    /// Lets redispatch change zonal net positions.
    #[serde(default)]
    pub free_net_positions: bool,
}

impl RunConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            model: default_model(),
            renewable_priority: false,
            seed: None,
            representative_hours: default_k(),
            contingencies: default_n(),
            contingency_mix: default_mix(),
            out: default_out(),
            hours: None,
            block_hours: default_block(),
            rel_gap: default_gap(),
            trip_factor: default_trip(),
            max_cascade_iterations: default_iterations(),
            high_price_threshold: default_threshold(),
            free_net_positions: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::validation(format!("config.{field}"), msg));
        if self.block_hours == 0 {
            return bad("block_hours", "must be at least 1".into());
        }
        if !(self.rel_gap >= 0.0) {
            return bad("rel_gap", format!("{} is not a non-negative ratio", self.rel_gap));
        }
        if !(self.trip_factor > 0.0) {
            return bad("trip_factor", format!("{} must be positive", self.trip_factor));
        }
        if self.max_cascade_iterations == 0 {
            return bad("max_cascade_iterations", "must be at least 1".into());
        }
        let total: f64 = self.contingency_mix.iter().sum();
        if self.contingency_mix.is_empty() || self.contingency_mix.iter().any(|&m| !(m >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return bad("contingency_mix", format!("{:?} must be non-negative and sum to 1", self.contingency_mix));
        }
        if self.hours == Some(0) {
            return bad("hours", "must be at least 1".into());
        }
        Ok(())
    }

    fn blocking(&self) -> Blocking {
        Blocking::Hours(self.block_hours)
    }
}

/// Inputs shared by every model of a comparison.
#[derive(Debug, Clone)]
pub struct Study {
    pub system: SystemModel,
    pub grid: Grid,
    pub ptdf: PtdfMatrix,
    pub seed: u64,
    /// Hours of the security study, ascending.
    pub hours: Vec<usize>,
    pub contingencies: Vec<Contingency>,
}

impl Study {
    pub fn prepare(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let mut system = load_system(&config.dataset)?;
        if let Some(h) = config.hours {
            system = system.truncated(h)?;
        }
        let seed = config.seed.unwrap_or(system.seed);
        let grid = Grid::from_system(&system);
        let ptdf = grid.ptdf().map_err(|e| e.in_stage("grid"))?;
        let hours = if config.representative_hours == 0 {
            Vec::new()
        } else {
            let zonal = zonal_load(&system);
            select_representative_hours(&zonal, config.representative_hours.min(system.horizon))?
        };
        let contingencies = generate_contingencies(
            system.branches.len(),
            config.contingencies,
            &config.contingency_mix,
            derive_seed(seed, "contingencies", 0),
        )?;
        Ok(Self {
            system,
            grid,
            ptdf,
            seed,
            hours,
            contingencies,
        })
    }
}

/// Scheduled demand per zone and hour.
pub fn zonal_load(system: &SystemModel) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; system.horizon]; system.zones.len()];
    for (i, d) in system.demands.iter().enumerate() {
        let z = system.demand_zone(i);
        for (t, v) in d.scheduled.iter().enumerate() {
            out[z][t] += v;
        }
    }
    out
}

/// Results of one model through every stage.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub model: ModelKind,
    pub dispatch: DispatchResult,
    pub positions: Option<PositionSchedule>,
    pub bids: Option<BidSet>,
    pub market: Option<MarketResult>,
    pub redispatch: Vec<RedispatchResult>,
    pub cascades: Vec<CascadeResult>,
    pub metrics: MetricsReport,
    pub checks: Checks,
}

/// Independent re-checks of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checks {
    pub max_constraint_residual: f64,
    pub worst_constraint: Option<String>,
    pub checked_rows: usize,
    /// Largest |flow| / rating after redispatch.
    pub max_post_redispatch_loading: f64,
    pub cascades_at_iteration_cap: usize,
}

/// Price forecasts for position optimisation.
///
/// Thermal units and storage that cannot charge see the dataset's zonal
/// forecast; storage that can charge sees the economic-dispatch prices of
/// its zone. Both get multiplicative noise once per unit.
pub fn build_forecasts(system: &SystemModel, ed_prices: &[Vec<f64>], seed: u64) -> BTreeMap<UnitRef, PriceForecast> {
    let reference = system.price_forecast.as_deref().unwrap_or(ed_prices);
    system
        .units()
        .enumerate()
        .filter(|(_, u)| !matches!(u, UnitRef::Renewable(_)))
        .map(|(i, unit)| {
            let zone = system.unit_zone(unit);
            let series = match unit {
                UnitRef::Storage(s) if system.storage[s].can_charge() => &ed_prices[zone],
                _ => &reference[zone],
            };
            let f = PriceForecast::noisy(system.unit_id(unit), series, system.noise_sigma, derive_seed(seed, "forecast", i as u64));
            (unit, f)
        })
        .collect()
}

fn dispatch_options(config: &RunConfig) -> DispatchOptions {
    DispatchOptions {
        blocking: config.blocking(),
        rel_gap: config.rel_gap,
    }
}

fn run_ed(study: &Study, config: &RunConfig) -> Result<DispatchResult> {
    economic_dispatch(&study.system, &dispatch_options(config)).map_err(|e| e.in_stage("economic dispatch"))
}

/// Runs one model through dispatch, redispatch, cascades and metrics.
///
/// `ed` is reused when the model needs economic-dispatch prices.
pub fn run_model(study: &Study, config: &RunConfig, model: ModelKind, ed: Option<&DispatchResult>) -> Result<ModelRun> {
    let system = &study.system;
    let blocking = config.blocking();
    let clock = Instant::now();
    let mut residuals = Residuals::default();
    let mut positions = None;
    let mut bids = None;
    let mut market = None;
    let dispatch = match model {
        ModelKind::Ed => match ed {
            Some(d) => d.clone(),
            None => run_ed(study, config)?,
        },
        ModelKind::Uc => unit_commitment(system, &dispatch_options(config)).map_err(|e| e.in_stage("unit commitment"))?.0,
        ModelKind::Opf => {
            let options = OpfOptions {
                block_hours: config.block_hours,
                ..OpfOptions::default()
            };
            solve_dc_opf(system, &study.grid, &study.hours, &options).map_err(|e| e.in_stage("DC optimal power flow"))?
        }
        ModelKind::Dam => {
            let owned;
            let ed = match ed {
                Some(d) => d,
                None => {
                    owned = run_ed(study, config)?;
                    &owned
                }
            };
            let ed_prices = ed.prices.as_ref().ok_or_else(|| Error::DualsUnavailable("economic dispatch prices".into()))?;
            let forecasts = build_forecasts(system, ed_prices, study.seed);
            let scope: Vec<UnitRef> = forecasts.keys().copied().collect();
            let ltpo = LtpoOptions {
                blocking,
                rel_gap: config.rel_gap,
            };
            let pos = optimize_positions(system, &forecasts, &scope, &ltpo).map_err(|e| e.in_stage("position optimisation"))?;
            residuals.merge(check_positions(system, &pos, blocking));
            let b = form_bids(&pos, system).map_err(|e| e.in_stage("bid formation"))?;
            let options = MarketOptions {
                renewable_priority: config.renewable_priority,
                blocking,
            };
            let m = clear_market(&b, system, &options).map_err(|e| e.in_stage("day-ahead clearing"))?;
            residuals.merge(check_market(system, &b, &m));
            let d = m.dispatch.clone();
            positions = Some(pos);
            bids = Some(b);
            market = Some(m);
            d
        }
    };
    if model != ModelKind::Dam {
        residuals.merge(check_dispatch(system, &dispatch, blocking));
    }
    log::info!("{model}: dispatch of {} hours in {:.1?}", dispatch.hours.len(), clock.elapsed());

    let rd_options = RedispatchOptions {
        free_net_positions: config.free_net_positions,
    };
    let redispatch = redispatch_hours(&dispatch, system, &study.grid, &study.ptdf, &rd_options).map_err(|e| e.in_stage("redispatch"))?;
    log::info!("{model}: redispatch done at {:.1?}", clock.elapsed());
    let max_post_redispatch_loading = redispatch
        .iter()
        .map(|r| max_loading(&study.grid, &r.flows))
        .fold(0.0, f64::max);

    let points: Vec<_> = study
        .hours
        .iter()
        .map(|&t| {
            let k = dispatch
                .column(t)
                .ok_or_else(|| Error::Invalid(format!("hour {t} missing from the {model} dispatch")))?;
            Ok((redispatch[k].point.clone(), UnitState::of(&dispatch, system, k).committed))
        })
        .collect::<Result<_>>()?;
    let params = CascadeParams {
        trip_factor: config.trip_factor,
        max_iterations: config.max_cascade_iterations,
    };
    let cascades = run_security(&points, system, &study.grid, &study.contingencies, &params);
    log::info!("{model}: {} cascade simulations done at {:.1?}", cascades.len(), clock.elapsed());

    let metrics = compute_metrics(
        system,
        &dispatch,
        &redispatch,
        &cascades,
        &MetricsOptions {
            high_price_threshold: config.high_price_threshold,
        },
    )?;
    metrics.check_identities()?;
    let checks = Checks {
        max_constraint_residual: residuals.max,
        worst_constraint: residuals.worst,
        checked_rows: residuals.rows,
        max_post_redispatch_loading,
        cascades_at_iteration_cap: cascades.iter().filter(|c| c.capped).count(),
    };
    Ok(ModelRun {
        model,
        dispatch,
        positions,
        bids,
        market,
        redispatch,
        cascades,
        metrics,
        checks,
    })
}

/// Runs the configured model and writes its artifacts under `config.out`.
pub fn run_pipeline(config: &RunConfig) -> Result<ModelRun> {
    config.validate()?;
    let out = config.out.clone();
    begin_run_dir(&out)?;
    let study = Study::prepare(config)?;
    let run = run_model(&study, config, config.model, None)?;
    write_artifacts(&out, &study, &run)?;
    fs::remove_file(out.join(INCOMPLETE_MARKER))?;
    Ok(run)
}

/// Runs all four models on one shared study.
///
/// Each model writes to `out/<model>/`; `out/comparison.csv` holds the
/// headline metrics side by side.
pub fn compare(config: &RunConfig) -> Result<Vec<ModelRun>> {
    config.validate()?;
    let out = config.out.clone();
    begin_run_dir(&out)?;
    let _ = fs::remove_file(out.join("comparison.csv"));
    let study = Study::prepare(config)?;
    let ed = run_ed(&study, config)?;
    let mut runs = Vec::new();
    for model in ModelKind::ALL {
        let dir = out.join(model.label());
        begin_run_dir(&dir)?;
        let run = run_model(&study, config, model, Some(&ed))?;
        write_artifacts(&dir, &study, &run)?;
        fs::remove_file(dir.join(INCOMPLETE_MARKER))?;
        runs.push(run);
    }
    write_comparison(&out.join("comparison.csv"), &runs)?;
    fs::remove_file(out.join(INCOMPLETE_MARKER))?;
    Ok(runs)
}

fn begin_run_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for name in ARTIFACTS {
        let path = dir.join(name);
        if path.exists() {
            fs::remove_file(path)?;
        }
    }
    fs::write(dir.join(INCOMPLETE_MARKER), "run started; artifacts in this directory are partial\n")?;
    Ok(())
}

/// Shortest round-trip decimal, without negative zero.
fn num(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        x.to_string()
    }
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

pub fn write_artifacts(dir: &Path, study: &Study, run: &ModelRun) -> Result<()> {
    let system = &study.system;
    let d = &run.dispatch;
    write_market_result(&dir.join("market_result.csv"), system, run)?;

    if let Some(prices) = &d.prices {
        let mut w = writer(&dir.join("prices.csv"), &["zone", "hour", "price_eur_per_mwh"])?;
        for (z, series) in prices.iter().enumerate() {
            for (k, p) in series.iter().enumerate() {
                w.write_record([system.zones[z].id.clone(), d.hours[k].to_string(), num(*p)])?;
            }
        }
        w.flush()?;
    }

    let mut w = writer(&dir.join("flows.csv"), &["interconnector", "hour", "direction", "mw"])?;
    for (f, ic) in system.interconnectors.iter().enumerate() {
        for k in 0..d.len() {
            for (dir_label, v) in [("forward", d.flow_forward[f][k]), ("backward", d.flow_backward[f][k])] {
                w.write_record([ic.id.clone(), d.hours[k].to_string(), dir_label.to_string(), num(v)])?;
            }
        }
    }
    w.flush()?;

    if let Some(pos) = &run.positions {
        let mut w = writer(&dir.join("positions.csv"), &["unit", "hour", "variable", "value"])?;
        for (g, p) in pos.thermal.iter().enumerate() {
            let Some(p) = p else { continue };
            for t in 0..pos.horizon {
                for (var, v) in [("P", p.output[t]), ("status", p.status[t].round())] {
                    if v != 0.0 {
                        w.write_record([system.thermal[g].id.clone(), t.to_string(), var.to_string(), num(v)])?;
                    }
                }
            }
        }
        for (s, p) in pos.storage.iter().enumerate() {
            let Some(p) = p else { continue };
            for t in 0..pos.horizon {
                for (var, v) in [("PD", p.discharge[t]), ("PC", p.charge[t]), ("E", p.level[t]), ("SW", p.spill[t])] {
                    if v != 0.0 {
                        w.write_record([system.storage[s].id.clone(), t.to_string(), var.to_string(), num(v)])?;
                    }
                }
            }
        }
        w.flush()?;
    }

    if let Some(bids) = &run.bids {
        let mut w = writer(&dir.join("bids.csv"), &["unit", "hour", "side", "quantity_mw", "price_eur_per_mwh"])?;
        for row in bids.rows(system) {
            if row.bid.quantity != 0.0 {
                w.write_record([
                    row.unit.to_string(),
                    row.hour.to_string(),
                    row.side.label().to_string(),
                    num(row.bid.quantity),
                    num(row.bid.price),
                ])?;
            }
        }
        w.flush()?;
    }

    let mut daily: BTreeMap<usize, [f64; 3]> = BTreeMap::new();
    for r in &run.redispatch {
        let e = daily.entry(r.hour / 24).or_default();
        e[0] += r.cost;
        e[1] += r.total_shed();
        e[2] += r.curtailment.iter().sum::<f64>();
    }
    let mut w = writer(&dir.join("redispatch_costs.csv"), &["day", "cost_eur", "shed_mwh", "curtailment_mwh"])?;
    for (day, [cost, shed, curt]) in daily {
        w.write_record([day.to_string(), num(cost), num(shed), num(curt)])?;
    }
    w.flush()?;

    let classes = classify_all(system);
    let mut w = writer(
        &dir.join("cascade_results.csv"),
        &["hour", "contingency", "initiating", "dns_mw", "n_failures", "islands", "capped", "sequence", "classes"],
    )?;
    for c in &run.cascades {
        let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(";");
        let initiating = join(&mut c.failures.iter().filter(|f| f.iteration == 0).map(|f| system.branches[f.branch].id.clone()));
        let sequence = join(&mut c.failures.iter().map(|f| format!("{}@{}", system.branches[f.branch].id, f.iteration)));
        let class_list = join(&mut c.failures.iter().map(|f| classes[f.branch].label().to_string()));
        w.write_record([
            c.hour.to_string(),
            c.contingency.to_string(),
            initiating,
            num(c.dns),
            c.failures.len().to_string(),
            c.islands.to_string(),
            c.capped.to_string(),
            sequence,
            class_list,
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join("risk_curve.csv"), &["dns_mw", "exceedance_probability"])?;
    if !run.cascades.is_empty() {
        for (x, p) in risk_curve(&run.cascades)?.points {
            w.write_record([num(x), num(p)])?;
        }
    }
    w.flush()?;

    let mut w = writer(&dir.join("representative_hours.csv"), &["hour", "total_load_mw"])?;
    let zonal = zonal_load(system);
    for &t in &study.hours {
        w.write_record([t.to_string(), num(zonal.iter().map(|z| z[t]).sum())])?;
    }
    w.flush()?;

    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&run.metrics)? + "\n")?;
    fs::write(dir.join("checks.json"), serde_json::to_string_pretty(&run.checks)? + "\n")?;
    Ok(())
}

fn write_market_result(path: &Path, system: &SystemModel, run: &ModelRun) -> Result<()> {
    let d = &run.dispatch;
    let mut w = writer(path, &["unit", "hour", "variable", "value"])?;
    let put = |w: &mut csv::Writer<fs::File>, id: &str, k: usize, var: &str, v: f64| -> Result<()> {
        if v != 0.0 {
            w.write_record([id, &d.hours[k].to_string(), var, &num(v)])?;
        }
        Ok(())
    };
    for (g, unit) in system.thermal.iter().enumerate() {
        for k in 0..d.len() {
            put(&mut w, &unit.id, k, "P", d.thermal[g][k])?;
            if let Some(m) = &run.market {
                put(&mut w, &unit.id, k, "P_pos", m.thermal_pos[g][k])?;
                put(&mut w, &unit.id, k, "P_neg", m.thermal_neg[g][k])?;
            }
            if let Some(c) = &d.commitment {
                put(&mut w, &unit.id, k, "status", c.status[g][k].round())?;
                put(&mut w, &unit.id, k, "startup", c.startup[g][k].round())?;
                put(&mut w, &unit.id, k, "shutdown", c.shutdown[g][k].round())?;
            }
        }
    }
    for (s, unit) in system.storage.iter().enumerate() {
        for k in 0..d.len() {
            put(&mut w, &unit.id, k, "PD", d.storage_discharge[s][k])?;
            put(&mut w, &unit.id, k, "PC", d.storage_charge[s][k])?;
            put(&mut w, &unit.id, k, "E", d.storage_level[s][k])?;
            put(&mut w, &unit.id, k, "SW", d.storage_spill[s][k])?;
        }
    }
    for (r, unit) in system.renewable.iter().enumerate() {
        for k in 0..d.len() {
            put(&mut w, &unit.id, k, "P_r", d.renewable[r][k])?;
        }
    }
    for (i, dem) in system.demands.iter().enumerate() {
        for k in 0..d.len() {
            put(&mut w, &dem.id, k, "D", d.demand_served[i][k])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Headline metrics of every model, one row per metric.
pub fn comparison_rows(runs: &[ModelRun]) -> Vec<(String, Vec<Option<f64>>)> {
    let mut rows: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    let mut add = |name: &str, f: &dyn Fn(&MetricsReport) -> Option<f64>| {
        rows.push((name.to_string(), runs.iter().map(|r| f(&r.metrics)).collect()));
    };
    add("hours", &|m| Some(m.hours as f64));
    add("total_cost_eur", &|m| Some(m.total_cost_eur));
    add("fast_activation", &|m| m.activation_by_speed.get("fast").copied());
    add("slow_activation", &|m| m.activation_by_speed.get("slow").copied());
    add("storage_charging_mwh", &|m| Some(m.total_storage_charging_mwh));
    add("mean_price", &|m| m.prices.as_ref().map(|p| p.mean));
    add("max_price", &|m| m.prices.as_ref().map(|p| p.max));
    add("high_price_hours", &|m| m.prices.as_ref().map(|p| p.high_price_hours as f64));
    add("redispatch_total_eur", &|m| m.redispatch.as_ref().map(|r| r.total_eur));
    add("redispatch_daily_mean_eur", &|m| m.redispatch.as_ref().map(|r| r.daily_mean_eur));
    add("redispatch_daily_max_eur", &|m| m.redispatch.as_ref().map(|r| r.daily_max_eur));
    add("redispatch_daily_p95_eur", &|m| m.redispatch.as_ref().map(|r| r.daily_p95_eur));
    add("cumulative_dns_mw", &|m| Some(m.cascades.cumulative_dns_mw));
    add("max_dns_mw", &|m| Some(m.cascades.max_dns_mw));
    add("events_with_dns", &|m| Some(m.cascades.events_with_dns as f64));
    for class in ["interconnector", "adjacent", "intra_zonal"] {
        let name = format!("secondary_failures_{class}");
        add(&name, &move |m| m.cascades.secondary_failures.get(class).map(|&c| c as f64));
    }
    let techs: std::collections::BTreeSet<String> = runs.iter().flat_map(|r| r.metrics.technologies.keys().cloned()).collect();
    for tech in techs {
        let t = tech.clone();
        add(&format!("share_pct_{tech}"), &move |m| Some(m.technologies.get(&t).map_or(0.0, |x| x.share_pct)));
    }
    rows
}

fn write_comparison(path: &Path, runs: &[ModelRun]) -> Result<()> {
    let mut header = vec!["metric".to_string()];
    header.extend(runs.iter().map(|r| r.model.label().to_string()));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for (name, values) in comparison_rows(runs) {
        let mut rec = vec![name];
        rec.extend(values.into_iter().map(|v| v.map(num).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
