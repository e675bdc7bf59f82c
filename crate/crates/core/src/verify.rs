//! Independent constraint checker.
//!
//! Every function here re-evaluates a model's constraints directly on the
//! stored solution values, without looking at solver internals, and reports
//! the largest violation found.

use crate::bidding::BidSet;
use crate::dispatch::{Blocking, DispatchResult};
use crate::ltpo::PositionSchedule;
use crate::market::MarketResult;
use crate::model::{StorageUnit, SystemModel, ThermalUnit};

/// Largest constraint violation seen, with the row that produced it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Residuals {
    pub max: f64,
    pub worst: Option<String>,
    pub rows: usize,
}

impl Residuals {
    fn record(&mut self, violation: f64, row: impl FnOnce() -> String) {
        self.rows += 1;
        if violation > self.max {
            self.max = violation;
            self.worst = Some(row());
        }
    }

    fn at_most(&mut self, lhs: f64, rhs: f64, row: impl FnOnce() -> String) {
        self.record(lhs - rhs, row);
    }

    fn equal(&mut self, lhs: f64, rhs: f64, row: impl FnOnce() -> String) {
        self.record((lhs - rhs).abs(), row);
    }

    fn binary(&mut self, x: f64, row: impl FnOnce() -> String) {
        self.record(x.abs().min((x - 1.0).abs()), row);
    }

    pub fn merge(&mut self, other: Residuals) {
        self.rows += other.rows;
        if other.max > self.max {
            self.max = other.max;
            self.worst = other.worst;
        }
    }

    pub fn within(&self, tolerance: f64) -> bool {
        self.max <= tolerance
    }
}

/// Columns at which a new solve block starts.
fn block_starts(hours: &[usize], blocking: Blocking) -> Vec<bool> {
    hours
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            k == 0
                || hours[k - 1] + 1 != t
                || matches!(blocking, Blocking::Hours(h) if h > 0 && t % h == 0)
        })
        .collect()
}

/// Columns at which the carried state restarts from the initial state.
fn restarts(hours: &[usize]) -> Vec<bool> {
    hours.iter().enumerate().map(|(k, &t)| k == 0 || hours[k - 1] + 1 != t).collect()
}

fn check_ramps(res: &mut Residuals, unit: &ThermalUnit, output: &[f64], restart: &[bool], hours: &[usize]) {
    for k in 1..output.len() {
        if restart[k] {
            continue;
        }
        let t = hours[k];
        res.at_most(output[k] - output[k - 1], unit.ramp_up, || format!("ramp up {} h{t}", unit.id));
        res.at_most(output[k - 1] - output[k], unit.ramp_down, || format!("ramp down {} h{t}", unit.id));
    }
}

fn check_commitment(
    res: &mut Residuals,
    unit: &ThermalUnit,
    output: &[f64],
    status: &[f64],
    startup: &[f64],
    shutdown: &[f64],
    restart: &[bool],
    hours: &[usize],
) {
    for k in 0..output.len() {
        let t = hours[k];
        let id = &unit.id;
        res.binary(status[k], || format!("status integrality {id} h{t}"));
        res.binary(startup[k], || format!("start-up integrality {id} h{t}"));
        res.binary(shutdown[k], || format!("shut-down integrality {id} h{t}"));
        res.at_most(unit.p_min * status[k], output[k], || format!("minimum output {id} h{t}"));
        res.at_most(output[k], unit.p_max * status[k], || format!("maximum output {id} h{t}"));
        res.at_most(-output[k], 0.0, || format!("non-negative output {id} h{t}"));
        let before = if restart[k] {
            f64::from(u8::from(unit.initially_on))
        } else {
            status[k - 1]
        };
        res.equal(status[k] - before, startup[k] - shutdown[k], || format!("status transition {id} h{t}"));
        res.at_most(startup[k] + shutdown[k], 1.0, || format!("start/stop exclusion {id} h{t}"));
    }
}

/// Storage limits, level dynamics and terminal condition per block.
fn check_storage(
    res: &mut Residuals,
    unit: &StorageUnit,
    series: [&[f64]; 4],
    hours: &[usize],
    blocking: Blocking,
) {
    let [pd, pc, e, sw] = series;
    let restart = restarts(hours);
    let starts = block_starts(hours, blocking);
    let id = &unit.id;
    let mut block_start_level = unit.e_initial;
    for k in 0..hours.len() {
        let t = hours[k];
        res.at_most(unit.pd_min, pd[k], || format!("discharge lower {id} h{t}"));
        res.at_most(pd[k], unit.pd_max, || format!("discharge upper {id} h{t}"));
        res.at_most(unit.pc_min, pc[k], || format!("charge lower {id} h{t}"));
        res.at_most(pc[k], unit.pc_max, || format!("charge upper {id} h{t}"));
        res.at_most(unit.e_min, e[k], || format!("level lower {id} h{t}"));
        res.at_most(e[k], unit.e_max, || format!("level upper {id} h{t}"));
        res.at_most(-sw[k], 0.0, || format!("spill lower {id} h{t}"));
        res.at_most(sw[k], unit.sw_max, || format!("spill upper {id} h{t}"));
        let prev = if restart[k] { unit.e_initial } else { e[k - 1] };
        if starts[k] {
            block_start_level = prev;
        }
        let expected = (1.0 - unit.sd_rate) * prev + unit.eta_c * pc[k] - pd[k] / unit.eta_d + unit.inflow[t] - sw[k];
        res.equal(e[k], expected, || format!("level balance {id} h{t}"));
        let last_of_block = k + 1 == hours.len() || starts[k + 1];
        if last_of_block {
            res.at_most(block_start_level, e[k], || format!("terminal level {id} h{t}"));
        }
    }
}

/// Re-checks every position-optimisation constraint.
pub fn check_positions(system: &SystemModel, positions: &PositionSchedule, blocking: Blocking) -> Residuals {
    let mut res = Residuals::default();
    let hours: Vec<usize> = (0..positions.horizon).collect();
    let restart = restarts(&hours);
    for (unit, pos) in system.thermal.iter().zip(&positions.thermal) {
        let Some(p) = pos else { continue };
        check_commitment(&mut res, unit, &p.output, &p.status, &p.startup, &p.shutdown, &restart, &hours);
        check_ramps(&mut res, unit, &p.output, &restart, &hours);
    }
    for (unit, pos) in system.storage.iter().zip(&positions.storage) {
        let Some(p) = pos else { continue };
        check_storage(&mut res, unit, [&p.discharge, &p.charge, &p.level, &p.spill], &hours, blocking);
    }
    res
}

fn check_zonal_balance(res: &mut Residuals, system: &SystemModel, d: &DispatchResult) {
    for k in 0..d.len() {
        let t = d.hours[k];
        let mut net = vec![0.0; system.zones.len()];
        for g in 0..system.thermal.len() {
            net[system.thermal_zone(g)] += d.thermal[g][k];
        }
        for s in 0..system.storage.len() {
            net[system.storage_zone(s)] += d.storage_discharge[s][k] - d.storage_charge[s][k];
        }
        for r in 0..system.renewable.len() {
            net[system.renewable_zone(r)] += d.renewable[r][k];
        }
        for i in 0..system.demands.len() {
            net[system.demand_zone(i)] -= d.demand_served[i][k];
        }
        for (f, ic) in system.interconnectors.iter().enumerate() {
            let export = d.flow_forward[f][k] - d.flow_backward[f][k];
            net[ic.from_zone] -= export;
            net[ic.to_zone] += export;
        }
        for (z, v) in net.into_iter().enumerate() {
            res.equal(v, 0.0, || format!("balance zone {} h{t}", system.zones[z].id));
        }
    }
}

fn check_common(res: &mut Residuals, system: &SystemModel, d: &DispatchResult) {
    for k in 0..d.len() {
        let t = d.hours[k];
        for (r, unit) in system.renewable.iter().enumerate() {
            res.at_most(-d.renewable[r][k], 0.0, || format!("renewable lower {} h{t}", unit.id));
            res.at_most(d.renewable[r][k], unit.forecast[t], || format!("renewable forecast {} h{t}", unit.id));
        }
        for (i, dem) in system.demands.iter().enumerate() {
            res.at_most(-d.demand_served[i][k], 0.0, || format!("demand lower {} h{t}", dem.id));
            res.at_most(d.demand_served[i][k], dem.scheduled[t], || format!("demand upper {} h{t}", dem.id));
        }
        for (f, ic) in system.interconnectors.iter().enumerate() {
            res.at_most(-d.flow_forward[f][k], 0.0, || format!("flow lower {} h{t}", ic.id));
            res.at_most(-d.flow_backward[f][k], 0.0, || format!("flow lower {} h{t}", ic.id));
            res.at_most(d.flow_forward[f][k], ic.ntc_forward, || format!("forward capacity {} h{t}", ic.id));
            res.at_most(d.flow_backward[f][k], ic.ntc_backward, || format!("backward capacity {} h{t}", ic.id));
        }
    }
    check_zonal_balance(res, system, d);
}

/// Re-checks a market clearing against the bids it cleared.
pub fn check_market(system: &SystemModel, bids: &BidSet, result: &MarketResult) -> Residuals {
    let mut res = Residuals::default();
    let d = &result.dispatch;
    let restart = restarts(&d.hours);
    let accepted = |res: &mut Residuals, x: f64, cap: f64, what: &str, id: &str, t: usize| {
        res.at_most(-x, 0.0, || format!("{what} lower {id} h{t}"));
        res.at_most(x, cap, || format!("{what} bid quantity {id} h{t}"));
    };
    for (g, unit) in system.thermal.iter().enumerate() {
        let b = &bids.thermal[g];
        for (k, &t) in d.hours.iter().enumerate() {
            accepted(&mut res, result.thermal_pos[g][k], b.positive[t].quantity, "positive", &unit.id, t);
            accepted(&mut res, result.thermal_neg[g][k], b.negative[t].quantity, "negative", &unit.id, t);
            res.equal(d.thermal[g][k], result.thermal_pos[g][k] + result.thermal_neg[g][k], || {
                format!("thermal total {} h{t}", unit.id)
            });
        }
        check_ramps(&mut res, unit, &d.thermal[g], &restart, &d.hours);
    }
    for (s, unit) in system.storage.iter().enumerate() {
        let b = &bids.storage[s];
        for (k, &t) in d.hours.iter().enumerate() {
            accepted(&mut res, result.discharge_pos[s][k], b.discharge[t].quantity, "discharge", &unit.id, t);
            accepted(&mut res, result.discharge_neg[s][k], b.discharge_neg[t].quantity, "negative discharge", &unit.id, t);
            accepted(&mut res, result.charge_pos[s][k], b.charge[t].quantity, "charge", &unit.id, t);
            accepted(&mut res, result.charge_neg[s][k], b.charge_neg[t].quantity, "negative charge", &unit.id, t);
        }
    }
    check_common(&mut res, system, d);
    res
}

/// Re-checks an economic dispatch, unit commitment or DC-OPF result.
///
/// Results with a commitment schedule are checked against the commitment
/// bounds; others hold every thermal unit between its minimum and maximum.
pub fn check_dispatch(system: &SystemModel, d: &DispatchResult, blocking: Blocking) -> Residuals {
    let mut res = Residuals::default();
    let restart = restarts(&d.hours);
    for (g, unit) in system.thermal.iter().enumerate() {
        let p = &d.thermal[g];
        match &d.commitment {
            Some(c) => check_commitment(&mut res, unit, p, &c.status[g], &c.startup[g], &c.shutdown[g], &restart, &d.hours),
            None => {
                for (k, &t) in d.hours.iter().enumerate() {
                    res.at_most(unit.p_min, p[k], || format!("minimum output {} h{t}", unit.id));
                    res.at_most(p[k], unit.p_max, || format!("maximum output {} h{t}", unit.id));
                }
            }
        }
        check_ramps(&mut res, unit, p, &restart, &d.hours);
    }
    for (s, unit) in system.storage.iter().enumerate() {
        let series = [
            d.storage_discharge[s].as_slice(),
            &d.storage_charge[s],
            &d.storage_level[s],
            &d.storage_spill[s],
        ];
        check_storage(&mut res, unit, series, &d.hours, blocking);
    }
    check_common(&mut res, system, d);
    res
}
