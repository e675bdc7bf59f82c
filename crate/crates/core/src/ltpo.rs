//! Long-term positions optimisation.
//!
//! Each thermal and storage participant maximises its own profit against a
//! price forecast, subject to its technical limits. Nothing couples two
//! participants, so one problem is solved per unit (and per horizon block).

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dispatch::Blocking;
use crate::error::{Error, Result};
use crate::model::{PriceForecast, StorageUnit, SystemModel, ThermalUnit, UnitRef};
use crate::solver::{self, OptProblem, Relation, Sense, SolveStatus};

/// Preferred schedule of one thermal unit, `[hour]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThermalPositions {
    pub output: Vec<f64>,
    pub status: Vec<f64>,
    pub startup: Vec<f64>,
    pub shutdown: Vec<f64>,
    pub profit: f64,
}

/// Preferred schedule of one storage unit, `[hour]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StoragePositions {
    pub discharge: Vec<f64>,
    pub charge: Vec<f64>,
    /// End-of-hour level.
    pub level: Vec<f64>,
    pub spill: Vec<f64>,
    pub profit: f64,
}

/// Positions of every scheduled unit; units outside the scope are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PositionSchedule {
    pub horizon: usize,
    pub thermal: Vec<Option<ThermalPositions>>,
    pub storage: Vec<Option<StoragePositions>>,
    /// Total forecast profit, €.
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtpoOptions {
    pub blocking: Blocking,
    pub rel_gap: f64,
}

impl Default for LtpoOptions {
    fn default() -> Self {
        Self {
            blocking: Blocking::FullHorizon,
            rel_gap: solver::DEFAULT_REL_GAP,
        }
    }
}

enum Positions {
    Thermal(usize, ThermalPositions),
    Storage(usize, StoragePositions),
}

/// Solves the profit-maximisation problem of every unit in `scope`.
pub fn optimize_positions(
    system: &SystemModel,
    forecasts: &BTreeMap<UnitRef, PriceForecast>,
    scope: &[UnitRef],
    options: &LtpoOptions,
) -> Result<PositionSchedule> {
    for unit in scope {
        if let UnitRef::Renewable(_) = unit {
            return Err(Error::validation(
                system.unit_id(*unit),
                "renewable units follow their forecast and take no part in position optimisation",
            ));
        }
        let f = forecasts
            .get(unit)
            .ok_or_else(|| Error::validation(system.unit_id(*unit), "no price forecast"))?;
        if f.rho.len() != system.horizon {
            return Err(Error::validation(
                system.unit_id(*unit),
                format!("price forecast has {} hours, horizon is {}", f.rho.len(), system.horizon),
            ));
        }
    }

    let solved: Vec<Positions> = scope
        .par_iter()
        .map(|&unit| {
            let rho = &forecasts[&unit].rho;
            match unit {
                UnitRef::Thermal(g) => thermal_positions(&system.thermal[g], rho, options).map(|p| Positions::Thermal(g, p)),
                UnitRef::Storage(s) => storage_positions(&system.storage[s], rho, options).map(|p| Positions::Storage(s, p)),
                UnitRef::Renewable(_) => unreachable!(),
            }
        })
        .collect::<Result<_>>()?;

    let mut out = PositionSchedule {
        horizon: system.horizon,
        thermal: vec![None; system.thermal.len()],
        storage: vec![None; system.storage.len()],
        objective: 0.0,
    };
    for p in solved {
        match p {
            Positions::Thermal(g, p) => {
                out.objective += p.profit;
                out.thermal[g] = Some(p);
            }
            Positions::Storage(s, p) => {
                out.objective += p.profit;
                out.storage[s] = Some(p);
            }
        }
    }
    Ok(out)
}

/// Profit-maximising schedule of a single thermal unit.
pub fn thermal_positions(unit: &ThermalUnit, rho: &[f64], options: &LtpoOptions) -> Result<ThermalPositions> {
    let horizon = rho.len();
    let mut out = ThermalPositions {
        output: Vec::with_capacity(horizon),
        status: Vec::with_capacity(horizon),
        startup: Vec::with_capacity(horizon),
        shutdown: Vec::with_capacity(horizon),
        profit: 0.0,
    };
    let mut prev_output: Option<f64> = None;
    let mut prev_on = unit.initially_on;
    for block in options.blocking.ranges(horizon) {
        let mut p = OptProblem::new(Sense::Maximize);
        let mut outv = Vec::with_capacity(block.len());
        let mut stat = Vec::with_capacity(block.len());
        let mut on = Vec::with_capacity(block.len());
        let mut off = Vec::with_capacity(block.len());
        for t in block.clone() {
            outv.push(p.add_var(format!("P_{t}"), 0.0, unit.p_max, rho[t] - unit.marginal_cost[t]));
            stat.push(p.add_binary(format!("stat_{t}"), 0.0));
            on.push(p.add_binary(format!("on_{t}"), -unit.startup_cost));
            off.push(p.add_binary(format!("off_{t}"), -unit.shutdown_cost));
        }
        for (k, t) in block.clone().enumerate() {
            p.add_constraint(format!("pmin_{t}"), vec![(outv[k], 1.0), (stat[k], -unit.p_min)], Relation::Ge, 0.0);
            p.add_constraint(format!("pmax_{t}"), vec![(outv[k], 1.0), (stat[k], -unit.p_max)], Relation::Le, 0.0);
            // status transition into hour t
            let mut terms = vec![(stat[k], 1.0), (on[k], -1.0), (off[k], 1.0)];
            let rhs = if k == 0 {
                if prev_on {
                    1.0
                } else {
                    0.0
                }
            } else {
                terms.push((stat[k - 1], -1.0));
                0.0
            };
            p.add_constraint(format!("trans_{t}"), terms, Relation::Eq, rhs);
            p.add_constraint(format!("onoff_{t}"), vec![(on[k], 1.0), (off[k], 1.0)], Relation::Le, 1.0);
            if k > 0 {
                p.add_constraint(format!("ru_{t}"), vec![(outv[k], 1.0), (outv[k - 1], -1.0)], Relation::Le, unit.ramp_up);
                p.add_constraint(format!("rd_{t}"), vec![(outv[k - 1], 1.0), (outv[k], -1.0)], Relation::Le, unit.ramp_down);
            } else if let Some(prev) = prev_output {
                p.add_constraint(format!("ru_{t}"), vec![(outv[k], 1.0)], Relation::Le, prev + unit.ramp_up);
                p.add_constraint(format!("rd_{t}"), vec![(outv[k], 1.0)], Relation::Ge, prev - unit.ramp_down);
            }
        }
        let sol = solver::solve_milp(&p, options.rel_gap)?;
        if sol.status != SolveStatus::Optimal {
            return Err(Error::Infeasible {
                model: "position optimisation",
                diagnosis: format!("unit {} hours {:?}: {:?}", unit.id, block, sol.status),
            });
        }
        for k in 0..block.len() {
            out.output.push(clean(sol.value(outv[k])));
            out.status.push(sol.value(stat[k]));
            out.startup.push(sol.value(on[k]));
            out.shutdown.push(sol.value(off[k]));
        }
        out.profit += sol.objective;
        prev_output = out.output.last().copied();
        prev_on = out.status.last().map_or(prev_on, |&s| s > 0.5);
    }
    Ok(out)
}

/// Profit-maximising arbitrage schedule of a single storage unit.
pub fn storage_positions(unit: &StorageUnit, rho: &[f64], options: &LtpoOptions) -> Result<StoragePositions> {
    let horizon = rho.len();
    let mut out = StoragePositions::default();
    let mut level = unit.e_initial;
    for block in options.blocking.ranges(horizon) {
        let mut p = OptProblem::new(Sense::Maximize);
        let mut pd = Vec::new();
        let mut pc = Vec::new();
        let mut e = Vec::new();
        let mut sw = Vec::new();
        for t in block.clone() {
            pd.push(p.add_var(format!("PD_{t}"), unit.pd_min, unit.pd_max, rho[t] - unit.vom_cost));
            pc.push(p.add_var(format!("PC_{t}"), unit.pc_min, unit.pc_max, -rho[t] - unit.vom_cost));
            e.push(p.add_var(format!("E_{t}"), unit.e_min, unit.e_max, 0.0));
            sw.push(p.add_var(format!("SW_{t}"), 0.0, unit.sw_max, 0.0));
        }
        for (k, t) in block.clone().enumerate() {
            let mut terms = vec![(e[k], 1.0), (pc[k], -unit.eta_c), (pd[k], 1.0 / unit.eta_d), (sw[k], 1.0)];
            let mut rhs = unit.inflow[t];
            if k == 0 {
                rhs += (1.0 - unit.sd_rate) * level;
            } else {
                terms.push((e[k - 1], -(1.0 - unit.sd_rate)));
            }
            p.add_constraint(format!("soc_{t}"), terms, Relation::Eq, rhs);
        }
        if let Some(&last) = e.last() {
            p.add_constraint("terminal", vec![(last, 1.0)], Relation::Ge, level);
        }
        let sol = solver::solve_lp(&p)?;
        if sol.status != SolveStatus::Optimal {
            return Err(Error::Infeasible {
                model: "position optimisation",
                diagnosis: format!(
                    "storage unit {} hours {:?}: {:?} (check levels, inflows and spill bound)",
                    unit.id, block, sol.status
                ),
            });
        }
        for k in 0..block.len() {
            out.discharge.push(clean(sol.value(pd[k])));
            out.charge.push(clean(sol.value(pc[k])));
            out.level.push(sol.value(e[k]));
            out.spill.push(clean(sol.value(sw[k])));
        }
        out.profit += sol.objective;
        level = out.level.last().copied().unwrap_or(level);
    }
    Ok(out)
}

/// Snaps solver noise around zero.
pub(crate) fn clean(x: f64) -> f64 {
    if x.abs() < 1e-9 {
        0.0
    } else {
        x
    }
}
