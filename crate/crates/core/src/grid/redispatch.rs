//! Cost-minimal redispatch of a market outcome onto the physical grid.
//!
//! Upward moves are paid at marginal cost, downward moves and renewable
//! curtailment are free, and load shedding costs the demand's shed price.
//! Storage schedules stay fixed. Branch limits are added lazily: only rows
//! of branches that are (or become) overloaded enter the LP.

use rayon::prelude::*;

use super::{Grid, PtdfMatrix};
use crate::dispatch::{DispatchResult, OperatingPoint};
use crate::error::{Error, Result};
use crate::ltpo::clean;
use crate::model::SystemModel;
use crate::solver::{self, OptProblem, Relation, Sense, SolveStatus, VarId};

/// Relative overload accepted before a branch row is added.
const OVERLOAD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RedispatchOptions {
    /// Lets zonal net positions change (the system still balances per island).
    pub free_net_positions: bool,
}

/// Whether each thermal unit is running and may be moved within its range.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitState {
    pub committed: Vec<bool>,
}

impl UnitState {
    /// Running units of column `k`: the commitment when known, otherwise any
    /// slow unit with output. Fast units can always start.
    pub fn of(dispatch: &DispatchResult, system: &SystemModel, k: usize) -> Self {
        let committed = system
            .thermal
            .iter()
            .enumerate()
            .map(|(g, unit)| match &dispatch.commitment {
                Some(c) => c.status[g][k] > 0.5,
                None => unit.is_fast() || dispatch.thermal[g][k] > 1e-6,
            })
            .collect();
        Self { committed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedispatchResult {
    pub hour: usize,
    /// `[thermal unit]`, MW.
    pub up: Vec<f64>,
    pub down: Vec<f64>,
    /// `[renewable unit]`, MW.
    pub curtailment: Vec<f64>,
    /// `[bus]`, MW.
    pub shed: Vec<f64>,
    /// Branch flows after redispatch.
    pub flows: Vec<f64>,
    /// €.
    pub cost: f64,
    /// The operating point after redispatch.
    pub point: OperatingPoint,
}

impl RedispatchResult {
    pub fn total_shed(&self) -> f64 {
        self.shed.iter().sum()
    }
}

/// Makes one operating point grid-feasible at least cost.
pub fn redispatch(
    point: &OperatingPoint,
    state: &UnitState,
    system: &SystemModel,
    grid: &Grid,
    ptdf: &PtdfMatrix,
    options: &RedispatchOptions,
) -> Result<RedispatchResult> {
    let t = point.hour;
    let injections = point.bus_injections(system);
    let base = ptdf.flows(&injections);
    let overloaded = |flows: &[f64]| -> Vec<usize> {
        grid.branches
            .iter()
            .enumerate()
            .filter(|&(l, br)| grid.in_service[l] && flows[l].abs() > br.rating * (1.0 + OVERLOAD_SLACK))
            .map(|(l, _)| l)
            .collect()
    };
    let mut active = overloaded(&base);
    if active.is_empty() {
        return Ok(RedispatchResult {
            hour: t,
            up: vec![0.0; system.thermal.len()],
            down: vec![0.0; system.thermal.len()],
            curtailment: vec![0.0; system.renewable.len()],
            shed: vec![0.0; system.buses.len()],
            flows: base,
            cost: 0.0,
            point: point.clone(),
        });
    }

    let loads = point.bus_loads(system);
    let mut bus_shed_cost = vec![0.0_f64; system.buses.len()];
    for d in &system.demands {
        for (bus, _) in d.bus_shares() {
            bus_shed_cost[bus] = bus_shed_cost[bus].max(d.shed_cost);
        }
    }

    let mut p = OptProblem::new(Sense::Minimize);
    // (var, bus, sign) of every adjustment, for the balance and flow rows.
    let mut moves: Vec<(VarId, usize, f64)> = Vec::new();
    let mut up = Vec::new();
    let mut down = Vec::new();
    for (g, unit) in system.thermal.iter().enumerate() {
        let out = point.thermal[g];
        let (lo, hi) = if !state.committed[g] {
            (out, out)
        } else if unit.is_fast() {
            (0.0, unit.p_max)
        } else {
            (unit.p_min.min(out), unit.p_max)
        };
        let u = p.add_var(format!("up_{}", unit.id), 0.0, (hi - out).max(0.0), unit.marginal_cost[t]);
        let d = p.add_var(format!("down_{}", unit.id), 0.0, (out - lo).max(0.0), 0.0);
        moves.push((u, unit.bus, 1.0));
        moves.push((d, unit.bus, -1.0));
        up.push(u);
        down.push(d);
    }
    let curt: Vec<VarId> = system
        .renewable
        .iter()
        .enumerate()
        .map(|(r, unit)| {
            let v = p.add_var(format!("curt_{}", unit.id), 0.0, point.renewable[r].max(0.0), 0.0);
            moves.push((v, unit.bus, -1.0));
            v
        })
        .collect();
    let shed: Vec<Option<VarId>> = loads
        .iter()
        .enumerate()
        .map(|(b, &load)| {
            (load > 0.0).then(|| {
                let v = p.add_var(format!("shed_{}", system.buses[b].id), 0.0, load, bus_shed_cost[b]);
                moves.push((v, b, 1.0));
                v
            })
        })
        .collect();

    let (groups, group_of_bus): (usize, Vec<usize>) = if options.free_net_positions {
        (ptdf.islands.count(), ptdf.islands.of_bus.clone())
    } else {
        (system.zones.len(), system.buses.iter().map(|b| b.zone).collect())
    };
    let mut balance: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); groups];
    for &(v, bus, sign) in &moves {
        balance[group_of_bus[bus]].push((v, sign));
    }
    for (gi, terms) in balance.into_iter().enumerate() {
        if !terms.is_empty() {
            p.add_constraint(format!("neutral_{gi}"), terms, Relation::Eq, 0.0);
        }
    }

    let mut in_model = vec![false; grid.branches.len()];
    loop {
        for &l in &active {
            if in_model[l] {
                continue;
            }
            in_model[l] = true;
            let terms: Vec<(VarId, f64)> = moves
                .iter()
                .filter_map(|&(v, bus, sign)| {
                    let f = ptdf.get(l, bus);
                    (f != 0.0).then_some((v, sign * f))
                })
                .collect();
            let rating = grid.branches[l].rating;
            p.add_constraint(format!("flow_hi_{l}"), terms.clone(), Relation::Le, rating - base[l]);
            p.add_constraint(format!("flow_lo_{l}"), terms, Relation::Ge, -rating - base[l]);
        }
        let sol = solver::solve_lp(&p)?;
        if sol.status != SolveStatus::Optimal {
            return Err(Error::Infeasible {
                model: "redispatch",
                diagnosis: format!("hour {t}: overloads on branches {active:?} cannot be relieved"),
            });
        }
        let mut adjusted = point.clone();
        let mut shed_mw = vec![0.0; system.buses.len()];
        for g in 0..system.thermal.len() {
            adjusted.thermal[g] += sol.value(up[g]) - sol.value(down[g]);
        }
        for (r, &v) in curt.iter().enumerate() {
            adjusted.renewable[r] -= sol.value(v);
        }
        for (b, v) in shed.iter().enumerate() {
            if let Some(v) = v {
                shed_mw[b] = clean(sol.value(*v));
            }
        }
        for (relief, s) in adjusted.load_relief.iter_mut().zip(&shed_mw) {
            *relief += s;
        }
        let flows = ptdf.flows(&adjusted.bus_injections(system));
        let new: Vec<usize> = overloaded(&flows).into_iter().filter(|&l| !in_model[l]).collect();
        if new.is_empty() {
            let upv: Vec<f64> = up.iter().map(|&v| clean(sol.value(v))).collect();
            let cost = upv.iter().zip(&system.thermal).map(|(u, g)| u * g.marginal_cost[t]).sum::<f64>()
                + shed_mw.iter().zip(&bus_shed_cost).map(|(s, c)| s * c).sum::<f64>();
            return Ok(RedispatchResult {
                hour: t,
                up: upv,
                down: down.iter().map(|&v| clean(sol.value(v))).collect(),
                curtailment: curt.iter().map(|&v| clean(sol.value(v))).collect(),
                shed: shed_mw,
                flows,
                cost,
                point: adjusted,
            });
        }
        active.extend(new);
    }
}

/// Redispatches every column of a dispatch, in parallel across hours.
pub fn redispatch_hours(
    dispatch: &DispatchResult,
    system: &SystemModel,
    grid: &Grid,
    ptdf: &PtdfMatrix,
    options: &RedispatchOptions,
) -> Result<Vec<RedispatchResult>> {
    (0..dispatch.len())
        .into_par_iter()
        .map(|k| {
            let point = dispatch.operating_point(system, k);
            let state = UnitState::of(dispatch, system, k);
            redispatch(&point, &state, system, grid, ptdf, options)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::branch;
    use crate::model::{Demand, RenewableTech, RenewableUnit, SpeedClass, ThermalTech, ThermalUnit};

    fn gen(id: &str, bus: usize, p_max: f64, cost: f64) -> ThermalUnit {
        ThermalUnit {
            id: id.into(),
            bus,
            technology: ThermalTech::Gas,
            speed: SpeedClass::Fast,
            p_min: 0.0,
            p_max,
            ramp_up: p_max,
            ramp_down: p_max,
            marginal_cost: vec![cost],
            startup_cost: 0.0,
            shutdown_cost: 0.0,
            initially_on: false,
        }
    }

    /// Two buses in one zone: cheap generation at bus 0, load at bus 1, one
    /// 100 MW line in between, plus a local unit at the load.
    fn corridor(load: f64, local_cost: f64) -> (SystemModel, Grid) {
        let mut sys = SystemModel::new("rd", 1);
        let z = sys.add_zone("Z1");
        sys.add_bus("b0", z);
        sys.add_bus("b1", z);
        sys.add_branch("l01", 0, 1, 0.1, 100.0);
        sys.thermal.push(gen("cheap", 0, 300.0, 10.0));
        sys.thermal.push(gen("local", 1, 300.0, local_cost));
        sys.demands.push(Demand {
            id: "d".into(),
            bus: 1,
            scheduled: vec![load],
            bid_price: 3000.0,
            shed_cost: 3000.0,
            shares: Vec::new(),
        });
        let grid = Grid::from_system(&sys);
        (sys, grid)
    }

    fn point(sys: &SystemModel, thermal: Vec<f64>, renewable: Vec<f64>, demand: Vec<f64>) -> OperatingPoint {
        OperatingPoint {
            hour: 0,
            thermal,
            storage_net: Vec::new(),
            renewable,
            demand,
            load_relief: vec![0.0; sys.buses.len()],
        }
    }

    fn all_on(sys: &SystemModel) -> UnitState {
        UnitState {
            committed: vec![true; sys.thermal.len()],
        }
    }

    #[test]
    fn feasible_point_is_left_alone() {
        let (sys, grid) = corridor(80.0, 50.0);
        let ptdf = grid.ptdf().unwrap();
        let op = point(&sys, vec![80.0, 0.0], vec![], vec![80.0]);
        let r = redispatch(&op, &all_on(&sys), &sys, &grid, &ptdf, &RedispatchOptions::default()).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.point, op);
    }

    #[test]
    fn overload_shifted_to_local_unit() {
        // 120 MW on a 100 MW line; the two units sit at opposite ends.
        let (sys, grid) = corridor(120.0, 50.0);
        let ptdf = grid.ptdf().unwrap();
        let op = point(&sys, vec![120.0, 0.0], vec![], vec![120.0]);
        let r = redispatch(&op, &all_on(&sys), &sys, &grid, &ptdf, &RedispatchOptions::default()).unwrap();
        assert!((r.up[1] - 20.0).abs() < 1e-6 && (r.down[0] - 20.0).abs() < 1e-6);
        assert!((r.cost - 1000.0).abs() < 1e-6);
        assert!(r.flows[0].abs() <= 100.0 * (1.0 + 1e-6));
    }

    #[test]
    fn half_sensitivity_shift() {
        // Two parallel paths: the direct line carries half of any transfer.
        let mut sys = SystemModel::new("rd", 1);
        let z = sys.add_zone("Z1");
        for i in 0..3 {
            sys.add_bus(format!("b{i}"), z);
        }
        sys.add_branch("direct", 0, 2, 0.2, 100.0);
        sys.add_branch("a", 0, 1, 0.1, 1000.0);
        sys.add_branch("b", 1, 2, 0.1, 1000.0);
        sys.thermal.push(gen("down", 0, 400.0, 10.0));
        sys.thermal.push(gen("up", 2, 400.0, 50.0));
        sys.demands.push(Demand {
            id: "d".into(),
            bus: 2,
            scheduled: vec![240.0],
            bid_price: 3000.0,
            shed_cost: 3000.0,
            shares: Vec::new(),
        });
        let grid = Grid::from_system(&sys);
        let ptdf = grid.ptdf().unwrap();
        let op = point(&sys, vec![240.0, 0.0], vec![], vec![240.0]);
        let r = redispatch(&op, &all_on(&sys), &sys, &grid, &ptdf, &RedispatchOptions::default()).unwrap();
        // 120 MW on the direct line, PTDF difference 0.5 → shift 40 MW.
        assert!((r.up[1] - 40.0).abs() < 1e-6);
        assert!((r.cost - 2000.0).abs() < 1e-6);
    }

    #[test]
    fn curtailment_is_free() {
        let mut sys = SystemModel::new("rd", 1);
        let z = sys.add_zone("Z1");
        sys.add_bus("b0", z);
        sys.add_bus("b1", z);
        sys.add_branch("l01", 0, 1, 0.1, 100.0);
        sys.renewable.push(RenewableUnit {
            id: "wind".into(),
            bus: 0,
            technology: RenewableTech::Wind,
            forecast: vec![130.0],
            vom_cost: 0.0,
        });
        sys.thermal.push(gen("local", 1, 300.0, 0.0));
        sys.demands.push(Demand {
            id: "d".into(),
            bus: 1,
            scheduled: vec![130.0],
            bid_price: 3000.0,
            shed_cost: 3000.0,
            shares: Vec::new(),
        });
        let grid = Grid::from_system(&sys);
        let ptdf = grid.ptdf().unwrap();
        let op = point(&sys, vec![0.0], vec![130.0], vec![130.0]);
        let r = redispatch(&op, &all_on(&sys), &sys, &grid, &ptdf, &RedispatchOptions::default()).unwrap();
        assert!((r.curtailment[0] - 30.0).abs() < 1e-6);
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn shedding_when_nothing_else_helps() {
        let (sys, grid) = corridor(150.0, 50.0);
        let ptdf = grid.ptdf().unwrap();
        let op = point(&sys, vec![150.0, 0.0], vec![], vec![150.0]);
        let off = UnitState {
            committed: vec![true, false],
        };
        let r = redispatch(&op, &off, &sys, &grid, &ptdf, &RedispatchOptions::default()).unwrap();
        assert!((r.total_shed() - 50.0).abs() < 1e-6);
        assert!((r.cost - 150_000.0).abs() < 1e-6);
        let balance: f64 = r.up.iter().sum::<f64>() - r.down.iter().sum::<f64>() - r.curtailment.iter().sum::<f64>() + r.total_shed();
        assert!(balance.abs() < 1e-6);
    }

    #[test]
    fn tripping_one_parallel_line_keeps_one_island() {
        let mut g = Grid::new(2, vec![branch(0, 1, 0.1, 50.0), branch(0, 1, 0.1, 50.0)]);
        g.trip(0);
        assert_eq!(g.islands().count(), 1);
    }
}
