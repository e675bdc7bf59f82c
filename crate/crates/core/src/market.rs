//! Copper-plate day-ahead clearing by social-welfare maximisation over zones.

use crate::bidding::{shed_price, BidSet};
use crate::dispatch::{Blocking, CarryState, DispatchResult};
use crate::error::{Error, Result};
use crate::ltpo::clean;
use crate::model::SystemModel;
use crate::solver::{self, ConId, OptProblem, OptSolution, Relation, Sense, SolveStatus, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MarketOptions {
    /// Forces every renewable unit to its forecast.
    pub renewable_priority: bool,
    pub blocking: Blocking,
}

/// Cleared day-ahead market.
///
/// `dispatch` carries the physical totals (thermal = positive + negative
/// volumes, likewise for storage) and the zonal prices; the split per bid
/// side is kept alongside. Storage levels in `dispatch` are the trajectory
/// implied by the cleared volumes, since clearing itself ignores them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarketResult {
    pub dispatch: DispatchResult,
    pub thermal_pos: Vec<Vec<f64>>,
    pub thermal_neg: Vec<Vec<f64>>,
    pub discharge_pos: Vec<Vec<f64>>,
    pub discharge_neg: Vec<Vec<f64>>,
    pub charge_pos: Vec<Vec<f64>>,
    pub charge_neg: Vec<Vec<f64>>,
    /// Social welfare, €.
    pub welfare: f64,
}

/// Row and column handles of one clearing problem.
pub struct ClearingProblem {
    pub problem: OptProblem,
    pub hours: std::ops::Range<usize>,
    thermal: Vec<Vec<(VarId, VarId)>>,
    discharge: Vec<Vec<(VarId, VarId)>>,
    charge: Vec<Vec<(VarId, VarId)>>,
    renewable: Vec<Vec<VarId>>,
    demand: Vec<Vec<VarId>>,
    flows: Vec<Vec<(VarId, VarId)>>,
    /// `[zone][hour]`.
    balance: Vec<Vec<ConId>>,
}

impl ClearingProblem {
    /// Builds the welfare LP for `hours`, linking ramps to `carry`.
    pub fn build(
        bids: &BidSet,
        system: &SystemModel,
        hours: std::ops::Range<usize>,
        carry: &CarryState,
        renewable_priority: bool,
    ) -> Self {
        let mut p = OptProblem::new(Sense::Maximize);
        let n = hours.len();
        let b_ds = shed_price(system);

        let mut thermal = Vec::with_capacity(system.thermal.len());
        for (g, unit) in system.thermal.iter().enumerate() {
            let b = &bids.thermal[g];
            let vars: Vec<(VarId, VarId)> = hours
                .clone()
                .map(|t| {
                    let pos = p.add_var(format!("P_{}_{t}", unit.id), 0.0, b.positive[t].quantity, -b.positive[t].price);
                    let neg = p.add_var(format!("Pneg_{}_{t}", unit.id), 0.0, b.negative[t].quantity, -b.negative[t].price);
                    (pos, neg)
                })
                .collect();
            for k in 0..n {
                let t = hours.start + k;
                let (pos, neg) = vars[k];
                if k > 0 {
                    let (pp, pn) = vars[k - 1];
                    p.add_constraint(
                        format!("ru_{}_{t}", unit.id),
                        vec![(pos, 1.0), (neg, 1.0), (pp, -1.0), (pn, -1.0)],
                        Relation::Le,
                        unit.ramp_up,
                    );
                    p.add_constraint(
                        format!("rd_{}_{t}", unit.id),
                        vec![(pp, 1.0), (pn, 1.0), (pos, -1.0), (neg, -1.0)],
                        Relation::Le,
                        unit.ramp_down,
                    );
                } else if let Some(prev) = carry.thermal_output[g] {
                    p.add_constraint(format!("ru_{}_{t}", unit.id), vec![(pos, 1.0), (neg, 1.0)], Relation::Le, prev + unit.ramp_up);
                    p.add_constraint(format!("rd_{}_{t}", unit.id), vec![(pos, 1.0), (neg, 1.0)], Relation::Ge, prev - unit.ramp_down);
                }
            }
            thermal.push(vars);
        }

        let mut discharge: Vec<Vec<(VarId, VarId)>> = Vec::with_capacity(system.storage.len());
        let mut charge: Vec<Vec<(VarId, VarId)>> = Vec::with_capacity(system.storage.len());
        for (s, unit) in system.storage.iter().enumerate() {
            let b = &bids.storage[s];
            discharge.push(
                hours
                    .clone()
                    .map(|t| {
                        (
                            p.add_var(format!("PD_{}_{t}", unit.id), 0.0, b.discharge[t].quantity, -b.discharge[t].price),
                            p.add_var(format!("PDneg_{}_{t}", unit.id), 0.0, b.discharge_neg[t].quantity, -b.discharge_neg[t].price),
                        )
                    })
                    .collect(),
            );
            charge.push(
                hours
                    .clone()
                    .map(|t| {
                        (
                            p.add_var(format!("PC_{}_{t}", unit.id), 0.0, b.charge[t].quantity, b.charge[t].price),
                            p.add_var(format!("PCneg_{}_{t}", unit.id), 0.0, b.charge_neg[t].quantity, b_ds),
                        )
                    })
                    .collect(),
            );
        }

        let renewable: Vec<Vec<VarId>> = system
            .renewable
            .iter()
            .map(|r| {
                hours
                    .clone()
                    .map(|t| {
                        let max = r.forecast[t];
                        let lo = if renewable_priority { max } else { 0.0 };
                        p.add_var(format!("Pr_{}_{t}", r.id), lo, max, -r.vom_cost)
                    })
                    .collect()
            })
            .collect();

        let demand: Vec<Vec<VarId>> = system
            .demands
            .iter()
            .map(|d| {
                hours
                    .clone()
                    .map(|t| p.add_var(format!("D_{}_{t}", d.id), 0.0, d.scheduled[t], d.bid_price))
                    .collect()
            })
            .collect();

        let flows: Vec<Vec<(VarId, VarId)>> = system
            .interconnectors
            .iter()
            .map(|ic| {
                hours
                    .clone()
                    .map(|t| {
                        (
                            p.add_var(format!("Ff_{}_{t}", ic.id), 0.0, ic.ntc_forward, 0.0),
                            p.add_var(format!("Fb_{}_{t}", ic.id), 0.0, ic.ntc_backward, 0.0),
                        )
                    })
                    .collect()
            })
            .collect();

        let mut balance = vec![Vec::with_capacity(n); system.zones.len()];
        for k in 0..n {
            let t = hours.start + k;
            let mut terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); system.zones.len()];
            for (g, vars) in thermal.iter().enumerate() {
                let z = system.thermal_zone(g);
                terms[z].push((vars[k].0, 1.0));
                terms[z].push((vars[k].1, 1.0));
            }
            for s in 0..system.storage.len() {
                let z = system.storage_zone(s);
                terms[z].push((discharge[s][k].0, 1.0));
                terms[z].push((discharge[s][k].1, 1.0));
                terms[z].push((charge[s][k].0, -1.0));
                terms[z].push((charge[s][k].1, -1.0));
            }
            for (r, vars) in renewable.iter().enumerate() {
                terms[system.renewable_zone(r)].push((vars[k], 1.0));
            }
            for (d, vars) in demand.iter().enumerate() {
                terms[system.demand_zone(d)].push((vars[k], -1.0));
            }
            for (f, ic) in system.interconnectors.iter().enumerate() {
                let (fwd, bwd) = flows[f][k];
                terms[ic.from_zone].push((fwd, -1.0));
                terms[ic.to_zone].push((fwd, 1.0));
                terms[ic.from_zone].push((bwd, 1.0));
                terms[ic.to_zone].push((bwd, -1.0));
            }
            for (z, zone_terms) in terms.into_iter().enumerate() {
                let con = p.add_constraint(format!("bal_{}_{t}", system.zones[z].id), zone_terms, Relation::Eq, 0.0);
                balance[z].push(con);
            }
        }

        Self {
            problem: p,
            hours,
            thermal,
            discharge,
            charge,
            renewable,
            demand,
            flows,
            balance,
        }
    }

    /// Reads the solution back into a result covering this problem's hours.
    fn extract(&self, system: &SystemModel, sol: &OptSolution, carry: &CarryState) -> Result<MarketResult> {
        let hours: Vec<usize> = self.hours.clone().collect();
        let n = hours.len();
        let mut d = DispatchResult::empty("dam", system, hours);
        let val = |v: VarId| clean(sol.value(v));
        let split = |vars: &[Vec<(VarId, VarId)>]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            vars.iter()
                .map(|u| u.iter().map(|&(a, b)| (val(a), val(b))).unzip())
                .unzip()
        };
        let (thermal_pos, thermal_neg) = split(&self.thermal);
        let (discharge_pos, discharge_neg) = split(&self.discharge);
        let (charge_pos, charge_neg) = split(&self.charge);
        let sum = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
        };
        d.thermal = sum(&thermal_pos, &thermal_neg);
        d.storage_discharge = sum(&discharge_pos, &discharge_neg);
        d.storage_charge = sum(&charge_pos, &charge_neg);
        d.renewable = self.renewable.iter().map(|u| u.iter().map(|&v| val(v)).collect()).collect();
        d.demand_served = self.demand.iter().map(|u| u.iter().map(|&v| val(v)).collect()).collect();
        d.flow_forward = self.flows.iter().map(|u| u.iter().map(|&(f, _)| val(f)).collect()).collect();
        d.flow_backward = self.flows.iter().map(|u| u.iter().map(|&(_, b)| val(b)).collect()).collect();
        for (s, unit) in system.storage.iter().enumerate() {
            let mut level = carry.storage_level[s];
            for k in 0..n {
                let t = self.hours.start + k;
                level = (1.0 - unit.sd_rate) * level + unit.eta_c * d.storage_charge[s][k]
                    - d.storage_discharge[s][k] / unit.eta_d
                    + unit.inflow[t];
                let spill = (level - unit.e_max).clamp(0.0, unit.sw_max);
                level -= spill;
                d.storage_spill[s][k] = spill;
                d.storage_level[s][k] = level;
            }
        }
        d.prices = Some(extract_prices(sol, &self.balance)?);
        d.total_cost = production_cost(system, &d);
        Ok(MarketResult {
            dispatch: d,
            thermal_pos,
            thermal_neg,
            discharge_pos,
            discharge_neg,
            charge_pos,
            charge_neg,
            welfare: sol.objective,
        })
    }
}

/// Zonal prices from the balance-row duals, `[zone][hour]`.
///
/// The price is the welfare lost per extra MW of fixed demand, which for a
/// balance row written as `supply - withdrawal = 0` is minus its dual.
pub fn extract_prices(sol: &OptSolution, balance: &[Vec<ConId>]) -> Result<Vec<Vec<f64>>> {
    let duals = sol
        .duals
        .as_ref()
        .ok_or_else(|| Error::DualsUnavailable("market clearing was not solved as an LP".into()))?;
    Ok(balance
        .iter()
        .map(|rows| rows.iter().map(|c| clean(-duals[c.index()]) + 0.0).collect())
        .collect())
}

/// Cost of a dispatch at true unit costs, including unserved demand at shed cost.
pub fn production_cost(system: &SystemModel, d: &DispatchResult) -> f64 {
    let mut cost = 0.0;
    for (k, &t) in d.hours.iter().enumerate() {
        for (g, unit) in system.thermal.iter().enumerate() {
            cost += d.thermal[g][k] * unit.marginal_cost[t];
        }
        for (s, unit) in system.storage.iter().enumerate() {
            cost += (d.storage_discharge[s][k] + d.storage_charge[s][k]) * unit.vom_cost;
        }
        for (r, unit) in system.renewable.iter().enumerate() {
            cost += d.renewable[r][k] * unit.vom_cost;
        }
        for (i, dem) in system.demands.iter().enumerate() {
            cost += (dem.scheduled[t] - d.demand_served[i][k]) * dem.shed_cost;
        }
    }
    cost
}

/// Clears the market over the whole horizon.
pub fn clear_market(bids: &BidSet, system: &SystemModel, options: &MarketOptions) -> Result<MarketResult> {
    if bids.horizon != system.horizon || bids.thermal.len() != system.thermal.len() || bids.storage.len() != system.storage.len() {
        return Err(Error::Invalid("bid set does not match the system".into()));
    }
    let horizon = system.horizon;
    let all: Vec<usize> = (0..horizon).collect();
    let mut out = MarketResult {
        dispatch: DispatchResult::empty("dam", system, all),
        thermal_pos: vec![vec![0.0; horizon]; system.thermal.len()],
        thermal_neg: vec![vec![0.0; horizon]; system.thermal.len()],
        discharge_pos: vec![vec![0.0; horizon]; system.storage.len()],
        discharge_neg: vec![vec![0.0; horizon]; system.storage.len()],
        charge_pos: vec![vec![0.0; horizon]; system.storage.len()],
        charge_neg: vec![vec![0.0; horizon]; system.storage.len()],
        welfare: 0.0,
    };
    out.dispatch.prices = Some(vec![vec![0.0; horizon]; system.zones.len()]);
    let mut carry = CarryState::initial(system);
    for block in options.blocking.ranges(horizon) {
        let cp = ClearingProblem::build(bids, system, block.clone(), &carry, options.renewable_priority);
        let sol = solver::solve_lp(&cp.problem)?;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(Error::Infeasible {
                    model: "day-ahead clearing",
                    diagnosis: diagnose(bids, system, block, options.renewable_priority),
                })
            }
            SolveStatus::Unbounded => return Err(Error::Solver("day-ahead clearing is unbounded".into())),
        }
        let part = cp.extract(system, &sol, &carry)?;
        let offset = block.start;
        for (dst, src) in [
            (&mut out.thermal_pos, &part.thermal_pos),
            (&mut out.thermal_neg, &part.thermal_neg),
            (&mut out.discharge_pos, &part.discharge_pos),
            (&mut out.discharge_neg, &part.discharge_neg),
            (&mut out.charge_pos, &part.charge_pos),
            (&mut out.charge_neg, &part.charge_neg),
        ] {
            for (d, s) in dst.iter_mut().zip(src) {
                d[offset..offset + s.len()].copy_from_slice(s);
            }
        }
        out.welfare += part.welfare;
        out.dispatch.absorb(&part.dispatch, offset);
        carry = part.dispatch.carry_out();
    }
    Ok(out)
}

/// Names the hours in which forced renewable output cannot be absorbed.
fn diagnose(bids: &BidSet, system: &SystemModel, block: std::ops::Range<usize>, renewable_priority: bool) -> String {
    if !renewable_priority {
        return format!("hours {}..{}: no feasible clearing", block.start, block.end);
    }
    let mut bad = Vec::new();
    for t in block.clone() {
        let mut surplus = vec![0.0; system.zones.len()];
        for (r, unit) in system.renewable.iter().enumerate() {
            surplus[system.renewable_zone(r)] += unit.forecast[t];
        }
        for (d, dem) in system.demands.iter().enumerate() {
            surplus[system.demand_zone(d)] -= dem.scheduled[t];
        }
        for (s, b) in bids.storage.iter().enumerate() {
            surplus[system.storage_zone(s)] -= b.charge[t].quantity + b.charge_neg[t].quantity;
        }
        let total: f64 = surplus.iter().sum();
        let zonal = surplus.iter().enumerate().any(|(z, &x)| {
            let export: f64 = system
                .interconnectors
                .iter()
                .map(|ic| {
                    if ic.from_zone == z {
                        ic.ntc_forward
                    } else if ic.to_zone == z {
                        ic.ntc_backward
                    } else {
                        0.0
                    }
                })
                .sum();
            x > export + solver::TOLERANCE
        });
        if total > solver::TOLERANCE || zonal {
            bad.push(t);
        }
    }
    if bad.is_empty() {
        format!(
            "hours {}..{}: forced renewable output cannot be balanced together with ramp limits",
            block.start, block.end
        )
    } else {
        format!("forced renewable output exceeds demand, charging and export capability in hours {bad:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bidding::{Bid, StorageBids, ThermalBids};
    use crate::model::{Demand, Interconnector, RenewableTech, RenewableUnit, SpeedClass, ThermalTech, ThermalUnit};

    pub(crate) fn zone_system(zones: usize) -> SystemModel {
        let mut sys = SystemModel::new("dam", 1);
        for z in 0..zones {
            let zi = sys.add_zone(format!("Z{}", z + 1));
            sys.add_bus(format!("b{}", z + 1), zi);
        }
        sys
    }

    fn add_gen(sys: &mut SystemModel, bus: usize, cap: f64, cost: f64) {
        let id = format!("g{}", sys.thermal.len());
        sys.thermal.push(ThermalUnit {
            id,
            bus,
            technology: ThermalTech::Gas,
            speed: SpeedClass::Fast,
            p_min: 0.0,
            p_max: cap,
            ramp_up: cap,
            ramp_down: cap,
            marginal_cost: vec![cost; sys.horizon],
            startup_cost: 0.0,
            shutdown_cost: 0.0,
            initially_on: false,
        });
    }

    fn add_demand(sys: &mut SystemModel, bus: usize, mw: f64) {
        let id = format!("d{}", sys.demands.len());
        sys.demands.push(Demand {
            id,
            bus,
            scheduled: vec![mw; sys.horizon],
            bid_price: 3000.0,
            shed_cost: 3000.0,
            shares: Vec::new(),
        });
    }

    /// Fast-unit bids: everything offered at marginal cost.
    fn full_bids(sys: &SystemModel) -> BidSet {
        BidSet {
            horizon: sys.horizon,
            thermal: sys
                .thermal
                .iter()
                .map(|g| ThermalBids {
                    positive: (0..sys.horizon).map(|t| Bid::new(g.p_max, g.marginal_cost[t])).collect(),
                    negative: vec![Bid::default(); sys.horizon],
                })
                .collect(),
            storage: vec![StorageBids::default(); sys.storage.len()],
        }
    }

    fn clear(sys: &SystemModel) -> MarketResult {
        clear_market(&full_bids(sys), sys, &MarketOptions::default()).unwrap()
    }

    #[test]
    fn single_zone_merit_order() {
        let mut sys = zone_system(1);
        add_gen(&mut sys, 0, 100.0, 10.0);
        add_gen(&mut sys, 0, 100.0, 30.0);
        add_demand(&mut sys, 0, 150.0);
        let r = clear(&sys);
        assert!((r.dispatch.thermal[0][0] - 100.0).abs() < 1e-6);
        assert!((r.dispatch.thermal[1][0] - 50.0).abs() < 1e-6);
        assert!((r.dispatch.prices.as_ref().unwrap()[0][0] - 30.0).abs() < 1e-6);
    }

    fn two_zones() -> SystemModel {
        let mut sys = zone_system(2);
        add_gen(&mut sys, 0, 200.0, 10.0);
        add_gen(&mut sys, 1, 200.0, 40.0);
        add_demand(&mut sys, 0, 100.0);
        add_demand(&mut sys, 1, 100.0);
        sys.interconnectors.push(Interconnector {
            id: "Z1-Z2".into(),
            from_zone: 0,
            to_zone: 1,
            ntc_forward: 50.0,
            ntc_backward: 50.0,
            branches: Vec::new(),
        });
        sys
    }

    #[test]
    fn congested_interconnector_splits_prices() {
        let r = clear(&two_zones());
        assert!((r.dispatch.flow_forward[0][0] - 50.0).abs() < 1e-6);
        assert!(r.dispatch.flow_backward[0][0].abs() < 1e-6);
        let prices = r.dispatch.prices.unwrap();
        assert!((prices[0][0] - 10.0).abs() < 1e-6);
        assert!((prices[1][0] - 40.0).abs() < 1e-6);
    }

    #[test]
    fn price_spread_equals_ntc_value() {
        let sys = two_zones();
        let base = clear(&sys).welfare;
        let mut more = sys.clone();
        more.interconnectors[0].ntc_forward += 1.0;
        let gain = clear(&more).welfare - base;
        assert!((gain - 30.0).abs() < 1e-6);
    }

    #[test]
    fn price_matches_demand_perturbation() {
        let mut sys = zone_system(1);
        add_gen(&mut sys, 0, 100.0, 10.0);
        add_gen(&mut sys, 0, 100.0, 30.0);
        // A fixed 1 MW extra load, modelled as an unsheddable demand.
        add_demand(&mut sys, 0, 150.0);
        let base = clear(&sys);
        let mut bumped = sys.clone();
        bumped.demands[0].scheduled[0] += 1.0;
        let after = clear(&bumped);
        // Welfare gains b_d but pays the marginal cost for the extra MW.
        let marginal = 3000.0 - (after.welfare - base.welfare);
        assert!((marginal - base.dispatch.prices.unwrap()[0][0]).abs() < 1e-6);
    }

    #[test]
    fn exhausted_supply_prices_at_demand_bid() {
        let mut sys = zone_system(1);
        add_gen(&mut sys, 0, 100.0, 10.0);
        add_demand(&mut sys, 0, 150.0);
        let r = clear(&sys);
        assert!((r.dispatch.demand_served[0][0] - 100.0).abs() < 1e-6);
        assert!((r.dispatch.prices.unwrap()[0][0] - 3000.0).abs() < 1e-6);
    }

    #[test]
    fn empty_market_clears_nothing() {
        let mut sys = zone_system(1);
        add_gen(&mut sys, 0, 100.0, 10.0);
        add_demand(&mut sys, 0, 0.0);
        let r = clear(&sys);
        assert_eq!(r.dispatch.thermal[0][0], 0.0);
        assert!(r.welfare.abs() < 1e-9);
    }

    #[test]
    fn forced_renewables_report_hours() {
        let mut sys = zone_system(1);
        add_demand(&mut sys, 0, 100.0);
        sys.renewable.push(RenewableUnit {
            id: "wind".into(),
            bus: 0,
            technology: RenewableTech::Wind,
            forecast: vec![120.0],
            vom_cost: 0.0,
        });
        let bids = full_bids(&sys);
        let options = MarketOptions {
            renewable_priority: true,
            ..MarketOptions::default()
        };
        let err = clear_market(&bids, &sys, &options).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
        assert!(err.to_string().contains("[0]"), "{err}");
        let ok = clear_market(&bids, &sys, &MarketOptions::default()).unwrap();
        assert!((ok.dispatch.renewable[0][0] - 100.0).abs() < 1e-6);
    }

    #[test]
    fn negative_bids_clear_first() {
        let mut sys = zone_system(1);
        add_gen(&mut sys, 0, 100.0, 20.0);
        add_gen(&mut sys, 0, 100.0, 10.0);
        add_demand(&mut sys, 0, 60.0);
        let mut bids = full_bids(&sys);
        bids.thermal[0].positive[0] = Bid::new(50.0, 20.0);
        bids.thermal[0].negative[0] = Bid::new(50.0, -20.0);
        let r = clear_market(&bids, &sys, &MarketOptions::default()).unwrap();
        assert!((r.thermal_neg[0][0] - 50.0).abs() < 1e-6);
        assert!(r.thermal_pos[0][0].abs() < 1e-6);
        assert!((r.dispatch.thermal[1][0] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn daily_blocks_link_ramps() {
        let mut sys = zone_system(1);
        sys.horizon = 2;
        add_gen(&mut sys, 0, 100.0, 10.0);
        add_gen(&mut sys, 0, 100.0, 50.0);
        sys.thermal[0].ramp_up = 20.0;
        sys.demands.push(Demand {
            id: "d".into(),
            bus: 0,
            scheduled: vec![50.0, 100.0],
            bid_price: 3000.0,
            shed_cost: 3000.0,
            shares: Vec::new(),
        });
        let options = MarketOptions {
            blocking: Blocking::Hours(1),
            ..MarketOptions::default()
        };
        let r = clear_market(&full_bids(&sys), &sys, &options).unwrap();
        assert!((r.dispatch.thermal[0][1] - 70.0).abs() < 1e-6);
        assert!((r.dispatch.prices.unwrap()[0][1] - 50.0).abs() < 1e-6);
    }
}
