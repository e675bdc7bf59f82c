//! Cost-minimising economic dispatch (LP) and unit commitment (MILP).

use std::ops::Range;

use crate::dispatch::{Blocking, CarryState, CommitmentSchedule, DispatchResult};
use crate::error::{Error, Result};
use crate::ltpo::clean;
use crate::model::SystemModel;
use crate::solver::{self, ConId, OptProblem, OptSolution, Relation, Sense, SolveStatus, VarId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchOptions {
    pub blocking: Blocking,
    /// Relative MIP gap for unit commitment.
    pub rel_gap: f64,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        Self {
            blocking: Blocking::FullHorizon,
            rel_gap: solver::DEFAULT_REL_GAP,
        }
    }
}

/// How balance rows are grouped.
#[derive(Debug, Clone)]
pub(crate) struct Balancing {
    /// Group of each bus.
    pub group_of_bus: Vec<usize>,
    pub groups: usize,
    /// Whether interconnector flow variables join the balance rows.
    pub zonal_flows: bool,
}

impl Balancing {
    pub(crate) fn zonal(system: &SystemModel) -> Self {
        Self {
            group_of_bus: system.buses.iter().map(|b| b.zone).collect(),
            groups: system.zones.len(),
            zonal_flows: true,
        }
    }
}

/// One block of the ED / UC problem with its variable handles.
pub(crate) struct DispatchProblem {
    pub problem: OptProblem,
    pub hours: Range<usize>,
    pub thermal: Vec<Vec<VarId>>,
    pub commitment: Option<[Vec<Vec<VarId>>; 3]>,
    pub discharge: Vec<Vec<VarId>>,
    pub charge: Vec<Vec<VarId>>,
    pub level: Vec<Vec<VarId>>,
    pub spill: Vec<Vec<VarId>>,
    pub renewable: Vec<Vec<VarId>>,
    pub demand: Vec<Vec<VarId>>,
    pub flows: Vec<Vec<(VarId, VarId)>>,
    /// `[group][hour]`.
    pub balance: Vec<Vec<ConId>>,
    /// Objective constant: shed cost of the whole scheduled demand.
    pub constant: f64,
}

impl DispatchProblem {
    pub(crate) fn build(system: &SystemModel, hours: Range<usize>, carry: &CarryState, commitment: bool, balancing: &Balancing) -> Self {
        let mut p = OptProblem::new(Sense::Minimize);
        let n = hours.len();

        let mut thermal = Vec::with_capacity(system.thermal.len());
        let mut stat = Vec::new();
        let mut on = Vec::new();
        let mut off = Vec::new();
        for (g, unit) in system.thermal.iter().enumerate() {
            let lo = if commitment { 0.0 } else { unit.p_min };
            let vars: Vec<VarId> = hours
                .clone()
                .map(|t| p.add_var(format!("P_{}_{t}", unit.id), lo, unit.p_max, unit.marginal_cost[t]))
                .collect();
            if commitment {
                let s: Vec<VarId> = hours.clone().map(|t| p.add_binary(format!("stat_{}_{t}", unit.id), 0.0)).collect();
                let u: Vec<VarId> = hours.clone().map(|t| p.add_binary(format!("on_{}_{t}", unit.id), unit.startup_cost)).collect();
                let d: Vec<VarId> = hours.clone().map(|t| p.add_binary(format!("off_{}_{t}", unit.id), unit.shutdown_cost)).collect();
                for k in 0..n {
                    let t = hours.start + k;
                    p.add_constraint(format!("pmin_{}_{t}", unit.id), vec![(vars[k], 1.0), (s[k], -unit.p_min)], Relation::Ge, 0.0);
                    p.add_constraint(format!("pmax_{}_{t}", unit.id), vec![(vars[k], 1.0), (s[k], -unit.p_max)], Relation::Le, 0.0);
                    let mut terms = vec![(s[k], 1.0), (u[k], -1.0), (d[k], 1.0)];
                    let rhs = if k == 0 {
                        f64::from(u8::from(carry.thermal_on[g]))
                    } else {
                        terms.push((s[k - 1], -1.0));
                        0.0
                    };
                    p.add_constraint(format!("trans_{}_{t}", unit.id), terms, Relation::Eq, rhs);
                    p.add_constraint(format!("onoff_{}_{t}", unit.id), vec![(u[k], 1.0), (d[k], 1.0)], Relation::Le, 1.0);
                }
                stat.push(s);
                on.push(u);
                off.push(d);
            }
            for k in 0..n {
                let t = hours.start + k;
                if k > 0 {
                    p.add_constraint(format!("ru_{}_{t}", unit.id), vec![(vars[k], 1.0), (vars[k - 1], -1.0)], Relation::Le, unit.ramp_up);
                    p.add_constraint(format!("rd_{}_{t}", unit.id), vec![(vars[k - 1], 1.0), (vars[k], -1.0)], Relation::Le, unit.ramp_down);
                } else if let Some(prev) = carry.thermal_output[g] {
                    p.add_constraint(format!("ru_{}_{t}", unit.id), vec![(vars[k], 1.0)], Relation::Le, prev + unit.ramp_up);
                    p.add_constraint(format!("rd_{}_{t}", unit.id), vec![(vars[k], 1.0)], Relation::Ge, prev - unit.ramp_down);
                }
            }
            thermal.push(vars);
        }

        let mut discharge = Vec::new();
        let mut charge = Vec::new();
        let mut level = Vec::new();
        let mut spill = Vec::new();
        for (s, unit) in system.storage.iter().enumerate() {
            let spill_cost = if commitment { unit.vom_cost } else { 0.0 };
            let pd: Vec<VarId> = hours
                .clone()
                .map(|t| p.add_var(format!("PD_{}_{t}", unit.id), unit.pd_min, unit.pd_max, unit.vom_cost))
                .collect();
            let pc: Vec<VarId> = hours
                .clone()
                .map(|t| p.add_var(format!("PC_{}_{t}", unit.id), unit.pc_min, unit.pc_max, unit.vom_cost))
                .collect();
            let e: Vec<VarId> = hours
                .clone()
                .map(|t| p.add_var(format!("E_{}_{t}", unit.id), unit.e_min, unit.e_max, 0.0))
                .collect();
            let sw: Vec<VarId> = hours
                .clone()
                .map(|t| p.add_var(format!("SW_{}_{t}", unit.id), 0.0, unit.sw_max, spill_cost))
                .collect();
            let start = carry.storage_level[s];
            for k in 0..n {
                let t = hours.start + k;
                let mut terms = vec![(e[k], 1.0), (pc[k], -unit.eta_c), (pd[k], 1.0 / unit.eta_d), (sw[k], 1.0)];
                let mut rhs = unit.inflow[t];
                if k == 0 {
                    rhs += (1.0 - unit.sd_rate) * start;
                } else {
                    terms.push((e[k - 1], -(1.0 - unit.sd_rate)));
                }
                p.add_constraint(format!("soc_{}_{t}", unit.id), terms, Relation::Eq, rhs);
            }
            if let Some(&last) = e.last() {
                p.add_constraint(format!("terminal_{}", unit.id), vec![(last, 1.0)], Relation::Ge, start);
            }
            discharge.push(pd);
            charge.push(pc);
            level.push(e);
            spill.push(sw);
        }

        let renewable: Vec<Vec<VarId>> = system
            .renewable
            .iter()
            .map(|r| {
                hours
                    .clone()
                    .map(|t| p.add_var(format!("Pr_{}_{t}", r.id), 0.0, r.forecast[t], r.vom_cost))
                    .collect()
            })
            .collect();

        let mut constant = 0.0;
        let demand: Vec<Vec<VarId>> = system
            .demands
            .iter()
            .map(|d| {
                hours
                    .clone()
                    .map(|t| {
                        constant += d.scheduled[t] * d.shed_cost;
                        p.add_var(format!("D_{}_{t}", d.id), 0.0, d.scheduled[t], -d.shed_cost)
                    })
                    .collect()
            })
            .collect();

        let flows: Vec<Vec<(VarId, VarId)>> = if balancing.zonal_flows {
            system
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
                .collect()
        } else {
            Vec::new()
        };

        let group = |bus: usize| balancing.group_of_bus[bus];
        let demand_shares: Vec<Vec<(usize, f64)>> = system.demands.iter().map(|d| d.bus_shares()).collect();
        let mut balance = vec![Vec::with_capacity(n); balancing.groups];
        for k in 0..n {
            let t = hours.start + k;
            let mut terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); balancing.groups];
            for (g, unit) in system.thermal.iter().enumerate() {
                terms[group(unit.bus)].push((thermal[g][k], 1.0));
            }
            for (s, unit) in system.storage.iter().enumerate() {
                terms[group(unit.bus)].push((discharge[s][k], 1.0));
                terms[group(unit.bus)].push((charge[s][k], -1.0));
            }
            for (r, unit) in system.renewable.iter().enumerate() {
                terms[group(unit.bus)].push((renewable[r][k], 1.0));
            }
            for (d, shares) in demand_shares.iter().enumerate() {
                let mut per_group = vec![0.0; balancing.groups];
                for &(bus, share) in shares {
                    per_group[group(bus)] += share;
                }
                for (gi, share) in per_group.into_iter().enumerate() {
                    if share != 0.0 {
                        terms[gi].push((demand[d][k], -share));
                    }
                }
            }
            for (f, ic) in system.interconnectors.iter().enumerate().filter(|_| balancing.zonal_flows) {
                let (fwd, bwd) = flows[f][k];
                terms[ic.from_zone].push((fwd, -1.0));
                terms[ic.to_zone].push((fwd, 1.0));
                terms[ic.from_zone].push((bwd, 1.0));
                terms[ic.to_zone].push((bwd, -1.0));
            }
            for (gi, group_terms) in terms.into_iter().enumerate() {
                balance[gi].push(p.add_constraint(format!("bal_{gi}_{t}"), group_terms, Relation::Eq, 0.0));
            }
        }

        Self {
            problem: p,
            hours,
            thermal,
            commitment: commitment.then_some([stat, on, off]),
            discharge,
            charge,
            level,
            spill,
            renewable,
            demand,
            flows,
            balance,
            constant,
        }
    }

    pub(crate) fn extract(&self, model: &str, system: &SystemModel, sol: &OptSolution, with_prices: bool) -> DispatchResult {
        let mut d = DispatchResult::empty(model, system, self.hours.clone().collect());
        let read = |vars: &[Vec<VarId>]| -> Vec<Vec<f64>> {
            vars.iter().map(|u| u.iter().map(|&v| clean(sol.value(v))).collect()).collect()
        };
        d.thermal = read(&self.thermal);
        d.storage_discharge = read(&self.discharge);
        d.storage_charge = read(&self.charge);
        d.storage_level = self.level.iter().map(|u| u.iter().map(|&v| sol.value(v)).collect()).collect();
        d.storage_spill = read(&self.spill);
        d.renewable = read(&self.renewable);
        d.demand_served = read(&self.demand);
        if self.flows.len() == system.interconnectors.len() {
            d.flow_forward = self.flows.iter().map(|u| u.iter().map(|&(f, _)| clean(sol.value(f))).collect()).collect();
            d.flow_backward = self.flows.iter().map(|u| u.iter().map(|&(_, b)| clean(sol.value(b))).collect()).collect();
        }
        if let Some([stat, on, off]) = &self.commitment {
            d.commitment = Some(CommitmentSchedule {
                status: read(stat),
                startup: read(on),
                shutdown: read(off),
            });
        }
        if with_prices {
            if let Some(duals) = &sol.duals {
                d.prices = Some(
                    self.balance
                        .iter()
                        .map(|rows| rows.iter().map(|c| clean(duals[c.index()]) + 0.0).collect())
                        .collect(),
                );
            }
        }
        d.total_cost = sol.objective + self.constant;
        d
    }
}

/// Solves consecutive blocks, carrying state across block edges.
pub(crate) fn solve_in_blocks(
    model: &str,
    system: &SystemModel,
    hours: Range<usize>,
    blocking: Blocking,
    mut solve_block: impl FnMut(Range<usize>, &CarryState) -> Result<DispatchResult>,
) -> Result<DispatchResult> {
    let mut out = DispatchResult::empty(model, system, hours.clone().collect());
    let mut carry = CarryState::initial(system);
    for block in blocking.ranges(hours.len()) {
        let block = hours.start + block.start..hours.start + block.end;
        let part = solve_block(block.clone(), &carry)?;
        out.absorb(&part, block.start - hours.start);
        carry = part.carry_out();
    }
    Ok(out)
}

/// Linear economic dispatch; thermal units never go below their minimum output.
pub fn economic_dispatch(system: &SystemModel, options: &DispatchOptions) -> Result<DispatchResult> {
    let balancing = Balancing::zonal(system);
    solve_in_blocks("ed", system, 0..system.horizon, options.blocking, |block, carry| {
        let dp = DispatchProblem::build(system, block.clone(), carry, false, &balancing);
        let sol = solver::solve_lp(&dp.problem)?;
        check_status("economic dispatch", &sol, system, &block)?;
        Ok(dp.extract("ed", system, &sol, true))
    })
}

/// Unit commitment with start-up and shut-down decisions.
pub fn unit_commitment(system: &SystemModel, options: &DispatchOptions) -> Result<(DispatchResult, CommitmentSchedule)> {
    let balancing = Balancing::zonal(system);
    let result = solve_in_blocks("uc", system, 0..system.horizon, options.blocking, |block, carry| {
        let dp = DispatchProblem::build(system, block.clone(), carry, true, &balancing);
        let sol = solver::solve_milp(&dp.problem, options.rel_gap)?;
        check_status("unit commitment", &sol, system, &block)?;
        Ok(dp.extract("uc", system, &sol, false))
    })?;
    let commitment = result.commitment.clone().unwrap_or_default();
    Ok((result, commitment))
}

pub(crate) fn check_status(model: &'static str, sol: &OptSolution, system: &SystemModel, block: &Range<usize>) -> Result<()> {
    match sol.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Infeasible => Err(Error::Infeasible {
            model,
            diagnosis: diagnose(system, block.clone()),
        }),
        SolveStatus::Unbounded => Err(Error::Solver(format!("{model} is unbounded"))),
    }
}

/// Explains an infeasible block by the hours whose must-run output cannot be absorbed.
fn diagnose(system: &SystemModel, block: Range<usize>) -> String {
    let mut worst: Option<(usize, f64)> = None;
    for t in block.clone() {
        let must_run: f64 = system.thermal.iter().map(|g| g.p_min).sum::<f64>() + system.storage.iter().map(|s| s.pd_min).sum::<f64>();
        let absorb: f64 = system.demands.iter().map(|d| d.scheduled[t]).sum::<f64>() + system.storage.iter().map(|s| s.pc_max).sum::<f64>();
        let surplus = must_run - absorb;
        if surplus > solver::TOLERANCE && worst.map_or(true, |(_, w)| surplus > w) {
            worst = Some((t, surplus));
        }
    }
    match worst {
        Some((t, surplus)) => format!(
            "minimum thermal output exceeds demand plus storage charging by {surplus:.3} MW (worst hour {t})"
        ),
        None => format!("hours {}..{}: ramp, storage or transfer limits cannot be met", block.start, block.end),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Demand, SpeedClass, StorageTech, StorageUnit, ThermalTech, ThermalUnit};

    fn system(horizon: usize, demand: Vec<f64>) -> SystemModel {
        let mut sys = SystemModel::new("baseline", horizon);
        let z = sys.add_zone("Z1");
        sys.add_bus("b1", z);
        sys.demands.push(Demand {
            id: "d".into(),
            bus: 0,
            scheduled: demand,
            bid_price: 3000.0,
            shed_cost: 3000.0,
            shares: Vec::new(),
        });
        sys
    }

    fn gen(sys: &mut SystemModel, p_min: f64, p_max: f64, cost: f64) {
        let id = format!("g{}", sys.thermal.len());
        sys.thermal.push(ThermalUnit {
            id,
            bus: 0,
            technology: ThermalTech::HardCoal,
            speed: if p_min > 0.0 { SpeedClass::Slow } else { SpeedClass::Fast },
            p_min,
            p_max,
            ramp_up: p_max,
            ramp_down: p_max,
            marginal_cost: vec![cost; sys.horizon],
            startup_cost: 0.0,
            shutdown_cost: 0.0,
            initially_on: true,
        });
    }

    #[test]
    fn merit_order_split() {
        let mut sys = system(1, vec![150.0]);
        gen(&mut sys, 0.0, 100.0, 10.0);
        gen(&mut sys, 0.0, 100.0, 30.0);
        let r = economic_dispatch(&sys, &DispatchOptions::default()).unwrap();
        assert!((r.thermal[0][0] - 100.0).abs() < 1e-6 && (r.thermal[1][0] - 50.0).abs() < 1e-6);
        assert!((r.total_cost - 2500.0).abs() < 1e-6);
        assert!((r.prices.unwrap()[0][0] - 30.0).abs() < 1e-6);
    }

    #[test]
    fn minimum_output_always_held() {
        let mut sys = system(3, vec![40.0, 80.0, 40.0]);
        gen(&mut sys, 30.0, 100.0, 40.0);
        gen(&mut sys, 0.0, 100.0, 10.0);
        let r = economic_dispatch(&sys, &DispatchOptions::default()).unwrap();
        assert!(r.thermal[0].iter().all(|&p| p >= 30.0 - 1e-9));
    }

    fn surplus_case() -> SystemModel {
        let mut sys = system(1, vec![20.0]);
        gen(&mut sys, 30.0, 100.0, 40.0);
        gen(&mut sys, 0.0, 100.0, 10.0);
        sys
    }

    #[test]
    fn must_run_surplus_is_diagnosed() {
        let err = economic_dispatch(&surplus_case(), &DispatchOptions::default()).unwrap_err();
        assert!(err.to_string().contains("10.000 MW"), "{err}");
    }

    #[test]
    fn commitment_switches_off_expensive_unit() {
        let (r, c) = unit_commitment(&surplus_case(), &DispatchOptions::default()).unwrap();
        assert_eq!(c.status[0][0], 0.0);
        assert_eq!(c.shutdown[0][0], 1.0);
        assert!((r.total_cost - 200.0).abs() < 1e-6);
        // Enumerate both commitment patterns of the expensive unit.
        let best = [0.0_f64, 30.0].iter().map(|&p| p * 40.0 + (20.0 - p).max(0.0) * 10.0 + (p - 20.0).max(0.0) * 1e9).fold(f64::INFINITY, f64::min);
        assert!((r.total_cost - best).abs() < 1e-6);
    }

    #[test]
    fn commitment_never_costs_more_without_start_costs() {
        let mut sys = system(4, vec![70.0, 120.0, 180.0, 90.0]);
        gen(&mut sys, 40.0, 100.0, 35.0);
        gen(&mut sys, 20.0, 100.0, 20.0);
        gen(&mut sys, 0.0, 50.0, 60.0);
        let ed = economic_dispatch(&sys, &DispatchOptions::default()).unwrap();
        let (uc, _) = unit_commitment(&sys, &DispatchOptions::default()).unwrap();
        assert!(uc.total_cost <= ed.total_cost * (1.0 + 1e-4));
    }

    #[test]
    fn shutdown_transition() {
        let mut sys = system(2, vec![50.0, 0.0]);
        gen(&mut sys, 10.0, 100.0, 10.0);
        let (_, c) = unit_commitment(&sys, &DispatchOptions::default()).unwrap();
        assert_eq!(c.status[0], vec![1.0, 0.0]);
        assert_eq!(c.shutdown[0], vec![0.0, 1.0]);
        assert_eq!(c.startup[0], vec![0.0, 0.0]);
    }

    #[test]
    fn storage_cycles_and_ends_full() {
        let mut sys = system(2, vec![50.0, 150.0]);
        gen(&mut sys, 0.0, 100.0, 10.0);
        gen(&mut sys, 0.0, 100.0, 80.0);
        sys.storage.push(StorageUnit {
            id: "bat".into(),
            bus: 0,
            technology: StorageTech::Battery,
            pd_min: 0.0,
            pd_max: 40.0,
            pc_min: 0.0,
            pc_max: 40.0,
            e_min: 0.0,
            e_max: 40.0,
            e_initial: 0.0,
            eta_c: 1.0,
            eta_d: 1.0,
            sd_rate: 0.0,
            inflow: vec![0.0; 2],
            sw_max: 0.0,
            vom_cost: 0.0,
        });
        let r = economic_dispatch(&sys, &DispatchOptions::default()).unwrap();
        assert!((r.storage_charge[0][0] - 40.0).abs() < 1e-6);
        assert!((r.storage_discharge[0][1] - 40.0).abs() < 1e-6);
        assert!(r.storage_level[0][1] >= -1e-9);
    }
}
