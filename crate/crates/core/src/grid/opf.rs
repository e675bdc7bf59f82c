//! DC optimal power flow: economic dispatch with nodal physics.
//!
//! Interconnector schedules disappear; every island balances as a whole and
//! branch flows follow the PTDF factors. Branch rows are generated lazily.

use std::collections::BTreeSet;

use super::{Grid, PtdfMatrix};
use crate::baseline::{check_status, Balancing, DispatchProblem};
use crate::dispatch::{CarryState, DispatchResult};
use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::solver::{self, Relation, VarId};

/// Shrinks ratings in the LP so recomputed flows never exceed them.
const RATING_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpfOptions {
    /// Hours per solved block; a block containing a requested hour is solved whole.
    pub block_hours: usize,
    /// Lazy row generation rounds before giving up.
    pub max_rounds: usize,
}

impl Default for OpfOptions {
    fn default() -> Self {
        Self {
            block_hours: 24,
            max_rounds: 50,
        }
    }
}

/// Solves the DC-OPF over every block that contains one of `hours`.
///
/// The result covers all hours of those blocks in ascending order. A block
/// directly following a solved block inherits its end state; any other block
/// starts from the initial state.
pub fn solve_dc_opf(system: &SystemModel, grid: &Grid, hours: &[usize], options: &OpfOptions) -> Result<DispatchResult> {
    let block_len = options.block_hours.max(1);
    if let Some(&bad) = hours.iter().find(|&&h| h >= system.horizon) {
        return Err(Error::Invalid(format!("hour {bad} is outside the horizon of {}", system.horizon)));
    }
    let ptdf = grid.ptdf()?;
    let balancing = Balancing {
        group_of_bus: ptdf.islands.of_bus.clone(),
        groups: ptdf.islands.count(),
        zonal_flows: false,
    };
    let blocks: BTreeSet<usize> = hours.iter().map(|h| h / block_len).collect();
    let ranges: Vec<std::ops::Range<usize>> = blocks
        .iter()
        .map(|b| b * block_len..((b + 1) * block_len).min(system.horizon))
        .collect();
    let all: Vec<usize> = ranges.iter().flat_map(|r| r.clone()).collect();
    let mut out = DispatchResult::empty("opf", system, all);

    let mut offset = 0;
    let mut prev: Option<(usize, CarryState)> = None;
    for range in ranges {
        let carry = match prev.take() {
            Some((end, state)) if end == range.start => state,
            _ => CarryState::initial(system),
        };
        let part = solve_block(system, grid, &ptdf, &balancing, range.clone(), &carry, options)?;
        out.absorb(&part, offset);
        offset += part.len();
        prev = Some((range.end, part.carry_out()));
    }
    Ok(out)
}

fn solve_block(
    system: &SystemModel,
    grid: &Grid,
    ptdf: &PtdfMatrix,
    balancing: &Balancing,
    block: std::ops::Range<usize>,
    carry: &CarryState,
    options: &OpfOptions,
) -> Result<DispatchResult> {
    let mut dp = DispatchProblem::build(system, block.clone(), carry, false, balancing);
    let n = block.len();
    // Injection terms per hour: (var, bus, coefficient).
    let mut injections: Vec<Vec<(VarId, usize, f64)>> = vec![Vec::new(); n];
    for k in 0..n {
        let terms = &mut injections[k];
        for (g, unit) in system.thermal.iter().enumerate() {
            terms.push((dp.thermal[g][k], unit.bus, 1.0));
        }
        for (s, unit) in system.storage.iter().enumerate() {
            terms.push((dp.discharge[s][k], unit.bus, 1.0));
            terms.push((dp.charge[s][k], unit.bus, -1.0));
        }
        for (r, unit) in system.renewable.iter().enumerate() {
            terms.push((dp.renewable[r][k], unit.bus, 1.0));
        }
        for (d, dem) in system.demands.iter().enumerate() {
            for (bus, share) in dem.bus_shares() {
                terms.push((dp.demand[d][k], bus, -share));
            }
        }
    }
    let mut in_model = vec![vec![false; grid.branches.len()]; n];
    for _ in 0..options.max_rounds {
        let sol = solver::solve_lp(&dp.problem)?;
        check_status("DC optimal power flow", &sol, system, &block)?;
        let mut result = dp.extract("opf", system, &sol, false);
        let mut added = 0;
        for k in 0..n {
            let flows = ptdf.flows(&result.operating_point(system, k).bus_injections(system));
            for (l, br) in grid.branches.iter().enumerate() {
                if !grid.in_service[l] || in_model[k][l] || flows[l].abs() <= br.rating * (1.0 - RATING_MARGIN) {
                    continue;
                }
                in_model[k][l] = true;
                added += 1;
                let mut coef = std::collections::BTreeMap::new();
                for &(v, bus, c) in &injections[k] {
                    let f = ptdf.get(l, bus);
                    if f != 0.0 {
                        *coef.entry(v).or_insert(0.0) += c * f;
                    }
                }
                let terms: Vec<(VarId, f64)> = coef.into_iter().collect();
                let limit = br.rating * (1.0 - RATING_MARGIN);
                let t = block.start + k;
                dp.problem.add_constraint(format!("flow_hi_{l}_{t}"), terms.clone(), Relation::Le, limit);
                dp.problem.add_constraint(format!("flow_lo_{l}_{t}"), terms, Relation::Ge, -limit);
            }
        }
        if added == 0 {
            fill_interconnector_flows(system, ptdf, &mut result);
            return Ok(result);
        }
    }
    Err(Error::Solver(format!(
        "DC optimal power flow did not settle on hours {}..{} within {} rounds",
        block.start, block.end, options.max_rounds
    )))
}

/// Interconnector flows as the sum of member branch flows, split by direction.
fn fill_interconnector_flows(system: &SystemModel, ptdf: &PtdfMatrix, result: &mut DispatchResult) {
    for k in 0..result.len() {
        let flows = ptdf.flows(&result.operating_point(system, k).bus_injections(system));
        for (f, ic) in system.interconnectors.iter().enumerate() {
            let net: f64 = ic
                .branches
                .iter()
                .map(|&l| {
                    let br = &system.branches[l];
                    if system.buses[br.from_bus].zone == ic.from_zone {
                        flows[l]
                    } else {
                        -flows[l]
                    }
                })
                .sum();
            result.flow_forward[f][k] = net.max(0.0);
            result.flow_backward[f][k] = (-net).max(0.0);
        }
    }
}
