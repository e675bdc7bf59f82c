//! Result types shared by every dispatch model, plus horizon blocking.

use std::ops::Range;

use crate::model::{SystemModel, UnitRef};

/// How the horizon is split into sequentially solved blocks.
///
/// Thermal outputs and commitment, and storage levels, are carried across
/// block edges; ramp limits link the last hour of a block to the first hour
/// of the next. Storage terminal conditions apply per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Blocking {
    /// One problem over the whole horizon.
    #[default]
    FullHorizon,
    /// Consecutive blocks of the given number of hours.
    Hours(usize),
}

impl Blocking {
    pub fn daily() -> Self {
        Blocking::Hours(24)
    }

    pub fn ranges(self, horizon: usize) -> Vec<Range<usize>> {
        match self {
            Blocking::FullHorizon if horizon == 0 => Vec::new(),
            Blocking::FullHorizon => vec![0..horizon],
            Blocking::Hours(0) => vec![0..horizon],
            Blocking::Hours(h) => (0..horizon).step_by(h).map(|s| s..(s + h).min(horizon)).collect(),
        }
    }
}

/// State carried from one block to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct CarryState {
    /// Output of each thermal unit in the previous hour, if any.
    pub thermal_output: Vec<Option<f64>>,
    pub thermal_on: Vec<bool>,
    pub storage_level: Vec<f64>,
}

impl CarryState {
    pub fn initial(system: &SystemModel) -> Self {
        Self {
            thermal_output: vec![None; system.thermal.len()],
            thermal_on: system.thermal.iter().map(|g| g.initially_on).collect(),
            storage_level: system.storage.iter().map(|s| s.e_initial).collect(),
        }
    }
}

/// On/off decisions of thermal units (`[unit][hour]`, values 0/1).
///
/// `startup[g][t]` and `shutdown[g][t]` record the transition into hour `t`
/// from hour `t - 1` (or from the initial status for `t = 0`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommitmentSchedule {
    pub status: Vec<Vec<f64>>,
    pub startup: Vec<Vec<f64>>,
    pub shutdown: Vec<Vec<f64>>,
}

/// Hourly dispatch of every unit; all series are `[entity][hour]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DispatchResult {
    pub model: String,
    /// Absolute hour index of each column.
    pub hours: Vec<usize>,
    pub thermal: Vec<Vec<f64>>,
    pub storage_discharge: Vec<Vec<f64>>,
    pub storage_charge: Vec<Vec<f64>>,
    /// End-of-hour storage level.
    pub storage_level: Vec<Vec<f64>>,
    pub storage_spill: Vec<Vec<f64>>,
    pub renewable: Vec<Vec<f64>>,
    pub demand_served: Vec<Vec<f64>>,
    pub flow_forward: Vec<Vec<f64>>,
    pub flow_backward: Vec<Vec<f64>>,
    /// Zonal prices, `[zone][hour]`, when the model is an LP.
    pub prices: Option<Vec<Vec<f64>>>,
    pub commitment: Option<CommitmentSchedule>,
    /// Objective value in €, including the shed-cost term.
    pub total_cost: f64,
}

impl DispatchResult {
    pub fn empty(model: &str, system: &SystemModel, hours: Vec<usize>) -> Self {
        let n = hours.len();
        let z = |k: usize| vec![vec![0.0; n]; k];
        Self {
            model: model.to_string(),
            thermal: z(system.thermal.len()),
            storage_discharge: z(system.storage.len()),
            storage_charge: z(system.storage.len()),
            storage_level: z(system.storage.len()),
            storage_spill: z(system.storage.len()),
            renewable: z(system.renewable.len()),
            demand_served: z(system.demands.len()),
            flow_forward: z(system.interconnectors.len()),
            flow_backward: z(system.interconnectors.len()),
            prices: None,
            commitment: None,
            total_cost: 0.0,
            hours,
        }
    }

    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    /// Column of an absolute hour.
    pub fn column(&self, hour: usize) -> Option<usize> {
        self.hours.iter().position(|&h| h == hour)
    }

    /// Power output of a unit at column `k` (storage: net injection).
    pub fn unit_output(&self, unit: UnitRef, k: usize) -> f64 {
        match unit {
            UnitRef::Thermal(g) => self.thermal[g][k],
            UnitRef::Storage(s) => self.storage_discharge[s][k] - self.storage_charge[s][k],
            UnitRef::Renewable(r) => self.renewable[r][k],
        }
    }

    /// The operating point of column `k`.
    pub fn operating_point(&self, system: &SystemModel, k: usize) -> OperatingPoint {
        let hour = self.hours[k];
        OperatingPoint {
            hour,
            thermal: self.thermal.iter().map(|s| s[k]).collect(),
            storage_net: (0..system.storage.len())
                .map(|s| self.storage_discharge[s][k] - self.storage_charge[s][k])
                .collect(),
            renewable: self.renewable.iter().map(|s| s[k]).collect(),
            demand: self.demand_served.iter().map(|s| s[k]).collect(),
            load_relief: vec![0.0; system.buses.len()],
        }
    }

    /// Net zonal injection (generation minus load) at column `k`.
    pub fn zonal_net_position(&self, system: &SystemModel, k: usize) -> Vec<f64> {
        let mut net = vec![0.0; system.zones.len()];
        for u in system.units() {
            net[system.unit_zone(u)] += self.unit_output(u, k);
        }
        for (d, served) in self.demand_served.iter().enumerate() {
            net[system.demand_zone(d)] -= served[k];
        }
        net
    }

    /// Copies the columns of `part` into this result (matching by absolute hour).
    pub(crate) fn absorb(&mut self, part: &DispatchResult, offset: usize) {
        fn copy(dst: &mut [Vec<f64>], src: &[Vec<f64>], offset: usize) {
            for (d, s) in dst.iter_mut().zip(src) {
                d[offset..offset + s.len()].copy_from_slice(s);
            }
        }
        copy(&mut self.thermal, &part.thermal, offset);
        copy(&mut self.storage_discharge, &part.storage_discharge, offset);
        copy(&mut self.storage_charge, &part.storage_charge, offset);
        copy(&mut self.storage_level, &part.storage_level, offset);
        copy(&mut self.storage_spill, &part.storage_spill, offset);
        copy(&mut self.renewable, &part.renewable, offset);
        copy(&mut self.demand_served, &part.demand_served, offset);
        copy(&mut self.flow_forward, &part.flow_forward, offset);
        copy(&mut self.flow_backward, &part.flow_backward, offset);
        if let Some(src) = &part.prices {
            let n = self.hours.len();
            let dst = self.prices.get_or_insert_with(|| vec![vec![0.0; n]; src.len()]);
            copy(dst, src, offset);
        }
        if let Some(src) = &part.commitment {
            let n = self.hours.len();
            let g = src.status.len();
            let dst = self.commitment.get_or_insert_with(|| CommitmentSchedule {
                status: vec![vec![0.0; n]; g],
                startup: vec![vec![0.0; n]; g],
                shutdown: vec![vec![0.0; n]; g],
            });
            copy(&mut dst.status, &src.status, offset);
            copy(&mut dst.startup, &src.startup, offset);
            copy(&mut dst.shutdown, &src.shutdown, offset);
        }
        self.total_cost += part.total_cost;
    }

    /// State at the end of this result, for chaining the next block.
    pub(crate) fn carry_out(&self) -> CarryState {
        let last = |s: &Vec<f64>| *s.last().expect("non-empty block");
        CarryState {
            thermal_output: self.thermal.iter().map(|s| Some(last(s))).collect(),
            thermal_on: match &self.commitment {
                Some(c) => c.status.iter().map(|s| last(s) > 0.5).collect(),
                None => self.thermal.iter().map(|s| last(s) > 1e-6).collect(),
            },
            storage_level: self.storage_level.iter().map(last).collect(),
        }
    }
}

/// Injections of every unit and load for one hour.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub hour: usize,
    pub thermal: Vec<f64>,
    /// Discharge minus charge.
    pub storage_net: Vec<f64>,
    pub renewable: Vec<f64>,
    /// Served demand per demand entity.
    pub demand: Vec<f64>,
    /// Load removed at each bus after the market stage (redispatch shedding).
    pub load_relief: Vec<f64>,
}

impl OperatingPoint {
    /// Load per bus.
    pub fn bus_loads(&self, system: &SystemModel) -> Vec<f64> {
        let mut load = vec![0.0; system.buses.len()];
        for (d, served) in self.demand.iter().enumerate() {
            for (bus, share) in system.demands[d].bus_shares() {
                load[bus] += served * share;
            }
        }
        for (l, relief) in load.iter_mut().zip(&self.load_relief) {
            *l -= relief;
        }
        load
    }

    /// Net injection per bus.
    pub fn bus_injections(&self, system: &SystemModel) -> Vec<f64> {
        let mut inj: Vec<f64> = self.bus_loads(system).iter().map(|l| -l).collect();
        for (g, p) in self.thermal.iter().enumerate() {
            inj[system.thermal[g].bus] += p;
        }
        for (s, p) in self.storage_net.iter().enumerate() {
            inj[system.storage[s].bus] += p;
        }
        for (r, p) in self.renewable.iter().enumerate() {
            inj[system.renewable[r].bus] += p;
        }
        inj
    }

    pub fn total_load(&self) -> f64 {
        self.demand.iter().sum::<f64>() - self.load_relief.iter().sum::<f64>()
    }

    pub fn total_generation(&self) -> f64 {
        self.thermal.iter().chain(&self.storage_net).chain(&self.renewable).sum()
    }
}
