//! Turns preferred positions into day-ahead bids.
//!
//! Slow thermal units offer their minimum-run volume as a negative-priced
//! bid and the rest of their preferred output at marginal cost. Fast units
//! offer their whole range every hour. Storage bids are price-taking.

use crate::error::{Error, Result};
use crate::ltpo::PositionSchedule;
use crate::model::SystemModel;
use crate::solver::TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bid {
    /// MW.
    pub quantity: f64,
    /// €/MWh.
    pub price: f64,
}

impl Bid {
    pub fn new(quantity: f64, price: f64) -> Self {
        Self { quantity, price }
    }
}

/// Hourly bids of one thermal unit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThermalBids {
    pub positive: Vec<Bid>,
    pub negative: Vec<Bid>,
}

/// Hourly bids of one storage unit. Charge bids are demand-side.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StorageBids {
    pub discharge: Vec<Bid>,
    pub discharge_neg: Vec<Bid>,
    pub charge: Vec<Bid>,
    pub charge_neg: Vec<Bid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BidSide {
    Thermal,
    ThermalNeg,
    Discharge,
    DischargeNeg,
    Charge,
    ChargeNeg,
}

impl BidSide {
    pub fn label(self) -> &'static str {
        match self {
            BidSide::Thermal => "thermal",
            BidSide::ThermalNeg => "thermal_neg",
            BidSide::Discharge => "discharge",
            BidSide::DischargeNeg => "discharge_neg",
            BidSide::Charge => "charge",
            BidSide::ChargeNeg => "charge_neg",
        }
    }
}

/// Final bids of every thermal and storage unit (`[unit]` then `[hour]`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BidSet {
    pub horizon: usize,
    pub thermal: Vec<ThermalBids>,
    pub storage: Vec<StorageBids>,
}

/// One flattened bid, as written to `bids.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct BidRow<'a> {
    pub unit: &'a str,
    pub hour: usize,
    pub side: BidSide,
    pub bid: Bid,
}

impl BidSet {
    /// All bids in unit, hour, side order.
    pub fn rows<'a>(&'a self, system: &'a SystemModel) -> Vec<BidRow<'a>> {
        let mut out = Vec::new();
        for (g, b) in self.thermal.iter().enumerate() {
            let unit = system.thermal[g].id.as_str();
            for t in 0..self.horizon {
                out.push(BidRow { unit, hour: t, side: BidSide::Thermal, bid: b.positive[t] });
                out.push(BidRow { unit, hour: t, side: BidSide::ThermalNeg, bid: b.negative[t] });
            }
        }
        for (s, b) in self.storage.iter().enumerate() {
            let unit = system.storage[s].id.as_str();
            for t in 0..self.horizon {
                for (side, bid) in [
                    (BidSide::Discharge, b.discharge[t]),
                    (BidSide::DischargeNeg, b.discharge_neg[t]),
                    (BidSide::Charge, b.charge[t]),
                    (BidSide::ChargeNeg, b.charge_neg[t]),
                ] {
                    out.push(BidRow { unit, hour: t, side, bid });
                }
            }
        }
        out
    }
}

/// Highest shed cost among demands; the price of negative charge bids.
pub fn shed_price(system: &SystemModel) -> f64 {
    system.demands.iter().map(|d| d.shed_cost).fold(0.0, f64::max)
}

/// Builds the final bids from the positions of every thermal and storage unit.
pub fn form_bids(positions: &PositionSchedule, system: &SystemModel) -> Result<BidSet> {
    let horizon = system.horizon;
    if positions.horizon != horizon
        || positions.thermal.len() != system.thermal.len()
        || positions.storage.len() != system.storage.len()
    {
        return Err(Error::Invalid("position schedule does not match the system".into()));
    }
    let sigma_pd = system.storage_bids.sigma_pd;
    let sigma_pc = system.storage_charge_price();
    let b_ds = shed_price(system);

    let mut thermal = Vec::with_capacity(system.thermal.len());
    for (g, unit) in system.thermal.iter().enumerate() {
        let mut bids = ThermalBids::default();
        if unit.is_fast() {
            for t in 0..horizon {
                bids.positive.push(Bid::new(unit.p_max - unit.p_min, unit.marginal_cost[t]));
                bids.negative.push(Bid::new(unit.p_min, -unit.marginal_cost[t]));
            }
        } else {
            let pos = positions.thermal[g]
                .as_ref()
                .ok_or_else(|| Error::validation(&unit.id, "no positions for slow thermal unit"))?;
            for t in 0..horizon {
                let p = pos.output[t];
                if p < -TOLERANCE || p > unit.p_max + TOLERANCE {
                    return Err(Error::validation(
                        &unit.id,
                        format!("hour {t}: position {p} MW outside [0, {}]", unit.p_max),
                    ));
                }
                let (positive, negative) = if pos.status[t] > 0.5 {
                    ((p - unit.p_min).max(0.0), unit.p_min)
                } else {
                    (0.0, 0.0)
                };
                bids.positive.push(Bid::new(positive, unit.marginal_cost[t]));
                bids.negative.push(Bid::new(negative, -unit.marginal_cost[t]));
            }
        }
        thermal.push(bids);
    }

    let mut storage = Vec::with_capacity(system.storage.len());
    for (s, unit) in system.storage.iter().enumerate() {
        let pos = positions.storage[s]
            .as_ref()
            .ok_or_else(|| Error::validation(&unit.id, "no positions for storage unit"))?;
        let mut bids = StorageBids::default();
        for t in 0..horizon {
            let pd = pos.discharge[t] - unit.pd_min;
            let pc = pos.charge[t] - unit.pc_min;
            if pd < -TOLERANCE || pc < -TOLERANCE {
                return Err(Error::validation(
                    &unit.id,
                    format!("hour {t}: negative bid quantity (discharge {pd}, charge {pc})"),
                ));
            }
            bids.discharge.push(Bid::new(pd.max(0.0), sigma_pd));
            bids.discharge_neg.push(Bid::new(unit.pd_min, sigma_pd));
            bids.charge.push(Bid::new(pc.max(0.0), sigma_pc));
            bids.charge_neg.push(Bid::new(unit.pc_min, b_ds));
        }
        storage.push(bids);
    }

    Ok(BidSet { horizon, thermal, storage })
}
