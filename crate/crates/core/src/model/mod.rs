//! Domain entities of a multi-zone power system and their validation.
//!
//! A [`SystemModel`] is immutable once [`SystemModel::finalize`] succeeds;
//! every other module borrows it read-only. Entities reference each other by
//! position (`usize` indices into the owning vectors); string ids are kept
//! for reporting.

mod forecast;
mod load;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forecast::{apply_forecast_noise, derive_seed, PriceForecast};
pub use load::{load_system, Manifest};

/// Default share of interconnector ratings usable per direction.
pub const DEFAULT_NTC_FRACTION: f64 = 0.40;

/// Default relative standard deviation of price-forecast noise.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.025;

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub zone: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series reactance, per unit.
    pub reactance: f64,
    /// Thermal rating, MW.
    pub rating: f64,
    pub is_transformer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalTech {
    Gas,
    Oil,
    HardCoal,
    Lignite,
    Nuclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedClass {
    Fast,
    Slow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalUnit {
    pub id: String,
    pub bus: usize,
    pub technology: ThermalTech,
    pub speed: SpeedClass,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Marginal cost per hour, €/MWh (fuel, CO2 and VOM folded in).
    pub marginal_cost: Vec<f64>,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    pub initially_on: bool,
}

impl ThermalUnit {
    pub fn is_fast(&self) -> bool {
        self.speed == SpeedClass::Fast
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageTech {
    HydroDam,
    HydroPumped,
    HydroPumpedDaily,
    Battery,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageUnit {
    pub id: String,
    pub bus: usize,
    pub technology: StorageTech,
    pub pd_min: f64,
    pub pd_max: f64,
    pub pc_min: f64,
    pub pc_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub e_initial: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    /// Fraction of stored energy lost per hour.
    pub sd_rate: f64,
    /// Natural inflow per hour, MWh/h.
    pub inflow: Vec<f64>,
    /// Upper bound on spillage, MWh/h.
    pub sw_max: f64,
    pub vom_cost: f64,
}

impl StorageUnit {
    pub fn can_charge(&self) -> bool {
        self.pc_max > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenewableTech {
    Solar,
    Wind,
    RunOfRiver,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenewableUnit {
    pub id: String,
    pub bus: usize,
    pub technology: RenewableTech,
    /// Available output per hour, MW.
    pub forecast: Vec<f64>,
    pub vom_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demand {
    pub id: String,
    /// Anchor bus; also used when `shares` is empty.
    pub bus: usize,
    pub scheduled: Vec<f64>,
    pub bid_price: f64,
    pub shed_cost: f64,
    /// Distribution of the demand over buses `(bus, participation factor)`; factors sum to 1.
    pub shares: Vec<(usize, f64)>,
}

impl Demand {
    /// Participation factors, defaulting to everything at the anchor bus.
    pub fn bus_shares(&self) -> Vec<(usize, f64)> {
        if self.shares.is_empty() {
            vec![(self.bus, 1.0)]
        } else {
            self.shares.clone()
        }
    }
}

/// A directed pair of zones with a net transfer capacity each way.
#[derive(Debug, Clone, PartialEq)]
pub struct Interconnector {
    pub id: String,
    pub from_zone: usize,
    pub to_zone: usize,
    pub ntc_forward: f64,
    pub ntc_backward: f64,
    pub branches: Vec<usize>,
}

/// Unit reference used wherever all generator kinds are listed together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnitRef {
    Thermal(usize),
    Storage(usize),
    Renewable(usize),
}

/// Technology label shared by all unit kinds, used for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technology {
    Thermal(ThermalTech),
    Storage(StorageTech),
    Renewable(RenewableTech),
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Technology::Thermal(ThermalTech::Gas) => "gas",
            Technology::Thermal(ThermalTech::Oil) => "oil",
            Technology::Thermal(ThermalTech::HardCoal) => "hard_coal",
            Technology::Thermal(ThermalTech::Lignite) => "lignite",
            Technology::Thermal(ThermalTech::Nuclear) => "nuclear",
            Technology::Storage(StorageTech::HydroDam) => "hydro_dam",
            Technology::Storage(StorageTech::HydroPumped) => "hydro_pumped",
            Technology::Storage(StorageTech::HydroPumpedDaily) => "hydro_pumped_daily",
            Technology::Storage(StorageTech::Battery) => "battery",
            Technology::Renewable(RenewableTech::Solar) => "solar",
            Technology::Renewable(RenewableTech::Wind) => "wind",
            Technology::Renewable(RenewableTech::RunOfRiver) => "run_of_river",
        };
        f.write_str(s)
    }
}

/// Bid prices for storage units in the day-ahead auction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageBidPrices {
    /// Discharge price (both bid sides).
    pub sigma_pd: f64,
    /// Charge price of the positive side; `None` means the demand's shed cost.
    pub sigma_pc: Option<f64>,
}

impl Default for StorageBidPrices {
    fn default() -> Self {
        Self {
            sigma_pd: 0.0,
            sigma_pc: None,
        }
    }
}

/// The full description of a system over a fixed hourly horizon.
#[derive(Debug, Clone, Default)]
pub struct SystemModel {
    pub name: String,
    pub horizon: usize,
    pub zones: Vec<Zone>,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub thermal: Vec<ThermalUnit>,
    pub storage: Vec<StorageUnit>,
    pub renewable: Vec<RenewableUnit>,
    pub demands: Vec<Demand>,
    pub interconnectors: Vec<Interconnector>,
    /// Zonal wholesale price forecast, `[zone][hour]`, when the dataset ships one.
    pub price_forecast: Option<Vec<Vec<f64>>>,
    pub ntc_fraction: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub storage_bids: StorageBidPrices,
}

impl SystemModel {
    pub fn new(name: impl Into<String>, horizon: usize) -> Self {
        Self {
            name: name.into(),
            horizon,
            ntc_fraction: DEFAULT_NTC_FRACTION,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            ..Self::default()
        }
    }

    pub fn add_zone(&mut self, id: impl Into<String>) -> usize {
        let id = id.into();
        self.zones.push(Zone { name: id.clone(), id });
        self.zones.len() - 1
    }

    pub fn add_bus(&mut self, id: impl Into<String>, zone: usize) -> usize {
        self.buses.push(Bus { id: id.into(), zone });
        self.buses.len() - 1
    }

    pub fn add_branch(&mut self, id: impl Into<String>, from_bus: usize, to_bus: usize, reactance: f64, rating: f64) -> usize {
        self.branches.push(Branch {
            id: id.into(),
            from_bus,
            to_bus,
            reactance,
            rating,
            is_transformer: false,
        });
        self.branches.len() - 1
    }

    pub fn thermal_zone(&self, g: usize) -> usize {
        self.buses[self.thermal[g].bus].zone
    }

    pub fn storage_zone(&self, s: usize) -> usize {
        self.buses[self.storage[s].bus].zone
    }

    pub fn renewable_zone(&self, r: usize) -> usize {
        self.buses[self.renewable[r].bus].zone
    }

    pub fn demand_zone(&self, d: usize) -> usize {
        self.buses[self.demands[d].bus].zone
    }

    pub fn unit_zone(&self, unit: UnitRef) -> usize {
        match unit {
            UnitRef::Thermal(g) => self.thermal_zone(g),
            UnitRef::Storage(s) => self.storage_zone(s),
            UnitRef::Renewable(r) => self.renewable_zone(r),
        }
    }

    pub fn unit_id(&self, unit: UnitRef) -> &str {
        match unit {
            UnitRef::Thermal(g) => &self.thermal[g].id,
            UnitRef::Storage(s) => &self.storage[s].id,
            UnitRef::Renewable(r) => &self.renewable[r].id,
        }
    }

    pub fn unit_technology(&self, unit: UnitRef) -> Technology {
        match unit {
            UnitRef::Thermal(g) => Technology::Thermal(self.thermal[g].technology),
            UnitRef::Storage(s) => Technology::Storage(self.storage[s].technology),
            UnitRef::Renewable(r) => Technology::Renewable(self.renewable[r].technology),
        }
    }

    /// All units in a stable order: thermal, then storage, then renewable.
    pub fn units(&self) -> impl Iterator<Item = UnitRef> + '_ {
        (0..self.thermal.len())
            .map(UnitRef::Thermal)
            .chain((0..self.storage.len()).map(UnitRef::Storage))
            .chain((0..self.renewable.len()).map(UnitRef::Renewable))
    }

    pub fn zone_index(&self, id: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.id == id)
    }

    /// Total scheduled demand in hour `t`.
    pub fn total_demand(&self, t: usize) -> f64 {
        self.demands.iter().map(|d| d.scheduled[t]).sum()
    }

    /// Scheduled demand per zone, `[zone][hour]`.
    pub fn zonal_demand(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.horizon]; self.zones.len()];
        for (d, dem) in self.demands.iter().enumerate() {
            let z = self.demand_zone(d);
            for (acc, x) in out[z].iter_mut().zip(&dem.scheduled) {
                *acc += x;
            }
        }
        out
    }

    /// Charge-side bid price of storage, resolving the shed-cost default.
    pub fn storage_charge_price(&self) -> f64 {
        self.storage_bids
            .sigma_pc
            .unwrap_or_else(|| self.demands.iter().map(|d| d.shed_cost).fold(0.0, f64::max))
    }

    /// Highest marginal or variable cost of any supply unit over the horizon.
    pub fn max_unit_cost(&self) -> f64 {
        let thermal = self.thermal.iter().flat_map(|g| g.marginal_cost.iter().copied());
        let storage = self.storage.iter().map(|s| s.vom_cost);
        let renewable = self.renewable.iter().map(|r| r.vom_cost);
        thermal.chain(storage).chain(renewable).fold(f64::NEG_INFINITY, f64::max)
    }

    /// The same system restricted to its first `hours` hours.
    pub fn truncated(&self, hours: usize) -> Result<Self> {
        if hours > self.horizon {
            return Err(Error::Invalid(format!(
                "cannot extend a {}-hour system to {hours} hours",
                self.horizon
            )));
        }
        let cut = |s: &mut Vec<f64>| s.truncate(hours);
        let mut sys = self.clone();
        sys.horizon = hours;
        sys.thermal.iter_mut().for_each(|g| cut(&mut g.marginal_cost));
        sys.storage.iter_mut().for_each(|s| cut(&mut s.inflow));
        sys.renewable.iter_mut().for_each(|r| cut(&mut r.forecast));
        sys.demands.iter_mut().for_each(|d| cut(&mut d.scheduled));
        if let Some(pf) = &mut sys.price_forecast {
            pf.iter_mut().for_each(cut);
        }
        sys.validate()?;
        Ok(sys)
    }

    /// Derives interconnectors (when none were declared), then validates every invariant.
    pub fn finalize(mut self) -> Result<Self> {
        if self.interconnectors.is_empty() {
            self.interconnectors = derive_interconnectors(&self.zones, &self.buses, &self.branches, self.ntc_fraction);
        }
        self.validate()?;
        Ok(self)
    }

    /// Checks all cross references and per-entity invariants.
    pub fn validate(&self) -> Result<()> {
        let t = self.horizon;
        let series = |entity: &str, name: &str, s: &[f64]| -> Result<()> {
            if s.len() != t {
                return Err(Error::validation(
                    entity,
                    format!("{name} has {} values, horizon is {t}", s.len()),
                ));
            }
            if let Some(h) = s.iter().position(|x| !x.is_finite()) {
                return Err(Error::validation(entity, format!("{name} is not finite at hour {h}")));
            }
            Ok(())
        };
        let bus_ok = |entity: &str, bus: usize| -> Result<()> {
            if bus >= self.buses.len() {
                return Err(Error::validation(entity, format!("unknown bus index {bus}")));
            }
            Ok(())
        };

        let mut ids = HashSet::new();
        for z in &self.zones {
            if !ids.insert(z.id.as_str()) {
                return Err(Error::validation(&z.id, "duplicate zone id"));
            }
        }
        let mut populated = vec![false; self.zones.len()];
        for b in &self.buses {
            if b.zone >= self.zones.len() {
                return Err(Error::validation(&b.id, format!("bus references unknown zone index {}", b.zone)));
            }
            populated[b.zone] = true;
        }
        if let Some(z) = populated.iter().position(|p| !p) {
            return Err(Error::validation(&self.zones[z].id, "zone has no buses"));
        }

        for br in &self.branches {
            bus_ok(&br.id, br.from_bus)?;
            bus_ok(&br.id, br.to_bus)?;
            if br.from_bus == br.to_bus {
                return Err(Error::validation(&br.id, "branch connects a bus to itself"));
            }
            if !(br.reactance > 0.0) {
                return Err(Error::validation(&br.id, "reactance must be positive"));
            }
            if !(br.rating > 0.0) {
                return Err(Error::validation(&br.id, "rating must be positive"));
            }
        }

        for g in &self.thermal {
            bus_ok(&g.id, g.bus)?;
            series(&g.id, "marginal_cost", &g.marginal_cost)?;
            if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
                return Err(Error::validation(&g.id, "requires 0 <= p_min <= p_max"));
            }
            if !(g.ramp_up > 0.0 && g.ramp_down > 0.0) {
                return Err(Error::validation(&g.id, "ramp limits must be positive"));
            }
            if g.is_fast() && g.p_min != 0.0 {
                return Err(Error::validation(&g.id, "fast thermal units must have p_min = 0"));
            }
            if g.startup_cost < 0.0 || g.shutdown_cost < 0.0 {
                return Err(Error::validation(&g.id, "start-up and shutdown costs must be non-negative"));
            }
        }

        for s in &self.storage {
            bus_ok(&s.id, s.bus)?;
            series(&s.id, "inflow", &s.inflow)?;
            validate_storage(s)?;
        }

        for r in &self.renewable {
            bus_ok(&r.id, r.bus)?;
            series(&r.id, "forecast", &r.forecast)?;
            if let Some(h) = r.forecast.iter().position(|&x| x < 0.0) {
                return Err(Error::validation(&r.id, format!("negative forecast at hour {h}")));
            }
        }

        let max_cost = self.max_unit_cost();
        for d in &self.demands {
            bus_ok(&d.id, d.bus)?;
            series(&d.id, "scheduled demand", &d.scheduled)?;
            if let Some(h) = d.scheduled.iter().position(|&x| x < 0.0) {
                return Err(Error::validation(&d.id, format!("negative demand at hour {h}")));
            }
            if d.shed_cost < d.bid_price {
                return Err(Error::validation(&d.id, "shed cost must be at least the bid price"));
            }
            if d.bid_price <= max_cost {
                return Err(Error::validation(
                    &d.id,
                    format!("bid price {} must exceed every unit cost (max {max_cost})", d.bid_price),
                ));
            }
            for &(bus, share) in &d.shares {
                bus_ok(&d.id, bus)?;
                if share < 0.0 {
                    return Err(Error::validation(&d.id, "negative participation factor"));
                }
            }
            if !d.shares.is_empty() {
                let total: f64 = d.shares.iter().map(|(_, s)| s).sum();
                if (total - 1.0).abs() > 1e-6 {
                    return Err(Error::validation(&d.id, format!("participation factors sum to {total}, not 1")));
                }
                if d.shares.iter().any(|&(bus, _)| self.buses[bus].zone != self.buses[d.bus].zone) {
                    return Err(Error::validation(&d.id, "participation buses must lie in the demand's zone"));
                }
            }
        }

        for ic in &self.interconnectors {
            if ic.from_zone >= self.zones.len() || ic.to_zone >= self.zones.len() {
                return Err(Error::validation(&ic.id, "interconnector references unknown zone"));
            }
            if ic.from_zone == ic.to_zone {
                return Err(Error::validation(&ic.id, "interconnector joins a zone to itself"));
            }
            if !(ic.ntc_forward >= 0.0 && ic.ntc_backward >= 0.0) {
                return Err(Error::validation(&ic.id, "NTC values must be non-negative"));
            }
            if let Some(&b) = ic.branches.iter().find(|&&b| b >= self.branches.len()) {
                return Err(Error::validation(&ic.id, format!("unknown branch index {b}")));
            }
        }

        if let Some(pf) = &self.price_forecast {
            if pf.len() != self.zones.len() {
                return Err(Error::validation("price_forecast", "needs one series per zone"));
            }
            for (z, s) in pf.iter().enumerate() {
                series(&self.zones[z].id, "price forecast", s)?;
            }
        }
        if !(self.ntc_fraction > 0.0 && self.ntc_fraction <= 1.0) {
            return Err(Error::validation("manifest", "ntc_fraction must lie in (0, 1]"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::validation("manifest", "noise_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Checks the per-technology input pattern of a storage unit.
pub fn validate_storage(s: &StorageUnit) -> Result<()> {
    let err = |msg: String| Err(Error::validation(&s.id, msg));
    if !(0.0 <= s.pd_min && s.pd_min <= s.pd_max) || !(0.0 <= s.pc_min && s.pc_min <= s.pc_max) {
        return err("charge/discharge bounds must satisfy 0 <= min <= max".into());
    }
    if !(s.e_min <= s.e_initial && s.e_initial <= s.e_max) {
        return err(format!(
            "requires e_min <= e_initial <= e_max, got {} / {} / {}",
            s.e_min, s.e_initial, s.e_max
        ));
    }
    if !(s.eta_c > 0.0 && s.eta_c <= 1.0 && s.eta_d > 0.0 && s.eta_d <= 1.0) {
        return err("efficiencies must lie in (0, 1]".into());
    }
    if !(0.0..1.0).contains(&s.sd_rate) {
        return err("self-discharge rate must lie in [0, 1)".into());
    }
    if s.sw_max < 0.0 || s.inflow.iter().any(|&x| x < 0.0) {
        return err("spill bound and inflows must be non-negative".into());
    }
    let has_inflow = s.inflow.iter().any(|&x| x != 0.0);
    let rule = |what: &str| -> Result<()> {
        Err(Error::validation(
            &s.id,
            format!("{:?} storage requires zero {what} (technology input table)", s.technology),
        ))
    };
    match s.technology {
        StorageTech::HydroDam => {
            if s.pc_min != 0.0 || s.pc_max != 0.0 {
                return rule("charging limits");
            }
            if s.sd_rate != 0.0 {
                return rule("self-discharge");
            }
        }
        StorageTech::HydroPumped => {
            if s.sd_rate != 0.0 {
                return rule("self-discharge");
            }
        }
        StorageTech::HydroPumpedDaily => {
            if has_inflow {
                return rule("inflows");
            }
            if s.sd_rate != 0.0 {
                return rule("self-discharge");
            }
        }
        StorageTech::Battery => {
            if has_inflow {
                return rule("inflows");
            }
            if s.sw_max != 0.0 {
                return rule("waste outflows");
            }
        }
    }
    Ok(())
}

/// Usable transfer capacity of a corridor in each direction.
///
/// Each direction gets `usable_fraction` of the summed member ratings.
pub fn derive_ntc(ratings: impl IntoIterator<Item = f64>, usable_fraction: f64) -> (f64, f64) {
    let total: f64 = ratings.into_iter().sum();
    let ntc = usable_fraction * total;
    (ntc, ntc)
}

/// Groups every zone-crossing branch by (unordered) zone pair.
pub fn derive_interconnectors(zones: &[Zone], buses: &[Bus], branches: &[Branch], fraction: f64) -> Vec<Interconnector> {
    let mut pairs: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (k, br) in branches.iter().enumerate() {
        let (a, b) = (buses[br.from_bus].zone, buses[br.to_bus].zone);
        if a != b {
            pairs.entry((a.min(b), a.max(b))).or_default().push(k);
        }
    }
    pairs
        .into_iter()
        .map(|((a, b), members)| {
            let (fwd, bwd) = derive_ntc(members.iter().map(|&k| branches[k].rating), fraction);
            Interconnector {
                id: format!("{}-{}", zones[a].id, zones[b].id),
                from_zone: a,
                to_zone: b,
                ntc_forward: fwd,
                ntc_backward: bwd,
                branches: members,
            }
        })
        .collect()
}
