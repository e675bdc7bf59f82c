//! Aggregate statistics of one pipeline run.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cascades::{classify_all, CascadeResult};
use crate::dispatch::DispatchResult;
use crate::error::{Error, Result};
use crate::grid::RedispatchResult;
use crate::model::{SpeedClass, SystemModel, UnitRef};

/// Output above this counts as active, MW.
pub const ACTIVE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsOptions {
    /// Prices at or above this count as high, €/MWh.
    pub high_price_threshold: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            high_price_threshold: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct TechnologyMetrics {
    pub generation_mwh: f64,
    /// Share of total generation, %.
    pub share_pct: f64,
    pub cost_eur: f64,
    /// Output valued at zonal prices; absent when the model has no prices.
    pub revenue_eur: Option<f64>,
    pub profit_eur: Option<f64>,
    /// Mean over units of the fraction of hours with output.
    pub activation: f64,
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceStats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    /// Zone-hours at or above the threshold.
    pub high_price_hours: usize,
    pub threshold: f64,
    pub zone_mean: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RedispatchStats {
    pub days: usize,
    pub total_eur: f64,
    pub daily_mean_eur: f64,
    pub daily_min_eur: f64,
    pub daily_max_eur: f64,
    pub daily_p95_eur: f64,
    pub shed_mwh: f64,
    pub curtailment_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct CascadeStats {
    pub simulations: usize,
    /// Failures after the initiating outages, by branch class.
    pub secondary_failures: BTreeMap<String, usize>,
    pub initiating_failures: BTreeMap<String, usize>,
    pub cumulative_dns_mw: f64,
    pub max_dns_mw: f64,
    /// Simulations with any demand not served.
    pub events_with_dns: usize,
    /// Simulations stopped by the iteration cap.
    pub capped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub model: String,
    pub hours: usize,
    pub total_cost_eur: f64,
    pub total_generation_mwh: f64,
    pub technologies: BTreeMap<String, TechnologyMetrics>,
    /// Activation of thermal units grouped by speed class.
    pub activation_by_speed: BTreeMap<String, f64>,
    /// Charging energy per storage technology, MWh.
    pub storage_charging_mwh: BTreeMap<String, f64>,
    pub total_storage_charging_mwh: f64,
    pub prices: Option<PriceStats>,
    /// Mean of |net flow| / NTC in the flow direction, %.
    pub interconnector_utilization_pct: BTreeMap<String, f64>,
    pub redispatch: Option<RedispatchStats>,
    pub cascades: CascadeStats,
}

impl MetricsReport {
    /// Re-checks the share-sum and profit identities.
    pub fn check_identities(&self) -> Result<()> {
        if self.total_generation_mwh > 0.0 {
            let sum: f64 = self.technologies.values().map(|t| t.share_pct).sum();
            if (sum - 100.0).abs() > 0.01 {
                return Err(Error::Invalid(format!("generation shares sum to {sum} %")));
            }
        }
        for (tech, m) in &self.technologies {
            if let (Some(rev), Some(profit)) = (m.revenue_eur, m.profit_eur) {
                if (rev - m.cost_eur - profit).abs() > 1e-6 * rev.abs().max(1.0) {
                    return Err(Error::Invalid(format!("profit identity fails for {tech}")));
                }
            }
        }
        Ok(())
    }
}

/// Linear-interpolation percentile of unsorted data; `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn compute_metrics(
    system: &SystemModel,
    dispatch: &DispatchResult,
    redispatch: &[RedispatchResult],
    cascades: &[CascadeResult],
    options: &MetricsOptions,
) -> Result<MetricsReport> {
    let n = dispatch.len();
    let shapes_ok = dispatch.thermal.len() == system.thermal.len()
        && dispatch.thermal.iter().chain(&dispatch.storage_discharge).chain(&dispatch.renewable).all(|s| s.len() == n)
        && dispatch.hours.iter().all(|&t| t < system.horizon);
    if !shapes_ok {
        return Err(Error::Invalid("dispatch result does not match the system horizon".into()));
    }
    let known = |t: usize| dispatch.column(t).is_some();
    if let Some(r) = redispatch.iter().find(|r| !known(r.hour)) {
        return Err(Error::Invalid(format!("redispatch hour {} is not part of the dispatch", r.hour)));
    }
    if let Some(c) = cascades.iter().find(|c| !known(c.hour)) {
        return Err(Error::Invalid(format!("cascade hour {} is not part of the dispatch", c.hour)));
    }

    let mut technologies: BTreeMap<String, TechnologyMetrics> = BTreeMap::new();
    let mut speed: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let active = |series: &[f64]| {
        if n == 0 {
            0.0
        } else {
            series.iter().filter(|&&p| p > ACTIVE_THRESHOLD).count() as f64 / n as f64
        }
    };
    for unit in system.units() {
        let zone = system.unit_zone(unit);
        let price = |k: usize| dispatch.prices.as_ref().map(|p| p[zone][k]);
        let (output, injection, cost): (Vec<f64>, Vec<f64>, f64) = match unit {
            UnitRef::Thermal(g) => {
                let u = &system.thermal[g];
                let p = dispatch.thermal[g].clone();
                let mut cost: f64 = dispatch.hours.iter().zip(&p).map(|(&t, x)| x * u.marginal_cost[t]).sum();
                if let Some(c) = &dispatch.commitment {
                    cost += c.startup[g].iter().sum::<f64>() * u.startup_cost + c.shutdown[g].iter().sum::<f64>() * u.shutdown_cost;
                }
                (p.clone(), p, cost)
            }
            UnitRef::Storage(s) => {
                let u = &system.storage[s];
                let pd = &dispatch.storage_discharge[s];
                let pc = &dispatch.storage_charge[s];
                let cost = pd.iter().chain(pc).sum::<f64>() * u.vom_cost;
                (pd.clone(), pd.iter().zip(pc).map(|(d, c)| d - c).collect(), cost)
            }
            UnitRef::Renewable(r) => {
                let u = &system.renewable[r];
                let p = dispatch.renewable[r].clone();
                let cost = p.iter().sum::<f64>() * u.vom_cost;
                (p.clone(), p, cost)
            }
        };
        let revenue: Option<f64> = (0..n).map(|k| price(k).map(|pr| pr * injection[k])).sum();
        let entry = technologies.entry(system.unit_technology(unit).to_string()).or_default();
        entry.generation_mwh += output.iter().sum::<f64>();
        entry.cost_eur += cost;
        entry.revenue_eur = revenue.map(|r| entry.revenue_eur.unwrap_or(0.0) + r);
        entry.activation += active(&output);
        entry.units += 1;
        if let UnitRef::Thermal(g) = unit {
            let label = match system.thermal[g].speed {
                SpeedClass::Fast => "fast",
                SpeedClass::Slow => "slow",
            };
            let e = speed.entry(label.to_string()).or_default();
            e.0 += active(&output);
            e.1 += 1;
        }
    }
    let total_generation: f64 = technologies.values().map(|t| t.generation_mwh).sum();
    for m in technologies.values_mut() {
        m.share_pct = if total_generation > 0.0 {
            100.0 * m.generation_mwh / total_generation
        } else {
            0.0
        };
        m.activation /= m.units as f64;
        m.profit_eur = m.revenue_eur.map(|r| r - m.cost_eur);
    }

    let mut storage_charging: BTreeMap<String, f64> = BTreeMap::new();
    for (s, pc) in dispatch.storage_charge.iter().enumerate() {
        let tech = system.unit_technology(UnitRef::Storage(s)).to_string();
        *storage_charging.entry(tech).or_default() += pc.iter().sum::<f64>();
    }

    let prices = dispatch.prices.as_ref().filter(|_| n > 0).map(|p| {
        let all: Vec<f64> = p.iter().flatten().copied().collect();
        PriceStats {
            mean: all.iter().sum::<f64>() / all.len() as f64,
            max: all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: all.iter().copied().fold(f64::INFINITY, f64::min),
            high_price_hours: all.iter().filter(|&&x| x >= options.high_price_threshold).count(),
            threshold: options.high_price_threshold,
            zone_mean: system
                .zones
                .iter()
                .zip(p)
                .map(|(z, series)| (z.id.clone(), series.iter().sum::<f64>() / n as f64))
                .collect(),
        }
    });

    let interconnector_utilization = system
        .interconnectors
        .iter()
        .enumerate()
        .map(|(f, ic)| {
            let used: f64 = (0..n)
                .map(|k| {
                    let net = dispatch.flow_forward[f][k] - dispatch.flow_backward[f][k];
                    let cap = if net >= 0.0 { ic.ntc_forward } else { ic.ntc_backward };
                    if cap > 0.0 {
                        net.abs() / cap
                    } else {
                        0.0
                    }
                })
                .sum();
            (ic.id.clone(), if n > 0 { 100.0 * used / n as f64 } else { 0.0 })
        })
        .collect();

    Ok(MetricsReport {
        model: dispatch.model.clone(),
        hours: n,
        total_cost_eur: dispatch.total_cost,
        total_generation_mwh: total_generation,
        technologies,
        activation_by_speed: speed.into_iter().map(|(k, (sum, count))| (k, sum / count as f64)).collect(),
        total_storage_charging_mwh: storage_charging.values().sum(),
        storage_charging_mwh: storage_charging,
        prices,
        interconnector_utilization_pct: interconnector_utilization,
        redispatch: redispatch_stats(redispatch),
        cascades: cascade_stats(system, cascades),
    })
}

/// Daily redispatch cost statistics; days are 24-hour blocks of absolute hours.
pub fn redispatch_stats(results: &[RedispatchResult]) -> Option<RedispatchStats> {
    if results.is_empty() {
        return None;
    }
    let mut daily: BTreeMap<usize, f64> = BTreeMap::new();
    for r in results {
        *daily.entry(r.hour / 24).or_default() += r.cost;
    }
    let costs: Vec<f64> = daily.values().copied().collect();
    let total: f64 = costs.iter().sum();
    Some(RedispatchStats {
        days: costs.len(),
        total_eur: total,
        daily_mean_eur: total / costs.len() as f64,
        daily_min_eur: costs.iter().copied().fold(f64::INFINITY, f64::min),
        daily_max_eur: costs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        daily_p95_eur: percentile(&costs, 0.95).expect("non-empty"),
        shed_mwh: results.iter().map(RedispatchResult::total_shed).sum(),
        curtailment_mwh: results.iter().flat_map(|r| &r.curtailment).sum(),
    })
}

pub fn cascade_stats(system: &SystemModel, results: &[CascadeResult]) -> CascadeStats {
    let classes = classify_all(system);
    let mut stats = CascadeStats {
        simulations: results.len(),
        ..CascadeStats::default()
    };
    for class in &classes {
        stats.secondary_failures.entry(class.label().to_string()).or_insert(0);
        stats.initiating_failures.entry(class.label().to_string()).or_insert(0);
    }
    for r in results {
        for f in &r.failures {
            let map = if f.iteration == 0 {
                &mut stats.initiating_failures
            } else {
                &mut stats.secondary_failures
            };
            *map.entry(classes[f.branch].label().to_string()).or_default() += 1;
        }
        stats.cumulative_dns_mw += r.dns;
        stats.max_dns_mw = stats.max_dns_mw.max(r.dns);
        stats.events_with_dns += usize::from(r.dns > ACTIVE_THRESHOLD);
        stats.capped += usize::from(r.capped);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascades::Failure;
    use crate::model::{Demand, ThermalTech, ThermalUnit};

    fn system(units: &[(&str, ThermalTech, f64)], horizon: usize) -> SystemModel {
        let mut sys = SystemModel::new("metrics", horizon);
        let z = sys.add_zone("Z1");
        sys.add_bus("b0", z);
        sys.add_bus("b1", z);
        sys.add_branch("l", 0, 1, 0.1, 100.0);
        for &(id, tech, cost) in units {
            sys.thermal.push(ThermalUnit {
                id: id.into(),
                bus: 0,
                technology: tech,
                speed: SpeedClass::Fast,
                p_min: 0.0,
                p_max: 100.0,
                ramp_up: 100.0,
                ramp_down: 100.0,
                marginal_cost: vec![cost; horizon],
                startup_cost: 0.0,
                shutdown_cost: 0.0,
                initially_on: true,
            });
        }
        sys.demands.push(Demand {
            id: "d".into(),
            bus: 1,
            scheduled: vec![100.0; horizon],
            bid_price: 3000.0,
            shed_cost: 3000.0,
            shares: Vec::new(),
        });
        sys
    }

    #[test]
    fn single_source_has_full_share() {
        let sys = system(&[("g", ThermalTech::Gas, 10.0)], 2);
        let mut d = DispatchResult::empty("ed", &sys, vec![0, 1]);
        d.thermal[0] = vec![100.0, 100.0];
        let m = compute_metrics(&sys, &d, &[], &[], &MetricsOptions::default()).unwrap();
        assert_eq!(m.technologies["gas"].share_pct, 100.0);
        assert_eq!(m.technologies["gas"].activation, 1.0);
        m.check_identities().unwrap();
    }

    #[test]
    fn shares_and_profit_identity() {
        let sys = system(&[("g", ThermalTech::Gas, 4.0), ("c", ThermalTech::HardCoal, 1.0)], 1);
        let mut d = DispatchResult::empty("ed", &sys, vec![0]);
        d.thermal[0] = vec![300.0];
        d.thermal[1] = vec![100.0];
        d.prices = Some(vec![vec![10.0 / 3.0]]);
        let m = compute_metrics(&sys, &d, &[], &[], &MetricsOptions::default()).unwrap();
        assert!((m.technologies["gas"].share_pct - 75.0).abs() < 1e-12);
        assert!((m.technologies["hard_coal"].share_pct - 25.0).abs() < 1e-12);
        let gas = &m.technologies["gas"];
        assert!((gas.revenue_eur.unwrap() - 1000.0).abs() < 1e-9);
        assert!((gas.cost_eur - 1200.0).abs() < 1e-9);
        assert!((gas.profit_eur.unwrap() + 200.0).abs() < 1e-9);
        m.check_identities().unwrap();
    }

    #[test]
    fn revenue_minus_cost() {
        let sys = system(&[("g", ThermalTech::Gas, 4.0)], 1);
        let mut d = DispatchResult::empty("ed", &sys, vec![0]);
        d.thermal[0] = vec![100.0];
        d.prices = Some(vec![vec![10.0]]);
        let m = compute_metrics(&sys, &d, &[], &[], &MetricsOptions::default()).unwrap();
        assert_eq!(m.technologies["gas"].revenue_eur, Some(1000.0));
        assert_eq!(m.technologies["gas"].cost_eur, 400.0);
        assert_eq!(m.technologies["gas"].profit_eur, Some(600.0));
    }

    #[test]
    fn price_statistics() {
        let sys = system(&[("g", ThermalTech::Gas, 4.0)], 4);
        let mut d = DispatchResult::empty("ed", &sys, vec![0, 1, 2, 3]);
        d.prices = Some(vec![vec![20.0, 100.0, 150.0, 10.0]]);
        let p = compute_metrics(&sys, &d, &[], &[], &MetricsOptions::default()).unwrap().prices.unwrap();
        assert_eq!((p.mean, p.max, p.min, p.high_price_hours), (70.0, 150.0, 10.0, 2));
    }

    #[test]
    fn mismatched_hours_are_rejected() {
        let sys = system(&[("g", ThermalTech::Gas, 4.0)], 2);
        let d = DispatchResult::empty("ed", &sys, vec![0]);
        let c = CascadeResult {
            hour: 1,
            contingency: 0,
            failures: vec![Failure { branch: 0, iteration: 0 }],
            dns: 0.0,
            islands: 2,
            capped: false,
        };
        assert!(compute_metrics(&sys, &d, &[], &[c], &MetricsOptions::default()).is_err());
    }

    #[test]
    fn percentiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), Some(3.0));
        assert!((percentile(&v, 0.95).unwrap() - 4.8).abs() < 1e-12);
        assert_eq!(percentile(&[], 0.5), None);
    }
}
