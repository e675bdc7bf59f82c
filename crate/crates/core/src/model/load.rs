//! Dataset directory reader.
//!
//! Layout:
//!
//! ```text
//! manifest.json        horizon, noise sigma, NTC fraction, seed, storage bid prices
//! zones.csv            id,name
//! buses.csv            id,zone
//! branches.csv         id,from_bus,to_bus,reactance,rating,is_transformer
//! thermal.csv          id,bus,technology,speed_class,p_min,p_max,ramp_up,ramp_down,
//!                      startup_cost,shutdown_cost,initial_status[,marginal_cost]
//! storage.csv          id,bus,technology,pd_min,pd_max,pc_min,pc_max,e_min,e_max,
//!                      e_initial,eta_c,eta_d,sd_rate,sw_max,vom_cost
//! renewable.csv        id,bus,technology[,vom_cost]
//! demand.csv           id,bus,bid_price,shed_cost
//! demand_buses.csv     demand,bus,share                      (optional)
//! timeseries/thermal_cost.csv        hour,<thermal ids...>
//! timeseries/storage_inflow.csv      hour,<storage ids...>   (optional, missing = 0)
//! timeseries/renewable_forecast.csv  hour,<renewable ids...>
//! timeseries/demand.csv              hour,<demand ids...>
//! timeseries/price_forecast.csv      hour,<zone ids...>      (optional)
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub horizon: usize,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_fraction")]
    pub ntc_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub storage_bids: StorageBidPrices,
    /// Free-form provenance notes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn default_sigma() -> f64 {
    DEFAULT_NOISE_SIGMA
}

fn default_fraction() -> f64 {
    DEFAULT_NTC_FRACTION
}

#[derive(Deserialize)]
struct ZoneRow {
    id: String,
    #[serde(default)]
    name: String,
}

#[derive(Deserialize)]
struct BusRow {
    id: String,
    zone: String,
}

#[derive(Deserialize)]
struct BranchRow {
    id: String,
    from_bus: String,
    to_bus: String,
    reactance: f64,
    rating: f64,
    #[serde(default, deserialize_with = "flag")]
    is_transformer: bool,
}

#[derive(Deserialize)]
struct ThermalRow {
    id: String,
    bus: String,
    technology: ThermalTech,
    speed_class: SpeedClass,
    p_min: f64,
    p_max: f64,
    ramp_up: f64,
    ramp_down: f64,
    startup_cost: f64,
    shutdown_cost: f64,
    initial_status: String,
    #[serde(default)]
    marginal_cost: Option<f64>,
}

#[derive(Deserialize)]
struct StorageRow {
    id: String,
    bus: String,
    technology: StorageTech,
    pd_min: f64,
    pd_max: f64,
    pc_min: f64,
    pc_max: f64,
    e_min: f64,
    e_max: f64,
    e_initial: f64,
    eta_c: f64,
    eta_d: f64,
    sd_rate: f64,
    sw_max: f64,
    vom_cost: f64,
}

#[derive(Deserialize)]
struct RenewableRow {
    id: String,
    bus: String,
    technology: RenewableTech,
    #[serde(default)]
    vom_cost: Option<f64>,
}

#[derive(Deserialize)]
struct DemandRow {
    id: String,
    bus: String,
    bid_price: f64,
    shed_cost: f64,
}

#[derive(Deserialize)]
struct ShareRow {
    demand: String,
    bus: String,
    share: f64,
}

fn flag<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Ok(true),
        "" | "0" | "false" | "no" | "n" => Ok(false),
        other => Err(serde::de::Error::custom(format!("not a boolean flag: {other}"))),
    }
}

fn read_rows<T: serde::de::DeserializeOwned>(root: &Path, file: &str) -> Result<Vec<T>> {
    let path = root.join(file);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&path)?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                file: file.to_string(),
                message: format!("row {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Reads a wide time-series table into `id -> values`. Returns `None` if the file is absent.
fn read_series(root: &Path, file: &str, horizon: usize) -> Result<Option<HashMap<String, Vec<f64>>>> {
    let path: PathBuf = root.join("timeseries").join(file);
    if !path.exists() {
        return Ok(None);
    }
    let name = format!("timeseries/{file}");
    let parse_err = |message: String| Error::Parse {
        file: name.clone(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("hour") {
        return Err(parse_err("first column must be `hour`".into()));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon); ids.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let hour: usize = rec
            .get(0)
            .and_then(|h| h.parse().ok())
            .ok_or_else(|| parse_err(format!("row {}: bad hour index", row + 1)))?;
        if hour != row {
            return Err(parse_err(format!("row {}: expected hour {row}, found {hour}", row + 1)));
        }
        for (c, col) in cols.iter_mut().enumerate() {
            let cell = rec.get(c + 1).unwrap_or("");
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(format!("hour {hour}, column {}: not a number: {cell:?}", ids[c])))?;
            col.push(v);
        }
    }
    Ok(Some(ids.into_iter().zip(cols).collect()))
}

fn index_of(map: &HashMap<String, usize>, id: &str, owner: &str, what: &str) -> Result<usize> {
    map.get(id)
        .copied()
        .ok_or_else(|| Error::validation(owner, format!("unknown {what} `{id}`")))
}

fn take_series(table: &mut Option<HashMap<String, Vec<f64>>>, id: &str) -> Option<Vec<f64>> {
    table.as_mut().and_then(|t| t.remove(id))
}

fn reject_leftovers(table: Option<HashMap<String, Vec<f64>>>, file: &str) -> Result<()> {
    if let Some(t) = table {
        if let Some(id) = t.keys().min() {
            return Err(Error::validation(
                id.clone(),
                format!("timeseries/{file} has a column for an unknown entity"),
            ));
        }
    }
    Ok(())
}

/// Loads and validates a dataset directory.
pub fn load_system(dataset_root: &Path) -> Result<SystemModel> {
    let manifest_path = dataset_root.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::MissingFile(manifest_path));
    }
    let manifest: Manifest = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(&manifest_path)?))?;
    let horizon = manifest.horizon;

    let mut sys = SystemModel::new(manifest.name.clone(), horizon);
    sys.noise_sigma = manifest.noise_sigma;
    sys.ntc_fraction = manifest.ntc_fraction;
    sys.seed = manifest.seed;
    sys.storage_bids = manifest.storage_bids;

    let zones: Vec<ZoneRow> = read_rows(dataset_root, "zones.csv")?;
    let mut zone_ix = HashMap::new();
    for z in zones {
        if zone_ix.insert(z.id.clone(), sys.zones.len()).is_some() {
            return Err(Error::validation(&z.id, "duplicate zone id"));
        }
        let name = if z.name.is_empty() { z.id.clone() } else { z.name };
        sys.zones.push(Zone { id: z.id, name });
    }

    let mut bus_ix = HashMap::new();
    for b in read_rows::<BusRow>(dataset_root, "buses.csv")? {
        let zone = index_of(&zone_ix, &b.zone, &b.id, "zone")?;
        if bus_ix.insert(b.id.clone(), sys.buses.len()).is_some() {
            return Err(Error::validation(&b.id, "duplicate bus id"));
        }
        sys.buses.push(Bus { id: b.id, zone });
    }

    for br in read_rows::<BranchRow>(dataset_root, "branches.csv")? {
        let from_bus = index_of(&bus_ix, &br.from_bus, &br.id, "bus")?;
        let to_bus = index_of(&bus_ix, &br.to_bus, &br.id, "bus")?;
        sys.branches.push(Branch {
            id: br.id,
            from_bus,
            to_bus,
            reactance: br.reactance,
            rating: br.rating,
            is_transformer: br.is_transformer,
        });
    }

    let mut cost_ts = read_series(dataset_root, "thermal_cost.csv", horizon)?;
    for g in read_rows::<ThermalRow>(dataset_root, "thermal.csv")? {
        let bus = index_of(&bus_ix, &g.bus, &g.id, "bus")?;
        let marginal_cost = match (take_series(&mut cost_ts, &g.id), g.marginal_cost) {
            (Some(s), _) => s,
            (None, Some(c)) => vec![c; horizon],
            (None, None) => {
                return Err(Error::validation(
                    &g.id,
                    "no marginal cost: add a timeseries/thermal_cost.csv column or a marginal_cost value",
                ))
            }
        };
        let initially_on = match g.initial_status.trim().to_ascii_lowercase().as_str() {
            "on" | "1" | "true" => true,
            "off" | "0" | "false" => false,
            "" => g.speed_class == SpeedClass::Slow,
            other => return Err(Error::validation(&g.id, format!("initial_status `{other}` is not on/off"))),
        };
        sys.thermal.push(ThermalUnit {
            id: g.id,
            bus,
            technology: g.technology,
            speed: g.speed_class,
            p_min: g.p_min,
            p_max: g.p_max,
            ramp_up: g.ramp_up,
            ramp_down: g.ramp_down,
            marginal_cost,
            startup_cost: g.startup_cost,
            shutdown_cost: g.shutdown_cost,
            initially_on,
        });
    }
    reject_leftovers(cost_ts, "thermal_cost.csv")?;

    let mut inflow_ts = read_series(dataset_root, "storage_inflow.csv", horizon)?;
    for s in read_rows::<StorageRow>(dataset_root, "storage.csv")? {
        let bus = index_of(&bus_ix, &s.bus, &s.id, "bus")?;
        let inflow = take_series(&mut inflow_ts, &s.id).unwrap_or_else(|| vec![0.0; horizon]);
        sys.storage.push(StorageUnit {
            id: s.id,
            bus,
            technology: s.technology,
            pd_min: s.pd_min,
            pd_max: s.pd_max,
            pc_min: s.pc_min,
            pc_max: s.pc_max,
            e_min: s.e_min,
            e_max: s.e_max,
            e_initial: s.e_initial,
            eta_c: s.eta_c,
            eta_d: s.eta_d,
            sd_rate: s.sd_rate,
            inflow,
            sw_max: s.sw_max,
            vom_cost: s.vom_cost,
        });
    }
    reject_leftovers(inflow_ts, "storage_inflow.csv")?;

    let renewables: Vec<RenewableRow> = read_rows(dataset_root, "renewable.csv")?;
    let mut ren_ts = read_series(dataset_root, "renewable_forecast.csv", horizon)?;
    for r in renewables {
        let bus = index_of(&bus_ix, &r.bus, &r.id, "bus")?;
        let forecast = take_series(&mut ren_ts, &r.id)
            .ok_or_else(|| Error::validation(&r.id, "missing column in timeseries/renewable_forecast.csv"))?;
        sys.renewable.push(RenewableUnit {
            id: r.id,
            bus,
            technology: r.technology,
            forecast,
            vom_cost: r.vom_cost.unwrap_or(0.0),
        });
    }
    reject_leftovers(ren_ts, "renewable_forecast.csv")?;

    let demands: Vec<DemandRow> = read_rows(dataset_root, "demand.csv")?;
    let mut dem_ts = read_series(dataset_root, "demand.csv", horizon)?;
    let mut demand_ix = HashMap::new();
    for d in demands {
        let bus = index_of(&bus_ix, &d.bus, &d.id, "bus")?;
        let scheduled = take_series(&mut dem_ts, &d.id)
            .ok_or_else(|| Error::validation(&d.id, "missing column in timeseries/demand.csv"))?;
        demand_ix.insert(d.id.clone(), sys.demands.len());
        sys.demands.push(Demand {
            id: d.id,
            bus,
            scheduled,
            bid_price: d.bid_price,
            shed_cost: d.shed_cost,
            shares: Vec::new(),
        });
    }
    reject_leftovers(dem_ts, "demand.csv")?;

    if dataset_root.join("demand_buses.csv").exists() {
        for row in read_rows::<ShareRow>(dataset_root, "demand_buses.csv")? {
            let d = index_of(&demand_ix, &row.demand, &row.demand, "demand")?;
            let bus = index_of(&bus_ix, &row.bus, &row.demand, "bus")?;
            sys.demands[d].shares.push((bus, row.share));
        }
    }

    if let Some(mut pf) = read_series(dataset_root, "price_forecast.csv", horizon)? {
        let mut series = Vec::with_capacity(sys.zones.len());
        for z in &sys.zones {
            let s = pf
                .remove(&z.id)
                .ok_or_else(|| Error::validation(&z.id, "missing column in timeseries/price_forecast.csv"))?;
            series.push(s);
        }
        reject_leftovers(Some(pf), "price_forecast.csv")?;
        sys.price_forecast = Some(series);
    }

    sys.finalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, file: &str, body: &str) {
        let p = dir.join(file);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, body).unwrap();
    }

    fn empty_dataset(dir: &Path, horizon: usize) {
        write(dir, "manifest.json", &format!(r#"{{"name":"t","horizon":{horizon}}}"#));
        write(dir, "zones.csv", "id,name\n");
        write(dir, "buses.csv", "id,zone\n");
        write(dir, "branches.csv", "id,from_bus,to_bus,reactance,rating,is_transformer\n");
        write(
            dir,
            "thermal.csv",
            "id,bus,technology,speed_class,p_min,p_max,ramp_up,ramp_down,startup_cost,shutdown_cost,initial_status\n",
        );
        write(
            dir,
            "storage.csv",
            "id,bus,technology,pd_min,pd_max,pc_min,pc_max,e_min,e_max,e_initial,eta_c,eta_d,sd_rate,sw_max,vom_cost\n",
        );
        write(dir, "renewable.csv", "id,bus,technology,vom_cost\n");
        write(dir, "demand.csv", "id,bus,bid_price,shed_cost\n");
    }

    #[test]
    fn empty_dataset_loads() {
        let dir = tempfile::tempdir().unwrap();
        empty_dataset(dir.path(), 0);
        let sys = load_system(dir.path()).unwrap();
        assert_eq!(sys.horizon, 0);
        assert!(sys.buses.is_empty() && sys.thermal.is_empty());
        assert_eq!(sys.ntc_fraction, 0.40);
        assert_eq!(sys.noise_sigma, 0.025);
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        empty_dataset(dir.path(), 0);
        fs::remove_file(dir.path().join("storage.csv")).unwrap();
        match load_system(dir.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("storage.csv")),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn small_dataset(dir: &Path) {
        empty_dataset(dir, 2);
        write(dir, "zones.csv", "id,name\nZ1,North\n");
        write(dir, "buses.csv", "id,zone\nb1,Z1\nb2,Z1\n");
        write(dir, "branches.csv", "id,from_bus,to_bus,reactance,rating,is_transformer\nl1,b1,b2,0.1,100,0\n");
        write(
            dir,
            "storage.csv",
            "id,bus,technology,pd_min,pd_max,pc_min,pc_max,e_min,e_max,e_initial,eta_c,eta_d,sd_rate,sw_max,vom_cost\n\
             bat1,b2,battery,0,10,0,10,0,20,0,0.9,0.9,0.001,0,1\n",
        );
        write(dir, "demand.csv", "id,bus,bid_price,shed_cost\nd1,b2,3000,3000\n");
        write(dir, "timeseries/demand.csv", "hour,d1\n0,50\n1,60\n");
    }

    #[test]
    fn battery_with_inflow_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        small_dataset(dir.path());
        assert!(load_system(dir.path()).is_ok());
        write(dir.path(), "timeseries/storage_inflow.csv", "hour,bat1\n0,0\n1,3\n");
        let msg = load_system(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("bat1") && msg.contains("inflows"), "{msg}");
    }

    #[test]
    fn series_length_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        small_dataset(dir.path());
        write(dir.path(), "timeseries/demand.csv", "hour,d1\n0,50\n");
        let msg = load_system(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("d1") && msg.contains("horizon"), "{msg}");
    }

    #[test]
    fn dangling_bus_reference_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        small_dataset(dir.path());
        write(dir.path(), "demand.csv", "id,bus,bid_price,shed_cost\nd1,b9,3000,3000\n");
        let msg = load_system(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("d1") && msg.contains("b9"), "{msg}");
    }
}
