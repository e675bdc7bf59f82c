//! Quasi-steady-state cascading failure simulation.
//!
//! After the initiating outages, every island is rebalanced from the
//! reserves of its running units (then by shedding or curtailment), a DC
//! power flow is solved, and every overloaded branch trips. The loop repeats
//! until no branch trips.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dispatch::OperatingPoint;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::SystemModel;

/// Contingency size shares: single, double, triple, and four-branch outages.
pub const DEFAULT_MIX: [f64; 4] = [0.91, 0.083, 0.005, 0.002];

/// Initiating branch outages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    pub id: usize,
    pub branches: Vec<usize>,
}

/// Draws `n` contingencies. `mix[i]` is the share of contingencies with
/// `i + 1` branches. Counts are fixed by the largest-remainder method, and
/// branches are distinct within each contingency.
pub fn generate_contingencies(n_branches: usize, n: usize, mix: &[f64], seed: u64) -> Result<Vec<Contingency>> {
    let total: f64 = mix.iter().sum();
    if mix.is_empty() || mix.iter().any(|&m| !(m >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("contingency mix {mix:?} must be non-negative and sum to 1")));
    }
    let counts = largest_remainder(n, mix);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for (i, &count) in counts.iter().enumerate() {
        let size = i + 1;
        if count > 0 && size > n_branches {
            return Err(Error::Invalid(format!(
                "contingencies of {size} branches requested but the grid has {n_branches}"
            )));
        }
        for _ in 0..count {
            let mut branches = sample(&mut rng, n_branches, size).into_vec();
            branches.sort_unstable();
            out.push(Contingency { id: out.len(), branches });
        }
    }
    Ok(out)
}

/// Splits `n` into integer counts proportional to `shares`; ties go to the lower index.
pub fn largest_remainder(n: usize, shares: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Picks `k` hours at evenly spaced positions of the load-duration curve,
/// including the minimum and maximum load hours. Returned in hour order.
///
/// Hours are ranked by total load, ties by hour. The `i`-th pick is rank
/// `round(i (n - 1) / (k - 1))`; a single pick is rank `floor((n - 1) / 2)`.
pub fn select_representative_hours(zonal_load: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    let n = zonal_load.first().map_or(0, Vec::len);
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("cannot pick {k} representative hours out of {n}")));
    }
    let total: Vec<f64> = (0..n).map(|t| zonal_load.iter().map(|z| z[t]).sum()).collect();
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| total[a].total_cmp(&total[b]).then(a.cmp(&b)));
    let mut hours: Vec<usize> = if k == 1 {
        vec![ranked[(n - 1) / 2]]
    } else {
        (0..k)
            .map(|i| ranked[((i * (n - 1)) as f64 / (k - 1) as f64).round() as usize])
            .collect()
    };
    hours.sort_unstable();
    Ok(hours)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchClass {
    Interconnector,
    /// Intra-zonal and sharing a bus with an interconnector.
    Adjacent,
    IntraZonal,
}

impl BranchClass {
    pub fn label(self) -> &'static str {
        match self {
            BranchClass::Interconnector => "interconnector",
            BranchClass::Adjacent => "adjacent",
            BranchClass::IntraZonal => "intra_zonal",
        }
    }
}

pub fn classify_branch(system: &SystemModel, branch: usize) -> Result<BranchClass> {
    let br = system
        .branches
        .get(branch)
        .ok_or_else(|| Error::Invalid(format!("unknown branch index {branch}")))?;
    let zone = |b: usize| system.buses[b].zone;
    if zone(br.from_bus) != zone(br.to_bus) {
        return Ok(BranchClass::Interconnector);
    }
    let touches = system.branches.iter().any(|other| {
        zone(other.from_bus) != zone(other.to_bus)
            && [other.from_bus, other.to_bus].iter().any(|&b| b == br.from_bus || b == br.to_bus)
    });
    Ok(if touches {
        BranchClass::Adjacent
    } else {
        BranchClass::IntraZonal
    })
}

/// Class of every branch, in branch order.
pub fn classify_all(system: &SystemModel) -> Vec<BranchClass> {
    (0..system.branches.len())
        .map(|b| classify_branch(system, b).expect("index in range"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeParams {
    /// A branch trips when |flow| exceeds this multiple of its rating.
    pub trip_factor: f64,
    pub max_iterations: usize,
}

impl Default for CascadeParams {
    fn default() -> Self {
        Self {
            trip_factor: 1.0,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Failure {
    pub branch: usize,
    /// 0 for the initiating outages.
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeResult {
    pub hour: usize,
    pub contingency: usize,
    pub failures: Vec<Failure>,
    /// Demand not served, MW.
    pub dns: f64,
    /// Islands at the end of the cascade.
    pub islands: usize,
    /// Set when the iteration cap stopped the cascade.
    pub capped: bool,
}

impl CascadeResult {
    /// Failures after the initiating outages.
    pub fn secondary(&self) -> impl Iterator<Item = &Failure> {
        self.failures.iter().filter(|f| f.iteration > 0)
    }
}

/// Mutable injections during a cascade.
struct State {
    thermal: Vec<f64>,
    storage: Vec<f64>,
    renewable: Vec<f64>,
    load: Vec<f64>,
}

/// Runs one cascade from a grid-feasible operating point.
///
/// `committed[g]` marks thermal units that are running (or can start) and
/// therefore offer reserves.
pub fn simulate_cascade(
    point: &OperatingPoint,
    committed: &[bool],
    system: &SystemModel,
    grid: &Grid,
    contingency: &Contingency,
    params: &CascadeParams,
) -> CascadeResult {
    let mut grid = grid.clone();
    let mut state = State {
        thermal: point.thermal.clone(),
        storage: point.storage_net.clone(),
        renewable: point.renewable.clone(),
        load: point.bus_loads(system),
    };
    let initial_load: f64 = state.load.iter().sum();
    let mut failures = Vec::new();
    for &b in &contingency.branches {
        if grid.in_service[b] {
            grid.trip(b);
            failures.push(Failure { branch: b, iteration: 0 });
        }
    }

    let mut capped = true;
    for iteration in 1..=params.max_iterations {
        let islands = grid.islands();
        rebalance(&mut state, committed, system, &islands.of_bus, islands.count());
        let injections = injections(&state, system);
        let flows = grid.dc_power_flow(&injections).expect("islands are rebalanced before every power flow");
        let trips: Vec<usize> = grid
            .branches
            .iter()
            .enumerate()
            .filter(|&(l, br)| grid.in_service[l] && flows[l].abs() > params.trip_factor * br.rating)
            .map(|(l, _)| l)
            .collect();
        if trips.is_empty() {
            capped = false;
            break;
        }
        for l in trips {
            grid.trip(l);
            failures.push(Failure { branch: l, iteration });
        }
    }
    let served: f64 = state.load.iter().sum();
    CascadeResult {
        hour: point.hour,
        contingency: contingency.id,
        failures,
        dns: (initial_load - served).max(0.0),
        islands: grid.islands().count(),
        capped,
    }
}

fn injections(state: &State, system: &SystemModel) -> Vec<f64> {
    let mut inj: Vec<f64> = state.load.iter().map(|l| -l).collect();
    for (g, p) in state.thermal.iter().enumerate() {
        inj[system.thermal[g].bus] += p;
    }
    for (s, p) in state.storage.iter().enumerate() {
        inj[system.storage[s].bus] += p;
    }
    for (r, p) in state.renewable.iter().enumerate() {
        inj[system.renewable[r].bus] += p;
    }
    inj
}

/// Moves every entry of `values` by `sign` times a share of `amount`
/// proportional to its margin. Returns the amount not covered.
fn spread(values: &mut [f64], margins: &[f64], amount: f64, sign: f64) -> f64 {
    let total: f64 = margins.iter().sum();
    if total <= 0.0 || amount <= 0.0 {
        return amount;
    }
    let used = amount.min(total);
    for (v, m) in values.iter_mut().zip(margins) {
        if *m > 0.0 {
            *v += sign * used * m / total;
        }
    }
    amount - used
}

/// [`spread`] over the entries `idx` of `vals`, with margins from `margin(index, value)`.
fn adjust(vals: &mut [f64], idx: &[usize], margin: &dyn Fn(usize, f64) -> f64, amount: f64, sign: f64) -> f64 {
    let mut sub: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
    let margins: Vec<f64> = idx.iter().zip(&sub).map(|(&i, &v)| margin(i, v).max(0.0)).collect();
    let left = spread(&mut sub, &margins, amount, sign);
    for (&i, v) in idx.iter().zip(sub) {
        vals[i] = v;
    }
    left
}

/// Balances every island: reserves first, then storage, then shedding or curtailment.
fn rebalance(state: &mut State, committed: &[bool], system: &SystemModel, island_of: &[usize], islands: usize) {
    for island in 0..islands {
        let in_island = |bus: usize| island_of[bus] == island;
        let th: Vec<usize> = (0..system.thermal.len()).filter(|&g| in_island(system.thermal[g].bus)).collect();
        let st: Vec<usize> = (0..system.storage.len()).filter(|&s| in_island(system.storage[s].bus)).collect();
        let re: Vec<usize> = (0..system.renewable.len()).filter(|&r| in_island(system.renewable[r].bus)).collect();
        let buses: Vec<usize> = (0..system.buses.len()).filter(|&b| in_island(b)).collect();

        let generation: f64 = th.iter().map(|&g| state.thermal[g]).sum::<f64>()
            + st.iter().map(|&s| state.storage[s]).sum::<f64>()
            + re.iter().map(|&r| state.renewable[r]).sum::<f64>();
        let load: f64 = buses.iter().map(|&b| state.load[b]).sum();
        let imbalance = generation - load;
        if imbalance.abs() <= 1e-9 {
            continue;
        }

        if imbalance < 0.0 {
            let mut deficit = -imbalance;
            let headroom = |g: usize, p: f64| if committed[g] { system.thermal[g].p_max - p } else { 0.0 };
            deficit = adjust(&mut state.thermal, &th, &headroom, deficit, 1.0);
            let charging = |_: usize, p: f64| -p;
            deficit = adjust(&mut state.storage, &st, &charging, deficit, 1.0);
            let load = |_: usize, l: f64| l;
            adjust(&mut state.load, &buses, &load, deficit, -1.0);
        } else {
            let mut surplus = imbalance;
            let footroom = |g: usize, p: f64| {
                let unit = &system.thermal[g];
                if unit.is_fast() {
                    p
                } else {
                    p - unit.p_min
                }
            };
            surplus = adjust(&mut state.thermal, &th, &footroom, surplus, -1.0);
            let output = |_: usize, p: f64| p;
            surplus = adjust(&mut state.renewable, &re, &output, surplus, -1.0);
            surplus = adjust(&mut state.storage, &st, &output, surplus, -1.0);
            // Slow units that cannot stay above their minimum trip to zero.
            adjust(&mut state.thermal, &th, &output, surplus, -1.0);
        }
    }
}

/// Runs every contingency on every operating point, in parallel.
pub fn run_security(
    points: &[(OperatingPoint, Vec<bool>)],
    system: &SystemModel,
    grid: &Grid,
    contingencies: &[Contingency],
    params: &CascadeParams,
) -> Vec<CascadeResult> {
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..contingencies.len()).map(move |c| (p, c)))
        .collect();
    jobs.par_iter()
        .map(|&(p, c)| simulate_cascade(&points[p].0, &points[p].1, system, grid, &contingencies[c], params))
        .collect()
}

/// Empirical exceedance curve of demand not served.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    /// `(dns, P(DNS > dns))`, ascending in dns.
    pub points: Vec<(f64, f64)>,
}

pub fn risk_curve(results: &[CascadeResult]) -> Result<RiskCurve> {
    if results.is_empty() {
        return Err(Error::Invalid("risk curve needs at least one cascade result".into()));
    }
    let mut dns: Vec<f64> = results.iter().map(|r| r.dns).collect();
    dns.sort_by(f64::total_cmp);
    let n = dns.len() as f64;
    let mut levels = vec![0.0];
    levels.extend(dns.iter().copied().filter(|&d| d > 0.0));
    levels.dedup();
    let points = levels
        .into_iter()
        .map(|x| {
            let above = dns.len() - dns.partition_point(|&d| d <= x);
            (x, above as f64 / n)
        })
        .collect();
    Ok(RiskCurve { points })
}
