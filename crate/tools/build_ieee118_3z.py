#!/usr/bin/env python3
"""Builds the bundled `ieee118-3z` dataset.

Topology comes from the IEEE 118-bus case in data/sources/case118. Everything
else (zones, unit fleet, hourly series, branch ratings) is synthetic and fully
determined by the seed below, so rerunning the script reproduces the files
byte for byte.

    python3 tools/build_ieee118_3z.py [--out data/ieee118-3z] [--hours 8760]
"""

import argparse
import csv
import json
import math
import os

import networkx as nx
import numpy as np

SEED = 2021
HOURS = 8760
SOURCE = os.path.join(os.path.dirname(__file__), "..", "data", "sources", "case118")

ZONE2 = {24, *range(33, 69), 116}
ZONE3 = {*range(69, 113), 118}

MEAN_DEMAND = 3733.0
DEMAND_BID = 3000.0
SHED_COST = 3000.0
NTC_FRACTION = 0.40
# Summed tie ratings per corridor; 40% of these gives 750 MW and 360 MW.
CORRIDOR_RATING = {(1, 2): 1875.0, (2, 3): 900.0}
RATING_QUANTILE = 0.98
RATING_HEADROOM = 1.25
RATING_FLOOR = 100.0
RATING_SAMPLE_STEP = 5

# Technology count per zone for the 54 thermal units.
THERMAL_MIX = {
    1: {"lignite": 2, "hard_coal": 4, "gas": 7, "oil": 2},
    2: {"nuclear": 1, "lignite": 9, "hard_coal": 2, "gas": 3, "oil": 1},
    3: {"nuclear": 4, "lignite": 5, "hard_coal": 6, "gas": 5, "oil": 3},
}
# (p_max MW, p_min share, hours for a full ramp, start cost EUR/MW, efficiency)
THERMAL_TECH = {
    "nuclear": (210.0, 0.50, 8, 150.0, 0.33),
    "lignite": (150.0, 0.35, 4, 100.0, 0.37),
    "hard_coal": (123.125, 0.30, 4, 80.0, 0.40),
    "gas": (56.0, 0.0, 1, 30.0, 0.50),
    "oil": (45.0, 0.0, 1, 20.0, 0.36),
}
SLOW = {"nuclear", "lignite", "hard_coal"}
# tonnes CO2 per MWh of fuel
EMISSION = {"gas": 0.202, "oil": 0.267, "hard_coal": 0.341, "lignite": 0.364, "nuclear": 0.0}

# (count, MW each, hours of storage at full discharge, eta_c, eta_d, sd_rate, inflow capacity factor)
STORAGE_TECH = {
    "hydro_dam": (14, 15.0, 300.0, 1.0, 0.90, 0.0, 0.30),
    "hydro_pumped": (10, 12.0, 8.0, 0.87, 0.87, 0.0, 0.05),
    "hydro_pumped_daily": (12, 8.0, 6.0, 0.87, 0.87, 0.0, 0.0),
    "battery": (18, 77.1 / 18.0, 2.0, 0.95, 0.95, 0.0005, 0.0),
}
# (count, total MW)
RENEWABLE_TECH = {"solar": (20, 400.0), "wind": (20, 450.0), "run_of_river": (14, 156.25)}


def zone_of(bus):
    return 2 if bus in ZONE2 else 3 if bus in ZONE3 else 1


def read_csv(name):
    with open(os.path.join(SOURCE, name), newline="") as f:
        return list(csv.DictReader(f))


def fmt(x):
    return f"{x:.4f}".rstrip("0").rstrip(".") if x != 0 else "0"


def write_rows(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_series(path, ids, columns):
    rows = [[t] + [fmt(col[t]) for col in columns] for t in range(len(columns[0]))]
    write_rows(path, ["hour"] + ids, rows)


def ar1(rng, n, phi, sigma):
    x = np.empty(n)
    x[0] = rng.normal(0, sigma / math.sqrt(1 - phi * phi))
    eps = rng.normal(0, sigma, n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + eps[t]
    return x


def daily_index(rng, hours, knots, vol):
    """Piecewise-linear yearly path through `knots` (day, value) plus a daily random walk."""
    days = hours // 24 + 1
    d = np.arange(days)
    base = np.interp(d, [k[0] for k in knots], [k[1] for k in knots])
    walk = np.cumsum(rng.normal(0, vol, days))
    walk -= np.linspace(0, walk[-1], days)
    path = np.maximum(base * (1 + walk), 0.1 * base)
    return np.repeat(path, 24)[:hours]


def demand_shape(rng, hours):
    t = np.arange(hours)
    h = t % 24
    day = t // 24
    season = 1 + 0.14 * np.cos(2 * math.pi * (day - 15) / 365)
    weekend = np.where(day % 7 >= 5, 0.88, 1.0)
    daily = (
        0.80
        + 0.14 * np.exp(-((h - 11) ** 2) / 18)
        + 0.18 * np.exp(-((h - 19) ** 2) / 8)
        + 0.06 * np.clip(h - 6, 0, 1)
        - 0.06 * np.clip(h - 22, 0, 1)
    )
    return season * weekend * daily * (1 + ar1(rng, hours, 0.9, 0.01))


def solar_shape(rng, hours):
    t = np.arange(hours)
    h = t % 24
    day = t // 24
    length = 12 - 3.2 * np.cos(2 * math.pi * (day + 10) / 365)
    sunrise = 12 - length / 2
    x = (h + 0.5 - sunrise) / length
    sun = np.where((x > 0) & (x < 1), np.sin(math.pi * np.clip(x, 0, 1)) ** 1.5, 0.0)
    elevation = 0.65 + 0.35 * -np.cos(2 * math.pi * (day + 10) / 365)
    clouds = np.repeat(np.clip(1 - 0.6 * rng.beta(1.2, 2.5, hours // 24 + 1), 0.1, 1), 24)[:hours]
    return np.clip(sun * elevation * clouds, 0, 1)


def wind_shape(rng, hours):
    day = np.arange(hours) // 24
    season = 1 + 0.35 * np.cos(2 * math.pi * (day - 15) / 365)
    speed = 0.28 * season * np.exp(ar1(rng, hours, 0.97, 0.12))
    return np.clip(speed, 0, 1)


def river_shape(rng, hours):
    day = np.arange(hours) // 24
    melt = 0.5 + 0.3 * np.exp(-((day - 160) ** 2) / (2 * 45**2))
    return np.clip(melt * (1 + ar1(rng, hours, 0.995, 0.01)), 0, 1)


def ptdf_matrix(nbus, branches, slack):
    b = np.zeros((len(branches), nbus))
    for k, (f, t, x) in enumerate(branches):
        b[k, f] = 1 / x
        b[k, t] = -1 / x
    a = np.zeros((len(branches), nbus))
    for k, (f, t, x) in enumerate(branches):
        a[k, f] = 1
        a[k, t] = -1
    bbus = a.T @ b
    keep = [i for i in range(nbus) if i != slack]
    inv = np.linalg.inv(bbus[np.ix_(keep, keep)])
    ptdf = np.zeros((len(branches), nbus))
    ptdf[:, keep] = b[:, keep] @ inv
    return ptdf


def reference_flows(ptdf, bus_zone, thermal, renewable, available, loads, demand, ntc):
    """Branch flows of a reference dispatch at every RATING_SAMPLE_STEP-th hour.

    Renewables run at their forecast and each zone's thermal units share the zone's residual
    load pro rata to capacity. Every sampled hour is repeated with each corridor carrying
    -NTC, 0 and +NTC, so the ratings also cover the exchanges the market may schedule.
    """
    nbus = ptdf.shape[1]
    cap = np.zeros((3, nbus))
    for bus, z, p_max in thermal:
        cap[z - 1, bus] += p_max
    share = cap / cap.sum(axis=1, keepdims=True)
    exchanges = [(a, b) for a in (-ntc[(1, 2)], 0.0, ntc[(1, 2)]) for b in (-ntc[(2, 3)], 0.0, ntc[(2, 3)])]
    flows = []
    for t in range(0, len(demand[0]), RATING_SAMPLE_STEP):
        inj = np.zeros(nbus)
        for (bus, _), col in zip(renewable, available):
            inj[bus] += col[t]
        for bus, z, s in loads:
            inj[bus] -= s * demand[z - 1][t]
        residual = [-inj[bus_zone == z].sum() for z in (1, 2, 3)]
        for x12, x23 in exchanges:
            export = [x12, x23 - x12, -x23]
            total = inj.copy()
            for z in range(3):
                total += share[z] * (residual[z] + export[z])
            flows.append(np.abs(ptdf @ total))
    return np.array(flows)


def merit_price(costs, caps, net_load):
    order = np.argsort(costs)
    cum = np.cumsum(caps[order])
    i = np.searchsorted(cum, net_load)
    return costs[order][min(i, len(order) - 1)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "ieee118-3z"))
    ap.add_argument("--hours", type=int, default=HOURS)
    args = ap.parse_args()
    hours = args.hours
    rng = np.random.default_rng(SEED)
    out = args.out
    os.makedirs(os.path.join(out, "timeseries"), exist_ok=True)

    bus_rows = read_csv("bus.csv")
    buses = [int(r["bus"]) for r in bus_rows]
    bus_load = {int(r["bus"]): float(r["pd_mw"]) for r in bus_rows}
    bus_ix = {b: i for i, b in enumerate(buses)}
    gen_buses = [int(r["bus"]) for r in read_csv("gen.csv")]
    gen_pmax = {int(r["bus"]): float(r["pmax_mw"]) for r in read_csv("gen.csv")}
    branch_rows = read_csv("branch.csv")

    write_rows(os.path.join(out, "zones.csv"), ["id", "name"], [["z1", "Zone 1"], ["z2", "Zone 2"], ["z3", "Zone 3"]])
    write_rows(os.path.join(out, "buses.csv"), ["id", "zone"], [[f"b{b}", f"z{zone_of(b)}"] for b in buses])

    # Thermal fleet: bigger source generators host the slow technologies.
    thermal = []
    for z in (1, 2, 3):
        zb = sorted((b for b in gen_buses if zone_of(b) == z), key=lambda b: (-gen_pmax[b], b))
        techs = [t for t in ("nuclear", "lignite", "hard_coal", "gas", "oil") for _ in range(THERMAL_MIX[z].get(t, 0))]
        assert len(techs) == len(zb), (z, len(techs), len(zb))
        for b, tech in zip(zb, techs):
            thermal.append((b, tech))
    thermal.sort()
    counts = {}
    therm_rows, therm_cost_params = [], []
    for b, tech in thermal:
        counts[tech] = counts.get(tech, 0) + 1
        uid = f"{tech}_{counts[tech]}"
        pmax, pmin_share, ramp_h, start, eff = THERMAL_TECH[tech]
        eff = eff * (1 + rng.uniform(-0.06, 0.06))
        slow = tech in SLOW
        ramp = pmax / ramp_h
        therm_rows.append(
            [uid, f"b{b}", tech, "slow" if slow else "fast", fmt(pmax * pmin_share), fmt(pmax), fmt(ramp), fmt(ramp),
             fmt(start * pmax), fmt(0.1 * start * pmax), "on" if slow else "off"]
        )
        therm_cost_params.append((uid, tech, eff, rng.uniform(1.5, 4.0)))
    write_rows(
        os.path.join(out, "thermal.csv"),
        ["id", "bus", "technology", "speed_class", "p_min", "p_max", "ramp_up", "ramp_down", "startup_cost",
         "shutdown_cost", "initial_status"],
        therm_rows,
    )

    # Fuel and carbon indices; oil follows gas and lignite follows coal.
    gas = daily_index(rng, hours, [(0, 19), (120, 22), (200, 32), (260, 55), (290, 85), (340, 110), (365, 75)], 0.02)
    coal = daily_index(rng, hours, [(0, 8), (150, 11), (270, 22), (300, 28), (365, 14)], 0.015)
    co2 = daily_index(rng, hours, [(0, 33), (120, 48), (240, 60), (365, 80)], 0.01)
    fuel = {"gas": gas, "oil": 1.6 * gas, "hard_coal": coal, "lignite": 0.2 * coal, "nuclear": np.full(hours, 1.8)}
    cost_cols = []
    for uid, tech, eff, vom in therm_cost_params:
        cost_cols.append((fuel[tech] + EMISSION[tech] * co2) / eff + vom)
    write_series(os.path.join(out, "timeseries", "thermal_cost.csv"), [p[0] for p in therm_cost_params], cost_cols)

    # Storage and renewables are spread over the generator buses.
    hosts = sorted(gen_buses)
    order = list(rng.permutation(len(hosts)))
    storage_rows, inflow_ids, inflow_cols = [], [], []
    i = 0
    for tech, (n, mw, e_hours, eta_c, eta_d, sd, cf) in STORAGE_TECH.items():
        for k in range(n):
            b = hosts[order[i]]
            i += 1
            uid = f"{tech}_{k + 1}"
            charge = 0.0 if tech == "hydro_dam" else mw
            e_max = mw * e_hours
            spill = mw if cf > 0 else 0.0
            storage_rows.append(
                [uid, f"b{b}", tech, "0", fmt(mw), "0", fmt(charge), "0", fmt(e_max), fmt(0.5 * e_max), fmt(eta_c),
                 fmt(eta_d), fmt(sd), fmt(spill), "0.5"]
            )
            if cf > 0:
                inflow_ids.append(uid)
                inflow_cols.append(mw * cf * river_shape(rng, hours) / 0.55)
    write_rows(
        os.path.join(out, "storage.csv"),
        ["id", "bus", "technology", "pd_min", "pd_max", "pc_min", "pc_max", "e_min", "e_max", "e_initial", "eta_c",
         "eta_d", "sd_rate", "sw_max", "vom_cost"],
        storage_rows,
    )
    write_series(os.path.join(out, "timeseries", "storage_inflow.csv"), inflow_ids, inflow_cols)

    order = list(rng.permutation(len(hosts)))
    ren_rows, ren_ids, ren_cols = [], [], []
    shapes = {"solar": solar_shape, "wind": wind_shape, "run_of_river": river_shape}
    regional = {t: [f(rng, hours) for _ in range(3)] for t, f in shapes.items()}
    i = 0
    for tech, (n, total) in RENEWABLE_TECH.items():
        for k in range(n):
            b = hosts[order[i]]
            i += 1
            uid = f"{tech}_{k + 1}"
            ren_rows.append([uid, f"b{b}", tech, "0"])
            local = np.clip(regional[tech][zone_of(b) - 1] * (1 + ar1(rng, hours, 0.8, 0.05)), 0, 1)
            ren_ids.append(uid)
            ren_cols.append(total / n * local)
    write_rows(os.path.join(out, "renewable.csv"), ["id", "bus", "technology", "vom_cost"], ren_rows)
    write_series(os.path.join(out, "timeseries", "renewable_forecast.csv"), ren_ids, ren_cols)

    # One demand per zone, spread over its buses by the source load shares.
    zone_load = {z: sum(v for b, v in bus_load.items() if zone_of(b) == z) for z in (1, 2, 3)}
    total_load = sum(zone_load.values())
    write_rows(
        os.path.join(out, "demand.csv"),
        ["id", "bus", "bid_price", "shed_cost"],
        [[f"d{z}", f"b{max((b for b in buses if zone_of(b) == z), key=lambda b: (bus_load[b], -b))}", fmt(DEMAND_BID),
          fmt(SHED_COST)] for z in (1, 2, 3)],
    )
    write_rows(
        os.path.join(out, "demand_buses.csv"),
        ["demand", "bus", "share"],
        [[f"d{zone_of(b)}", f"b{b}", f"{bus_load[b] / zone_load[zone_of(b)]:.10f}"] for b in buses if bus_load[b] > 0],
    )
    dem_cols = []
    for z in (1, 2, 3):
        shape = demand_shape(rng, hours)
        dem_cols.append(MEAN_DEMAND * zone_load[z] / total_load * shape / shape.mean())
    write_series(os.path.join(out, "timeseries", "demand.csv"), ["d1", "d2", "d3"], dem_cols)

    # Price forecast: merit-order price of the copper-plate residual load, with forecast error.
    caps = np.array([float(r[5]) for r in therm_rows])
    costs = np.array(cost_cols)
    dams = sum(float(r[4]) * STORAGE_TECH["hydro_dam"][6] for r in storage_rows if r[2] == "hydro_dam")
    residual = np.sum(dem_cols, axis=0) - np.sum(ren_cols, axis=0) - dams
    base = np.array([merit_price(costs[:, t], caps, residual[t]) for t in range(hours)])
    price_cols = [base * (1 + ar1(rng, hours, 0.9, 0.02)) for _ in range(3)]
    write_series(os.path.join(out, "timeseries", "price_forecast.csv"), ["z1", "z2", "z3"], price_cols)

    # Ratings: DC flows of a pro-rata reference dispatch sampled over the year.
    nb = len(buses)
    br = [(bus_ix[int(r["from_bus"])], bus_ix[int(r["to_bus"])], float(r["x_pu"])) for r in branch_rows]
    ptdf = ptdf_matrix(nb, br, bus_ix[69])
    ref = reference_flows(
        ptdf,
        np.array([zone_of(b) for b in buses]),
        [(bus_ix[int(r[1][1:])], zone_of(int(r[1][1:])), float(r[5])) for r in therm_rows],
        [(bus_ix[b], zone_of(b)) for b in (int(r[1][1:]) for r in ren_rows)],
        ren_cols,
        [(bus_ix[b], zone_of(b), bus_load[b] / zone_load[zone_of(b)]) for b in buses if bus_load[b] > 0],
        dem_cols,
        {pair: NTC_FRACTION * v for pair, v in CORRIDOR_RATING.items()},
    )
    typical = np.quantile(ref, RATING_QUANTILE, axis=0)
    ratings = np.maximum(RATING_FLOOR, np.ceil(RATING_HEADROOM * typical / 5) * 5)
    # A bridge must carry everything installed, or all the load, on its smaller side.
    installed = np.zeros(nb)
    for row in therm_rows + storage_rows:
        installed[bus_ix[int(row[1][1:])]] += float(row[5] if row in therm_rows else row[4])
    for k, col in zip((int(r[1][1:]) for r in ren_rows), ren_cols):
        installed[bus_ix[k]] += max(col)
    peak = np.zeros(nb)
    for b in buses:
        if bus_load[b] > 0:
            peak[bus_ix[b]] = bus_load[b] / zone_load[zone_of(b)] * max(dem_cols[zone_of(b) - 1])
    graph = nx.MultiGraph()
    graph.add_nodes_from(range(nb))
    for k, (f, t, _) in enumerate(br):
        graph.add_edge(f, t, key=k)
    for f, t in nx.bridges(nx.Graph(graph)):
        if graph.number_of_edges(f, t) > 1:
            continue
        cut = graph.copy()
        cut.remove_edge(f, t)
        side = min(nx.connected_components(cut), key=len)
        need = max(installed[list(side)].sum(), peak[list(side)].sum())
        k = next(iter(graph[f][t]))
        ratings[k] = max(ratings[k], np.ceil(RATING_HEADROOM * need / 5) * 5)
    for pair, target in CORRIDOR_RATING.items():
        members = [k for k, (f, t, _) in enumerate(br) if tuple(sorted((zone_of(buses[f]), zone_of(buses[t])))) == pair]
        weights = 0.5 / len(members) + 0.5 * typical[members] / typical[members].sum()
        shares = np.round(target * weights, 3)
        shares[-1] = round(target - shares[:-1].sum(), 3)
        ratings[members] = shares
    write_rows(
        os.path.join(out, "branches.csv"),
        ["id", "from_bus", "to_bus", "reactance", "rating", "is_transformer"],
        [[f"l{k + 1}", f"b{r['from_bus']}", f"b{r['to_bus']}", r["x_pu"], fmt(ratings[k]),
          "1" if float(r["tap"]) != 0 else "0"] for k, r in enumerate(branch_rows)],
    )

    manifest = {
        "name": "ieee118-3z",
        "horizon": hours,
        "noise_sigma": 0.025,
        "ntc_fraction": NTC_FRACTION,
        "seed": SEED,
        "storage_bids": {"sigma_pd": 0.0, "sigma_pc": None},
        "notes": [
            "Topology: IEEE 118-bus case (118 buses, 186 branches, 9 transformers).",
            "Branch ratings are synthetic: 1.25 x the 98th percentile of DC flows from a reference dispatch "
            "(renewables at forecast, thermal units sharing their zone's residual load pro rata to capacity, "
            "every corridor at -NTC, 0 and +NTC) sampled every 5 hours, rounded up to 5 MW with a 100 MW floor. "
            "Radial branches carry 1.25 x the installed capacity or peak load behind them. Tie-line "
            "ratings split the corridor totals of 1875 MW (z1-z2) and 900 MW (z2-z3) half evenly and half "
            "by reference flow.",
            "Hourly demand, renewable, inflow, fuel and carbon series are synthetic; see tools/build_ieee118_3z.py.",
        ],
    }
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
