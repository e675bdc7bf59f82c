use euroem_core::bidding::{Bid, BidSet, ThermalBids};
use euroem_core::model::{Demand, SpeedClass, SystemModel, ThermalTech, ThermalUnit};
use euroem_core::{clear_market, MarketOptions};
use proptest::prelude::*;

fn instance(offers: &[(f64, f64)], demand: f64, bid_price: f64) -> (SystemModel, BidSet) {
    let mut sys = SystemModel::new("oracle", 1);
    let z = sys.add_zone("Z");
    sys.add_bus("b", z);
    for (i, &(q, _)) in offers.iter().enumerate() {
        sys.thermal.push(ThermalUnit {
            id: format!("g{i}"),
            bus: 0,
            technology: ThermalTech::Gas,
            speed: SpeedClass::Fast,
            p_min: 0.0,
            p_max: q,
            ramp_up: q,
            ramp_down: q,
            marginal_cost: vec![0.0],
            startup_cost: 0.0,
            shutdown_cost: 0.0,
            initially_on: false,
        });
    }
    sys.demands.push(Demand {
        id: "d".into(),
        bus: 0,
        scheduled: vec![demand],
        bid_price,
        shed_cost: bid_price,
        shares: Vec::new(),
    });
    let bids = BidSet {
        horizon: 1,
        thermal: offers
            .iter()
            .map(|&(q, p)| ThermalBids {
                positive: vec![Bid::new(q, p)],
                negative: vec![Bid::default()],
            })
            .collect(),
        storage: Vec::new(),
    };
    (sys, bids)
}

/// Accepts offers cheapest first; the price is set by the partly accepted
/// offer, or by the demand bid when supply runs out below it.
fn merit_order(offers: &[(f64, f64)], demand: f64, bid_price: f64) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..offers.len()).collect();
    order.sort_by(|&a, &b| offers[a].1.total_cmp(&offers[b].1));
    let mut accepted = vec![0.0; offers.len()];
    let mut left = demand;
    let mut price = bid_price;
    for i in order {
        let (q, p) = offers[i];
        if p > bid_price || left <= 0.0 {
            break;
        }
        let take = q.min(left);
        accepted[i] = take;
        left -= take;
        if left <= 0.0 {
            price = p;
        }
    }
    (accepted, price)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn clearing_matches_the_merit_order(
        offers in prop::collection::vec((1.0..200.0f64, 0.0..120.0f64), 1..=6),
        demand in 1.0..600.0f64,
        bid_price in 0.0..150.0f64,
    ) {
        let cheapest = offers.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
        prop_assume!(bid_price > cheapest + 1e-3);
        let mut cum = 0.0;
        for &(q, _) in &offers {
            cum += q;
            prop_assume!((cum - demand).abs() > 1e-3);
        }
        let (sys, bids) = instance(&offers, demand, bid_price);
        let r = clear_market(&bids, &sys, &MarketOptions::default()).unwrap();
        let (expected, price) = merit_order(&offers, demand, bid_price);
        for (g, q) in expected.iter().enumerate() {
            prop_assert!((r.dispatch.thermal[g][0] - q).abs() <= 1e-6, "unit {g}: {} vs {q}", r.dispatch.thermal[g][0]);
        }
        let cleared = r.dispatch.prices.as_ref().unwrap()[0][0];
        prop_assert!((cleared - price).abs() <= 1e-6, "price {cleared} vs {price}");
    }
}
