use std::path::PathBuf;

use euroem_core::model::{SpeedClass, StorageTech};
use euroem_core::load_system;

fn dataset() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ieee118-3z")
}

#[test]
fn bundled_dataset_has_the_reference_topology_and_fleet() {
    let sys = load_system(&dataset()).unwrap();
    assert_eq!(sys.horizon, 8760);
    assert_eq!(sys.zones.len(), 3);
    assert_eq!(sys.buses.len(), 118);
    assert_eq!(sys.branches.len(), 186);
    assert_eq!(sys.branches.iter().filter(|b| b.is_transformer).count(), 9);
    let fast = sys.thermal.iter().filter(|g| g.speed == SpeedClass::Fast).count();
    assert_eq!((fast, sys.thermal.len() - fast), (21, 33));
    assert_eq!(sys.storage.len(), 54);
    assert_eq!(sys.renewable.len(), 54);
    assert!(sys.thermal.iter().filter(|g| g.is_fast()).all(|g| g.p_min == 0.0));
}

#[test]
fn interconnector_capacities_follow_the_forty_percent_rule() {
    let sys = load_system(&dataset()).unwrap();
    let mut ntc: Vec<(String, f64)> = sys
        .interconnectors
        .iter()
        .map(|ic| (ic.id.clone(), ic.ntc_forward))
        .collect();
    ntc.sort_by(|a, b| a.0.cmp(&b.0));
    assert_eq!(ntc.len(), 2);
    assert_eq!(ntc[0].0, "z1-z2");
    assert!((ntc[0].1 - 750.0).abs() < 1e-6);
    assert_eq!(ntc[1].0, "z2-z3");
    assert!((ntc[1].1 - 360.0).abs() < 1e-6);
    for ic in &sys.interconnectors {
        assert_eq!(ic.ntc_forward, ic.ntc_backward);
    }
}

#[test]
fn storage_units_follow_the_technology_table() {
    let sys = load_system(&dataset()).unwrap();
    for s in &sys.storage {
        let inflow = s.inflow.iter().any(|&x| x > 0.0);
        match s.technology {
            StorageTech::HydroDam => assert!(s.pc_max == 0.0 && s.sd_rate == 0.0, "{}", s.id),
            StorageTech::HydroPumped => assert!(s.can_charge() && s.sd_rate == 0.0, "{}", s.id),
            StorageTech::HydroPumpedDaily => assert!(!inflow && s.sd_rate == 0.0, "{}", s.id),
            StorageTech::Battery => assert!(!inflow && s.sw_max == 0.0, "{}", s.id),
        }
    }
}

#[test]
fn truncation_keeps_the_first_hours() {
    let sys = load_system(&dataset()).unwrap();
    let day = sys.truncated(24).unwrap();
    assert_eq!(day.horizon, 24);
    assert_eq!(day.demands[0].scheduled[..], sys.demands[0].scheduled[..24]);
    assert!(sys.truncated(9000).is_err());
}
