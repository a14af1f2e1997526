//! Replays the checked-in fuzz seeds through every parser.

use std::fs;
use std::path::Path;

use labordemand::io::*;
use labordemand::model::Calibration;

fn replay(target: &str, parse: impl Fn(&str) -> bool) -> (usize, usize) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut entries: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    assert!(!entries.is_empty(), "no seeds for {target}");
    let mut ok = 0;
    for path in &entries {
        let bytes = fs::read(path).unwrap();
        if let Ok(text) = std::str::from_utf8(&bytes) {
            if parse(text) {
                ok += 1;
            }
        }
    }
    (ok, entries.len())
}

fn csv<T: CsvSchema>(text: &str) -> bool {
    parse_csv::<T>(text).is_ok()
}

#[test]
fn every_target_has_a_parsing_seed() {
    let targets: [(&str, fn(&str) -> bool); 16] = [
        ("csv_firm_panel", csv::<FirmRecord>),
        ("csv_markets", csv::<MarketRecord>),
        ("csv_notification_shares", csv::<NotificationShareRecord>),
        ("csv_transitions", csv::<TransitionRecord>),
        ("csv_occupation_employment", csv::<OccupationEmploymentRecord>),
        ("csv_commuting", csv::<CommutingRecord>),
        ("csv_labor_force", csv::<LaborForceRecord>),
        ("csv_adjacency", csv::<AdjacencyRecord>),
        ("csv_zones", csv::<ZoneAssignmentRecord>),
        ("csv_market_tightness", csv::<AdjustedMarketRecord>),
        ("csv_firm_tightness", csv::<FirmTightnessRecord>),
        ("csv_instruments", csv::<InstrumentRecord>),
        ("csv_series", csv::<SeriesRecord>),
        ("csv_counterfactual", csv::<CounterfactualRecord>),
        ("config_toml", |s| PipelineConfig::parse(s).is_ok()),
        ("calibration_json", |s| Calibration::from_json(s).map(|c| c.solve().is_ok()).unwrap_or(false)),
    ];
    for (target, parse) in targets {
        let (ok, total) = replay(target, parse);
        assert!(ok >= 1, "{target}: none of {total} seeds parse");
    }
}

#[test]
fn malformed_seeds_are_rejected() {
    assert_eq!(replay("csv_firm_panel", csv::<FirmRecord>), (1, 3));
    assert_eq!(replay("csv_markets", csv::<MarketRecord>), (1, 2));
    assert_eq!(replay("csv_notification_shares", csv::<NotificationShareRecord>), (1, 2));
    assert_eq!(replay("config_toml", |s| PipelineConfig::parse(s).is_ok()), (2, 3));
}

#[test]
fn emitted_tables_parse_back() {
    let text = "firm_id,year,occupation,region,employment,wage_daily\n1,2012,10011,1,12.5,84.2\n";
    let rows = parse_csv::<FirmRecord>(text).unwrap();
    assert_eq!(to_csv_string(&rows).unwrap(), text);
}
