use proptest::prelude::*;

use pvfc::formats::*;
use pvfc::PvfcError;
use pvfc_core::evaluation::{ScoreRow, ScoreTable, SkillRow};
use pvfc_core::features::{PixelRanking, RankEntry};
use pvfc_core::geo_solar::{GeoPoint, PanelOrientation};
use pvfc_core::ingestion::{Cell, GridStack, NwpRun, SiteMetadata};
use pvfc_core::regression::{Coefficients, FitDiagnostics, FitMethod};
use pvfc_core::{NativeSeries, Timestamp, Unit};

fn t0() -> Timestamp {
    Timestamp::from_civil(2016, 6, 1, 0, 0, 0)
}

fn err_text<T: std::fmt::Debug>(r: Result<T, PvfcError>) -> String {
    r.expect_err("expected an error").to_string()
}

fn roundtrip_production(sites: &[(String, NativeSeries)]) -> Vec<(String, NativeSeries)> {
    let mut buf = Vec::new();
    write_production(&mut buf, sites).unwrap();
    read_production(buf.as_slice(), "prod.csv").unwrap()
}

#[test]
fn two_days_of_ten_minute_rows() {
    let mut text = String::from("site_id,timestamp_utc,power_mw\n");
    for i in 0..288 {
        text.push_str(&format!("A,{},{}\n", t0().add_seconds(600 * i), (i % 7) as f64 * 0.1));
    }
    let parsed = read_production(text.as_bytes(), "prod.csv").unwrap();
    assert_eq!(parsed.len(), 1);
    let (id, s) = &parsed[0];
    assert_eq!(id, "A");
    assert_eq!(s.len(), 288);
    assert_eq!(s.step_seconds, 600);
    assert_eq!(s.unit, Unit::MegaWatt);
    assert!(s.valid.iter().all(|v| *v));
}

#[test]
fn gaps_and_empty_fields_are_masked() {
    let text = "site_id,timestamp_utc,power_mw\n\
                A,2016-06-01T00:00:00Z,1\n\
                A,2016-06-01T00:10:00Z,\n\
                A,2016-06-01T00:40:00Z,4\n";
    let (_, s) = &read_production(text.as_bytes(), "p").unwrap()[0];
    assert_eq!(s.len(), 5);
    assert_eq!(s.valid, vec![true, false, false, false, true]);
    assert_eq!(s.values[4], 4.0);
}

#[test]
fn columns_may_come_in_any_order() {
    let text = "power_mw,site_id,timestamp_utc\n2,B,2016-06-01T00:00:00Z\n3,B,2016-06-01T00:15:00Z\n";
    let (id, s) = &read_production(text.as_bytes(), "p").unwrap()[0];
    assert_eq!(id, "B");
    assert_eq!(s.values, vec![2.0, 3.0]);
    assert_eq!(s.step_seconds, 900);
}

#[test]
fn non_numeric_value_names_its_line() {
    let text = "site_id,timestamp_utc,power_mw\nA,2016-06-01T00:00:00Z,1\nA,2016-06-01T00:10:00Z,abc\n";
    let msg = err_text(read_production(text.as_bytes(), "prod.csv"));
    assert!(msg.contains("prod.csv: line 3"), "{msg}");
    assert!(msg.contains("power_mw"), "{msg}");
}

#[test]
fn empty_file_has_no_data_rows() {
    assert!(err_text(read_production("".as_bytes(), "p")).contains("no data rows"));
    assert!(err_text(read_production("site_id,timestamp_utc,power_mw\n".as_bytes(), "p")).contains("no data rows"));
}

#[test]
fn missing_header_column_is_an_error() {
    let msg = err_text(read_production("site_id,time,power_mw\nA,2016-06-01T00:00:00Z,1\n".as_bytes(), "p"));
    assert!(msg.contains("missing column \"timestamp_utc\""), "{msg}");
}

#[test]
fn bad_timestamps_and_duplicates_are_rejected() {
    let bad_ts = "site_id,timestamp_utc,power_mw\nA,yesterday,1\n";
    assert!(err_text(read_production(bad_ts.as_bytes(), "p")).contains("line 2"));
    let dup = "site_id,timestamp_utc,power_mw\nA,2016-06-01T00:00:00Z,1\nA,2016-06-01T00:00:00Z,2\n";
    assert!(err_text(read_production(dup.as_bytes(), "p")).contains("duplicate timestamp"));
    let off = "site_id,timestamp_utc,power_mw\nA,2016-06-01T00:00:00Z,1\nA,2016-06-01T00:10:00Z,1\nA,2016-06-01T00:25:00Z,1\n";
    assert!(err_text(read_production(off.as_bytes(), "p")).contains("line 4"));
}

#[test]
fn sites_keep_file_order() {
    let text = "site_id,timestamp_utc,power_mw\nZ,2016-06-01T00:00:00Z,1\nA,2016-06-01T00:00:00Z,2\nZ,2016-06-01T00:15:00Z,1\n";
    let ids: Vec<String> = read_production(text.as_bytes(), "p").unwrap().into_iter().map(|(id, _)| id).collect();
    assert_eq!(ids, vec!["Z", "A"]);
}

#[test]
fn metadata_roundtrip_and_validation() {
    let metas = vec![
        SiteMetadata::new("S1", GeoPoint::new(44.5, 4.25).unwrap(), PanelOrientation::new(30.0, 180.0).unwrap(), 1e4, 10.0)
            .unwrap(),
        SiteMetadata::new("S2", GeoPoint::new(-12.125, 170.0).unwrap(), PanelOrientation::new(0.0, 0.0).unwrap(), 512.5, 0.1)
            .unwrap(),
    ];
    let mut buf = Vec::new();
    write_metadata(&mut buf, &metas).unwrap();
    assert_eq!(read_metadata(buf.as_slice(), "m").unwrap(), metas);

    let zero_area = "site_id,lat,lon,tilt_deg,azimuth_deg,panel_area_m2,installed_power_mw\nS1,44,4,30,180,0,1\n";
    assert!(err_text(read_metadata(zero_area.as_bytes(), "m")).contains("line 2"));
}

fn small_grid() -> GridStack {
    let lat = vec![44.0, 44.0625, 44.125];
    let lon = vec![4.0, 4.0625, 4.125];
    let frames: Vec<f64> = (0..18).map(|i| i as f64 * 12.5).collect();
    let mut valid = vec![true; 18];
    valid[4] = false;
    GridStack::new(lat, lon, t0(), 2, frames, valid).unwrap()
}

#[test]
fn satellite_roundtrip() {
    let g = small_grid();
    let mut buf = Vec::new();
    write_satellite(&mut buf, &g).unwrap();
    let back = read_satellite(buf.as_slice(), "sat").unwrap();
    assert_eq!(back, g);
    assert_eq!(back.n_times(), 2);
    assert_eq!(back.value(0, Cell::new(1, 1)), None);
}

#[test]
fn satellite_errors() {
    let header = "timestamp_utc,lat,lon,ghi_wm2\n";
    let neg = format!("{header}2016-06-01T00:00:00Z,44,4,-1\n");
    assert!(err_text(read_satellite(neg.as_bytes(), "s")).contains("negative GHI"));
    let dup = format!("{header}2016-06-01T00:00:00Z,44,4,1\n2016-06-01T00:00:00Z,44,4,2\n");
    assert!(read_satellite(dup.as_bytes(), "s").is_err());
}

fn nwp_run(issue: Timestamp, scale: f64) -> NwpRun {
    let leads: Vec<u32> = (0..=3).collect();
    let (lat, lon) = (vec![44.0, 44.1], vec![4.0, 4.1, 4.2]);
    let ssrd: Vec<f64> = (0..24).map(|i| (i / 6) as f64 * 1.5e6 * scale + (i % 6) as f64).collect();
    NwpRun::new("ECMWF".into(), issue, leads, lat, lon, ssrd, vec![true; 24]).unwrap()
}

#[test]
fn nwp_roundtrip_two_runs() {
    let runs = vec![nwp_run(t0(), 1.0), nwp_run(t0().add_seconds(12 * 3600), 0.5)];
    let mut buf = Vec::new();
    write_nwp(&mut buf, &runs).unwrap();
    let back = read_nwp(buf.as_slice(), "nwp").unwrap();
    assert_eq!(back, runs);
}

#[test]
fn nwp_rejects_decreasing_and_single_lead_runs() {
    let header = "model,issue_time_utc,lead_hours,lat,lon,ssrd_jm2\n";
    let dec = format!("{header}E,2016-06-01T00:00:00Z,0,44,4,0\nE,2016-06-01T00:00:00Z,1,44,4,100\nE,2016-06-01T00:00:00Z,2,44,4,50\n");
    assert!(read_nwp(dec.as_bytes(), "n").is_err());
    let single = format!("{header}E,2016-06-01T00:00:00Z,0,44,4,0\n");
    let msg = err_text(read_nwp(single.as_bytes(), "n"));
    assert!(msg.contains("lead"), "{msg}");
}

#[test]
fn coefficients_roundtrip() {
    let c = Coefficients {
        intercept: 0.1 + 0.2,
        names: vec!["prod:S1:lag0".into(), "sat:3:4".into(), "nwp:S1:ECMWF".into()],
        weights: vec![1.0 / 3.0, -2.5e-17, 0.0],
        standardization: vec![],
        diagnostics: FitDiagnostics { method: FitMethod::Ols, iterations: 0, converged: true, objective_trace: vec![], warnings: vec![] },
    };
    let mut buf = Vec::new();
    write_coefficients(&mut buf, &c).unwrap();
    assert!(String::from_utf8(buf.clone()).unwrap().starts_with("column_name,weight\n__intercept__,"));
    let back = read_coefficients(buf.as_slice(), "c").unwrap();
    assert_eq!(back.intercept.to_bits(), c.intercept.to_bits());
    assert_eq!(back.names, c.names);
    assert_eq!(back.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>(), c.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>());
}

#[test]
fn ranking_roundtrip() {
    let ranking = PixelRanking {
        site_id: "S1".into(),
        lag_steps: 2,
        radius_km: 50.0,
        entries: vec![
            RankEntry { cell: Cell::new(0, 1), lat: 44.0, lon: 4.0625, distance_km: 3.25, pearson_r: 0.91 },
            RankEntry { cell: Cell::new(0, 0), lat: 44.0, lon: 4.0, distance_km: 7.5, pearson_r: -0.4 },
        ],
    };
    let mut buf = Vec::new();
    write_ranking(&mut buf, &ranking).unwrap();
    let rows = read_ranking(buf.as_slice(), "r").unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], RankRow { rank: 1, lat: 44.0, lon: 4.0625, distance_km: 3.25, pearson_r: 0.91 });
    assert_eq!(rows[1].rank, 2);
}

#[test]
fn scores_roundtrip_and_horizon_view() {
    let table = ScoreTable {
        rows: vec![
            ScoreRow { model: "AR".into(), site: "ALL".into(), horizon_steps: 1, rmse_wm2: 50.0, n_samples: 10 },
            ScoreRow { model: "AR".into(), site: "ALL".into(), horizon_steps: 2, rmse_wm2: 60.0, n_samples: 10 },
            ScoreRow { model: "ARST".into(), site: "ALL".into(), horizon_steps: 1, rmse_wm2: 40.0, n_samples: 10 },
            ScoreRow { model: "ARST".into(), site: "S1".into(), horizon_steps: 1, rmse_wm2: 0.0, n_samples: 5 },
        ],
        skills: vec![
            SkillRow { model: "AR".into(), reference: "AR".into(), site: "ALL".into(), horizon_steps: 1, skill: 0.0 },
            SkillRow { model: "ARST".into(), reference: "AR".into(), site: "ALL".into(), horizon_steps: 1, skill: 0.2 },
        ],
    };
    let recs = score_records(&table, Some("AR"));
    assert_eq!(recs[0].horizon_minutes, 15);
    assert_eq!(recs[1].skill, None);
    assert_eq!(recs[2].skill, Some(0.2));
    let mut buf = Vec::new();
    write_scores(&mut buf, &recs).unwrap();
    assert_eq!(read_scores(buf.as_slice(), "s").unwrap(), recs);

    let mut by_h = Vec::new();
    write_scores_by_horizon(&mut by_h, &recs, "ALL").unwrap();
    let text = String::from_utf8(by_h).unwrap();
    assert_eq!(text, "horizon_minutes,model,rmse_wm2,skill\n15,AR,50,0\n15,ARST,40,0.2\n30,AR,60,\n");
}

#[test]
fn timestamps_parse_in_utc() {
    assert_eq!(parse_timestamp("2016-06-01T00:00:00Z").unwrap(), t0());
    assert_eq!(parse_timestamp("2016-06-01T02:00:00+02:00").unwrap(), t0());
    assert!(parse_timestamp("2016-06-01").is_err());
}

fn native_strategy() -> impl Strategy<Value = (i64, Vec<Option<f64>>)> {
    (
        prop_oneof![Just(600i64), Just(900), Just(300)],
        proptest::collection::vec(proptest::option::weighted(0.8, -1e3f64..1e3), 1..60),
    )
}

proptest! {
    #[test]
    fn production_roundtrip_is_identity((step, vals) in native_strategy()) {
        // Leading and trailing masked points are not representable, since
        // the series extent comes from the rows present.
        let mut vals = vals;
        if vals[0].is_none() { vals[0] = Some(1.0); }
        let last = vals.len() - 1;
        if vals[last].is_none() { vals[last] = Some(2.0); }
        let valid: Vec<bool> = vals.iter().map(Option::is_some).collect();
        let values: Vec<f64> = vals.iter().map(|v| v.unwrap_or(0.0)).collect();
        let s = NativeSeries::new(t0(), step, values, valid, Unit::MegaWatt).unwrap();
        let sites = vec![("A".to_string(), s)];
        let once = roundtrip_production(&sites);
        if vals.len() > 1 {
            prop_assert_eq!(&once, &sites);
        }
        prop_assert_eq!(roundtrip_production(&once), once);
    }

    #[test]
    fn satellite_roundtrip_is_identity(vals in proptest::collection::vec(proptest::option::of(0.0f64..1400.0), 8)) {
        let valid: Vec<bool> = vals.iter().map(Option::is_some).collect();
        let frames: Vec<f64> = vals.iter().map(|v| v.unwrap_or(0.0)).collect();
        let g = GridStack::new(vec![10.0, 10.5], vec![-3.0, -2.25], t0(), 2, frames, valid).unwrap();
        let mut buf = Vec::new();
        write_satellite(&mut buf, &g).unwrap();
        // A frame whose cells are all masked still appears in the file, so
        // the time axis survives.
        prop_assert_eq!(read_satellite(buf.as_slice(), "s").unwrap(), g);
    }
}
