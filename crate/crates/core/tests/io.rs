use std::fs;

use uavsem::env::UavEnv;
use uavsem::harness::{self, ExperimentSpec};
use uavsem::semantics::{CalibrationRow, CalibrationTable};
use uavsem::tqc::{self, AgentCheckpoint, BanditEnv, TqcConfig};
use uavsem::{Error, ScenarioConfig};

fn grid() -> Vec<CalibrationRow> {
    let mut rows = Vec::new();
    for d in [1, 2] {
        for (i, snr_db) in [0.0, 10.0, 20.0].into_iter().enumerate() {
            rows.push(CalibrationRow {
                d,
                snr_db,
                mod_order: 16,
                feature_len: uavsem::semantics::feature_len([3, 375, 1242], d),
                cos_sim: 0.5 + 0.2 * i as f64,
                ms_ssim: 0.4 + 0.25 * i as f64,
            });
        }
    }
    rows
}

#[test]
fn calibration_file_feeds_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("calibration.csv");
    let table = CalibrationTable::from_rows(grid()).unwrap();
    fs::write(&path, table.to_csv_string()).unwrap();
    assert_eq!(CalibrationTable::load(&path).unwrap(), table);

    let spec = ExperimentSpec {
        calibration: Some(path),
        ..ExperimentSpec::default()
    };
    let codec = spec.codec().unwrap();
    let len = uavsem::semantics::feature_len([3, 375, 1242], 1);
    let f = codec.predict(1, 5.0, 16, len);
    assert!((f.cos_sim - 0.6).abs() < 1e-12 && (f.ms_ssim - 0.525).abs() < 1e-12);

    let mut env = UavEnv::with_codec(ScenarioConfig::default(), codec).unwrap();
    let e = harness::evaluate(&mut env, &mut harness::CentroidHeuristic::fixed(1), 0).unwrap();
    assert!(e.summary.min_sss > 0.0);
}

#[test]
fn malformed_calibration_is_rejected() {
    let bad_header = "d,snr,mod_order,feature_len,cos_sim,ms_ssim\n1,0,16,10,0.5,0.5\n";
    assert!(matches!(CalibrationTable::from_csv_reader(bad_header.as_bytes()), Err(Error::Calibration(_))));
    let out_of_range = "d,snr_db,mod_order,feature_len,cos_sim,ms_ssim\n1,0,16,10,0.5,1.5\n";
    assert!(CalibrationTable::from_csv_reader(out_of_range.as_bytes()).is_err());
    let mut dup = grid();
    dup.push(dup[0]);
    assert!(CalibrationTable::from_rows(dup).is_err());
}

#[test]
fn agent_checkpoint_round_trips() {
    let cfg = TqcConfig {
        hidden: vec![16, 16],
        batch_size: 16,
        warmup_steps: 32,
        episodes: 64,
        ..TqcConfig::default()
    };
    let out = tqc::train::<f64, _>(&mut BanditEnv { optimum: 0.1 }, cfg, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.json");
    out.agent.checkpoint().save(&path).unwrap();
    let actor = AgentCheckpoint::load(&path).unwrap().actor::<f64>().unwrap();
    let mut agent = out.agent;
    assert_eq!(actor.deterministic(&[0.0]).unwrap(), agent.act(&[0.0], true).unwrap());
    assert_eq!(out.log.len(), 64);
    assert_eq!(tqc::log_checksum(&out.log).len(), 64);
}

#[test]
fn experiment_file_round_trips() {
    let spec = ExperimentSpec::default().with_seeds(3, 2);
    let text = harness::spec_to_toml(&spec).unwrap();
    assert_eq!(ExperimentSpec::from_toml_str(&text).unwrap(), spec);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(&path, text).unwrap();
    assert_eq!(ExperimentSpec::load(&path).unwrap(), spec);
    assert!(ExperimentSpec::from_toml_str("nonsense = 1").is_err());
}

#[test]
fn sweeps_have_one_row_per_point_and_seed() {
    let spec = ExperimentSpec {
        scenario: ScenarioConfig {
            mission_duration: 60.0,
            ..ScenarioConfig::default()
        },
        ..ExperimentSpec::default()
    }
    .with_seeds(0, 2);
    let rows = harness::run_snr_sweep(&spec).unwrap();
    assert_eq!(rows.len(), spec.snr_grid.len() * 2);
    let csv = harness::to_csv(&rows).unwrap();
    assert!(csv.starts_with("config_hash,seed,snr_db"));
    assert_eq!(csv, harness::to_csv(&harness::run_snr_sweep(&spec).unwrap()).unwrap());
    assert_eq!(harness::run_heatmap(&spec).unwrap().len(), 16 * 2);
}
