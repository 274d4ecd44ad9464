use std::time::Instant;

use ladder_qed::model::{DecayChannels, DriveConfig, PowerCalibration, SystemParams};
use ladder_qed::response::transmission;
use ladder_qed::sweep::*;

fn map_spec(nd: usize, np: usize) -> SweepSpec {
    SweepSpec {
        drive_axis: DriveAxis { min: 0.0, max: 1.0, n: nd, scale: DriveScale::Rabi10 },
        probe_axis: Some(ProbeAxis { min_ghz: 6.6, max_ghz: 8.1, n: np }),
        drive_frequency: DriveFrequency::HalfOmega20,
        outputs: vec![Output::TransmissionMap],
        calibration: None,
        channels: DecayChannels::default(),
    }
}

#[test]
fn single_cell_equals_direct_call() {
    let p = SystemParams::transmon();
    let mut s = map_spec(1, 1);
    s.drive_axis.min = 0.5;
    s.drive_axis.max = 0.5;
    s.probe_axis = Some(ProbeAxis { min_ghz: 8.0604, max_ghz: 8.0604, n: 1 });
    let r = run_sweep(&p, &s).unwrap();
    let direct = transmission(&p, &DriveConfig::rabi10(p.omega20() / 2.0, 0.5), 8.0604).unwrap();
    assert!(r.transmission[0].ok);
    assert_eq!(r.transmission[0].t.re.to_bits(), direct.t.re.to_bits());
    assert_eq!(r.transmission[0].t.im.to_bits(), direct.t.im.to_bits());
}

#[test]
fn large_grid_export_shape_and_speed() {
    let p = SystemParams::transmon();
    let start = Instant::now();
    let r = run_sweep(&p, &map_spec(200, 200)).unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "{elapsed:?}");
    assert_eq!(r.failed_cells(), 0);
    let text = export(&r, ExportFormat::Long).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], LONG_HEADER);
    assert_eq!(data.len(), 40_001);
    for l in &data[1..] {
        let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((f[4] - f[2].hypot(f[3])).abs() <= 1e-15);
        assert_eq!(f[5], 0.0);
    }
    let m = export(&r, ExportFormat::Matrix).unwrap();
    assert_eq!(m.lines().filter(|l| !l.starts_with('#')).count(), 201);
}

#[test]
fn long_export_round_trips_byte_for_byte() {
    let p = SystemParams::transmon();
    let mut s = map_spec(7, 9);
    s.drive_frequency = DriveFrequency::Explicit(7.3);
    let r = run_sweep(&p, &s).unwrap();
    let a = export(&r, ExportFormat::Long).unwrap();
    let back = parse_long(&a).unwrap();
    assert_eq!(export(&back, ExportFormat::Long).unwrap(), a);
    assert!(parse_long(&a.replacen(",0\n", ",7\n", 1)).is_err());
    assert!(parse_long("garbage").is_err());
}

#[test]
fn independent_of_thread_count() {
    let p = SystemParams::transmon();
    let s = map_spec(24, 31);
    let base = export(&run_sweep_threads(&p, &s, 1).unwrap(), ExportFormat::Long).unwrap();
    for n in [2, 3, 8] {
        assert_eq!(export(&run_sweep_threads(&p, &s, n).unwrap(), ExportFormat::Long).unwrap(), base);
    }
}

#[test]
fn refinement_keeps_coincident_points() {
    let p = SystemParams::transmon();
    let coarse = run_sweep(&p, &map_spec(6, 11)).unwrap();
    let fine = run_sweep(&p, &map_spec(11, 21)).unwrap();
    for i in 0..6 {
        for j in 0..11 {
            assert_eq!(coarse.drive_values[i], fine.drive_values[2 * i]);
            assert_eq!(coarse.probe_values[j], fine.probe_values[2 * j]);
            let a = coarse.cell(i, j).unwrap().t;
            let b = fine.cell(2 * i, 2 * j).unwrap().t;
            assert!((a - b).norm() < 1e-12);
        }
    }
}

#[test]
fn dbm_axis_uses_calibration() {
    let p = SystemParams::transmon();
    let mut s = map_spec(3, 5);
    s.drive_axis = DriveAxis { min: -120.0, max: -100.0, n: 3, scale: DriveScale::Dbm };
    s.drive_frequency = DriveFrequency::Omega10;
    s.calibration = Some(PowerCalibration::transmon());
    s.outputs = vec![Output::TransmissionMap, Output::Populations, Output::Sidebands];
    let r = run_sweep(&p, &s).unwrap();
    assert!((r.rows[1].rabi10 - 0.113).abs() < 1e-12);
    let table = export_table(&r, Output::Sidebands).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 1 + 6 * 3);
}

#[test]
fn dressed_outputs_track_drive() {
    let p = SystemParams::transmon();
    let mut s = map_spec(5, 2);
    s.probe_axis = None;
    s.outputs = vec![Output::DressedEnergies, Output::Overlaps, Output::Populations];
    let r = run_sweep(&p, &s).unwrap();
    for row in &r.rows {
        let pops = row.bare_populations.unwrap();
        assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let o = row.overlaps.unwrap();
        for mu in 0..3 {
            assert!(((0..3).map(|j| o[(j, mu)]).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    assert!(export(&r, ExportFormat::Long).is_err());
}
