use std::fs;
use std::path::Path;
use std::process::Command;

use lrvlasov::cli::execute;
use lrvlasov::dense::DenseMatrix;
use lrvlasov::io::{
    decode_lrvs, encode_lrvs, read_diagnostics, read_lrvs, write_lrvs, DiagRow, DiagWriter, RunManifest, DIAG_HEADER,
};
use lrvlasov::scenarios::run::FinalState;
use lrvlasov::scenarios::{ScenarioConfig, ScenarioId};
use proptest::prelude::*;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lrvlasov"))
}

fn exit_code(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn diag_row() -> impl Strategy<Value = DiagRow> {
    (
        finite(),
        prop::array::uniform6(prop::option::of(0..10_000usize)),
        (finite(), finite(), finite()),
        prop::option::of(finite()),
        finite(),
    )
        .prop_map(|(t, ranks, (e, m, en), l2, s)| DiagRow {
            t,
            ranks,
            elec_energy: e,
            mass_rel_err: m,
            energy_rel_err: en,
            l2_err: l2,
            step_seconds: s,
        })
}

proptest! {
    #[test]
    fn lrvs_roundtrip_is_bit_exact((r, c) in (1..20usize, 1..20usize), seed in any::<u64>()) {
        let m = DenseMatrix::from_fn(r, c, |i, j| f64::from_bits(seed.rotate_left((i * 7 + j) as u32) >> 2));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.lrvs");
        write_lrvs(&p, &m).unwrap();
        let back = read_lrvs(&p).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        for (a, b) in back.data().iter().zip(m.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn diag_roundtrip_is_bit_exact(rows in prop::collection::vec(diag_row(), 0..12)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("diag.csv");
        let mut w = DiagWriter::create(&p).unwrap();
        for r in &rows {
            w.append(r).unwrap();
        }
        drop(w);
        let back = read_diagnostics(&p).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
            prop_assert_eq!(a.ranks, b.ranks);
            prop_assert_eq!(a.elec_energy.to_bits(), b.elec_energy.to_bits());
            prop_assert_eq!(a.mass_rel_err.to_bits(), b.mass_rel_err.to_bits());
            prop_assert_eq!(a.energy_rel_err.to_bits(), b.energy_rel_err.to_bits());
            prop_assert_eq!(a.l2_err.map(f64::to_bits), b.l2_err.map(f64::to_bits));
            prop_assert_eq!(a.step_seconds.to_bits(), b.step_seconds.to_bits());
        }
    }
}

#[test]
fn zero_snapshot_layout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("zero.lrvs");
    write_lrvs(&p, &DenseMatrix::zeros(3, 2)).unwrap();
    let mut want = b"LRVS".to_vec();
    for word in [1u32, 2, 3, 2] {
        want.extend_from_slice(&word.to_le_bytes());
    }
    want.extend(std::iter::repeat_n(0u8, 6 * 8));
    assert_eq!(fs::read(&p).unwrap(), want);
    let (dims, vals) = decode_lrvs(&want).unwrap();
    assert_eq!(dims, vec![3, 2]);
    assert!(vals.iter().all(|&x| x == 0.0));
}

#[test]
fn lrvs_reader_validates_header() {
    let good = encode_lrvs(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(decode_lrvs(&magic).is_err());
    let mut big_endian = good.clone();
    big_endian[4..8].copy_from_slice(&1u32.to_be_bytes());
    assert!(decode_lrvs(&big_endian).is_err());
    assert!(decode_lrvs(&good[..good.len() - 1]).is_err());
    assert!(decode_lrvs(&good[..6]).is_err());
    assert!(encode_lrvs(&[2, 3], &[0.0; 5]).is_err());
}

#[test]
fn single_record_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("diag.csv");
    let mut w = DiagWriter::create(&p).unwrap();
    w.append(&DiagRow {
        t: 0.0,
        ranks: [Some(3), Some(4), None, None, None, None],
        elec_energy: 0.5,
        mass_rel_err: 0.0,
        energy_rel_err: 0.0,
        l2_err: None,
        step_seconds: 0.0,
    })
    .unwrap();
    drop(w);
    let text = fs::read_to_string(&p).unwrap();
    let lines: Vec<&str> = text.split_terminator('\n').collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], DIAG_HEADER.join(","));
    assert!(!text.contains('\r'));
    assert_eq!(lines[1].split(',').nth(7).unwrap(), "5.0000000000000000e-1");
}

#[test]
fn exit_codes() {
    assert_eq!(exit_code(&[]), 2);
    assert_eq!(exit_code(&["rotation", "--bogus"]), 2);
    assert_eq!(exit_code(&["swirl", "--eps", "-1"]), 2);
    assert_eq!(exit_code(&["advection4d", "--method", "flowmap"]), 2);
    assert_eq!(exit_code(&["rotation", "--n", "16", "--t-end", "0.1"]), 0);
    // far beyond the stability limit the solution overflows
    assert_eq!(exit_code(&["rotation", "--n", "16", "--cfl", "5", "--t-end", "500"]), 1);
}

fn data_columns(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .map(|l| {
            let mut f: Vec<String> = l.split(',').map(str::to_string).collect();
            f.pop(); // step_seconds
            f
        })
        .collect()
}

#[test]
fn run_directory_contents_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut cfg = ScenarioConfig::new(ScenarioId::Rotation).with_n(&[16]).unwrap();
        cfg.t_end = 0.5;
        cfg.snap_every = 10;
        cfg.out = Some(dir.path().join(name));
        execute(&cfg).unwrap()
    };
    let a = run("a");
    run("b");
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(data_columns(&da.join("diag.csv")), data_columns(&db.join("diag.csv")));

    let manifest = RunManifest::read(&da.join("manifest.json")).unwrap();
    assert_eq!(manifest.exit_code, 0);
    assert_eq!(manifest.steps, a.steps);
    assert_eq!(manifest.config.n, vec![16, 16]);
    let last = manifest.snapshots.last().unwrap();
    assert_eq!(last.step, a.steps);
    let snap = read_lrvs(&da.join(&last.files[0])).unwrap();
    let FinalState::Matrix(f) = &a.state else {
        panic!("expected a matrix state")
    };
    assert_eq!(snap, f.to_dense());
    assert!(fs::read_to_string(da.join("snapshots.csv"))
        .unwrap()
        .starts_with("step,t,file\n"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfgfile = dir.path().join("run.cfg");
    fs::write(&cfgfile, "# sweep\nn = 16\neps = 1e-4\nt_end = 0.2\n").unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args([
            "swirl",
            "--config",
            cfgfile.to_str().unwrap(),
            "--eps",
            "1e-6",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let m = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.config.n, vec![16, 16]);
    assert_eq!(m.config.eps, 1e-6);
    assert_eq!(m.config.t_end, 0.2);
}
