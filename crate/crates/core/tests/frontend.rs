//! Golden-file tests for config parsing, report serialization and the CLI.
//!
//! Set `XBARSIM_BLESS=1` to rewrite the expected files after an intended
//! output change.

use std::path::{Path, PathBuf};
use std::process::Command;

use xbarsim::frontend::{
    emit_report, parse_config, parse_config_file, run_experiment, ConfigError, ExperimentKind,
    Format, Provenance,
};
use xbarsim::Error;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn check_golden(name: &str, actual: &[u8]) {
    let path = golden_dir().join(name);
    if std::env::var_os("XBARSIM_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        expected == actual,
        "{name} differs from golden output:\n{}",
        String::from_utf8_lossy(actual)
    );
}

fn report(cfg: &str, kind: ExperimentKind, format: Format) -> Vec<u8> {
    let cfg = parse_config_file(&golden_dir().join(cfg)).unwrap();
    emit_report(&run_experiment(&cfg, kind).unwrap(), format).unwrap()
}

#[test]
fn golden_reports() {
    let cases = [
        ("op.cfg", ExperimentKind::Op, Format::Json, "op.json"),
        ("op.cfg", ExperimentKind::Op, Format::Csv, "op.csv"),
        ("sar.cfg", ExperimentKind::Sar, Format::Json, "sar.json"),
        ("sar.cfg", ExperimentKind::Sar, Format::Csv, "sar.csv"),
        (
            "energy.cfg",
            ExperimentKind::Energy,
            Format::Json,
            "energy.json",
        ),
        (
            "energy.cfg",
            ExperimentKind::Energy,
            Format::Text,
            "energy.txt",
        ),
    ];
    for (cfg, kind, format, expected) in cases {
        let first = report(cfg, kind, format);
        assert_eq!(
            first,
            report(cfg, kind, format),
            "{expected} not deterministic"
        );
        check_golden(expected, &first);
    }
}

#[test]
fn golden_canonical_configs() {
    for name in ["op", "sar", "energy"] {
        let cfg = parse_config_file(&golden_dir().join(format!("{name}.cfg"))).unwrap();
        let text = cfg.emit();
        check_golden(&format!("{name}.canonical"), text.as_bytes());
        let again = parse_config(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.emit(), text);
        assert_eq!(again.digest(), cfg.digest());
    }
}

#[test]
fn energy_report_values() {
    let bytes = report("energy.cfg", ExperimentKind::Energy, Format::Json);
    let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    let e = v["payload"]["e_crossbar_j"].as_f64().unwrap();
    assert!((e - 3.1e-12).abs() < 1e-24, "{e}");
    assert_eq!(v["payload"]["assumptions"]["e_mac_source"], "explicit");
    assert_eq!(v["payload"]["assumptions"]["e_act_source"], "default");
}

#[test]
fn engineering_suffixes() {
    let cfg = parse_config(
        "neuron.ib = 5u\nneuron.r_load = 20k\nneuron.ro_b2 = 1M\nenergy.t_eval = 10n\n",
    )
    .unwrap();
    assert_eq!(cfg.neuron.ib, 5e-6);
    assert_eq!(cfg.neuron.r_load, 20e3);
    assert_eq!(cfg.neuron.ro_b2, 1e6);
    assert_eq!(cfg.energy.t_eval, 10e-9);
    assert_eq!(cfg.provenance_of("neuron.ib"), Some(Provenance::Explicit));
    assert_eq!(cfg.provenance_of("neuron.ib2"), Some(Provenance::Default));
}

#[test]
fn error_locations() {
    match parse_config("neuron.ib = 5 potato\n").unwrap_err() {
        ConfigError::Unit { path, line, .. } => assert_eq!((path.as_str(), line), ("neuron.ib", 1)),
        other => panic!("{other:?}"),
    }
    match parse_config("neuron = {\n  vddd = 1\n}\n").unwrap_err() {
        ConfigError::UnknownKey {
            path,
            line,
            suggestion,
            ..
        } => {
            assert_eq!(path, "neuron.vddd");
            assert_eq!(line, 2);
            assert_eq!(suggestion.as_deref(), Some("neuron.vdd"));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        parse_config("seed = [1,").unwrap_err(),
        ConfigError::Syntax { .. }
    ));
    assert!(matches!(
        parse_config("sar.vref_in = true").unwrap_err(),
        ConfigError::Type { .. }
    ));
}

#[test]
fn missing_section_is_a_config_error() {
    let err = run_experiment(&parse_config("").unwrap(), ExperimentKind::Infer).unwrap_err();
    assert!(
        matches!(err, Error::Config(ConfigError::MissingSection(_))),
        "{err}"
    );
    assert_eq!(err.exit_code(), 2);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_xbarsim"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };
    let unknown = write("unknown.cfg", "neuron.vddd = 1\n");
    let overdriven = write("over.cfg", "op.i_in = 6u\n");
    let no_dir = dir.path().join("nope/out.json");
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["op"], 0),
        (vec!["energy", "--config", &unknown], 2),
        (vec!["op", "--format", "yaml"], 2),
        (vec!["frobnicate"], 2),
        (vec!["infer"], 2),
        (vec!["smallsignal", "--format", "csv"], 2),
        (vec!["op", "--config", &overdriven], 3),
        (vec!["op", "--config", "/nonexistent/x.cfg"], 4),
        (vec!["op", "--out", no_dir.to_str().unwrap()], 4),
    ];
    for (args, want) in cases {
        let out = cli(&args);
        assert_eq!(
            out.status.code(),
            Some(want),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn cli_writes_the_library_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("op.json");
    let cfg = golden_dir().join("op.cfg");
    let status = cli(&[
        "op",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(0));
    assert_eq!(
        std::fs::read(&out).unwrap(),
        report("op.cfg", ExperimentKind::Op, Format::Json)
    );
}

#[test]
fn seed_override_changes_digest_and_output() {
    let a = cli(&["mc", "--runs", "4", "--seed", "1"]);
    let b = cli(&["mc", "--runs", "4", "--seed", "2"]);
    let c = cli(&["mc", "--runs", "4", "--seed", "1"]);
    assert_eq!(a.stdout, c.stdout);
    assert_ne!(a.stdout, b.stdout);
}
