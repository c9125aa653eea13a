use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn gmc(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gmc"));
    c.args(args).env_remove("GMC_SEED");
    if let Some(s) = env_seed {
        c.env("GMC_SEED", s);
    }
    c.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn tail_config(out: &Path) -> Value {
    json!({
        "seed": 99,
        "output_dir": out,
        "kernel": { "variant": "l_exact", "L": 0.0, "d": 1 },
        "grid": { "lo": [0.0], "hi": [1.0] },
        "epsilon": [0.1, 0.05],
        "set": [{ "box": { "lo": [0.0], "hi": [1.0] } }],
        "regime": { "regime": "critical" },
        "samples": 3000,
        "t_grid": { "lo": 0.5, "hi": 50.0, "points": 12 }
    })
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "tail.json", &tail_config(&out));
    let first = gmc(&["tail-scan", "-c", &cfg], None);
    assert!(matches!(first.status.code(), Some(0 | 1)), "{first:?}");
    let a = read_dir(&out);
    for name in ["config.json", "manifest.json", "summary.json", "masses.csv", "tail_scan.csv"] {
        assert!(a.contains_key(name), "missing {name}");
    }
    let second = gmc(&["tail-scan", "-c", &cfg], None);
    assert_eq!(first.status.code(), second.status.code());
    assert_eq!(a, read_dir(&out));

    // Worker count does not change results.
    let out2 = tmp.path().join("run2");
    let w = gmc(&["tail-scan", "-c", &cfg, "--set", "workers=3", "--set", &format!("output_dir={}", out2.display())], None);
    assert_eq!(first.status.code(), w.status.code());
    let b = read_dir(&out2);
    for name in ["masses.csv", "tail_scan.csv", "summary.json"] {
        assert_eq!(a[name], b[name], "{name} differs across worker counts");
    }
}

#[test]
fn manifest_records_seed_and_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("k");
    let cfg = write_config(
        tmp.path(),
        "k.json",
        &json!({
            "seed": 5,
            "output_dir": out,
            "kernel": { "variant": "reference", "d": 2 },
            "grid": { "lo": [0.1, 0.1], "hi": [0.4, 0.4], "spacing": 0.1 },
            "epsilon": [0.01]
        }),
    );
    let r = gmc(&["kernel-table", "-c", &cfg], Some("1234"));
    assert_eq!(r.status.code(), Some(0), "{r:?}");
    let m: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], json!(1234));
    assert_eq!(m["seed_from_env"], json!(true));
    assert_eq!(m["command"], json!("kernel-table"));
    let resolved: Value = serde_json::from_slice(&fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], json!(1234));
    let files = m["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["name"] == "sd_table.csv"));
    for f in files {
        let bytes = fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
    let table = fs::read_to_string(out.join("sd_table.csv")).unwrap();
    assert!(table.starts_with("c,s_d\n"));
    assert_eq!(table.lines().count(), 101);
}

#[test]
fn env_seed_changes_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("f");
    let cfg = write_config(
        tmp.path(),
        "f.json",
        &json!({
            "seed": 1,
            "output_dir": out,
            "kernel": { "variant": "l_exact", "L": 0.5, "d": 1 },
            "grid": { "lo": [0.0], "hi": [1.0], "spacing": 0.125 },
            "epsilon": [0.05],
            "samples": 4
        }),
    );
    assert_eq!(gmc(&["sample-field", "-c", &cfg], None).status.code(), Some(0));
    let a = fs::read(out.join("field.csv")).unwrap();
    assert_eq!(gmc(&["sample-field", "-c", &cfg], Some("2")).status.code(), Some(0));
    let b = fs::read(out.join("field.csv")).unwrap();
    assert_ne!(a, b);
    assert_eq!(gmc(&["sample-field", "-c", &cfg], None).status.code(), Some(0));
    assert_eq!(a, fs::read(out.join("field.csv")).unwrap());
    let g = fs::read(out.join("field.gmcf")).unwrap();
    let decoded = gmc_core::io::decode_gmcf(&g).unwrap();
    assert_eq!(decoded.rows.len(), 4);
    assert_eq!(decoded.count(), 8);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");

    // Missing seed.
    let cfg = write_config(tmp.path(), "noseed.json", &json!({ "output_dir": out }));
    assert_eq!(gmc(&["tauberian-demo", "-c", &cfg], None).status.code(), Some(2));

    // Unknown field, malformed override, bad JSON, missing file, usage error.
    let cfg = write_config(tmp.path(), "typo.json", &json!({ "seed": 1, "sampels": 3 }));
    assert_eq!(gmc(&["tauberian-demo", "-c", &cfg], None).status.code(), Some(2));
    let good = write_config(
        tmp.path(),
        "tau.json",
        &json!({
            "seed": 1,
            "output_dir": out,
            "tauberian": { "a": 0.0001, "lambdas": [0.01, 0.00000001], "t_grid": { "lo": 1.0, "hi": 1000.0, "points": 20 } }
        }),
    );
    assert_eq!(gmc(&["tauberian-demo", "-c", &good, "--set", "noequals"], None).status.code(), Some(2));
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{ seed: 1").unwrap();
    assert_eq!(gmc(&["tauberian-demo", "-c", bad.to_str().unwrap()], None).status.code(), Some(2));
    assert_eq!(gmc(&["tauberian-demo", "-c", "/nonexistent/cfg.json"], None).status.code(), Some(2));
    assert_eq!(gmc(&["no-such-command"], None).status.code(), Some(2));
    assert_eq!(gmc(&["--help"], None).status.code(), Some(0));

    // Missing section for the command.
    assert_eq!(gmc(&["bessel-check", "-c", &good], None).status.code(), Some(2));

    // Invalid seed in the environment.
    assert_eq!(gmc(&["tauberian-demo", "-c", &good], Some("abc")).status.code(), Some(2));

    // The Laplace ratio at λ = 1e-8 misses its band: verdict failure.
    let r = gmc(&["tauberian-demo", "-c", &good], None);
    assert_eq!(r.status.code(), Some(1), "{r:?}");
    assert!(String::from_utf8_lossy(&r.stdout).contains("verdict: FAIL"));

    // Grid beyond the dense limit: resource error.
    let cfg = write_config(tmp.path(), "big.json", &tail_config(&out));
    assert_eq!(gmc(&["tail-scan", "-c", &cfg, "--set", "epsilon=[0.00001]"], None).status.code(), Some(3));

    // Supercritical γ is rejected as a config error.
    let r = gmc(&["tail-scan", "-c", &cfg, "--set", "regime={\"regime\":\"subcritical\",\"gamma\":2.0}"], None);
    assert_eq!(r.status.code(), Some(2));

    // A passing command exits 0.
    let k = write_config(
        tmp.path(),
        "k.json",
        &json!({
            "seed": 1,
            "output_dir": out,
            "kernel": { "variant": "reference", "d": 2 },
            "grid": { "lo": [0.1, 0.1], "hi": [0.3, 0.3], "spacing": 0.1 },
            "epsilon": [0.01],
            "kernel_table": { "ratios": 10 }
        }),
    );
    assert_eq!(gmc(&["kernel-table", "-c", &k], None).status.code(), Some(0));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            let text = fs::read_to_string(&p).unwrap();
            gmc_cli::config::resolve(&text, &[], None).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 8);
}
