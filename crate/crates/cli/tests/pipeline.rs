use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pgdl_cli::{
    cmd_compare, cmd_evaluate, cmd_generate_data, cmd_reconstruct, cmd_train, CliError, Dataset, ExperimentConfig,
    Method, ReconManifest, Split,
};
use pgdl_core::physics::apply_eh;
use pgdl_core::train::load_checkpoint;
use tempfile::TempDir;

fn tiny(overrides: &[&str]) -> ExperimentConfig {
    let base = [
        "data.height=16",
        "data.width=16",
        "data.coils=2",
        "data.n_train=3",
        "data.n_test=2",
        "sampling.n_acs=4",
        "model.unrolls=2",
        "model.cg_iters=3",
        "model.blocks=1",
        "model.features=4",
        "train.epochs=2",
        "eval.cg_sense_iters=10",
    ];
    let all: Vec<String> = base.iter().chain(overrides).map(|s| s.to_string()).collect();
    ExperimentConfig::from_json("{}", &all).unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = fs::read(&p).unwrap();
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

fn log_rows(run: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(run.join("log.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn generate_data_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny(&[]);
    let a = cmd_generate_data(&cfg, &tmp.path().join("a")).unwrap();
    cmd_generate_data(&cfg, &tmp.path().join("b")).unwrap();
    assert_eq!(a.manifest.slices.len(), 5);
    let fa = read_dir_sorted(&tmp.path().join("a"));
    let fb = read_dir_sorted(&tmp.path().join("b"));
    assert_eq!(fa.len(), 6);
    assert_eq!(fa, fb);
    let other = tiny(&["data.seed=9"]);
    cmd_generate_data(&other, &tmp.path().join("c")).unwrap();
    assert_ne!(fa, read_dir_sorted(&tmp.path().join("c")));
}

#[test]
fn empty_training_split_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let err = cmd_generate_data(&tiny(&["data.n_train=0"]), tmp.path()).unwrap_err();
    assert!(err.to_string().contains("empty"), "{err}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let err = ExperimentConfig::from_json(r#"{"data": {"hieght": 3}}"#, &[]).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 2);
    assert!(ExperimentConfig::from_json("{}", &["sampling.nope=1".into()]).is_err());
}

#[test]
fn training_refuses_acquisition_that_differs_from_the_dataset() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    cmd_generate_data(&tiny(&[]), &data).unwrap();
    for over in ["sampling.accel=2", "sampling.n_acs=6", "data.noise_sigma=0.5"] {
        let err = cmd_train(&tiny(&[over]), &data, &tmp.path().join("run"), None, false).unwrap_err();
        assert!(matches!(err, CliError::Config(_)), "{over}: {err}");
    }
}

#[test]
fn log_has_one_row_per_step_and_checkpoints_record_k() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny(&[]);
    let data = tmp.path().join("data");
    cmd_generate_data(&cfg, &data).unwrap();
    let mut seen = Vec::new();
    for k in [1usize, 3] {
        let run = tmp.path().join(format!("k{k}"));
        let ck = cmd_train(&cfg, &data, &run, Some(k), false).unwrap();
        let rows = log_rows(&run);
        assert_eq!(rows.len(), 2 * 3 * k);
        assert_eq!(ck.state.step as usize, rows.len());
        let steps: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
        assert_eq!(steps, (1..=rows.len()).collect::<Vec<_>>());
        let stored = load_checkpoint(&run.join("checkpoint.bin")).unwrap();
        assert_eq!(stored.config.k, k);
        assert_eq!(stored.metadata["k"], k);
        let back: ExperimentConfig = serde_json::from_value(stored.metadata["experiment"].clone()).unwrap();
        back.validate().unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["mask_families"].as_array().unwrap().len(), 3);
        seen.push(stored.metadata.clone());
    }
    assert_ne!(seen[0], seen[1]);
}

#[test]
fn resumed_training_continues_the_step_counter_exactly() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    cmd_generate_data(&tiny(&[]), &data).unwrap();
    let straight = tmp.path().join("straight");
    let full = cmd_train(&tiny(&["train.epochs=3"]), &data, &straight, Some(3), false).unwrap();

    let split = tmp.path().join("split");
    let first = cmd_train(&tiny(&["train.epochs=1"]), &data, &split, Some(3), false).unwrap();
    assert_eq!(first.state.step, 9);
    let resumed = cmd_train(&tiny(&["train.epochs=3"]), &data, &split, Some(3), true).unwrap();
    assert_eq!(resumed.state.step, full.state.step);
    assert_eq!(resumed.state.params, full.state.params);

    let strip = |rows: Vec<Vec<String>>| -> Vec<Vec<String>> { rows.into_iter().map(|r| r[..6].to_vec()).collect() };
    assert_eq!(strip(log_rows(&split)), strip(log_rows(&straight)));

    let err = cmd_train(&tiny(&["train.epochs=3", "train.lr=0.1"]), &data, &split, Some(3), true).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");
}

#[test]
fn zero_filled_output_equals_adjoint_of_measurements() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny(&[]);
    let data = tmp.path().join("data");
    let ds = cmd_generate_data(&cfg, &data).unwrap();
    let out = tmp.path().join("zf");
    cmd_reconstruct(&cfg, &data, Method::ZeroFilled, None, &out, None).unwrap();
    for s in ds.load_split(Split::Test).unwrap() {
        let expected = apply_eh(&s.y, &s.data.coils, &s.entry.omega).unwrap();
        let bytes = fs::read(out.join(format!("{:04}.bin", s.entry.id))).unwrap();
        assert_eq!(bytes.len(), 8 * 2 * 16 * 16 * (1 + 2));
        let vals: Vec<f64> = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        for (i, v) in expected.data().iter().enumerate() {
            assert_eq!(vals[i], v.re);
            assert_eq!(vals[256 + i], v.im);
        }
        assert!(out.join(format!("{:04}.pgm", s.entry.id)).exists());
    }
}

#[test]
fn reconstruction_is_deterministic_and_checks_dimensions() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny(&["train.epochs=1"]);
    let data = tmp.path().join("data");
    cmd_generate_data(&cfg, &data).unwrap();
    let run = tmp.path().join("run");
    cmd_train(&cfg, &data, &run, None, false).unwrap();
    let ck = run.join("checkpoint.bin");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_reconstruct(&cfg, &data, Method::Unrolled, Some(&ck), &a, None).unwrap();
    cmd_reconstruct(&cfg, &data, Method::Unrolled, Some(&ck), &b, None).unwrap();
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
    let rm: ReconManifest = serde_json::from_str(&fs::read_to_string(a.join("recon.json")).unwrap()).unwrap();
    assert_eq!(rm.config, cfg);

    // CG-SENSE does not touch the checkpoint argument.
    let bogus = tmp.path().join("missing.bin");
    cmd_reconstruct(&cfg, &data, Method::CgSense, Some(&bogus), &tmp.path().join("cg"), None).unwrap();
    assert!(matches!(
        cmd_reconstruct(&cfg, &data, Method::Unrolled, None, &tmp.path().join("x"), None),
        Err(CliError::Config(_))
    ));

    let wide = tiny(&["data.width=24"]);
    let wide_data = tmp.path().join("wide");
    cmd_generate_data(&wide, &wide_data).unwrap();
    let err = cmd_reconstruct(&wide, &wide_data, Method::Unrolled, Some(&ck), &tmp.path().join("w"), None).unwrap_err();
    assert!(matches!(err, CliError::Data(_)), "{err}");
}

#[test]
fn reference_scored_against_itself_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny(&[]);
    let data = tmp.path().join("data");
    cmd_generate_data(&cfg, &data).unwrap();
    let r = tmp.path().join("ref");
    cmd_reconstruct(&cfg, &data, Method::Reference, None, &r, None).unwrap();
    let ev = cmd_evaluate(&data, &[r], &tmp.path().join("eval")).unwrap();
    for m in &ev.metrics {
        assert!((m.ssim - 1.0).abs() < 1e-12);
        assert!(m.psnr.is_infinite());
    }
    let csv = fs::read_to_string(tmp.path().join("eval/metrics.csv")).unwrap();
    assert!(csv.contains("inf"), "{csv}");
}

#[test]
fn evaluation_lists_missing_slices() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny(&["data.n_test=3"]);
    let data = tmp.path().join("data");
    let ds = cmd_generate_data(&cfg, &data).unwrap();
    let zf = tmp.path().join("zf");
    cmd_reconstruct(&cfg, &data, Method::ZeroFilled, None, &zf, None).unwrap();
    let ids: Vec<usize> = ds.entries(Split::Test).map(|e| e.id).collect();
    fs::remove_file(zf.join(format!("{:04}.bin", ids[1]))).unwrap();
    let err = cmd_evaluate(&data, &[zf], &tmp.path().join("eval")).unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
    assert!(err.to_string().contains(&format!("[{}]", ids[1])), "{err}");
}

#[test]
fn compare_renders_one_row_per_method_in_a_fixed_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny(&["train.epochs=1"]);
    let ev = cmd_compare(&cfg, tmp.path(), Some(&[1, 3])).unwrap();
    let names: Vec<&str> = ev.report.methods.iter().map(|m| m.method.as_str()).collect();
    assert_eq!(names, ["CG-SENSE", "K=1", "K=3"]);
    let table = fs::read_to_string(tmp.path().join("eval/report.txt")).unwrap();
    assert!(table.lines().next().unwrap().contains("PSNR"));
    assert_eq!(table.lines().filter(|l| l.starts_with("K=")).count(), 2);
    let ds = Dataset::open(&tmp.path().join("data")).unwrap();
    assert_eq!(ev.metrics.len(), 3 * ds.entries(Split::Test).count());
}

fn pgdl(args: &[&str], root: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pgdl")).args(args).env("PGDL_OUTPUT_ROOT", root).output().unwrap()
}

const TINY_ARGS: [&str; 20] = [
    "--set", "data.height=16", "--set", "data.width=16", "--set", "data.coils=2", "--set", "data.n_train=2",
    "--set", "data.n_test=1", "--set", "sampling.n_acs=4", "--set", "model.unrolls=1", "--set", "model.blocks=0",
    "--set", "train.epochs=1", "--set", "model.cg_iters=2",
];

#[test]
fn binary_exit_codes_follow_error_classes() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    let with = |extra: &[&str]| -> Vec<String> { TINY_ARGS.iter().chain(extra).map(|s| s.to_string()).collect() };
    let run = |args: Vec<String>| {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        pgdl(&refs, root)
    };

    let ok = run(with(&["generate-data", "--out", "data"]));
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(root.join("data/manifest.json").exists(), "relative paths resolve under the output root");

    assert_eq!(run(with(&["--set", "data.bogus=1", "generate-data", "--out", "d2"])).status.code(), Some(2));
    assert_eq!(run(with(&["train", "--data", "nowhere", "--out", "r"])).status.code(), Some(3));
    let blown = run(with(&["--set", "train.lr=1e200", "--set", "train.epochs=3", "train", "--data", "data", "--out", "r"]));
    assert_eq!(blown.status.code(), Some(4), "{}", String::from_utf8_lossy(&blown.stderr));
    assert_eq!(run(with(&["reconstruct", "--data", "data", "--method", "magic", "--out", "x"])).status.code(), Some(2));
}
