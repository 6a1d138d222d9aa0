//! End-to-end tests that drive the compiled `funcinfo` binary: exit codes,
//! output formats, reproducibility, and the documented flag semantics.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use funcinfo::data::{
    generate, save_csv, save_layout, ImageLayout, Layout, SyntheticSpec, TokenLayout,
};
use funcinfo::model::{save_checkpoint, AnalyticFunction, StoredModel};
use ndarray::{array, Array1, Array2};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_funcinfo"));
    // Isolate tests from an ambient default-seed override.
    c.env_remove("FUNCINFO_SEED");
    c
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary must spawn");
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout must be UTF-8")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process must exit, not crash")
}

/// Temp directory with a small two-class blob dataset on disk.
fn blob_workspace() -> (TempDir, PathBuf) {
    let dir = TempDir::new().expect("tempdir");
    let spec = SyntheticSpec::isotropic_blobs(6, 2, &[0, 1], 2.5, 1.0, 40, 3).unwrap();
    let (data, _) = generate(&spec).unwrap();
    let train = dir.path().join("train.csv");
    save_csv(&train, &data).unwrap();
    (dir, train)
}

/// Analytic two-class checkpoint: logits `w0 . z` and `-w0 . z`, so feature
/// relevance is known and no training is involved.
fn softmax_checkpoint(dir: &Path) -> PathBuf {
    let weights =
        array![[1.5, -1.0, 0.5, 0.0, 0.25], [-1.5, 1.0, -0.5, 0.0, -0.25]];
    let model = StoredModel::Analytic(AnalyticFunction::LinearSoftmax {
        weights,
        bias: Array1::zeros(2),
    });
    let path = dir.join("softmax.json");
    save_checkpoint(&path, &model, None).unwrap();
    path
}

/// Five-feature dataset matching `softmax_checkpoint`, labels balanced.
fn softmax_data(dir: &Path) -> PathBuf {
    let mut rows = String::new();
    for i in 0..12 {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let vals = [
            sign * (1.0 + 0.1 * i as f64),
            -sign * 0.5,
            0.3 * sign,
            2.0,
            0.1 * i as f64,
        ];
        for v in vals {
            rows.push_str(&format!("{v},"));
        }
        rows.push_str(if sign > 0.0 { "0\n" } else { "1\n" });
    }
    let path = dir.join("points.csv");
    fs::write(&path, rows).unwrap();
    path
}

#[test]
fn train_reports_accuracy_and_writes_loadable_checkpoint() {
    let (dir, train) = blob_workspace();
    let model = dir.path().join("model.json");
    let stdout = run_ok(bin().args([
        "train",
        "--data",
        train.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--hidden",
        "8",
        "--epochs",
        "40",
        "--seed",
        "5",
    ]));
    let acc: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("train accuracy: "))
        .expect("accuracy line")
        .parse()
        .unwrap();
    assert!(acc >= 0.9, "blobs should be nearly separable, got {acc}");
    funcinfo::model::load_checkpoint(&model).expect("checkpoint must reload");
    let trace = fs::read_to_string(dir.path().join("model.loss.csv")).unwrap();
    assert!(trace.starts_with("# {"), "loss trace must carry a metadata header");
    assert!(trace.lines().nth(1).unwrap().starts_with("epoch,"));
}

#[test]
fn unknown_method_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let model = softmax_checkpoint(dir.path());
    let data = softmax_data(dir.path());
    let out = bin()
        .args([
            "explain",
            "--model",
            model.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--method",
            "banana",
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn missing_input_file_is_a_config_error() {
    let out = bin()
        .args([
            "explain",
            "--model",
            "/no/such/model.json",
            "--data",
            "/no/such/data.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn single_point_fraction_grid_is_a_numeric_error() {
    let dir = TempDir::new().unwrap();
    let model = softmax_checkpoint(dir.path());
    let data = softmax_data(dir.path());
    let out = bin()
        .args([
            "evaluate",
            "--model",
            model.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--methods",
            "random",
            "--fractions",
            "0",
            "--samples",
            "4",
            "--curves-out",
            dir.path().join("c.csv").to_str().unwrap(),
            "--summary-out",
            dir.path().join("s.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 3, "a one-point grid has no area under it");
}

#[test]
fn vargrad_on_linear_stub_writes_all_zero_scores() {
    let dir = TempDir::new().unwrap();
    let stub = StoredModel::Analytic(AnalyticFunction::LinearStub {
        weights: array![0.5, -0.25, 2.0],
        intercept: 10.0,
    });
    let model = dir.path().join("stub.json");
    save_checkpoint(&model, &stub, None).unwrap();
    let data = dir.path().join("one.csv");
    fs::write(&data, "0.1,0.2,0.3,0\n").unwrap();
    let out_csv = dir.path().join("att.csv");
    run_ok(bin().args([
        "explain",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--method",
        "vargrad",
        "--samples",
        "64",
        "--out",
        out_csv.to_str().unwrap(),
    ]));
    let text = fs::read_to_string(&out_csv).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(2) {
        let score: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(score, 0.0, "a linear model has constant gradients");
        rows += 1;
    }
    assert_eq!(rows, 3);
}

#[test]
fn explain_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let model = softmax_checkpoint(dir.path());
    let data = softmax_data(dir.path());
    let out_csv = dir.path().join("att.csv");
    let args = [
        "explain",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--method",
        "ours",
        "--scheme",
        "identity:sigma_sq=1.0",
        "--normalize",
        "--samples",
        "96",
        "--seed",
        "13",
        "--out",
        out_csv.to_str().unwrap(),
    ];
    run_ok(bin().args(args));
    let first = fs::read(&out_csv).unwrap();
    run_ok(bin().args(args));
    assert_eq!(first, fs::read(&out_csv).unwrap());
}

#[test]
fn evaluate_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let model = softmax_checkpoint(dir.path());
    let data = softmax_data(dir.path());
    let curves = dir.path().join("curves.csv");
    let summary = dir.path().join("summary.csv");
    let args = [
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--methods",
        "ours,random",
        "--samples",
        "32",
        "--seed",
        "7",
        "--curves-out",
        curves.to_str().unwrap(),
        "--summary-out",
        summary.to_str().unwrap(),
    ];
    run_ok(bin().args(args));
    let (c1, s1) = (fs::read(&curves).unwrap(), fs::read(&summary).unwrap());
    run_ok(bin().args(args));
    assert_eq!(c1, fs::read(&curves).unwrap());
    assert_eq!(s1, fs::read(&summary).unwrap());
    let text = String::from_utf8(c1).unwrap();
    assert!(text.starts_with("# {"), "curves must carry a metadata header");
    assert!(text.contains("\"config_hash\""));
}

#[test]
fn identity_scheme_agrees_with_squared_gradients_via_compare() {
    let (dir, train) = blob_workspace();
    let model = dir.path().join("model.json");
    run_ok(bin().args([
        "train",
        "--data",
        train.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--hidden",
        "12",
        "--epochs",
        "50",
        "--seed",
        "5",
    ]));
    let ours = dir.path().join("ours.csv");
    let sgsq = dir.path().join("sgsq.csv");
    run_ok(bin().args([
        "explain",
        "--model",
        model.to_str().unwrap(),
        "--data",
        train.to_str().unwrap(),
        "--index",
        "0",
        "--method",
        "ours",
        "--scheme",
        "identity:sigma_sq=1.0",
        "--normalize",
        "--samples",
        "2000",
        "--seed",
        "11",
        "--out",
        ours.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "explain",
        "--model",
        model.to_str().unwrap(),
        "--data",
        train.to_str().unwrap(),
        "--index",
        "0",
        "--method",
        "smoothgrad_sq",
        "--sigma-sq",
        "1.0",
        "--samples",
        "2000",
        "--seed",
        "11",
        "--out",
        sgsq.to_str().unwrap(),
    ]));
    let stdout = run_ok(bin().args([
        "compare",
        "--left",
        ours.to_str().unwrap(),
        "--right",
        sgsq.to_str().unwrap(),
    ]));
    let rho: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("spearman: "))
        .expect("spearman line")
        .parse()
        .unwrap();
    assert!(rho > 0.9, "identity-covariance scores should rank like squared gradients, got {rho}");
}

#[test]
fn flags_override_config_file_values() {
    let dir = TempDir::new().unwrap();
    let model = softmax_checkpoint(dir.path());
    let data = softmax_data(dir.path());
    let out_csv = dir.path().join("att.csv");
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "[explain]\nmodel = {model:?}\ndata = {data:?}\nmethod = \"smoothgrad\"\n\
             samples = 5\nseed = 1\nout = {out_csv:?}\n"
        ),
    )
    .unwrap();
    run_ok(bin().args(["explain", "--config", config.to_str().unwrap(), "--seed", "2"]));
    let meta = fs::read_to_string(&out_csv).unwrap().lines().next().unwrap().to_string();
    assert!(meta.contains("\"seed\":2"), "flag must beat the file: {meta}");
    assert!(meta.contains("\"n\":5"), "file value must apply when no flag is given: {meta}");
}

#[test]
fn environment_variable_supplies_the_default_seed() {
    let dir = TempDir::new().unwrap();
    let model = softmax_checkpoint(dir.path());
    let data = softmax_data(dir.path());
    let out_csv = dir.path().join("att.csv");
    let base = [
        "explain",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--method",
        "smoothgrad",
        "--samples",
        "4",
        "--out",
        out_csv.to_str().unwrap(),
    ];
    run_ok(bin().args(base).env("FUNCINFO_SEED", "77"));
    let meta = fs::read_to_string(&out_csv).unwrap().lines().next().unwrap().to_string();
    assert!(meta.contains("\"seed\":77"), "env var must fill the default: {meta}");

    run_ok(bin().args(base).env("FUNCINFO_SEED", "77").args(["--seed", "3"]));
    let meta = fs::read_to_string(&out_csv).unwrap().lines().next().unwrap().to_string();
    assert!(meta.contains("\"seed\":3"), "explicit flag must beat the env var: {meta}");
}

#[test]
fn default_verification_suite_passes_and_prints_the_closed_form() {
    let stdout = run_ok(bin().arg("verify"));
    assert!(stdout.contains("0.8244"), "must print the 1-d exponential closed form");
    assert!(!stdout.contains("[fail]"));
    assert!(stdout.contains("all 11 checks passed"));
}

#[test]
fn tampered_verification_reports_failures() {
    let out = bin()
        .args([
            "verify",
            "--tamper",
            "--trials",
            "6",
            "--samples",
            "300",
            "--analytic-samples",
            "20000",
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[fail]"), "tampering must surface as failed checks");
}

#[test]
fn subset_explain_writes_one_row_per_subset_feature() {
    let dir = TempDir::new().unwrap();
    let model = softmax_checkpoint(dir.path());
    let data = softmax_data(dir.path());
    let out_csv = dir.path().join("subset.csv");
    run_ok(bin().args([
        "explain",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--method",
        "ours",
        "--scheme",
        "identity:sigma_sq=1.0",
        "--subset",
        "0,2",
        "--subset-mode",
        "condition",
        "--samples",
        "32",
        "--out",
        out_csv.to_str().unwrap(),
    ]));
    let text = fs::read_to_string(&out_csv).unwrap();
    assert_eq!(text.lines().count(), 2 + 2, "meta + header + one row per subset feature");
}

#[test]
fn image_layout_heatmap_is_a_binary_graymap() {
    let dir = TempDir::new().unwrap();
    let model = softmax_checkpoint(dir.path());
    let data = softmax_data(dir.path());
    let layout = dir.path().join("layout.json");
    save_layout(&layout, Layout::Image(ImageLayout { height: 1, width: 5, channels: 1 }), None)
        .unwrap();
    let pgm = dir.path().join("att.pgm");
    run_ok(bin().args([
        "explain",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--method",
        "smoothgrad_sq",
        "--samples",
        "16",
        "--out",
        dir.path().join("att.csv").to_str().unwrap(),
        "--layout",
        layout.to_str().unwrap(),
        "--heatmap",
        pgm.to_str().unwrap(),
    ]));
    let bytes = fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n# {"), "raw graymap with a metadata comment");
    assert!(bytes.len() > b"P5\n# {}\n5 1\n255\n".len(), "pixel payload must follow the header");
}

#[test]
fn token_layout_evaluation_masks_whole_tokens() {
    let dir = TempDir::new().unwrap();
    // 6 features seen as 3 tokens x 2 dims; reuse the 5-feature softmax is
    // impossible, so build a 6-feature stub.
    let weights = Array2::from_shape_vec(
        (2, 6),
        vec![1.0, 1.0, -0.5, 0.2, 0.0, 0.0, -1.0, -1.0, 0.5, -0.2, 0.0, 0.0],
    )
    .unwrap();
    let model_path = dir.path().join("tok.json");
    save_checkpoint(
        &model_path,
        &StoredModel::Analytic(AnalyticFunction::LinearSoftmax {
            weights,
            bias: Array1::zeros(2),
        }),
        None,
    )
    .unwrap();
    let data = dir.path().join("tok.csv");
    fs::write(
        &data,
        "1.0,0.5,0.2,0.1,0.9,0.4,0\n-1.0,-0.5,-0.2,-0.1,-0.9,-0.4,1\n",
    )
    .unwrap();
    let layout = dir.path().join("tok_layout.json");
    save_layout(&layout, Layout::Tokens(TokenLayout { tokens: 3, dims: 2 }), None).unwrap();
    let curves = dir.path().join("curves.csv");
    run_ok(bin().args([
        "evaluate",
        "--model",
        model_path.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--methods",
        "smoothgrad_sq",
        "--samples",
        "8",
        "--fractions",
        "0,0.34,0.67,1",
        "--layout",
        layout.to_str().unwrap(),
        "--curves-out",
        curves.to_str().unwrap(),
        "--summary-out",
        dir.path().join("summary.csv").to_str().unwrap(),
    ]));
    let text = fs::read_to_string(&curves).unwrap();
    // 1 method x 3 curves x 4 fractions plus meta and header lines.
    assert_eq!(text.lines().count(), 2 + 12);
}

#[test]
fn constant_model_has_consistency_auc_exactly_one() {
    let dir = TempDir::new().unwrap();
    let constant = StoredModel::Analytic(AnalyticFunction::LinearStub {
        weights: Array1::zeros(4),
        intercept: 3.0,
    });
    let model = dir.path().join("const.json");
    save_checkpoint(&model, &constant, None).unwrap();
    let data = dir.path().join("pts.csv");
    fs::write(&data, "0.0,1.0,2.0,3.0,0\n4.0,5.0,6.0,7.0,0\n").unwrap();
    let summary = dir.path().join("summary.csv");
    run_ok(bin().args([
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--methods",
        "random",
        "--samples",
        "4",
        "--curves-out",
        dir.path().join("curves.csv").to_str().unwrap(),
        "--summary-out",
        summary.to_str().unwrap(),
    ]));
    let text = fs::read_to_string(&summary).unwrap();
    let consistency = text
        .lines()
        .find(|l| l.contains(",consistency,"))
        .expect("consistency row");
    let auc: f64 = consistency.rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(auc, 1.0, "masking cannot change a constant model's predictions");
}

#[test]
fn compare_rejects_attributions_of_different_lengths() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(
        &a,
        "# {\"method\":\"smoothgrad\",\"class\":0,\"n\":4,\"seed\":0}\n\
         feature_index,score,std_error\n0,1.0,0.0\n1,2.0,0.0\n",
    )
    .unwrap();
    fs::write(
        &b,
        "# {\"method\":\"smoothgrad\",\"class\":0,\"n\":4,\"seed\":0}\n\
         feature_index,score,std_error\n0,1.0,0.0\n1,2.0,0.0\n2,3.0,0.0\n",
    )
    .unwrap();
    let out = bin()
        .args(["compare", "--left", a.to_str().unwrap(), "--right", b.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
}
