use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use gapdiff_cli::{parse_config, run, MANIFEST_NAME};
use gapdiff_cli::config::Document;

const HEADER: &str = "\
[domain]
xmin = -1
xmax = 1
ymin = -1
ymax = 1
";

fn config(body: &str, out: &Path) -> String {
    format!("{HEADER}\n{body}\n[run]\noutput = \"{}\"\n", out.display())
}

fn gapdiff(cfg: &Path, extra: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gapdiff"))
        .arg("--config")
        .arg(cfg)
        .args(extra)
        .output()
        .unwrap()
}

fn listing(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect()
}

#[test]
fn eigen_run_lists_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("eigen");
    let text = config(
        "[support]\nkind = hyperplane\n[mesh]\nn_cells = 128\n[task]\nkind = eigen\nk = 4\n",
        &out,
    );
    let manifest = run(&parse_config(&text).unwrap()).unwrap();
    let table = fs::read_to_string(out.join("eigenvalues.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert_eq!(table.lines().next(), Some("k,lambda,residual"));
    assert!(manifest.files.contains(&"eigenvalues.csv".to_string()));

    let mut expected: BTreeSet<String> = manifest.files.iter().cloned().collect();
    expected.insert(MANIFEST_NAME.to_string());
    assert_eq!(listing(&out), expected);

    // The manifest is written in the config grammar and parses back.
    let doc = Document::parse(&fs::read_to_string(out.join(MANIFEST_NAME)).unwrap()).unwrap();
    let files = doc.get("outputs", "files").unwrap().value.as_array().unwrap().len();
    assert_eq!(files, manifest.files.len());
    let lambda = doc.get("scalars", "lambda").unwrap().value.as_array().unwrap();
    assert_eq!(lambda.len(), 4);
    assert_eq!(doc.get("scalars", "n_support").unwrap().value, 127);
    assert_eq!(doc.get("config.mesh", "n_cells").unwrap().value, 128);
}

#[test]
fn verify_run_records_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config(
        "[support]\nkind = snowflake\ndepth = 2\n[mesh]\nn_cells = 24\n[task]\nkind = verify\ntrials = 50\nt_end = 0.05\ndt = 0.005\n",
        tmp.path(),
    );
    let manifest = run(&parse_config(&text).unwrap()).unwrap();
    let worst = manifest.scalar("worst_positivity_violation").unwrap().as_f64().unwrap();
    assert!(worst <= 1e-12);
    let rows = fs::read_to_string(tmp.path().join("verify.csv")).unwrap();
    assert_eq!(rows.lines().count(), 51);
}

#[test]
fn evolve_and_walk_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("evolve");
    let text = config(
        "[support]\nkind = hyperplane\n[mesh]\nn_cells = 16\n[task]\nkind = evolve\nf0 = ground\nt_end = 0.1\ndt = 0.01\nevery = 4\n",
        &out,
    );
    let mut cfg = parse_config(&text).unwrap();
    cfg.extend = true;
    run(&cfg).unwrap();
    let index = fs::read_to_string(out.join("evolve_index.csv")).unwrap();
    let steps: Vec<&str> = index.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(steps, ["0", "4", "8", "10"]);
    // Extended fields cover every mesh vertex.
    let field = fs::read_to_string(out.join("evolve_000010.csv")).unwrap();
    assert_eq!(field.lines().count(), 17 * 17 + 1);

    let out = tmp.path().join("walk");
    let text = config(
        "[support]\nkind = hyperplane\n[mesh]\nn_cells = 16\n[task]\nkind = walk\nstart = [0.1, 0.0]\nt = [0.0, 0.1]\nn_paths = 200\nexport_paths = 3\n",
        &out,
    );
    run(&parse_config(&text).unwrap()).unwrap();
    let est = fs::read_to_string(out.join("estimates_survival.csv")).unwrap();
    let first: Vec<&str> = est.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&first[2..4], ["1.0000000000000000e0", "0.0000000000000000e0"]);
    assert_eq!(first[4], "200");
    let paths = fs::read_to_string(out.join("paths_index.csv")).unwrap();
    assert_eq!(paths.lines().count(), 4);
    assert!(out.join("path_0002.csv").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[support]\nkind = hyperplane\n[mesh]\nn_cells = 16\n[task]\nkind = walk\nstart = [0.0, 0.0]\nt = [0.05, 0.1]\nn_paths = 500\nexport_paths = 2\n";
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&parse_config(&config(body, &a)).unwrap()).unwrap();
    let mut cfg = parse_config(&config(body, &b)).unwrap();
    cfg.threads = Some(3);
    run(&cfg).unwrap();
    for name in listing(&a).into_iter().filter(|n| n.ends_with(".csv")) {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn binary_success_and_quiet() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        config("[support]\nkind = full\n[mesh]\nn_cells = 8\n[task]\nkind = eigen\nk = 2\n", Path::new("ignored")),
    )
    .unwrap();
    let out = tmp.path().join("out");
    let res = gapdiff(&cfg, &["--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("phase=eigen seconds="));
    assert!(out.join(MANIFEST_NAME).exists());
    assert!(!tmp.path().join("ignored").exists());

    let res = gapdiff(&cfg, &["--out", out.to_str().unwrap(), "--quiet"]);
    assert!(res.status.success());
    assert!(!String::from_utf8_lossy(&res.stderr).contains("phase="));
}

#[test]
fn exit_codes_per_error_family() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        // Configuration: out-of-range value.
        ("[support]\nkind = hyperplane\n[mesh]\nn_cells = 0\n[task]\nkind = eigen\nk = 1\n", 2, "mesh.n_cells"),
        ("[support]\nkind = snowflake\ndepth = 12\n[mesh]\nn_cells = 8\n[task]\nkind = eigen\nk = 1\n", 2, "support.depth"),
        // Input: more eigenpairs than dofs.
        ("[support]\nkind = hyperplane\n[mesh]\nn_cells = 4\n[task]\nkind = eigen\nk = 9\n", 2, "requested"),
        // Solver: the process needs a dense Schur complement.
        ("[support]\nkind = hyperplane\n[mesh]\nn_cells = 8\n[solver]\ndense_threshold = 2\n[task]\nkind = walk\nstart = [0, 0]\nt = 0.1\nn_paths = 10\n", 3, "dense"),
        // Geometry: snowflake sticking out of the domain.
        ("[support]\nkind = snowflake\ndepth = 1\nside = 3.0\n[mesh]\nn_cells = 8\n[task]\nkind = eigen\nk = 1\n", 4, "outside"),
    ];
    for (body, code, needle) in cases {
        let cfg = tmp.path().join("case.cfg");
        fs::write(&cfg, config(body, &out)).unwrap();
        let res = gapdiff(&cfg, &["--quiet"]);
        let stderr = String::from_utf8_lossy(&res.stderr);
        assert_eq!(res.status.code(), Some(code), "{body}: {stderr}");
        assert!(stderr.contains(needle), "{stderr}");
    }
}

#[test]
fn polygon_file_is_resolved_next_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("square.csv"),
        "# polygon\n-0.5,-0.5\n0.5,-0.5\n0.5,0.5\n-0.5,0.5\n",
    )
    .unwrap();
    let cfg = tmp.path().join("poly.cfg");
    let out = tmp.path().join("out");
    fs::write(
        &cfg,
        config("[support]\nkind = polygon\nfile = square.csv\ndensity = 2.0\n[mesh]\nn_cells = 8\n[task]\nkind = eigen\nk = 1\n", &out),
    )
    .unwrap();
    let res = gapdiff(&cfg, &["--quiet"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let doc = Document::parse(&fs::read_to_string(out.join(MANIFEST_NAME)).unwrap()).unwrap();
    let total = doc.get("scalars", "mass_total").unwrap().value.as_f64().unwrap();
    assert!((total - 2.0).abs() < 1e-12);
}
