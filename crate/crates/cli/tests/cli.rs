use mmfw::sparse::io::sparse_to_string;
use mmfw::sparse::{coo_from_dense, DenseMatrix};
use mmfw::wavelet::io::parse_basis;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn mmfw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmfw"))
        .args(args)
        .current_dir(dir)
        .env_remove("MMFW_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Path Laplacian on `n` nodes, written in the sparse format.
fn path_laplacian(dir: &Path, n: usize) -> PathBuf {
    let l = DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            if i == 0 || i == n - 1 {
                1.0
            } else {
                2.0
            }
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        }
    });
    let p = dir.join("a.mtx");
    std::fs::write(&p, sparse_to_string(&coo_from_dense(&l, 0.0))).unwrap();
    p
}

/// Points on a line, as a full distance table.
fn distances(dir: &Path, n: usize) -> PathBuf {
    let d = DenseMatrix::from_fn(n, n, |i, j| i.abs_diff(j) as f64 / n as f64);
    let p = dir.join("d.mtx");
    std::fs::write(&p, sparse_to_string(&coo_from_dense(&d, 0.0))).unwrap();
    p
}

/// Seasonal signals with a deterministic wobble.
fn series(dir: &Path, n: usize, t: usize) -> PathBuf {
    let mut s = String::from("timestamp");
    for j in 0..n {
        s.push_str(&format!(",n{j}"));
    }
    s.push('\n');
    for k in 0..t {
        s.push_str(&format!("t{k}"));
        for j in 0..n {
            let v = 10.0 + (k as f64 * 0.5 + j as f64).sin() * 3.0 + ((k * 7 + j * 3) % 5) as f64 * 0.1;
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    let p = dir.join("s.csv");
    std::fs::write(&p, s).unwrap();
    p
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn factorize_prints_residual_and_writes_file() {
    let dir = TempDir::new().unwrap();
    path_laplacian(dir.path(), 12);
    let o = mmfw(dir.path(), &["factorize", "--input", "a.mtx", "--levels", "8", "--order", "2", "--out", "f.mmf"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("residual "));
    assert!(dir.path().join("f.mmf").is_file());
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    for args in [
        &["frobnicate"][..],
        &["factorize", "--input", "a.mtx", "--out", "f.mmf", "--bogus", "1"],
        &["factorize", "--out", "f.mmf"],
        &[],
    ] {
        let o = mmfw(dir.path(), args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"), "{args:?}");
    }
    // --levels has no default and is not in a config file.
    path_laplacian(dir.path(), 6);
    let o = mmfw(dir.path(), &["factorize", "--input", "a.mtx", "--out", "f.mmf"]);
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("f.mmf").exists());
}

#[test]
fn missing_input_exits_1_without_output() {
    let dir = TempDir::new().unwrap();
    let o = mmfw(dir.path(), &["factorize", "--input", "none.mtx", "--levels", "2", "--out", "f.mmf"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
    assert!(!dir.path().join("f.mmf").exists());
}

#[test]
fn runtime_failure_leaves_no_partial_file() {
    let dir = TempDir::new().unwrap();
    let asym = "3 3 2\n0 1 1.0\n1 0 2.0\n";
    std::fs::write(dir.path().join("a.mtx"), asym).unwrap();
    let o = mmfw(dir.path(), &["factorize", "--input", "a.mtx", "--levels", "1", "--out", "f.mmf"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sparse-core"));
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 1, "{names:?}");

    let o = mmfw(dir.path(), &["factorize", "--input", "a.mtx", "--levels", "1", "--out", "no/dir/f.mmf"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn wavelet_file_round_trip_is_orthonormal() {
    let dir = TempDir::new().unwrap();
    path_laplacian(dir.path(), 16);
    let o = mmfw(dir.path(), &["factorize", "--input", "a.mtx", "--levels", "8", "--out", "f.mmf"]);
    assert_eq!(code(&o), 0);
    let o = mmfw(dir.path(), &["wavelets", "--factorization", "f.mmf", "--out", "w.mtx"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("density"));
    let w = parse_basis(&read(&dir.path().join("w.mtx"))).unwrap();
    assert!(w.to_dense().orthonormality_residual() <= 1e-10);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    distances(dir.path(), 10);
    series(dir.path(), 6, 120);
    let steps: [&[&str]; 4] = [
        &["adjacency", "--input", "d.mtx", "--threshold", "0.1", "--laplacian", "--out", "l.mtx"],
        &["factorize", "--input", "l.mtx", "--levels", "5", "--out", "f.mmf"],
        &["wavelets", "--factorization", "f.mmf", "--out", "w.mtx"],
        &["adjacency", "--method", "lle", "--input", "s.csv", "--out", "a.mtx"],
    ];
    let mut first = Vec::new();
    for round in 0..2 {
        for args in steps {
            let o = mmfw(dir.path(), args);
            assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let files: Vec<String> = ["l.mtx", "f.mmf", "w.mtx", "a.mtx"].iter().map(|f| read(&dir.path().join(f))).collect();
        if round == 0 {
            first = files;
        } else {
            assert_eq!(first, files);
        }
    }
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = TempDir::new().unwrap();
    distances(dir.path(), 8);
    std::fs::write(dir.path().join("run.cfg"), "# settings\nthreshold = 0.3\n").unwrap();
    let nnz = |args: &[&str]| {
        let o = mmfw(dir.path(), args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    let base = ["adjacency", "--input", "d.mtx", "--out", "a.mtx"];
    let default = nnz(&base);
    let from_file = nnz(&[&base[..], &["--config", "run.cfg"]].concat());
    let from_flag = nnz(&[&base[..], &["--config", "run.cfg", "--threshold", "0.01"]].concat());
    let explicit = nnz(&[&base[..], &["--threshold", "0.3"]].concat());
    assert_eq!(from_file, explicit);
    assert_eq!(from_flag, default);
    assert_ne!(from_file, default);

    std::fs::write(dir.path().join("bad.cfg"), "colour = red\n").unwrap();
    let o = mmfw(dir.path(), &[&base[..], &["--config", "bad.cfg"]].concat());
    assert_eq!(code(&o), 2);
}

#[test]
fn train_and_eval_pipeline() {
    let dir = TempDir::new().unwrap();
    distances(dir.path(), 6);
    series(dir.path(), 6, 160);
    let prep: [&[&str]; 3] = [
        &["adjacency", "--input", "d.mtx", "--threshold", "0.5", "--laplacian", "--out", "l.mtx"],
        &["factorize", "--input", "l.mtx", "--levels", "3", "--out", "f.mmf"],
        &["wavelets", "--factorization", "f.mmf", "--out", "w.mtx"],
    ];
    for args in prep {
        assert_eq!(code(&mmfw(dir.path(), args)), 0, "{args:?}");
    }
    let train = |out: &str| {
        let o = mmfw(
            dir.path(),
            &[
                "train", "--input", "s.csv", "--wavelets", "w.mtx", "--out", out, "--metrics", "m.csv", "--epochs", "2",
                "--hidden", "3", "--history", "4", "--horizon", "2", "--batch", "16", "--seed", "5",
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        read(&dir.path().join(out))
    };
    assert_eq!(train("c1.ckpt"), train("c2.ckpt"));
    let metrics = read(&dir.path().join("m.csv"));
    assert!(metrics.starts_with("epoch,split,mae,rmse,mape,seconds"));
    assert_eq!(metrics.lines().count(), 1 + 2 * 2);

    let o = mmfw(dir.path(), &["eval", "--input", "s.csv", "--wavelets", "w.mtx", "--checkpoint", "c1.ckpt", "--out", "e.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read(&dir.path().join("e.csv"));
    assert_eq!(report.lines().count(), 1 + 2 * 3);
    assert!(report.contains("ha,test,all"));
    assert!(stdout(&o).contains("wavelet"));

    // A checkpoint trained on 6 nodes cannot run on a 16-node basis.
    path_laplacian(dir.path(), 16);
    assert_eq!(code(&mmfw(dir.path(), &["factorize", "--input", "a.mtx", "--levels", "4", "--out", "g.mmf"])), 0);
    assert_eq!(code(&mmfw(dir.path(), &["wavelets", "--factorization", "g.mmf", "--out", "w16.mtx"])), 0);
    let o = mmfw(dir.path(), &["eval", "--input", "s.csv", "--wavelets", "w16.mtx", "--checkpoint", "c1.ckpt", "--out", "bad.csv"]);
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("bad.csv").exists());
}

#[test]
fn bench_writes_csv() {
    let dir = TempDir::new().unwrap();
    let o = mmfw(
        dir.path(),
        &["bench", "--nodes", "16", "--levels", "8", "--runs", "5", "--steps", "40", "--hidden", "2", "--out", "b.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("speedup"));
    let csv = read(&dir.path().join("b.csv"));
    assert!(csv.starts_with("label,runs,median_seconds_per_epoch,nnz_density_percent"));
    assert_eq!(csv.lines().count(), 3);
}
