use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use thir_core::synthetic::{noise, write_separable_fixture};
use thir_core::{load_image, load_index};
use thir_service::{query_response, QueryResponse};

fn thir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thir"))
        .args(args)
        .env_remove("THIR_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Noise images with distinct descriptors under benign/ and malignant/.
fn noise_dataset(root: &Path, per_label: usize) {
    for (l, label) in ["benign", "malignant"].iter().enumerate() {
        let dir = root.join(label);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..per_label {
            let seed = (l * 100 + i) as u64;
            fs::write(
                dir.join(format!("SOB_{i}-40-{i}.png")),
                noise(28, 24, seed).to_png(),
            )
            .unwrap();
        }
    }
}

fn extract(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["extract", "--data", path_str(data), "--out", path_str(out)];
    args.extend(["--resolution", "30", "--width", "20", "--height", "20"]);
    args.extend(extra);
    thir(&args)
}

#[test]
fn extract_reports_entry_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(data.join("benign")).unwrap();
    for i in 0..3u64 {
        fs::write(
            data.join(format!("benign/{i}.png")),
            noise(16, 16, i).to_png(),
        )
        .unwrap();
    }
    let out = dir.path().join("ix.thir");
    let o = extract(&data, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("3 entries"));
    let ix = load_index(&out).unwrap();
    assert_eq!(ix.len(), 3);
    assert_eq!(ix.dim(), 90);
    assert_eq!(ix.resize_dims(), (20, 20));
}

#[test]
fn query_prints_k_ascending_lines_and_finds_itself_first() {
    let dir = tempfile::tempdir().unwrap();
    noise_dataset(dir.path(), 4);
    let ix = dir.path().join("ix.thir");
    assert!(extract(dir.path(), &ix, &[]).status.success());

    let image = dir.path().join("malignant/SOB_2-40-2.png");
    let o = thir(&[
        "query",
        "--index",
        path_str(&ix),
        "--image",
        path_str(&image),
        "--k",
        "3",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(lines.len(), 3);
    let distances: Vec<f64> = lines.iter().map(|c| c[4].parse().unwrap()).collect();
    assert!(distances.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(lines[0][0], "1");
    assert_eq!(lines[0][2], "malignant");
    assert_eq!(lines[0][4].parse::<f64>().unwrap(), 0.0);
    assert_eq!(lines[0][5], "malignant/SOB_2-40-2.png");
}

#[test]
fn query_json_is_the_service_response() {
    let dir = tempfile::tempdir().unwrap();
    noise_dataset(dir.path(), 3);
    let ix_path = dir.path().join("ix.thir");
    assert!(extract(dir.path(), &ix_path, &[]).status.success());
    let query = dir.path().join("q.png");
    fs::write(&query, noise(40, 30, 999).to_png()).unwrap();

    for normalize in [false, true] {
        let mut args = vec![
            "query",
            "--index",
            path_str(&ix_path),
            "--image",
            path_str(&query),
            "--k",
            "4",
            "--format",
            "json",
        ];
        if normalize {
            args.push("--normalize");
        }
        let o = thir(&args);
        assert!(o.status.success());
        let printed: QueryResponse = serde_json::from_str(&stdout(&o)).unwrap();
        let ix = load_index(&ix_path).unwrap();
        let expected = query_response(&ix, &load_image(&query).unwrap(), 4, normalize).unwrap();
        assert_eq!(printed, expected);
        assert_eq!(printed.results.len(), 4);
    }
}

#[test]
fn jobs_do_not_change_the_index_bytes() {
    let dir = tempfile::tempdir().unwrap();
    noise_dataset(dir.path(), 5);
    let a = dir.path().join("a.thir");
    let b = dir.path().join("b.thir");
    assert!(extract(dir.path(), &a, &["--jobs", "1"]).status.success());
    assert!(extract(dir.path(), &b, &["-j", "6"]).status.success());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn evaluate_separates_the_synthetic_fixture() {
    let dir = tempfile::tempdir().unwrap();
    write_separable_fixture(dir.path(), 20, 60, 3).unwrap();
    let report = dir.path().join("report.csv");
    let o = thir(&[
        "evaluate",
        "--data",
        path_str(dir.path()),
        "--k",
        "1,3,5",
        "--width",
        "60",
        "--height",
        "60",
        "--format",
        "json",
        "--report",
        path_str(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(row["accuracy"], 1.0);
        assert_eq!(row["queries"], 8);
    }
    assert_eq!(v["meta"]["positive_class"], "malignant");
    assert_eq!(fs::read_to_string(report).unwrap(), stdout(&o));
}

#[test]
fn evaluate_reports_each_magnification() {
    let dir = tempfile::tempdir().unwrap();
    for mag in [40, 400] {
        for (label, seed0) in [("benign", 0u64), ("malignant", 50)] {
            let sub = dir.path().join(label).join(format!("{mag}X"));
            fs::create_dir_all(&sub).unwrap();
            for i in 0..5u64 {
                fs::write(
                    sub.join(format!("{i}.png")),
                    noise(12, 12, seed0 + mag + i).to_png(),
                )
                .unwrap();
            }
        }
    }
    let base = [
        "evaluate",
        "--data",
        path_str(dir.path()),
        "--k",
        "1",
        "--width",
        "12",
        "--height",
        "12",
    ];
    let o = thir(&base);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "magnification,K,accuracy,recall,precision,f1,mean_precision_at_k,queries"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("40,1,"));
    assert!(lines[2].starts_with("400,1,"));

    let mut only = base.to_vec();
    only.extend(["--magnification", "400", "--format", "markdown"]);
    let text = stdout(&thir(&only));
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().starts_with("| 400 | 1 |"));
}

#[test]
fn curves_csv_and_diagrams() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.png");
    fs::write(&img, noise(10, 10, 8).to_png()).unwrap();
    let dgm = dir.path().join("dgm.csv");
    let o = thir(&[
        "curves",
        "--image",
        path_str(&img),
        "--resolution",
        "7",
        "--diagram",
        path_str(&dgm),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("channel,sample_index,filtration_value,count")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 21);
    assert_eq!(rows[0][..2], ["r", "0"]);
    assert_eq!(rows[20][..2], ["b", "6"]);

    let dgm = fs::read_to_string(dgm).unwrap();
    assert!(dgm.starts_with("channel,dim,birth,death\n"));
    // one essential component per channel
    assert_eq!(
        dgm.lines()
            .filter(|l| l.starts_with("g,0,") && l.ends_with(",inf"))
            .count(),
        1
    );

    let out = dir.path().join("c.csv");
    let o = thir(&[
        "curves",
        "--image",
        path_str(&img),
        "--resolution",
        "7",
        "--out",
        path_str(&out),
    ]);
    assert!(o.stdout.is_empty());
    assert_eq!(fs::read_to_string(out).unwrap(), text);
}

#[test]
fn usage_errors_exit_1_and_runtime_errors_exit_2() {
    let usage: [&[&str]; 6] = [
        &[],
        &["bogus"],
        &["query", "--index", "x.thir"],
        &[
            "extract", "--data", "d", "--out", "o", "--range", "sideways",
        ],
        &["evaluate", "--data", "d", "--k", "0"],
        &["query", "--index", "x", "--image", "y", "--unknown-flag"],
    ];
    for args in usage {
        let o = thir(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(
            String::from_utf8_lossy(&o.stderr).contains("Usage"),
            "{args:?}"
        );
    }

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.thir");
    let o = thir(&[
        "query",
        "--index",
        path_str(&missing),
        "--image",
        "nope.png",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = thir(&[
        "extract",
        "--data",
        path_str(dir.path()),
        "--out",
        path_str(&missing),
    ]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(thir(&["--help"]).status.code(), Some(0));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(
        s,
        "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n"
    )
    .ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_answers_stats() {
    let dir = tempfile::tempdir().unwrap();
    noise_dataset(dir.path(), 2);
    let ix = dir.path().join("ix.thir");
    assert!(extract(dir.path(), &ix, &[]).status.success());
    let port = free_port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_thir"))
        .args([
            "serve",
            "--index",
            path_str(&ix),
            "--data-root",
            path_str(dir.path()),
            "--addr",
            &addr,
        ])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();

    let deadline = Instant::now() + Duration::from_secs(20);
    let response = loop {
        if let Some(r) = http_get(port, "/api/stats") {
            break Some(r);
        }
        if Instant::now() > deadline {
            break None;
        }
        std::thread::sleep(Duration::from_millis(100));
    };
    let missing = http_get(port, "/api/images/999999");
    child.kill().unwrap();
    child.wait().unwrap();

    let response = response.expect("service came up");
    assert!(response.starts_with("HTTP/1.1 200"));
    let body = &response[response.find("\r\n\r\n").unwrap() + 4..];
    let v: Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["entries"], 4);
    assert_eq!(v["dim"], 90);
    assert!(missing.unwrap().starts_with("HTTP/1.1 404"));
}

#[test]
fn serve_rejects_a_missing_data_root() {
    let dir = tempfile::tempdir().unwrap();
    noise_dataset(dir.path(), 1);
    let ix = dir.path().join("ix.thir");
    assert!(extract(dir.path(), &ix, &[]).status.success());
    let nowhere = dir.path().join("nowhere");
    let o = thir(&[
        "serve",
        "--index",
        path_str(&ix),
        "--data-root",
        path_str(&nowhere),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
