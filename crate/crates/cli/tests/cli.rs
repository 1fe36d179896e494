use std::io::Write;
use std::process::{Command, Output, Stdio};

fn run(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_wbstream"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn wbstream");
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    child.wait_with_output().expect("wait for wbstream")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn recover_vector_round_trip() {
    let out = run(
        &["recover-vector", "--n", "16", "--k", "2", "--beta", "5"],
        "vector n=16\nv 3 5\nv 9 -2\n",
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out), "3 5\n9 -2\n");
}

#[test]
fn recover_vector_fast_handles_cancellation() {
    let out = run(
        &["recover-vector", "--n", "64", "--k", "3", "--beta", "9", "--fast"],
        "vector n=64\nv 10 4\nv 10 -4\nv 20 7\n",
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out), "20 7\n");
}

#[test]
fn dense_vector_reports_none_with_exit_3() {
    let out = run(
        &["recover-vector", "--n", "16", "--k", "1", "--beta", "5"],
        "vector n=16\nv 1 1\nv 2 1\nv 3 1\n",
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout_of(&out), "NONE\n");
}

#[test]
fn parse_error_exits_2_with_line_number() {
    let out = run(
        &["recover-vector", "--n", "16", "--k", "1", "--beta", "5"],
        "vector n=16\nv 99 1\n",
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn usage_error_exits_1() {
    let out = run(&["recover-vector", "--n", "16"], "");
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["no-such-command"], "");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn header_mismatch_is_a_parse_error() {
    let out = run(
        &["recover-vector", "--n", "16", "--k", "1", "--beta", "5"],
        "matrix n=16\n",
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_l0_accepts_fraction_and_decimal() {
    for eps in ["1/2", "0.5"] {
        let out = run(
            &["estimate-l0", "--n", "256", "--eps", eps],
            "vector n=256\nv 1 1\nv 7 2\nv 100 -3\n",
        );
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(stdout_of(&out), "3\n");
    }
}

#[test]
fn rank_decision_prints_rank_greater() {
    let stream: String = std::iter::once("matrix n=8".to_string())
        .chain((1..=8).map(|i| format!("m {i} {i} 1")))
        .collect::<Vec<_>>()
        .join("\n");
    let out = run(&["rank-decision", "--n", "8", "--k", "3", "--beta", "3"], &stream);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout_of(&out), "RANK>3\n");
}

#[test]
fn recover_matrix_prints_rows() {
    let out = run(
        &["recover-matrix", "--n", "4", "--k", "1", "--beta", "4"],
        "matrix n=4\nm 1 1 2\nm 1 2 -2\nm 2 1 4\nm 2 2 -4\n",
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out), "2 -2 0 0\n4 -4 0 0\n0 0 0 0\n0 0 0 0\n");
}

#[test]
fn rpca_prints_labeled_blocks() {
    let out = run(
        &["rpca", "--n", "8", "--k", "1", "--r", "1", "--beta", "100"],
        "matrix n=8\nm 3 5 50\n",
    );
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    assert!(text.starts_with("L:\n"), "{text}");
    assert!(text.contains("\nS:\n"), "{text}");
    assert!(text.lines().any(|l| l.split_whitespace().nth(4) == Some("50")), "{text}");
}

#[test]
fn tensor_json_output_is_machine_readable() {
    let out = run(
        &["recover-tensor", "--dims", "4,4,4", "--k", "1", "--beta", "2", "--json"],
        "tensor dims=4,4,4\nt 1 1 1 2\n",
    );
    assert_eq!(out.status.code(), Some(0));
    let value: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(value["outcome"], "recovered");
    assert_eq!(value["factors"].as_array().unwrap().len(), 3);
}

#[test]
fn matching_reports_edges_or_larger_than() {
    let out = run(
        &["matching", "--n", "4", "--kprime", "2"],
        "graph n=4\ne 1 2 +1\ne 2 3 +1\ne 3 4 +1\n",
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out), "1 2\n3 4\n");

    let out = run(
        &["matching", "--n", "6", "--kprime", "1"],
        "graph n=6\ne 1 2 +1\ne 3 4 +1\ne 5 6 +1\n",
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout_of(&out), "LARGER_THAN 1\n");
}

#[test]
fn game_collision_demo_wins_and_oblivious_loses() {
    let out = run(
        &["game", "--alg", "enum", "--strategy", "collision", "--rounds", "8"],
        "",
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_of(&out).contains("VERDICT: adversary wins"), "{}", stdout_of(&out));

    let out = run(
        &[
            "game", "--alg", "fast", "--strategy", "oblivious", "--rounds", "12", "--n", "1024",
            "--k", "8", "--beta", "100",
        ],
        "",
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_of(&out).contains("VERDICT: algorithm wins"), "{}", stdout_of(&out));
}

#[test]
fn identical_seeds_give_byte_identical_output() {
    let seed = "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff";
    let stream = "matrix n=8\nm 1 2 3\nm 2 1 3\nm 1 1 1\n";
    let args = ["recover-matrix", "--n", "8", "--k", "1", "--beta", "9", "--seed", seed];
    let first = run(&args, stream);
    let second = run(&args, stream);
    assert_eq!(first.status.code(), second.status.code());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn config_file_overrides_are_honored() {
    let dir = std::env::temp_dir().join("wbstream-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("solver.conf");
    std::fs::write(&path, "max_iters=1\ntolerance=1e-10\n").unwrap();
    // one solver iteration cannot reach a nontrivial planted matrix
    let out = run(
        &[
            "recover-matrix", "--n", "4", "--k", "1", "--beta", "4", "--config",
            path.to_str().unwrap(),
        ],
        "matrix n=4\nm 1 1 2\nm 1 2 -2\nm 2 1 4\nm 2 2 -4\n",
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout_of(&out), "NONE\n");
}
