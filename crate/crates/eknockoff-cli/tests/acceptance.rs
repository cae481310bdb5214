//! Acceptance criterion 8: any command repeated with the same seed produces
//! byte-identical output files regardless of the worker-thread cap.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_eknockoff")
}

fn run_ok(args: &[&str], dir: &Path) {
    let out = Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|_| panic!("missing output {name}"))
}

fn check(criterion: &str, pass: bool, detail: String) {
    println!(
        "acceptance {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {detail}");
}

#[test]
fn criterion_8_byte_identical_outputs_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();

    // a small dataset with one informative feature
    let mut text = String::from("x1,x2,x3,x4,y\n");
    let mut state = 0xDEADBEEFu64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for _ in 0..60 {
        let (a, b, c, d) = (next(), next(), next(), next());
        text.push_str(&format!("{a},{b},{c},{d},{}\n", 2.0 * a + 0.1 * b));
    }
    std::fs::write(dir.path().join("data.csv"), text).unwrap();

    std::fs::write(
        dir.path().join("cfg.toml"),
        r#"
n = 200
p = 10
s0_size = 3
trials = 6
method = "fdp"
q = 0.25
alpha = 0.2
predictor = "lasso:0.03"
covariance_mode = "known"
master_seed = 31
"#,
    )
    .unwrap();

    // select: same seed, different thread caps
    for (threads, out) in [("1", "sel_a"), ("2", "sel_b")] {
        run_ok(
            &[
                "select", "data.csv", "--response", "y", "--method", "kfwer", "--k", "1",
                "--alpha", "0.1", "--seed", "17", "--threads", threads, "--out", out,
            ],
            dir.path(),
        );
    }
    let select_same = read(dir.path(), "sel_a.json") == read(dir.path(), "sel_b.json")
        && read(dir.path(), "sel_a.csv") == read(dir.path(), "sel_b.csv");

    // simulate: same seed, different thread caps
    for (threads, out) in [("1", "sim_a"), ("2", "sim_b")] {
        run_ok(
            &["simulate", "cfg.toml", "--threads", threads, "--out", out],
            dir.path(),
        );
    }
    let simulate_same = read(dir.path(), "sim_a.csv") == read(dir.path(), "sim_b.csv")
        && read(dir.path(), "sim_a.txt") == read(dir.path(), "sim_b.txt");

    // knockoffs: repeated with the same seed
    for out in ["kn_a", "kn_b"] {
        run_ok(
            &["knockoffs", "data.csv", "--response", "y", "--seed", "23", "--out", out],
            dir.path(),
        );
    }
    let knockoffs_same = read(dir.path(), "kn_a.csv") == read(dir.path(), "kn_b.csv");

    check(
        "criterion 8 (byte-identical outputs for repeated seeded runs, any --threads)",
        select_same && simulate_same && knockoffs_same,
        format!("select = {select_same}, simulate = {simulate_same}, knockoffs = {knockoffs_same}"),
    );
}
