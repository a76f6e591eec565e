//! Shared fixture generators for the integration and acceptance suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgr_core::session::{Document, Query, Session};

pub struct GenOptions {
    pub max_queries: usize,
    pub max_candidates: usize,
    pub click_prob: f64,
    /// Sprinkle grammar meta-characters, unicode, and newlines into texts.
    pub adversarial_text: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            max_queries: 4,
            max_candidates: 5,
            click_prob: 0.45,
            adversarial_text: false,
        }
    }
}

const ADVERSARIAL: [&str; 10] = ["(", ")", "<", ">", ";", "\\", "\n", "日本", "€", "\""];

/// Random sessions with globally unique ids and texts built from fixed-width
/// unique words, so substring collisions cannot confound leakage checks.
pub fn gen_sessions(seed: u64, n: usize, opts: &GenOptions) -> Vec<Session> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut word_no = 0usize;
    let mut doc_no = 0usize;
    let mut word = |rng: &mut ChaCha8Rng, adversarial: bool| {
        word_no += 1;
        let mut w = format!("w{word_no:07}");
        if adversarial && rng.gen_bool(0.35) {
            let extra = ADVERSARIAL[rng.gen_range(0..ADVERSARIAL.len())];
            w.push_str(extra);
        }
        w
    };
    let mut text = |rng: &mut ChaCha8Rng, max_words: usize, adversarial: bool| {
        let k = rng.gen_range(1..=max_words);
        (0..k)
            .map(|_| word(rng, adversarial))
            .collect::<Vec<_>>()
            .join(" ")
    };

    (0..n)
        .map(|i| {
            let m = rng.gen_range(1..=opts.max_queries);
            let queries = (0..m)
                .map(|j| {
                    let n_cand = rng.gen_range(1..=opts.max_candidates);
                    let candidates = (0..n_cand)
                        .map(|_| {
                            doc_no += 1;
                            Document {
                                doc_id: format!("d{doc_no:07}"),
                                text: text(&mut rng, 4, opts.adversarial_text),
                                click: u8::from(rng.gen_bool(opts.click_prob)),
                            }
                        })
                        .collect();
                    Query {
                        query_id: format!("s{i}q{j}"),
                        text: text(&mut rng, 3, opts.adversarial_text),
                        timestamp: j as i64 * 7,
                        candidates,
                    }
                })
                .collect();
            Session {
                session_id: format!("s{i:05}"),
                queries,
            }
        })
        .collect()
}

/// Run the `sgr` binary with the given arguments and optional stdin.
pub fn run_sgr(args: &[&str], stdin: Option<&str>) -> std::process::Output {
    use std::io::Write;
    use std::process::{Command, Stdio};
    let mut child = Command::new(env!("CARGO_BIN_EXE_sgr"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn sgr");
    if let Some(input) = stdin {
        child
            .stdin
            .as_mut()
            .expect("stdin piped")
            .write_all(input.as_bytes())
            .expect("write stdin");
    }
    drop(child.stdin.take());
    child.wait_with_output().expect("sgr exits")
}

pub fn stdout_str(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr_str(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
