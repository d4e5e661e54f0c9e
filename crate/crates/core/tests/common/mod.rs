#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use senti_prompt::backend::{BackendError, ChatBackend, ChatRequest, Turn};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

/// Records the full message list of every request before delegating.
pub struct Recording<B> {
    pub inner: B,
    pub requests: Mutex<Vec<Vec<Turn>>>,
}

impl<B> Recording<B> {
    pub fn new(inner: B) -> Self {
        Recording {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn take(&self) -> Vec<Vec<Turn>> {
        std::mem::take(&mut self.requests.lock().unwrap())
    }
}

impl<B: ChatBackend> ChatBackend for Recording<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.requests
            .lock()
            .unwrap()
            .push(request.messages().to_vec());
        self.inner.complete(request)
    }
}

const WORDS: &[&str] = &[
    "great",
    "awful",
    "plot",
    "acting",
    "the",
    "was",
    "not",
    "quite",
    "\"really\"",
    "film",
    "battery",
    "stock",
    "fell",
    "rose",
    "{braces}",
    "a,b",
    "ok",
    "café",
    "meh",
    "loved",
];

/// Random review-like text; never contains the role preamble.
pub fn random_review(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..25);
    (0..n)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Rules answering "positive" for reviews containing "great", "Negative."
/// for "awful", and an unparseable shrug otherwise.
pub const PERMISSIVE_RULES: &str = r#"{"match_kind": "substring", "match": "great", "response": "positive", "priority": 2}
{"match_kind": "substring", "match": "awful", "response": "Negative.", "priority": 1}
{"match_kind": "substring", "match": "", "response": "Hard to say, it is mixed.", "priority": 0}
"#;

/// Writes a binary CSV dataset of `n` random reviews plus a manifest.
/// Returns the manifest path.
pub fn write_random_dataset(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = csv::Writer::from_path(dir.join("reviews.csv")).unwrap();
    w.write_record(["review", "sentiment"]).unwrap();
    for _ in 0..n {
        let text = random_review(&mut rng);
        let label = if rng.gen_bool(0.5) {
            "positive"
        } else {
            "Negative"
        };
        w.write_record([text.as_str(), label]).unwrap();
    }
    w.flush().unwrap();
    let manifest = dir.join("datasets.json");
    std::fs::write(
        &manifest,
        r#"{"datasets":[{"name":"movie","format":"csv","path":"reviews.csv","domain":"movie",
        "label_space":"binary","column_map":{"text":"review","label":"sentiment"}}]}"#,
    )
    .unwrap();
    std::fs::write(dir.join("rules.jsonl"), PERMISSIVE_RULES).unwrap();
    manifest
}

/// JSON (or JSON lines) text with every `run_metadata` object nulled out.
pub fn mask_metadata(json: &str) -> String {
    fn walk(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                if let Some(m) = map.get_mut("run_metadata") {
                    *m = serde_json::Value::Null;
                }
                map.values_mut().for_each(walk);
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(walk),
            _ => {}
        }
    }
    let mask = |text: &str| {
        let mut v: serde_json::Value = serde_json::from_str(text).expect("valid JSON");
        walk(&mut v);
        v.to_string()
    };
    if serde_json::from_str::<serde_json::Value>(json).is_ok() {
        return mask(json);
    }
    json.lines()
        .filter(|l| !l.trim().is_empty())
        .map(mask)
        .collect::<Vec<_>>()
        .join("\n")
}
