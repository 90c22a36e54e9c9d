#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempamb::domain::{Question, Source, TimeRange, Year};
use tempamb::oracle::{Oracle, SyntheticOracle, SyntheticWorld};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn range(a: Year, b: Year) -> TimeRange {
    TimeRange::new(a, b).unwrap()
}

/// Answer at `year` read straight off a timeline, independent of the
/// library's lookup.
pub fn answer_at(timeline: &[(Year, String)], year: Year) -> &str {
    let mut current = None;
    for (from, a) in timeline {
        if *from <= year {
            current = Some(a.as_str());
        }
    }
    current.expect("timeline starts before the range")
}

pub fn truly_ambiguous(timeline: &[(Year, String)], r: &TimeRange) -> bool {
    let anchor = answer_at(timeline, r.start_year());
    (r.start_year() + 1..=r.end_year()).any(|y| answer_at(timeline, y) != anchor)
}

/// Random piecewise-constant timeline: zero to three change points spread a
/// little beyond both ends of the range, answers from a pool of three so a
/// change may return to an earlier answer or repeat the current one.
pub fn random_timeline(rng: &mut ChaCha8Rng, r: &TimeRange) -> Vec<(Year, String)> {
    let pool = ["alpha", "beta", "gamma"];
    let mut years: Vec<Year> = (0..rng.random_range(0..=3))
        .map(|_| rng.random_range(r.start_year() - 2..=r.end_year() + 2))
        .filter(|y| *y > r.start_year() - 5)
        .collect();
    years.sort_unstable();
    years.dedup();
    let mut tl = vec![(r.start_year() - 5, pool[rng.random_range(0..3)].to_string())];
    for y in years {
        tl.push((y, pool[rng.random_range(0..3)].to_string()));
    }
    tl
}

pub struct Worlds {
    pub questions: Vec<Question>,
    pub ranges: Vec<TimeRange>,
    pub timelines: Vec<Vec<(Year, String)>>,
    pub oracle: SyntheticOracle,
}

/// `n` seeded worlds, one question each, over ranges of varying length.
pub fn random_worlds(n: usize, seed: u64) -> Worlds {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = SyntheticWorld::default();
    let mut questions = Vec::new();
    let mut ranges = Vec::new();
    let mut timelines = Vec::new();
    for i in 0..n {
        let start = rng.random_range(1980..2010);
        let r = range(start, start + rng.random_range(6..=30));
        let tl = random_timeline(&mut rng, &r);
        let id = format!("w{i}");
        world.insert(id.clone(), tl.clone()).unwrap();
        questions.push(Question::new(id, &format!("what is fact number {i}?"), None, Source::Other).unwrap());
        ranges.push(r);
        timelines.push(tl);
    }
    let oracle = SyntheticOracle::new(world, &questions);
    Worlds {
        questions,
        ranges,
        timelines,
        oracle,
    }
}

/// Minimal OpenAI-style chat-completions server on localhost. Each request
/// is answered by a synthetic oracle and counted.
pub struct ChatServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

impl ChatServer {
    pub fn start(oracle: SyntheticOracle) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0;
                let mut line = String::new();
                loop {
                    line.clear();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let l = line.trim_end();
                    if l.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = l.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            content_length = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0; content_length];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                counter.fetch_add(1, Ordering::SeqCst);
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
                let prompt = req["messages"][0]["content"].as_str().unwrap_or("");
                let answer = oracle.complete(prompt).unwrap_or_else(|_| "unknown".into());
                let reply = serde_json::json!({
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": answer}}]
                })
                .to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    reply.len(),
                    reply
                );
            }
        });
        ChatServer { url, requests }
    }

    pub fn count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}
