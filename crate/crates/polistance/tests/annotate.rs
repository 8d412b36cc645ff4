use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use polistance::annotate::prompt::render_zero_shot_document;
use polistance::annotate::{
    annotate_sentiment, idempotency_key, parse_sentiment, parse_stance, run_jobs, zero_shot_stance, Cache, ChatClient,
    ChatRequest, ClientSettings, Fill, Job, PromptTemplate, RetryPolicy, Role, RunOptions, Status, TransportError,
};
use polistance_core::corpus::{DatasetSchema, Example, Split};

/// Replies with `reply(user_text)`, failing transiently on the first
/// `flaky` calls. Tracks call count, peak concurrency and start times.
struct Mock<F: Fn(&str) -> Result<String, TransportError> + Sync> {
    reply: F,
    flaky: usize,
    delay: Duration,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    starts: Mutex<Vec<Instant>>,
}

impl<F: Fn(&str) -> Result<String, TransportError> + Sync> Mock<F> {
    fn new(reply: F) -> Self {
        Self {
            reply,
            flaky: 0,
            delay: Duration::ZERO,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            starts: Mutex::new(Vec::new()),
        }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F: Fn(&str) -> Result<String, TransportError> + Sync> ChatClient for Mock<F> {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.starts.lock().unwrap().push(Instant::now());
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(self.delay);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        assert_eq!(request.temperature, 0.0);
        if n < self.flaky {
            return Err(TransportError::Transient("HTTP 503".into()));
        }
        let user = request.messages.iter().find(|m| m.role == Role::User).map_or("", |m| m.content.as_str());
        (self.reply)(user)
    }
}

fn fast_settings() -> ClientSettings {
    ClientSettings {
        retry: RetryPolicy { max_attempts: 3, initial_backoff_ms: 1, multiplier: 2.0, max_backoff_ms: 4 },
        ..ClientSettings::default()
    }
}

fn examples(n: usize) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let stance = if i % 2 == 0 { "FAVOR" } else { "AGAINST" };
            Example::new(i as u64, format!("tweet number {i}"), "Joe Biden", stance, None, Split::Test).unwrap()
        })
        .collect()
}

#[test]
fn zero_shot_prompt_matches_golden_file() {
    let golden = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/zero_shot_prompt.txt")).unwrap();
    assert_eq!(render_zero_shot_document("Donald Trump", "Make America great again! #MAGA"), golden);
}

#[test]
fn zero_shot_substitutes_only_target_and_text() {
    let t = PromptTemplate::zero_shot_stance();
    let msgs = t.render(&Fill { target: "<T>", text: "<X>", labels: "" });
    assert_eq!(msgs[0].content, t.system);
    assert_eq!(msgs[1].content.replace("<T>", "[Target]").replace("<X>", "[Text]"), t.user);
}

#[test]
fn stance_parse_table() {
    let accepted = [
        ("AGAINST", "AGAINST"),
        ("favor.", "FAVOR"),
        ("Favor", "FAVOR"),
        (" none ", "NONE"),
        ("'AGAINST'", "AGAINST"),
        ("NONE!\n", "NONE"),
        ("**FAVOR**", "FAVOR"),
    ];
    for (reply, want) in accepted {
        assert_eq!(parse_stance(reply), Some(want), "{reply:?}");
    }
    for reply in ["It supports the target", "FAVOUR", "neutral", "FAVOR, mostly", ""] {
        assert_eq!(parse_stance(reply), None, "{reply:?}");
    }
}

#[test]
fn sentiment_parser_accepts_every_label_and_synonym() {
    for schema in [DatasetSchema::p_stance(), DatasetSchema::semeval_2016()] {
        for label in &schema.sentiment_labels {
            for reply in [label.clone(), label.to_uppercase(), format!("{label}."), format!("Sentiment: {label}")] {
                assert_eq!(parse_sentiment(&reply, &schema).as_ref(), Some(label), "{reply:?}");
            }
        }
        for (syn, canonical) in &schema.synonyms {
            if let Some(label) = schema.sentiment_labels.iter().find(|l| l.eq_ignore_ascii_case(canonical)) {
                assert_eq!(parse_sentiment(syn, &schema).as_ref(), Some(label), "{syn:?}");
            }
        }
        assert_eq!(parse_sentiment("I cannot tell from this text.", &schema), None);
    }
}

#[test]
fn cached_requests_make_no_calls_and_keep_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let schema = DatasetSchema::p_stance();
    let template = PromptTemplate::sentiment_default();
    let client = Mock::new(|_| Ok("moderate positive".into()));
    let mut first = examples(6);
    let mut cache = Cache::open(&path).unwrap();
    let s1 = annotate_sentiment(
        &client,
        &fast_settings(),
        &template,
        &schema,
        &mut first,
        &mut cache,
        RunOptions::default(),
    )
    .unwrap();
    assert_eq!((s1.requests, s1.parsed), (6, 6));
    assert_eq!(client.calls(), 6);

    let mut second = examples(6);
    let mut cache = Cache::open(&path).unwrap();
    let s2 = annotate_sentiment(
        &client,
        &fast_settings(),
        &template,
        &schema,
        &mut second,
        &mut cache,
        RunOptions::default(),
    )
    .unwrap();
    assert_eq!((s2.requests, s2.cache_hits), (0, 6));
    assert_eq!(client.calls(), 6);
    assert_eq!(first, second);
    assert!(second.iter().all(|e| e.sentiment.as_deref() == Some("moderate positive")));
}

#[test]
fn transient_errors_are_retried_then_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cache = Cache::open(&dir.path().join("c.jsonl")).unwrap();
    let mut client = Mock::new(|_| Ok("NONE".into()));
    client.flaky = 2;
    let settings = ClientSettings { concurrency: 1, ..fast_settings() };
    let ex = examples(1);
    let refs: Vec<&Example> = ex.iter().collect();
    let (labels, s) = zero_shot_stance(&client, &settings, &refs, &mut cache, RunOptions::default()).unwrap();
    assert_eq!(labels, [Some("NONE".to_string())]);
    assert_eq!(client.calls(), 3);
    assert_eq!(s.parsed, 1);

    let dir = tempfile::tempdir().unwrap();
    let mut cache = Cache::open(&dir.path().join("c.jsonl")).unwrap();
    let mut down = Mock::new(|_| Ok("NONE".into()));
    down.flaky = usize::MAX;
    let ex = examples(3);
    let refs: Vec<&Example> = ex.iter().collect();
    let (labels, s) = zero_shot_stance(&down, &settings, &refs, &mut cache, RunOptions::default()).unwrap();
    assert_eq!(labels, [None, None, None]);
    assert_eq!(s.failed, 3);
    assert_eq!(down.calls(), 9);

    // Failures are cached; they are re-requested only on demand.
    let up = Mock::new(|_| Ok("against".into()));
    let (_, s) = zero_shot_stance(&up, &settings, &refs, &mut cache, RunOptions::default()).unwrap();
    assert_eq!((up.calls(), s.failed), (0, 3));
    let (labels, s) = zero_shot_stance(&up, &settings, &refs, &mut cache, RunOptions { retry_failed: true }).unwrap();
    assert_eq!((up.calls(), s.parsed), (3, 3));
    assert!(labels.iter().all(|l| l.as_deref() == Some("AGAINST")));
}

#[test]
fn permanent_errors_are_not_retried() {
    let dir = tempfile::tempdir().unwrap();
    let mut cache = Cache::open(&dir.path().join("c.jsonl")).unwrap();
    let client = Mock::new(|_| Err(TransportError::Permanent("HTTP 401".into())));
    let ex = examples(2);
    let refs: Vec<&Example> = ex.iter().collect();
    let (_, s) = zero_shot_stance(&client, &fast_settings(), &refs, &mut cache, RunOptions::default()).unwrap();
    assert_eq!((client.calls(), s.failed), (2, 2));
}

#[test]
fn unparsable_replies_are_marked_and_excluded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cache = Cache::open(&dir.path().join("c.jsonl")).unwrap();
    let client = Mock::new(|user| {
        Ok(if user.contains("number 1") { "The writer appears conflicted overall.".into() } else { "neutral".into() })
    });
    let mut ex = examples(3);
    let s = annotate_sentiment(
        &client,
        &fast_settings(),
        &PromptTemplate::sentiment_default(),
        &DatasetSchema::p_stance(),
        &mut ex,
        &mut cache,
        RunOptions::default(),
    )
    .unwrap();
    assert_eq!((s.parsed, s.unparsed), (2, 1));
    assert_eq!(ex[1].sentiment, None);
    let key = idempotency_key("sentiment-seven-class-v1", &ex[1].text);
    let rec = cache.get(&key).unwrap();
    assert_eq!(rec.status, Status::Unparsed);
    assert_eq!(rec.raw.as_deref(), Some("The writer appears conflicted overall."));
}

#[test]
fn concurrency_bound_and_spacing_floor_hold() {
    let dir = tempfile::tempdir().unwrap();
    let mut cache = Cache::open(&dir.path().join("c.jsonl")).unwrap();
    let mut client = Mock::new(|_| Ok("FAVOR".into()));
    client.delay = Duration::from_millis(20);
    let settings = ClientSettings { concurrency: 3, ..fast_settings() };
    let jobs: Vec<Job> = (0..12).map(|i| Job { key: format!("k{i}"), messages: Vec::new() }).collect();
    let parse = |r: &str| parse_stance(r).map(String::from);
    run_jobs(&client, &settings, "t", &jobs, &mut cache, RunOptions::default(), &parse).unwrap();
    assert!(client.peak.load(Ordering::SeqCst) <= 3);
    assert!(client.peak.load(Ordering::SeqCst) >= 2);

    let dir = tempfile::tempdir().unwrap();
    let mut cache = Cache::open(&dir.path().join("c.jsonl")).unwrap();
    let client = Mock::new(|_| Ok("FAVOR".into()));
    let settings = ClientSettings { concurrency: 4, min_interval_ms: 15, ..fast_settings() };
    run_jobs(&client, &settings, "t", &jobs, &mut cache, RunOptions::default(), &parse).unwrap();
    let mut starts = client.starts.lock().unwrap().clone();
    starts.sort();
    for w in starts.windows(2) {
        assert!(w[1] - w[0] >= Duration::from_millis(14), "{:?}", w[1] - w[0]);
    }
}

#[test]
fn cache_tolerates_a_partial_trailing_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let mut cache = Cache::open(&path).unwrap();
    let client = Mock::new(|_| Ok("FAVOR".into()));
    let jobs: Vec<Job> = (0..3).map(|i| Job { key: format!("k{i}"), messages: Vec::new() }).collect();
    let parse = |r: &str| parse_stance(r).map(String::from);
    run_jobs(&client, &fast_settings(), "t", &jobs, &mut cache, RunOptions::default(), &parse).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    bytes.extend_from_slice(br#"{"key":"k9","templ"#);
    fs::write(&path, &bytes).unwrap();

    let mut cache = Cache::open(&path).unwrap();
    assert_eq!(cache.len(), 3);
    let more: Vec<Job> = (0..5).map(|i| Job { key: format!("k{i}"), messages: Vec::new() }).collect();
    let s = run_jobs(&client, &fast_settings(), "t", &more, &mut cache, RunOptions::default(), &parse).unwrap();
    assert_eq!((s.cache_hits, s.requests), (3, 2));
    assert_eq!(Cache::open(&path).unwrap().len(), 5);
}

#[test]
fn idempotency_key_separates_template_and_text() {
    assert_eq!(idempotency_key("a", "b"), idempotency_key("a", "b"));
    assert_ne!(idempotency_key("ab", "c"), idempotency_key("a", "bc"));
    assert_eq!(idempotency_key("t", "x").len(), 64);
}
