//! LLM clients: seven-class sentiment annotation and the zero-shot stance
//! baseline, with a shared cache, retry policy and rate limits.

pub mod cache;
pub mod client;
pub mod parse;
pub mod prompt;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use polistance_core::corpus::{DatasetSchema, Example};
use serde::{Deserialize, Serialize};

pub use cache::{idempotency_key, AnnotationRecord, Cache, Status};
pub use client::{ChatClient, ChatRequest, ClientSettings, HttpChatClient, Pacer, RetryPolicy, TransportError};
pub use parse::{parse_sentiment, parse_stance, ZERO_SHOT_LABELS};
pub use prompt::{ChatMessage, Fill, PromptTemplate, Role};

use crate::artifacts::unix_now;
use crate::error::{Error, Result};

/// One request to make, unless the cache already answers it.
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub key: String,
    pub messages: Vec<ChatMessage>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub total: usize,
    pub cache_hits: usize,
    pub requests: usize,
    pub parsed: usize,
    pub unparsed: usize,
    pub failed: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Re-request keys whose cached record is a transport failure.
    pub retry_failed: bool,
}

fn call_with_retry<C: ChatClient + ?Sized>(
    client: &C,
    request: &ChatRequest,
    retry: &RetryPolicy,
    pacer: &Pacer,
) -> (std::result::Result<String, TransportError>, u32) {
    let max = retry.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        pacer.wait();
        match client.complete(request) {
            Ok(reply) => return (Ok(reply), attempt),
            Err(TransportError::Transient(m)) if attempt < max => {
                log::warn!("attempt {attempt} failed ({m}); retrying");
                std::thread::sleep(retry.backoff(attempt));
                attempt += 1;
            }
            Err(e) => return (Err(e), attempt),
        }
    }
}

/// Resolves every job through the cache or the client. Requests run on up
/// to `settings.concurrency` threads; results are appended to the cache by
/// the calling thread as they arrive. Transport failures are recorded and
/// do not stop the run.
pub fn run_jobs<C: ChatClient + ?Sized>(
    client: &C,
    settings: &ClientSettings,
    template_id: &str,
    jobs: &[Job],
    cache: &mut Cache,
    options: RunOptions,
    parse: &(dyn Fn(&str) -> Option<String> + Sync),
) -> Result<AnnotationSummary> {
    let mut summary = AnnotationSummary { total: jobs.len(), ..Default::default() };
    let mut seen = BTreeSet::new();
    let mut pending: Vec<&Job> = Vec::new();
    for job in jobs {
        if !seen.insert(job.key.as_str()) {
            continue;
        }
        match cache.get(&job.key) {
            Some(r) if !(options.retry_failed && r.status == Status::Failed) => summary.cache_hits += 1,
            _ => pending.push(job),
        }
    }
    summary.requests = pending.len();
    let pacer = Pacer::new(Duration::from_millis(settings.min_interval_ms));
    let next = AtomicUsize::new(0);
    let workers = settings.concurrency.max(1).min(pending.len().max(1));
    let (tx, rx) = mpsc::channel::<AnnotationRecord>();
    let mut write_error = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (pending, next, pacer) = (&pending, &next, &pacer);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = pending.get(i) else { break };
                let request = ChatRequest {
                    model: settings.model.clone(),
                    messages: job.messages.clone(),
                    temperature: settings.temperature,
                    max_tokens: settings.max_tokens,
                };
                let (result, attempts) = call_with_retry(client, &request, &settings.retry, pacer);
                let (status, raw, label, error) = match result {
                    Ok(reply) => match parse(&reply) {
                        Some(l) => (Status::Parsed, Some(reply), Some(l), None),
                        None => (Status::Unparsed, Some(reply), None, None),
                    },
                    Err(e) => (Status::Failed, None, None, Some(e.to_string())),
                };
                let record = AnnotationRecord {
                    key: job.key.clone(),
                    template_id: template_id.to_string(),
                    model: settings.model.clone(),
                    status,
                    raw,
                    label,
                    error,
                    attempts,
                    timestamp: unix_now(),
                };
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for record in rx {
            if write_error.is_none() {
                if let Err(e) = cache.append(record) {
                    write_error = Some(e);
                }
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    for job in jobs {
        match cache.get(&job.key).map(|r| r.status) {
            Some(Status::Parsed) => summary.parsed += 1,
            Some(Status::Unparsed) => summary.unparsed += 1,
            Some(Status::Failed) | None => summary.failed += 1,
        }
    }
    Ok(summary)
}

/// Labels unlabeled examples with sentiment. Examples whose reply does not
/// parse, or whose request failed, keep `sentiment: None` and so get no VAD
/// supervision.
pub fn annotate_sentiment<C: ChatClient + ?Sized>(
    client: &C,
    settings: &ClientSettings,
    template: &PromptTemplate,
    schema: &DatasetSchema,
    examples: &mut [Example],
    cache: &mut Cache,
    options: RunOptions,
) -> Result<AnnotationSummary> {
    if schema.sentiment_labels.is_empty() {
        return Err(Error::Usage(format!("schema {} has no sentiment labels", schema.name)));
    }
    let labels = schema.sentiment_labels.join(", ");
    let todo: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].sentiment.is_none()).collect();
    let jobs: Vec<Job> = todo
        .iter()
        .map(|&i| {
            let ex = &examples[i];
            Job {
                key: idempotency_key(&template.id, &ex.text),
                messages: template.render(&Fill { target: &ex.target, text: &ex.text, labels: &labels }),
            }
        })
        .collect();
    let parse = |reply: &str| parse_sentiment(reply, schema);
    let summary = run_jobs(client, settings, &template.id, &jobs, cache, options, &parse)?;
    for (&i, job) in todo.iter().zip(&jobs) {
        if let Some(AnnotationRecord { status: Status::Parsed, label: Some(l), .. }) = cache.get(&job.key) {
            examples[i].sentiment = Some(l.clone());
        }
    }
    Ok(summary)
}

/// Zero-shot stance for each example; `None` where the reply did not parse
/// or the request failed.
pub fn zero_shot_stance<C: ChatClient + ?Sized>(
    client: &C,
    settings: &ClientSettings,
    examples: &[&Example],
    cache: &mut Cache,
    options: RunOptions,
) -> Result<(Vec<Option<String>>, AnnotationSummary)> {
    let template = PromptTemplate::zero_shot_stance();
    // The key covers the target too, since the same text can appear under
    // several targets.
    let jobs: Vec<Job> = examples
        .iter()
        .map(|ex| Job {
            key: idempotency_key(&template.id, &format!("{}\0{}", ex.target, ex.text)),
            messages: template.render(&Fill { target: &ex.target, text: &ex.text, labels: "" }),
        })
        .collect();
    let parse = |reply: &str| parse_stance(reply).map(String::from);
    let summary = run_jobs(client, settings, &template.id, &jobs, cache, options, &parse)?;
    let labels = jobs
        .iter()
        .map(|j| cache.get(&j.key).filter(|r| r.status == Status::Parsed).and_then(|r| r.label.clone()))
        .collect();
    Ok((labels, summary))
}
