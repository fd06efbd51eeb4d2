use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use log::{debug, warn};

use super::cache::RunKey;
use super::endpoint::{parse_word_list, EndpointError, GenerationEndpoint, GenerationRequest};
use super::slice::{first_word, slice_first_word};
use super::{GenerationCache, GenerationRecord, PromptMode, RejectionStats};
use crate::corpus::Context;
use crate::error::{Error, Result};
use crate::util::derive_seed;

#[derive(Debug, Clone)]
pub struct CollectionConfig {
    pub model_id: String,
    pub n_per_context: usize,
    pub temperature: f64,
    pub prompt_mode: PromptMode,
    pub top_p: Option<f64>,
    pub max_tokens: u32,
    /// Attempts per context are capped at this multiple of `n_per_context`.
    pub retry_cap_factor: usize,
    /// Transport retries per request.
    pub max_retries: u32,
    pub backoff: Duration,
    pub concurrency: usize,
    pub seed: u64,
}

impl Default for CollectionConfig {
    fn default() -> Self {
        CollectionConfig {
            model_id: "model".into(),
            n_per_context: 40,
            temperature: 1.0,
            prompt_mode: PromptMode::Completion,
            top_p: None,
            max_tokens: 10,
            retry_cap_factor: 5,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            concurrency: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CollectionOutcome {
    /// Attempts per context in context order, up to the n-th accepted draw.
    pub records: Vec<GenerationRecord>,
    pub stats: RejectionStats,
    /// Contexts that hit the retry cap before reaching `n_per_context`.
    pub incomplete: Vec<String>,
    pub network_requests: usize,
}

struct Shared<'a> {
    endpoint: &'a dyn GenerationEndpoint,
    config: &'a CollectionConfig,
    cache: Mutex<&'a mut GenerationCache>,
    requests: AtomicUsize,
    abort: AtomicBool,
}

/// Gathers `n_per_context` accepted draws for every context, reusing and
/// extending `cache`. A cache that already holds enough draws triggers no
/// requests at all.
pub fn collect_generations(
    contexts: &[Context],
    endpoint: &dyn GenerationEndpoint,
    config: &CollectionConfig,
    cache: &mut GenerationCache,
) -> Result<CollectionOutcome> {
    if config.n_per_context == 0 {
        return Err(Error::Usage("n_per_context must be at least 1".into()));
    }
    if !(config.temperature > 0.0) {
        return Err(Error::Usage("temperature must be positive".into()));
    }
    let shared = Shared {
        endpoint,
        config,
        cache: Mutex::new(cache),
        requests: AtomicUsize::new(0),
        abort: AtomicBool::new(false),
    };
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<(Vec<GenerationRecord>, bool)>>>> =
        Mutex::new((0..contexts.len()).map(|_| None).collect());
    let workers = config.concurrency.clamp(1, contexts.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if shared.abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= contexts.len() {
                    break;
                }
                let result = collect_one(&contexts[i], &shared);
                if result.is_err() {
                    shared.abort.store(true, Ordering::Relaxed);
                }
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });

    let mut outcome = CollectionOutcome {
        network_requests: shared.requests.load(Ordering::Relaxed),
        ..Default::default()
    };
    for (ctx, slot) in contexts.iter().zip(slots.into_inner().unwrap()) {
        match slot {
            Some(Ok((records, complete))) => {
                if !complete {
                    outcome.incomplete.push(ctx.context_id.clone());
                }
                outcome.records.extend(records);
            }
            Some(Err(e)) => return Err(e),
            // Skipped after another context failed.
            None => continue,
        }
    }
    outcome.stats = RejectionStats::from_records(&outcome.records);
    Ok(outcome)
}

fn request_with_retry(
    ctx: &Context,
    request: &GenerationRequest<'_>,
    shared: &Shared<'_>,
) -> Result<Vec<String>> {
    let cfg = shared.config;
    let mut delay = cfg.backoff;
    for attempt in 0..=cfg.max_retries {
        shared.requests.fetch_add(1, Ordering::Relaxed);
        match shared.endpoint.generate(request) {
            Ok(texts) => return Ok(texts),
            Err(EndpointError::Transient(m)) if attempt < cfg.max_retries => {
                debug!("{}: retrying after {m}", ctx.context_id);
                std::thread::sleep(delay);
                delay *= 2;
            }
            Err(e) => {
                return Err(Error::Collection {
                    context_id: ctx.context_id.clone(),
                    message: e.to_string(),
                })
            }
        }
    }
    unreachable!("retry loop always returns")
}

fn accepted(records: &[GenerationRecord]) -> usize {
    records.iter().filter(|r| !r.rejected).count()
}

fn collect_one(ctx: &Context, shared: &Shared<'_>) -> Result<(Vec<GenerationRecord>, bool)> {
    let cfg = shared.config;
    let n = cfg.n_per_context;
    let key = RunKey::new(&ctx.context_id, &cfg.model_id, cfg.prompt_mode, cfg.temperature, cfg.top_p);
    let mut attempts = shared.cache.lock().unwrap().attempts(&key).to_vec();
    let cap = cfg.retry_cap_factor.max(1) * n;
    let diverse = cfg.prompt_mode == PromptMode::ChatDiverse;
    let complete = loop {
        let ok = accepted(&attempts);
        if ok >= n || (diverse && ok > 0) {
            break true;
        }
        if attempts.len() >= cap {
            warn!("{}: retry cap of {cap} attempts reached with {ok} words", ctx.context_id);
            break false;
        }
        let base = attempts.len() as u64;
        let want = if diverse { n } else { (n - ok).min(cap - attempts.len()) };
        let request = GenerationRequest {
            context: ctx,
            n: want,
            temperature: cfg.temperature,
            prompt_mode: cfg.prompt_mode,
            top_p: cfg.top_p,
            max_tokens: cfg.max_tokens,
            seed: Some(derive_seed(cfg.seed, &ctx.context_id, base)),
        };
        let texts = request_with_retry(ctx, &request, shared)?;
        let drafts: Vec<(String, Option<String>)> = match cfg.prompt_mode {
            PromptMode::Completion => texts
                .into_iter()
                .map(|t| {
                    let w = slice_first_word(&t);
                    (t, w)
                })
                .collect(),
            PromptMode::ChatIndependent => texts
                .into_iter()
                .map(|t| {
                    let w = first_word(&t);
                    (t, w)
                })
                .collect(),
            PromptMode::ChatDiverse => {
                let reply = texts.into_iter().next().unwrap_or_default();
                let items = parse_word_list(&reply);
                if items.is_empty() {
                    vec![(reply, None)]
                } else {
                    if items.len() < n {
                        warn!("{}: word list has {} of {n} items", ctx.context_id, items.len());
                    }
                    items
                        .into_iter()
                        .take(n)
                        .map(|t| {
                            let w = first_word(&t);
                            (t, w)
                        })
                        .collect()
                }
            }
        };
        // An empty reply still counts as one failed attempt.
        let drafts = if drafts.is_empty() {
            vec![(String::new(), None)]
        } else {
            drafts
        };
        let new: Vec<GenerationRecord> = drafts
            .into_iter()
            .enumerate()
            .map(|(i, (raw_text, sliced_word))| {
                let sample_index = base + i as u64;
                GenerationRecord {
                    context_id: ctx.context_id.clone(),
                    model_id: cfg.model_id.clone(),
                    sample_index,
                    raw_text,
                    rejected: sliced_word.is_none(),
                    sliced_word,
                    temperature: cfg.temperature,
                    prompt_mode: cfg.prompt_mode,
                    seed: Some(derive_seed(cfg.seed, &ctx.context_id, sample_index)),
                    top_p: cfg.top_p,
                }
            })
            .collect();
        shared.cache.lock().unwrap().append(&new)?;
        attempts.extend(new);
    };
    // Keep attempts up to and including the n-th accepted draw.
    let mut seen = 0;
    let cut = attempts
        .iter()
        .position(|r| {
            if !r.rejected {
                seen += 1;
            }
            seen == n
        })
        .map_or(attempts.len(), |i| i + 1);
    attempts.truncate(cut);
    Ok((attempts, complete))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpd::Cpd;
    use crate::sampler::mc_estimate;
    use std::sync::atomic::AtomicUsize;

    struct Fixed {
        text: &'static str,
        calls: AtomicUsize,
    }

    impl GenerationEndpoint for Fixed {
        fn generate(&self, req: &GenerationRequest<'_>) -> std::result::Result<Vec<String>, EndpointError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(vec![self.text.to_string(); req.n])
        }
    }

    /// Rejects every other draw.
    struct Alternating(AtomicUsize);

    impl GenerationEndpoint for Alternating {
        fn generate(&self, req: &GenerationRequest<'_>) -> std::result::Result<Vec<String>, EndpointError> {
            Ok((0..req.n)
                .map(|_| {
                    if self.0.fetch_add(1, Ordering::SeqCst) % 2 == 0 {
                        " cat sat".to_string()
                    } else {
                        String::new()
                    }
                })
                .collect())
        }
    }

    struct Flaky {
        failures_left: AtomicUsize,
        fatal: bool,
    }

    impl GenerationEndpoint for Flaky {
        fn generate(&self, req: &GenerationRequest<'_>) -> std::result::Result<Vec<String>, EndpointError> {
            if self.fatal {
                return Err(EndpointError::Fatal("HTTP 401".into()));
            }
            if self.failures_left.load(Ordering::SeqCst) > 0 {
                self.failures_left.fetch_sub(1, Ordering::SeqCst);
                return Err(EndpointError::Transient("timeout".into()));
            }
            Ok(vec![" a b".into(); req.n])
        }
    }

    fn contexts(n: usize) -> Vec<Context> {
        (0..n)
            .map(|i| Context {
                context_id: format!("c{i}"),
                passage_id: "1".into(),
                word_number: i as u32 + 1,
                context_text: "Once upon a".into(),
                corpus_word: "time".into(),
            })
            .collect()
    }

    fn config(n: usize, mode: PromptMode) -> CollectionConfig {
        CollectionConfig {
            n_per_context: n,
            prompt_mode: mode,
            backoff: Duration::ZERO,
            ..Default::default()
        }
    }

    #[test]
    fn degenerate_endpoint() {
        let ep = Fixed { text: " the", calls: AtomicUsize::new(0) };
        let mut cache = GenerationCache::in_memory();
        let out = collect_generations(&contexts(3), &ep, &config(5, PromptMode::ChatIndependent), &mut cache)
            .unwrap();
        assert_eq!(out.records.len(), 15);
        assert!(out.records.iter().all(|r| r.sliced_word.as_deref() == Some("the")));
        assert_eq!(out.stats.rejection_rate, 0.0);

        // In completion mode a bare final word may be truncated.
        let mut cache = GenerationCache::in_memory();
        let out = collect_generations(&contexts(1), &ep, &config(2, PromptMode::Completion), &mut cache)
            .unwrap();
        assert_eq!(out.incomplete, vec!["c0"]);
        assert_eq!(out.stats.attempts, 10);
        assert_eq!(out.stats.rejection_rate, 1.0);
    }

    #[test]
    fn complete_cache_makes_no_requests() {
        let ep = Fixed { text: " the end", calls: AtomicUsize::new(0) };
        let cfg = config(4, PromptMode::Completion);
        let mut cache = GenerationCache::in_memory();
        let first = collect_generations(&contexts(2), &ep, &cfg, &mut cache).unwrap();
        let calls = ep.calls.load(Ordering::SeqCst);
        assert!(calls > 0);
        let second = collect_generations(&contexts(2), &ep, &cfg, &mut cache).unwrap();
        assert_eq!(second.network_requests, 0);
        assert_eq!(ep.calls.load(Ordering::SeqCst), calls);
        assert_eq!(first.records, second.records);
    }

    #[test]
    fn rejections_are_retried() {
        let ep = Alternating(AtomicUsize::new(0));
        let mut cache = GenerationCache::in_memory();
        let cfg = CollectionConfig { concurrency: 1, ..config(4, PromptMode::Completion) };
        let out = collect_generations(&contexts(1), &ep, &cfg, &mut cache).unwrap();
        assert!(out.incomplete.is_empty());
        assert_eq!(out.records.iter().filter(|r| !r.rejected).count(), 4);
        assert!(out.stats.rejections >= 3);
        assert_eq!(mc_estimate(&out.records).unwrap(), Cpd::point_mass("cat"));
        let indices: Vec<u64> = out.records.iter().map(|r| r.sample_index).collect();
        assert_eq!(indices, (0..indices.len() as u64).collect::<Vec<_>>());
    }

    #[test]
    fn transient_failures_back_off_then_succeed() {
        let ep = Flaky { failures_left: AtomicUsize::new(2), fatal: false };
        let mut cache = GenerationCache::in_memory();
        let out = collect_generations(&contexts(1), &ep, &config(3, PromptMode::Completion), &mut cache)
            .unwrap();
        assert_eq!(out.network_requests, 3);
        assert_eq!(out.records.len(), 3);
    }

    #[test]
    fn fatal_failure_names_the_context() {
        let ep = Flaky { failures_left: AtomicUsize::new(0), fatal: true };
        let mut cache = GenerationCache::in_memory();
        match collect_generations(&contexts(1), &ep, &config(3, PromptMode::Completion), &mut cache) {
            Err(Error::Collection { context_id, .. }) => assert_eq!(context_id, "c0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diverse_lists_may_be_short() {
        let ep = Fixed { text: "1. time\n2. day\n3. while", calls: AtomicUsize::new(0) };
        let mut cache = GenerationCache::in_memory();
        let out = collect_generations(&contexts(1), &ep, &config(40, PromptMode::ChatDiverse), &mut cache)
            .unwrap();
        let words: Vec<_> = out.records.iter().filter_map(|r| r.sliced_word.as_deref()).collect();
        assert_eq!(words, ["time", "day", "while"]);
        assert!(out.incomplete.is_empty());
        assert_eq!(ep.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn file_cache_persists_attempts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let ep = Fixed { text: " dog ran", calls: AtomicUsize::new(0) };
        let cfg = config(3, PromptMode::Completion);
        {
            let mut cache = GenerationCache::open(&path).unwrap();
            collect_generations(&contexts(2), &ep, &cfg, &mut cache).unwrap();
        }
        let mut cache = GenerationCache::open(&path).unwrap();
        assert_eq!(cache.len(), 6);
        let out = collect_generations(&contexts(2), &ep, &cfg, &mut cache).unwrap();
        assert_eq!(out.network_requests, 0);
    }
}
