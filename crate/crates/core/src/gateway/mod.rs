//! Provider-agnostic completion gateway: template rendering, a
//! record/replay cache keyed by prompt hash, bounded concurrency, and
//! per-phase token accounting.

mod fixtures;
mod provider;
mod template;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slots::Slots;
use crate::tokenizer::{Tokenizer, WordPunctTokenizer};

pub use fixtures::{load as load_fixtures, prompt_hash, CompletionRecord};
pub use provider::{
    CompletionProvider, CompletionRequest, HttpCompletions, ProviderError, DEFAULT_BASE_URL,
    ENV_API_KEY, ENV_BASE_URL,
};
pub use template::{bindings, Bindings, TemplateId};

use fixtures::{FixtureWriter, RecordKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Schema,
    Direct,
    Synthesis,
    Oracle,
    Cleaning,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Schema,
        Phase::Direct,
        Phase::Synthesis,
        Phase::Oracle,
        Phase::Cleaning,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Schema => "schema",
            Phase::Direct => "direct",
            Phase::Synthesis => "synthesis",
            Phase::Oracle => "oracle",
            Phase::Cleaning => "cleaning",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl PhaseCost {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    fn add(&mut self, other: &PhaseCost) {
        self.calls += other.calls;
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

/// Token counts per pipeline phase. Cache hits are counted like provider
/// calls: the ledger measures what the strategy costs, not what this run
/// happened to pay.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostLedger {
    phases: [PhaseCost; 5],
}

impl CostLedger {
    pub fn record(&mut self, phase: Phase, prompt_tokens: u64, completion_tokens: u64) {
        let p = &mut self.phases[phase.index()];
        p.calls += 1;
        p.prompt_tokens += prompt_tokens;
        p.completion_tokens += completion_tokens;
    }

    pub fn phase(&self, phase: Phase) -> PhaseCost {
        self.phases[phase.index()]
    }

    pub fn total(&self) -> PhaseCost {
        let mut t = PhaseCost::default();
        for p in &self.phases {
            t.add(p);
        }
        t
    }

    pub fn total_tokens(&self) -> u64 {
        self.total().total_tokens()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for phase in Phase::ALL {
            map.insert(
                phase.name().to_string(),
                serde_json::to_value(self.phase(phase)).expect("plain struct"),
            );
        }
        map.insert(
            "total".into(),
            serde_json::to_value(self.total()).expect("plain struct"),
        );
        serde_json::Value::Object(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheMode {
    /// Serve only from fixtures; a miss is an error.
    ReplayOnly,
    /// Serve from fixtures, fall back to the provider and record the result.
    #[default]
    ReadThrough,
    /// Ignore existing fixtures, call the provider for every prompt and
    /// record the result.
    Record,
}

impl FromStr for CacheMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replay-only" => Ok(CacheMode::ReplayOnly),
            "read-through" => Ok(CacheMode::ReadThrough),
            "record" => Ok(CacheMode::Record),
            other => Err(Error::Invalid(format!("unknown cache mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub model: String,
    /// Model for the inexpensive atomic-cleaning prompt; defaults to `model`.
    pub small_model: Option<String>,
    pub mode: CacheMode,
    pub fixture_path: Option<PathBuf>,
    pub max_in_flight: usize,
    pub max_tokens: u32,
    pub attempts: u32,
    pub backoff: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            model: "text-davinci-003".into(),
            small_model: None,
            mode: CacheMode::ReadThrough,
            fixture_path: None,
            max_in_flight: 4,
            max_tokens: 500,
            attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

pub struct Gateway {
    config: GatewayConfig,
    provider: Option<Arc<dyn CompletionProvider>>,
    tokenizer: Arc<dyn Tokenizer>,
    cache: RwLock<HashMap<RecordKey, CompletionRecord>>,
    writer: Option<Mutex<FixtureWriter>>,
    ledger: Mutex<CostLedger>,
    slots: Slots,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .field("has_provider", &self.provider.is_some())
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// Build a gateway. In `ReplayOnly` mode the provider may be `None`.
    pub fn new(config: GatewayConfig, provider: Option<Arc<dyn CompletionProvider>>) -> Result<Self> {
        let records = match (&config.fixture_path, config.mode) {
            (Some(path), CacheMode::ReplayOnly | CacheMode::ReadThrough) => fixtures::load(path)?,
            _ => Vec::new(),
        };
        let writer = match (&config.fixture_path, config.mode) {
            (Some(path), CacheMode::ReadThrough | CacheMode::Record) => {
                Some(Mutex::new(FixtureWriter::open(path)?))
            }
            _ => None,
        };
        if config.mode != CacheMode::ReplayOnly && provider.is_none() {
            return Err(Error::Invalid(
                "a provider is required unless running replay-only".into(),
            ));
        }
        let slots = Slots::new(config.max_in_flight);
        Ok(Gateway {
            config,
            provider,
            tokenizer: Arc::new(WordPunctTokenizer),
            cache: RwLock::new(fixtures::index(records)),
            writer,
            ledger: Mutex::new(CostLedger::default()),
            slots,
        })
    }

    /// An in-memory gateway around a provider, with no fixture file.
    pub fn with_provider(provider: Arc<dyn CompletionProvider>, model: impl Into<String>) -> Self {
        let config = GatewayConfig {
            model: model.into(),
            ..GatewayConfig::default()
        };
        Gateway::new(config, Some(provider)).expect("read-through with provider is valid")
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn fixture_path(&self) -> Option<&Path> {
        self.config.fixture_path.as_deref()
    }

    pub fn count_tokens(&self, text: &str) -> usize {
        self.tokenizer.count(text)
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger.lock().expect("ledger lock").clone()
    }

    fn model_for(&self, template: TemplateId) -> &str {
        match (template, &self.config.small_model) {
            (TemplateId::AtomicCleanSmall, Some(small)) => small,
            _ => &self.config.model,
        }
    }

    /// Render `template` and return its completion, charging `phase`.
    pub fn complete(&self, template: TemplateId, bindings: &Bindings, phase: Phase) -> Result<String> {
        self.complete_sample(template, bindings, phase, 0)
    }

    /// As [`Gateway::complete`], for the `sample`-th repeated request of the
    /// same prompt.
    pub fn complete_sample(
        &self,
        template: TemplateId,
        bindings: &Bindings,
        phase: Phase,
        sample: u32,
    ) -> Result<String> {
        let prompt = template.render(bindings)?;
        let model = self.model_for(template).to_string();
        let record = self.complete_prompt(&model, &prompt, sample)?;
        self.ledger.lock().expect("ledger lock").record(
            phase,
            record.prompt_tokens,
            record.completion_tokens,
        );
        log::debug!("{template} [{phase}] {} -> {} tokens", record.prompt_tokens, record.completion_tokens);
        Ok(record.completion)
    }

    fn complete_prompt(&self, model: &str, prompt: &str, sample: u32) -> Result<CompletionRecord> {
        let key = RecordKey {
            model: model.to_string(),
            prompt_hash: prompt_hash(prompt),
            sample,
        };
        if self.config.mode != CacheMode::Record {
            if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
                return Ok(hit.clone());
            }
        }
        let provider = match (&self.provider, self.config.mode) {
            (Some(p), mode) if mode != CacheMode::ReplayOnly => p,
            _ => {
                return Err(Error::FixtureMiss {
                    model: key.model,
                    prompt_hash: key.prompt_hash,
                })
            }
        };
        let completion = self.call_with_retries(provider.as_ref(), model, prompt, sample)?;
        let record = CompletionRecord {
            model: key.model.clone(),
            prompt_hash: key.prompt_hash.clone(),
            prompt: prompt.to_string(),
            prompt_tokens: self.count_tokens(prompt) as u64,
            completion_tokens: self.count_tokens(&completion) as u64,
            completion,
            sample,
        };
        if let Some(writer) = &self.writer {
            writer.lock().expect("writer lock").append(&record)?;
        }
        self.cache
            .write()
            .expect("cache lock")
            .insert(key, record.clone());
        Ok(record)
    }

    fn call_with_retries(
        &self,
        provider: &dyn CompletionProvider,
        model: &str,
        prompt: &str,
        sample: u32,
    ) -> Result<String> {
        let request = CompletionRequest {
            model,
            prompt,
            max_tokens: self.config.max_tokens,
            sample,
        };
        let attempts = self.config.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            let result = {
                let _slot = self.slots.acquire();
                provider.complete(&request)
            };
            match result {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("provider attempt {}/{attempts} failed: {}", attempt + 1, e.message);
                    last = e.message;
                    if !e.retryable {
                        return Err(Error::Provider {
                            attempts: attempt + 1,
                            message: last,
                        });
                    }
                    if attempt + 1 < attempts {
                        thread::sleep(self.config.backoff * 2u32.pow(attempt));
                    }
                }
            }
        }
        Err(Error::Provider {
            attempts,
            message: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn echo() -> Arc<dyn CompletionProvider> {
        Arc::new(|r: &CompletionRequest<'_>| Ok(format!("len {}", r.prompt.len())))
    }

    fn direct_bindings(chunk: &str) -> Bindings {
        bindings([("chunk", chunk), ("topic", "t")])
    }

    #[test]
    fn repeated_prompt_hits_cache_but_counts_twice() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let provider: Arc<dyn CompletionProvider> = Arc::new(move |_: &CompletionRequest<'_>| {
            c.fetch_add(1, Ordering::SeqCst);
            Ok("- A: 1".to_string())
        });
        let gw = Gateway::with_provider(provider, "m");
        let b = direct_bindings("x");
        let first = gw.complete(TemplateId::DirectExtract, &b, Phase::Direct).unwrap();
        let second = gw.complete(TemplateId::DirectExtract, &b, Phase::Direct).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        let ledger = gw.ledger();
        assert_eq!(ledger.phase(Phase::Direct).calls, 2);
        assert_eq!(ledger.phase(Phase::Direct).completion_tokens, 2 * 4);
        assert_eq!(ledger.total_tokens(), ledger.phase(Phase::Direct).total_tokens());
    }

    #[test]
    fn replay_only_miss_is_fixture_miss() {
        let config = GatewayConfig {
            mode: CacheMode::ReplayOnly,
            ..GatewayConfig::default()
        };
        let gw = Gateway::new(config, None).unwrap();
        let err = gw
            .complete(TemplateId::DirectExtract, &direct_bindings("x"), Phase::Direct)
            .unwrap_err();
        assert!(matches!(err, Error::FixtureMiss { .. }), "{err}");
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.jsonl");
        let config = GatewayConfig {
            fixture_path: Some(path.clone()),
            ..GatewayConfig::default()
        };
        let gw = Gateway::new(config.clone(), Some(echo())).unwrap();
        let b = bindings([("chunk", "c"), ("attribute", "Name"), ("function_field", "name")]);
        let recorded = gw.complete(TemplateId::FnGenA, &b, Phase::Synthesis).unwrap();
        assert_eq!(gw.ledger().phase(Phase::Synthesis).calls, 1);

        let replay = Gateway::new(
            GatewayConfig {
                mode: CacheMode::ReplayOnly,
                ..config
            },
            None,
        )
        .unwrap();
        assert_eq!(replay.complete(TemplateId::FnGenA, &b, Phase::Synthesis).unwrap(), recorded);
        let records = load_fixtures(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].prompt_hash, prompt_hash(&records[0].prompt));
    }

    #[test]
    fn record_mode_bypasses_cache() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.jsonl");
        let n = Arc::new(AtomicUsize::new(0));
        let c = n.clone();
        let provider: Arc<dyn CompletionProvider> = Arc::new(move |_: &CompletionRequest<'_>| {
            Ok(format!("v{}", c.fetch_add(1, Ordering::SeqCst)))
        });
        let config = GatewayConfig {
            fixture_path: Some(path.clone()),
            mode: CacheMode::Record,
            ..GatewayConfig::default()
        };
        let b = direct_bindings("x");
        let gw = Gateway::new(config.clone(), Some(provider.clone())).unwrap();
        assert_eq!(gw.complete(TemplateId::DirectExtract, &b, Phase::Direct).unwrap(), "v0");
        let gw = Gateway::new(config, Some(provider)).unwrap();
        assert_eq!(gw.complete(TemplateId::DirectExtract, &b, Phase::Direct).unwrap(), "v1");
        assert_eq!(load_fixtures(&path).unwrap().len(), 2);
    }

    #[test]
    fn retries_transient_failures() {
        let n = Arc::new(AtomicUsize::new(0));
        let c = n.clone();
        let provider: Arc<dyn CompletionProvider> = Arc::new(move |_: &CompletionRequest<'_>| {
            if c.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(ProviderError::transient("503"))
            } else {
                Ok("ok".into())
            }
        });
        let config = GatewayConfig {
            backoff: Duration::ZERO,
            ..GatewayConfig::default()
        };
        let gw = Gateway::new(config.clone(), Some(provider)).unwrap();
        assert_eq!(gw.complete(TemplateId::DirectExtract, &direct_bindings("x"), Phase::Direct).unwrap(), "ok");
        assert_eq!(n.load(Ordering::SeqCst), 3);

        let always: Arc<dyn CompletionProvider> =
            Arc::new(|_: &CompletionRequest<'_>| Err(ProviderError::transient("down")));
        let gw = Gateway::new(config.clone(), Some(always)).unwrap();
        let err = gw.complete(TemplateId::DirectExtract, &direct_bindings("x"), Phase::Direct).unwrap_err();
        assert!(matches!(err, Error::Provider { attempts: 3, .. }));

        let fatal: Arc<dyn CompletionProvider> =
            Arc::new(|_: &CompletionRequest<'_>| Err(ProviderError::fatal("401")));
        let gw = Gateway::new(config, Some(fatal)).unwrap();
        let err = gw.complete(TemplateId::DirectExtract, &direct_bindings("x"), Phase::Direct).unwrap_err();
        assert!(matches!(err, Error::Provider { attempts: 1, .. }));
    }

    #[test]
    fn small_model_routes_atomic_cleaning() {
        let provider: Arc<dyn CompletionProvider> =
            Arc::new(|r: &CompletionRequest<'_>| Ok(r.model.to_string()));
        let config = GatewayConfig {
            model: "big".into(),
            small_model: Some("small".into()),
            ..GatewayConfig::default()
        };
        let gw = Gateway::new(config, Some(provider)).unwrap();
        let small = bindings([
            ("complex_attribute_example", "a"),
            ("complex_extraction_example", "b"),
            ("cleaned_attribute_example", "c"),
            ("cleaned_value_example", "d"),
            ("complex_attribute", "e"),
            ("complex_extraction", "f"),
            ("cleaned_attribute", "g"),
        ]);
        assert_eq!(gw.complete(TemplateId::AtomicCleanSmall, &small, Phase::Cleaning).unwrap(), "small");
        let big = bindings([("complex_attribute", "a"), ("complex_value", "b")]);
        assert_eq!(gw.complete(TemplateId::AtomicCleanBig, &big, Phase::Cleaning).unwrap(), "big");
    }

    #[test]
    fn concurrent_calls_respect_slot_limit() {
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (l, p) = (live.clone(), peak.clone());
        let provider: Arc<dyn CompletionProvider> = Arc::new(move |r: &CompletionRequest<'_>| {
            let now = l.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            thread::sleep(Duration::from_millis(5));
            l.fetch_sub(1, Ordering::SeqCst);
            Ok(r.prompt.len().to_string())
        });
        let config = GatewayConfig {
            max_in_flight: 2,
            ..GatewayConfig::default()
        };
        let gw = Arc::new(Gateway::new(config, Some(provider)).unwrap());
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let gw = gw.clone();
                thread::spawn(move || {
                    gw.complete(TemplateId::DirectExtract, &direct_bindings(&i.to_string()), Phase::Direct)
                        .unwrap()
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(gw.ledger().phase(Phase::Direct).calls, 8);
    }
}
