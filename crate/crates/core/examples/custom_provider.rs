// Plug in any completion backend as a closure. Here it fails twice with a
// transient error before answering, to show the retry path.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use lakeview::gateway::{bindings, CompletionRequest, Gateway, GatewayConfig, Phase, ProviderError, TemplateId};

pub fn main() -> anyhow::Result<()> {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = calls.clone();
    let provider = move |req: &CompletionRequest<'_>| {
        if seen.fetch_add(1, Ordering::SeqCst) < 2 {
            return Err(ProviderError::transient("busy"));
        }
        assert!(req.prompt.contains("Monarch"));
        Ok("- Monarch: Charles III".to_string())
    };
    let config = GatewayConfig {
        model: "closure".into(),
        backoff: Duration::from_millis(10),
        ..GatewayConfig::default()
    };
    let gateway = Gateway::new(config, Some(Arc::new(provider)))?;
    let b = bindings([("chunk", "Monarch: Charles III\nCapital: Ottawa"), ("attribute", "monarch")]);
    let answer = gateway.complete(TemplateId::AttrExtract, &b, Phase::Oracle)?;
    println!("{answer:?} after {} provider calls", calls.load(Ordering::SeqCst));
    println!("{}", serde_json::to_string(&gateway.ledger().to_json())?);
    Ok(())
}
