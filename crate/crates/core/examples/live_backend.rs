//! Extract one image with a real chat-completions endpoint.
//!
//! ```text
//! OPENAI_API_KEY=... cargo run --example live_backend -- image.png [model] [endpoint]
//! ```
//!
//! Any OpenAI-compatible server works; point `endpoint` at it and set the key variable.

use bpmnx::pipeline::{
    BackendConfig, ChatCompletionsBackend, ExtractionJob, Extractor, PromptVariant, RateLimiter, ResponseCache,
};

const KEY_VAR: &str = "OPENAI_API_KEY";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let Some(image_path) = args.next() else {
        eprintln!("usage: live_backend <image.png> [model] [endpoint]");
        std::process::exit(1);
    };
    if std::env::var_os(KEY_VAR).is_none() {
        eprintln!("set {KEY_VAR} to run against a live endpoint");
        std::process::exit(1);
    }
    let model = args.next().unwrap_or_else(|| "gpt-4o".into());
    let endpoint = args.next().unwrap_or_else(|| "https://api.openai.com/v1/chat/completions".into());

    let config = BackendConfig::chat_completions(&model, &endpoint, &model, KEY_VAR);
    let backend = ChatCompletionsBackend::new(config)?;
    let limiter = RateLimiter::new(1, Some(30));
    let cache = ResponseCache::new(std::env::temp_dir().join("bpmnx-cache"));
    let extractor = Extractor::new(&backend, Some(cache), &limiter);

    let image = std::fs::read(&image_path)?;
    let job = ExtractionJob { diagram_id: "live", image: &image, variant: PromptVariant::Baseline, ocr: None, enricher: None };
    let record = extractor.run_extraction(&job)?;
    println!("{} backend call(s), {:.1}s", record.backend_calls, record.latency_secs);
    match &record.outcome.diagram {
        Some(d) => println!("{}", d.to_json()),
        None => println!("unparseable reply:\n{}", record.raw_response),
    }
    Ok(())
}
