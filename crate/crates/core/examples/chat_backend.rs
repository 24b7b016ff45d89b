//! Use a chat-completion service to paraphrase template messages. Every
//! paraphrase must keep the fact's value verbatim, otherwise the template
//! text is kept.
//!
//!     MEMSIM_LLM_ENDPOINT=http://host/v1/chat/completions MEMSIM_LLM_MODEL=name \
//!     MEMSIM_LLM_TOKEN=... cargo run --example chat_backend

use memsim::surface::llm::{ChatClient, Checks, ClientConfig, Prompts, Rewriter};

fn main() -> memsim::Result<()> {
    let Ok(endpoint) = std::env::var("MEMSIM_LLM_ENDPOINT") else {
        println!("set MEMSIM_LLM_ENDPOINT (and MEMSIM_LLM_MODEL, MEMSIM_LLM_TOKEN) to run this example");
        return Ok(());
    };
    let config = ClientConfig {
        endpoint,
        model: std::env::var("MEMSIM_LLM_MODEL").unwrap_or_default(),
        ..Default::default()
    };
    let rewriter = Rewriter::new(ChatClient::new(config)?, Prompts::shipped(), 3);
    let text = "My cousin Wei Zhang's phone number is 13651039007.";
    let checks = Checks { keep: vec!["13651039007".into(), "Wei Zhang".into()], ..Default::default() };
    let out = rewriter.rewrite("example", "message", text, &checks)?;
    println!("{out:?}");
    Ok(())
}
