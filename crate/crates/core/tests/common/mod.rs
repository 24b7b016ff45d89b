//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use memsim::dataset::Dataset;
use memsim::pipeline::{GenerateConfig, Pipeline};
use memsim::sampler::Generators;
use memsim::schema::{load_schema, Schema, DAILY_LIFE_SCHEMA};
use memsim::surface::TemplateSet;

pub struct Env {
    pub schema: Schema,
    pub templates: TemplateSet,
    pub gens: Generators,
}

impl Env {
    pub fn daily_life() -> Self {
        Env { schema: load_schema(DAILY_LIFE_SCHEMA).unwrap(), templates: TemplateSet::daily_life(), gens: Generators::offline() }
    }

    pub fn pipeline(&self) -> Pipeline<'_> {
        Pipeline::new(&self.schema, &self.templates, &self.gens)
    }

    pub fn generate(&self, per_type: usize, seed: u64) -> Dataset {
        self.pipeline().generate(&GenerateConfig::uniform(per_type), seed).unwrap().0
    }
}

/// Chat-completion stand-in: answers every request by applying `reply` to
/// the user prompt.
pub struct ChatStub {
    pub url: String,
    pub requests: Arc<Mutex<usize>>,
}

pub fn chat_stub(reply: impl Fn(&str) -> String + Send + 'static) -> ChatStub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(0));
    let seen = requests.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            *seen.lock().unwrap() += 1;
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
            let user = req.pointer("/messages/1/content").and_then(|c| c.as_str()).unwrap_or_default();
            let payload = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": reply(user)}}]});
            let text = payload.to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
        }
    });
    ChatStub { url, requests }
}

/// Runs the command line in-process, returning the exit code and stdout.
pub fn cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = memsim::cli::run(std::iter::once("memsim").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}
