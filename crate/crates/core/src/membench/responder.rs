//! Answering a single-choice question from a memory prompt.

use rand::Rng;

use crate::error::{Error, ExternalKind, Result};
use crate::qa::Message;
use crate::rng::stream;
use crate::surface::llm::{ChatClient, Prompts};
use crate::surface::Reader;
use crate::text::contains_verbatim;

pub trait Responder: Send + Sync {
    /// Index of the chosen option. `item` names the episode for errors and
    /// seeded fallbacks.
    fn choose(&self, item: &str, memory: &[&Message], question: &str, choices: &[String]) -> Result<usize>;
}

/// Deterministic responder. It first reads the memory with the template
/// reader and answers the parsed question; failing that it takes the only
/// choice whose text appears in memory; failing that it guesses uniformly
/// with a seed derived from the episode.
pub struct ScriptedResponder {
    reader: Reader,
    seed: u64,
}

impl ScriptedResponder {
    pub fn new(reader: Reader, seed: u64) -> Self {
        ScriptedResponder { reader, seed }
    }
}

impl Responder for ScriptedResponder {
    fn choose(&self, item: &str, memory: &[&Message], question: &str, choices: &[String]) -> Result<usize> {
        if choices.is_empty() {
            return Err(Error::Validation(format!("{item}: no choices")));
        }
        let texts: Vec<&str> = memory.iter().map(|m| m.text.as_str()).collect();
        if let Some(i) = self.reader.answer(&texts, question, choices) {
            return Ok(i);
        }
        let found: Vec<usize> =
            (0..choices.len()).filter(|&i| texts.iter().any(|t| contains_verbatim(t, &choices[i]))).collect();
        if let [only] = found.as_slice() {
            return Ok(*only);
        }
        Ok(stream(self.seed, &format!("guess/{item}")).gen_range(0..choices.len()))
    }
}

/// Memory prompt lines: "[time, place] text".
pub fn memory_prompt(memory: &[&Message]) -> String {
    memory
        .iter()
        .map(|m| format!("[{}, {}] {}", crate::qa::format_time(&m.time), m.place, m.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Answers through a chat-completion service.
pub struct ChatResponder {
    client: ChatClient,
    prompts: Prompts,
}

impl ChatResponder {
    pub fn new(client: ChatClient, prompts: Prompts) -> Self {
        ChatResponder { client, prompts }
    }
}

/// The first standalone choice letter in a reply.
pub fn parse_letter(reply: &str, n: usize) -> Option<usize> {
    let first = reply.trim().trim_start_matches(['(', '[', '*']).chars().next()?;
    let i = (first.to_ascii_uppercase() as u32).checked_sub('A' as u32)? as usize;
    let next = reply.trim().trim_start_matches(['(', '[', '*']).chars().nth(1);
    (i < n && next.is_none_or(|c| !c.is_alphanumeric())).then_some(i)
}

impl Responder for ChatResponder {
    fn choose(&self, item: &str, memory: &[&Message], question: &str, choices: &[String]) -> Result<usize> {
        let listed: Vec<String> =
            choices.iter().enumerate().map(|(i, c)| format!("{}. {c}", crate::qa::choice_letter(i))).collect();
        let (system, user) = self.prompts.answer(&memory_prompt(memory), question, &listed.join("\n"))?;
        let reply = self.client.complete(item, &system, &user)?;
        parse_letter(&reply, choices.len()).ok_or_else(|| Error::External {
            item: item.to_string(),
            kind: ExternalKind::Protocol,
            detail: format!("reply `{reply}` names no choice"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letters_parse_strictly() {
        assert_eq!(parse_letter("B", 4), Some(1));
        assert_eq!(parse_letter("(c) because", 4), Some(2));
        assert_eq!(parse_letter("d.", 4), Some(3));
        assert_eq!(parse_letter("E", 4), None);
        assert_eq!(parse_letter("Answer: A", 4), None);
        assert_eq!(parse_letter("", 4), None);
    }
}
