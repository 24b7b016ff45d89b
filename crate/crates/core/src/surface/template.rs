//! `{name}` placeholder templates, rendered forwards into text and compiled
//! backwards into regular expressions for the scripted reader.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Part {
    Lit(String),
    Slot(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    source: String,
    parts: Vec<Part>,
}

impl Template {
    pub fn parse(source: &str) -> Result<Self> {
        let mut parts = Vec::new();
        let mut rest = source;
        while let Some(open) = rest.find(['{', '}']) {
            if rest.as_bytes()[open] == b'}' {
                return Err(Error::Config(format!("unbalanced `}}` in template `{source}`")));
            }
            if open > 0 {
                parts.push(Part::Lit(rest[..open].to_string()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| Error::Config(format!("unclosed `{{` in template `{source}`")))?;
            let name = &rest[open + 1..open + close];
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::Config(format!("bad placeholder `{{{name}}}` in template `{source}`")));
            }
            parts.push(Part::Slot(name.to_string()));
            rest = &rest[open + close + 1..];
        }
        if !rest.is_empty() {
            parts.push(Part::Lit(rest.to_string()));
        }
        Ok(Template { source: source.to_string(), parts })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            Part::Slot(s) => Some(s.as_str()),
            Part::Lit(_) => None,
        })
    }

    pub fn has_slot(&self, name: &str) -> bool {
        self.slots().any(|s| s == name)
    }

    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String> {
        let mut out = String::new();
        for p in &self.parts {
            match p {
                Part::Lit(s) => out.push_str(s),
                Part::Slot(name) => out.push_str(vars.get(name.as_str()).ok_or_else(|| {
                    Error::MissingTemplate(format!("no value for `{{{name}}}` in `{}`", self.source))
                })?),
            }
        }
        Ok(out)
    }

    /// A regex source for this template: slots found in `fixed` match their
    /// text literally, the others become lazy capture groups. Returns the
    /// source and the slot name behind each capture group, in order.
    pub fn pattern(&self, fixed: &BTreeMap<&str, String>) -> (String, Vec<String>) {
        let mut re = String::from("^");
        let mut groups = Vec::new();
        for p in &self.parts {
            match p {
                Part::Lit(s) => re.push_str(&regex::escape(s)),
                Part::Slot(name) => match fixed.get(name.as_str()) {
                    Some(text) => re.push_str(&regex::escape(text)),
                    None => {
                        re.push_str(&format!("(?P<g{}>.+?)", groups.len()));
                        groups.push(name.clone());
                    }
                },
            }
        }
        re.push('$');
        (re, groups)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_invert() {
        let t = Template::parse("{Entity} is {value} years old.").unwrap();
        assert_eq!(t.slots().collect::<Vec<_>>(), ["Entity", "value"]);
        let vars = BTreeMap::from([("Entity", "My cousin".to_string()), ("value", "36".to_string())]);
        let text = t.render(&vars).unwrap();
        assert_eq!(text, "My cousin is 36 years old.");
        let (src, groups) = t.pattern(&BTreeMap::new());
        let caps = regex::Regex::new(&src).unwrap().captures(&text).unwrap();
        assert_eq!(groups, ["Entity", "value"]);
        assert_eq!(&caps["g0"], "My cousin");
        assert_eq!(&caps["g1"], "36");
    }

    #[test]
    fn malformed_templates() {
        for bad in ["{", "}", "{}", "a {b c}", "x {y"] {
            assert!(Template::parse(bad).is_err(), "{bad}");
        }
        assert!(Template::parse("plain").unwrap().slots().next().is_none());
    }

    #[test]
    fn missing_variable_is_reported() {
        let t = Template::parse("{a} and {b}").unwrap();
        let vars = BTreeMap::from([("a", "x".to_string())]);
        assert!(matches!(t.render(&vars), Err(Error::MissingTemplate(_))));
    }
}
