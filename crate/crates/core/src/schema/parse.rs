//! Tokenizer and parser for schema text. Statements may use `@type.attr`
//! references, which expand to one statement per entity of that type.

use std::collections::BTreeSet;

use super::{AttributeDef, Cpd, CpdBody, DeterministicFn, Distribution, EntityDef, TableRow, ValueSpace};
use crate::error::{Error, Result};

const SECTIONS: [&str; 4] = ["entities", "attributes", "edges", "cpds"];

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Sym(&'static str),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line = 1;
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some('n') => s.push('\n'),
                            Some(e) => s.push(e),
                            None => return Err(Error::Parse { line, msg: "unterminated string".into() }),
                        },
                        Some('\n') | None => {
                            return Err(Error::Parse { line, msg: "unterminated string".into() })
                        }
                        Some(ch) => s.push(ch),
                    }
                }
                out.push(Token { tok: Tok::Str(s), line });
            }
            '[' | ']' | '(' | ')' | '{' | '}' | ',' | ':' | '=' | '|' => {
                chars.next();
                let sym = match c {
                    '[' => "[",
                    ']' => "]",
                    '(' => "(",
                    ')' => ")",
                    '{' => "{",
                    '}' => "}",
                    ',' => ",",
                    ':' => ":",
                    '=' => "=",
                    _ => "|",
                };
                out.push(Token { tok: Tok::Sym(sym), line });
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || "[](){},:=|\"#".contains(c) {
                        break;
                    }
                    if c == '-' {
                        let mut look = chars.clone();
                        look.next();
                        if look.peek() == Some(&'>') {
                            break;
                        }
                    }
                    s.push(c);
                    chars.next();
                }
                if s.is_empty() {
                    // only "->" reaches here
                    chars.next();
                    if chars.next() != Some('>') {
                        return Err(Error::Parse { line, msg: format!("unexpected character `{c}`") });
                    }
                    out.push(Token { tok: Tok::Sym("->"), line });
                } else {
                    out.push(Token { tok: Tok::Word(s), line });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
enum RawDist {
    Weights(Vec<(String, f64)>),
    UniformOver(Vec<String>),
    UniformSpace,
    Range(i64, i64),
    Point(String),
}

#[derive(Clone, Debug)]
enum RawBody {
    Table {
        rows: Vec<(Vec<(String, String)>, RawDist)>,
        otherwise: Option<RawDist>,
    },
    Copy,
    Const(String),
    Format(String),
    External(String),
}

#[derive(Clone, Debug)]
struct RawAttr {
    id: String,
    display: String,
    space: ValueSpace,
    key: Option<String>,
    line: usize,
}

#[derive(Clone, Debug)]
struct RawCpd {
    target: String,
    parents: Vec<String>,
    body: RawBody,
    line: usize,
}

pub(super) struct Parsed {
    pub entities: Vec<EntityDef>,
    pub attributes: Vec<AttributeDef>,
    pub edges: Vec<(String, String)>,
    pub cpds: Vec<Cpd>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map_or(1, |t| t.line)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { line: self.line(), msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn at_header(&self) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if SECTIONS.contains(&w.as_str()))
            && matches!(self.toks.get(self.pos + 1).map(|t| &t.tok), Some(Tok::Sym(":")))
    }

    fn next(&mut self) -> Result<Tok> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.tok.clone())
            }
            None => self.err("unexpected end of input"),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_word(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == s)
    }

    fn sym(&mut self, s: &str) -> Result<()> {
        if self.is_sym(s) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {:?}", self.peek()))
        }
    }

    fn word(&mut self) -> Result<String> {
        match self.next()? {
            Tok::Word(w) => Ok(w),
            other => {
                self.pos -= 1;
                self.err(format!("expected a name, found {other:?}"))
            }
        }
    }

    fn string(&mut self) -> Result<String> {
        match self.next()? {
            Tok::Str(s) => Ok(s),
            other => {
                self.pos -= 1;
                self.err(format!("expected a quoted string, found {other:?}"))
            }
        }
    }

    /// A value is either a bare word or a quoted string.
    fn value(&mut self) -> Result<String> {
        match self.next()? {
            Tok::Word(w) | Tok::Str(w) => Ok(w),
            other => {
                self.pos -= 1;
                self.err(format!("expected a value, found {other:?}"))
            }
        }
    }

    fn int(&mut self) -> Result<i64> {
        let w = self.word()?;
        w.parse().or_else(|_| self.err(format!("`{w}` is not an integer")))
    }

    fn number(&mut self) -> Result<f64> {
        let w = self.word()?;
        w.parse().or_else(|_| self.err(format!("`{w}` is not a number")))
    }

    fn value_list(&mut self) -> Result<Vec<String>> {
        self.sym("[")?;
        let mut out = Vec::new();
        while !self.is_sym("]") {
            out.push(self.value()?);
            if !self.is_sym("]") {
                self.sym(",")?;
            }
        }
        self.sym("]")?;
        Ok(out)
    }

    fn value_space(&mut self) -> Result<ValueSpace> {
        let kind = self.word()?;
        Ok(match kind.as_str() {
            "categorical" => {
                let ordered = if self.is_word("ordered") {
                    self.pos += 1;
                    true
                } else {
                    false
                };
                ValueSpace::Categorical { values: self.value_list()?, ordered }
            }
            "int_range" => {
                let min = self.int()?;
                let max = self.int()?;
                ValueSpace::IntRange { min, max }
            }
            "digits" => {
                let n = self.int()?;
                if n < 0 {
                    return self.err("negative digit length");
                }
                ValueSpace::Digits { len: n as usize }
            }
            "text" => ValueSpace::Text { generator: self.word()? },
            other => return self.err(format!("unknown value space `{other}`")),
        })
    }

    fn dist(&mut self) -> Result<RawDist> {
        if self.is_sym("{") {
            self.pos += 1;
            let mut w = Vec::new();
            while !self.is_sym("}") {
                let v = self.value()?;
                self.sym(":")?;
                w.push((v, self.number()?));
                if !self.is_sym("}") {
                    self.sym(",")?;
                }
            }
            self.sym("}")?;
            return Ok(RawDist::Weights(w));
        }
        let kw = self.word()?;
        Ok(match kw.as_str() {
            "uniform" if self.is_sym("[") => RawDist::UniformOver(self.value_list()?),
            "uniform" => RawDist::UniformSpace,
            "range" => {
                let a = self.int()?;
                let b = self.int()?;
                RawDist::Range(a, b)
            }
            "point" => RawDist::Point(self.value()?),
            other => return self.err(format!("expected a distribution, found `{other}`")),
        })
    }

    fn cpd(&mut self) -> Result<RawCpd> {
        let line = self.line();
        if !self.is_word("cpd") {
            return self.err("expected `cpd`");
        }
        self.pos += 1;
        let target = self.word()?;
        let mut parents = Vec::new();
        if self.is_sym("|") {
            self.pos += 1;
            parents.push(self.word()?);
            while self.is_sym(",") {
                self.pos += 1;
                parents.push(self.word()?);
            }
        }
        self.sym(":")?;
        let body = if self.is_word("deterministic") {
            self.pos += 1;
            match self.word()?.as_str() {
                "copy" => RawBody::Copy,
                "const" => RawBody::Const(self.value()?),
                "format" => RawBody::Format(self.string()?),
                other => return self.err(format!("unknown deterministic function `{other}`")),
            }
        } else if self.is_word("external") {
            self.pos += 1;
            RawBody::External(self.word()?)
        } else if self.is_word("when") || self.is_word("otherwise") {
            let mut rows = Vec::new();
            let mut otherwise = None;
            loop {
                if self.is_word("when") {
                    self.pos += 1;
                    self.sym("(")?;
                    let mut cond = Vec::new();
                    loop {
                        let p = self.word()?;
                        self.sym("=")?;
                        cond.push((p, self.value()?));
                        if self.is_sym(")") {
                            break;
                        }
                        self.sym(",")?;
                    }
                    self.sym(")")?;
                    self.sym("->")?;
                    rows.push((cond, self.dist()?));
                } else if self.is_word("otherwise") {
                    self.pos += 1;
                    self.sym("->")?;
                    if otherwise.is_some() {
                        return self.err("second `otherwise` row");
                    }
                    otherwise = Some(self.dist()?);
                } else {
                    break;
                }
            }
            RawBody::Table { rows, otherwise }
        } else {
            RawBody::Table { rows: Vec::new(), otherwise: Some(self.dist()?) }
        };
        Ok(RawCpd { target, parents, body, line })
    }
}

/// Entity types referenced through `@type.` in a set of references.
fn templated_types<'a>(refs: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
    refs.into_iter()
        .filter_map(|r| r.strip_prefix('@'))
        .filter_map(|r| r.split_once('.').map(|(t, _)| t.to_string()))
        .collect()
}

/// Replicate a statement once per entity of its templated type.
fn expand<T>(
    refs: Vec<&String>,
    entities: &[EntityDef],
    line: usize,
    build: impl Fn(&dyn Fn(&str) -> String) -> Result<T>,
) -> Result<Vec<T>> {
    let types = templated_types(refs);
    match types.len() {
        0 => Ok(vec![build(&|s: &str| s.to_string())?]),
        1 => {
            let ty = types.first().unwrap();
            let prefix = format!("@{ty}.");
            let instances: Vec<&EntityDef> = entities.iter().filter(|e| &e.entity_type == ty).collect();
            if instances.is_empty() {
                return Err(Error::Reference(format!("line {line}: no entity of type `{ty}`")));
            }
            instances
                .into_iter()
                .map(|e| {
                    let rename = |s: &str| match s.strip_prefix(&prefix) {
                        Some(rest) => format!("{}.{rest}", e.entity_id),
                        None => s.to_string(),
                    };
                    build(&rename)
                })
                .collect()
        }
        _ => Err(Error::Parse {
            line,
            msg: format!("statement mixes templated entity types {types:?}"),
        }),
    }
}

pub(super) fn parse(src: &str) -> Result<Parsed> {
    let mut p = Parser { toks: tokenize(src)?, pos: 0 };
    let mut entities: Vec<EntityDef> = Vec::new();
    let mut raw_attrs = Vec::new();
    let mut raw_edges: Vec<(String, Vec<String>, usize)> = Vec::new();
    let mut raw_cpds = Vec::new();
    let mut seen_sections = BTreeSet::new();

    while !p.at_end() {
        if !p.at_header() {
            return p.err("expected a section header (entities:, attributes:, edges:, cpds:)");
        }
        let section = p.word()?;
        p.sym(":")?;
        if !seen_sections.insert(section.clone()) {
            return p.err(format!("section `{section}` appears twice"));
        }
        while !p.at_end() && !p.at_header() {
            match section.as_str() {
                "entities" => {
                    let entity_id = p.word()?;
                    let entity_type = p.word()?;
                    let display_name = p.string()?;
                    if entity_id.contains('.') || entity_id.starts_with('@') {
                        return p.err(format!("invalid entity id `{entity_id}`"));
                    }
                    entities.push(EntityDef { entity_id, entity_type, display_name });
                }
                "attributes" => {
                    let line = p.line();
                    let id = p.word()?;
                    let display = p.string()?;
                    let space = p.value_space()?;
                    let key = if p.is_word("key") {
                        p.pos += 1;
                        p.sym("=")?;
                        Some(p.word()?)
                    } else {
                        None
                    };
                    raw_attrs.push(RawAttr { id, display, space, key, line });
                }
                "edges" => {
                    let line = p.line();
                    let from = p.word()?;
                    p.sym("->")?;
                    let mut to = vec![p.word()?];
                    while p.is_sym(",") {
                        p.pos += 1;
                        to.push(p.word()?);
                    }
                    raw_edges.push((from, to, line));
                }
                _ => raw_cpds.push(p.cpd()?),
            }
        }
    }

    let mut attributes = Vec::new();
    for ra in &raw_attrs {
        attributes.extend(expand(vec![&ra.id], &entities, ra.line, |rn| {
            let attr_id = rn(&ra.id);
            let Some((entity_id, local)) = attr_id.split_once('.') else {
                return Err(Error::Parse {
                    line: ra.line,
                    msg: format!("attribute id `{attr_id}` must be <entity>.<name>"),
                });
            };
            if local.is_empty() {
                return Err(Error::Parse { line: ra.line, msg: format!("empty attribute name in `{attr_id}`") });
            }
            Ok(AttributeDef {
                entity_id: entity_id.to_string(),
                attr_id: attr_id.clone(),
                display_name: ra.display.clone(),
                value_space: ra.space.clone(),
                shared_key: ra.key.clone(),
            })
        })?);
    }

    let mut edges = Vec::new();
    for (from, tos, line) in &raw_edges {
        for to in tos {
            edges.extend(expand(vec![from, to], &entities, *line, |rn| Ok((rn(from), rn(to))))?);
        }
    }

    let space_of = |id: &str, line: usize| -> Result<ValueSpace> {
        attributes
            .iter()
            .find(|a: &&AttributeDef| a.attr_id == id)
            .map(|a| a.value_space.clone())
            .ok_or_else(|| Error::Reference(format!("line {line}: unknown attribute `{id}`")))
    };

    let mut cpds = Vec::new();
    for rc in &raw_cpds {
        let mut refs = vec![&rc.target];
        refs.extend(rc.parents.iter());
        if let RawBody::Table { rows, .. } = &rc.body {
            for (cond, _) in rows {
                refs.extend(cond.iter().map(|(r, _)| r));
            }
        }
        cpds.extend(expand(refs, &entities, rc.line, |rn| {
            let target = rn(&rc.target);
            let parents: Vec<String> = rc.parents.iter().map(|p| rn(p)).collect();
            let space = space_of(&target, rc.line)?;
            let body = match &rc.body {
                RawBody::Copy => CpdBody::Deterministic(DeterministicFn::Copy),
                RawBody::Const(v) => CpdBody::Deterministic(DeterministicFn::Const(space.parse_value(v)?)),
                RawBody::Format(f) => CpdBody::Deterministic(DeterministicFn::Format(f.clone())),
                RawBody::External(t) => CpdBody::External { template: t.clone() },
                RawBody::Table { rows, otherwise } => {
                    let mut out_rows = Vec::new();
                    for (cond, dist) in rows {
                        let mut when = Vec::with_capacity(parents.len());
                        for parent in &parents {
                            let matching: Vec<&String> =
                                cond.iter().filter(|(r, _)| rn(r) == *parent).map(|(_, v)| v).collect();
                            let [raw] = matching.as_slice() else {
                                return Err(Error::Reference(format!(
                                    "line {}: row of `{target}` must bind parent `{parent}` exactly once",
                                    rc.line
                                )));
                            };
                            when.push(space_of(parent, rc.line)?.parse_value(raw)?);
                        }
                        if let Some((r, _)) = cond.iter().find(|(r, _)| !parents.contains(&rn(r))) {
                            return Err(Error::Reference(format!(
                                "line {}: row of `{target}` binds `{}` which is not a parent",
                                rc.line,
                                rn(r)
                            )));
                        }
                        out_rows.push(TableRow { when, dist: resolve_dist(dist, &space)? });
                    }
                    let otherwise = otherwise.as_ref().map(|d| resolve_dist(d, &space)).transpose()?;
                    CpdBody::Table { rows: out_rows, otherwise }
                }
            };
            Ok(Cpd { target, parents, body })
        })?);
    }

    Ok(Parsed { entities, attributes, edges, cpds })
}

fn resolve_dist(raw: &RawDist, space: &ValueSpace) -> Result<Distribution> {
    Ok(match raw {
        RawDist::Weights(w) => Distribution::Weights(
            w.iter()
                .map(|(v, p)| Ok((space.parse_value(v)?, *p)))
                .collect::<Result<_>>()?,
        ),
        RawDist::UniformOver(vals) => {
            Distribution::UniformOver(vals.iter().map(|v| space.parse_value(v)).collect::<Result<_>>()?)
        }
        RawDist::UniformSpace => Distribution::UniformSpace,
        RawDist::Range(a, b) => {
            if a > b {
                return Err(Error::Distribution(format!("empty range {a}..{b}")));
            }
            Distribution::UniformOver((*a..=*b).map(|i| space.parse_value(&i.to_string())).collect::<Result<_>>()?)
        }
        RawDist::Point(v) => Distribution::point(space.parse_value(v)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_arrows() {
        let toks = tokenize("a.b -> c-d # note\n \"x y\" {p: 0.5}").unwrap();
        let kinds: Vec<Tok> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Word("a.b".into()),
                Tok::Sym("->"),
                Tok::Word("c-d".into()),
                Tok::Str("x y".into()),
                Tok::Sym("{"),
                Tok::Word("p".into()),
                Tok::Sym(":"),
                Tok::Word("0.5".into()),
                Tok::Sym("}"),
            ]
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse("entities:\n  self self \"User\"\nattributes:\n  self.x \"X\" bogus 3\n").err().unwrap();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
        assert!(matches!(parse("cpds\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("entities:\n a b \"unterminated\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn templated_statements_expand_per_entity() {
        let src = r#"
entities:
  self self "User"
  friend_1 friend "Friend 1"
  friend_2 friend "Friend 2"
attributes:
  self.city "City" categorical [north, south]
  @friend.city "City" categorical [north, south]
  @friend.mood "Mood" categorical [calm, busy]
edges:
  self.city -> @friend.city
  @friend.city -> @friend.mood
cpds:
  cpd self.city: uniform
  cpd @friend.city | self.city:
    when (self.city = north) -> {north: 0.9, south: 0.1}
    otherwise -> uniform
  cpd @friend.mood | @friend.city:
    when (@friend.city = north) -> point calm
    when (@friend.city = south) -> point busy
"#;
        let p = parse(src).unwrap();
        assert_eq!(p.attributes.len(), 5);
        assert!(p.edges.contains(&("self.city".into(), "friend_2.city".into())));
        assert!(p.edges.contains(&("friend_1.city".into(), "friend_1.mood".into())));
        assert!(!p.edges.contains(&("friend_1.city".into(), "friend_2.mood".into())));
        let mood2 = p.cpds.iter().find(|c| c.target == "friend_2.mood").unwrap();
        assert_eq!(mood2.parents, vec!["friend_2.city".to_string()]);
    }

    #[test]
    fn mixing_templated_types_is_rejected() {
        let src = r#"
entities:
  a_1 a "A"
  b_1 b "B"
attributes:
  @a.x "X" digits 1
  @b.y "Y" digits 1
edges:
  @a.x -> @b.y
"#;
        assert!(matches!(parse(src), Err(Error::Parse { .. })));
    }
}
