//! Canonical text form of a schema. Templated statements are written out
//! per entity, so `load_schema(serialize_schema(s)) == s`.

use std::fmt::Write;

use super::{CpdBody, DeterministicFn, Distribution, Schema, Value, ValueSpace};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Text(s) => quote(s),
    }
}

fn value_list<'a>(vals: impl Iterator<Item = String> + 'a) -> String {
    format!("[{}]", vals.collect::<Vec<_>>().join(", "))
}

fn space(vs: &ValueSpace) -> String {
    match vs {
        ValueSpace::Categorical { values, ordered } => format!(
            "categorical {}{}",
            if *ordered { "ordered " } else { "" },
            value_list(values.iter().map(|v| quote(v)))
        ),
        ValueSpace::IntRange { min, max } => format!("int_range {min} {max}"),
        ValueSpace::Digits { len } => format!("digits {len}"),
        ValueSpace::Text { generator } => format!("text {generator}"),
    }
}

fn dist(d: &Distribution) -> String {
    match d {
        Distribution::Weights(w) => format!(
            "{{{}}}",
            w.iter().map(|(v, p)| format!("{}: {p:?}", value(v))).collect::<Vec<_>>().join(", ")
        ),
        Distribution::UniformOver(vals) => format!("uniform {}", value_list(vals.iter().map(value))),
        Distribution::UniformSpace => "uniform".to_string(),
    }
}

/// Render a schema in canonical text form.
pub fn serialize_schema(schema: &Schema) -> String {
    let mut out = String::new();
    out.push_str("entities:\n");
    for e in &schema.entities {
        let _ = writeln!(out, "  {} {} {}", e.entity_id, e.entity_type, quote(&e.display_name));
    }
    out.push_str("\nattributes:\n");
    for a in &schema.attributes {
        let _ = write!(out, "  {} {} {}", a.attr_id, quote(&a.display_name), space(&a.value_space));
        if let Some(k) = &a.shared_key {
            let _ = write!(out, " key={k}");
        }
        out.push('\n');
    }
    out.push_str("\nedges:\n");
    for (from, to) in &schema.edges {
        let _ = writeln!(out, "  {from} -> {to}");
    }
    out.push_str("\ncpds:\n");
    for c in &schema.cpds {
        let _ = write!(out, "  cpd {}", c.target);
        if !c.parents.is_empty() {
            let _ = write!(out, " | {}", c.parents.join(", "));
        }
        out.push(':');
        match &c.body {
            CpdBody::Deterministic(DeterministicFn::Copy) => out.push_str(" deterministic copy\n"),
            CpdBody::Deterministic(DeterministicFn::Const(v)) => {
                let _ = writeln!(out, " deterministic const {}", value(v));
            }
            CpdBody::Deterministic(DeterministicFn::Format(f)) => {
                let _ = writeln!(out, " deterministic format {}", quote(f));
            }
            CpdBody::External { template } => {
                let _ = writeln!(out, " external {template}");
            }
            CpdBody::Table { rows, otherwise } if rows.is_empty() => {
                let _ = writeln!(out, " {}", dist(otherwise.as_ref().expect("validated table")));
            }
            CpdBody::Table { rows, otherwise } => {
                out.push('\n');
                for r in rows {
                    let cond: Vec<String> =
                        c.parents.iter().zip(&r.when).map(|(p, v)| format!("{p} = {}", value(v))).collect();
                    let _ = writeln!(out, "    when ({}) -> {}", cond.join(", "), dist(&r.dist));
                }
                if let Some(d) = otherwise {
                    let _ = writeln!(out, "    otherwise -> {}", dist(d));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::super::{load_schema, DAILY_LIFE_SCHEMA};
    use super::*;

    #[test]
    fn daily_life_round_trips() {
        let s = load_schema(DAILY_LIFE_SCHEMA).unwrap();
        let text = serialize_schema(&s);
        assert_eq!(load_schema(&text).unwrap(), s);
        assert_eq!(serialize_schema(&load_schema(&text).unwrap()), text);
    }

    fn chain_schema(weights: &[Vec<f64>], labels: &[String]) -> String {
        // attribute i depends on attribute i-1; each row distribution is a
        // normalised weight vector over `labels`.
        let mut src = String::from("entities:\n  self self \"Odd \\\"name\\\"\"\nattributes:\n");
        for i in 0..weights.len() {
            let vals: Vec<String> = labels.iter().map(|l| quote(l)).collect();
            src += &format!("  self.a{i} \"A {i}\" categorical [{}]\n", vals.join(", "));
        }
        src += "edges:\n";
        for i in 1..weights.len() {
            src += &format!("  self.a{} -> self.a{i}\n", i - 1);
        }
        src += "cpds:\n";
        for (i, w) in weights.iter().enumerate() {
            let total: f64 = w.iter().sum();
            let d: Vec<String> = labels.iter().zip(w).map(|(l, p)| format!("{}: {:?}", quote(l), p / total)).collect();
            if i == 0 {
                src += &format!("  cpd self.a0: {{{}}}\n", d.join(", "));
            } else {
                src += &format!(
                    "  cpd self.a{i} | self.a{}:\n    when (self.a{} = {}) -> {{{}}}\n    otherwise -> uniform\n",
                    i - 1,
                    i - 1,
                    quote(&labels[0]),
                    d.join(", ")
                );
            }
        }
        src
    }

    proptest! {
        #[test]
        fn generated_schemas_round_trip(
            weights in prop::collection::vec(prop::collection::vec(1u32..100, 3), 1..5),
            labels in prop::collection::btree_set("[a-zA-Z ,:\\-\"]{1,8}", 3),
        ) {
            let labels: Vec<String> = labels.into_iter().collect();
            let weights: Vec<Vec<f64>> = weights.iter().map(|w| w.iter().map(|&x| x as f64).collect()).collect();
            let src = chain_schema(&weights, &labels);
            let s = load_schema(&src).unwrap();
            let back = load_schema(&serialize_schema(&s)).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
