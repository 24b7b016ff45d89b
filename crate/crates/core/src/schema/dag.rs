use std::collections::{BTreeMap, BTreeSet};

use super::Schema;
use crate::error::{Error, Result};

/// Kahn ordering of the schema's attribute graph. Among ready attributes the
/// lexicographically smallest id goes first, so the order is reproducible.
pub fn validate_dag(schema: &Schema) -> Result<Vec<String>> {
    let nodes: Vec<&str> = schema.attributes.iter().map(|a| a.attr_id.as_str()).collect();
    let edges: Vec<(&str, &str)> = schema.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    topological_order(&nodes, &edges)
}

pub fn topological_order(nodes: &[&str], edges: &[(&str, &str)]) -> Result<Vec<String>> {
    let mut indegree: BTreeMap<&str, usize> = nodes.iter().map(|n| (*n, 0)).collect();
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut seen_edges = BTreeSet::new();
    for &(from, to) in edges {
        if !seen_edges.insert((from, to)) {
            continue;
        }
        for end in [from, to] {
            if !indegree.contains_key(end) {
                return Err(Error::Reference(format!("edge mentions unknown attribute `{end}`")));
            }
        }
        *indegree.get_mut(to).unwrap() += 1;
        children.entry(from).or_default().push(to);
        parents.entry(to).or_default().push(from);
    }

    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(n) = ready.pop_first() {
        order.push(n.to_string());
        for &c in children.get(n).map(Vec::as_slice).unwrap_or_default() {
            let d = indegree.get_mut(c).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == indegree.len() {
        return Ok(order);
    }

    // Every leftover node has a leftover parent, so walking parents must loop.
    let leftover: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d > 0).map(|(n, _)| *n).collect();
    let mut path = vec![*leftover.first().unwrap()];
    loop {
        let cur = *path.last().unwrap();
        let prev = parents[cur].iter().copied().filter(|p| leftover.contains(p)).min().unwrap();
        if let Some(pos) = path.iter().position(|n| *n == prev) {
            let mut cycle: Vec<String> = path[pos..].iter().rev().map(|s| s.to_string()).collect();
            let n = cycle.len();
            cycle.rotate_left(n - 1);
            return Err(Error::Cycle(cycle));
        }
        path.push(prev);
    }
}
