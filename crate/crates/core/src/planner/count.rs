//! Exact frequency model over token contexts.
//!
//! With a bounded order `m`, the context is the previous `m - 1` tokens
//! (PAD-filled on the left). Without a bound, the context is the whole
//! history, stored as a prefix trie. Only supervised positions are counted.
//! A context never seen in training yields the uniform distribution.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use super::model::NextTokenModel;
use super::PlannerError;
use crate::checkpoint::{Checkpoint, Tensor};
use crate::codec::vocab::PAD;

pub const KIND: &str = "count";
/// Largest integer an f32 checkpoint field can hold exactly.
const EXACT_F32: u64 = 1 << 24;

/// Recent trie walks kept to resume from.
const WALK_CACHE: usize = 16;

type Counts = BTreeMap<u32, u64>;

/// Recently resolved `(history, node)` pairs. Decoding extends histories
/// one token at a time, so most lookups resume from a cached walk instead
/// of re-walking thousands of edges. Never part of model identity.
#[derive(Default)]
struct WalkCache(Mutex<Vec<(Vec<u32>, u32)>>);

impl Clone for WalkCache {
    fn clone(&self) -> Self {
        WalkCache::default()
    }
}

impl PartialEq for WalkCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl std::fmt::Debug for WalkCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("WalkCache")
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Table {
    Bounded(HashMap<Vec<u32>, Counts>),
    Trie { edges: HashMap<(u32, u32), u32>, nodes: u32, counts: HashMap<u32, Counts> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountModel {
    vocab: usize,
    order: Option<usize>,
    alpha: f64,
    table: Table,
    cache: WalkCache,
}

impl CountModel {
    /// `order = None` conditions on the full history.
    pub fn new(vocab: usize, order: Option<usize>, alpha: f64) -> Result<Self, PlannerError> {
        if vocab == 0 || order == Some(0) || !(alpha >= 0.0) {
            return Err(PlannerError::InvalidConfig(format!(
                "count model needs vocab > 0, order >= 1, alpha >= 0 (got {vocab}, {order:?}, {alpha})"
            )));
        }
        let table = match order {
            Some(_) => Table::Bounded(HashMap::new()),
            None => Table::Trie { edges: HashMap::new(), nodes: 1, counts: HashMap::new() },
        };
        Ok(CountModel { vocab, order, alpha, table, cache: WalkCache::default() })
    }

    pub fn order(&self) -> Option<usize> {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn bounded_context(history: &[u32], m: usize) -> Vec<u32> {
        let width = m - 1;
        let take = history.len().min(width);
        let mut ctx = vec![PAD; width - take];
        ctx.extend_from_slice(&history[history.len() - take..]);
        ctx
    }

    /// Counts every position `k >= from` of each `(tokens, from)` pair.
    pub fn fit<'a>(&mut self, corpus: impl IntoIterator<Item = (&'a [u32], usize)>) -> Result<(), PlannerError> {
        let vocab = self.vocab as u32;
        for (tokens, from) in corpus {
            if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab) {
                return Err(PlannerError::TokenOutOfRange(bad));
            }
            match (&mut self.table, self.order) {
                (Table::Bounded(map), Some(m)) => {
                    for k in from..tokens.len() {
                        let ctx = Self::bounded_context(&tokens[..k], m);
                        *map.entry(ctx).or_default().entry(tokens[k]).or_default() += 1;
                    }
                }
                (Table::Trie { edges, nodes, counts }, None) => {
                    let mut node = 0u32;
                    for (k, &t) in tokens.iter().enumerate() {
                        if k >= from {
                            *counts.entry(node).or_default().entry(t).or_default() += 1;
                        }
                        node = *edges.entry((node, t)).or_insert_with(|| {
                            *nodes += 1;
                            *nodes - 1
                        });
                    }
                }
                _ => unreachable!("table matches order"),
            }
        }
        Ok(())
    }

    fn counts_for(&self, history: &[u32]) -> Option<&Counts> {
        match (&self.table, self.order) {
            (Table::Bounded(map), Some(m)) => map.get(&Self::bounded_context(history, m)),
            (Table::Trie { edges, counts, .. }, None) => counts.get(&self.walk(edges, history)?),
            _ => unreachable!("table matches order"),
        }
    }

    fn walk(&self, edges: &HashMap<(u32, u32), u32>, history: &[u32]) -> Option<u32> {
        let mut cache = self.cache.0.lock().unwrap_or_else(|e| e.into_inner());
        let (mut node, done) = cache
            .iter()
            .filter(|(h, _)| h.len() <= history.len() && history.starts_with(h))
            .max_by_key(|(h, _)| h.len())
            .map(|(h, n)| (*n, h.len()))
            .unwrap_or((0, 0));
        for &t in &history[done..] {
            node = *edges.get(&(node, t))?;
        }
        if done < history.len() {
            if cache.len() == WALK_CACHE {
                cache.remove(0);
            }
            cache.push((history.to_vec(), node));
        }
        Some(node)
    }

    /// Every observed context with its next-token counts.
    pub fn contexts(&self) -> Vec<&Counts> {
        match &self.table {
            Table::Bounded(map) => map.values().collect(),
            Table::Trie { counts, .. } => counts.values().collect(),
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint, PlannerError> {
        let exact = |v: u64| -> Result<f32, PlannerError> {
            if v >= EXACT_F32 {
                Err(PlannerError::InvalidConfig(format!("count table value {v} too large for checkpoint")))
            } else {
                Ok(v as f32)
            }
        };
        let mut c = Checkpoint::new(KIND);
        c.push(Tensor::scalar_list(
            "meta",
            vec![self.vocab as f32, self.order.unwrap_or(0) as f32, self.alpha as f32],
        ));
        let mut rows: Vec<f32> = Vec::new();
        match &self.table {
            Table::Bounded(map) => {
                let m = self.order.expect("bounded");
                let mut keys: Vec<&Vec<u32>> = map.keys().collect();
                keys.sort();
                for ctx in keys {
                    for (&t, &n) in &map[ctx] {
                        rows.extend(ctx.iter().map(|&x| x as f32));
                        rows.push(t as f32);
                        rows.push(exact(n)?);
                    }
                }
                let width = m + 1;
                c.push(Tensor { name: "entries".into(), dims: vec![rows.len() / width, width], data: rows });
            }
            Table::Trie { edges, nodes, counts } => {
                let mut e: Vec<(&(u32, u32), &u32)> = edges.iter().collect();
                e.sort();
                let mut data = Vec::with_capacity(e.len() * 3);
                for (&(parent, t), &child) in e {
                    data.extend([exact(parent as u64)?, t as f32, exact(child as u64)?]);
                }
                c.push(Tensor { name: "edges".into(), dims: vec![data.len() / 3, 3], data });
                let mut keys: Vec<&u32> = counts.keys().collect();
                keys.sort();
                for node in keys {
                    for (&t, &n) in &counts[node] {
                        rows.extend([exact(*node as u64)?, t as f32, exact(n)?]);
                    }
                }
                c.push(Tensor { name: "entries".into(), dims: vec![rows.len() / 3, 3], data: rows });
                c.push(Tensor::scalar_list("nodes", vec![exact(*nodes as u64)?]));
            }
        }
        Ok(c)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, PlannerError> {
        c.expect_kind(KIND)?;
        let meta = &c.get("meta")?.data;
        if meta.len() != 3 {
            return Err(PlannerError::InvalidConfig("count checkpoint meta".into()));
        }
        let order = match meta[1] as usize {
            0 => None,
            m => Some(m),
        };
        let mut model = CountModel::new(meta[0] as usize, order, meta[2] as f64)?;
        let entries = c.get("entries")?;
        match (&mut model.table, order) {
            (Table::Bounded(map), Some(m)) => {
                if entries.dims.len() != 2 || entries.dims[1] != m + 1 {
                    return Err(PlannerError::InvalidConfig("count checkpoint entry width".into()));
                }
                for row in entries.data.chunks_exact(m + 1) {
                    let ctx = row[..m - 1].iter().map(|&v| v as u32).collect();
                    map.entry(ctx).or_default().insert(row[m - 1] as u32, row[m] as u64);
                }
            }
            (Table::Trie { edges, nodes, counts }, None) => {
                for row in c.get("edges")?.data.chunks_exact(3) {
                    edges.insert((row[0] as u32, row[1] as u32), row[2] as u32);
                }
                for row in entries.data.chunks_exact(3) {
                    counts.entry(row[0] as u32).or_default().insert(row[1] as u32, row[2] as u64);
                }
                *nodes = c.get("nodes")?.data.first().copied().unwrap_or(1.0) as u32;
            }
            _ => unreachable!("table matches order"),
        }
        Ok(model)
    }
}

impl NextTokenModel for CountModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_distribution(&self, history: &[u32]) -> Vec<f64> {
        let v = self.vocab;
        match self.counts_for(history) {
            Some(counts) => {
                let total: u64 = counts.values().sum();
                let denom = total as f64 + self.alpha * v as f64;
                let mut p = vec![self.alpha / denom; v];
                for (&t, &n) in counts {
                    p[t as usize] = (n as f64 + self.alpha) / denom;
                }
                p
            }
            None => vec![1.0 / v as f64; v],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_are_exact_without_smoothing() {
        let mut m = CountModel::new(5, Some(2), 0.0).unwrap();
        m.fit([(&[1u32, 2, 1, 3, 1, 2][..], 0)]).unwrap();
        let p = m.next_distribution(&[4, 1]);
        assert_eq!(p, vec![0.0, 0.0, 2.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(m.next_distribution(&[4]), vec![0.2; 5]);
    }

    #[test]
    fn unbounded_order_conditions_on_the_whole_prefix() {
        let mut m = CountModel::new(4, None, 0.0).unwrap();
        m.fit([(&[0u32, 1, 2][..], 1), (&[0, 2, 3][..], 1)]).unwrap();
        assert_eq!(m.next_distribution(&[0]), vec![0.0, 0.5, 0.5, 0.0]);
        assert_eq!(m.next_distribution(&[0, 1]), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.next_distribution(&[]), vec![0.25; 4]);
    }

    #[test]
    fn checkpoints_round_trip() {
        for order in [Some(3), None] {
            let mut m = CountModel::new(6, order, 0.5).unwrap();
            m.fit([(&[1u32, 2, 3, 4, 5, 1, 2][..], 2), (&[5, 4, 3][..], 0)]).unwrap();
            let back = CountModel::from_checkpoint(&Checkpoint::decode(&m.to_checkpoint().unwrap().encode()).unwrap()).unwrap();
            for h in [&[][..], &[1, 2], &[5, 4], &[1, 2, 3, 4]] {
                assert_eq!(back.next_distribution(h), m.next_distribution(h));
            }
        }
    }
}
