//! Independent oracles and random-instance builders shared by the
//! integration tests and the acceptance runner.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spantag::crf::{CrfModel, EmissionMatrix};
use spantag::tagcodec::{LabeledRange, Prefix, Scheme, Tag, TagSequence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn class_names(n: usize) -> Vec<String> {
    ["A", "B", "C"][..n].iter().map(|s| s.to_string()).collect()
}

/// A tag inventory of at most `max_k` tags under some scheme.
pub fn random_inventory(r: &mut ChaCha8Rng, max_k: usize) -> (Scheme, Vec<Tag>) {
    loop {
        let scheme = Scheme::ALL[r.random_range(0..3)];
        let classes = r.random_range(0..=3);
        let tags = scheme.tag_set(&class_names(classes));
        if tags.len() <= max_k {
            return (scheme, tags);
        }
    }
}

pub fn random_model(r: &mut ChaCha8Rng, tags: Vec<Tag>, scheme: Scheme, scale: f64) -> CrfModel {
    let k = tags.len();
    let mut m = CrfModel::zeros(tags, scheme);
    m.transitions = Array2::from_shape_fn((k, k), |_| r.random_range(-scale..scale));
    m.start = Array1::from_shape_fn(k, |_| r.random_range(-scale..scale));
    m.end = Array1::from_shape_fn(k, |_| r.random_range(-scale..scale));
    m
}

pub fn random_emissions(r: &mut ChaCha8Rng, tags: Vec<Tag>, t: usize, scale: f64) -> EmissionMatrix {
    let k = tags.len();
    EmissionMatrix::from_scores(tags, Array2::from_shape_fn((t, k), |_| r.random_range(-scale..scale))).unwrap()
}

/// Every path over `t` positions with `k` tags, in lexicographic order.
pub fn all_paths(t: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// Path score straight from the definition.
pub fn path_score(m: &CrfModel, em: &EmissionMatrix, path: &[usize]) -> f64 {
    if path.is_empty() {
        return 0.0;
    }
    let mut s = m.start[path[0]] + m.end[path[path.len() - 1]];
    for t in 0..path.len() {
        s += em.scores[[t, path[t]]];
        if t > 0 {
            s += m.transitions[[path[t - 1], path[t]]];
        }
    }
    s
}

pub fn brute_log_partition(m: &CrfModel, em: &EmissionMatrix) -> f64 {
    let scores: Vec<f64> = all_paths(em.scores.nrows(), m.tag_order.len())
        .iter()
        .map(|p| path_score(m, em, p))
        .collect();
    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + scores.iter().map(|s| (s - mx).exp()).sum::<f64>().ln()
}

pub fn brute_marginals(m: &CrfModel, em: &EmissionMatrix) -> Array2<f64> {
    let (t, k) = (em.scores.nrows(), m.tag_order.len());
    let z = brute_log_partition(m, em);
    let mut out = Array2::zeros((t, k));
    for p in all_paths(t, k) {
        let w = (path_score(m, em, &p) - z).exp();
        for (i, &y) in p.iter().enumerate() {
            out[[i, y]] += w;
        }
    }
    out
}

/// Best path, optionally restricted to legal paths; ties keep the earliest.
pub fn brute_best(m: &CrfModel, em: &EmissionMatrix, legal_only: bool) -> Option<(Vec<usize>, f64)> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for p in all_paths(em.scores.nrows(), m.tag_order.len()) {
        if legal_only && !oracle_legal(&p.iter().map(|&y| m.tag_order[y].clone()).collect::<Vec<_>>(), m.scheme) {
            continue;
        }
        let s = path_score(m, em, &p);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((p, s));
        }
    }
    best
}

/// Tag-sequence legality written out per scheme.
pub fn oracle_legal(tags: &[Tag], scheme: Scheme) -> bool {
    let allowed = |p: Prefix| match scheme {
        Scheme::Io => matches!(p, Prefix::O | Prefix::I),
        Scheme::Bio => matches!(p, Prefix::O | Prefix::B | Prefix::I),
        Scheme::Bioes => true,
    };
    if tags.iter().any(|t| !allowed(t.prefix)) {
        return false;
    }
    match scheme {
        Scheme::Io => true,
        Scheme::Bio => tags.iter().enumerate().all(|(i, t)| {
            t.prefix != Prefix::I
                || (i > 0 && matches!(tags[i - 1].prefix, Prefix::B | Prefix::I) && tags[i - 1].class == t.class)
        }),
        Scheme::Bioes => {
            let mut open: Option<&str> = None;
            for t in tags {
                match (open, t.prefix) {
                    (None, Prefix::O | Prefix::S) => {}
                    (None, Prefix::B) => open = Some(&t.class),
                    (None, _) => return false,
                    (Some(c), Prefix::I) if c == t.class => {}
                    (Some(c), Prefix::E) if c == t.class => open = None,
                    (Some(_), _) => return false,
                }
            }
            open.is_none()
        }
    }
}

/// Random spans that are legal for the scheme: non-overlapping, and under
/// IO never touching a span of the same class.
pub fn random_ranges(r: &mut ChaCha8Rng, n_tokens: usize, classes: usize, scheme: Scheme) -> Vec<LabeledRange> {
    let names = class_names(classes);
    let mut out: Vec<LabeledRange> = Vec::new();
    let mut pos = 0;
    while pos < n_tokens {
        if r.random_bool(0.4) {
            let len = r.random_range(1..=(n_tokens - pos).min(4));
            let class = names[r.random_range(0..classes)].clone();
            let touching_same = out.last().is_some_and(|l| l.end == pos && l.class == class);
            if !(scheme == Scheme::Io && touching_same) {
                out.push(LabeledRange::new(pos, pos + len, class));
                pos += len;
                continue;
            }
        }
        pos += 1;
    }
    out
}

pub fn random_tags(r: &mut ChaCha8Rng, scheme: Scheme, classes: usize, len: usize) -> TagSequence {
    let inventory = scheme.tag_set(&class_names(classes));
    // mix in prefixes the scheme forbids as well
    let mut pool = inventory.clone();
    for c in class_names(classes) {
        for p in [Prefix::B, Prefix::I, Prefix::E, Prefix::S] {
            pool.push(Tag::new(p, c.clone()));
        }
    }
    let pick = |r: &mut ChaCha8Rng| {
        if r.random_bool(0.8) {
            inventory[r.random_range(0..inventory.len())].clone()
        } else {
            pool[r.random_range(0..pool.len())].clone()
        }
    };
    TagSequence::new((0..len).map(|_| pick(r)).collect(), scheme)
}

/// Relative error of two gradient vectors: `|a - b| / max(|a|, |b|)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub const PUNCT: &str = ".,;:!?'\"—-()[]“”‘’";

/// A fuzz span text plus a span over it, mixing words, punctuation,
/// quotes and whitespace.
pub fn random_text(r: &mut ChaCha8Rng, len: usize) -> Vec<char> {
    let punct: Vec<char> = PUNCT.chars().collect();
    (0..len)
        .map(|_| match r.random_range(0..10) {
            0..=4 => (b'a' + r.random_range(0..26)) as char,
            5 | 6 => ' ',
            _ => punct[r.random_range(0..punct.len())],
        })
        .collect()
}

/// Whether a repaired span has a forbidden edge: a punctuation or
/// whitespace char at either end, unless both ends hold a matching quote pair.
pub fn bad_edges(chars: &[char], start: usize, end: usize, pairs: &[(char, char)]) -> bool {
    if start >= end {
        return false;
    }
    let first = chars[start];
    let last = chars[end - 1];
    let quoted = end - start >= 2 && pairs.iter().any(|&(o, c)| o == first && c == last);
    if quoted {
        return false;
    }
    let strippable = |c: char| c.is_whitespace() || PUNCT.contains(c);
    strippable(first) || strippable(last)
}

pub const QUOTE_PAIRS: [(char, char); 4] = [('"', '"'), ('“', '”'), ('‘', '’'), ('\'', '\'')];
