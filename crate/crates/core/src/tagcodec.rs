//! Per-token tag encodings (IO, BIO, BIOES) for span sets, with legality
//! checks and lenient decoding of illegal sequences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "IO")]
    Io,
    #[serde(rename = "BIO")]
    Bio,
    #[serde(rename = "BIOES", alias = "BIEOS")]
    Bioes,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Io, Scheme::Bio, Scheme::Bioes];

    pub fn allows(self, prefix: Prefix) -> bool {
        match prefix {
            Prefix::O | Prefix::I => true,
            Prefix::B => self != Scheme::Io,
            Prefix::E | Prefix::S => self == Scheme::Bioes,
        }
    }

    /// Full tag inventory for the given classes: `O` first, then the
    /// prefixes of each class in B, I, E, S order.
    pub fn tag_set<S: AsRef<str>>(self, classes: &[S]) -> Vec<Tag> {
        let mut tags = vec![Tag::outside()];
        for class in classes {
            for prefix in [Prefix::B, Prefix::I, Prefix::E, Prefix::S] {
                if self.allows(prefix) {
                    tags.push(Tag::new(prefix, class.as_ref()));
                }
            }
        }
        tags
    }

    /// Closest prefix this scheme can express.
    fn coerce(self, prefix: Prefix) -> Prefix {
        match (self, prefix) {
            (Scheme::Io, Prefix::B | Prefix::E | Prefix::S) => Prefix::I,
            (Scheme::Bio, Prefix::E) => Prefix::I,
            (Scheme::Bio, Prefix::S) => Prefix::B,
            (_, p) => p,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Io => "IO",
            Scheme::Bio => "BIO",
            Scheme::Bioes => "BIOES",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IO" => Ok(Scheme::Io),
            "BIO" => Ok(Scheme::Bio),
            // BIEOS is the same scheme under another name
            "BIOES" | "BIEOS" => Ok(Scheme::Bioes),
            _ => Err(Error::validation(format!("unknown encoding scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Prefix {
    O,
    B,
    I,
    E,
    S,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub prefix: Prefix,
    /// Empty for `O`.
    pub class: String,
}

impl Tag {
    pub fn outside() -> Self {
        Tag {
            prefix: Prefix::O,
            class: String::new(),
        }
    }

    pub fn new(prefix: Prefix, class: impl Into<String>) -> Self {
        if prefix == Prefix::O {
            return Tag::outside();
        }
        Tag {
            prefix,
            class: class.into(),
        }
    }

    pub fn is_outside(&self) -> bool {
        self.prefix == Prefix::O
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.prefix {
            Prefix::O => return f.write_str("O"),
            Prefix::B => "B",
            Prefix::I => "I",
            Prefix::E => "E",
            Prefix::S => "S",
        };
        write!(f, "{p}-{}", self.class)
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::outside());
        }
        let (p, class) = s
            .split_once('-')
            .ok_or_else(|| Error::validation(format!("malformed tag {s:?}")))?;
        let prefix = match p {
            "B" => Prefix::B,
            "I" => Prefix::I,
            "E" => Prefix::E,
            "S" => Prefix::S,
            // "O-X" shows up in raw model output; it still means outside
            "O" => return Ok(Tag::outside()),
            _ => return Err(Error::validation(format!("unknown tag prefix in {s:?}"))),
        };
        if class.is_empty() {
            return Err(Error::validation(format!("tag {s:?} has no class")));
        }
        Ok(Tag::new(prefix, class))
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A class over the token range `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabeledRange {
    pub start: usize,
    pub end: usize,
    pub class: String,
}

impl LabeledRange {
    pub fn new(start: usize, end: usize, class: impl Into<String>) -> Self {
        LabeledRange {
            start,
            end,
            class: class.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSequence {
    pub tags: Vec<Tag>,
    pub scheme: Scheme,
}

impl TagSequence {
    pub fn new(tags: Vec<Tag>, scheme: Scheme) -> Self {
        TagSequence { tags, scheme }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Share of positions with an illegal incoming transition.
    pub fn violation_rate(&self) -> f64 {
        if self.tags.is_empty() {
            return 0.0;
        }
        validate(self).len() as f64 / self.tags.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Strict,
    Lenient,
}

/// An illegal transition entering `position`; `next` is `None` for the
/// end-of-sequence transition at `position == len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub position: usize,
    pub prev: Option<Tag>,
    pub next: Option<Tag>,
}

pub fn encode(spans: &[LabeledRange], n_tokens: usize, scheme: Scheme) -> Result<TagSequence> {
    let mut sorted: Vec<&LabeledRange> = spans.iter().collect();
    sorted.sort();
    let mut tags = vec![Tag::outside(); n_tokens];
    let mut prev: Option<&LabeledRange> = None;
    for span in sorted {
        if span.start >= span.end || span.end > n_tokens {
            return Err(Error::validation(format!(
                "token range [{}, {}) invalid for {n_tokens} tokens",
                span.start, span.end
            )));
        }
        if let Some(p) = prev {
            if span.start < p.end {
                return Err(Error::validation(format!(
                    "overlapping spans [{}, {}) and [{}, {}); flatten them first",
                    p.start, p.end, span.start, span.end
                )));
            }
            if scheme == Scheme::Io && span.start == p.end && span.class == p.class {
                return Err(Error::validation(format!(
                    "adjacent {} spans at token {} cannot be told apart under IO",
                    span.class, span.start
                )));
            }
        }
        let class = span.class.as_str();
        let len = span.end - span.start;
        for (offset, tag) in tags[span.start..span.end].iter_mut().enumerate() {
            let prefix = match scheme {
                Scheme::Io => Prefix::I,
                Scheme::Bio if offset == 0 => Prefix::B,
                Scheme::Bio => Prefix::I,
                Scheme::Bioes if len == 1 => Prefix::S,
                Scheme::Bioes if offset == 0 => Prefix::B,
                Scheme::Bioes if offset == len - 1 => Prefix::E,
                Scheme::Bioes => Prefix::I,
            };
            *tag = Tag::new(prefix, class);
        }
        prev = Some(span);
    }
    Ok(TagSequence::new(tags, scheme))
}

/// Whether `next` may follow `prev`. `prev == None` is the sequence start,
/// `next == None` the sequence end.
pub fn legal_transition(prev: Option<&Tag>, next: Option<&Tag>, scheme: Scheme) -> bool {
    if prev.is_some_and(|t| !scheme.allows(t.prefix)) || next.is_some_and(|t| !scheme.allows(t.prefix)) {
        return false;
    }
    // an entity of class `c` is open after `prev`
    let open = prev.and_then(|t| match (scheme, t.prefix) {
        (Scheme::Bioes, Prefix::B | Prefix::I) => Some(t.class.as_str()),
        (Scheme::Bio, Prefix::B | Prefix::I) => Some(t.class.as_str()),
        _ => None,
    });
    match scheme {
        Scheme::Io => true,
        Scheme::Bio => match next {
            Some(t) if t.prefix == Prefix::I => open == Some(t.class.as_str()),
            _ => true,
        },
        Scheme::Bioes => match (open, next) {
            (Some(c), Some(t)) => matches!(t.prefix, Prefix::I | Prefix::E) && t.class == c,
            (Some(_), None) => false,
            (None, Some(t)) => !matches!(t.prefix, Prefix::I | Prefix::E),
            (None, None) => true,
        },
    }
}

pub fn validate(seq: &TagSequence) -> Vec<Violation> {
    let n = seq.tags.len();
    let mut out = Vec::new();
    for position in 0..=n {
        let prev = position.checked_sub(1).map(|i| &seq.tags[i]);
        let next = seq.tags.get(position);
        if n == 0 {
            break;
        }
        if !legal_transition(prev, next, seq.scheme) {
            out.push(Violation {
                position,
                prev: prev.cloned(),
                next: next.cloned(),
            });
        }
    }
    out
}

/// Strict decoding rejects any illegal sequence. Lenient decoding opens a
/// new span on `I` after `O` or after another class, closes spans on `E`
/// and `S`, and closes a trailing open span at the end.
pub fn decode(seq: &TagSequence, mode: DecodeMode) -> Result<Vec<LabeledRange>> {
    if mode == DecodeMode::Strict {
        let violations = validate(seq);
        if !violations.is_empty() {
            let positions: Vec<String> = violations.iter().map(|v| v.position.to_string()).collect();
            return Err(Error::validation(format!(
                "illegal {} tag sequence at position(s) {}",
                seq.scheme,
                positions.join(", ")
            )));
        }
    }

    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    let close = |open: &mut Option<(usize, &str)>, end: usize, spans: &mut Vec<LabeledRange>| {
        if let Some((start, class)) = open.take() {
            spans.push(LabeledRange::new(start, end, class));
        }
    };

    for (i, tag) in seq.tags.iter().enumerate() {
        let class = tag.class.as_str();
        let continues = matches!(open, Some((_, c)) if c == class);
        match seq.scheme.coerce(tag.prefix) {
            Prefix::O => close(&mut open, i, &mut spans),
            Prefix::B => {
                close(&mut open, i, &mut spans);
                open = Some((i, class));
            }
            Prefix::I => {
                if !continues {
                    close(&mut open, i, &mut spans);
                    open = Some((i, class));
                }
            }
            Prefix::E => {
                if !continues {
                    close(&mut open, i, &mut spans);
                    open = Some((i, class));
                }
                close(&mut open, i + 1, &mut spans);
            }
            Prefix::S => {
                close(&mut open, i, &mut spans);
                spans.push(LabeledRange::new(i, i + 1, class));
            }
        }
    }
    close(&mut open, seq.tags.len(), &mut spans);
    Ok(spans)
}

/// Lenient decode followed by re-encoding; the result always validates.
pub fn repair(seq: &TagSequence) -> TagSequence {
    let spans = decode(seq, DecodeMode::Lenient).expect("lenient decoding is total");
    encode(&spans, seq.len(), seq.scheme).expect("lenient decoding yields encodable spans")
}

/// CoNLL-style rendering: `token<TAB>tag` per line, blank line after each
/// document.
pub fn format_conll<'a>(documents: impl IntoIterator<Item = (&'a [String], &'a TagSequence)>) -> String {
    let mut out = String::new();
    for (tokens, seq) in documents {
        for (token, tag) in tokens.iter().zip(&seq.tags) {
            out.push_str(token);
            out.push('\t');
            out.push_str(&tag.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn parse_conll(content: &str, scheme: Scheme) -> Result<Vec<(Vec<String>, TagSequence)>> {
    let mut docs = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.is_empty() {
            if !tokens.is_empty() {
                docs.push((std::mem::take(&mut tokens), TagSequence::new(std::mem::take(&mut tags), scheme)));
            }
            continue;
        }
        let (token, tag) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse("conll", i + 1, "expected token<TAB>tag"))?;
        tokens.push(token.to_string());
        tags.push(tag.parse().map_err(|e: Error| Error::parse("conll", i + 1, e.to_string()))?);
    }
    if !tokens.is_empty() {
        docs.push((tokens, TagSequence::new(tags, scheme)));
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tags: &[&str], scheme: Scheme) -> TagSequence {
        TagSequence::new(tags.iter().map(|t| t.parse().unwrap()).collect(), scheme)
    }

    fn names(seq: &TagSequence) -> Vec<String> {
        seq.tags.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn encodes_each_scheme() {
        let one = [LabeledRange::new(1, 3, "PROP")];
        assert_eq!(names(&encode(&one, 4, Scheme::Bio).unwrap()), ["O", "B-PROP", "I-PROP", "O"]);
        let single = [LabeledRange::new(1, 2, "PROP")];
        assert_eq!(names(&encode(&single, 3, Scheme::Bioes).unwrap()), ["O", "S-PROP", "O"]);
        assert_eq!(names(&encode(&[], 3, Scheme::Io).unwrap()), ["O", "O", "O"]);
        let long = [LabeledRange::new(0, 3, "A")];
        assert_eq!(names(&encode(&long, 3, Scheme::Bioes).unwrap()), ["B-A", "I-A", "E-A"]);
    }

    #[test]
    fn encode_rejects_overlap_and_io_ambiguity() {
        let overlapping = [LabeledRange::new(0, 2, "A"), LabeledRange::new(1, 3, "A")];
        assert!(encode(&overlapping, 4, Scheme::Bio).is_err());
        let adjacent = [LabeledRange::new(0, 1, "A"), LabeledRange::new(1, 2, "A")];
        assert!(encode(&adjacent, 2, Scheme::Io).is_err());
        assert!(encode(&adjacent, 2, Scheme::Bio).is_ok());
        let out_of_range = [LabeledRange::new(2, 5, "A")];
        assert!(encode(&out_of_range, 4, Scheme::Bio).is_err());
    }

    #[test]
    fn decodes_strict_and_lenient() {
        let legal = seq(&["O", "B-PROP", "I-PROP", "O"], Scheme::Bio);
        assert_eq!(decode(&legal, DecodeMode::Strict).unwrap(), vec![LabeledRange::new(1, 3, "PROP")]);

        let illegal = seq(&["O", "I-PROP", "I-PROP", "O"], Scheme::Bio);
        assert_eq!(decode(&illegal, DecodeMode::Lenient).unwrap(), vec![LabeledRange::new(1, 3, "PROP")]);
        let err = decode(&illegal, DecodeMode::Strict).unwrap_err().to_string();
        assert!(err.contains("position(s) 1"), "{err}");
    }

    #[test]
    fn lenient_class_change_starts_new_span() {
        let s = seq(&["I-A", "I-B", "I-B", "E-A"], Scheme::Bioes);
        assert_eq!(
            decode(&s, DecodeMode::Lenient).unwrap(),
            vec![LabeledRange::new(0, 1, "A"), LabeledRange::new(1, 3, "B"), LabeledRange::new(3, 4, "A")]
        );
    }

    #[test]
    fn transition_tables() {
        let o = Tag::outside();
        let b = Tag::new(Prefix::B, "PROP");
        let i = Tag::new(Prefix::I, "PROP");
        let i_other = Tag::new(Prefix::I, "X");
        let e = Tag::new(Prefix::E, "PROP");
        let s = Tag::new(Prefix::S, "PROP");

        assert!(!legal_transition(Some(&o), Some(&i), Scheme::Bio));
        assert!(legal_transition(Some(&b), Some(&i), Scheme::Bio));
        assert!(!legal_transition(Some(&b), Some(&i_other), Scheme::Bio));
        assert!(!legal_transition(None, Some(&i), Scheme::Bio));
        assert!(legal_transition(Some(&i), None, Scheme::Bio));

        assert!(!legal_transition(Some(&b), Some(&o), Scheme::Bioes));
        assert!(!legal_transition(Some(&b), None, Scheme::Bioes));
        assert!(legal_transition(Some(&b), Some(&e), Scheme::Bioes));
        assert!(legal_transition(Some(&e), Some(&s), Scheme::Bioes));
        assert!(!legal_transition(Some(&s), Some(&e), Scheme::Bioes));
        assert!(legal_transition(Some(&s), None, Scheme::Bioes));

        assert!(legal_transition(Some(&o), Some(&i), Scheme::Io));
        assert!(!legal_transition(Some(&o), Some(&b), Scheme::Io));
        assert!(!legal_transition(Some(&o), Some(&e), Scheme::Bio));
    }

    #[test]
    fn validate_reports_positions() {
        assert!(validate(&seq(&["O", "B-A", "I-A"], Scheme::Bio)).is_empty());
        let v = validate(&seq(&["O", "I-A"], Scheme::Bio));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].position, 1);
        for scheme in Scheme::ALL {
            assert!(validate(&seq(&["O", "O", "O"], scheme)).is_empty());
        }
        let v = validate(&seq(&["O", "B-A"], Scheme::Bioes));
        assert_eq!(v[0].position, 2);
        assert_eq!(v[0].next, None);
        assert!(validate(&seq(&[], Scheme::Bioes)).is_empty());
    }

    #[test]
    fn repairs_sequences() {
        assert_eq!(names(&repair(&seq(&["O", "I-PROP", "O"], Scheme::Bio))), ["O", "B-PROP", "O"]);
        assert_eq!(names(&repair(&seq(&["I-A", "I-B"], Scheme::Bio))), ["B-A", "B-B"]);
        let legal = seq(&["B-A", "E-A", "S-B", "O"], Scheme::Bioes);
        assert_eq!(repair(&legal), legal);
        assert_eq!(names(&repair(&seq(&["B-A", "O"], Scheme::Bioes))), ["S-A", "O"]);
        // prefixes foreign to IO collapse to I
        assert_eq!(names(&repair(&seq(&["B-A", "B-A", "O"], Scheme::Io))), ["I-A", "I-A", "O"]);
    }

    #[test]
    fn parses_tags() {
        assert_eq!("O".parse::<Tag>().unwrap(), Tag::outside());
        assert_eq!("O-PROP".parse::<Tag>().unwrap(), Tag::outside());
        assert_eq!("B-Name_Calling,Labeling".parse::<Tag>().unwrap().class, "Name_Calling,Labeling");
        assert!("X-A".parse::<Tag>().is_err());
        assert!("B-".parse::<Tag>().is_err());
        assert_eq!("bieos".parse::<Scheme>().unwrap(), Scheme::Bioes);
    }

    #[test]
    fn tag_set_matches_scheme() {
        let names = |tags: Vec<Tag>| tags.iter().map(|t| t.to_string()).collect::<Vec<_>>();
        assert_eq!(names(Scheme::Io.tag_set(&["P"])), ["O", "I-P"]);
        assert_eq!(names(Scheme::Bio.tag_set(&["P"])), ["O", "B-P", "I-P"]);
        assert_eq!(names(Scheme::Bioes.tag_set(&["P"])), ["O", "B-P", "I-P", "E-P", "S-P"]);
    }

    #[test]
    fn conll_roundtrip() {
        let toks = vec!["It".to_string(), "is".to_string()];
        let s = seq(&["B-A", "I-A"], Scheme::Bio);
        let text = format_conll([(toks.as_slice(), &s)]);
        assert_eq!(text, "It\tB-A\nis\tI-A\n\n");
        assert_eq!(parse_conll(&text, Scheme::Bio).unwrap(), vec![(toks, s)]);
    }
}
