//! Plain-text model files:
//!
//! ```text
//! spantag-crf<TAB>1
//! K<TAB>3
//! scheme<TAB>BIO
//! tags<TAB>O<TAB>B-PROP<TAB>I-PROP
//! start<TAB>...
//! end<TAB>...
//! transitions
//! <K rows of K tab-separated values>
//! ```
//!
//! Values are written in shortest round-trip decimal form.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::CrfModel;
use crate::error::{Error, Result};
use crate::tagcodec::{Scheme, Tag};

const MAGIC: &str = "spantag-crf";

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\t")
}

pub fn format_model(model: &CrfModel) -> String {
    let k = model.num_tags();
    let mut out = format!("{MAGIC}\t1\nK\t{k}\nscheme\t{}\n", model.scheme);
    let tags: Vec<String> = model.tag_order.iter().map(|t| t.to_string()).collect();
    out.push_str(&format!("tags\t{}\n", tags.join("\t")));
    out.push_str(&format!("start\t{}\n", join(model.start.iter().copied())));
    out.push_str(&format!("end\t{}\n", join(model.end.iter().copied())));
    out.push_str("transitions\n");
    for row in model.transitions.rows() {
        out.push_str(&join(row.iter().copied()));
        out.push('\n');
    }
    out
}

pub fn parse_model(content: &str) -> Result<CrfModel> {
    let ctx = "crf model";
    let mut lines = content.lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, Vec<&str>)> {
        let (i, line) = lines
            .next()
            .ok_or_else(|| Error::parse(ctx, 0, format!("unexpected end of file, expected {expect}")))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields[0] != expect {
            return Err(Error::parse(ctx, i + 1, format!("expected {expect:?}, found {:?}", fields[0])));
        }
        Ok((i + 1, fields[1..].to_vec()))
    };
    let floats = |line: usize, fields: &[&str]| -> Result<Vec<f64>> {
        fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(ctx, line, format!("invalid value {f:?}")))
            })
            .collect()
    };

    let (line, version) = next(MAGIC)?;
    if version != ["1"] {
        return Err(Error::parse(ctx, line, "unsupported model version"));
    }
    let (line, k) = next("K")?;
    let k: usize = k
        .first()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(ctx, line, "invalid tag count"))?;
    let (line, scheme) = next("scheme")?;
    let scheme: Scheme = scheme
        .first()
        .ok_or_else(|| Error::parse(ctx, line, "missing scheme"))?
        .parse()
        .map_err(|e: Error| Error::parse(ctx, line, e.to_string()))?;
    let (line, tags) = next("tags")?;
    let tag_order = tags
        .iter()
        .map(|t| t.parse::<Tag>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::parse(ctx, line, e.to_string()))?;
    let check_len = |line: usize, n: usize| {
        if n != k {
            Err(Error::parse(ctx, line, format!("expected {k} values, found {n}")))
        } else {
            Ok(())
        }
    };
    check_len(line, tag_order.len())?;
    let (line, start) = next("start")?;
    let start = floats(line, &start)?;
    check_len(line, start.len())?;
    let (line, end) = next("end")?;
    let end = floats(line, &end)?;
    check_len(line, end.len())?;
    next("transitions")?;

    let mut transitions = Vec::with_capacity(k * k);
    for _ in 0..k {
        let (i, row) = lines
            .next()
            .ok_or_else(|| Error::parse(ctx, 0, "missing transition rows"))?;
        let fields: Vec<&str> = row.split('\t').collect();
        let values = floats(i + 1, &fields)?;
        check_len(i + 1, values.len())?;
        transitions.extend(values);
    }
    Ok(CrfModel {
        tag_order,
        scheme,
        transitions: Array2::from_shape_vec((k, k), transitions).expect("k*k values"),
        start: Array1::from(start),
        end: Array1::from(end),
    })
}

pub fn write_model(path: &Path, model: &CrfModel) -> Result<()> {
    fs::write(path, format_model(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<CrfModel> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&content)
}
