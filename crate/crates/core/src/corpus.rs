//! JSON Lines corpus files, one article per line:
//!
//! ```text
//! {"article_id": "a17", "theta_hat": [0.051, 0.043], "trace": [[0, 615], [1, 4568]]}
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::trace::{ArticleSpec, ImpressionTrace};

/// Read and validate a corpus file.
pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Vec<ArticleSpec>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let corpus = read_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    if corpus.is_empty() {
        log::warn!("{}: corpus is empty", path.display());
    }
    Ok(corpus)
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<ArticleSpec>> {
    let mut corpus = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let article = parse_line(&line, line_no)?;
        if !seen.insert(article.article_id.clone()) {
            return Err(record_error(
                line_no,
                "article_id",
                format!("duplicate id `{}`", article.article_id),
            ));
        }
        corpus.push(article);
    }
    Ok(corpus)
}

pub fn write_corpus<W: Write>(writer: W, corpus: &[ArticleSpec]) -> Result<()> {
    let mut writer = BufWriter::new(writer);
    for article in corpus {
        serde_json::to_writer(&mut writer, article)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<corpus>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<corpus>", e))
}

pub fn write_corpus_file(path: impl AsRef<Path>, corpus: &[ArticleSpec]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(file, corpus)
}

fn record_error(line: usize, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Record {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<ArticleSpec> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| record_error(line_no, "<line>", format!("malformed JSON: {e}")))?;
    let object = value
        .as_object()
        .ok_or_else(|| record_error(line_no, "<line>", "expected a JSON object"))?;
    let field = |name: &str| {
        object
            .get(name)
            .ok_or_else(|| record_error(line_no, name, "missing"))
    };

    let article_id = field("article_id")?
        .as_str()
        .ok_or_else(|| record_error(line_no, "article_id", "expected a string"))?
        .to_owned();

    let theta_values = field("theta_hat")?
        .as_array()
        .ok_or_else(|| record_error(line_no, "theta_hat", "expected an array"))?;
    if theta_values.len() < 2 {
        return Err(record_error(
            line_no,
            "theta_hat",
            format!("need at least 2 arms, got {}", theta_values.len()),
        ));
    }
    let mut theta_hat = Vec::with_capacity(theta_values.len());
    for (k, v) in theta_values.iter().enumerate() {
        let name = format!("theta_hat[{k}]");
        let t = v
            .as_f64()
            .ok_or_else(|| record_error(line_no, &name, "expected a number"))?;
        if !(0.0..=1.0).contains(&t) {
            return Err(record_error(line_no, &name, format!("{t} is outside [0, 1]")));
        }
        theta_hat.push(t);
    }

    let trace_values = field("trace")?
        .as_array()
        .ok_or_else(|| record_error(line_no, "trace", "expected an array"))?;
    let mut entries = Vec::with_capacity(trace_values.len());
    for (j, v) in trace_values.iter().enumerate() {
        let pair = v
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| {
                record_error(line_no, format!("trace[{j}]"), "expected [minute, impressions]")
            })?;
        let minute = pair[0]
            .as_u64()
            .and_then(|m| u32::try_from(m).ok())
            .ok_or_else(|| {
                record_error(
                    line_no,
                    format!("trace[{j}][0]"),
                    "minute must be a non-negative integer",
                )
            })?;
        let impressions = pair[1].as_u64().ok_or_else(|| {
            record_error(
                line_no,
                format!("trace[{j}][1]"),
                "impressions must be a non-negative integer",
            )
        })?;
        if let Some(&(prev, _)) = entries.last() {
            if minute <= prev {
                return Err(record_error(
                    line_no,
                    format!("trace[{j}][0]"),
                    format!("minute {minute} does not follow minute {prev}"),
                ));
            }
        }
        entries.push((minute, impressions));
    }
    let trace = ImpressionTrace::new(entries)
        .map_err(|e| record_error(line_no, "trace", e.to_string()))?;

    Ok(ArticleSpec {
        article_id,
        theta_hat,
        trace,
    })
}
