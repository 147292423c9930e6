//! Plain-text policy checkpoints.
//!
//! ```text
//! mgrpo-policy v1
//! num_prompts 200
//! seq_len 4
//! vocab_size 8
//! <one line per (prompt, position, prev) row: V logits, `{:.16e}`>
//! ```
//!
//! Rows are in row-major order (prompt, then position, then previous-token
//! context with BOS last). Seventeen significant digits make the round trip
//! bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::policy::{Shape, TabularPolicy};

const MAGIC: &str = "mgrpo-policy v1";

pub fn write_policy<W: Write>(policy: &TabularPolicy, mut out: W) -> Result<()> {
    let shape = policy.shape();
    let mut text = String::with_capacity(policy.logits().len() * 25 + 64);
    writeln!(text, "{MAGIC}").unwrap();
    writeln!(text, "num_prompts {}", shape.num_prompts).unwrap();
    writeln!(text, "seq_len {}", shape.seq_len).unwrap();
    writeln!(text, "vocab_size {}", shape.vocab_size).unwrap();
    for row in policy.logits().chunks(shape.vocab_size) {
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                text.push(' ');
            }
            write!(text, "{x:.16e}").unwrap();
        }
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

pub fn read_policy<R: Read>(input: R) -> Result<TabularPolicy> {
    let mut lines = BufReader::new(input).lines().enumerate();
    let mut next_line = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, line)) => Ok((i + 1, line?)),
            None => Err(Error::Checkpoint(format!("unexpected end of file, expected {what}"))),
        }
    };
    let (_, magic) = next_line("header")?;
    if magic.trim() != MAGIC {
        return Err(Error::Checkpoint(format!("line 1: expected `{MAGIC}`, found `{magic}`")));
    }
    let mut header = |key: &str| -> Result<usize> {
        let (n, line) = next_line(key)?;
        line.strip_prefix(key)
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| Error::Checkpoint(format!("line {n}: expected `{key} <integer>`, found `{line}`")))
    };
    let num_prompts = header("num_prompts")?;
    let seq_len = header("seq_len")?;
    let vocab_size = header("vocab_size")?;
    let shape = Shape::new(num_prompts, seq_len, vocab_size)?;

    let rows = shape.num_logits() / vocab_size;
    let mut logits = Vec::with_capacity(shape.num_logits());
    for _ in 0..rows {
        let (n, line) = next_line("logit row")?;
        let before = logits.len();
        for field in line.split_whitespace() {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::Checkpoint(format!("line {n}: bad number `{field}`")))?;
            logits.push(x);
        }
        if logits.len() - before != vocab_size {
            return Err(Error::Checkpoint(format!(
                "line {n}: expected {vocab_size} logits, found {}",
                logits.len() - before
            )));
        }
    }
    TabularPolicy::from_logits(shape, logits)
}
