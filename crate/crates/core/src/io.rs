//! Pair files and number formatting shared by the file writers.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::SplitCorpus;
use crate::error::{Error, Result};
use crate::sampler::TrainingPair;
use crate::ItemId;

/// Fixed 17-significant-digit rendering so reruns are byte-identical.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    user: String,
    input: Vec<String>,
    target: String,
    k: usize,
    j: usize,
    weight: f64,
}

/// One JSON object per pair, external ids resolved through `split`.
pub fn write_pairs_jsonl<W: Write>(pairs: &[TrainingPair], split: &SplitCorpus, out: &mut W) -> Result<()> {
    let item = |i: ItemId| split.items.external(i).unwrap_or("").to_string();
    for p in pairs {
        let record = PairRecord {
            user: split.user_id(p.user).to_string(),
            input: p.input.iter().map(|&i| item(i)).collect(),
            target: item(p.target),
            k: p.k,
            j: p.j,
            weight: p.weight,
        };
        serde_json::to_writer(&mut *out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a pair file against the split it was produced from. `user` of each
/// pair becomes the user's position in `split.train`.
pub fn read_pairs_jsonl<R: BufRead>(reader: R, split: &SplitCorpus) -> Result<Vec<TrainingPair>> {
    let positions: HashMap<&str, usize> = (0..split.n_users()).map(|p| (split.user_id(p), p)).collect();
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PairRecord = serde_json::from_str(&line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let lookup = |id: &str| {
            split
                .items
                .index(id)
                .ok_or_else(|| Error::Parse { line: line_no, message: format!("item `{id}` is not in the split vocabulary") })
        };
        let user = *positions
            .get(r.user.as_str())
            .ok_or_else(|| Error::Parse { line: line_no, message: format!("user `{}` is not in the split", r.user) })?;
        let input = r.input.iter().map(|id| lookup(id)).collect::<Result<Vec<_>>>()?;
        out.push(TrainingPair { user, k: r.k, j: r.j, input, target: lookup(&r.target)?, weight: r.weight });
    }
    Ok(out)
}
