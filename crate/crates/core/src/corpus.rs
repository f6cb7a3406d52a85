//! Interaction logs, per-user sequences and leave-one-out splits.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ItemId;

/// File name of the per-user split records inside a split directory.
pub const SPLIT_FILE: &str = "split.jsonl";
/// File name of the item vocabulary inside a split directory.
pub const VOCAB_FILE: &str = "vocab.jsonl";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Tsv,
    Csv,
    Jsonl,
}

impl InputFormat {
    /// Guesses the format from a file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => InputFormat::Csv,
            Some("jsonl") | Some("json") | Some("ndjson") => InputFormat::Jsonl,
            _ => InputFormat::Tsv,
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(InputFormat::Tsv),
            "csv" => Ok(InputFormat::Csv),
            "jsonl" => Ok(InputFormat::Jsonl),
            _ => Err(Error::UnknownName { what: "format", value: s.to_string() }),
        }
    }
}

/// Bijection between external ids and dense indices, assigned in order of
/// first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    forward: HashMap<String, ItemId>,
    reverse: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `id`, assigning the next free index if unseen.
    pub fn intern(&mut self, id: &str) -> ItemId {
        if let Some(&ix) = self.forward.get(id) {
            return ix;
        }
        let ix = self.reverse.len() as ItemId;
        self.forward.insert(id.to_string(), ix);
        self.reverse.push(id.to_string());
        ix
    }

    pub fn index(&self, id: &str) -> Option<ItemId> {
        self.forward.get(id).copied()
    }

    pub fn external(&self, index: ItemId) -> Option<&str> {
        self.reverse.get(index as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }

    /// External ids in index order.
    pub fn ids(&self) -> &[String] {
        &self.reverse
    }
}

/// One user's items in timestamp order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserSequence {
    pub user: u32,
    pub items: Vec<ItemId>,
}

impl UserSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Sequences for every user of a log, with the user and item vocabularies.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub users: Vocabulary,
    pub items: Vocabulary,
    pub sequences: Vec<UserSequence>,
}

/// Leave-one-out split. `train`, `val_target` and `test_target` are aligned
/// by position; `users` maps `train[i].user` back to external ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitCorpus {
    pub train: Vec<UserSequence>,
    pub val_target: Vec<ItemId>,
    pub test_target: Vec<ItemId>,
    pub users: Vocabulary,
    pub items: Vocabulary,
    pub dropped_users: usize,
    pub dropped_interactions: usize,
}

impl SplitCorpus {
    pub fn n_users(&self) -> usize {
        self.train.len()
    }

    /// Reassembles `train + val + test` for every retained user.
    pub fn full_sequences(&self) -> Vec<UserSequence> {
        self.train
            .iter()
            .zip(self.val_target.iter().zip(&self.test_target))
            .map(|(seq, (&val, &test))| {
                let mut items = seq.items.clone();
                items.push(val);
                items.push(test);
                UserSequence { user: seq.user, items }
            })
            .collect()
    }

    /// External id of the user at split position `pos`.
    pub fn user_id(&self, pos: usize) -> &str {
        self.users.external(self.train[pos].user).unwrap_or("")
    }

    /// Writes `split.jsonl` and `vocab.jsonl` into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(File::create(dir.join(SPLIT_FILE))?);
        self.write_records(&mut out)?;
        out.flush()?;
        let mut out = BufWriter::new(File::create(dir.join(VOCAB_FILE))?);
        write_vocabulary(&self.items, &mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_records<W: Write>(&self, out: &mut W) -> Result<()> {
        for (pos, seq) in self.train.iter().enumerate() {
            let record = SplitRecord {
                user: self.user_id(pos).to_string(),
                train: seq.items.iter().map(|&i| self.item_id(i)).collect(),
                val: self.item_id(self.val_target[pos]),
                test: self.item_id(self.test_target[pos]),
            };
            serde_json::to_writer(&mut *out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Loads a split directory written by [`SplitCorpus::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<SplitCorpus> {
        let items = read_vocabulary(BufReader::new(File::open(dir.join(VOCAB_FILE))?))?;
        Self::read_records(BufReader::new(File::open(dir.join(SPLIT_FILE))?), items)
    }

    pub fn read_records<R: BufRead>(reader: R, mut items: Vocabulary) -> Result<SplitCorpus> {
        let mut users = Vocabulary::new();
        let mut train = Vec::new();
        let mut val_target = Vec::new();
        let mut test_target = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SplitRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
            let user = users.intern(&record.user);
            train.push(UserSequence {
                user,
                items: record.train.iter().map(|id| items.intern(id)).collect(),
            });
            val_target.push(items.intern(&record.val));
            test_target.push(items.intern(&record.test));
        }
        Ok(SplitCorpus {
            train,
            val_target,
            test_target,
            users,
            items,
            dropped_users: 0,
            dropped_interactions: 0,
        })
    }

    fn item_id(&self, index: ItemId) -> String {
        self.items.external(index).unwrap_or("").to_string()
    }
}

#[derive(Serialize, Deserialize)]
struct SplitRecord {
    user: String,
    train: Vec<String>,
    val: String,
    test: String,
}

#[derive(Serialize, Deserialize)]
struct VocabRecord {
    item: String,
    index: ItemId,
}

pub fn write_vocabulary<W: Write>(vocab: &Vocabulary, out: &mut W) -> Result<()> {
    for (index, item) in vocab.ids().iter().enumerate() {
        serde_json::to_writer(&mut *out, &VocabRecord { item: item.clone(), index: index as ItemId })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_vocabulary<R: BufRead>(reader: R) -> Result<Vocabulary> {
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: VocabRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
        records.push((n + 1, record));
    }
    records.sort_by_key(|(_, r)| r.index);
    let mut vocab = Vocabulary::new();
    for (line, record) in records {
        if record.index as usize != vocab.len() || vocab.index(&record.item).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("vocabulary is not a bijection onto 0..n at item `{}`", record.item),
            });
        }
        vocab.intern(&record.item);
    }
    Ok(vocab)
}

/// Dataset statistics in the usual benchmark-table layout.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub avg_length: f64,
    pub sparsity: f64,
}

pub fn load_interactions(path: &Path, format: InputFormat) -> Result<Vec<Interaction>> {
    let file = File::open(path)?;
    parse_interactions(BufReader::new(file), format)
}

/// Parses records in file order.
///
/// Delimited files may start with a `user,item,timestamp` header (any column
/// order, extra columns ignored); without one the first three columns are used
/// positionally. Line numbers in errors are 1-based physical lines.
pub fn parse_interactions<R: BufRead>(reader: R, format: InputFormat) -> Result<Vec<Interaction>> {
    match format {
        InputFormat::Jsonl => parse_jsonl(reader),
        InputFormat::Tsv => parse_delimited(reader, b'\t'),
        InputFormat::Csv => parse_delimited(reader, b','),
    }
}

fn parse_delimited<R: BufRead>(reader: R, delimiter: u8) -> Result<Vec<Interaction>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut columns = [0usize, 1, 2];
    let mut out = Vec::new();
    let mut first = true;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if first {
            first = false;
            if let Some(cols) = header_columns(&record) {
                columns = cols;
                continue;
            }
        }
        let field = |slot: usize, name: &'static str| -> Result<&str> {
            match record.get(columns[slot]).map(str::trim) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::MissingField { line, field: name }),
            }
        };
        let user = field(0, "user")?;
        let item = field(1, "item")?;
        let ts = field(2, "timestamp")?;
        out.push(Interaction { user: user.to_string(), item: item.to_string(), timestamp: parse_timestamp(ts, line)? });
    }
    Ok(out)
}

fn header_columns(record: &csv::StringRecord) -> Option<[usize; 3]> {
    let find = |name: &str| record.iter().position(|f| f.trim().eq_ignore_ascii_case(name));
    Some([find("user")?, find("item")?, find("timestamp")?])
}

fn parse_timestamp(raw: &str, line: usize) -> Result<i64> {
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    // Some exports write integral timestamps as floats ("978300760.0").
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 => Ok(v as i64),
        _ => Err(Error::Parse { line, message: format!("timestamp `{raw}` is not an integer") }),
    }
}

fn parse_jsonl<R: BufRead>(reader: R) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Parse { line: line_no, message: "expected a JSON object".into() })?;
        let text = |name: &'static str| -> Result<String> {
            match obj.get(name) {
                Some(serde_json::Value::String(s)) if !s.is_empty() => Ok(s.clone()),
                Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
                Some(serde_json::Value::String(_)) | None | Some(serde_json::Value::Null) => {
                    Err(Error::MissingField { line: line_no, field: name })
                }
                Some(other) => Err(Error::Parse { line: line_no, message: format!("field `{name}` has unsupported value {other}") }),
            }
        };
        let user = text("user")?;
        let item = text("item")?;
        let ts = text("timestamp")?;
        out.push(Interaction { user, item, timestamp: parse_timestamp(&ts, line_no)? });
    }
    Ok(out)
}

/// Groups a log into per-user sequences ordered by `(timestamp, file order)`.
///
/// Users and items are indexed by first appearance in `log`. With
/// `dedup_consecutive`, runs of the same item are collapsed after sorting.
pub fn build_sequences(log: &[Interaction], dedup_consecutive: bool) -> Corpus {
    let mut users = Vocabulary::new();
    let mut items = Vocabulary::new();
    let mut events: Vec<Vec<(i64, ItemId)>> = Vec::new();
    for event in log {
        let u = users.intern(&event.user) as usize;
        let i = items.intern(&event.item);
        if u == events.len() {
            events.push(Vec::new());
        }
        events[u].push((event.timestamp, i));
    }
    let sequences = events
        .into_iter()
        .enumerate()
        .map(|(u, mut evs)| {
            // stable: equal timestamps keep file order
            evs.sort_by_key(|&(ts, _)| ts);
            let mut seq: Vec<ItemId> = evs.into_iter().map(|(_, i)| i).collect();
            if dedup_consecutive {
                seq.dedup();
            }
            UserSequence { user: u as u32, items: seq }
        })
        .collect();
    Corpus { users, items, sequences }
}

/// Holds out the last item for test and the second-to-last for validation.
/// Users shorter than `min_len` are dropped and counted.
pub fn leave_one_out_split(corpus: &Corpus, min_len: usize) -> Result<SplitCorpus> {
    if min_len < 3 {
        return Err(Error::InvalidArgument(format!("min_len must be at least 3, got {min_len}")));
    }
    let mut split = SplitCorpus {
        train: Vec::new(),
        val_target: Vec::new(),
        test_target: Vec::new(),
        users: corpus.users.clone(),
        items: corpus.items.clone(),
        dropped_users: 0,
        dropped_interactions: 0,
    };
    for seq in &corpus.sequences {
        let n = seq.items.len();
        if n < min_len {
            split.dropped_users += 1;
            split.dropped_interactions += n;
            continue;
        }
        split.train.push(UserSequence { user: seq.user, items: seq.items[..n - 2].to_vec() });
        split.val_target.push(seq.items[n - 2]);
        split.test_target.push(seq.items[n - 1]);
    }
    if split.train.is_empty() {
        return Err(Error::EmptySplit { min_len });
    }
    Ok(split)
}

pub fn corpus_stats(seqs: &[UserSequence]) -> Result<StatsReport> {
    if seqs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n_users = seqs.len();
    let n_interactions: usize = seqs.iter().map(UserSequence::len).sum();
    let mut seen = std::collections::HashSet::new();
    for seq in seqs {
        seen.extend(seq.items.iter().copied());
    }
    let n_items = seen.len();
    if n_items == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(StatsReport {
        n_users,
        n_items,
        n_interactions,
        avg_length: n_interactions as f64 / n_users as f64,
        // Not clipped: repeated items without dedup can push this below zero.
        sparsity: 1.0 - n_interactions as f64 / (n_users as f64 * n_items as f64),
    })
}
