use crate::error::{Error, Result};
use crate::ItemId;

/// Inputs longer than this are cut to their most recent items before any
/// distance computation.
pub const DEFAULT_MAX_LEN: usize = 512;

/// Reusable rows for the two-row Levenshtein program.
#[derive(Default, Debug, Clone)]
pub struct EditScratch {
    prev: Vec<usize>,
    curr: Vec<usize>,
}

impl EditScratch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unit-cost insert/delete/substitute distance.
    pub fn distance(&mut self, a: &[ItemId], b: &[ItemId]) -> usize {
        // keep the shorter sequence on the row axis
        let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
        if b.is_empty() {
            return a.len();
        }
        let cols = b.len() + 1;
        self.prev.clear();
        self.prev.extend(0..cols);
        self.curr.clear();
        self.curr.resize(cols, 0);
        for (i, &x) in a.iter().enumerate() {
            self.curr[0] = i + 1;
            for (c, &y) in b.iter().enumerate() {
                let sub = self.prev[c] + usize::from(x != y);
                let del = self.prev[c + 1] + 1;
                let ins = self.curr[c] + 1;
                self.curr[c + 1] = sub.min(del).min(ins);
            }
            std::mem::swap(&mut self.prev, &mut self.curr);
        }
        self.prev[cols - 1]
    }

    /// `1 - distance / max(|a|, |b|)` after truncating both to their last
    /// `max_len` items. Both inputs must be non-empty.
    pub fn similarity(&mut self, a: &[ItemId], b: &[ItemId], max_len: usize) -> f64 {
        let a = tail(a, max_len);
        let b = tail(b, max_len);
        let longest = a.len().max(b.len());
        let d = self.distance(a, b);
        (longest - d) as f64 / longest as f64
    }
}

pub(crate) fn tail(x: &[ItemId], max_len: usize) -> &[ItemId] {
    if max_len > 0 && x.len() > max_len {
        &x[x.len() - max_len..]
    } else {
        x
    }
}

pub fn edit_distance(a: &[ItemId], b: &[ItemId]) -> usize {
    EditScratch::new().distance(a, b)
}

/// Edit distance divided by the longer length.
pub fn normalized_distance(a: &[ItemId], b: &[ItemId]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("distance of an empty sequence".into()));
    }
    let (a, b) = (tail(a, DEFAULT_MAX_LEN), tail(b, DEFAULT_MAX_LEN));
    Ok(EditScratch::new().distance(a, b) as f64 / a.len().max(b.len()) as f64)
}

/// `1 - EditDist(a, b) / max(|a|, |b|)`, in `[0, 1]`, 1 iff identical.
pub fn similarity(a: &[ItemId], b: &[ItemId]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("similarity of an empty sequence".into()));
    }
    Ok(EditScratch::new().similarity(a, b, DEFAULT_MAX_LEN))
}
