//! Rating ingestion, binarization, per-user temporal splitting and the
//! binary CSR interaction matrix.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One raw rating line.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingEvent {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: u64,
}

/// Field positions for comma-separated rating exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnOrder {
    pub user: usize,
    pub item: usize,
    pub rating: usize,
    pub timestamp: usize,
}

impl ColumnOrder {
    /// `item,user,rating,timestamp`, the layout of the Amazon review-ratings exports.
    pub const AMAZON: ColumnOrder = ColumnOrder {
        item: 0,
        user: 1,
        rating: 2,
        timestamp: 3,
    };

    fn arity(&self) -> usize {
        1 + self.user.max(self.item).max(self.rating).max(self.timestamp)
    }
}

impl Default for ColumnOrder {
    fn default() -> Self {
        ColumnOrder::AMAZON
    }
}

impl FromStr for ColumnOrder {
    type Err = Error;

    /// Parses a comma-separated permutation of `user,item,rating,timestamp`.
    fn from_str(s: &str) -> Result<Self> {
        let names: Vec<&str> = s.split(',').map(str::trim).collect();
        let find = |name: &str| {
            names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Config(format!("column order `{s}` is missing `{name}`")))
        };
        if names.len() != 4 {
            return Err(Error::Config(format!(
                "column order `{s}` must name exactly four columns"
            )));
        }
        Ok(ColumnOrder {
            user: find("user")?,
            item: find("item")?,
            rating: find("rating")?,
            timestamp: find("timestamp")?,
        })
    }
}

impl fmt::Display for ColumnOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names = [""; 4];
        names[self.user] = "user";
        names[self.item] = "item";
        names[self.rating] = "rating";
        names[self.timestamp] = "timestamp";
        write!(f, "{}", names.join(","))
    }
}

/// Supported raw rating layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingFormat {
    /// `user::item::rating::timestamp`
    MovieLensDat,
    /// Header-less CSV, column order configurable.
    AmazonCsv(ColumnOrder),
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens-dat" => Ok(RatingFormat::MovieLensDat),
            "amazon-csv" => Ok(RatingFormat::AmazonCsv(ColumnOrder::default())),
            other => Err(Error::Config(format!(
                "unknown rating format `{other}` (expected movielens-dat or amazon-csv)"
            ))),
        }
    }
}

impl fmt::Display for RatingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatingFormat::MovieLensDat => f.write_str("movielens-dat"),
            RatingFormat::AmazonCsv(_) => f.write_str("amazon-csv"),
        }
    }
}

pub fn parse_ratings(path: &Path, format: RatingFormat) -> Result<Vec<RatingEvent>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ratings_from(file, format, path)
}

/// Same as [`parse_ratings`] over any reader; `label` names the source in errors.
pub fn parse_ratings_from<R: Read>(
    reader: R,
    format: RatingFormat,
    label: &Path,
) -> Result<Vec<RatingEvent>> {
    match format {
        RatingFormat::MovieLensDat => parse_dat(reader, label),
        RatingFormat::AmazonCsv(order) => parse_csv(reader, order, label),
    }
}

fn parse_dat<R: Read>(reader: R, label: &Path) -> Result<Vec<RatingEvent>> {
    let mut events = Vec::new();
    // ML-1M titles are latin-1 but ratings.dat is pure ASCII; read bytes to be lenient.
    for (i, line) in BufReader::new(reader).split(b'\n').enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(label, e))?;
        let line = String::from_utf8_lossy(&line);
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(parse_error(
                label,
                line_no,
                format!("expected 4 `::`-separated fields, found {}", fields.len()),
            ));
        }
        events.push(make_event(
            label, line_no, fields[0], fields[1], fields[2], fields[3],
        )?);
    }
    Ok(events)
}

fn parse_csv<R: Read>(reader: R, order: ColumnOrder, label: &Path) -> Result<Vec<RatingEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let arity = order.arity();
    let mut events = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_error(label, line, e.to_string())
        })?;
        let line_no = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != arity {
            return Err(parse_error(
                label,
                line_no,
                format!("expected {arity} comma-separated fields, found {}", record.len()),
            ));
        }
        events.push(make_event(
            label,
            line_no,
            &record[order.user],
            &record[order.item],
            &record[order.rating],
            &record[order.timestamp],
        )?);
    }
    Ok(events)
}

fn make_event(
    label: &Path,
    line: usize,
    user: &str,
    item: &str,
    rating: &str,
    timestamp: &str,
) -> Result<RatingEvent> {
    let user = user.trim();
    let item = item.trim();
    if user.is_empty() || item.is_empty() {
        return Err(parse_error(label, line, "empty user or item id".into()));
    }
    let rating: f64 = rating
        .trim()
        .parse()
        .map_err(|_| parse_error(label, line, format!("invalid rating `{rating}`")))?;
    if !rating.is_finite() {
        return Err(parse_error(label, line, format!("non-finite rating `{rating}`")));
    }
    let timestamp = parse_timestamp(timestamp.trim())
        .ok_or_else(|| parse_error(label, line, format!("invalid timestamp `{timestamp}`")))?;
    Ok(RatingEvent {
        user: user.to_string(),
        item: item.to_string(),
        rating,
        timestamp,
    })
}

// Some exports write epoch seconds as `1400000000.0`.
fn parse_timestamp(s: &str) -> Option<u64> {
    if let Ok(t) = s.parse::<u64>() {
        return Some(t);
    }
    let t: f64 = s.parse().ok()?;
    (t.is_finite() && t >= 0.0 && t.fract() == 0.0 && t < u64::MAX as f64).then_some(t as u64)
}

fn parse_error(label: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: label.to_path_buf(),
        line,
        message,
    }
}

/// Keeps the events rated strictly above `threshold`, with ratings set to 1.
pub fn binarize(events: &[RatingEvent], threshold: f64) -> Vec<RatingEvent> {
    events
        .iter()
        .filter(|e| e.rating > threshold)
        .map(|e| RatingEvent {
            rating: 1.0,
            ..e.clone()
        })
        .collect()
}

/// Train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.5,
            validation: 0.2,
            test: 0.3,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Config(format!(
                "split fractions must be nonnegative, got {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Cut points `(train_end, validation_end)` for a user with `n` events.
    pub fn cuts(&self, n: usize) -> (usize, usize) {
        // The epsilon keeps products like 0.7 * 10 from flooring to 6.
        let cut = |f: f64| ((f * n as f64 + 1e-9).floor() as usize).min(n);
        let a = cut(self.train);
        let b = cut(self.train + self.validation).max(a);
        (a, b)
    }
}

/// Bidirectional map between external string ids and dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdIndex {
    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate id `{id}` in index")));
            }
        }
        Ok(IdIndex { ids, lookup })
    }

    /// Builds an index over the distinct ids, numerically ordered when every
    /// id is an unsigned integer and lexicographically otherwise.
    pub fn sorted<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        let mut ids: Vec<String> = ids.into_iter().map(str::to_string).collect();
        sort_ids(&mut ids);
        ids.dedup();
        IdIndex::from_ids(ids).expect("deduplicated")
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

fn sort_ids(ids: &mut [String]) {
    if ids.iter().all(|s| s.parse::<u64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<u64>().unwrap());
    } else {
        ids.sort();
    }
}

/// Binary user-item matrix in compressed sparse row layout.
///
/// Each row holds the strictly increasing item indices the user interacted
/// with; all stored entries are implicitly 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    n_items: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
}

impl InteractionMatrix {
    pub fn empty(n_users: usize, n_items: usize) -> Self {
        InteractionMatrix {
            n_items,
            indptr: vec![0; n_users + 1],
            indices: Vec::new(),
        }
    }

    /// Builds a matrix from arbitrary per-user item lists; rows are sorted and deduplicated.
    pub fn from_rows<I, R>(n_items: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = usize>,
    {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        for row in rows {
            let start = indices.len();
            for j in row {
                if j >= n_items {
                    return Err(Error::dims("interaction row", format!("< {n_items}"), j));
                }
                indices.push(j as u32);
            }
            indices[start..].sort_unstable();
            let mut w = start;
            for r in start..indices.len() {
                if w == start || indices[r] != indices[w - 1] {
                    indices[w] = indices[r];
                    w += 1;
                }
            }
            indices.truncate(w);
            indptr.push(indices.len());
        }
        Ok(InteractionMatrix {
            n_items,
            indptr,
            indices,
        })
    }

    pub fn n_users(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, user: usize) -> &[u32] {
        &self.indices[self.indptr[user]..self.indptr[user + 1]]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.n_users()).map(move |u| self.row(u))
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.row(user).binary_search(&(item as u32)).is_ok()
    }

    /// Number of users that interacted with each item.
    pub fn item_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_items];
        for &j in &self.indices {
            counts[j as usize] += 1;
        }
        counts
    }

    /// Element-wise OR of two matrices of identical shape.
    pub fn union(&self, other: &InteractionMatrix) -> Result<InteractionMatrix> {
        if self.n_users() != other.n_users() || self.n_items != other.n_items {
            return Err(Error::dims(
                "matrix union",
                format!("{}x{}", self.n_users(), self.n_items),
                format!("{}x{}", other.n_users(), other.n_items),
            ));
        }
        let mut indptr = vec![0];
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        for u in 0..self.n_users() {
            let (a, b) = (self.row(u), other.row(u));
            let (mut i, mut k) = (0, 0);
            while i < a.len() || k < b.len() {
                let next = match (a.get(i), b.get(k)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        k += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (_, Some(&y)) => {
                        k += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                indices.push(next);
            }
            indptr.push(indices.len());
        }
        Ok(InteractionMatrix {
            n_items: self.n_items,
            indptr,
            indices,
        })
    }
}

/// Builds a binary matrix from events; duplicate pairs collapse to one entry.
pub fn build_matrix(
    events: &[RatingEvent],
    user_index: &IdIndex,
    item_index: &IdIndex,
) -> Result<InteractionMatrix> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); user_index.len()];
    for e in events {
        let u = user_index.get(&e.user).ok_or_else(|| Error::UnknownId {
            kind: "user",
            id: e.user.clone(),
        })?;
        let j = item_index.get(&e.item).ok_or_else(|| Error::UnknownId {
            kind: "item",
            id: e.item.clone(),
        })?;
        rows[u].push(j);
    }
    InteractionMatrix::from_rows(item_index.len(), rows)
}

/// Which held-out portion of a [`SplitDataset`] to address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "valid" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split `{other}` (expected train, validation or test)"
            ))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

/// Three disjoint interaction matrices over shared user and item index spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
    pub users: IdIndex,
    pub items: IdIndex,
}

impl SplitDataset {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn matrix(&self, split: Split) -> &InteractionMatrix {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Interactions a model may consume as history when predicting `split`:
    /// train for validation, train ∪ validation for test.
    pub fn history_for(&self, split: Split) -> Result<InteractionMatrix> {
        match split {
            Split::Train | Split::Validation => Ok(self.train.clone()),
            Split::Test => self.train.union(&self.validation),
        }
    }
}

/// Splits each user's events chronologically into train/validation/test.
///
/// Events are ordered by timestamp with ties broken by item id. A user with
/// `N` events contributes `[0, ⌊f_train·N⌋)` to train, up to
/// `⌊(f_train + f_val)·N⌋` to validation and the rest to test. Repeated
/// interactions with the same item keep only the earliest. Users with no
/// train events are dropped, and so are items that never occur in train.
pub fn temporal_split(events: &[RatingEvent], fractions: SplitFractions) -> Result<SplitDataset> {
    fractions.validate()?;
    if events.is_empty() {
        return Err(Error::EmptyDataset("no events to split".into()));
    }

    let mut per_user: HashMap<&str, Vec<(u64, &str)>> = HashMap::new();
    for e in events {
        per_user
            .entry(e.user.as_str())
            .or_default()
            .push((e.timestamp, e.item.as_str()));
    }

    let mut kept: Vec<(&str, [Vec<&str>; 3])> = Vec::new();
    for (user, mut evs) in per_user {
        evs.sort_unstable();
        let mut seen = std::collections::HashSet::new();
        evs.retain(|(_, item)| seen.insert(*item));
        let (a, b) = fractions.cuts(evs.len());
        if a == 0 {
            continue;
        }
        let take = |r: std::ops::Range<usize>| evs[r].iter().map(|(_, i)| *i).collect::<Vec<_>>();
        kept.push((user, [take(0..a), take(a..b), take(b..evs.len())]));
    }
    if kept.is_empty() {
        return Err(Error::EmptyDataset(
            "no user has a training interaction after splitting".into(),
        ));
    }

    let users = IdIndex::sorted(kept.iter().map(|(u, _)| *u));
    let items = IdIndex::sorted(kept.iter().flat_map(|(_, s)| s[0].iter().copied()));

    let mut rows: [Vec<Vec<usize>>; 3] = std::array::from_fn(|_| vec![Vec::new(); users.len()]);
    for (user, parts) in &kept {
        let u = users.get(user).expect("indexed");
        for (s, part) in parts.iter().enumerate() {
            rows[s][u] = part.iter().filter_map(|i| items.get(i)).collect();
        }
    }
    let [train, validation, test] = rows.map(|r| InteractionMatrix::from_rows(items.len(), r));
    Ok(SplitDataset {
        train: train?,
        validation: validation?,
        test: test?,
        users,
        items,
    })
}

/// Settings recorded alongside written splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepInfo {
    pub source: String,
    pub format: String,
    pub threshold: f64,
    pub fractions: SplitFractions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub users: usize,
    pub items: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// JSON sidecar describing a prepared dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub prep: PrepInfo,
    pub counts: SplitCounts,
    pub content_hash: String,
    pub users: Vec<String>,
    pub items: Vec<String>,
}

pub const META_FILE: &str = "dataset.json";

fn split_file(split: Split) -> &'static str {
    match split {
        Split::Train => "train.csv",
        Split::Validation => "validation.csv",
        Split::Test => "test.csv",
    }
}

fn matrix_csv(m: &InteractionMatrix) -> String {
    let mut out = String::from("user_idx,item_idx\n");
    for u in 0..m.n_users() {
        for &j in m.row(u) {
            out.push_str(&format!("{u},{j}\n"));
        }
    }
    out
}

/// Hex SHA-256 over the three split files and the id lists.
fn content_hash(csvs: &[String; 3], data: &SplitDataset) -> String {
    let mut h = Sha256::new();
    for c in csvs {
        h.update(c.as_bytes());
    }
    for id in data.users.ids().iter().chain(data.items.ids()) {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Writes `train.csv`, `validation.csv`, `test.csv` and `dataset.json` into `dir`.
pub fn write_split(dir: &Path, data: &SplitDataset, prep: PrepInfo) -> Result<DatasetMeta> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csvs = [Split::Train, Split::Validation, Split::Test].map(|s| matrix_csv(data.matrix(s)));
    for (split, body) in [Split::Train, Split::Validation, Split::Test].iter().zip(&csvs) {
        let path = dir.join(split_file(*split));
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    let meta = DatasetMeta {
        prep,
        counts: SplitCounts {
            users: data.n_users(),
            items: data.n_items(),
            train: data.train.nnz(),
            validation: data.validation.nnz(),
            test: data.test.nnz(),
        },
        content_hash: content_hash(&csvs, data),
        users: data.users.ids().to_vec(),
        items: data.items.ids().to_vec(),
    };
    let path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(meta)
}

/// Loads a directory written by [`write_split`].
pub fn read_split(dir: &Path) -> Result<(SplitDataset, DatasetMeta)> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)?;
    let users = IdIndex::from_ids(meta.users.clone())?;
    let items = IdIndex::from_ids(meta.items.clone())?;
    let load = |split: Split| -> Result<InteractionMatrix> {
        let path = dir.join(split_file(split));
        read_matrix_csv(&path, users.len(), items.len())
    };
    let data = SplitDataset {
        train: load(Split::Train)?,
        validation: load(Split::Validation)?,
        test: load(Split::Test)?,
        users,
        items,
    };
    Ok((data, meta))
}

fn read_matrix_csv(path: &Path, n_users: usize, n_items: usize) -> Result<InteractionMatrix> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut rows = vec![Vec::new(); n_users];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse = |k: usize| -> Result<usize> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_error(path, line, "expected `user_idx,item_idx`".into()))
        };
        let (u, j) = (parse(0)?, parse(1)?);
        if u >= n_users {
            return Err(parse_error(path, line, format!("user index {u} >= {n_users}")));
        }
        rows[u].push(j);
    }
    InteractionMatrix::from_rows(n_items, rows)
}

/// Default location for prepared data when no directory is given.
pub fn default_data_dir() -> Option<PathBuf> {
    std::env::var_os("AMAREC_DATA_DIR").map(PathBuf::from)
}
