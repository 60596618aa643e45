//! Interaction ingestion and preprocessing.
//!
//! The pipeline is `load_interactions` -> `filter_ratings` -> `k_core_filter`
//! -> `index_dataset` -> `split_dataset`. Every stage is pure; the resulting
//! datasets are immutable once built and can be shared between readers.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One line of a raw interaction log.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user_key: String,
    pub item_key: String,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

impl RawInteraction {
    pub fn new(user_key: impl Into<String>, item_key: impl Into<String>) -> Self {
        Self {
            user_key: user_key.into(),
            item_key: item_key.into(),
            rating: None,
            timestamp: None,
        }
    }

    pub fn with_rating(mut self, rating: f64) -> Self {
        self.rating = Some(rating);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Tsv,
    Csv,
}

impl Format {
    fn delimiter(self) -> u8 {
        match self {
            Format::Tsv => b'\t',
            Format::Csv => b',',
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Format::Tsv),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown data format `{other}`"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Format::Tsv => f.write_str("tsv"),
            Format::Csv => f.write_str("csv"),
        }
    }
}

/// Reads `user, item[, rating[, timestamp]]` records, one per line.
pub fn load_interactions(path: impl AsRef<Path>, format: Format) -> Result<Vec<RawInteraction>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(format.delimiter())
        .quoting(format == Format::Csv)
        .from_reader(std::io::BufReader::new(file));

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Csv(e),
            _ => Error::MalformedLine {
                line_no: e.position().map_or(0, |p| p.line() as usize),
                reason: e.to_string(),
            },
        })?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        out.push(parse_record(&record, line_no)?);
    }
    Ok(out)
}

fn parse_record(record: &csv::StringRecord, line_no: usize) -> Result<RawInteraction> {
    let malformed = |reason: String| Error::MalformedLine { line_no, reason };
    if record.len() < 2 || record.len() > 4 {
        return Err(malformed(format!("expected 2 to 4 fields, found {}", record.len())));
    }
    let user_key = record[0].trim();
    let item_key = record[1].trim();
    if user_key.is_empty() || item_key.is_empty() {
        return Err(malformed("empty user or item key".into()));
    }
    let rating = match record.get(2).map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(
            s.parse::<f64>()
                .map_err(|_| malformed(format!("rating `{s}` is not a number")))?,
        ),
    };
    let timestamp = match record.get(3).map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(parse_timestamp(s).ok_or_else(|| malformed(format!("bad timestamp `{s}`")))?),
    };
    Ok(RawInteraction {
        user_key: user_key.to_owned(),
        item_key: item_key.to_owned(),
        rating,
        timestamp,
    })
}

fn parse_timestamp(s: &str) -> Option<i64> {
    s.parse::<i64>().ok().or_else(|| {
        // some dumps store epoch seconds as floats
        let f = s.parse::<f64>().ok()?;
        (f.is_finite() && f.fract() == 0.0).then_some(f as i64)
    })
}

/// Drops interactions whose rating is present and below `min_rating`.
pub fn filter_ratings(raw: Vec<RawInteraction>, min_rating: f64) -> Vec<RawInteraction> {
    raw.into_iter()
        .filter(|r| r.rating.is_none_or(|v| v >= min_rating))
        .collect()
}

/// Keeps the maximal sub-log in which every user and item has at least `k`
/// distinct interaction partners.
///
/// Degrees are counted over distinct (user, item) pairs; duplicate lines of a
/// surviving pair are all kept (they collapse later in [`index_dataset`]).
pub fn k_core_filter(raw: Vec<RawInteraction>, k: usize) -> Result<Vec<RawInteraction>> {
    assert!(k >= 1, "k-core requires k >= 1");

    let mut user_ids: HashMap<&str, usize> = HashMap::new();
    let mut item_ids: HashMap<&str, usize> = HashMap::new();
    let mut pair_ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut line_pair = Vec::with_capacity(raw.len());

    for r in &raw {
        let next_u = user_ids.len();
        let u = *user_ids.entry(r.user_key.as_str()).or_insert(next_u);
        let next_i = item_ids.len();
        let i = *item_ids.entry(r.item_key.as_str()).or_insert(next_i);
        let p = *pair_ids.entry((u, i)).or_insert_with(|| {
            pairs.push((u, i));
            pairs.len() - 1
        });
        line_pair.push(p);
    }

    let num_users = user_ids.len();
    // node ids: users first, then items
    let node_count = num_users + item_ids.len();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    for (p, &(u, i)) in pairs.iter().enumerate() {
        incident[u].push(p);
        incident[num_users + i].push(p);
    }
    let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
    let mut removed = vec![false; node_count];
    let mut alive = vec![true; pairs.len()];

    let mut queue: VecDeque<usize> = (0..node_count).filter(|&n| degree[n] < k).collect();
    for &n in &queue {
        removed[n] = true;
    }
    while let Some(node) = queue.pop_front() {
        for &p in &incident[node] {
            if !alive[p] {
                continue;
            }
            alive[p] = false;
            let (u, i) = pairs[p];
            let other = if node < num_users { num_users + i } else { u };
            degree[other] -= 1;
            if degree[other] < k && !removed[other] {
                removed[other] = true;
                queue.push_back(other);
            }
        }
    }

    let kept: Vec<RawInteraction> = raw
        .into_iter()
        .zip(line_pair)
        .filter_map(|(r, p)| alive[p].then_some(r))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyAfterFilter { k });
    }
    Ok(kept)
}

/// A set of (user, item) pairs over fixed id spaces, stored per user.
///
/// Used both for a full dataset and for the train / validation / test views
/// of a split. Per-user item lists are sorted ascending and duplicate free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserItemSet {
    num_users: usize,
    num_items: usize,
    user_items: Vec<Vec<usize>>,
    len: usize,
}

impl UserItemSet {
    /// Builds a set from arbitrary pairs; duplicates are collapsed.
    pub fn from_pairs(num_users: usize, num_items: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut user_items = vec![Vec::new(); num_users];
        for (u, i) in pairs {
            assert!(u < num_users && i < num_items, "pair ({u}, {i}) out of range");
            user_items[u].push(i);
        }
        Self::from_user_items(num_items, user_items)
    }

    pub fn from_user_items(num_items: usize, mut user_items: Vec<Vec<usize>>) -> Self {
        let mut len = 0;
        for items in &mut user_items {
            items.sort_unstable();
            items.dedup();
            len += items.len();
        }
        Self {
            num_users: user_items.len(),
            num_items,
            user_items,
            len,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Number of (user, item) pairs.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Sorted item ids of user `u`.
    pub fn positives(&self, u: usize) -> &[usize] {
        &self.user_items[u]
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        self.user_items[u].binary_search(&i).is_ok()
    }

    /// Pairs in (user, item) lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.user_items
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
    }

    /// Interaction count of each item.
    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_items];
        for items in &self.user_items {
            for &i in items {
                deg[i] += 1;
            }
        }
        deg
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        self.user_items.iter().map(Vec::len).collect()
    }

    /// Pairs present in either set; both must share id spaces.
    pub fn union(&self, other: &UserItemSet) -> UserItemSet {
        assert_eq!((self.num_users, self.num_items), (other.num_users, other.num_items));
        let user_items = self
            .user_items
            .iter()
            .zip(&other.user_items)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        Self::from_user_items(self.num_items, user_items)
    }
}

/// Bijection between raw string keys and contiguous ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    keys: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    fn intern(&mut self, key: &str) -> usize {
        if let Some(&id) = self.index.get(key) {
            return id;
        }
        let id = self.keys.len();
        self.keys.push(key.to_owned());
        self.index.insert(key.to_owned(), id);
        id
    }

    pub fn id(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, id: usize) -> Option<&str> {
        self.keys.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// De-duplicated interactions with contiguous user and item ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub interactions: UserItemSet,
    pub users: IdMap,
    pub items: IdMap,
}

impl InteractionDataset {
    pub fn num_users(&self) -> usize {
        self.interactions.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.interactions.num_items()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn user_positives(&self, u: usize) -> &[usize] {
        self.interactions.positives(u)
    }

    /// Wraps an already-indexed pair set, naming ids by their decimal value.
    pub fn from_set(interactions: UserItemSet) -> Self {
        let mut users = IdMap::default();
        for u in 0..interactions.num_users() {
            users.intern(&u.to_string());
        }
        let mut items = IdMap::default();
        for i in 0..interactions.num_items() {
            items.intern(&i.to_string());
        }
        Self {
            interactions,
            users,
            items,
        }
    }
}

/// Assigns ids in first-seen order and collapses duplicate pairs.
pub fn index_dataset(raw: &[RawInteraction]) -> Result<InteractionDataset> {
    if raw.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut pairs = Vec::with_capacity(raw.len());
    for r in raw {
        let u = users.intern(&r.user_key);
        let i = items.intern(&r.item_key);
        pairs.push((u, i));
    }
    let interactions = UserItemSet::from_pairs(users.len(), items.len(), pairs);
    Ok(InteractionDataset {
        interactions,
        users,
        items,
    })
}

/// Disjoint per-user train / validation / test partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: UserItemSet,
    pub validation: UserItemSet,
    pub test: UserItemSet,
    pub seed: u64,
}

impl SplitDataset {
    pub fn num_users(&self) -> usize {
        self.train.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items()
    }

    pub fn total_len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    /// Everything known at test time: train plus validation pairs.
    pub fn train_and_validation(&self) -> UserItemSet {
        self.train.union(&self.validation)
    }
}

// 0.1 * 30 evaluates to 3.0000000000000004; don't let that become 4
fn ceil_count(frac: f64, n: usize) -> usize {
    (frac * n as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Per-user random split.
///
/// For each user, `ceil(test_frac * |I_u|)` pairs go to test and
/// `ceil(val_frac * remaining)` of the rest to validation, always leaving at
/// least one train pair. Users with a single interaction keep it in train.
pub fn split_dataset(ds: &InteractionDataset, test_frac: f64, val_frac: f64, seed: u64) -> SplitDataset {
    assert!(
        (0.0..1.0).contains(&test_frac) && (0.0..1.0).contains(&val_frac),
        "split fractions must lie in [0, 1)"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_users = ds.num_users();
    let mut train = Vec::with_capacity(num_users);
    let mut validation = Vec::with_capacity(num_users);
    let mut test = Vec::with_capacity(num_users);

    for u in 0..num_users {
        let mut items = ds.user_positives(u).to_vec();
        items.shuffle(&mut rng);
        let n = items.len();
        let n_test = ceil_count(test_frac, n).min(n.saturating_sub(1));
        let rest = n - n_test;
        let n_val = ceil_count(val_frac, rest).min(rest.saturating_sub(1));
        test.push(items[..n_test].to_vec());
        validation.push(items[n_test..n_test + n_val].to_vec());
        train.push(items[n_test + n_val..].to_vec());
    }

    let num_items = ds.num_items();
    SplitDataset {
        train: UserItemSet::from_user_items(num_items, train),
        validation: UserItemSet::from_user_items(num_items, validation),
        test: UserItemSet::from_user_items(num_items, test),
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
}

impl DatasetStats {
    pub fn from_counts(users: usize, items: usize, interactions: usize) -> Self {
        let cells = users as f64 * items as f64;
        Self {
            users,
            items,
            interactions,
            density: if cells > 0.0 { interactions as f64 / cells } else { 0.0 },
        }
    }
}

pub fn dataset_stats(ds: &InteractionDataset) -> DatasetStats {
    DatasetStats::from_counts(ds.num_users(), ds.num_items(), ds.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn raw(pairs: &[(&str, &str)]) -> Vec<RawInteraction> {
        pairs.iter().map(|(u, i)| RawInteraction::new(*u, *i)).collect()
    }

    #[test]
    fn loads_two_column_tsv() {
        let f = write_tmp("u1\ti1\nu1\ti2\n");
        let got = load_interactions(f.path(), Format::Tsv).unwrap();
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|r| r.rating.is_none() && r.timestamp.is_none()));
        assert_eq!(got[1].item_key, "i2");
    }

    #[test]
    fn loads_rating_and_timestamp() {
        let f = write_tmp("u1\ti1\t5\t100\n");
        let got = load_interactions(f.path(), Format::Tsv).unwrap();
        assert_eq!(got[0].rating, Some(5.0));
        assert_eq!(got[0].timestamp, Some(100));
    }

    #[test]
    fn empty_file_is_empty_list() {
        let f = write_tmp("");
        assert!(load_interactions(f.path(), Format::Csv).unwrap().is_empty());
    }

    #[test]
    fn single_field_line_is_malformed() {
        let f = write_tmp("u1,i1\nu2\n");
        match load_interactions(f.path(), Format::Csv) {
            Err(Error::MalformedLine { line_no, .. }) => assert_eq!(line_no, 2),
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_interactions("/nonexistent/interactions.tsv", Format::Tsv).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn rating_filter_threshold() {
        let input: Vec<_> = [1.0, 3.0, 5.0]
            .iter()
            .map(|&r| RawInteraction::new("u", "i").with_rating(r))
            .collect();
        let kept: Vec<f64> = filter_ratings(input, 3.0).iter().map(|r| r.rating.unwrap()).collect();
        assert_eq!(kept, vec![3.0, 5.0]);
    }

    #[test]
    fn rating_filter_keeps_unrated_and_zero_threshold() {
        let input = raw(&[("a", "x"), ("b", "y")]);
        assert_eq!(filter_ratings(input.clone(), 3.0), input);
        let rated = vec![RawInteraction::new("a", "x").with_rating(0.5)];
        assert_eq!(filter_ratings(rated.clone(), 0.0), rated);
    }

    #[test]
    fn k_core_nothing_survives() {
        let input = raw(&[("u1", "i1"), ("u2", "i2"), ("u3", "i3")]);
        assert!(matches!(k_core_filter(input, 2), Err(Error::EmptyAfterFilter { k: 2 })));
    }

    #[test]
    fn k_core_fixpoint_on_entry() {
        let input = raw(&[("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")]);
        assert_eq!(k_core_filter(input.clone(), 2).unwrap(), input);
    }

    #[test]
    fn index_collapses_duplicates() {
        let ds = index_dataset(&raw(&[("a", "x"), ("a", "x"), ("b", "y")])).unwrap();
        assert_eq!((ds.num_users(), ds.num_items(), ds.len()), (2, 2, 2));
        assert_eq!(ds.users.id("a"), Some(0));
        assert_eq!(ds.items.key(1), Some("y"));
    }

    #[test]
    fn index_single_pair_and_grid() {
        let ds = index_dataset(&raw(&[("a", "x")])).unwrap();
        assert_eq!((ds.num_users(), ds.num_items()), (1, 1));

        let mut grid = Vec::new();
        for u in 0..4 {
            for i in 0..3 {
                grid.push(RawInteraction::new(format!("u{u}"), format!("i{i}")));
            }
        }
        let ds = index_dataset(&grid).unwrap();
        assert_eq!(ds.len(), 12);
        assert!((0..4).all(|u| ds.user_positives(u) == [0, 1, 2]));
    }

    #[test]
    fn index_empty_is_error() {
        assert!(matches!(index_dataset(&[]), Err(Error::EmptyInput)));
    }

    fn ten_item_user() -> InteractionDataset {
        let pairs: Vec<_> = (0..10).map(|i| RawInteraction::new("u", format!("i{i}"))).collect();
        index_dataset(&pairs).unwrap()
    }

    #[test]
    fn split_without_test_keeps_everything_in_train() {
        let ds = ten_item_user();
        let split = split_dataset(&ds, 0.0, 0.0, 7);
        assert!(split.test.is_empty() && split.validation.is_empty());
        assert_eq!(split.train, ds.interactions);
    }

    #[test]
    fn split_exact_fraction() {
        let split = split_dataset(&ten_item_user(), 0.2, 0.0, 1);
        assert_eq!(split.test.len(), 2);
        assert_eq!(split.train.len(), 8);
        let split = split_dataset(&ten_item_user(), 0.2, 0.1, 1);
        assert_eq!((split.test.len(), split.validation.len(), split.train.len()), (2, 1, 7));
    }

    #[test]
    fn split_is_deterministic() {
        let ds = ten_item_user();
        assert_eq!(split_dataset(&ds, 0.2, 0.1, 42), split_dataset(&ds, 0.2, 0.1, 42));
    }

    #[test]
    fn single_interaction_user_stays_in_train() {
        let ds = index_dataset(&raw(&[("a", "x")])).unwrap();
        let split = split_dataset(&ds, 0.5, 0.5, 3);
        assert_eq!(split.train.len(), 1);
    }

    #[test]
    fn density_from_table_counts() {
        let health = DatasetStats::from_counts(1974, 1200, 48_189);
        assert!((health.density - 0.02034).abs() < 5e-6);
        let gowalla = DatasetStats::from_counts(29_858, 40_988, 1_027_464);
        assert!((gowalla.density - 0.00084).abs() < 5e-6);
        let ds = index_dataset(&raw(&[("a", "x")])).unwrap();
        assert_eq!(dataset_stats(&ds).density, 1.0);
    }
}
