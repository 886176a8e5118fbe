//! Interaction logs, id mapping, per-user splits and negative sampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
}

impl Interaction {
    pub fn new(user: usize, item: usize) -> Self {
        Self { user, item }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    fn slot(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Validation => 1,
            Split::Test => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// Bijection between external string ids and dense 0-based indices.
///
/// Serializes as the list of external ids in index order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdMap {
    external: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of `id`, assigning the next free index when unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.index.get(id) {
            return idx;
        }
        let idx = self.external.len();
        self.external.push(id.to_owned());
        self.index.insert(id.to_owned(), idx);
        idx
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn external(&self, idx: usize) -> Option<&str> {
        self.external.get(idx).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.external
    }
}

impl From<Vec<String>> for IdMap {
    fn from(external: Vec<String>) -> Self {
        let mut map = IdMap::new();
        for id in &external {
            map.intern(id);
        }
        map
    }
}

impl From<IdMap> for Vec<String> {
    fn from(map: IdMap) -> Self {
        map.external
    }
}

/// Deduplicated interactions in first-seen order, with the id maps that
/// produced their indices.
#[derive(Debug, Clone, Default)]
pub struct RawInteractions {
    pub pairs: Vec<Interaction>,
    pub users: IdMap,
    pub items: IdMap,
}

/// Reads `user_id<delim>item_id[<delim>timestamp]` lines from `path`.
///
/// Pass `existing` to extend previously built id maps instead of starting
/// fresh. Blank lines are skipped; timestamps are ignored.
pub fn load_interactions(
    path: &Path,
    delimiter: char,
    existing: Option<(IdMap, IdMap)>,
) -> Result<RawInteractions> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(BufReader::new(file), delimiter, existing).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_interactions<R: BufRead>(
    reader: R,
    delimiter: char,
    existing: Option<(IdMap, IdMap)>,
) -> Result<RawInteractions> {
    let (mut users, mut items) = existing.unwrap_or_default();
    let mut seen = std::collections::HashSet::new();
    let mut pairs = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delimiter).map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::MalformedLine {
                line: lineno + 1,
                reason: format!("expected 2 or 3 fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::MalformedLine {
                line: lineno + 1,
                reason: "empty user or item id".into(),
            });
        }
        let pair = Interaction::new(users.intern(fields[0]), items.intern(fields[1]));
        if seen.insert(pair) {
            pairs.push(pair);
        }
    }

    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(RawInteractions {
        pairs,
        users,
        items,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = Self {
            train,
            validation,
            test,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::invalid("split ratios must be positive"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split ratios must sum to 1"));
        }
        Ok(())
    }

    /// (train, validation, test) counts for a user with `n` interactions.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        if n < 3 {
            return (n, 0, 0);
        }
        let mut val = (n as f64 * self.validation).round() as usize;
        let mut test = (n as f64 * self.test).round() as usize;
        while val + test >= n {
            if test >= val && test > 0 {
                test -= 1;
            } else {
                val -= 1;
            }
        }
        (n - val - test, val, test)
    }
}

/// Index-mapped interactions partitioned into train, validation and test.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_users: usize,
    num_items: usize,
    splits: [Vec<Interaction>; 3],
    // per split, per user, sorted item indices
    by_user: [Vec<Vec<usize>>; 3],
    item_popularity: Vec<u32>,
}

impl Dataset {
    /// Builds a dataset from explicit splits, checking ranges, duplicates and
    /// disjointness.
    pub fn from_splits(
        num_users: usize,
        num_items: usize,
        train: Vec<Interaction>,
        validation: Vec<Interaction>,
        test: Vec<Interaction>,
    ) -> Result<Self> {
        let mut splits = [train, validation, test];
        let mut by_user: [Vec<Vec<usize>>; 3] = Default::default();
        for (slot, split) in splits.iter_mut().enumerate() {
            split.sort_unstable();
            let rows = &mut by_user[slot];
            rows.resize(num_users, Vec::new());
            for (n, x) in split.iter().enumerate() {
                if x.user >= num_users {
                    return Err(Error::IndexOutOfRange {
                        what: "user",
                        index: x.user,
                        limit: num_users,
                    });
                }
                if x.item >= num_items {
                    return Err(Error::IndexOutOfRange {
                        what: "item",
                        index: x.item,
                        limit: num_items,
                    });
                }
                if n > 0 && split[n - 1] == *x {
                    return Err(Error::invalid(format!(
                        "duplicate interaction ({}, {}) in {}",
                        x.user,
                        x.item,
                        Split::ALL[slot].name()
                    )));
                }
                rows[x.user].push(x.item);
            }
        }
        for u in 0..num_users {
            for a in 0..3 {
                for b in (a + 1)..3 {
                    if let Some(item) = first_common(&by_user[a][u], &by_user[b][u]) {
                        return Err(Error::invalid(format!(
                            "interaction ({u}, {item}) appears in both {} and {}",
                            Split::ALL[a].name(),
                            Split::ALL[b].name()
                        )));
                    }
                }
            }
        }
        let mut item_popularity = vec![0u32; num_items];
        for x in &splits[0] {
            item_popularity[x.item] += 1;
        }
        Ok(Self {
            num_users,
            num_items,
            splits,
            by_user,
            item_popularity,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Interactions of `split`, sorted by (user, item).
    pub fn interactions(&self, split: Split) -> &[Interaction] {
        &self.splits[split.slot()]
    }

    pub fn train(&self) -> &[Interaction] {
        self.interactions(Split::Train)
    }

    pub fn validation(&self) -> &[Interaction] {
        self.interactions(Split::Validation)
    }

    pub fn test(&self) -> &[Interaction] {
        self.interactions(Split::Test)
    }

    /// Sorted items of `user` in `split`.
    pub fn user_items(&self, split: Split, user: usize) -> &[usize] {
        &self.by_user[split.slot()][user]
    }

    pub fn item_popularity(&self) -> &[u32] {
        &self.item_popularity
    }

    /// Whether `(user, item)` appears in any split.
    pub fn is_observed(&self, user: usize, item: usize) -> bool {
        Split::ALL
            .iter()
            .any(|&s| self.user_items(s, user).binary_search(&item).is_ok())
    }

    fn check_user(&self, user: usize) -> Result<()> {
        if user >= self.num_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                limit: self.num_users,
            });
        }
        Ok(())
    }
}

fn first_common(a: &[usize], b: &[usize]) -> Option<usize> {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return Some(a[i]),
        }
    }
    None
}

/// Seeded per-user random holdout.
///
/// Each user's items are sorted, shuffled with one generator shared across
/// users (visited in index order) and cut by `ratios.counts`.
pub fn split_per_user(raw: &RawInteractions, ratios: SplitRatios, seed: u64) -> Result<Dataset> {
    ratios.validate()?;
    if raw.pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let num_users = raw.users.len();
    let num_items = raw.items.len();
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); num_users];
    for p in &raw.pairs {
        if p.user >= num_users || p.item >= num_items {
            return Err(Error::invalid("interaction outside the id maps"));
        }
        per_user[p.user].push(p.item);
    }

    let mut rng = crate::rng::seeded(seed);
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (user, items) in per_user.iter_mut().enumerate() {
        items.sort_unstable();
        items.dedup();
        items.shuffle(&mut rng);
        let (n_train, n_val, _) = ratios.counts(items.len());
        for (pos, &item) in items.iter().enumerate() {
            let x = Interaction::new(user, item);
            if pos < n_train {
                train.push(x);
            } else if pos < n_train + n_val {
                validation.push(x);
            } else {
                test.push(x);
            }
        }
    }
    Dataset::from_splits(num_users, num_items, train, validation, test)
}

/// Uniform draw from the items not in `user`'s train set.
pub fn sample_negative<R: Rng + ?Sized>(dataset: &Dataset, user: usize, rng: &mut R) -> Result<usize> {
    dataset.check_user(user)?;
    sample_excluding(
        dataset.num_items(),
        &[dataset.user_items(Split::Train, user)],
        user,
        rng,
    )
}

/// Uniform draw from the items `user` has not interacted with in any split.
pub fn sample_unobserved<R: Rng + ?Sized>(dataset: &Dataset, user: usize, rng: &mut R) -> Result<usize> {
    dataset.check_user(user)?;
    let excluded: Vec<&[usize]> = Split::ALL.iter().map(|&s| dataset.user_items(s, user)).collect();
    sample_excluding(dataset.num_items(), &excluded, user, rng)
}

/// Uniform draw from `0..num_items` minus the union of the sorted, mutually
/// disjoint `excluded` lists.
pub(crate) fn sample_excluding<R: Rng + ?Sized>(
    num_items: usize,
    excluded: &[&[usize]],
    user: usize,
    rng: &mut R,
) -> Result<usize> {
    let taken: usize = excluded.iter().map(|e| e.len()).sum();
    if taken >= num_items {
        return Err(Error::NegativesExhausted { user });
    }
    let hit = |item: usize| excluded.iter().any(|e| e.binary_search(&item).is_ok());
    if taken * 2 <= num_items {
        loop {
            let item = rng.random_range(0..num_items);
            if !hit(item) {
                return Ok(item);
            }
        }
    }
    let free: Vec<usize> = (0..num_items).filter(|&i| !hit(i)).collect();
    Ok(free[rng.random_range(0..free.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn raw_from(lines: &str) -> RawInteractions {
        parse_interactions(lines.as_bytes(), ',', None).unwrap()
    }

    #[test]
    fn three_lines_two_users_two_items() {
        let raw = raw_from("a,x\na,y\nb,x\n");
        assert_eq!(raw.pairs.len(), 3);
        assert_eq!(raw.users.len(), 2);
        assert_eq!(raw.items.len(), 2);
    }

    #[test]
    fn duplicate_lines_collapse() {
        let raw = raw_from("a,x\na,x\n");
        assert_eq!(raw.pairs, vec![Interaction::new(0, 0)]);
    }

    #[test]
    fn string_ids_map_and_round_trip() {
        let raw = raw_from("u17,itemZ,1000\nu3,itemZ,1001\n");
        assert_eq!(raw.users.get("u17"), Some(0));
        assert_eq!(raw.users.external(1), Some("u3"));
        assert_eq!(raw.items.external(raw.items.get("itemZ").unwrap()), Some("itemZ"));
        let json = serde_json::to_string(&raw.users).unwrap();
        assert_eq!(json, r#"["u17","u3"]"#);
        let back: IdMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, raw.users);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_interactions("a,x\nbroken\n".as_bytes(), ',', None).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 2, .. }), "{err}");
        let err = parse_interactions("a,x,1,2\n".as_bytes(), ',', None).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
        let err = parse_interactions("a,\n".as_bytes(), ',', None).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn empty_input_is_an_error() {
        let err = parse_interactions("\n\n".as_bytes(), ',', None).unwrap_err();
        assert!(matches!(err, Error::EmptyInput));
    }

    #[test]
    fn custom_delimiter_and_existing_maps() {
        let first = parse_interactions("a\tx\n".as_bytes(), '\t', None).unwrap();
        let second =
            parse_interactions("b\tx\n".as_bytes(), '\t', Some((first.users, first.items))).unwrap();
        assert_eq!(second.users.ids(), &["a".to_string(), "b".to_string()]);
        assert_eq!(second.pairs, vec![Interaction::new(1, 0)]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_interactions(Path::new("/nonexistent/file.csv"), ',', None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn ten_items_split_eight_one_one() {
        let ratios = SplitRatios::default();
        assert_eq!(ratios.counts(10), (8, 1, 1));
        assert_eq!(ratios.counts(2), (2, 0, 0));
        assert_eq!(ratios.counts(3), (3, 0, 0));
        let r = SplitRatios::new(0.2, 0.4, 0.4).unwrap();
        let (t, v, s) = r.counts(3);
        assert!(t >= 1 && t + v + s == 3);
    }

    #[test]
    fn small_users_stay_in_train() {
        let raw = raw_from("a,x\na,y\nb,x\nb,y\nb,z\nb,w\nb,v\nb,q\nb,r\nb,s\nb,t\nb,o\n");
        let ds = split_per_user(&raw, SplitRatios::default(), 7).unwrap();
        assert_eq!(ds.user_items(Split::Train, 0).len(), 2);
        assert!(ds.user_items(Split::Validation, 0).is_empty());
        assert!(ds.user_items(Split::Test, 0).is_empty());
        assert_eq!(ds.user_items(Split::Train, 1).len(), 8);
        assert_eq!(ds.user_items(Split::Validation, 1).len(), 1);
        assert_eq!(ds.user_items(Split::Test, 1).len(), 1);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let mut text = String::new();
        for u in 0..20 {
            for i in 0..(u % 7 + 1) * 3 {
                text.push_str(&format!("u{u},i{}\n", (u * 13 + i * 5) % 40));
            }
        }
        let raw = raw_from(&text);
        let a = split_per_user(&raw, SplitRatios::default(), 11).unwrap();
        let b = split_per_user(&raw, SplitRatios::default(), 11).unwrap();
        assert_eq!(a, b);
        let c = split_per_user(&raw, SplitRatios::default(), 12).unwrap();
        assert_ne!(a.validation(), c.validation());
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let raw = raw_from("a,x\n");
        let bad = SplitRatios {
            train: 0.5,
            validation: 0.2,
            test: 0.2,
        };
        assert!(split_per_user(&raw, bad, 0).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn popularity_counts_train_only() {
        let ds = Dataset::from_splits(
            2,
            3,
            vec![Interaction::new(0, 1), Interaction::new(1, 1), Interaction::new(1, 2)],
            vec![Interaction::new(0, 2)],
            vec![],
        )
        .unwrap();
        assert_eq!(ds.item_popularity(), &[0, 2, 1]);
    }

    #[test]
    fn from_splits_rejects_overlap_and_duplicates() {
        let overlap = Dataset::from_splits(
            1,
            2,
            vec![Interaction::new(0, 1)],
            vec![Interaction::new(0, 1)],
            vec![],
        );
        assert!(overlap.is_err());
        let dup = Dataset::from_splits(
            1,
            2,
            vec![Interaction::new(0, 1), Interaction::new(0, 1)],
            vec![],
            vec![],
        );
        assert!(dup.is_err());
        let range = Dataset::from_splits(1, 2, vec![Interaction::new(0, 2)], vec![], vec![]);
        assert!(matches!(range, Err(Error::IndexOutOfRange { .. })));
    }

    fn train_only(num_items: usize, items: &[usize]) -> Dataset {
        let train = items.iter().map(|&i| Interaction::new(0, i)).collect();
        Dataset::from_splits(1, num_items, train, vec![], vec![]).unwrap()
    }

    #[test]
    fn forced_negative() {
        let ds = train_only(3, &[0, 1]);
        let mut rng = rng::seeded(1);
        for _ in 0..50 {
            assert_eq!(sample_negative(&ds, 0, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn exhausted_negatives() {
        let ds = train_only(2, &[0, 1]);
        let err = sample_negative(&ds, 0, &mut rng::seeded(1)).unwrap_err();
        assert!(matches!(err, Error::NegativesExhausted { user: 0 }));
    }

    #[test]
    fn negative_draws_are_uniform() {
        // 10 items, 2 in train: 8 candidates, 10k draws. Each cell count is
        // Binomial(10k, 1/8); require every cell within 3 sigma and the
        // chi-square statistic below the 0.999 quantile for 7 dof (24.32).
        let ds = train_only(10, &[3, 7]);
        let mut rng = rng::seeded(2024);
        let draws = 10_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[sample_negative(&ds, 0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[3] + counts[7], 0);
        let p = 1.0 / 8.0;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for (i, &c) in counts.iter().enumerate() {
            if i == 3 || i == 7 {
                continue;
            }
            assert!((c as f64 - expected).abs() <= 3.0 * sigma, "item {i}: {c}");
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        assert!(chi2 < 24.32, "chi2 = {chi2}");
    }

    #[test]
    fn dense_exclusion_path_is_uniform_over_free_items() {
        let ds = train_only(10, &[0, 1, 2, 3, 4, 5, 6, 8]);
        let mut rng = rng::seeded(3);
        let mut seen = [0usize; 10];
        for _ in 0..2000 {
            seen[sample_negative(&ds, 0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(seen[7] + seen[9], 2000);
        assert!(seen[7] > 850 && seen[9] > 850);
    }
}
