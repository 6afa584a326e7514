//! Interaction logs, dataset statistics and the leave-one-out split.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One observed user-item interaction with dense ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: u64,
}

/// Deduplicated interactions with densified ids.
///
/// `interactions` keeps first-appearance order, which is the secondary sort
/// key for the leave-one-out split.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionDataset {
    pub n_users: usize,
    pub n_items: usize,
    pub interactions: Vec<Interaction>,
    /// Raw id of each dense user id.
    pub user_ids: Vec<u64>,
    /// Raw id of each dense item id.
    pub item_ids: Vec<u64>,
}

impl InteractionDataset {
    /// Build from raw `(user, item, timestamp)` triples in input order.
    pub fn from_raw(rows: impl IntoIterator<Item = (u64, u64, u64)>) -> Result<Self> {
        let mut user_index: HashMap<u64, usize> = HashMap::new();
        let mut item_index: HashMap<u64, usize> = HashMap::new();
        let mut user_ids = Vec::new();
        let mut item_ids = Vec::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        let mut interactions: Vec<Interaction> = Vec::new();

        for (raw_u, raw_i, ts) in rows {
            let user = *user_index.entry(raw_u).or_insert_with(|| {
                user_ids.push(raw_u);
                user_ids.len() - 1
            });
            let item = *item_index.entry(raw_i).or_insert_with(|| {
                item_ids.push(raw_i);
                item_ids.len() - 1
            });
            match seen.entry((user, item)) {
                Entry::Occupied(e) => {
                    let kept = &mut interactions[*e.get()];
                    kept.timestamp = kept.timestamp.min(ts);
                }
                Entry::Vacant(e) => {
                    e.insert(interactions.len());
                    interactions.push(Interaction {
                        user,
                        item,
                        timestamp: ts,
                    });
                }
            }
        }

        if interactions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            n_users: user_ids.len(),
            n_items: item_ids.len(),
            interactions,
            user_ids,
            item_ids,
        })
    }

    /// Serialize back to the tab-separated input format using raw ids.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for it in &self.interactions {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.user_ids[it.user], self.item_ids[it.item], it.timestamp
            )
            .unwrap();
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

/// Read a `user<TAB>item<TAB>timestamp` file. Blank lines and lines starting
/// with `#` are skipped.
pub fn load_interactions(path: &Path) -> Result<InteractionDataset> {
    let text = fs::read_to_string(path)?;
    parse_interactions(&text, path)
}

pub fn parse_interactions(text: &str, path: &Path) -> Result<InteractionDataset> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| Error::MalformedLine {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(malformed(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let mut parsed = [0u64; 3];
        for (slot, (name, raw)) in parsed.iter_mut().zip(["user", "item", "timestamp"].iter().zip(&fields)) {
            *slot = raw
                .trim()
                .parse::<u64>()
                .map_err(|e| malformed(format!("{name} `{raw}`: {e}")))?;
        }
        rows.push((parsed[0], parsed[1], parsed[2]));
    }
    InteractionDataset::from_raw(rows)
}

/// `|R| / (N * M)`.
pub fn density(n_users: usize, n_items: usize, n_interactions: usize) -> f64 {
    n_interactions as f64 / (n_users as f64 * n_items as f64)
}

impl InteractionDataset {
    pub fn density(&self) -> f64 {
        density(self.n_users, self.n_items, self.interactions.len())
    }
}

/// Per-user train sets plus one validation and one test item.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub n_users: usize,
    pub n_items: usize,
    /// Sorted training items per user.
    pub train: Vec<Vec<usize>>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitDataset {
    /// All training edges, user-major.
    pub fn train_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.train
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
    }

    pub fn n_train(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }
}

/// Hold out each user's latest interaction for test and the second latest
/// for validation. Ties on timestamp fall back to input order.
pub fn leave_one_out_split(ds: &InteractionDataset) -> Result<SplitDataset> {
    let mut per_user: Vec<Vec<(u64, usize, usize)>> = vec![Vec::new(); ds.n_users];
    for (pos, it) in ds.interactions.iter().enumerate() {
        per_user[it.user].push((it.timestamp, pos, it.item));
    }

    let mut train = Vec::with_capacity(ds.n_users);
    let mut validation = Vec::with_capacity(ds.n_users);
    let mut test = Vec::with_capacity(ds.n_users);
    for (u, mut rows) in per_user.into_iter().enumerate() {
        if rows.len() < 3 {
            return Err(Error::TooFewInteractions {
                user: ds.user_ids[u],
                count: rows.len(),
            });
        }
        rows.sort_unstable_by_key(|&(ts, pos, _)| (ts, pos));
        let t = rows.pop().unwrap().2;
        let v = rows.pop().unwrap().2;
        let mut items: Vec<usize> = rows.into_iter().map(|r| r.2).collect();
        items.sort_unstable();
        train.push(items);
        validation.push(v);
        test.push(t);
    }
    Ok(SplitDataset {
        n_users: ds.n_users,
        n_items: ds.n_items,
        train,
        validation,
        test,
    })
}
