//! On-disk formats shared by the subcommands.
//!
//! A dataset bundle is a directory holding `user_ids.json` and
//! `item_ids.json` (external ids in index order) and `train.csv`,
//! `validation.csv`, `test.csv` with one `user_index,item_index` pair per
//! line.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use calrec::dataset::{Dataset, IdMap, Interaction, Split};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const USER_IDS: &str = "user_ids.json";
pub const ITEM_IDS: &str = "item_ids.json";

pub fn split_file(split: Split) -> String {
    format!("{}.csv", split.name())
}

pub struct Bundle {
    pub dataset: Dataset,
    pub users: IdMap,
    pub items: IdMap,
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Creates the directory `path` will live in.
pub fn create_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(parent) => create_dir(parent),
        None => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    create_parent(path)?;
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Appends one JSON object per line.
pub struct JsonLines {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_owned(),
            out: create(path)?,
        })
    }

    pub fn append(path: &Path) -> Result<Self> {
        let f = fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok(Self {
            path: path.to_owned(),
            out: BufWriter::new(f),
        })
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, row)?;
        writeln!(self.out).with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().with_context(|| format!("writing {}", self.path.display()))
    }
}

pub fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line)
                .map_err(|e| calrec::Error::MalformedLine {
                    line: n + 1,
                    reason: e.to_string(),
                })
                .with_context(|| format!("parsing {}", path.display()))?,
        );
    }
    Ok(rows)
}

fn write_pairs(path: &Path, pairs: &[Interaction]) -> Result<()> {
    let mut w = create(path)?;
    for x in pairs {
        writeln!(w, "{},{}", x.user, x.item).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn read_pairs(path: &Path) -> Result<Vec<Interaction>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| calrec::Error::MalformedLine {
            line: n + 1,
            reason: reason.to_owned(),
        };
        let (u, i) = line
            .split_once(',')
            .ok_or_else(|| bad("expected `user_index,item_index`"))
            .with_context(|| format!("parsing {}", path.display()))?;
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| bad("index is not a nonnegative integer"));
        out.push(Interaction::new(parse(u)?, parse(i)?));
    }
    Ok(out)
}

pub fn write_bundle(dir: &Path, bundle: &Bundle) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join(USER_IDS), &bundle.users)?;
    write_json(&dir.join(ITEM_IDS), &bundle.items)?;
    for split in Split::ALL {
        write_pairs(&dir.join(split_file(split)), bundle.dataset.interactions(split))?;
    }
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let users: IdMap = read_json(&dir.join(USER_IDS))?;
    let items: IdMap = read_json(&dir.join(ITEM_IDS))?;
    let [train, validation, test] = Split::ALL.map(|s| read_pairs(&dir.join(split_file(s))));
    let dataset = Dataset::from_splits(users.len(), items.len(), train?, validation?, test?)
        .with_context(|| format!("loading dataset bundle {}", dir.display()))?;
    Ok(Bundle { dataset, users, items })
}
