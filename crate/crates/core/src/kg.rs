//! Knowledge graph loading and indexing.
//!
//! Datasets follow the usual benchmark layout: a directory holding
//! `train.txt`, `valid.txt` and `test.txt`, one tab-separated
//! `subject<TAB>predicate<TAB>object` triple per line. Labels are interned
//! into dense ids in first-seen order across train, valid, test.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: usize,
    pub predicate: usize,
    pub object: usize,
}

impl Triple {
    pub const fn new(subject: usize, predicate: usize, object: usize) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }
}

/// Which end of a triple is replaced when corrupting or ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Subject,
    Object,
}

/// Bidirectional label <-> dense id map.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(labels: Vec<String>) -> Self {
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Self { labels, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.labels
    }
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub entities: Vocab,
    pub relations: Vocab,
}

/// Whether unseen labels extend the vocabulary or are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabPolicy {
    Grow,
    Frozen,
}

/// Parse tab-separated triples from `reader`. `name` is used in error messages.
pub fn read_triples(
    reader: impl Read,
    name: &str,
    vocab: &mut Vocabularies,
    policy: VocabPolicy,
) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            path: name.to_owned(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: name.to_owned(),
                line: lineno + 1,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let lookup = |v: &mut Vocab, kind: &'static str, label: &str| match policy {
            VocabPolicy::Grow => Ok(v.intern(label)),
            VocabPolicy::Frozen => v.id(label).ok_or_else(|| Error::UnknownLabel {
                kind,
                label: label.to_owned(),
            }),
        };
        let subject = lookup(&mut vocab.entities, "entity", fields[0])?;
        let predicate = lookup(&mut vocab.relations, "relation", fields[1])?;
        let object = lookup(&mut vocab.entities, "entity", fields[2])?;
        triples.push(Triple::new(subject, predicate, object));
    }
    Ok(triples)
}

pub fn load_tsv(
    path: impl AsRef<Path>,
    vocab: &mut Vocabularies,
    policy: VocabPolicy,
) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_triples(file, &path.display().to_string(), vocab, policy)
}

pub fn write_tsv(path: impl AsRef<Path>, triples: &[Triple], vocab: &Vocabularies) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for t in triples {
        out.push_str(vocab.entities.label(t.subject));
        out.push('\t');
        out.push_str(vocab.relations.label(t.predicate));
        out.push('\t');
        out.push_str(vocab.entities.label(t.object));
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Set of all known-true triples with side lookups for filtered ranking.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    all: HashSet<Triple>,
    objects: HashMap<(usize, usize), Vec<usize>>,
    subjects: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn new<'a>(splits: impl IntoIterator<Item = &'a [Triple]>) -> Self {
        let mut index = Self::default();
        for split in splits {
            for &t in split {
                index.insert(t);
            }
        }
        index
    }

    pub fn insert(&mut self, t: Triple) -> bool {
        if !self.all.insert(t) {
            return false;
        }
        self.objects
            .entry((t.subject, t.predicate))
            .or_default()
            .push(t.object);
        self.subjects
            .entry((t.predicate, t.object))
            .or_default()
            .push(t.subject);
        true
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.all.contains(t)
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }

    /// Known objects `o` with `(s, p, o)` true.
    pub fn known_objects(&self, subject: usize, predicate: usize) -> &[usize] {
        self.objects
            .get(&(subject, predicate))
            .map_or(&[], Vec::as_slice)
    }

    /// Known subjects `s` with `(s, p, o)` true.
    pub fn known_subjects(&self, predicate: usize, object: usize) -> &[usize] {
        self.subjects
            .get(&(predicate, object))
            .map_or(&[], Vec::as_slice)
    }
}

/// Ground-truth two-group split attached to the bundled karate club graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Communities {
    /// Entity ids of the two group heads.
    pub heads: [usize; 2],
    /// Per entity, the entity id of the head of the group it joined.
    pub membership: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    pub vocab: Vocabularies,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub filter: FilterIndex,
    pub communities: Option<Communities>,
}

fn dedup_in_order(triples: Vec<Triple>) -> Vec<Triple> {
    let mut seen = HashSet::with_capacity(triples.len());
    triples.into_iter().filter(|t| seen.insert(*t)).collect()
}

/// Union of all splits as a filter index.
pub fn build_filter_index(kg: &KnowledgeGraph) -> FilterIndex {
    FilterIndex::new([kg.train.as_slice(), &kg.valid, &kg.test])
}

impl KnowledgeGraph {
    pub fn from_splits(
        vocab: Vocabularies,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Self {
        let mut kg = Self {
            vocab,
            train: dedup_in_order(train),
            valid: dedup_in_order(valid),
            test: dedup_in_order(test),
            filter: FilterIndex::default(),
            communities: None,
        };
        kg.filter = build_filter_index(&kg);
        kg
    }

    /// Load `train.txt`, `valid.txt`, `test.txt` from a dataset directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut vocab = Vocabularies::default();
        let mut split = |name: &str| load_tsv(dir.join(name), &mut vocab, VocabPolicy::Grow);
        let train = split("train.txt")?;
        let valid = split("valid.txt")?;
        let test = split("test.txt")?;
        Ok(Self::from_splits(vocab, train, valid, test))
    }

    /// Resolve a builtin dataset name (`umls`, `kinships`, `zachary`) or a directory path.
    pub fn open(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "zachary" | "karate" => Ok(load_zachary()),
            "umls" | "kinships" | "nations" => Self::load_dir(data_dir().join(name_or_path)),
            path => Self::load_dir(path),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.relations.len()
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Directory holding the bundled benchmark datasets. Overridable with `SPIKTE_DATA_DIR`.
pub fn data_dir() -> PathBuf {
    std::env::var_os("SPIKTE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")))
}

const ZACHARY_EDGES: &str = include_str!("../data/zachary/edges.txt");
const ZACHARY_GROUPS: &str = include_str!("../data/zachary/groups.txt");

pub const ZACHARY_RELATION: &str = "interact";

/// Zachary's karate club: 34 members labelled `"1"`..`"34"` (id = member - 1),
/// one relation, every undirected edge stored in both directions.
pub fn load_zachary() -> KnowledgeGraph {
    let mut vocab = Vocabularies::default();
    for member in 1..=34 {
        vocab.entities.intern(&member.to_string());
    }
    let interact = vocab.relations.intern(ZACHARY_RELATION);

    let mut train = Vec::with_capacity(156);
    for line in ZACHARY_EDGES.lines().filter(|l| !l.trim().is_empty()) {
        let mut it = line.split_whitespace().map(|x| x.parse::<usize>().expect("bundled edge list"));
        let (a, b) = (it.next().unwrap() - 1, it.next().unwrap() - 1);
        train.push(Triple::new(a, interact, b));
        train.push(Triple::new(b, interact, a));
    }

    let mut membership = vec![0; 34];
    for line in ZACHARY_GROUPS.lines().filter(|l| !l.trim().is_empty()) {
        let mut it = line.split_whitespace().map(|x| x.parse::<usize>().expect("bundled groups"));
        let (member, head) = (it.next().unwrap(), it.next().unwrap());
        membership[member - 1] = head - 1;
    }

    let mut kg = KnowledgeGraph::from_splits(vocab, train, Vec::new(), Vec::new());
    kg.communities = Some(Communities {
        heads: [0, 33],
        membership,
    });
    kg
}
