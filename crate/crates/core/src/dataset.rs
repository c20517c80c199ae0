//! Transition datasets `(s, a, s′)` over codeword indices.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Roll in task `i`, plant in task `j`, transition in task `i`.
    Cross,
    /// Roll-in and transition in the same task.
    OnPolicy,
}

/// Which task(s) produced a dataset. The last transition always runs in
/// [`TaskTag::generator`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskTag {
    Pair { i: usize, j: usize },
    Single(usize),
}

impl TaskTag {
    pub fn generator(&self) -> usize {
        match *self {
            TaskTag::Pair { i, .. } => i,
            TaskTag::Single(k) => k,
        }
    }
}

/// Tuples collected at one step `h` from one task or task pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub h: usize,
    pub task: TaskTag,
    pub mode: SamplingMode,
    pub tuples: Vec<Transition>,
}

impl TransitionDataset {
    pub fn new(h: usize, task: TaskTag, mode: SamplingMode) -> Self {
        Self { h, task, mode, tuples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn push(&mut self, s: usize, a: usize, s_next: usize) {
        self.tuples.push(Transition { s, a, s_next });
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    h: usize,
    i: usize,
    j: Option<usize>,
    mode: SamplingMode,
    s: usize,
    a: usize,
    s_next: usize,
}

pub fn write_csv(datasets: &[TransitionDataset], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for d in datasets {
        let (i, j) = match d.task {
            TaskTag::Pair { i, j } => (i, Some(j)),
            TaskTag::Single(k) => (k, None),
        };
        for t in &d.tuples {
            w.serialize(Row { h: d.h, i, j, mode: d.mode, s: t.s, a: t.a, s_next: t.s_next })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads datasets back, grouped by `(h, task, mode)` in sorted order.
pub fn read_csv(path: &Path) -> Result<Vec<TransitionDataset>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut groups: BTreeMap<(usize, TaskTag, SamplingMode), Vec<Transition>> = BTreeMap::new();
    for row in r.deserialize() {
        let row: Row = row?;
        let task = match row.j {
            Some(j) => TaskTag::Pair { i: row.i, j },
            None => TaskTag::Single(row.i),
        };
        groups
            .entry((row.h, task, row.mode))
            .or_default()
            .push(Transition { s: row.s, a: row.a, s_next: row.s_next });
    }
    if groups.is_empty() {
        return Err(Error::EmptyDataset(0));
    }
    Ok(groups
        .into_iter()
        .map(|((h, task, mode), tuples)| TransitionDataset { h, task, mode, tuples })
        .collect())
}
