//! Brute-force linearizability checking for small set histories.
//!
//! A history is linearizable when some total order of its operations respects
//! real-time precedence (an operation that responded before another was
//! invoked comes first) and replays on a sequential set with the recorded
//! results, `iterate` returning exactly the keys present at its place in the
//! order. The search extends an order one operation at a time, only with
//! operations whose real-time predecessors are all placed, and memoizes
//! (placed operations, set contents) pairs that already failed.

use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::history::{capture, CorpusEntry, History, Operation};
use super::{with_set, Structure};
use crate::error::{Error, Result};
use crate::node::Key;

/// Largest history the checker accepts. The search is exponential; the
/// intended use is at most 16 operations.
pub const MAX_OPERATIONS: usize = 64;

pub fn check_linearizable(h: &History) -> Result<bool> {
    check_operations(&h.operations()?)
}

pub fn check_operations(ops: &[Operation]) -> Result<bool> {
    if ops.len() > MAX_OPERATIONS {
        return Err(Error::ContractViolation(format!(
            "{} operations exceed the checker's limit of {MAX_OPERATIONS}",
            ops.len()
        )));
    }
    // must_precede[i]: operations that responded before i was invoked
    let must_precede: Vec<u64> = ops
        .iter()
        .map(|o| {
            ops.iter()
                .enumerate()
                .filter(|(_, p)| p.responded < o.invoked)
                .fold(0u64, |m, (j, _)| m | 1 << j)
        })
        .collect();
    let full = if ops.len() == 64 { u64::MAX } else { (1u64 << ops.len()) - 1 };
    let mut failed = HashSet::new();
    Ok(search(ops, &must_precede, full, 0, &mut BTreeSet::new(), &mut failed))
}

fn search(
    ops: &[Operation],
    must_precede: &[u64],
    full: u64,
    placed: u64,
    state: &mut BTreeSet<Key>,
    failed: &mut HashSet<(u64, Vec<Key>)>,
) -> bool {
    if placed == full {
        return true;
    }
    let key = (placed, state.iter().copied().collect::<Vec<_>>());
    if failed.contains(&key) {
        return false;
    }
    for (i, op) in ops.iter().enumerate() {
        if placed & (1 << i) != 0 || must_precede[i] & !placed != 0 {
            continue;
        }
        let mut next = state.clone();
        if op.apply(&mut next) && search(ops, must_precede, full, placed | 1 << i, &mut next, failed) {
            return true;
        }
    }
    failed.insert(key);
    false
}

/// Verdicts for a corpus file.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CorpusReport {
    pub histories: usize,
    pub agreed: usize,
    /// (line number, expected verdict, checker verdict)
    pub mismatches: Vec<(usize, bool, bool)>,
}

impl CorpusReport {
    pub fn all_agree(&self) -> bool {
        self.histories == self.agreed
    }
}

/// Checks every history of a JSONL corpus against its `expect` field.
/// Malformed lines are errors.
pub fn check_corpus(path: &Path) -> Result<CorpusReport> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot open {}: {e}", path.display())))?;
    let mut report = CorpusReport::default();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::InvalidConfig(format!("read error: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CorpusEntry = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedHistory(format!("line {}: {e}", n + 1)))?;
        let verdict = check_linearizable(&History {
            events: entry.events,
        })
        .map_err(|e| Error::MalformedHistory(format!("line {}: {e}", n + 1)))?;
        report.histories += 1;
        if verdict == entry.expect {
            report.agreed += 1;
        } else {
            report.mismatches.push((n + 1, entry.expect, verdict));
        }
    }
    Ok(report)
}

/// Live-captured histories and their verdicts.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CaptureReport {
    pub structure: String,
    pub histories: usize,
    pub linearizable: usize,
    pub max_operations: usize,
    /// The first history that failed, if any.
    pub counterexample: Option<History>,
}

/// Captures `samples` histories of `threads × per_thread` operations on
/// fresh sets and checks each.
pub fn capture_and_check(
    structure: Structure,
    samples: usize,
    threads: usize,
    per_thread: usize,
    seed: u64,
) -> Result<CaptureReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CaptureReport {
        structure: structure.to_string(),
        ..Default::default()
    };
    for _ in 0..samples {
        let h = with_set!(structure, threads, false, |set| capture(&set, threads, per_thread, 4, &mut rng))?;
        let ops = h.operations()?;
        report.max_operations = report.max_operations.max(ops.len());
        report.histories += 1;
        if check_operations(&ops)? {
            report.linearizable += 1;
        } else if report.counterexample.is_none() {
            report.counterexample = Some(h);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::history::{Call, Ret};
    use super::*;

    fn op(thread: usize, call: Call, ret: Ret, invoked: u64, responded: u64) -> Operation {
        Operation {
            thread,
            call,
            ret,
            invoked,
            responded,
        }
    }

    #[test]
    fn sequential_insert_then_contains() {
        let ops = [
            op(0, Call::Insert(5), Ret::Bool(true), 0, 1),
            op(0, Call::Contains(5), Ret::Bool(true), 2, 3),
        ];
        assert!(check_operations(&ops).unwrap());
    }

    #[test]
    fn empty_snapshot_before_insert() {
        let ops = [
            op(1, Call::Iterate, Ret::Keys(vec![]), 0, 1),
            op(0, Call::Insert(5), Ret::Bool(true), 2, 3),
        ];
        assert!(check_operations(&ops).unwrap());
    }

    #[test]
    fn empty_snapshot_after_completed_insert() {
        let ops = [
            op(0, Call::Insert(5), Ret::Bool(true), 0, 1),
            op(1, Call::Iterate, Ret::Keys(vec![]), 2, 3),
        ];
        assert!(!check_operations(&ops).unwrap());
    }

    #[test]
    fn overlapping_operations_may_reorder() {
        let ops = [
            op(0, Call::Insert(5), Ret::Bool(true), 0, 3),
            op(1, Call::Iterate, Ret::Keys(vec![]), 1, 2),
        ];
        assert!(check_operations(&ops).unwrap());
    }

    #[test]
    fn sixteen_operations_finish() {
        let ops: Vec<Operation> = (0..16)
            .map(|i| op(i % 4, Call::Insert(i as Key), Ret::Bool(true), 0, 100))
            .collect();
        assert!(check_operations(&ops).unwrap());
    }

    #[test]
    fn live_capture_verifies() {
        let r = capture_and_check(Structure::Ubst, 20, 4, 4, 1).unwrap();
        assert_eq!(r.linearizable, r.histories);
        assert_eq!(r.max_operations, 16);
    }
}
