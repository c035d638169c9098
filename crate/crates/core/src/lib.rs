//! Lock-free concurrent sets with linearizable snapshot iteration.
//!
//! Iterators cooperate through a shared [`SnapCollector`]: each one walks the
//! structure with the backend's sequential cursor and appends the unmarked
//! nodes it sees to a shared snapshot-list, while concurrent `insert`,
//! `delete` and `contains` calls report the nodes they touch to per-thread
//! report-lists. Once a traversal ends the collector is deactivated and
//! blocked, and the final snapshot is the collected nodes merged with the
//! reports.
//!
//! Two backends implement [`SetAdapter`]:
//!
//! * [`Ubst`], a leaf-oriented lock-free binary search tree with flagged and
//!   tagged edges and single-CAS multi-node cleanup.
//! * [`HashSet`], a resizable hash set built from versioned bucket arrays with
//!   freezable copy-on-write buckets and lazy migration.
//!
//! [`ConcurrentSet`] wraps either backend and supplies the reporting versions
//! of the set operations plus [`ConcurrentSet::iterate`].
//!
//! The [`harness`] module holds executable oracles: a deterministic stepper
//! that checks whether single atomic steps can hide unvisited nodes from a
//! paused iterator, a global-consistency stress driver, a brute-force
//! linearizability checker, and the throughput benchmark used by the CLI.
//!
//! ```
//! use snapiter::{ConcurrentSet, Ubst};
//!
//! let set = ConcurrentSet::new(Ubst::new(), 2);
//! let me = set.register().unwrap();
//! assert!(set.insert(&me, 7));
//! assert!(set.insert(&me, 3));
//! assert!(!set.insert(&me, 7));
//! assert_eq!(set.iterate(&me).keys(), &[3, 7]);
//! ```

mod append_list;
pub mod collector;
mod error;
pub mod framework;
pub mod harness;
pub mod hashset;
pub mod node;
pub mod ubst;

pub use collector::{CollectorRegistry, Report, ReportKind, SnapCollector, Snapshot, ThreadHandle};
pub use error::{Error, Result};
pub use framework::ConcurrentSet;
pub use hashset::HashSet;
pub use node::{Cursor, CursorStep, Key, Node, NodeId, SetAdapter, Traversal};
pub use ubst::Ubst;
