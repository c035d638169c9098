//! Throughput benchmark: updater throughput without iterators (WOI) and with
//! them (WI), on a structure preloaded from the seed.

use std::path::Path;
use std::sync::atomic::{AtomicU8, Ordering::Relaxed};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{with_set, Mix, Structure, UpdateKind};
use crate::collector::Snapshot;
use crate::error::{Error, Result};
use crate::framework::ConcurrentSet;
use crate::node::{Key, SetAdapter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub structure: Structure,
    pub updaters: usize,
    pub iterators: usize,
    /// Keys are drawn from `0..2^range_bits`.
    pub range_bits: u32,
    pub mix: Mix,
    pub seconds: f64,
    pub warmup: f64,
    pub seed: u64,
    pub sorted_append: bool,
}

impl WorkloadConfig {
    pub fn new(structure: Structure) -> Self {
        WorkloadConfig {
            structure,
            updaters: 4,
            iterators: 3,
            range_bits: 14,
            mix: Mix::READ_HEAVY,
            seconds: 2.0,
            warmup: 0.5,
            seed: 1,
            sorted_append: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mix.validate()?;
        if self.updaters == 0 {
            return Err(Error::InvalidConfig("at least one updater is needed".into()));
        }
        if !(1..=30).contains(&self.range_bits) {
            return Err(Error::InvalidConfig(format!(
                "range of 2^{} keys is out of bounds",
                self.range_bits
            )));
        }
        if !(self.seconds > 0.0) || !(self.warmup >= 0.0) {
            return Err(Error::InvalidConfig("durations must be positive".into()));
        }
        Ok(())
    }

    pub fn range(&self) -> Key {
        1 << self.range_bits
    }
}

/// The keys preloaded for `seed`, in insertion order: each key of the range
/// independently with probability one half, shuffled so that the unbalanced
/// tree ends up with logarithmic expected depth.
pub fn preload_keys(seed: u64, range: Key) -> Vec<Key> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys: Vec<Key> = (0..range).filter(|_| rng.gen_bool(0.5)).collect();
    keys.shuffle(&mut rng);
    keys
}

fn updater_rng(seed: u64, thread: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(thread as u64 + 1)))
}

/// The first `n` operations updater `thread` issues under `cfg`.
pub fn op_stream(cfg: &WorkloadConfig, thread: usize, n: usize) -> Vec<(UpdateKind, Key)> {
    let mut rng = updater_rng(cfg.seed, thread);
    (0..n)
        .map(|_| next_op(&mut rng, cfg.mix, cfg.range()))
        .collect()
}

#[inline]
fn next_op(rng: &mut ChaCha8Rng, mix: Mix, range: Key) -> (UpdateKind, Key) {
    let kind = mix.pick(rng.gen_range(0..100));
    (kind, rng.gen_range(0..range))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadRecord {
    pub phase: String,
    pub role: String,
    pub thread: usize,
    pub ops: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub structure: Structure,
    pub config: WorkloadConfig,
    /// Updater operations per second without iterators.
    pub throughput_woi: f64,
    /// Updater operations per second with iterators.
    pub throughput_wi: f64,
    pub slowdown: f64,
    pub iterator_ops: u64,
    pub iterator_throughput: f64,
    pub snapshot_cas_failures: u64,
    pub per_thread: Vec<ThreadRecord>,
}

struct PhaseResult {
    updater_ops: u64,
    iterator_ops: u64,
    seconds: f64,
    cas_failures: u64,
    per_thread: Vec<ThreadRecord>,
}

const WARMUP: u8 = 0;
const MEASURE: u8 = 1;
const STOP: u8 = 2;

fn run_phase<A: SetAdapter>(set: &ConcurrentSet<A>, cfg: &WorkloadConfig, iterators: usize, phase: &str) -> Result<PhaseResult> {
    let loader = set.register()?;
    for k in preload_keys(cfg.seed, cfg.range()) {
        set.insert(&loader, k);
    }
    let state = AtomicU8::new(WARMUP);
    let range = cfg.range();
    let mut seconds = 0.0;
    let per_thread = std::thread::scope(|s| -> Result<Vec<ThreadRecord>> {
        let mut handles = Vec::new();
        for u in 0..cfg.updaters {
            let me = set.register()?;
            let state = &state;
            handles.push(("updater", u, s.spawn(move || {
                let mut rng = updater_rng(cfg.seed, u);
                let mut ops = 0u64;
                loop {
                    let st = state.load(Relaxed);
                    if st == STOP {
                        return ops;
                    }
                    let (kind, k) = next_op(&mut rng, cfg.mix, range);
                    match kind {
                        UpdateKind::Insert => set.insert(&me, k),
                        UpdateKind::Delete => set.delete(&me, k),
                        UpdateKind::Contains => set.contains(&me, k),
                    };
                    if st == MEASURE {
                        ops += 1;
                    }
                }
            })));
        }
        for i in 0..iterators {
            let me = set.register()?;
            let state = &state;
            handles.push(("iterator", i, s.spawn(move || {
                let mut ops = 0u64;
                loop {
                    let st = state.load(Relaxed);
                    if st == STOP {
                        return ops;
                    }
                    std::hint::black_box(set.iterate(&me));
                    if st == MEASURE {
                        ops += 1;
                    }
                }
            })));
        }
        std::thread::sleep(Duration::from_secs_f64(cfg.warmup));
        let start = Instant::now();
        state.store(MEASURE, Relaxed);
        std::thread::sleep(Duration::from_secs_f64(cfg.seconds));
        state.store(STOP, Relaxed);
        seconds = start.elapsed().as_secs_f64();
        Ok(handles
            .into_iter()
            .map(|(role, thread, h)| ThreadRecord {
                phase: phase.into(),
                role: role.into(),
                thread,
                ops: h.join().expect("worker panicked"),
            })
            .collect())
    })?;
    let sum = |role: &str| per_thread.iter().filter(|r| r.role == role).map(|r| r.ops).sum();
    Ok(PhaseResult {
        updater_ops: sum("updater"),
        iterator_ops: sum("iterator"),
        seconds,
        cas_failures: set.registry().snapshot_cas_failures(),
        per_thread,
    })
}

/// Runs the WOI phase, then the WI phase, each on a freshly preloaded
/// structure.
pub fn run_benchmark(cfg: &WorkloadConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let threads = cfg.updaters + cfg.iterators + 1;
    let woi = with_set!(cfg.structure, threads, cfg.sorted_append, |set| run_phase(&set, cfg, 0, "woi"))?;
    let wi = with_set!(cfg.structure, threads, cfg.sorted_append, |set| run_phase(
        &set,
        cfg,
        cfg.iterators,
        "wi"
    ))?;
    let throughput_woi = woi.updater_ops as f64 / woi.seconds;
    let throughput_wi = wi.updater_ops as f64 / wi.seconds;
    let mut per_thread = woi.per_thread;
    per_thread.extend(wi.per_thread);
    Ok(BenchReport {
        structure: cfg.structure,
        config: cfg.clone(),
        throughput_woi,
        throughput_wi,
        slowdown: throughput_woi / throughput_wi,
        iterator_ops: wi.iterator_ops,
        iterator_throughput: wi.iterator_ops as f64 / wi.seconds,
        snapshot_cas_failures: wi.cas_failures,
        per_thread,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    structure: &'a str,
    updaters: usize,
    iterators: usize,
    range_bits: u32,
    mix: String,
    seed: u64,
    sorted_append: bool,
    phase: &'a str,
    role: &'a str,
    thread: usize,
    ops: u64,
    seconds: f64,
}

/// Writes one CSV row per thread and phase.
pub fn write_csv(report: &BenchReport, path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidConfig(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let c = &report.config;
    for r in &report.per_thread {
        w.serialize(CsvRow {
            structure: c.structure.name(),
            updaters: c.updaters,
            iterators: c.iterators,
            range_bits: c.range_bits,
            mix: c.mix.to_string(),
            seed: c.seed,
            sorted_append: c.sorted_append,
            phase: &r.phase,
            role: &r.role,
            thread: r.thread,
            ops: r.ops,
            seconds: c.seconds,
        })
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidConfig(format!("cannot write {}: {e}", path.display())))
}

/// Outcome of [`iterator_trial`].
#[derive(Debug, Clone, Serialize)]
pub struct IteratorTrial {
    pub sorted_append: bool,
    pub iterations: u64,
    /// Distinct snapshot outputs, in first-seen order.
    pub distinct_snapshots: Vec<Snapshot>,
    pub snapshot_cas_failures: u64,
}

/// Runs `iterators` threads, each taking `per_thread` snapshots of a UBST
/// preloaded from `seed`, with no updaters.
pub fn iterator_trial(
    range_bits: u32,
    iterators: usize,
    per_thread: u64,
    seed: u64,
    sorted_append: bool,
) -> Result<IteratorTrial> {
    with_set!(Structure::Ubst, iterators + 1, sorted_append, |set| {
        let loader = set.register()?;
        for k in preload_keys(seed, 1 << range_bits) {
            set.insert(&loader, k);
        }
        let outputs = std::thread::scope(|s| -> Result<Vec<Vec<Snapshot>>> {
            let mut hs = Vec::new();
            for _ in 0..iterators {
                let me = set.register()?;
                let set = &set;
                hs.push(s.spawn(move || {
                    let mut seen: Vec<Snapshot> = Vec::new();
                    for _ in 0..per_thread {
                        let snap = set.iterate(&me);
                        if !seen.contains(&snap) {
                            seen.push(snap);
                        }
                    }
                    seen
                }));
            }
            Ok(hs.into_iter().map(|h| h.join().expect("iterator panicked")).collect())
        })?;
        let mut distinct: Vec<Snapshot> = Vec::new();
        for snap in outputs.into_iter().flatten() {
            if !distinct.contains(&snap) {
                distinct.push(snap);
            }
        }
        Ok(IteratorTrial {
            sorted_append,
            iterations: per_thread * iterators as u64,
            distinct_snapshots: distinct,
            snapshot_cas_failures: set.registry().snapshot_cas_failures(),
        })
    })
}
