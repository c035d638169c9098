//! Global-consistency stress: iterators run against updaters confined to a
//! hot key range, and every snapshot must contain the whole preloaded cold
//! range, which no operation touches.

use std::ops::RangeInclusive;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering::Relaxed};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{with_set, Mix, Structure, UpdateKind};
use crate::error::{Error, Result};
use crate::framework::ConcurrentSet;
use crate::node::{Key, SetAdapter};

#[derive(Debug, Clone)]
pub struct StressConfig {
    pub structure: Structure,
    pub cold: RangeInclusive<Key>,
    pub hot: RangeInclusive<Key>,
    pub updaters: usize,
    pub iterators: usize,
    pub duration: Duration,
    pub seed: u64,
    pub mix: Mix,
}

impl StressConfig {
    pub fn new(structure: Structure, seed: u64) -> Self {
        StressConfig {
            structure,
            cold: 1..=100,
            hot: 200..=300,
            updaters: 4,
            iterators: 2,
            duration: Duration::from_secs(2),
            seed,
            mix: Mix::UPDATE_ONLY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cold.is_empty() || self.hot.is_empty() {
            return Err(Error::InvalidConfig("key ranges must be non-empty".into()));
        }
        if self.cold.start() <= self.hot.end() && self.hot.start() <= self.cold.end() {
            return Err(Error::InvalidConfig(format!(
                "cold range {:?} overlaps hot range {:?}",
                self.cold, self.hot
            )));
        }
        if self.iterators == 0 {
            return Err(Error::InvalidConfig("at least one iterator is needed".into()));
        }
        self.mix.validate()
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StressReport {
    pub structure: String,
    pub seed: u64,
    pub snapshots: u64,
    /// Snapshots missing at least one cold key.
    pub violations: u64,
    /// Snapshots holding a key outside both ranges.
    pub foreign: u64,
    pub updater_ops: u64,
    /// Cold keys missing from the first violating snapshot.
    pub first_missing: Vec<Key>,
}

impl StressReport {
    pub fn clean(&self) -> bool {
        self.violations == 0 && self.foreign == 0
    }
}

pub fn global_consistency_stress(cfg: &StressConfig) -> Result<StressReport> {
    cfg.validate()?;
    let threads = cfg.updaters + cfg.iterators + 1;
    with_set!(cfg.structure, threads, false, |set| run(&set, cfg))
}

fn run<A: SetAdapter>(set: &ConcurrentSet<A>, cfg: &StressConfig) -> Result<StressReport> {
    let loader = set.register()?;
    for k in cfg.cold.clone() {
        set.insert(&loader, k);
    }
    let stop = AtomicBool::new(false);
    let snapshots = AtomicU64::new(0);
    let violations = AtomicU64::new(0);
    let foreign = AtomicU64::new(0);
    let updater_ops = AtomicU64::new(0);
    let first_missing = Mutex::new(Vec::new());

    std::thread::scope(|s| -> Result<()> {
        for u in 0..cfg.updaters {
            let me = set.register()?;
            let (stop, updater_ops) = (&stop, &updater_ops);
            s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (u as u64 + 1).wrapping_mul(0x9e37_79b9));
                let mut ops = 0u64;
                while !stop.load(Relaxed) {
                    let k = rng.gen_range(cfg.hot.clone());
                    match cfg.mix.pick(rng.gen_range(0..100)) {
                        UpdateKind::Insert => set.insert(&me, k),
                        UpdateKind::Delete => set.delete(&me, k),
                        UpdateKind::Contains => set.contains(&me, k),
                    };
                    ops += 1;
                }
                updater_ops.fetch_add(ops, Relaxed);
            });
        }
        for _ in 0..cfg.iterators {
            let me = set.register()?;
            let (stop, snapshots, violations, foreign, first_missing) =
                (&stop, &snapshots, &violations, &foreign, &first_missing);
            s.spawn(move || {
                while !stop.load(Relaxed) {
                    let snap = set.iterate(&me);
                    snapshots.fetch_add(1, Relaxed);
                    let missing: Vec<Key> = cfg.cold.clone().filter(|k| !snap.contains(*k)).collect();
                    if !missing.is_empty() {
                        if violations.fetch_add(1, Relaxed) == 0 {
                            *first_missing.lock().unwrap() = missing;
                        }
                    }
                    if snap
                        .keys()
                        .iter()
                        .any(|k| !cfg.cold.contains(k) && !cfg.hot.contains(k))
                    {
                        foreign.fetch_add(1, Relaxed);
                    }
                }
            });
        }
        let start = Instant::now();
        while start.elapsed() < cfg.duration {
            std::thread::sleep(Duration::from_millis(5));
        }
        stop.store(true, Relaxed);
        Ok(())
    })?;

    Ok(StressReport {
        structure: cfg.structure.to_string(),
        seed: cfg.seed,
        snapshots: snapshots.into_inner(),
        violations: violations.into_inner(),
        foreign: foreign.into_inner(),
        updater_ops: updater_ops.into_inner(),
        first_missing: first_missing.into_inner().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlapping_ranges_rejected() {
        let mut cfg = StressConfig::new(Structure::Ubst, 1);
        cfg.hot = 50..=150;
        assert!(global_consistency_stress(&cfg).is_err());
    }

    #[test]
    fn short_run_is_clean() {
        for structure in Structure::ALL {
            let mut cfg = StressConfig::new(structure, 7);
            cfg.duration = Duration::from_millis(200);
            let r = global_consistency_stress(&cfg).unwrap();
            assert!(r.clean(), "{r:?}");
            assert!(r.snapshots > 0);
        }
    }
}
