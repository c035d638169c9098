//! Operation histories: the JSON event format, validation into operations,
//! live capture from a running set, and a random generator.
//!
//! An event is `{thread, op, phase, value, seq}`. `phase` is `invoke`,
//! `respond` or `internal`. For `invoke`, `value` is the key (`null` for
//! `iterate`); for `respond` it is the result, a boolean or the snapshot's key
//! array. Internal events (marks, reports and so on) carry free-form values
//! and only have to fall inside an operation of their thread. `seq` is a
//! logical timestamp; events are ordered by it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Barrier, Mutex};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::collector::ThreadHandle;
use crate::error::{Error, Result};
use crate::framework::ConcurrentSet;
use crate::node::{Key, SetAdapter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Invoke,
    Respond,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub thread: usize,
    pub op: String,
    pub phase: Phase,
    #[serde(default)]
    pub value: Value,
    pub seq: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub events: Vec<Event>,
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub expect: bool,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Call {
    Insert(Key),
    Delete(Key),
    Contains(Key),
    Iterate,
}

impl Call {
    fn name(&self) -> &'static str {
        match self {
            Call::Insert(_) => "insert",
            Call::Delete(_) => "delete",
            Call::Contains(_) => "contains",
            Call::Iterate => "iterate",
        }
    }

    fn argument(&self) -> Value {
        match self {
            Call::Insert(k) | Call::Delete(k) | Call::Contains(k) => json!(k),
            Call::Iterate => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ret {
    Bool(bool),
    Keys(Vec<Key>),
}

impl Ret {
    fn to_value(&self) -> Value {
        match self {
            Ret::Bool(b) => json!(b),
            Ret::Keys(k) => json!(k),
        }
    }
}

/// A completed operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operation {
    pub thread: usize,
    pub call: Call,
    pub ret: Ret,
    pub invoked: u64,
    pub responded: u64,
}

impl Operation {
    /// Applies the operation to a sequential set and reports whether the
    /// recorded result matches.
    pub fn apply(&self, set: &mut BTreeSet<Key>) -> bool {
        match (&self.call, &self.ret) {
            (Call::Insert(k), Ret::Bool(r)) => set.insert(*k) == *r,
            (Call::Delete(k), Ret::Bool(r)) => set.remove(k) == *r,
            (Call::Contains(k), Ret::Bool(r)) => set.contains(k) == *r,
            (Call::Iterate, Ret::Keys(keys)) => set.iter().eq(keys.iter()),
            _ => false,
        }
    }
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedHistory(msg.into())
}

fn parse_call(e: &Event) -> Result<Call> {
    let key = || {
        e.value
            .as_i64()
            .ok_or_else(|| malformed(format!("seq {}: {} needs an integer key", e.seq, e.op)))
    };
    Ok(match e.op.as_str() {
        "insert" => Call::Insert(key()?),
        "delete" => Call::Delete(key()?),
        "contains" => Call::Contains(key()?),
        "iterate" => Call::Iterate,
        other => return Err(malformed(format!("seq {}: unknown operation {other:?}", e.seq))),
    })
}

fn parse_ret(call: &Call, e: &Event) -> Result<Ret> {
    let bad = || malformed(format!("seq {}: unexpected result {} for {}", e.seq, e.value, call.name()));
    match call {
        Call::Iterate => {
            let arr = e.value.as_array().ok_or_else(bad)?;
            let keys = arr
                .iter()
                .map(|v| v.as_i64().ok_or_else(bad))
                .collect::<Result<Vec<_>>>()?;
            Ok(Ret::Keys(keys))
        }
        _ => e.value.as_bool().map(Ret::Bool).ok_or_else(bad),
    }
}

impl History {
    /// Validates the history and pairs invocations with responses.
    ///
    /// Requires unique sequence numbers, per-thread alternation of invoke and
    /// respond with matching operation names, internal events only inside an
    /// open operation, and no pending operation at the end.
    pub fn operations(&self) -> Result<Vec<Operation>> {
        let mut events: Vec<&Event> = self.events.iter().collect();
        events.sort_by_key(|e| e.seq);
        if events.windows(2).any(|w| w[0].seq == w[1].seq) {
            return Err(malformed("duplicate sequence numbers"));
        }
        let mut open: BTreeMap<usize, (Call, u64)> = BTreeMap::new();
        let mut ops = Vec::new();
        for e in events {
            match e.phase {
                Phase::Invoke => {
                    if open.contains_key(&e.thread) {
                        return Err(malformed(format!(
                            "seq {}: thread {} invokes while an operation is pending",
                            e.seq, e.thread
                        )));
                    }
                    open.insert(e.thread, (parse_call(e)?, e.seq));
                }
                Phase::Respond => {
                    let Some((call, invoked)) = open.remove(&e.thread) else {
                        return Err(malformed(format!(
                            "seq {}: thread {} responds without an invocation",
                            e.seq, e.thread
                        )));
                    };
                    if call.name() != e.op {
                        return Err(malformed(format!(
                            "seq {}: response {} does not match invocation {}",
                            e.seq,
                            e.op,
                            call.name()
                        )));
                    }
                    let ret = parse_ret(&call, e)?;
                    ops.push(Operation {
                        thread: e.thread,
                        call,
                        ret,
                        invoked,
                        responded: e.seq,
                    });
                }
                Phase::Internal => {
                    if !open.contains_key(&e.thread) {
                        return Err(malformed(format!(
                            "seq {}: internal event outside any operation of thread {}",
                            e.seq, e.thread
                        )));
                    }
                }
            }
        }
        if let Some((t, (call, _))) = open.into_iter().next() {
            return Err(malformed(format!(
                "thread {t} never responded to {}",
                call.name()
            )));
        }
        Ok(ops)
    }

    pub fn from_operations(ops: &[Operation]) -> Self {
        let mut events = Vec::with_capacity(ops.len() * 2);
        for op in ops {
            events.push(Event {
                thread: op.thread,
                op: op.call.name().into(),
                phase: Phase::Invoke,
                value: op.call.argument(),
                seq: op.invoked,
            });
            events.push(Event {
                thread: op.thread,
                op: op.call.name().into(),
                phase: Phase::Respond,
                value: op.ret.to_value(),
                seq: op.responded,
            });
        }
        events.sort_by_key(|e| e.seq);
        History { events }
    }
}

/// Shared event log with a global logical clock.
#[derive(Default)]
pub struct Recorder {
    clock: AtomicU64,
    events: Mutex<Vec<Event>>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, thread: usize, op: &str, phase: Phase, value: Value) {
        // the timestamp is taken here, after the call returned for responses
        // and before it starts for invocations
        let seq = self.clock.fetch_add(1, Ordering::SeqCst);
        self.events.lock().unwrap().push(Event {
            thread,
            op: op.into(),
            phase,
            value,
            seq,
        });
    }

    /// Runs `call` on `set`, logging its invocation and response.
    pub fn run<A: SetAdapter>(&self, set: &ConcurrentSet<A>, me: &ThreadHandle, call: Call) -> Ret {
        self.push(me.index(), call.name(), Phase::Invoke, call.argument());
        let ret = match call {
            Call::Insert(k) => Ret::Bool(set.insert(me, k)),
            Call::Delete(k) => Ret::Bool(set.delete(me, k)),
            Call::Contains(k) => Ret::Bool(set.contains(me, k)),
            Call::Iterate => Ret::Keys(set.iterate(me).into_keys()),
        };
        self.push(me.index(), call.name(), Phase::Respond, ret.to_value());
        ret
    }

    pub fn into_history(self) -> History {
        let mut events = self.events.into_inner().unwrap();
        events.sort_by_key(|e| e.seq);
        History { events }
    }
}

fn random_call(rng: &mut impl Rng, keys: Key) -> Call {
    let k = rng.gen_range(0..keys);
    match rng.gen_range(0..7) {
        0 | 1 => Call::Insert(k),
        2 | 3 => Call::Delete(k),
        4 | 5 => Call::Contains(k),
        _ => Call::Iterate,
    }
}

/// Runs `threads` threads, each issuing `per_thread` random operations over
/// keys `0..keys`, against a fresh empty `set`, and returns the log.
pub fn capture<A: SetAdapter>(
    set: &ConcurrentSet<A>,
    threads: usize,
    per_thread: usize,
    keys: Key,
    rng: &mut impl Rng,
) -> Result<History> {
    let rec = Recorder::new();
    let barrier = Barrier::new(threads);
    let scripts: Vec<Vec<Call>> = (0..threads)
        .map(|_| (0..per_thread).map(|_| random_call(rng, keys)).collect())
        .collect();
    std::thread::scope(|s| -> Result<()> {
        for script in scripts {
            let me = set.register()?;
            let (rec, barrier) = (&rec, &barrier);
            s.spawn(move || {
                barrier.wait();
                for call in script {
                    rec.run(set, &me, call);
                }
            });
        }
        Ok(())
    })?;
    Ok(rec.into_history())
}

/// A random complete history of up to `max_ops` operations over keys
/// `0..keys`.
///
/// Operations get random overlapping intervals. Results come from applying
/// the operations in the order of a random point inside each interval, so the
/// history starts out linearizable; with probability one half one result is
/// then perturbed, which may or may not break that.
pub fn random_history(rng: &mut impl Rng, max_ops: usize, threads: usize, keys: Key) -> (History, bool) {
    let n = rng.gen_range(1..=max_ops);
    let owner: Vec<usize> = (0..n).map(|_| rng.gen_range(0..threads)).collect();
    // interleave per-thread invoke/respond pairs
    let mut pending: Vec<Vec<usize>> = vec![Vec::new(); threads];
    for (i, &t) in owner.iter().enumerate() {
        pending[t].push(i);
    }
    for p in pending.iter_mut() {
        p.reverse();
    }
    let mut open: Vec<Option<usize>> = vec![None; threads];
    let mut invoked = vec![0u64; n];
    let mut responded = vec![0u64; n];
    let mut seq = 0u64;
    loop {
        let live: Vec<usize> = (0..threads)
            .filter(|&t| open[t].is_some() || !pending[t].is_empty())
            .collect();
        let Some(&t) = live.choose(rng) else { break };
        match open[t].take() {
            Some(i) => responded[i] = seq,
            None => {
                let i = pending[t].pop().unwrap();
                invoked[i] = seq;
                open[t] = Some(i);
            }
        }
        seq += 1;
    }
    let calls: Vec<Call> = (0..n).map(|_| random_call(rng, keys)).collect();
    let mut points: Vec<(f64, usize)> = (0..n)
        .map(|i| (rng.gen_range(invoked[i] as f64..responded[i] as f64), i))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut state = BTreeSet::new();
    let mut rets: Vec<Option<Ret>> = vec![None; n];
    for (_, i) in points {
        rets[i] = Some(match &calls[i] {
            Call::Insert(k) => Ret::Bool(state.insert(*k)),
            Call::Delete(k) => Ret::Bool(state.remove(k)),
            Call::Contains(k) => Ret::Bool(state.contains(k)),
            Call::Iterate => Ret::Keys(state.iter().copied().collect()),
        });
    }
    let mut rets: Vec<Ret> = rets.into_iter().map(Option::unwrap).collect();
    let perturbed = rng.gen_bool(0.5);
    if perturbed {
        let i = rng.gen_range(0..n);
        rets[i] = match &rets[i] {
            Ret::Bool(b) => Ret::Bool(!b),
            Ret::Keys(ks) => {
                let k = rng.gen_range(0..keys);
                let mut ks: BTreeSet<Key> = ks.iter().copied().collect();
                if !ks.remove(&k) {
                    ks.insert(k);
                }
                Ret::Keys(ks.into_iter().collect())
            }
        };
    }
    let ops: Vec<Operation> = (0..n)
        .map(|i| Operation {
            thread: owner[i],
            call: calls[i].clone(),
            ret: rets[i].clone(),
            invoked: invoked[i],
            responded: responded[i],
        })
        .collect();
    (History::from_operations(&ops), perturbed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ev(thread: usize, op: &str, phase: Phase, value: Value, seq: u64) -> Event {
        Event {
            thread,
            op: op.into(),
            phase,
            value,
            seq,
        }
    }

    #[test]
    fn pairs_invocations_with_responses() {
        let h = History {
            events: vec![
                ev(0, "insert", Phase::Invoke, json!(5), 0),
                ev(0, "mark", Phase::Internal, Value::Null, 1),
                ev(0, "insert", Phase::Respond, json!(true), 2),
                ev(1, "iterate", Phase::Invoke, Value::Null, 3),
                ev(1, "iterate", Phase::Respond, json!([5]), 4),
            ],
        };
        let ops = h.operations().unwrap();
        assert_eq!(ops.len(), 2);
        assert_eq!(ops[1].ret, Ret::Keys(vec![5]));
    }

    #[test]
    fn rejects_malformed() {
        let pending = History {
            events: vec![ev(0, "insert", Phase::Invoke, json!(5), 0)],
        };
        assert!(pending.operations().is_err());
        let mismatch = History {
            events: vec![
                ev(0, "insert", Phase::Invoke, json!(5), 0),
                ev(0, "delete", Phase::Respond, json!(true), 1),
            ],
        };
        assert!(mismatch.operations().is_err());
        let stray = History {
            events: vec![ev(0, "report", Phase::Internal, Value::Null, 0)],
        };
        assert!(stray.operations().is_err());
        let bad_ret = History {
            events: vec![
                ev(0, "iterate", Phase::Invoke, Value::Null, 0),
                ev(0, "iterate", Phase::Respond, json!(true), 1),
            ],
        };
        assert!(bad_ret.operations().is_err());
    }

    #[test]
    fn corpus_line_round_trips() {
        let line = r#"{"expect":true,"events":[{"thread":0,"op":"insert","phase":"invoke","value":5,"seq":0},{"thread":0,"op":"insert","phase":"respond","value":true,"seq":1}]}"#;
        let e: CorpusEntry = serde_json::from_str(line).unwrap();
        assert!(e.expect);
        assert_eq!(serde_json::to_string(&e).unwrap(), line);
    }

    #[test]
    fn generated_histories_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (h, _) = random_history(&mut rng, 6, 3, 3);
            let ops = h.operations().unwrap();
            assert!(!ops.is_empty() && ops.len() <= 6);
        }
    }
}
