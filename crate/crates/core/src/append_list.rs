//! Append-only linked list with a CAS-maintained tail and a blocking
//! terminator.

use std::sync::atomic::{AtomicBool, Ordering};

use crossbeam_epoch::{Atomic, Guard, Owned, Shared};

enum Payload<T> {
    Head,
    Item(T),
    Terminator,
}

struct Cell<T> {
    payload: Payload<T>,
    next: Atomic<Cell<T>>,
}

/// Outcome of one [`AppendList::append`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Appended {
    pub accepted: bool,
    /// Failed compare-and-swaps on a `next` link before the call finished.
    pub cas_failures: u64,
}

/// Multi-writer, append-only list.
///
/// Writers link a new cell after the tail with a CAS, helping to advance the
/// tail when it lags. [`block`](AppendList::block) raises the blocked flag and
/// then links a terminator cell; once the terminator is linked the list never
/// changes again, because every append re-checks for it before its CAS.
pub(crate) struct AppendList<T> {
    head: Atomic<Cell<T>>,
    tail: Atomic<Cell<T>>,
    blocked: AtomicBool,
}

impl<T> AppendList<T> {
    pub fn new() -> Self {
        let head = Owned::new(Cell {
            payload: Payload::Head,
            next: Atomic::null(),
        });
        // SAFETY: the list is not shared yet
        let guard = unsafe { crossbeam_epoch::unprotected() };
        let head = head.into_shared(guard);
        AppendList {
            head: Atomic::from(head),
            tail: Atomic::from(head),
            blocked: AtomicBool::new(false),
        }
    }

    pub fn is_blocked(&self) -> bool {
        self.blocked.load(Ordering::SeqCst)
    }

    /// True once the terminator is linked.
    pub fn is_sealed(&self, guard: &Guard) -> bool {
        let tail = self.current_tail(guard);
        // SAFETY: cells are only freed when the list is dropped
        matches!(unsafe { tail.deref() }.payload, Payload::Terminator)
    }

    /// Reads the tail, helping it forward until it has no successor.
    fn current_tail<'g>(&self, guard: &'g Guard) -> Shared<'g, Cell<T>> {
        loop {
            let tail = self.tail.load(Ordering::SeqCst, guard);
            // SAFETY: cells live as long as the list
            let next = unsafe { tail.deref() }.next.load(Ordering::SeqCst, guard);
            if next.is_null() {
                return tail;
            }
            let _ = self
                .tail
                .compare_exchange(tail, next, Ordering::SeqCst, Ordering::SeqCst, guard);
        }
    }

    /// The value in the last linked cell, if that cell holds one.
    #[cfg(test)]
    pub fn last<'g>(&self, guard: &'g Guard) -> Option<&'g T>
    where
        T: 'g,
    {
        let tail = self.current_tail(guard);
        // SAFETY: as above
        match &unsafe { tail.deref() }.payload {
            Payload::Item(v) => Some(v),
            _ => None,
        }
    }

    /// Appends `value` unless the list is blocked. When `skip` returns true for
    /// the current last value, the append is abandoned and reported accepted.
    pub fn append_unless(&self, value: T, guard: &Guard, skip: impl Fn(&T) -> bool) -> Appended {
        let mut cell = Owned::new(Cell {
            payload: Payload::Item(value),
            next: Atomic::null(),
        });
        let mut cas_failures = 0;
        loop {
            if self.is_blocked() {
                return Appended { accepted: false, cas_failures };
            }
            let tail = self.current_tail(guard);
            // SAFETY: as above
            let tail_ref = unsafe { tail.deref() };
            match &tail_ref.payload {
                Payload::Terminator => return Appended { accepted: false, cas_failures },
                Payload::Item(last) if skip(last) => return Appended { accepted: true, cas_failures },
                _ => {}
            }
            match tail_ref.next.compare_exchange(
                Shared::null(),
                cell,
                Ordering::SeqCst,
                Ordering::SeqCst,
                guard,
            ) {
                Ok(linked) => {
                    let _ = self.tail.compare_exchange(
                        tail,
                        linked,
                        Ordering::SeqCst,
                        Ordering::SeqCst,
                        guard,
                    );
                    return Appended { accepted: true, cas_failures };
                }
                Err(e) => {
                    cas_failures += 1;
                    cell = e.new;
                }
            }
        }
    }

    pub fn append(&self, value: T, guard: &Guard) -> Appended {
        self.append_unless(value, guard, |_| false)
    }

    /// Raises the blocked flag and links the terminator. Idempotent.
    pub fn block(&self, guard: &Guard) {
        self.blocked.store(true, Ordering::SeqCst);
        let mut terminator = Owned::new(Cell {
            payload: Payload::Terminator,
            next: Atomic::null(),
        });
        loop {
            let tail = self.current_tail(guard);
            // SAFETY: as above
            let tail_ref = unsafe { tail.deref() };
            if matches!(tail_ref.payload, Payload::Terminator) {
                return;
            }
            match tail_ref.next.compare_exchange(
                Shared::null(),
                terminator,
                Ordering::SeqCst,
                Ordering::SeqCst,
                guard,
            ) {
                Ok(linked) => {
                    let _ = self.tail.compare_exchange(
                        tail,
                        linked,
                        Ordering::SeqCst,
                        Ordering::SeqCst,
                        guard,
                    );
                    return;
                }
                Err(e) => terminator = e.new,
            }
        }
    }

    /// Visits every value from head to the current tail.
    pub fn for_each<'g>(&self, guard: &'g Guard, mut f: impl FnMut(&'g T))
    where
        T: 'g,
    {
        let mut cur = self.head.load(Ordering::SeqCst, guard);
        while !cur.is_null() {
            // SAFETY: as above
            let cell = unsafe { cur.deref() };
            if let Payload::Item(v) = &cell.payload {
                f(v);
            }
            cur = cell.next.load(Ordering::SeqCst, guard);
        }
    }

    pub fn to_vec(&self, guard: &Guard) -> Vec<T>
    where
        T: Clone,
    {
        let mut out = Vec::new();
        self.for_each(guard, |v| out.push(v.clone()));
        out
    }
}

impl<T> Drop for AppendList<T> {
    fn drop(&mut self) {
        // SAFETY: `&mut self` means no other thread can reach the cells
        unsafe {
            let guard = crossbeam_epoch::unprotected();
            let mut cur = self.head.load(Ordering::Relaxed, guard);
            while !cur.is_null() {
                let next = cur.deref().next.load(Ordering::Relaxed, guard);
                drop(cur.into_owned());
                cur = next;
            }
        }
    }
}

// SAFETY: cells are only reachable through atomics, values are moved in once
// and then shared immutably
unsafe impl<T: Send + Sync> Send for AppendList<T> {}
unsafe impl<T: Send + Sync> Sync for AppendList<T> {}
