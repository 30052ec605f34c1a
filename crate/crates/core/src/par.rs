//! Ordered parallel map over scoped threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Thread count from `FLOWLAB_THREADS`, else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var("FLOWLAB_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every item on up to `threads` workers; the output keeps
/// input order regardless of scheduling.
pub fn map_ordered<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panicked holding the lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("lock not poisoned").into_iter().map(|r| r.expect("every slot filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_kept() {
        let xs: Vec<u64> = (0..100).collect();
        for t in [1, 3, 8] {
            let ys = map_ordered(&xs, t, |x| x * x);
            assert_eq!(ys, xs.iter().map(|x| x * x).collect::<Vec<_>>());
        }
        assert!(map_ordered(&Vec::<u8>::new(), 4, |x| *x).is_empty());
    }
}
