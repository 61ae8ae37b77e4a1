//! Bounded worker pool for independent replications.

use std::thread;

/// Runs `task(j)` for `j in 0..count` on `pool_size` scoped threads. Task
/// `j` goes to worker `j % pool_size`; results come back in index order, so
/// the output does not depend on the pool size.
pub fn run_indexed<T, F>(count: usize, pool_size: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = pool_size.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(&task).collect();
    }
    let task = &task;
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..count)
                        .step_by(workers)
                        .map(|j| (j, task(j)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (j, value) in h.join().expect("replication worker panicked") {
                slots[j] = Some(value);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every index ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_are_in_index_order_for_any_pool() {
        let expected: Vec<usize> = (0..17).map(|j| j * j).collect();
        for pool in [1, 2, 3, 8, 40] {
            assert_eq!(run_indexed(17, pool, |j| j * j), expected);
        }
        assert!(run_indexed(0, 4, |j| j).is_empty());
    }

    #[test]
    fn round_robin_assignment() {
        let ids = run_indexed(6, 4, |_| format!("{:?}", thread::current().id()));
        assert_eq!(ids[0], ids[4]);
        assert_eq!(ids[1], ids[5]);
        assert_ne!(ids[0], ids[1]);
    }
}
