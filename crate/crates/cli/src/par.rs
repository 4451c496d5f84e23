//! Deterministic parallel grid evaluation.
//!
//! Indices split into contiguous blocks, one per worker, and every result
//! lands in the slot its index owns; workers share nothing mutable. The
//! output vector is therefore a pure function of `(n, f)`, independent of
//! the worker count. Each worker builds its own evaluation state with
//! `init`, so per-state caches never couple workers either.

pub fn parallel_map_with<S, T, I, F>(n: usize, workers: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync,
    F: Fn(&mut S, usize) -> T + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers <= 1 {
        let mut state = init();
        return (0..n).map(|i| f(&mut state, i)).collect();
    }
    let mut slots: Vec<Option<T>> = Vec::with_capacity(n);
    slots.resize_with(n, || None);
    std::thread::scope(|scope| {
        let mut rest: &mut [Option<T>] = &mut slots;
        let mut start = 0usize;
        for k in 0..workers {
            let end = (k + 1) * n / workers;
            let (block, tail) = rest.split_at_mut(end - start);
            rest = tail;
            let block_start = start;
            let init = &init;
            let f = &f;
            scope.spawn(move || {
                let mut state = init();
                for (offset, slot) in block.iter_mut().enumerate() {
                    *slot = Some(f(&mut state, block_start + offset));
                }
            });
            start = end;
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every index is assigned to exactly one worker"))
        .collect()
}
