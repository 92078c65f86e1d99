//! Wall-clock timing by median of repeated runs.

use std::time::Instant;

/// Runs `f` `runs` times and returns the last result with the median
/// duration in nanoseconds.
pub fn median_ns<R>(runs: usize, mut f: impl FnMut() -> R) -> (R, u128) {
    assert!(runs > 0, "at least one run");
    let mut times = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs {
        let t = Instant::now();
        let r = f();
        times.push(t.elapsed().as_nanos());
        last = Some(std::hint::black_box(r));
    }
    times.sort_unstable();
    (last.expect("at least one run"), times[runs / 2])
}
