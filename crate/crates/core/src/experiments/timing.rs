//! CPU-time measurement for method comparisons.

use std::time::Instant;

fn clock(id: libc::clockid_t) -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(id, &mut ts) };
    if rc != 0 {
        return f64::NAN;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// CPU and wall time of a code section. With a single worker thread the
/// calling thread's CPU clock is used, so concurrent replicates do not
/// pollute each other; otherwise the whole process is charged.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    id: libc::clockid_t,
    cpu0: f64,
    wall0: Instant,
}

impl Stopwatch {
    pub fn start(threads: usize) -> Self {
        let id = if threads == 1 { libc::CLOCK_THREAD_CPUTIME_ID } else { libc::CLOCK_PROCESS_CPUTIME_ID };
        Self { id, cpu0: clock(id), wall0: Instant::now() }
    }

    /// `(cpu_seconds, wall_seconds)` since `start`.
    pub fn elapsed(&self) -> (f64, f64) {
        (clock(self.id) - self.cpu0, self.wall0.elapsed().as_secs_f64())
    }
}
