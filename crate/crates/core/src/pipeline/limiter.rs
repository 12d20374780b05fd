//! Per-backend concurrency cap plus an optional requests-per-minute throttle.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

#[derive(Debug)]
pub struct RateLimiter {
    max_concurrent: usize,
    min_interval: Option<Duration>,
    state: Mutex<LimiterState>,
    freed: Condvar,
}

#[derive(Debug)]
struct LimiterState {
    active: usize,
    next_start: Instant,
}

/// Releases its slot on drop.
#[derive(Debug)]
pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl RateLimiter {
    pub fn new(max_concurrent: usize, requests_per_minute: Option<u32>) -> Self {
        RateLimiter {
            max_concurrent: max_concurrent.max(1),
            min_interval: requests_per_minute.filter(|r| *r > 0).map(|r| Duration::from_secs_f64(60.0 / r as f64)),
            state: Mutex::new(LimiterState { active: 0, next_start: Instant::now() }),
            freed: Condvar::new(),
        }
    }

    pub fn unlimited() -> Self {
        RateLimiter::new(usize::MAX, None)
    }

    pub fn max_concurrent(&self) -> usize {
        self.max_concurrent
    }

    /// Blocks until a concurrency slot is free and the throttle allows another request start.
    pub fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().expect("limiter lock poisoned");
        while state.active >= self.max_concurrent {
            state = self.freed.wait(state).expect("limiter lock poisoned");
        }
        state.active += 1;
        let wait = match self.min_interval {
            Some(interval) => {
                let now = Instant::now();
                let start = state.next_start.max(now);
                state.next_start = start + interval;
                start - now
            }
            None => Duration::ZERO,
        };
        drop(state);
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().expect("limiter lock poisoned");
        state.active -= 1;
        self.limiter.freed.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn caps_concurrency() {
        let limiter = RateLimiter::new(2, None);
        let active = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    let _p = limiter.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(10));
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn spaces_request_starts() {
        let limiter = RateLimiter::new(4, Some(1200)); // one start per 50 ms
        let t0 = Instant::now();
        for _ in 0..3 {
            drop(limiter.acquire());
        }
        assert!(t0.elapsed() >= Duration::from_millis(95));
    }
}
