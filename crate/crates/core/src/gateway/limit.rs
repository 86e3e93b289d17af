//! Concurrency and rate limiting for the gateway: a counting semaphore
//! bounding in-flight requests and a token bucket bounding the long-run
//! request rate.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Counting semaphore with RAII permits.
pub struct Semaphore {
    state: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        assert!(permits >= 1, "semaphore needs at least one permit");
        Self {
            state: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphorePermit<'_> {
        let mut permits = self.state.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphorePermit { semaphore: self }
    }
}

pub struct SemaphorePermit<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphorePermit<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.state.lock().unwrap();
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

/// Token bucket sized to one minute of requests: capacity and refill rate
/// both come from the per-minute budget, so bursts never exceed a minute's
/// allowance and the long-run rate stays at or below it.
pub struct TokenBucket {
    capacity: f64,
    tokens: f64,
    refill_per_sec: f64,
    last_refill: Instant,
}

impl TokenBucket {
    pub fn new(requests_per_minute: u32) -> Self {
        assert!(requests_per_minute >= 1);
        Self {
            capacity: requests_per_minute as f64,
            tokens: requests_per_minute as f64,
            refill_per_sec: requests_per_minute as f64 / 60.0,
            last_refill: Instant::now(),
        }
    }

    /// Take one token if available; otherwise report how long to wait
    /// before asking again. Pure in `now` so the schedule is testable.
    pub fn try_take(&mut self, now: Instant) -> Option<Duration> {
        let elapsed = now.saturating_duration_since(self.last_refill);
        self.tokens = (self.tokens + elapsed.as_secs_f64() * self.refill_per_sec)
            .min(self.capacity);
        self.last_refill = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            None
        } else {
            Some(Duration::from_secs_f64(
                (1.0 - self.tokens) / self.refill_per_sec,
            ))
        }
    }
}
