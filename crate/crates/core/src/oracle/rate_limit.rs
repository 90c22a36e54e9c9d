use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use super::clock::{Clock, SystemClock};

/// Sliding-window limiter: at most `max_per_window` acquisitions in any
/// window of length `window`.
pub struct RateLimiter {
    max_per_window: usize,
    window: Duration,
    clock: Arc<dyn Clock>,
    stamps: Mutex<VecDeque<Duration>>,
}

impl std::fmt::Debug for RateLimiter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateLimiter")
            .field("max_per_window", &self.max_per_window)
            .field("window", &self.window)
            .finish()
    }
}

impl RateLimiter {
    pub fn per_second(rate: u32, clock: Arc<dyn Clock>) -> Self {
        RateLimiter {
            max_per_window: rate.max(1) as usize,
            window: Duration::from_secs(1),
            clock,
            stamps: Mutex::new(VecDeque::new()),
        }
    }

    /// The limiter shared by every oracle talking to `endpoint` in this
    /// process. The first caller's rate wins.
    pub fn shared(endpoint: &str, rate: u32) -> Arc<RateLimiter> {
        static REGISTRY: OnceLock<Mutex<HashMap<String, Arc<RateLimiter>>>> = OnceLock::new();
        let mut map = REGISTRY.get_or_init(Default::default).lock().unwrap();
        map.entry(endpoint.to_string())
            .or_insert_with(|| Arc::new(RateLimiter::per_second(rate, Arc::new(SystemClock::default()))))
            .clone()
    }

    /// Blocks until a request may be sent, then records it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut stamps = self.stamps.lock().unwrap();
                let now = self.clock.now();
                while stamps.front().is_some_and(|&t| now >= t + self.window) {
                    stamps.pop_front();
                }
                if stamps.len() < self.max_per_window {
                    stamps.push_back(now);
                    return;
                }
                *stamps.front().unwrap() + self.window - now
            };
            if wait > Duration::from_secs(0) {
                log::debug!("rate limit reached; waiting {wait:?}");
            }
            self.clock.sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ManualClock;

    #[test]
    fn never_exceeds_rate_in_any_one_second_window() {
        let clock = Arc::new(ManualClock::default());
        let limiter = RateLimiter::per_second(3, clock.clone());
        let mut sent = Vec::new();
        for i in 0..20 {
            if i % 4 == 0 {
                clock.advance(Duration::from_millis(130));
            }
            limiter.acquire();
            sent.push(clock.now());
        }
        for (i, &t) in sent.iter().enumerate() {
            let in_window = sent[i..].iter().filter(|&&u| u < t + Duration::from_secs(1)).count();
            assert!(in_window <= 3, "{in_window} requests within 1s starting at {t:?}");
        }
        // 20 requests at 3/s need at least six full windows.
        assert!(*sent.last().unwrap() >= Duration::from_secs(6));
    }

    #[test]
    fn under_limit_does_not_sleep() {
        let clock = Arc::new(ManualClock::default());
        let limiter = RateLimiter::per_second(5, clock.clone());
        for _ in 0..5 {
            limiter.acquire();
        }
        assert!(clock.sleeps().is_empty());
        limiter.acquire();
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(1)]);
    }

    #[test]
    fn shared_registry_returns_same_limiter() {
        let a = RateLimiter::shared("http://example.invalid/a", 2);
        let b = RateLimiter::shared("http://example.invalid/a", 9);
        assert!(Arc::ptr_eq(&a, &b));
        let c = RateLimiter::shared("http://example.invalid/c", 2);
        assert!(!Arc::ptr_eq(&a, &c));
    }
}
