use std::thread;
use std::time::Duration;

/// Bounded retry with exponential backoff: attempt `k` (0-based) sleeps
/// `base_delay * 2^(k-1)` before running, the first attempt runs at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(attempts: u32) -> Self {
        Self {
            attempts,
            base_delay: Duration::ZERO,
        }
    }

    /// Runs `op` until it succeeds or the attempts are exhausted. On failure
    /// returns the last error and the number of attempts made.
    pub fn run<T, E>(&self, mut op: impl FnMut() -> Result<T, E>) -> Result<T, (E, u32)> {
        let attempts = self.attempts.max(1);
        let mut last = None;
        for k in 0..attempts {
            if k > 0 && !self.base_delay.is_zero() {
                thread::sleep(self.base_delay * 2u32.pow(k - 1));
            }
            match op() {
                Ok(v) => return Ok(v),
                Err(e) => last = Some(e),
            }
        }
        Err((last.expect("at least one attempt"), attempts))
    }
}
