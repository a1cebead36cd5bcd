use serde::{Deserialize, Serialize};

use crate::engine::FailureReason;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_s: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 1, backoff_s: 0.0 }
    }
}

impl RetryPolicy {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.max_attempts < 1 {
            return Err(Error::config(format!("{path}.max_attempts"), "max_attempts must be >= 1"));
        }
        if !(self.backoff_s >= 0.0) {
            return Err(Error::config(format!("{path}.backoff_s"), "backoff must be >= 0"));
        }
        Ok(())
    }

    /// Backoff before the next attempt, or `None` when the failure is final.
    /// `attempt` is 1-based and refers to the attempt that just failed.
    pub fn next_backoff(&self, attempt: u32, reason: FailureReason) -> Option<f64> {
        (reason.is_transient() && attempt < self.max_attempts).then_some(self.backoff_s)
    }
}

/// Result of a single attempt issued through [`retry_wrap`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attempt {
    pub duration_s: f64,
    pub failure: Option<FailureReason>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetryOutcome {
    pub attempts: u32,
    /// Elapsed time across every attempt and backoff.
    pub elapsed_s: f64,
    pub failure: Option<FailureReason>,
}

/// Drive `call` until it succeeds, fails permanently, or exhausts the policy.
/// `call` receives the attempt number (1-based) and the elapsed time so far.
pub fn retry_wrap(policy: &RetryPolicy, mut call: impl FnMut(u32, f64) -> Attempt) -> RetryOutcome {
    let mut elapsed = 0.0;
    let mut attempt = 1;
    loop {
        let a = call(attempt, elapsed);
        elapsed += a.duration_s;
        match a.failure {
            None => return RetryOutcome { attempts: attempt, elapsed_s: elapsed, failure: None },
            Some(reason) => match policy.next_backoff(attempt, reason) {
                Some(b) => {
                    elapsed += b;
                    attempt += 1;
                }
                None => return RetryOutcome { attempts: attempt, elapsed_s: elapsed, failure: Some(reason) },
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: RetryPolicy = RetryPolicy { max_attempts: 3, backoff_s: 0.5 };

    fn ok(d: f64) -> Attempt {
        Attempt { duration_s: d, failure: None }
    }

    fn fail(d: f64, r: FailureReason) -> Attempt {
        Attempt { duration_s: d, failure: Some(r) }
    }

    #[test]
    fn first_attempt_success() {
        let out = retry_wrap(&P, |_, _| ok(0.1));
        assert_eq!(out.attempts, 1);
        assert_eq!(out.failure, None);
    }

    #[test]
    fn two_failures_then_success_spans_backoffs() {
        let out = retry_wrap(&P, |n, _| if n < 3 { fail(0.25, FailureReason::Timeout) } else { ok(0.25) });
        assert_eq!(out.attempts, 3);
        assert_eq!(out.failure, None);
        assert_eq!(out.elapsed_s, 0.75 + 2.0 * 0.5);
    }

    #[test]
    fn exhausted_reports_last_reason() {
        let out = retry_wrap(&P, |n, _| {
            if n < 3 {
                fail(0.1, FailureReason::Timeout)
            } else {
                fail(0.1, FailureReason::QueueOverflow)
            }
        });
        assert_eq!(out.attempts, 3);
        assert_eq!(out.failure, Some(FailureReason::QueueOverflow));
    }

    #[test]
    fn breaker_open_is_not_retried() {
        let out = retry_wrap(&P, |_, _| fail(0.0, FailureReason::BreakerOpen));
        assert_eq!(out.attempts, 1);
    }
}
