//! Blocking JSON-over-HTTP helper shared by the remote backends.

use std::thread;
use std::time::Duration;

use rand::Rng;
use serde_json::Value;

#[derive(Debug, Clone)]
pub(crate) struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`
    /// scaled by a random factor in `[0.5, 1.5)`.
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1 << (attempt - 1).min(16));
        exp.mul_f64(rand::rng().random_range(0.5..1.5))
    }
}

pub(crate) struct JsonClient {
    agent: ureq::Agent,
    bearer: Option<String>,
    retry: RetryPolicy,
}

impl JsonClient {
    pub fn new(timeout: Duration, bearer: Option<String>, retry: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent, bearer, retry }
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = &self.bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<Value>().map_err(|e| e.to_string())
    }

    /// POSTs `body`, retrying transport and status failures per the policy.
    pub fn post(&self, url: &str, body: &Value) -> Result<Value, String> {
        let mut last = String::new();
        for attempt in 1..=self.retry.attempts.max(1) {
            match self.post_once(url, body) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::debug!("POST {url} attempt {attempt} failed: {e}");
                    last = e;
                    if attempt < self.retry.attempts {
                        thread::sleep(self.retry.delay(attempt));
                    }
                }
            }
        }
        Err(format!("{url}: {last} (after {} attempts)", self.retry.attempts.max(1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_grows_and_jitters_within_bounds() {
        let p = RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(100),
        };
        for _ in 0..50 {
            let d1 = p.delay(1);
            let d2 = p.delay(2);
            assert!(d1 >= Duration::from_millis(50) && d1 < Duration::from_millis(150));
            assert!(d2 >= Duration::from_millis(100) && d2 < Duration::from_millis(300));
        }
    }
}
