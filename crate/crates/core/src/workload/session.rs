use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::engine::{RequestType, RngStream};
use crate::{Error, Result};

/// The booking funnel: every session searches; it may then view
/// recommendations, book, and (having booked) pay. Each branch is a binary
/// choice taken with the stated probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowGrammar {
    pub p_view: f64,
    pub p_book: f64,
    pub p_pay: f64,
    pub think_median_s: f64,
    pub think_sigma: f64,
}

impl Default for FlowGrammar {
    fn default() -> Self {
        FlowGrammar { p_view: 0.8, p_book: 0.3, p_pay: 0.95, think_median_s: 2.0, think_sigma: 0.8 }
    }
}

impl FlowGrammar {
    pub fn validate(&self, path: &str) -> Result<()> {
        for (name, p) in [("p_view", self.p_view), ("p_book", self.p_book), ("p_pay", self.p_pay)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{path}.{name}"), "branch probability must lie in [0, 1]"));
            }
        }
        if !(self.think_median_s > 0.0 && self.think_median_s.is_finite()) {
            return Err(Error::config(format!("{path}.think_median_s"), "must be > 0"));
        }
        if !(self.think_sigma >= 0.0 && self.think_sigma.is_finite()) {
            return Err(Error::config(format!("{path}.think_sigma"), "must be >= 0"));
        }
        Ok(())
    }

    /// Expected requests per session.
    pub fn mean_steps(&self) -> f64 {
        1.0 + self.p_view + self.p_book * (1.0 + self.p_pay)
    }

    pub fn mean_think_s(&self) -> f64 {
        self.think_median_s * (0.5 * self.think_sigma * self.think_sigma).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub id: u64,
    pub user: u32,
    pub start_s: f64,
    /// Steps in order with the time each is offered to the system.
    pub steps: Vec<(RequestType, f64)>,
    pub think_times: Vec<f64>,
    /// Booked but did not pay.
    pub cancelled: bool,
}

/// Sample a step sequence from the grammar; step `i` is offered at
/// `arrival + sum(think_times[..i])`.
pub fn expand_session(id: u64, user: u32, arrival: f64, grammar: &FlowGrammar, rng: &mut RngStream) -> Session {
    let mut kinds = vec![RequestType::Search];
    if rng.open01() < grammar.p_view {
        kinds.push(RequestType::View);
    }
    let mut cancelled = false;
    if rng.open01() < grammar.p_book {
        kinds.push(RequestType::Book);
        if rng.open01() < grammar.p_pay {
            kinds.push(RequestType::Pay);
        } else {
            cancelled = true;
        }
    }
    let think = LogNormal::new(grammar.think_median_s.ln(), grammar.think_sigma).expect("validated");
    let mut t = arrival;
    let mut steps = Vec::with_capacity(kinds.len());
    let mut think_times = Vec::with_capacity(kinds.len().saturating_sub(1));
    for (i, k) in kinds.into_iter().enumerate() {
        if i > 0 {
            let dt = think.sample(rng);
            think_times.push(dt);
            t += dt;
        }
        steps.push((k, t));
    }
    Session { id, user, start_s: arrival, steps, think_times, cancelled }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &Session) -> Vec<RequestType> {
        s.steps.iter().map(|(k, _)| *k).collect()
    }

    #[test]
    fn certain_funnel() {
        let g = FlowGrammar { p_view: 0.0, p_book: 1.0, p_pay: 1.0, ..FlowGrammar::default() };
        let mut rng = RngStream::new(1, "s");
        for i in 0..100 {
            let s = expand_session(i, 0, 0.0, &g, &mut rng);
            assert_eq!(kinds(&s), vec![RequestType::Search, RequestType::Book, RequestType::Pay]);
        }
    }

    #[test]
    fn no_booking() {
        let g = FlowGrammar { p_view: 0.0, p_book: 0.0, ..FlowGrammar::default() };
        let mut rng = RngStream::new(1, "s");
        for i in 0..100 {
            assert_eq!(kinds(&expand_session(i, 0, 5.0, &g, &mut rng)), vec![RequestType::Search]);
        }
    }

    #[test]
    fn booking_fraction_binomial() {
        let g = FlowGrammar::default();
        let mut rng = RngStream::new(99, "s");
        let n = 100_000;
        let booked = (0..n)
            .filter(|&i| expand_session(i, 0, 0.0, &g, &mut rng).steps.iter().any(|(k, _)| *k == RequestType::Book))
            .count();
        let frac = booked as f64 / n as f64;
        assert!((frac - 0.3).abs() <= 0.01, "booking fraction {frac}");
    }

    #[test]
    fn timestamps_follow_think_times() {
        let g = FlowGrammar { p_view: 1.0, p_book: 1.0, p_pay: 1.0, ..FlowGrammar::default() };
        let mut rng = RngStream::new(4, "s");
        let s = expand_session(0, 0, 10.0, &g, &mut rng);
        let mut t = 10.0;
        for (i, (_, at)) in s.steps.iter().enumerate() {
            if i > 0 {
                t += s.think_times[i - 1];
            }
            assert_eq!(*at, t);
        }
        assert!(s.think_times.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn malformed_grammar_rejected() {
        let g = FlowGrammar { p_book: 1.2, ..FlowGrammar::default() };
        assert!(g.validate("g").is_err());
    }
}
