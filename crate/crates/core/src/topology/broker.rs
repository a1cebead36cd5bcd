use crate::engine::SimTime;

/// Reliable fixed-latency message broker. Delivery never fails and order
/// within a topic follows publish order.
#[derive(Clone, Debug)]
pub struct Broker {
    latency_s: f64,
    published: u64,
    delivered: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delivery<M> {
    pub at: SimTime,
    /// Consumer station index.
    pub topic: usize,
    pub message: M,
}

impl Broker {
    pub fn new(latency_s: f64) -> Self {
        Broker { latency_s, published: 0, delivered: 0 }
    }

    pub fn latency_s(&self) -> f64 {
        self.latency_s
    }

    pub fn published(&self) -> u64 {
        self.published
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn in_transit(&self) -> u64 {
        self.published - self.delivered
    }

    pub fn publish<M>(&mut self, topic: usize, message: M, now: SimTime) -> Delivery<M> {
        self.published += 1;
        Delivery { at: now + self.latency_s, topic, message }
    }

    pub fn mark_delivered(&mut self) {
        self.delivered += 1;
    }
}

pub fn broker_publish<M>(broker: &mut Broker, topic: usize, message: M, now: SimTime) -> Delivery<M> {
    broker.publish(topic, message, now)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delivery_after_latency() {
        let mut b = Broker::new(0.05);
        let d = broker_publish(&mut b, 0, "booked", SimTime::new(10.0));
        assert!((d.at.as_secs() - 10.05).abs() < 1e-12);
    }

    #[test]
    fn conservation_over_many_publishes() {
        let mut b = Broker::new(0.05);
        for i in 0..100 {
            b.publish(0, i, SimTime::new(i as f64));
        }
        for _ in 0..100 {
            b.mark_delivered();
        }
        assert_eq!(b.published(), 100);
        assert_eq!(b.delivered(), 100);
        assert_eq!(b.in_transit(), 0);
    }
}
