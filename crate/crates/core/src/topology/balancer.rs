use crate::engine::BalancerKind;
use crate::{Error, Result};

/// Rotating position for round-robin balancing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundRobinCursor(usize);

/// Pick an instance given each instance's in-flight load.
///
/// Round-robin cycles through indices; least-connections returns the index of
/// the minimal load, lowest index on ties.
pub fn route(kind: BalancerKind, loads: &[usize], cursor: &mut RoundRobinCursor) -> Result<usize> {
    if loads.is_empty() {
        return Err(Error::InvalidArgument("no instances to route to".into()));
    }
    Ok(match kind {
        BalancerKind::RoundRobin => {
            let i = cursor.0 % loads.len();
            cursor.0 = i + 1;
            i
        }
        BalancerKind::LeastConnections => {
            let mut best = 0;
            for (i, &l) in loads.iter().enumerate() {
                if l < loads[best] {
                    best = i;
                }
            }
            best
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_cycles() {
        let mut c = RoundRobinCursor::default();
        let picks: Vec<usize> = (0..4).map(|_| route(BalancerKind::RoundRobin, &[0, 0, 0], &mut c).unwrap()).collect();
        assert_eq!(picks, vec![0, 1, 2, 0]);
    }

    #[test]
    fn least_connections_argmin() {
        let mut c = RoundRobinCursor::default();
        assert_eq!(route(BalancerKind::LeastConnections, &[2, 0, 1], &mut c).unwrap(), 1);
        assert_eq!(route(BalancerKind::LeastConnections, &[1, 1], &mut c).unwrap(), 0);
    }

    #[test]
    fn empty_instance_list_is_an_error() {
        let mut c = RoundRobinCursor::default();
        assert!(route(BalancerKind::RoundRobin, &[], &mut c).is_err());
    }
}
