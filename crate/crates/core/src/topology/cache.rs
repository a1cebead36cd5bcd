use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CachePolicy {
    pub enabled: bool,
    pub capacity: usize,
    pub ttl_s: f64,
    pub hit_service_time_s: f64,
    /// Request attribute the cache is keyed by. Only `destination` exists.
    pub keyed_by: String,
}

impl Default for CachePolicy {
    fn default() -> Self {
        CachePolicy {
            enabled: true,
            capacity: 200,
            ttl_s: 60.0,
            hit_service_time_s: 0.005,
            keyed_by: "destination".into(),
        }
    }
}

impl CachePolicy {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.ttl_s >= 0.0) {
            return Err(Error::config(format!("{path}.ttl_s"), "ttl must be >= 0"));
        }
        if !(self.hit_service_time_s >= 0.0) {
            return Err(Error::config(format!("{path}.hit_service_time_s"), "hit service time must be >= 0"));
        }
        if self.keyed_by != "destination" {
            return Err(Error::config(format!("{path}.keyed_by"), "only `destination` is supported"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
}

/// LRU cache with per-entry time-to-live, in simulated time.
#[derive(Clone, Debug)]
pub struct Cache {
    capacity: usize,
    ttl_s: f64,
    entries: HashMap<u32, (f64, u64)>,
    recency: BTreeMap<u64, u32>,
    tick: u64,
    hits: u64,
    misses: u64,
}

impl Cache {
    pub fn new(capacity: usize, ttl_s: f64) -> Self {
        Cache { capacity, ttl_s, entries: HashMap::new(), recency: BTreeMap::new(), tick: 0, hits: 0, misses: 0 }
    }

    pub fn from_policy(p: &CachePolicy) -> Self {
        Cache::new(p.capacity, p.ttl_s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn hit_ratio(&self) -> f64 {
        let n = self.hits + self.misses;
        if n == 0 {
            0.0
        } else {
            self.hits as f64 / n as f64
        }
    }

    fn touch(&mut self, key: u32, inserted: f64) {
        if let Some((_, old)) = self.entries.get(&key) {
            self.recency.remove(old);
        }
        self.tick += 1;
        self.entries.insert(key, (inserted, self.tick));
        self.recency.insert(self.tick, key);
    }

    fn remove(&mut self, key: u32) {
        if let Some((_, stamp)) = self.entries.remove(&key) {
            self.recency.remove(&stamp);
        }
    }

    /// Hit iff the key is present and `now - inserted <= ttl`. Expired entries
    /// are dropped on lookup.
    pub fn lookup(&mut self, key: u32, now: f64) -> Lookup {
        match self.entries.get(&key).copied() {
            Some((inserted, _)) if now - inserted <= self.ttl_s => {
                self.touch(key, inserted);
                self.hits += 1;
                Lookup::Hit
            }
            Some(_) => {
                self.remove(key);
                self.misses += 1;
                Lookup::Miss
            }
            None => {
                self.misses += 1;
                Lookup::Miss
            }
        }
    }

    pub fn put(&mut self, key: u32, now: f64) {
        if self.capacity == 0 {
            return;
        }
        self.touch(key, now);
        while self.entries.len() > self.capacity {
            let (&stamp, &victim) = self.recency.iter().next().expect("non-empty");
            self.recency.remove(&stamp);
            self.entries.remove(&victim);
        }
    }
}

/// Free-function form of [`Cache::lookup`].
pub fn cache_lookup(cache: &mut Cache, key: u32, now: f64) -> Lookup {
    cache.lookup(key, now)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hit_within_ttl() {
        let mut c = Cache::new(10, 5.0);
        c.put(1, 0.0);
        assert_eq!(cache_lookup(&mut c, 1, 4.0), Lookup::Hit);
        assert_eq!(cache_lookup(&mut c, 1, 5.0), Lookup::Hit);
    }

    #[test]
    fn miss_after_expiry() {
        let mut c = Cache::new(10, 5.0);
        c.put(1, 0.0);
        assert_eq!(c.lookup(1, 5.5), Lookup::Miss);
        assert!(c.is_empty());
    }

    #[test]
    fn lru_eviction() {
        let mut c = Cache::new(2, 100.0);
        c.put(b'a' as u32, 0.0);
        c.put(b'b' as u32, 1.0);
        c.put(b'c' as u32, 2.0);
        assert_eq!(c.lookup(b'a' as u32, 3.0), Lookup::Miss);
        assert_eq!(c.lookup(b'b' as u32, 3.0), Lookup::Hit);
        assert_eq!(c.lookup(b'c' as u32, 3.0), Lookup::Hit);
    }

    #[test]
    fn recency_protects_recent_lookup() {
        let mut c = Cache::new(2, 100.0);
        c.put(1, 0.0);
        c.put(2, 0.0);
        c.lookup(1, 1.0);
        c.put(3, 2.0);
        assert_eq!(c.lookup(2, 3.0), Lookup::Miss);
        assert_eq!(c.lookup(1, 3.0), Lookup::Hit);
    }

    #[test]
    fn zero_capacity_never_hits() {
        let mut c = Cache::new(0, 100.0);
        c.put(1, 0.0);
        assert_eq!(c.lookup(1, 0.0), Lookup::Miss);
    }
}
