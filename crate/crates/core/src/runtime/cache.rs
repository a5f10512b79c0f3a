//! LFU model cache with a fixed number of model slots.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheSlot {
    pub model: usize,
    /// Frames served since the model was loaded.
    pub use_count: u64,
    pub load_order: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheOutcome {
    pub served: usize,
    pub miss: bool,
    pub evicted: Option<usize>,
    pub loaded: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    capacity: usize,
    slots: Vec<CacheSlot>,
    next_load: u64,
}

impl ModelCache {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("cache capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            slots: Vec::with_capacity(capacity),
            next_load: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn slots(&self) -> &[CacheSlot] {
        &self.slots
    }

    pub fn is_loaded(&self, model: usize) -> bool {
        self.slots.iter().any(|s| s.model == model)
    }

    /// Preload models in order, as if each had been requested cold.
    pub fn warm(&mut self, models: &[usize]) {
        for &m in models.iter().take(self.capacity) {
            if !self.is_loaded(m) {
                self.load(m);
            }
        }
    }

    fn load(&mut self, model: usize) {
        self.slots.push(CacheSlot {
            model,
            use_count: 0,
            load_order: self.next_load,
        });
        self.next_load += 1;
    }

    /// Least frequently used slot, oldest load first on ties.
    fn lfu_victim(&self) -> usize {
        (0..self.slots.len())
            .min_by_key(|&i| (self.slots[i].use_count, self.slots[i].load_order))
            .expect("cache is non-empty")
    }

    fn bump(&mut self, model: usize) {
        if let Some(s) = self.slots.iter_mut().find(|s| s.model == model) {
            s.use_count += 1;
        }
    }

    /// Serve one frame given the model ranking for it.
    ///
    /// A hit serves the top model. On a miss the highest-ranked resident
    /// model serves this frame, then the LFU resident (counts before this
    /// frame) is evicted if the cache is full and the top model is loaded
    /// for later frames. A cold cache loads and serves the top model.
    pub fn request(&mut self, ranking: &[usize]) -> Result<CacheOutcome> {
        let &top = ranking.first().ok_or(Error::Empty("ranking"))?;
        if self.is_loaded(top) {
            self.bump(top);
            return Ok(CacheOutcome {
                served: top,
                miss: false,
                evicted: None,
                loaded: None,
            });
        }
        if self.slots.is_empty() {
            self.load(top);
            self.bump(top);
            return Ok(CacheOutcome {
                served: top,
                miss: true,
                evicted: None,
                loaded: Some(top),
            });
        }
        let served = ranking.iter().copied().find(|&m| self.is_loaded(m)).unwrap_or_else(|| {
            // Ranking omitted every resident model; fall back to the
            // most used one.
            self.slots
                .iter()
                .max_by_key(|s| (s.use_count, std::cmp::Reverse(s.load_order)))
                .expect("non-empty")
                .model
        });
        let evicted = if self.slots.len() == self.capacity {
            let victim = self.lfu_victim();
            Some(self.slots.remove(victim).model)
        } else {
            None
        };
        self.bump(served);
        self.load(top);
        Ok(CacheOutcome {
            served,
            miss: true,
            evicted,
            loaded: Some(top),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_capacity_is_rejected() {
        assert!(ModelCache::new(0).is_err());
    }

    #[test]
    fn hit_serves_top() {
        let mut c = ModelCache::new(2).unwrap();
        c.request(&[3, 1]).unwrap();
        let o = c.request(&[3, 1]).unwrap();
        assert_eq!(
            o,
            CacheOutcome {
                served: 3,
                miss: false,
                evicted: None,
                loaded: None
            }
        );
    }

    #[test]
    fn miss_serves_best_resident_and_evicts_lfu() {
        // A = 0 with 2 uses, B = 1 with 1 use, C = 2 requested.
        let mut c = ModelCache::new(2).unwrap();
        c.request(&[0]).unwrap();
        c.request(&[0]).unwrap();
        c.request(&[1, 0]).unwrap(); // miss: 0 serves, 1 loads
        c.request(&[1]).unwrap();
        let counts: Vec<_> = c.slots().iter().map(|s| (s.model, s.use_count)).collect();
        assert_eq!(counts, vec![(0, 3), (1, 1)]);

        let o = c.request(&[2, 1, 0]).unwrap();
        assert_eq!(o.served, 1);
        assert!(o.miss);
        assert_eq!(o.evicted, Some(1));
        assert!(c.is_loaded(2) && c.is_loaded(0) && !c.is_loaded(1));

        let mut c2 = ModelCache::new(2).unwrap();
        c2.request(&[0]).unwrap();
        c2.request(&[0]).unwrap();
        c2.request(&[1, 0]).unwrap();
        c2.request(&[1]).unwrap();
        let o = c2.request(&[2, 0, 1]).unwrap();
        assert_eq!(o.served, 0);
        assert_eq!(o.evicted, Some(1));
    }

    #[test]
    fn ties_evict_oldest() {
        let mut c = ModelCache::new(2).unwrap();
        c.warm(&[5, 6]);
        let o = c.request(&[7, 6, 5]).unwrap();
        // Both residents have zero uses before this frame; 5 is older.
        assert_eq!(o.evicted, Some(5));
        assert_eq!(o.served, 6);
    }
}
