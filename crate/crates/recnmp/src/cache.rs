//! Set-associative LRU cache simulator.
//!
//! Used standalone for trace locality characterization (capacity and line
//! sweeps) and embedded in each rank-NMP module as the memory-side
//! RankCache. Read-only workload: no write or coherence handling.

use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("capacity {capacity} not divisible by line_bytes*ways = {granule}")]
    BadCapacity { capacity: u64, granule: u64 },
    #[error("set count {0} is not a power of two")]
    SetsNotPowerOfTwo(u64),
    #[error("line_bytes and ways must be nonzero")]
    ZeroParam,
}

/// Cache shape; replacement is always LRU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity_bytes: u64,
    pub line_bytes: u32,
    pub ways: u32,
    /// Whether accesses may carry a do-not-cache hint.
    pub bypass_supported: bool,
}

impl CacheConfig {
    pub fn new(capacity_bytes: u64, line_bytes: u32, ways: u32) -> Self {
        CacheConfig { capacity_bytes, line_bytes, ways, bypass_supported: true }
    }

    /// Single-set configuration covering the whole capacity.
    pub fn fully_associative(capacity_bytes: u64, line_bytes: u32) -> Self {
        CacheConfig {
            capacity_bytes,
            line_bytes,
            ways: (capacity_bytes / u64::from(line_bytes)) as u32,
            bypass_supported: true,
        }
    }

    pub fn sets(&self) -> u64 {
        self.capacity_bytes / (u64::from(self.line_bytes) * u64::from(self.ways))
    }

    pub fn validate(&self) -> Result<(), CacheError> {
        if self.line_bytes == 0 || self.ways == 0 {
            return Err(CacheError::ZeroParam);
        }
        let granule = u64::from(self.line_bytes) * u64::from(self.ways);
        if self.capacity_bytes == 0 || !self.capacity_bytes.is_multiple_of(granule) {
            return Err(CacheError::BadCapacity { capacity: self.capacity_bytes, granule });
        }
        if !self.sets().is_power_of_two() {
            return Err(CacheError::SetsNotPowerOfTwo(self.sets()));
        }
        Ok(())
    }
}

/// Running counters; `accesses = hits + misses + bypasses` always holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub bypasses: u64,
    pub evictions: u64,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.hits as f64 / self.accesses as f64
        }
    }
}

/// Outcome of a single access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Hit,
    Miss { evicted: Option<u64> },
    Bypassed,
}

#[derive(Clone, Default)]
struct Line {
    tag: u64,
    valid: bool,
    last_used: u64,
}

/// A single-owner mutable LRU cache instance.
pub struct SetAssocCache {
    config: CacheConfig,
    sets: Vec<Line>,
    ways: usize,
    set_mask: u64,
    line_shift: u32,
    tick: u64,
    stats: CacheStats,
}

impl SetAssocCache {
    pub fn new(config: CacheConfig) -> Result<Self, CacheError> {
        config.validate()?;
        let sets = config.sets();
        Ok(SetAssocCache {
            config,
            sets: vec![Line::default(); (sets * u64::from(config.ways)) as usize],
            ways: config.ways as usize,
            set_mask: sets - 1,
            line_shift: u64::from(config.line_bytes).trailing_zeros(),
            tick: 0,
            stats: CacheStats::default(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    /// Looks up the line containing `address`. A cacheable miss installs
    /// the line, evicting the LRU way; a non-cacheable access touches no
    /// state at all.
    pub fn access(&mut self, address: u64, cacheable: bool) -> Access {
        self.stats.accesses += 1;
        if !cacheable {
            self.stats.bypasses += 1;
            return Access::Bypassed;
        }
        self.tick += 1;
        let line_addr = address >> self.line_shift;
        let set = (line_addr & self.set_mask) as usize;
        let tag = line_addr >> self.set_mask.count_ones();
        let base = set * self.ways;
        let ways = &mut self.sets[base..base + self.ways];

        for line in ways.iter_mut() {
            if line.valid && line.tag == tag {
                line.last_used = self.tick;
                self.stats.hits += 1;
                return Access::Hit;
            }
        }
        self.stats.misses += 1;
        let victim = ways
            .iter_mut()
            .min_by_key(|l| if l.valid { l.last_used } else { 0 })
            .expect("ways is non-empty");
        let evicted = victim.valid.then(|| {
            (victim.tag << self.set_mask.count_ones() | set as u64) << self.line_shift
        });
        if evicted.is_some() {
            self.stats.evictions += 1;
        }
        *victim = Line { tag, valid: true, last_used: self.tick };
        Access::Miss { evicted }
    }

    /// Order-sensitive digest of the resident lines and their LRU state;
    /// bypassed accesses must leave it unchanged.
    pub fn state_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (i, line) in self.sets.iter().enumerate() {
            if line.valid {
                (i, line.tag, line.last_used).hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Hit rate per capacity over one address stream: an independent cold-start
/// simulation per point. LRU inclusion makes the curve nondecreasing when
/// associativity scales with capacity.
pub fn sweep_capacity(
    addresses: &[u64],
    capacities: &[u64],
    line_bytes: u32,
    ways: u32,
) -> Result<Vec<(u64, f64)>, CacheError> {
    capacities
        .iter()
        .map(|&cap| {
            let mut cache = SetAssocCache::new(CacheConfig::new(cap, line_bytes, ways))?;
            for &a in addresses {
                cache.access(a, true);
            }
            Ok((cap, cache.stats().hit_rate()))
        })
        .collect()
}

/// Fully-associative LRU with recency kept in an ordered map, so sweeps
/// over large capacities stay O(log n) per access.
pub struct FullAssocLru {
    lines: u64,
    line_shift: u32,
    tick: u64,
    by_line: std::collections::HashMap<u64, u64>,
    by_tick: std::collections::BTreeMap<u64, u64>,
    stats: CacheStats,
}

impl FullAssocLru {
    pub fn new(capacity_bytes: u64, line_bytes: u32) -> Result<Self, CacheError> {
        if line_bytes == 0 || capacity_bytes == 0 || !capacity_bytes.is_multiple_of(u64::from(line_bytes)) {
            return Err(CacheError::BadCapacity {
                capacity: capacity_bytes,
                granule: u64::from(line_bytes),
            });
        }
        Ok(FullAssocLru {
            lines: capacity_bytes / u64::from(line_bytes),
            line_shift: u64::from(line_bytes).trailing_zeros(),
            tick: 0,
            by_line: std::collections::HashMap::new(),
            by_tick: std::collections::BTreeMap::new(),
            stats: CacheStats::default(),
        })
    }

    pub fn access(&mut self, address: u64) -> bool {
        self.stats.accesses += 1;
        self.tick += 1;
        let line = address >> self.line_shift;
        if let Some(old) = self.by_line.insert(line, self.tick) {
            self.by_tick.remove(&old);
            self.by_tick.insert(self.tick, line);
            self.stats.hits += 1;
            return true;
        }
        self.by_tick.insert(self.tick, line);
        self.stats.misses += 1;
        if self.by_line.len() as u64 > self.lines {
            let (&oldest, &victim) = self.by_tick.iter().next().expect("cache non-empty");
            self.by_tick.remove(&oldest);
            self.by_line.remove(&victim);
            self.stats.evictions += 1;
        }
        false
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }
}

/// Associativity selector for [`sweep_line`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assoc {
    Ways(u32),
    Full,
}

/// Hit rate per line size at fixed capacity.
pub fn sweep_line(
    addresses: &[u64],
    line_sizes: &[u32],
    capacity: u64,
    assoc: Assoc,
) -> Result<Vec<(u32, f64)>, CacheError> {
    line_sizes
        .iter()
        .map(|&line| match assoc {
            Assoc::Ways(w) => {
                let mut cache = SetAssocCache::new(CacheConfig::new(capacity, line, w))?;
                for &a in addresses {
                    cache.access(a, true);
                }
                Ok((line, cache.stats().hit_rate()))
            }
            Assoc::Full => {
                let mut cache = FullAssocLru::new(capacity, line)?;
                for &a in addresses {
                    cache.access(a);
                }
                Ok((line, cache.stats().hit_rate()))
            }
        })
        .collect()
}
