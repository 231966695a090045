//! Greenwald–Khanna ε-approximate quantile summary.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Tuple {
    v: f64,
    /// `r_min(v_i) - r_min(v_{i-1})`.
    g: u64,
    /// `r_max(v_i) - r_min(v_i)`.
    delta: u64,
}

#[derive(Debug, Clone)]
pub struct GkSketch {
    eps: f64,
    n: u64,
    tuples: Vec<Tuple>,
    since_compress: u64,
}

impl GkSketch {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::config(format!("GK epsilon {eps} outside (0, 0.5)")));
        }
        Ok(GkSketch {
            eps,
            n: 0,
            tuples: Vec::new(),
            since_compress: 0,
        })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    /// Stored tuple count.
    pub fn size(&self) -> usize {
        self.tuples.len()
    }

    fn band(&self) -> u64 {
        (2.0 * self.eps * self.n as f64).floor() as u64
    }

    pub fn insert(&mut self, v: f64) {
        let i = self.tuples.partition_point(|t| t.v <= v);
        let delta = if i == 0 || i == self.tuples.len() {
            0
        } else {
            self.band()
        };
        self.tuples.insert(i, Tuple { v, g: 1, delta });
        self.n += 1;
        self.since_compress += 1;
        if self.since_compress as f64 >= 1.0 / (2.0 * self.eps) {
            self.compress();
            self.since_compress = 0;
        }
    }

    fn compress(&mut self) {
        let band = self.band();
        let mut i = self.tuples.len().saturating_sub(2);
        while i >= 1 {
            let (a, b) = (self.tuples[i], self.tuples[i + 1]);
            if a.g + b.g + b.delta <= band {
                self.tuples[i + 1].g += a.g;
                self.tuples.remove(i);
            }
            i -= 1;
        }
    }

    /// A stored value whose rank is within `ε n` of `⌈q n⌉`.
    pub fn query(&self, q: f64) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::Empty("quantile sketch"));
        }
        let r = (q.clamp(0.0, 1.0) * self.n as f64).ceil().max(1.0);
        let slack = self.eps * self.n as f64;
        let mut rmin = 0u64;
        let mut prev = self.tuples[0].v;
        for t in &self.tuples {
            rmin += t.g;
            if (rmin + t.delta) as f64 > r + slack {
                return Ok(prev);
            }
            prev = t.v;
        }
        Ok(prev)
    }

    /// Estimated count of stored values `≤ x`, within `ε n` of the truth.
    pub fn rank(&self, x: f64) -> f64 {
        let k = self.tuples.partition_point(|t| t.v <= x);
        let rmin: u64 = self.tuples[..k].iter().map(|t| t.g).sum();
        match self.tuples.get(k) {
            Some(next) => rmin as f64 + (next.g + next.delta).saturating_sub(1) as f64 / 2.0,
            None => rmin as f64,
        }
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tuples.iter().map(|t| t.v)
    }
}

/// Quantiles over the last `k` intervals: one sketch per interval, combined
/// by binary search on the summed rank estimates.
#[derive(Debug, Clone)]
pub struct WindowedGk {
    eps: f64,
    capacity: usize,
    ring: VecDeque<GkSketch>,
}

impl WindowedGk {
    pub fn new(eps: f64, intervals: usize) -> Result<Self> {
        GkSketch::new(eps)?;
        if intervals == 0 {
            return Err(Error::config("window must span at least one interval"));
        }
        Ok(WindowedGk {
            eps,
            capacity: intervals,
            ring: VecDeque::with_capacity(intervals + 1),
        })
    }

    /// Starts a new interval, evicting the oldest when full.
    pub fn open_interval(&mut self) {
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back(GkSketch::new(self.eps).expect("validated epsilon"));
    }

    pub fn insert(&mut self, v: f64) {
        if self.ring.is_empty() {
            self.open_interval();
        }
        self.ring.back_mut().expect("open interval").insert(v);
    }

    pub fn len(&self) -> u64 {
        self.ring.iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn query(&self, q: f64) -> Result<f64> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Empty("windowed quantile sketch"));
        }
        let mut cands: Vec<f64> = self.ring.iter().flat_map(|s| s.values()).collect();
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        let target = (q.clamp(0.0, 1.0) * n as f64).ceil().max(1.0);
        let rank = |x: f64| self.ring.iter().map(|s| s.rank(x)).sum::<f64>();
        let i = cands.partition_point(|&x| rank(x) < target);
        Ok(cands[i.min(cands.len() - 1)])
    }
}
