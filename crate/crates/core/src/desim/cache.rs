/// Version currently held by the RSU for each item.
#[derive(Debug, Clone)]
pub struct CacheState {
    generation: Vec<f64>,
    ready: Vec<f64>,
}

impl CacheState {
    /// Every item starts with a version generated (and installed) at `t = 0`.
    pub fn fresh(items: usize) -> Self {
        Self {
            generation: vec![0.0; items],
            ready: vec![0.0; items],
        }
    }

    /// Time the publisher started sending the cached version of `item`.
    pub fn generation_time(&self, item: usize) -> f64 {
        self.generation[item]
    }

    pub fn ready_time(&self, item: usize) -> f64 {
        self.ready[item]
    }

    pub fn install(&mut self, item: usize, generation_time: f64, ready_time: f64) {
        debug_assert!(generation_time <= ready_time);
        debug_assert!(generation_time >= self.generation[item]);
        self.generation[item] = generation_time;
        self.ready[item] = ready_time;
    }

    pub fn age(&self, item: usize, now: f64) -> f64 {
        now - self.generation[item]
    }
}
