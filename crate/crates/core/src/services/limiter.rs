use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding the number of requests in flight.
#[derive(Debug)]
pub struct Limiter {
    capacity: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    pub fn new(capacity: usize) -> Self {
        Limiter {
            capacity: capacity.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Blocks until a slot is free. The slot is released when the guard drops.
    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_use.lock().expect("limiter poisoned");
        while *n >= self.capacity {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        Permit { limiter: self }
    }
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_use.lock().expect("limiter poisoned");
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}
