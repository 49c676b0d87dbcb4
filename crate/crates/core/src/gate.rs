use std::collections::HashMap;
use std::sync::{Condvar, Mutex};

/// Counting gate per endpoint.
#[derive(Default)]
pub(crate) struct InFlight {
    counts: Mutex<HashMap<String, usize>>,
    freed: Condvar,
}

pub(crate) struct Permit<'a> {
    gate: &'a InFlight,
    endpoint: String,
}

impl InFlight {
    pub(crate) fn acquire(&self, endpoint: &str, limit: usize) -> Permit<'_> {
        let mut counts = self.counts.lock().unwrap();
        loop {
            let n = counts.entry(endpoint.to_string()).or_insert(0);
            if *n < limit.max(1) {
                *n += 1;
                break;
            }
            counts = self.freed.wait(counts).unwrap();
        }
        Permit { gate: self, endpoint: endpoint.to_string() }
    }

    #[cfg(test)]
    pub(crate) fn current(&self, endpoint: &str) -> usize {
        self.counts.lock().unwrap().get(endpoint).copied().unwrap_or(0)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut counts = self.gate.counts.lock().unwrap();
        if let Some(n) = counts.get_mut(&self.endpoint) {
            *n -= 1;
        }
        self.gate.freed.notify_all();
    }
}
