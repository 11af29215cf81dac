//! Scoped-thread executor for independent grid points.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use phaseq_core::experiments::Executor;
use phaseq_core::Result;

/// Spreads grid points over a fixed number of worker threads.
///
/// Results are stored by index, so the output does not depend on scheduling.
#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    threads: usize,
}

impl Threaded {
    /// `0` means one worker per available core.
    pub fn new(threads: usize) -> Self {
        let threads = if threads == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            threads
        };
        Self { threads }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

impl Executor for Threaded {
    fn run(&self, n: usize, task: &(dyn Fn(usize) -> Result<Vec<f64>> + Sync)) -> Result<Vec<Vec<f64>>> {
        let workers = self.threads.min(n);
        if workers <= 1 {
            return (0..n).map(task).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<Vec<f64>>>>> = Mutex::new((0..n).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    if k >= n {
                        break;
                    }
                    let out = task(k);
                    let failed = out.is_err();
                    slots.lock().unwrap()[k] = Some(out);
                    if failed {
                        next.store(n, Ordering::Relaxed);
                    }
                });
            }
        });
        let slots = slots.into_inner().unwrap();
        let mut rows = Vec::with_capacity(n);
        let mut first_err = None;
        for slot in slots {
            match slot {
                Some(Ok(row)) => rows.push(row),
                Some(Err(e)) => {
                    first_err.get_or_insert(e);
                }
                None => {}
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(rows),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use phaseq_core::experiments::Serial;

    #[test]
    fn matches_serial_order() {
        let task = |k: usize| Ok(vec![k as f64, (k * k) as f64]);
        let a = Threaded::new(4).run(37, &task).unwrap();
        let b = Serial.run(37, &task).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn propagates_task_errors() {
        let task = |k: usize| {
            if k == 5 {
                Err(phaseq_core::Error::EmptyWaveform)
            } else {
                Ok(vec![k as f64])
            }
        };
        assert!(Threaded::new(3).run(20, &task).is_err());
        assert_eq!(Threaded::new(3).run(0, &task).unwrap(), Vec::<Vec<f64>>::new());
    }
}
