//! Thread-pooled job runner. Work is pulled from a shared counter and every
//! result lands in its job's slot, so reports are identical for any worker
//! count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use aw_core::experiments::{eval_job, EvalJob, JobRunner, SweepContext};
use aw_core::Result;

pub struct ThreadedRunner {
    threads: usize,
}

impl ThreadedRunner {
    /// `threads = 0` selects the machine's available parallelism.
    pub fn new(threads: usize) -> Self {
        let threads = if threads == 0 {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            threads
        };
        Self { threads }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

impl JobRunner for ThreadedRunner {
    fn run(&mut self, ctx: &SweepContext, jobs: &[EvalJob]) -> Result<Vec<Vec<f64>>> {
        if self.threads <= 1 || jobs.len() <= 1 {
            return jobs.iter().map(|j| eval_job(ctx, j)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<Vec<f64>>>>> = Mutex::new(vec![None; jobs.len()]);
        std::thread::scope(|scope| {
            for _ in 0..self.threads.min(jobs.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= jobs.len() {
                        break;
                    }
                    let result = eval_job(ctx, &jobs[i]);
                    slots.lock().expect("runner mutex")[i] = Some(result);
                });
            }
        });
        let slots = slots.into_inner().expect("runner mutex");
        let mut out = Vec::with_capacity(jobs.len());
        for slot in slots {
            out.push(slot.expect("every job ran")?);
        }
        Ok(out)
    }
}
