use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{Action, RewardWeights, SystemState, Track};
use crate::envmodels::EnvModels;
use crate::planner::{Interrupt, MctsConfig, PlanError, SmdpModel, SwitchPolicy};
use crate::surrogate::Surrogate;

#[derive(Debug, Clone)]
pub struct PlanJob {
    pub state: SystemState,
    pub t_q: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkerReport {
    Done {
        id: u64,
        action: Action,
        policy: SwitchPolicy,
        iterations: usize,
        elapsed: Duration,
    },
    /// interrupted mid-search after `completed` iterations
    Aborted { id: u64, completed: usize },
    /// preempted before the search started
    Skipped { id: u64 },
    Failed { id: u64, error: String },
}

impl WorkerReport {
    pub fn id(&self) -> u64 {
        match *self {
            WorkerReport::Done { id, .. }
            | WorkerReport::Aborted { id, .. }
            | WorkerReport::Skipped { id }
            | WorkerReport::Failed { id, .. } => id,
        }
    }
}

/// Returned when a preemption actually raised an interrupt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreemptAck {
    pub id: u64,
    /// iterations the search had published when the flag went up
    pub completed_at_raise: usize,
}

struct Current {
    id: u64,
    interrupt: Arc<Interrupt>,
}

struct Shared {
    current: Mutex<Option<Current>>,
    running: AtomicUsize,
    max_running: AtomicUsize,
}

struct Context {
    track: Arc<Track>,
    surrogate: Arc<Surrogate>,
    env: EnvModels,
    weights: RewardWeights,
    cfg: MctsConfig,
}

/// Background thread running reverse-switch planning one job at a time.
/// Submitting a job preempts the one in flight; only the newest job can
/// finish with a decision.
pub struct PlanningWorker {
    jobs: Option<Sender<(u64, PlanJob, Arc<Interrupt>)>>,
    reports: Receiver<WorkerReport>,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
    next_id: u64,
}

impl PlanningWorker {
    pub fn spawn(
        track: Arc<Track>,
        surrogate: Arc<Surrogate>,
        env: EnvModels,
        weights: RewardWeights,
        cfg: MctsConfig,
    ) -> Self {
        let (job_tx, job_rx) = mpsc::channel::<(u64, PlanJob, Arc<Interrupt>)>();
        let (report_tx, report_rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            current: Mutex::new(None),
            running: AtomicUsize::new(0),
            max_running: AtomicUsize::new(0),
        });
        let ctx = Context {
            track,
            surrogate,
            env,
            weights,
            cfg,
        };
        let worker_shared = Arc::clone(&shared);
        let handle = std::thread::spawn(move || {
            for (id, job, interrupt) in job_rx {
                let report = run_job(&ctx, &worker_shared, id, &job, &interrupt);
                {
                    let mut cur = worker_shared.current.lock().expect("worker lock");
                    if cur.as_ref().is_some_and(|c| c.id == id) {
                        *cur = None;
                    }
                }
                if report_tx.send(report).is_err() {
                    break;
                }
            }
        });
        PlanningWorker {
            jobs: Some(job_tx),
            reports: report_rx,
            shared,
            handle: Some(handle),
            next_id: 0,
        }
    }

    /// Preempts whatever is in flight and queues `job`. Returns its id.
    pub fn submit(&mut self, job: PlanJob) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let interrupt = Arc::new(Interrupt::new());
        {
            let mut cur = self.shared.current.lock().expect("worker lock");
            if let Some(c) = cur.as_ref() {
                c.interrupt.raise();
            }
            *cur = Some(Current {
                id,
                interrupt: Arc::clone(&interrupt),
            });
        }
        self.jobs
            .as_ref()
            .expect("worker alive")
            .send((id, job, interrupt))
            .expect("planning thread exited");
        id
    }

    /// Raises the interrupt of the in-flight job. A no-op when nothing is in
    /// flight or the job was already preempted.
    pub fn preempt(&self) -> Option<PreemptAck> {
        let cur = self.shared.current.lock().expect("worker lock");
        let c = cur.as_ref()?;
        if c.interrupt.is_raised() {
            return None;
        }
        c.interrupt.raise();
        Some(PreemptAck {
            id: c.id,
            completed_at_raise: c.interrupt.completed(),
        })
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<WorkerReport> {
        match self.reports.recv_timeout(timeout) {
            Ok(r) => Some(r),
            Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => None,
        }
    }

    /// Collects reports until the job `id` has reported or `timeout` expires.
    pub fn drain_until(&self, id: u64, timeout: Duration) -> Vec<WorkerReport> {
        let deadline = Instant::now() + timeout;
        let mut out = Vec::new();
        while let Some(left) = deadline.checked_duration_since(Instant::now()) {
            match self.recv_timeout(left) {
                Some(r) => {
                    let last = r.id() == id;
                    out.push(r);
                    if last {
                        break;
                    }
                }
                None => break,
            }
        }
        out
    }

    /// Highest number of searches observed running at once.
    pub fn max_concurrent(&self) -> usize {
        self.shared.max_running.load(Ordering::SeqCst)
    }
}

impl Drop for PlanningWorker {
    fn drop(&mut self) {
        let _ = self.preempt();
        self.jobs.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn run_job(ctx: &Context, shared: &Shared, id: u64, job: &PlanJob, interrupt: &Interrupt) -> WorkerReport {
    if interrupt.is_raised() {
        return WorkerReport::Skipped { id };
    }
    let now_running = shared.running.fetch_add(1, Ordering::SeqCst) + 1;
    shared.max_running.fetch_max(now_running, Ordering::SeqCst);
    let model = SmdpModel {
        track: &ctx.track,
        surrogate: &ctx.surrogate,
        env: &ctx.env,
        weights: ctx.weights,
        cfg: ctx.cfg,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let start = Instant::now();
    let result = model.plan_reverse_switch(&job.state, job.t_q, &mut rng, interrupt);
    shared.running.fetch_sub(1, Ordering::SeqCst);
    match result {
        Ok(out) => WorkerReport::Done {
            id,
            action: out.chosen,
            policy: out.policy,
            iterations: out.iterations,
            elapsed: start.elapsed(),
        },
        Err(PlanError::Aborted { completed }) => WorkerReport::Aborted { id, completed },
        Err(e) => WorkerReport::Failed { id, error: e.to_string() },
    }
}
