//! PCA updates on a worker thread behind a bounded queue. Submissions that
//! find the queue full are dropped rather than blocking the trainer, and the
//! trainer reads whatever basis was last published.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use nmnc_core::manifold::{InlineTracker, ManifoldState, ManifoldTracker, Submission};
use nmnc_core::numerics::DenseMatrix;
use nmnc_core::{Error, Result};

enum Job {
    Update(usize, DenseMatrix),
    Flush(mpsc::Sender<()>),
}

struct Shared {
    bases: Mutex<Vec<DenseMatrix>>,
    applied: Vec<AtomicUsize>,
    dropped: AtomicUsize,
}

pub struct AsyncTracker {
    sender: Option<SyncSender<Job>>,
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl AsyncTracker {
    pub fn new(states: Vec<ManifoldState>, capacity: usize) -> Self {
        let layers = states.len();
        let shared = Arc::new(Shared {
            bases: Mutex::new(states.iter().map(ManifoldState::components).collect()),
            applied: (0..layers).map(|_| AtomicUsize::new(0)).collect(),
            dropped: AtomicUsize::new(0),
        });
        let (sender, receiver) = mpsc::sync_channel::<Job>(capacity.max(1));
        let worker_shared = Arc::clone(&shared);
        let worker = std::thread::spawn(move || {
            let mut inline = InlineTracker::new(states);
            for job in receiver {
                match job {
                    Job::Update(layer, batch) => match inline.submit(layer, &batch) {
                        Ok(Submission::Applied) => {
                            let basis = inline.state(layer).components();
                            worker_shared.bases.lock().expect("basis lock poisoned")[layer] = basis;
                            worker_shared.applied[layer].fetch_add(1, Ordering::Release);
                        }
                        Ok(_) => {}
                        Err(e) => log::warn!("PCA update for layer {layer} failed: {e}"),
                    },
                    Job::Flush(done) => {
                        let _ = done.send(());
                    }
                }
            }
        });
        Self {
            sender: Some(sender),
            shared,
            worker: Some(worker),
        }
    }

    /// Submissions rejected because the queue was full.
    pub fn dropped(&self) -> usize {
        self.shared.dropped.load(Ordering::Acquire)
    }
}

impl ManifoldTracker for AsyncTracker {
    fn layers(&self) -> usize {
        self.shared.applied.len()
    }

    fn submit(&mut self, layer: usize, batch: &DenseMatrix) -> Result<Submission> {
        if layer >= self.layers() {
            return Err(Error::InvalidArgument(format!("tracker: no layer {layer}")));
        }
        if !batch.is_finite() {
            log::warn!("manifold tracker: layer {layer} batch with non-finite activations dropped");
            return Ok(Submission::DroppedInvalid);
        }
        let sender = self.sender.as_ref().expect("sender lives until drop");
        match sender.try_send(Job::Update(layer, batch.clone())) {
            Ok(()) => Ok(Submission::Queued),
            Err(TrySendError::Full(_)) => {
                self.shared.dropped.fetch_add(1, Ordering::AcqRel);
                log::debug!("PCA queue full, layer {layer} batch dropped");
                Ok(Submission::DroppedFull)
            }
            Err(TrySendError::Disconnected(_)) => Err(Error::InvalidArgument("PCA worker has stopped".into())),
        }
    }

    fn snapshot(&self, layer: usize) -> Result<DenseMatrix> {
        self.shared
            .bases
            .lock()
            .expect("basis lock poisoned")
            .get(layer)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("tracker: no layer {layer}")))
    }

    fn applied(&self, layer: usize) -> usize {
        self.shared.applied[layer].load(Ordering::Acquire)
    }

    fn flush(&mut self) {
        let (tx, rx) = mpsc::channel();
        if let Some(sender) = &self.sender {
            if sender.send(Job::Flush(tx)).is_ok() {
                let _ = rx.recv();
            }
        }
    }
}

impl Drop for AsyncTracker {
    fn drop(&mut self) {
        self.sender.take();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}
