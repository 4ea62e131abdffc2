use super::{Envelope, Result, Source, Tag, TransportError};
use std::collections::VecDeque;
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

/// Incoming queue plus the messages that arrived before anyone asked for them.
#[derive(Debug)]
pub(crate) struct Mailbox {
    rx: Receiver<Envelope>,
    unexpected: VecDeque<Envelope>,
    pub(crate) timeout: Duration,
}

impl Mailbox {
    pub(crate) fn new(rx: Receiver<Envelope>, timeout: Duration) -> Self {
        Self {
            rx,
            unexpected: VecDeque::new(),
            timeout,
        }
    }

    pub(crate) fn receive(&mut self, source: Source, tag: Tag) -> Result<Envelope> {
        let wanted = |e: &Envelope| e.tag == tag && source.matches(e.source);
        if let Some(pos) = self.unexpected.iter().position(wanted) {
            return Ok(self.unexpected.remove(pos).expect("position is in range"));
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.rx.recv_timeout(left) {
                Ok(e) if wanted(&e) => return Ok(e),
                Ok(e) => self.unexpected.push_back(e),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(TransportError::Timeout(self.timeout))
                }
                Err(RecvTimeoutError::Disconnected) => return Err(TransportError::ClosedEndpoint),
            }
        }
    }
}
