use super::mailbox::Mailbox;
use super::{
    check_dest, Communicator, Envelope, RankId, Result, SendHandle, Source, Tag, TransportError,
    DEFAULT_TIMEOUT,
};
use std::sync::mpsc::{channel, Sender};
use std::time::Duration;

/// Endpoint of a group of ranks living in one process.
///
/// Queues are unbounded, so a send never blocks and completes immediately.
#[derive(Debug)]
pub struct InProcessEndpoint {
    rank: RankId,
    peers: Vec<Option<Sender<Envelope>>>,
    mailbox: Mailbox,
}

/// Creates `ranks` connected endpoints, indexed by rank.
pub fn in_process_group(ranks: usize) -> Vec<InProcessEndpoint> {
    let (txs, rxs): (Vec<_>, Vec<_>) = (0..ranks).map(|_| channel()).unzip();
    rxs.into_iter()
        .enumerate()
        .map(|(rank, rx)| InProcessEndpoint {
            rank,
            peers: txs
                .iter()
                .enumerate()
                .map(|(d, tx)| (d != rank).then(|| tx.clone()))
                .collect(),
            mailbox: Mailbox::new(rx, DEFAULT_TIMEOUT),
        })
        .collect()
}

/// Runs `f` once per rank on its own thread and returns the results in rank order.
pub fn run_in_process<T, F>(ranks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut InProcessEndpoint) -> T + Sync,
{
    let endpoints = in_process_group(ranks);
    std::thread::scope(|s| {
        let handles: Vec<_> = endpoints
            .into_iter()
            .map(|mut ep| {
                let f = &f;
                s.spawn(move || f(&mut ep))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank panicked"))
            .collect()
    })
}

impl InProcessEndpoint {
    /// Drops the outgoing queues; peers see [`TransportError::ClosedEndpoint`] once all senders are gone.
    pub fn close(&mut self) {
        self.peers.iter_mut().for_each(|p| *p = None);
    }
}

impl Communicator for InProcessEndpoint {
    fn rank(&self) -> RankId {
        self.rank
    }

    fn size(&self) -> usize {
        self.peers.len()
    }

    fn send_nonblocking(&mut self, dest: RankId, tag: Tag, payload: Vec<u8>) -> Result<SendHandle> {
        check_dest(self.rank, self.size(), dest)?;
        let tx = self.peers[dest]
            .as_ref()
            .ok_or(TransportError::ClosedEndpoint)?;
        let env = Envelope {
            source: self.rank,
            dest,
            tag,
            payload,
        };
        tx.send(env).map_err(|_| TransportError::ClosedEndpoint)?;
        Ok(SendHandle::completed())
    }

    fn receive(&mut self, source: Source, tag: Tag) -> Result<Envelope> {
        self.mailbox.receive(source, tag)
    }

    fn timeout(&self) -> Duration {
        self.mailbox.timeout
    }

    fn set_timeout(&mut self, timeout: Duration) {
        self.mailbox.timeout = timeout;
    }
}
