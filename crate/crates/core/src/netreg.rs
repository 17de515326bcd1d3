//! Registry mapping `(protocol type, demultiplexing context)` to the
//! endpoints interested in packets of that kind.

use std::sync::RwLock;

use thiserror::Error;

use crate::types::{EndpointId, NetType};

/// Demultiplexing context, e.g. a UDP port or an IPv6 next-header value.
pub type DemuxCtx = u32;

/// Wildcard context: an entry registered with it matches every context of
/// its type.
pub const DEMUX_CTX_ALL: DemuxCtx = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetregEntry {
    pub nettype: NetType,
    pub demux_ctx: DemuxCtx,
    pub endpoint: EndpointId,
}

impl NetregEntry {
    pub fn new(nettype: NetType, demux_ctx: DemuxCtx, endpoint: EndpointId) -> Self {
        NetregEntry {
            nettype,
            demux_ctx,
            endpoint,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetregError {
    #[error("entry already registered")]
    DuplicateEntry,
    #[error("entry not registered")]
    NotFound,
}

#[derive(Debug, Default)]
pub struct Netreg {
    entries: RwLock<Vec<NetregEntry>>,
}

impl Netreg {
    pub fn new() -> Netreg {
        Netreg::default()
    }

    pub fn register(&self, entry: NetregEntry) -> Result<(), NetregError> {
        let mut e = self.entries.write().expect("netreg lock");
        if e.contains(&entry) {
            return Err(NetregError::DuplicateEntry);
        }
        e.push(entry);
        Ok(())
    }

    pub fn unregister(&self, entry: NetregEntry) -> Result<(), NetregError> {
        let mut e = self.entries.write().expect("netreg lock");
        let pos = e
            .iter()
            .position(|x| *x == entry)
            .ok_or(NetregError::NotFound)?;
        // keep registration order for the remaining entries
        e.remove(pos);
        Ok(())
    }

    /// Endpoints registered for `nettype` with `demux_ctx` or the wildcard,
    /// in registration order.
    pub fn lookup(&self, nettype: NetType, demux_ctx: DemuxCtx) -> Vec<EndpointId> {
        self.entries
            .read()
            .expect("netreg lock")
            .iter()
            .filter(|e| {
                e.nettype == nettype && (e.demux_ctx == demux_ctx || e.demux_ctx == DEMUX_CTX_ALL)
            })
            .map(|e| e.endpoint)
            .collect()
    }

    /// Endpoints registered with exactly this context (wildcards excluded).
    pub fn lookup_exact(&self, nettype: NetType, demux_ctx: DemuxCtx) -> Vec<EndpointId> {
        self.entries
            .read()
            .expect("netreg lock")
            .iter()
            .filter(|e| e.nettype == nettype && e.demux_ctx == demux_ctx)
            .map(|e| e.endpoint)
            .collect()
    }

    /// Removes every entry of an endpoint; returns how many were removed.
    pub fn unregister_endpoint(&self, endpoint: EndpointId) -> usize {
        let mut e = self.entries.write().expect("netreg lock");
        let before = e.len();
        e.retain(|x| x.endpoint != endpoint);
        before - e.len()
    }

    pub fn entries(&self) -> Vec<NetregEntry> {
        self.entries.read().expect("netreg lock").clone()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.read().expect("netreg lock").is_empty()
    }
}
