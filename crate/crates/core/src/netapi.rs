//! The uniform message protocol spoken between stack modules.
//!
//! Two asynchronous kinds carry packets (`Snd` down the stack, `Rcv` up the
//! stack); two synchronous kinds (`Get`, `Set`) read and write options and are
//! answered by exactly one `Ack`. An `Ack` status is the option length on
//! success or a negative errno.

use thiserror::Error;

use crate::netreg::DemuxCtx;
use crate::pktbuf::SnipId;
use crate::sched::Node;
use crate::types::{EndpointId, NetType, VirtualTime, NS_PER_SEC};

/// Default bound on a synchronous option exchange.
pub const DEFAULT_OPTION_TIMEOUT: VirtualTime = NS_PER_SEC;

/// Negative status codes carried in `Ack` messages.
pub mod errno {
    pub const ENOENT: i32 = -2;
    pub const ENOMEM: i32 = -12;
    pub const EEXIST: i32 = -17;
    pub const EINVAL: i32 = -22;
    pub const EOVERFLOW: i32 = -75;
    pub const ENOTSUP: i32 = -95;
}

/// Keys of the global option store.
///
/// Multi-byte integers are big endian unless noted. The key set only grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetOpt {
    /// Link-layer address, `ADDR_LEN` bytes, network order.
    Address,
    /// Link-layer address length, `u16`.
    AddrLen,
    /// Radio channel, `u16`.
    Channel,
    /// Device state, one byte (see [`DeviceState`](crate::netdev::DeviceState)).
    State,
    /// Largest payload an upper layer may hand to the interface, `u16`.
    MaxPduSize,
    /// Device type, one byte (see [`DeviceType`](crate::netdev::DeviceType)).
    DeviceType,
    /// Device counters: tx frames, rx frames, tx bytes, rx bytes; four
    /// `u32`, 16 bytes.
    Stats,
    /// Enabled device events, `u16` bit mask of
    /// [`EventMask`](crate::netdev::EventMask) bits.
    EventMask,
    /// IPv6 unicast address of the interface given as context, 16 bytes.
    Ipv6Addr,
    /// Default hop limit, one byte.
    HopLimit,
    /// IPv6 forwarding switch, one byte (0 or 1).
    Forwarding,
    /// Route: prefix (16) + prefix length (1) + next hop (16); context is
    /// the interface endpoint. 33 bytes, write only.
    FibAdd,
    /// Route removal: prefix (16) + prefix length (1). Write only.
    FibRemove,
    /// Static neighbor: IPv6 address (16) + link-layer address (1..=8);
    /// context is the interface endpoint. Write only.
    NeighborAdd,
}

/// Accepted value sizes of an option.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptLen {
    pub min: usize,
    pub max: usize,
}

impl NetOpt {
    pub fn value_len(self) -> OptLen {
        let (min, max) = match self {
            NetOpt::Address => (1, 8),
            NetOpt::AddrLen | NetOpt::Channel | NetOpt::MaxPduSize | NetOpt::EventMask => (2, 2),
            NetOpt::State | NetOpt::DeviceType | NetOpt::HopLimit | NetOpt::Forwarding => (1, 1),
            NetOpt::Stats => (16, 16),
            NetOpt::Ipv6Addr => (16, 16),
            NetOpt::FibAdd => (33, 33),
            NetOpt::FibRemove => (17, 17),
            NetOpt::NeighborAdd => (17, 24),
        };
        OptLen { min, max }
    }
}

/// Option access request; `data` is the value for `Set` and a buffer of the
/// caller's capacity for `Get`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionRequest {
    pub opt: NetOpt,
    pub context: u16,
    pub data: Vec<u8>,
}

impl OptionRequest {
    pub fn get(opt: NetOpt, context: u16, capacity: usize) -> Self {
        OptionRequest {
            opt,
            context,
            data: vec![0; capacity],
        }
    }

    pub fn set(opt: NetOpt, context: u16, value: &[u8]) -> Self {
        OptionRequest {
            opt,
            context,
            data: value.to_vec(),
        }
    }
}

/// Length of the option value, or a negative errno.
pub type AckStatus = i32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetMsg {
    Snd(SnipId),
    Rcv(SnipId),
    Get {
        req: OptionRequest,
        reply_to: EndpointId,
    },
    Set {
        req: OptionRequest,
        reply_to: EndpointId,
    },
    Ack {
        status: AckStatus,
        data: Vec<u8>,
    },
}

impl NetMsg {
    pub fn packet(&self) -> Option<SnipId> {
        match self {
            NetMsg::Snd(p) | NetMsg::Rcv(p) => Some(*p),
            _ => None,
        }
    }
}

/// Direction of a packet message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PktKind {
    Snd,
    Rcv,
}

impl PktKind {
    pub fn msg(self, pkt: SnipId) -> NetMsg {
        match self {
            PktKind::Snd => NetMsg::Snd(pkt),
            PktKind::Rcv => NetMsg::Rcv(pkt),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetApiError {
    #[error("mailbox of {0} is full")]
    QueueFull(EndpointId),
    #[error("endpoint {0} does not exist or has terminated")]
    DeadEndpoint(EndpointId),
    #[error("option not supported")]
    Unsupported,
    #[error("no acknowledgment before timeout")]
    Timeout,
    #[error("option request failed with status {0}")]
    Status(i32),
}

impl NetApiError {
    fn from_status(status: AckStatus) -> NetApiError {
        if status == errno::ENOTSUP {
            NetApiError::Unsupported
        } else {
            NetApiError::Status(status)
        }
    }
}

/// Checks an incoming `Set` value against the option's documented size.
pub fn check_set_len(req: &OptionRequest) -> Result<(), AckStatus> {
    let l = req.opt.value_len();
    if req.data.len() < l.min || req.data.len() > l.max {
        return Err(errno::EINVAL);
    }
    Ok(())
}

impl Node {
    /// Posts a packet message from application context. The caller's
    /// reference moves with the message; on error it stays with the caller.
    pub fn netapi_send(
        &mut self,
        to: EndpointId,
        kind: PktKind,
        pkt: SnipId,
    ) -> Result<(), NetApiError> {
        self.post(to, kind.msg(pkt))
    }

    /// Delivers `pkt` to every endpoint registered for `(nettype, ctx)`.
    /// Returns the number of receivers; with none, the packet is released.
    pub fn netapi_dispatch(
        &mut self,
        nettype: NetType,
        ctx: DemuxCtx,
        kind: PktKind,
        pkt: SnipId,
    ) -> usize {
        self.dispatch_from(None, nettype, ctx, kind, pkt)
    }

    /// Synchronous option read. Returns the value bytes.
    pub fn netapi_get(
        &mut self,
        to: EndpointId,
        opt: NetOpt,
        context: u16,
        capacity: usize,
    ) -> Result<Vec<u8>, NetApiError> {
        let reply_to = self.app_endpoint();
        let (status, mut data) = self.option_exchange(
            to,
            NetMsg::Get {
                req: OptionRequest::get(opt, context, capacity),
                reply_to,
            },
        )?;
        if status < 0 {
            return Err(NetApiError::from_status(status));
        }
        data.truncate(status as usize);
        Ok(data)
    }

    /// Synchronous option write. Returns the accepted length.
    pub fn netapi_set(
        &mut self,
        to: EndpointId,
        opt: NetOpt,
        context: u16,
        value: &[u8],
    ) -> Result<usize, NetApiError> {
        let reply_to = self.app_endpoint();
        let (status, _) = self.option_exchange(
            to,
            NetMsg::Set {
                req: OptionRequest::set(opt, context, value),
                reply_to,
            },
        )?;
        if status < 0 {
            return Err(NetApiError::from_status(status));
        }
        Ok(status as usize)
    }

    fn option_exchange(
        &mut self,
        to: EndpointId,
        msg: NetMsg,
    ) -> Result<(AckStatus, Vec<u8>), NetApiError> {
        let app = self.app_endpoint();
        // stale acknowledgments belong to requests that already timed out
        self.drain_mailbox(app);
        self.post(to, msg)?;
        let deadline = self.now() + self.option_timeout();
        let got = self.run_until(deadline, |n| n.mailbox_len(app) > 0);
        if !got {
            return Err(NetApiError::Timeout);
        }
        match self.pop_message(app) {
            Some(NetMsg::Ack { status, data }) => Ok((status, data)),
            Some(other) => {
                self.discard_message(other);
                Err(NetApiError::Timeout)
            }
            None => Err(NetApiError::Timeout),
        }
    }
}
