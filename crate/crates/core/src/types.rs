//! Identifiers and tags shared by every layer of the stack.

use std::fmt;

/// Protocol type tag carried by every packet snip and used as the first
/// key of the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NetType {
    Undef,
    Netif,
    Sixlowpan,
    Ipv6,
    Udp,
}

impl NetType {
    /// Type tag that the IPv6 layer hands packets to for a given next-header
    /// value, if the stack has a dedicated protocol module for it.
    pub fn from_next_header(nh: u8) -> Option<NetType> {
        match nh {
            crate::ipv6::NEXT_HEADER_UDP => Some(NetType::Udp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NetType::Undef => "undef",
            NetType::Netif => "netif",
            NetType::Sixlowpan => "sixlowpan",
            NetType::Ipv6 => "ipv6",
            NetType::Udp => "udp",
        }
    }
}

impl fmt::Display for NetType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Opaque identity of a message-consuming endpoint, assigned at spawn time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EndpointId(pub u16);

impl fmt::Display for EndpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ep{}", self.0)
    }
}

/// Virtual time in nanoseconds.
pub type VirtualTime = u64;

pub const NS_PER_MS: u64 = 1_000_000;
pub const NS_PER_SEC: u64 = 1_000_000_000;

/// Link-layer address (up to eight bytes).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct L2Addr {
    len: u8,
    bytes: [u8; 8],
}

impl L2Addr {
    pub const MAX_LEN: usize = 8;

    pub fn new(bytes: &[u8]) -> Option<L2Addr> {
        if bytes.len() > Self::MAX_LEN {
            return None;
        }
        let mut out = L2Addr {
            len: bytes.len() as u8,
            bytes: [0; 8],
        };
        out.bytes[..bytes.len()].copy_from_slice(bytes);
        Some(out)
    }

    /// 16-bit IEEE 802.15.4 short address.
    pub fn short(addr: u16) -> L2Addr {
        L2Addr::new(&addr.to_be_bytes()).expect("two bytes")
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl fmt::Debug for L2Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for L2Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.as_bytes().iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for L2Addr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s
            .split(':')
            .map(|p| u8::from_str_radix(p, 16).map_err(|e| format!("bad l2 byte {p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        L2Addr::new(&bytes).ok_or_else(|| format!("l2 address too long: {s}"))
    }
}
