//! Node assembly: protocol endpoints, interfaces and provisioning helpers.

use std::net::Ipv6Addr;

use crate::ipv6::{Ipv6Endpoint, LOOPBACK_IFACE};
use crate::netapi::{NetApiError, NetOpt};
use crate::netdev::{NetDev, NetDevError};
use crate::netif::Netif;
use crate::netreg::{NetregEntry, DEMUX_CTX_ALL};
use crate::sched::{Ctx, Node, NodeConfig};
use crate::sixlowpan::SixloEndpoint;
use crate::types::{EndpointId, L2Addr, NetType};
use crate::udp::UdpEndpoint;

fn register<E>(ty: NetType) -> impl FnOnce(&mut E, &mut Ctx<'_>) {
    move |_, cx| {
        cx.netreg()
            .register(NetregEntry::new(ty, DEMUX_CTX_ALL, cx.me()))
            .expect("fresh endpoint");
    }
}

impl Node {
    /// A node running the layers selected in `config`.
    pub fn new(config: NodeConfig) -> Node {
        let layers = config.layers;
        let mut node = Node::bare(config);
        if layers.sixlowpan {
            node.stack.sixlowpan =
                Some(node.spawn_with("6lo", SixloEndpoint::new(), register(NetType::Sixlowpan)));
        }
        if layers.ipv6 {
            node.stack.ipv6 = Some(node.spawn_with("ipv6", Ipv6Endpoint::new(), register(NetType::Ipv6)));
        }
        if layers.udp {
            node.stack.udp = Some(node.spawn_with("udp", UdpEndpoint::new(), register(NetType::Udp)));
        }
        node
    }

    pub fn sixlowpan_endpoint(&self) -> Option<EndpointId> {
        self.stack.sixlowpan
    }

    pub fn ipv6_endpoint(&self) -> Option<EndpointId> {
        self.stack.ipv6
    }

    pub fn udp_endpoint(&self) -> Option<EndpointId> {
        self.stack.udp
    }

    /// Attaches a device behind a new interface endpoint. With `sixlowpan`
    /// the interface exchanges packets with the 6LoWPAN layer, otherwise
    /// directly with IPv6.
    pub fn add_interface(&mut self, dev: Box<dyn NetDev>, sixlowpan: bool) -> Result<EndpointId, NetDevError> {
        let upper = if sixlowpan {
            NetType::Sixlowpan
        } else {
            NetType::Ipv6
        };
        let mut result = Ok(());
        let id = self.spawn_with("netif", Netif::new(dev, upper), |n, cx| {
            result = n.attach(cx).map(|_| ());
        });
        match result {
            Ok(()) => Ok(id),
            Err(e) => {
                self.kill(id);
                Err(e)
            }
        }
    }

    fn ipv6_or_err(&self) -> Result<EndpointId, NetApiError> {
        self.stack.ipv6.ok_or(NetApiError::Unsupported)
    }

    /// Assigns the IPv6 unicast address of `iface`. No route is implied.
    pub fn set_ipv6_addr(&mut self, iface: EndpointId, addr: Ipv6Addr) -> Result<(), NetApiError> {
        let ip = self.ipv6_or_err()?;
        self.netapi_set(ip, NetOpt::Ipv6Addr, iface.0, &addr.octets())
            .map(|_| ())
    }

    /// Adds a route. An unspecified `via` means on-link; `iface` may be
    /// [`LOOPBACK_IFACE`].
    pub fn add_route(
        &mut self,
        prefix: Ipv6Addr,
        prefix_len: u8,
        via: Ipv6Addr,
        iface: EndpointId,
    ) -> Result<(), NetApiError> {
        let ip = self.ipv6_or_err()?;
        let mut v = prefix.octets().to_vec();
        v.push(prefix_len);
        v.extend_from_slice(&via.octets());
        self.netapi_set(ip, NetOpt::FibAdd, iface.0, &v).map(|_| ())
    }

    pub fn remove_route(&mut self, prefix: Ipv6Addr, prefix_len: u8) -> Result<(), NetApiError> {
        let ip = self.ipv6_or_err()?;
        let mut v = prefix.octets().to_vec();
        v.push(prefix_len);
        self.netapi_set(ip, NetOpt::FibRemove, 0, &v).map(|_| ())
    }

    pub fn add_neighbor(&mut self, ip6: Ipv6Addr, l2: L2Addr, iface: EndpointId) -> Result<(), NetApiError> {
        let ip = self.ipv6_or_err()?;
        let mut v = ip6.octets().to_vec();
        v.extend_from_slice(l2.as_bytes());
        self.netapi_set(ip, NetOpt::NeighborAdd, iface.0, &v).map(|_| ())
    }

    /// Routes `addr/128` through the software loopback.
    pub fn add_loopback_route(&mut self, addr: Ipv6Addr) -> Result<(), NetApiError> {
        self.add_route(addr, 128, Ipv6Addr::UNSPECIFIED, LOOPBACK_IFACE)
    }

    pub fn ipv6(&self) -> Option<&Ipv6Endpoint> {
        self.endpoint(self.stack.ipv6?)
    }

    pub fn udp(&self) -> Option<&UdpEndpoint> {
        self.endpoint(self.stack.udp?)
    }

    pub fn sixlowpan(&self) -> Option<&SixloEndpoint> {
        self.endpoint(self.stack.sixlowpan?)
    }

    pub fn netif(&self, iface: EndpointId) -> Option<&Netif> {
        self.endpoint(iface)
    }
}
