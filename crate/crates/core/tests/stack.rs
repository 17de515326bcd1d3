use std::net::Ipv6Addr;

use snipnet::netdev::reflector::Reflector;
use snipnet::sched::{Node, NodeConfig};
use snipnet::sock::{IpEp, PosixUdpSocket, SockError, SockIp, SockUdp, UdpEp};
use snipnet::types::{EndpointId, L2Addr, NS_PER_MS, NS_PER_SEC};

fn own() -> Ipv6Addr {
    "fe80::1".parse().unwrap()
}

fn loopback_node() -> Node {
    let mut node = Node::new(NodeConfig::default());
    node.set_ipv6_addr_loopback(own());
    node
}

trait LoopbackExt {
    fn set_ipv6_addr_loopback(&mut self, a: Ipv6Addr);
}

impl LoopbackExt for Node {
    fn set_ipv6_addr_loopback(&mut self, a: Ipv6Addr) {
        self.add_loopback_route(a).unwrap();
    }
}

fn reflector_node() -> (Node, EndpointId) {
    let mut node = Node::new(NodeConfig::default());
    let iface = node.add_interface(Box::new(Reflector::new(1)), true).unwrap();
    node.set_ipv6_addr(iface, own()).unwrap();
    node.add_route(own(), 128, Ipv6Addr::UNSPECIFIED, iface).unwrap();
    node.add_neighbor(own(), L2Addr::short(2), iface).unwrap();
    (node, iface)
}

fn payload(n: usize) -> Vec<u8> {
    (0..n).map(|i| (i * 31 + 7) as u8).collect()
}

#[test]
fn udp_loopback_echo() {
    let mut node = loopback_node();
    let s = SockUdp::create(&mut node, UdpEp::any(7), None).unwrap();
    let baseline = node.pktbuf().stats().used;
    for n in [0usize, 1, 20, 1000, 2000] {
        let p = payload(n);
        assert_eq!(s.send(&mut node, &p, Some(UdpEp::new(own(), 7))).unwrap(), n);
        let mut buf = vec![0u8; 5000];
        let (got, from) = s.recv(&mut node, &mut buf, NS_PER_SEC).unwrap();
        assert_eq!(&buf[..got], &p[..]);
        assert_eq!(from, UdpEp::new(own(), 7));
    }
    node.run_until_idle();
    assert_eq!(node.pktbuf().stats().used, baseline);
}

#[test]
fn reflector_echo_fragments() {
    let (mut node, _) = reflector_node();
    let s = SockUdp::create(&mut node, UdpEp::any(7), None).unwrap();
    for n in [1usize, 20, 102, 103, 1000, 1232] {
        let p = payload(n);
        s.send(&mut node, &p, Some(UdpEp::new(own(), 7))).unwrap();
        let mut buf = vec![0u8; 2000];
        let (got, _) = s.recv(&mut node, &mut buf, NS_PER_SEC).unwrap();
        assert_eq!(&buf[..got], &p[..], "payload {n}");
    }
    let st = node.sixlowpan().unwrap().stats();
    assert!(st.rx_reassembled >= 2);
    node.run_until_idle();
    assert_eq!(node.pktbuf().stats().used, 0);
}

#[test]
fn recv_timeout_and_inbox_limit() {
    let mut node = loopback_node();
    let s = SockUdp::create(&mut node, UdpEp::any(9), None).unwrap();
    let mut buf = [0u8; 64];
    let t0 = node.now();
    assert_eq!(s.recv(&mut node, &mut buf, 10 * NS_PER_MS), Err(SockError::Timeout));
    assert_eq!(node.now(), t0 + 10 * NS_PER_MS);
    for i in 0..3u8 {
        s.send(&mut node, &[i], Some(UdpEp::new(own(), 9))).unwrap();
    }
    node.run_until_idle();
    assert_eq!(s.dropped(&node), 1);
    for i in 0..2u8 {
        let (n, _) = s.recv(&mut node, &mut buf, NS_PER_SEC).unwrap();
        assert_eq!(&buf[..n], &[i]);
    }
}

#[test]
fn address_in_use_and_buffer_too_small() {
    let mut node = loopback_node();
    let s = SockUdp::create(&mut node, UdpEp::any(7), None).unwrap();
    assert_eq!(
        SockUdp::create(&mut node, UdpEp::any(7), None).unwrap_err(),
        SockError::AddressInUse
    );
    s.send(&mut node, &[1; 30], Some(UdpEp::new(own(), 7))).unwrap();
    let mut small = [0u8; 10];
    assert_eq!(
        s.recv(&mut node, &mut small, NS_PER_SEC),
        Err(SockError::BufferTooSmall { needed: 30 })
    );
    assert!(matches!(
        s.send(&mut node, &vec![0; 65508], Some(UdpEp::new(own(), 7))),
        Err(SockError::MessageTooLarge(65508))
    ));
    s.close(&mut node);
    node.run_until_idle();
    assert_eq!(node.pktbuf().stats().used, 0);
    SockUdp::create(&mut node, UdpEp::any(7), None).unwrap();
}

#[test]
fn no_route_is_reported() {
    let mut node = loopback_node();
    let s = SockUdp::create(&mut node, UdpEp::any(7), None).unwrap();
    let dst: Ipv6Addr = "2001:db8::1".parse().unwrap();
    assert!(matches!(
        s.send(&mut node, b"x", Some(UdpEp::new(dst, 7))),
        Err(SockError::Route(_))
    ));
    assert_eq!(node.pktbuf().stats().used, 0);
}

#[test]
fn raw_sockets_are_isolated() {
    let mut node = loopback_node();
    let a = SockIp::create(&mut node, IpEp::new(Ipv6Addr::UNSPECIFIED, 253), None).unwrap();
    let b = SockIp::create(&mut node, IpEp::new(Ipv6Addr::UNSPECIFIED, 254), None).unwrap();
    a.send(&mut node, b"to-a", Some(own())).unwrap();
    b.send(&mut node, b"to-b", Some(own())).unwrap();
    let mut buf = [0u8; 16];
    let (n, from) = a.recv(&mut node, &mut buf, NS_PER_SEC).unwrap();
    assert_eq!(&buf[..n], b"to-a");
    assert_eq!(from, IpEp::new(own(), 253));
    let (n, _) = b.recv(&mut node, &mut buf, NS_PER_SEC).unwrap();
    assert_eq!(&buf[..n], b"to-b");
    assert_eq!(a.recv(&mut node, &mut buf, NS_PER_MS), Err(SockError::Timeout));
}

#[test]
fn posix_wrapper_matches_sock() {
    let (mut node, _) = reflector_node();
    let mut srv = PosixUdpSocket::socket();
    srv.bind(&mut node, Ipv6Addr::UNSPECIFIED, 5683).unwrap();
    srv.set_recv_timeout(Some(NS_PER_SEC));
    let mut cli = PosixUdpSocket::socket();
    cli.connect(own(), 5683);
    for n in [1usize, 200, 1000] {
        let p = payload(n);
        cli.send(&mut node, &p).unwrap();
        let mut buf = vec![0u8; 1500];
        let (got, from, port) = srv.recvfrom(&mut node, &mut buf).unwrap();
        assert_eq!(&buf[..got], &p[..]);
        assert_eq!(from, own());
        assert_eq!(Some(port), cli.local_port());
    }
}
