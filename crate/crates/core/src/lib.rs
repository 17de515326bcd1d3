pub mod bench;
pub mod cost;
pub mod netapi;
pub mod netdev;
pub mod netreg;
pub mod pktbuf;
pub mod sched;
pub mod types;
pub mod ipv6;
pub mod netif;
pub mod sixlowpan;
pub mod sock;
pub mod stack;
pub mod udp;
