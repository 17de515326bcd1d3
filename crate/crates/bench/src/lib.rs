//! Workloads shared by the wall-clock benchmarks.

use snipnet::bench::{BenchConfig, DeviceKind, EntryLayer};
use snipnet::pktbuf::PktBuf;
use snipnet::types::NetType;

/// Payload sizes covering one frame, two frames and a heavily fragmented
/// datagram.
pub const PAYLOADS: [usize; 3] = [20, 100, 1000];

/// One packet per run, entering at `entry`.
pub fn config(entry: EntryLayer, device: DeviceKind) -> BenchConfig {
    BenchConfig {
        entry,
        device,
        repetitions: 1,
        ..BenchConfig::default()
    }
}

/// Entry/device pairs worth timing.
pub fn matrix() -> Vec<(EntryLayer, DeviceKind)> {
    let mut out = Vec::new();
    for d in DeviceKind::ALL {
        for e in EntryLayer::ALL {
            if config(e, d).validate().is_ok() {
                out.push((e, d));
            }
        }
    }
    out
}

/// Builds a header chain the way a sender does and frees it again.
pub fn chain_cycle(pb: &PktBuf, payload: &[u8]) {
    let d = pb.add(None, payload, NetType::Undef).expect("arena");
    let u = pb.add(Some(d), &[0; 8], NetType::Udp).expect("arena");
    let i = pb.add(Some(u), &[0; 40], NetType::Ipv6).expect("arena");
    pb.hold(i, 1).expect("live");
    let w = pb.start_write(i).expect("arena");
    pb.release(w).expect("live");
    pb.release(i).expect("live");
}
