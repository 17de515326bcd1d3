//! Acceptance suite. Prints one line per criterion and exits nonzero if
//! any criterion fails.

use std::collections::HashMap;
use std::net::Ipv6Addr;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use snipnet::bench::{self, BenchConfig, DeviceKind, EntryLayer};
use snipnet::cost::Layer;
use snipnet::netapi::{NetMsg, PktKind};
use snipnet::netdev::medium::MediumParams;
use snipnet::netdev::reflector::Reflector;
use snipnet::netreg::NetregEntry;
use snipnet::pktbuf::{self, PktBuf, PktBufError, SnipId};
use snipnet::sched::{Node, NodeConfig};
use snipnet::sixlowpan::{self, Reassembler};
use snipnet::sock::{SockUdp, UdpEp};
use snipnet::types::{L2Addr, NetType, NS_PER_SEC};
use snipnet::udp;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

// Link-layer payload per frame: 127-byte PSDU minus 9-byte MAC header and
// 2-byte FCS.
const L2_MTU: usize = 127 - 9 - 2;
const IPV6_HDR: usize = 40;
const UDP_HDR: usize = 8;

/// Frames needed for an IPv6 datagram of `len` bytes, from the header
/// sizes alone: 1-byte dispatch, 4-byte FRAG1, 5-byte FRAGN, offsets in
/// 8-byte units.
fn oracle_frames(len: usize) -> usize {
    if len < L2_MTU {
        return 1;
    }
    let first = (L2_MTU - 4 - 1) / 8 * 8;
    let step = (L2_MTU - 5) / 8 * 8;
    let last_room = L2_MTU - 5;
    let rest = len - first;
    if rest <= last_room {
        2
    } else {
        2 + (rest - last_room).div_ceil(step)
    }
}

fn c1_fragment_count() -> Outcome {
    let len = 1000 + UDP_HDR + IPV6_HDR;
    let model = bench::HeaderModel::default();
    let counts = [
        ("oracle", oracle_frames(len)),
        ("header model", model.fragment_count(len)),
        ("fragmenter", sixlowpan::fragment(&vec![0u8; len], model.l2_mtu(), 1).map_err(|e| e.to_string())?.len()),
    ];
    let cfg = BenchConfig {
        entry: EntryLayer::SockUdp,
        device: DeviceKind::Reflector,
        repetitions: 1,
        ..BenchConfig::default()
    };
    let sent = bench::measure(&cfg, 1000).map_err(|e| e.to_string())?.frames;
    let all: Vec<_> = counts.iter().copied().chain([("stack", sent)]).collect();
    let msg = all.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
    if all.iter().all(|(_, v)| *v == 11) {
        Ok(format!("1048-byte datagram: {msg}"))
    } else {
        Err(format!("expected 11 frames: {msg}"))
    }
}

fn c2_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut sizes = vec![1usize, 67, 68, 1232];
    while sizes.len() < 32 {
        let s = rng.gen_range(1..=1232);
        if !sizes.contains(&s) {
            sizes.push(s);
        }
    }
    sizes.sort_unstable();
    let pb = PktBuf::new(16 * 1024);
    let (src, dst) = (L2Addr::short(1), L2Addr::short(2));
    let mut re = Reassembler::new();
    let mut tag = 0u16;
    let mut checked = 0;
    for &p in &sizes {
        let dgram: Vec<u8> = (0..p + UDP_HDR + IPV6_HDR).map(|_| rng.gen()).collect();
        for perm in 0..100 {
            tag = tag.wrapping_add(1);
            let mut frames = sixlowpan::fragment(&dgram, L2_MTU, tag).map_err(|e| e.to_string())?;
            frames.shuffle(&mut rng);
            let mut done = None;
            for (i, f) in frames.iter().enumerate() {
                match re.push(&pb, f, src, dst, 0) {
                    Ok(Some(d)) if i + 1 == frames.len() => done = Some(d),
                    Ok(None) if i + 1 < frames.len() => {}
                    other => return Err(format!("payload {p} perm {perm} frame {i}: {other:?}")),
                }
            }
            let d = done.ok_or_else(|| format!("payload {p} perm {perm}: incomplete"))?;
            let got = pb.flatten(d).map_err(|e| e.to_string())?;
            pb.release(d).map_err(|e| e.to_string())?;
            if got != dgram {
                return Err(format!("payload {p} perm {perm}: bytes differ"));
            }
            checked += 1;
        }
    }
    if pb.stats().used != 0 {
        return Err(format!("{} arena bytes leaked", pb.stats().used));
    }
    Ok(format!("{} sizes, {checked} shuffled reassemblies identical", sizes.len()))
}

#[derive(Clone)]
struct ShadowSnip {
    users: u32,
    data: Vec<u8>,
    next: Option<SnipId>,
    chunk: Option<u64>,
}

/// Independent model of the arena: reference counts, bytes, links and the
/// bytes each chunk occupies.
#[derive(Default)]
struct Ledger {
    snips: HashMap<SnipId, ShadowSnip>,
    chunks: HashMap<u64, (usize, u32)>,
    next_chunk: u64,
    owned: Vec<SnipId>,
}

impl Ledger {
    fn new_chunk(&mut self, len: usize) -> Option<u64> {
        (len > 0).then(|| {
            self.next_chunk += 1;
            self.chunks.insert(self.next_chunk, (pktbuf::data_cost(len), 1));
            self.next_chunk
        })
    }

    fn unref(&mut self, c: Option<u64>) {
        if let Some(c) = c {
            let e = self.chunks.get_mut(&c).unwrap();
            e.1 -= 1;
            if e.1 == 0 {
                self.chunks.remove(&c);
            }
        }
    }

    fn used(&self) -> usize {
        self.snips.len() * pktbuf::descriptor_cost() + self.chunks.values().map(|c| c.0).sum::<usize>()
    }

    fn release(&mut self, id: SnipId) {
        let mut cur = Some(id);
        while let Some(i) = cur {
            let s = self.snips.get_mut(&i).unwrap();
            s.users -= 1;
            if s.users > 0 {
                break;
            }
            let s = self.snips.remove(&i).unwrap();
            self.unref(s.chunk);
            cur = s.next;
        }
    }

    fn chain(&self, id: SnipId) -> Vec<SnipId> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(i) = cur {
            out.push(i);
            cur = self.snips[&i].next;
        }
        out
    }

    fn compare(&self, pb: &PktBuf, ids: &[SnipId]) -> Result<(), String> {
        for id in ids {
            let Some(s) = self.snips.get(id) else { continue };
            let users = pb.users(*id).map_err(|e| format!("{id}: {e}"))?;
            let next = pb.next(*id).map_err(|e| format!("{id}: {e}"))?;
            let data = pb.with_data(*id, |d| d.to_vec()).map_err(|e| format!("{id}: {e}"))?;
            if users != s.users || next != s.next || data != s.data {
                return Err(format!(
                    "{id}: users {users}/{} next {next:?}/{:?} data equal {}",
                    s.users,
                    s.next,
                    data == s.data
                ));
            }
        }
        let st = pb.stats();
        if st.live_snips != self.snips.len() || st.used != self.used() {
            return Err(format!(
                "arena live {} used {} vs ledger live {} used {}",
                st.live_snips,
                st.used,
                self.snips.len(),
                self.used()
            ));
        }
        Ok(())
    }
}

fn c3_ledger() -> Outcome {
    const OPS: usize = 100_000;
    let pb = PktBuf::new(32 * 1024);
    let mut l = Ledger::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = [0usize; 6];
    let mut oom = 0;
    for op in 0..OPS {
        let pick = |rng: &mut ChaCha8Rng, l: &Ledger| rng.gen_range(0..l.owned.len());
        let choice = if l.owned.is_empty() {
            0
        } else if l.owned.len() > 48 {
            4
        } else {
            rng.gen_range(0..6)
        };
        let mut touched: Vec<SnipId> = Vec::new();
        match choice {
            0 => {
                let next = (!l.owned.is_empty() && rng.gen_bool(0.3)).then(|| pick(&mut rng, &l));
                let len = rng.gen_range(0..200);
                let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
                let next_id = next.map(|i| l.owned[i]);
                match pb.add(next_id, &data, NetType::Undef) {
                    Ok(id) => {
                        if let Some(i) = next {
                            l.owned.swap_remove(i);
                        }
                        let chunk = l.new_chunk(len);
                        l.snips.insert(id, ShadowSnip { users: 1, data, next: next_id, chunk });
                        l.owned.push(id);
                        touched.push(id);
                    }
                    Err(PktBufError::OutOfMemory { .. }) => oom += 1,
                    Err(e) => return Err(format!("op {op}: add failed: {e}")),
                }
            }
            1 => {
                let i = pick(&mut rng, &l);
                let id = l.owned[i];
                let s = &l.snips[&id];
                if s.users == 1 && !s.data.is_empty() {
                    let size = rng.gen_range(1..=s.data.len());
                    match pb.mark(id, size, NetType::Udp) {
                        Ok(h) => {
                            let s = l.snips.get_mut(&id).unwrap();
                            let head: Vec<u8> = s.data.drain(..size).collect();
                            let chunk = s.chunk;
                            let old_next = s.next.replace(h);
                            if s.data.is_empty() {
                                s.chunk = None;
                            } else {
                                l.chunks.get_mut(&chunk.unwrap()).unwrap().1 += 1;
                            }
                            l.snips.insert(h, ShadowSnip { users: 1, data: head, next: old_next, chunk });
                            touched.extend([id, h]);
                        }
                        Err(PktBufError::OutOfMemory { .. }) => oom += 1,
                        Err(e) => return Err(format!("op {op}: mark failed: {e}")),
                    }
                }
            }
            2 => {
                let i = pick(&mut rng, &l);
                let id = l.owned[i];
                pb.hold(id, 1).map_err(|e| format!("op {op}: hold: {e}"))?;
                l.snips.get_mut(&id).unwrap().users += 1;
                l.owned.push(id);
                touched.push(id);
            }
            3 => {
                let i = pick(&mut rng, &l);
                let id = l.owned[i];
                match pb.start_write(id) {
                    Ok(w) if l.snips[&id].users == 1 => {
                        if w != id {
                            return Err(format!("op {op}: exclusive snip was copied"));
                        }
                        touched.push(id);
                    }
                    Ok(w) => {
                        let orig = l.chain(id);
                        let copies = pb.chain(w).map_err(|e| e.to_string())?;
                        if copies.len() != orig.len() {
                            return Err(format!("op {op}: copy has {} snips, expected {}", copies.len(), orig.len()));
                        }
                        for (k, (&o, &c)) in orig.iter().zip(&copies).enumerate() {
                            let data = l.snips[&o].data.clone();
                            let chunk = l.new_chunk(data.len());
                            let next = copies.get(k + 1).copied();
                            l.snips.insert(c, ShadowSnip { users: 1, data, next, chunk });
                        }
                        l.snips.get_mut(&id).unwrap().users -= 1;
                        l.owned[i] = w;
                        touched.push(id);
                        touched.extend(copies);
                    }
                    Err(PktBufError::OutOfMemory { .. }) => oom += 1,
                    Err(e) => return Err(format!("op {op}: start_write: {e}")),
                }
            }
            4 => {
                let i = pick(&mut rng, &l);
                let id = l.owned.swap_remove(i);
                touched = l.chain(id);
                pb.release(id).map_err(|e| format!("op {op}: release: {e}"))?;
                l.release(id);
            }
            _ => {
                let i = pick(&mut rng, &l);
                let id = l.owned[i];
                let s = &l.snips[&id];
                if s.users == 1 && !s.data.is_empty() {
                    let off = rng.gen_range(0..s.data.len());
                    let n = rng.gen_range(1..=s.data.len() - off);
                    let bytes: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
                    pb.write_at(id, off, &bytes).map_err(|e| format!("op {op}: write: {e}"))?;
                    l.snips.get_mut(&id).unwrap().data[off..off + n].copy_from_slice(&bytes);
                    touched.push(id);
                }
            }
        }
        counts[choice] += 1;
        l.compare(&pb, &touched).map_err(|e| format!("op {op}: {e}"))?;
        if op % 1000 == 999 {
            let all: Vec<_> = l.snips.keys().copied().collect();
            l.compare(&pb, &all).map_err(|e| format!("op {op} (full): {e}"))?;
        }
    }
    while let Some(id) = l.owned.pop() {
        pb.release(id).map_err(|e| e.to_string())?;
        l.release(id);
    }
    let st = pb.stats();
    if st.used != 0 || !l.snips.is_empty() || st.live_snips != 0 {
        return Err(format!("after drain: used {} live {} ledger {}", st.used, st.live_snips, l.snips.len()));
    }
    Ok(format!(
        "{OPS} ops (add {} mark {} hold {} start_write {} release {} write {}, {oom} out-of-memory), used 0",
        counts[0], counts[1], counts[2], counts[3], counts[4], counts[5]
    ))
}

fn c4_copy_on_write() -> Outcome {
    const CASES: usize = 2000;
    let pb = PktBuf::new(32 * 1024);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut copied = 0;
    for case in 0..CASES {
        // shared tail plus a private prefix on one holder
        let tail_parts = rng.gen_range(1..=3);
        let mut head = None;
        for _ in 0..tail_parts {
            let n = rng.gen_range(0..64);
            let data: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            head = Some(pb.add(head, &data, NetType::Undef).map_err(|e| e.to_string())?);
        }
        let mut writer = head.unwrap();
        let others = rng.gen_range(1..=3);
        pb.hold(writer, others).map_err(|e| e.to_string())?;
        let mut holders = vec![writer; others as usize];
        if rng.gen_bool(0.5) {
            // another packet links to the same chain
            pb.hold(writer, 1).map_err(|e| e.to_string())?;
            let n = rng.gen_range(1..32);
            let data: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            holders.push(pb.add(Some(writer), &data, NetType::Udp).map_err(|e| e.to_string())?);
        }
        if rng.gen_bool(0.3) {
            let n = rng.gen_range(1..32);
            let data: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            // the writer's view gets a private header in front
            pb.hold(writer, 1).map_err(|e| e.to_string())?;
            let private = pb.add(Some(writer), &data, NetType::Ipv6).map_err(|e| e.to_string())?;
            pb.release(writer).map_err(|e| e.to_string())?;
            writer = private;
        }
        let before: Vec<Vec<u8>> = holders
            .iter()
            .map(|h| pb.flatten(*h))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let w = pb.start_write(writer).map_err(|e| e.to_string())?;
        if w != writer {
            copied += 1;
        }
        for s in pb.chain(w).map_err(|e| e.to_string())? {
            if pb.users(s).map_err(|e| e.to_string())? != 1 {
                break;
            }
            let n = pb.len(s).map_err(|e| e.to_string())?;
            let junk: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            pb.write_at(s, 0, &junk).map_err(|e| e.to_string())?;
        }
        for (h, b) in holders.iter().zip(&before) {
            if pb.flatten(*h).map_err(|e| e.to_string())? != *b {
                return Err(format!("case {case}: holder {h} saw the writer's bytes"));
            }
        }
        pb.release(w).map_err(|e| e.to_string())?;
        for h in holders {
            pb.release(h).map_err(|e| e.to_string())?;
        }
        if pb.stats().used != 0 {
            return Err(format!("case {case}: {} bytes leaked", pb.stats().used));
        }
    }
    Ok(format!("{CASES} shared-chain cases ({copied} copied), other holders unchanged"))
}

fn c5_step_function() -> Outcome {
    let cfg = BenchConfig {
        entry: EntryLayer::SockUdp,
        device: DeviceKind::Reflector,
        repetitions: 1,
        ..BenchConfig::default()
    };
    let mut prev: Option<(f64, usize)> = None;
    let mut steps = Vec::new();
    let mut increments = Vec::new();
    for p in 1..=bench::MAX_BENCH_PAYLOAD {
        let m = bench::measure(&cfg, p).map_err(|e| format!("payload {p}: {e}"))?;
        let frames = oracle_frames(p + UDP_HDR + IPV6_HDR);
        if m.frames != frames {
            return Err(format!("payload {p}: {} frames sent, oracle {frames}", m.frames));
        }
        if let Some((g, f)) = prev {
            if m.goodput_bps < g {
                steps.push(p);
            }
            if frames > f {
                increments.push(p);
            }
        }
        prev = Some((m.goodput_bps, frames));
    }
    if steps == increments {
        Ok(format!("{} downward steps, all at fragment increments {:?}", steps.len(), steps))
    } else {
        Err(format!("steps at {steps:?}, fragment increments at {increments:?}"))
    }
}

fn c6_theory_bound() -> Outcome {
    let measure = |medium: &MediumParams, p: usize| -> Result<(f64, f64), String> {
        let cfg = BenchConfig {
            entry: EntryLayer::SockUdp,
            device: DeviceKind::Medium,
            repetitions: 10,
            medium: medium.clone(),
            ..BenchConfig::default()
        };
        let m = bench::measure(&cfg, p).map_err(|e| format!("payload {p}: {e}"))?;
        Ok((m.goodput_bps, theory(medium, p)))
    };
    let plain = MediumParams {
        loss_rate: 0.0,
        csma_enabled: false,
        ack_enabled: false,
        ..MediumParams::default()
    };
    let mut worst: f64 = 0.0;
    for p in [20, 100, 500, 1000, 1232] {
        let (g, t) = measure(&plain, p)?;
        let dev = (g - t).abs() / t;
        worst = worst.max(dev);
        if dev > 0.05 {
            return Err(format!("payload {p}: {g:.1} bit/s vs bound {t:.1} ({:.2}%)", dev * 100.0));
        }
    }
    let mac = MediumParams {
        csma_enabled: true,
        ack_enabled: true,
        ..plain
    };
    let mut payloads: Vec<usize> = (1..=bench::MAX_BENCH_PAYLOAD).step_by(41).collect();
    payloads.extend([20, 100, 500, 1000, 1232]);
    let mut max_ratio: f64 = 0.0;
    for &p in &payloads {
        let (g, t) = measure(&mac, p)?;
        max_ratio = max_ratio.max(g / t);
        if g >= t {
            return Err(format!("payload {p} with CSMA+ACK: {g:.1} bit/s not below bound {t:.1}"));
        }
    }
    Ok(format!(
        "plain MAC worst deviation {:.3}%; CSMA+ACK below bound at {} payloads (max ratio {max_ratio:.3})",
        worst * 100.0,
        payloads.len()
    ))
}

/// Airtime bound computed from the frame lengths the oracle predicts:
/// bytes take 2 symbols each, frames up to 18 bytes are followed by SIFS.
fn theory(m: &MediumParams, payload: usize) -> f64 {
    let len = payload + UDP_HDR + IPV6_HDR;
    let n = oracle_frames(len);
    let mut symbols = 0.0;
    let mut sent = 0;
    for k in 0..n {
        let (hdr, carried) = if n == 1 {
            (1, len)
        } else if k == 0 {
            (4 + 1, (L2_MTU - 4 - 1) / 8 * 8)
        } else if k + 1 < n {
            (5, (L2_MTU - 5) / 8 * 8)
        } else {
            (5, len - sent)
        };
        sent += carried;
        let psdu = hdr + carried + 9 + 2;
        let ifs = if psdu <= 18 { 12.0 } else { 40.0 };
        symbols += (6 + psdu) as f64 * 2.0 + ifs;
    }
    8.0 * payload as f64 * m.symbol_rate as f64 / symbols
}

fn c7_layer_ordering() -> Outcome {
    let cfg = BenchConfig {
        entry: EntryLayer::SockUdp,
        device: DeviceKind::Reflector,
        repetitions: 5,
        ..BenchConfig::default()
    };
    let m = bench::measure(&cfg, 1000).map_err(|e| e.to_string())?;
    let c = |l: Layer| m.layer_cost_ops[l as usize];
    let (lo, ip, u) = (c(Layer::Sixlowpan), c(Layer::Ipv6), c(Layer::Udp));
    let msg = format!("6lo {lo} > ipv6 {ip} > udp {u} ops/packet");
    if lo > ip && ip > u {
        Ok(msg)
    } else {
        Err(format!("ordering violated: {msg}"))
    }
}

fn c8_fan_out() -> Outcome {
    let mut detail = Vec::new();
    for n in 0..=3usize {
        let mut node = Node::bare(NodeConfig::default());
        let eps: Vec<_> = (0..n).map(|i| node.spawn_mailbox(&format!("rx{i}"), 8)).collect();
        for &e in &eps {
            node.netreg()
                .register(NetregEntry::new(NetType::Udp, 5683, e))
                .map_err(|e| e.to_string())?;
        }
        let pkt = node.pktbuf().add(None, b"fan-out", NetType::Undef).map_err(|e| e.to_string())?;
        let got = node.netapi_dispatch(NetType::Udp, 5683, PktKind::Rcv, pkt);
        node.run_until_idle();
        if got != n {
            return Err(format!("n={n}: dispatch returned {got}"));
        }
        if n == 0 {
            if node.pktbuf().is_live(pkt) || node.pktbuf().stats().used != 0 {
                return Err("n=0: packet not freed".into());
            }
            detail.push("0:freed".to_string());
            continue;
        }
        let users = node.pktbuf().users(pkt).map_err(|e| e.to_string())?;
        if users as usize != n {
            return Err(format!("n={n}: reference count {users}"));
        }
        for &e in &eps {
            match node.pop_message(e) {
                Some(NetMsg::Rcv(p)) if p == pkt => node.pktbuf().release(p).map_err(|e| e.to_string())?,
                other => return Err(format!("n={n}: receiver got {other:?}")),
            }
        }
        if node.pktbuf().stats().used != 0 {
            return Err(format!("n={n}: leaked after releases"));
        }
        detail.push(format!("{n}:{users}"));
    }
    Ok(format!("receivers:refcount {}", detail.join(" ")))
}

/// Byte-wise one's-complement sum with end-around carry after each word.
fn ref_sum(bytes: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut i = 0;
    while i < bytes.len() {
        let hi = bytes[i] as u32;
        let lo = if i + 1 < bytes.len() { bytes[i + 1] as u32 } else { 0 };
        sum += (hi << 8) | lo;
        if sum > 0xffff {
            sum = (sum & 0xffff) + 1;
        }
        i += 2;
    }
    sum as u16
}

fn ref_pseudo(src: &Ipv6Addr, dst: &Ipv6Addr, seg: &[u8]) -> Vec<u8> {
    let mut v = Vec::with_capacity(40 + seg.len() + 1);
    v.extend_from_slice(&src.octets());
    v.extend_from_slice(&dst.octets());
    v.extend_from_slice(&(seg.len() as u32).to_be_bytes());
    v.extend_from_slice(&[0, 0, 0, 17]);
    v.extend_from_slice(seg);
    v[40 + 6] = 0;
    v[40 + 7] = 0;
    v
}

fn ref_checksum(src: &Ipv6Addr, dst: &Ipv6Addr, seg: &[u8]) -> u16 {
    match !ref_sum(&ref_pseudo(src, dst, seg)) {
        0 => 0xffff,
        c => c,
    }
}

fn c9_checksum() -> Outcome {
    const CASES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut odd, mut forced) = (0, 0);
    for case in 0..CASES {
        let src = Ipv6Addr::from(rng.gen::<u128>());
        let dst = Ipv6Addr::from(rng.gen::<u128>());
        let len = rng.gen_range(0..1300);
        let mut seg: Vec<u8> = (0..UDP_HDR + len).map(|_| rng.gen()).collect();
        let seg_len = seg.len() as u16;
        seg[4..6].copy_from_slice(&seg_len.to_be_bytes());
        if case % 10 == 0 && len >= 2 {
            // force a raw sum of 0xffff so the inverted value is zero
            let w = UDP_HDR + (rng.gen_range(0..len / 2) * 2);
            seg[w] = 0;
            seg[w + 1] = 0;
            let rest = ref_sum(&ref_pseudo(&src, &dst, &seg));
            seg[w..w + 2].copy_from_slice(&(!rest).to_be_bytes());
            if ref_sum(&ref_pseudo(&src, &dst, &seg)) != 0xffff {
                return Err(format!("case {case}: could not build zero-checksum datagram"));
            }
            forced += 1;
        }
        if seg.len() % 2 == 1 {
            odd += 1;
        }
        let want = ref_checksum(&src, &dst, &seg);
        let got = udp::udp_checksum(&src, &dst, &seg);
        if got != want {
            return Err(format!("case {case} len {}: {got:#06x} vs reference {want:#06x}", seg.len()));
        }
        seg[6..8].copy_from_slice(&got.to_be_bytes());
        if udp::udp_verify(&src, &dst, &seg).is_err() {
            return Err(format!("case {case}: datagram with computed checksum rejected"));
        }
    }
    Ok(format!("{CASES} datagrams match ({odd} odd lengths, {forced} with 0x0000 sent as 0xffff)"))
}

fn c10_echo() -> Outcome {
    let own: Ipv6Addr = "fe80::1".parse().unwrap();
    let mut node = Node::new(NodeConfig::default());
    let iface = node.add_interface(Box::new(Reflector::new(1)), true).map_err(|e| e.to_string())?;
    node.set_ipv6_addr(iface, own).map_err(|e| e.to_string())?;
    node.add_route(own, 128, Ipv6Addr::UNSPECIFIED, iface).map_err(|e| e.to_string())?;
    node.add_neighbor(own, L2Addr::short(2), iface).map_err(|e| e.to_string())?;
    let s = SockUdp::create(&mut node, UdpEp::any(7), None).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut frames = Vec::new();
    for n in [1usize, 20, 102, 103, 1000] {
        let p: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
        let before = node.netif(iface).unwrap().stats().tx_frames;
        s.send(&mut node, &p, Some(UdpEp::new(own, 7))).map_err(|e| format!("{n}: {e}"))?;
        let mut buf = vec![0u8; 2048];
        let (got, from) = s.recv(&mut node, &mut buf, NS_PER_SEC).map_err(|e| format!("{n}: {e}"))?;
        if buf[..got] != p[..] || from != UdpEp::new(own, 7) {
            return Err(format!("payload {n}: echo differs"));
        }
        frames.push(format!("{n}B/{}f", node.netif(iface).unwrap().stats().tx_frames - before));
    }
    Ok(format!("identical echoes: {}", frames.join(" ")))
}

fn c11_determinism() -> Outcome {
    let run = || -> Result<String, String> {
        let mut out = String::new();
        for (entry, device, medium) in [
            (EntryLayer::SockUdp, DeviceKind::Reflector, MediumParams::default()),
            (
                EntryLayer::Udp,
                DeviceKind::Medium,
                MediumParams {
                    csma_enabled: true,
                    ack_enabled: true,
                    loss_rate: 0.1,
                    ..MediumParams::default()
                },
            ),
        ] {
            let cfg = BenchConfig {
                entry,
                device,
                payloads: vec![0, 20, 100, 500, 1000],
                repetitions: 5,
                seed: 11,
                medium,
                ..BenchConfig::default()
            };
            let mut rows = bench::bench_layer(&cfg).map_err(|e| e.to_string())?;
            rows.extend(bench::bench_goodput(&cfg).map_err(|e| e.to_string())?);
            out.push_str(&bench::to_csv(&rows).map_err(|e| e.to_string())?);
        }
        Ok(out)
    };
    let (a, b) = (run()?, run()?);
    if a == b {
        Ok(format!("{} CSV bytes identical across runs", a.len()))
    } else {
        Err("CSV output differs between identical runs".into())
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("fragment count", c1_fragment_count, Some(Duration::from_secs(1))),
        ("fragment round trip", c2_round_trip, Some(Duration::from_secs(60))),
        ("packet-buffer ledger", c3_ledger, Some(Duration::from_secs(30))),
        ("copy-on-write isolation", c4_copy_on_write, None),
        ("goodput step function", c5_step_function, None),
        ("theory bound adherence", c6_theory_bound, None),
        ("layer-cost ordering", c7_layer_ordering, None),
        ("dispatch fan-out", c8_fan_out, None),
        ("checksum oracle", c9_checksum, None),
        ("end-to-end echo", c10_echo, None),
        ("determinism", c11_determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let mut outcome = f();
        let took = t.elapsed();
        if let (Ok(msg), Some(limit)) = (&outcome, limit) {
            if took > limit {
                outcome = Err(format!("{msg}; took {took:.2?}, limit {limit:?}"));
            }
        }
        match outcome {
            Ok(msg) => println!("criterion {:2} PASS {name}: {msg} [{took:.2?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:2} FAIL {name}: {msg} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
