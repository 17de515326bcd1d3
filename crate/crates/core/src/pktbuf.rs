//! Central packet buffer.
//!
//! Packets are stored as chains of *snips*: typed, reference-counted slices
//! carved from one statically sized arena. A snip's `users` counter counts
//! every reference to it, whether held by an endpoint or by the `next` link
//! of another snip, so several heads can share a common tail and a packet
//! forms a tree.
//!
//! Transmitted packets are kept header first (`udp -> payload`); received
//! packets are parsed with [`PktBuf::mark`], which leaves the unparsed
//! remainder at the head and appends each parsed header behind it, so a fully
//! parsed RX packet reads payload first and ends with the lowest layer.
//!
//! Allocation is first-fit over an offset-ordered free list with coalescing.
//! Every chunk is [`CHUNK_HEADER`] bytes of bookkeeping plus its payload
//! rounded up to [`ALIGN`]. A snip costs one descriptor chunk plus, if it
//! owns bytes, a data chunk; [`PktBuf::mark`] splits an existing data chunk
//! without copying.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, MutexGuard};

use thiserror::Error;

use crate::cost::CostMeter;
use crate::types::NetType;

pub const DEFAULT_CAPACITY: usize = 6144;
pub const ALIGN: usize = 8;
/// Size and free flag kept in front of every chunk.
pub const CHUNK_HEADER: usize = 8;
/// Payload of the descriptor chunk every snip owns (type, users, next, data).
pub const SNIP_DESCRIPTOR: usize = 16;
/// Occupancy below which the benchmark workload must never hit
/// `OutOfMemory`. Tunable; see the fragmentation property test.
pub const FRAGMENTATION_THRESHOLD: f64 = 0.75;

/// Arena bytes consumed by a snip descriptor.
pub const fn descriptor_cost() -> usize {
    CHUNK_HEADER + SNIP_DESCRIPTOR
}

/// Arena bytes consumed by a data chunk of `len` bytes.
pub const fn data_cost(len: usize) -> usize {
    if len == 0 {
        0
    } else {
        CHUNK_HEADER + align_up(len)
    }
}

const fn align_up(n: usize) -> usize {
    (n + ALIGN - 1) & !(ALIGN - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SnipId {
    index: u32,
    gen: u32,
}

impl std::fmt::Display for SnipId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "snip#{}.{}", self.index, self.gen)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PktBufError {
    #[error("packet buffer exhausted ({requested} bytes requested)")]
    OutOfMemory { requested: usize },
    #[error("invalid mark size {size} for snip of {len} bytes")]
    InvalidSize { size: usize, len: usize },
    #[error("snip is shared by {users} users; call start_write first")]
    SharedSnip { users: u32 },
    #[error("snip already has a successor")]
    HasNext,
    #[error("invalid or released snip handle {0}")]
    InvalidHandle(SnipId),
    #[error("release of already released snip {0}")]
    DoubleRelease(SnipId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ArenaStats {
    pub capacity: usize,
    pub used: usize,
    pub live_snips: usize,
    pub high_watermark: usize,
    /// Largest contiguous free region.
    pub largest_free: usize,
}

#[derive(Debug, Clone, Copy)]
struct Region {
    chunk: usize,
    start: usize,
    len: usize,
}

#[derive(Debug)]
struct Snip {
    next: Option<SnipId>,
    ty: NetType,
    users: u32,
    desc_chunk: usize,
    data: Option<Region>,
}

#[derive(Debug)]
struct Slot {
    gen: u32,
    snip: Option<Snip>,
}

#[derive(Debug)]
struct Chunk {
    size: usize,
    refs: u32,
}

#[derive(Debug)]
struct Arena {
    mem: Vec<u8>,
    free: BTreeMap<usize, usize>,
    chunks: HashMap<usize, Chunk>,
    slots: Vec<Slot>,
    free_slots: Vec<u32>,
    used: usize,
    high_watermark: usize,
    live: usize,
}

impl Arena {
    fn new(capacity: usize) -> Arena {
        let capacity = capacity & !(ALIGN - 1);
        let mut free = BTreeMap::new();
        if capacity > 0 {
            free.insert(0, capacity);
        }
        Arena {
            mem: vec![0; capacity],
            free,
            chunks: HashMap::new(),
            slots: Vec::new(),
            free_slots: Vec::new(),
            used: 0,
            high_watermark: 0,
            live: 0,
        }
    }

    fn alloc_chunk(&mut self, payload: usize) -> Result<usize, PktBufError> {
        let total = CHUNK_HEADER + align_up(payload);
        let found = self
            .free
            .iter()
            .find(|(_, len)| **len >= total)
            .map(|(off, len)| (*off, *len));
        let (off, len) = found.ok_or(PktBufError::OutOfMemory { requested: total })?;
        self.free.remove(&off);
        if len > total {
            self.free.insert(off + total, len - total);
        }
        self.chunks.insert(off, Chunk { size: total, refs: 1 });
        self.used += total;
        self.high_watermark = self.high_watermark.max(self.used);
        Ok(off)
    }

    fn unref_chunk(&mut self, off: usize) {
        let chunk = self.chunks.get_mut(&off).expect("chunk bookkeeping");
        chunk.refs -= 1;
        if chunk.refs > 0 {
            return;
        }
        let size = chunk.size;
        self.chunks.remove(&off);
        self.used -= size;

        let mut start = off;
        let mut len = size;
        if let Some((&prev, &plen)) = self.free.range(..off).next_back() {
            if prev + plen == off {
                self.free.remove(&prev);
                start = prev;
                len += plen;
            }
        }
        if let Some(nlen) = self.free.remove(&(off + size)) {
            len += nlen;
        }
        self.free.insert(start, len);
    }

    fn snip(&self, id: SnipId) -> Option<&Snip> {
        let slot = self.slots.get(id.index as usize)?;
        if slot.gen != id.gen {
            return None;
        }
        slot.snip.as_ref()
    }

    fn snip_mut(&mut self, id: SnipId) -> Option<&mut Snip> {
        let slot = self.slots.get_mut(id.index as usize)?;
        if slot.gen != id.gen {
            return None;
        }
        slot.snip.as_mut()
    }

    fn get(&self, id: SnipId) -> Result<&Snip, PktBufError> {
        self.snip(id).ok_or(PktBufError::InvalidHandle(id))
    }

    fn get_mut(&mut self, id: SnipId) -> Result<&mut Snip, PktBufError> {
        self.snip_mut(id).ok_or(PktBufError::InvalidHandle(id))
    }

    fn writable(&mut self, id: SnipId) -> Result<&mut Snip, PktBufError> {
        let s = self.get_mut(id)?;
        if s.users > 1 {
            return Err(PktBufError::SharedSnip { users: s.users });
        }
        Ok(s)
    }

    fn insert_snip(&mut self, snip: Snip) -> SnipId {
        self.live += 1;
        if let Some(index) = self.free_slots.pop() {
            let slot = &mut self.slots[index as usize];
            slot.snip = Some(snip);
            SnipId {
                index,
                gen: slot.gen,
            }
        } else {
            let index = self.slots.len() as u32;
            self.slots.push(Slot {
                gen: 0,
                snip: Some(snip),
            });
            SnipId { index, gen: 0 }
        }
    }

    fn remove_snip(&mut self, id: SnipId) -> Snip {
        let slot = &mut self.slots[id.index as usize];
        let snip = slot.snip.take().expect("live snip");
        slot.gen = slot.gen.wrapping_add(1);
        self.free_slots.push(id.index);
        self.live -= 1;
        snip
    }

    /// Allocates a descriptor plus `len` data bytes, without initialising
    /// the data. Nothing is leaked on failure.
    fn alloc_snip(
        &mut self,
        next: Option<SnipId>,
        len: usize,
        ty: NetType,
    ) -> Result<SnipId, PktBufError> {
        let desc_chunk = self.alloc_chunk(SNIP_DESCRIPTOR)?;
        let data = if len > 0 {
            match self.alloc_chunk(len) {
                Ok(chunk) => Some(Region {
                    chunk,
                    start: chunk + CHUNK_HEADER,
                    len,
                }),
                Err(e) => {
                    self.unref_chunk(desc_chunk);
                    return Err(e);
                }
            }
        } else {
            None
        };
        Ok(self.insert_snip(Snip {
            next,
            ty,
            users: 1,
            desc_chunk,
            data,
        }))
    }

    fn data(&self, s: &Snip) -> &[u8] {
        match s.data {
            Some(r) => &self.mem[r.start..r.start + r.len],
            None => &[],
        }
    }

    fn free_one(&mut self, id: SnipId) -> Option<SnipId> {
        let snip = self.remove_snip(id);
        self.unref_chunk(snip.desc_chunk);
        if let Some(r) = snip.data {
            self.unref_chunk(r.chunk);
        }
        snip.next
    }

    fn largest_free(&self) -> usize {
        self.free.values().copied().max().unwrap_or(0)
    }
}

/// The shared, internally synchronised packet buffer.
#[derive(Debug)]
pub struct PktBuf {
    arena: Mutex<Arena>,
    capacity: usize,
    meter: Option<Arc<CostMeter>>,
}

impl Default for PktBuf {
    fn default() -> Self {
        PktBuf::new(DEFAULT_CAPACITY)
    }
}

fn invalid(op: &str, err: PktBufError) -> PktBufError {
    if cfg!(debug_assertions) {
        panic!("pktbuf: {op}: {err}");
    }
    err
}

impl PktBuf {
    pub fn new(capacity: usize) -> PktBuf {
        PktBuf {
            arena: Mutex::new(Arena::new(capacity)),
            capacity: capacity & !(ALIGN - 1),
            meter: None,
        }
    }

    pub fn with_meter(capacity: usize, meter: Arc<CostMeter>) -> PktBuf {
        PktBuf {
            meter: Some(meter),
            ..PktBuf::new(capacity)
        }
    }

    fn lock(&self) -> MutexGuard<'_, Arena> {
        self.arena.lock().expect("pktbuf lock poisoned")
    }

    fn charge(&self, bytes: usize) {
        if let Some(m) = &self.meter {
            m.bytes(bytes);
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Allocates a new snip holding a copy of `data`, prepended before
    /// `next`. Ownership of the caller's reference to `next` moves into the
    /// new snip; on error the caller still owns it.
    pub fn add(
        &self,
        next: Option<SnipId>,
        data: &[u8],
        ty: NetType,
    ) -> Result<SnipId, PktBufError> {
        let mut a = self.lock();
        if let Some(n) = next {
            a.get(n)?;
        }
        let id = a.alloc_snip(next, data.len(), ty)?;
        if let Some(r) = a.get(id)?.data {
            a.mem[r.start..r.start + r.len].copy_from_slice(data);
        }
        drop(a);
        self.charge(data.len());
        Ok(id)
    }

    /// Like [`PktBuf::add`] but reserves `size` zeroed bytes.
    pub fn add_zeroed(
        &self,
        next: Option<SnipId>,
        size: usize,
        ty: NetType,
    ) -> Result<SnipId, PktBufError> {
        let mut a = self.lock();
        if let Some(n) = next {
            a.get(n)?;
        }
        let id = a.alloc_snip(next, size, ty)?;
        if let Some(r) = a.get(id)?.data {
            a.mem[r.start..r.start + r.len].fill(0);
        }
        Ok(id)
    }

    /// Splits the first `size` bytes of a received snip into a new header
    /// snip of type `ty`. The handle passed in keeps the remainder (possibly
    /// empty) and links to the new header, which takes over the old
    /// successor. No bytes move.
    pub fn mark(&self, snip: SnipId, size: usize, ty: NetType) -> Result<SnipId, PktBufError> {
        let mut a = self.lock();
        let s = a.writable(snip)?;
        let len = s.data.map_or(0, |r| r.len);
        if size == 0 || size > len {
            return Err(PktBufError::InvalidSize { size, len });
        }
        let region = s.data.expect("non-empty");
        let old_next = s.next;

        let desc_chunk = a.alloc_chunk(SNIP_DESCRIPTOR)?;
        if size < len {
            a.chunks.get_mut(&region.chunk).expect("chunk").refs += 1;
        }
        let header = a.insert_snip(Snip {
            next: old_next,
            ty,
            users: 1,
            desc_chunk,
            data: Some(Region {
                chunk: region.chunk,
                start: region.start,
                len: size,
            }),
        });
        let s = a.get_mut(snip)?;
        s.data = (size < len).then_some(Region {
            chunk: region.chunk,
            start: region.start + size,
            len: len - size,
        });
        s.next = Some(header);
        Ok(header)
    }

    pub fn hold(&self, snip: SnipId, count: u32) -> Result<(), PktBufError> {
        let mut a = self.lock();
        match a.snip_mut(snip) {
            Some(s) => {
                s.users += count;
                Ok(())
            }
            None => {
                drop(a);
                Err(invalid("hold", PktBufError::InvalidHandle(snip)))
            }
        }
    }

    /// Drops one reference. A snip whose count reaches zero is freed and
    /// the release continues down its `next` chain.
    pub fn release(&self, snip: SnipId) -> Result<(), PktBufError> {
        let mut a = self.lock();
        if a.snip(snip).is_none() {
            drop(a);
            return Err(invalid("release", PktBufError::DoubleRelease(snip)));
        }
        let mut cur = Some(snip);
        while let Some(id) = cur {
            let s = a.snip_mut(id).expect("chain link to live snip");
            s.users -= 1;
            if s.users > 0 {
                break;
            }
            cur = a.free_one(id);
        }
        Ok(())
    }

    /// Returns a handle the caller may write through. A shared snip is
    /// duplicated together with everything reachable from it; the caller's
    /// reference to the original is given up.
    pub fn start_write(&self, snip: SnipId) -> Result<SnipId, PktBufError> {
        let mut a = self.lock();
        let users = a.get(snip)?.users;
        if users == 1 {
            return Ok(snip);
        }

        let mut chain = Vec::new();
        let mut cur = Some(snip);
        while let Some(id) = cur {
            chain.push(id);
            cur = a.get(id)?.next;
        }

        let mut created: Vec<SnipId> = Vec::with_capacity(chain.len());
        let mut next = None;
        let mut copied = 0;
        for &orig in chain.iter().rev() {
            let (len, ty) = {
                let s = a.get(orig)?;
                (s.data.map_or(0, |r| r.len), s.ty)
            };
            match a.alloc_snip(next, len, ty) {
                Ok(id) => {
                    let src = a.get(orig)?.data;
                    let dst = a.get(id)?.data;
                    if let (Some(src), Some(dst)) = (src, dst) {
                        a.mem.copy_within(src.start..src.start + len, dst.start);
                    }
                    copied += len;
                    created.push(id);
                    next = Some(id);
                }
                Err(e) => {
                    // roll back: the copies form a private chain
                    if let Some(head) = created.last() {
                        let mut cur = Some(*head);
                        while let Some(id) = cur {
                            cur = a.free_one(id);
                        }
                    }
                    return Err(e);
                }
            }
        }
        a.get_mut(snip)?.users -= 1;
        drop(a);
        self.charge(copied);
        Ok(next.expect("chain has at least one snip"))
    }

    pub fn stats(&self) -> ArenaStats {
        let a = self.lock();
        ArenaStats {
            capacity: self.capacity,
            used: a.used,
            live_snips: a.live,
            high_watermark: a.high_watermark,
            largest_free: a.largest_free(),
        }
    }

    pub fn is_live(&self, snip: SnipId) -> bool {
        self.lock().snip(snip).is_some()
    }

    pub fn users(&self, snip: SnipId) -> Result<u32, PktBufError> {
        Ok(self.lock().get(snip)?.users)
    }

    pub fn len(&self, snip: SnipId) -> Result<usize, PktBufError> {
        Ok(self.lock().get(snip)?.data.map_or(0, |r| r.len))
    }

    pub fn nettype(&self, snip: SnipId) -> Result<NetType, PktBufError> {
        Ok(self.lock().get(snip)?.ty)
    }

    pub fn set_nettype(&self, snip: SnipId, ty: NetType) -> Result<(), PktBufError> {
        self.lock().writable(snip)?.ty = ty;
        Ok(())
    }

    pub fn next(&self, snip: SnipId) -> Result<Option<SnipId>, PktBufError> {
        Ok(self.lock().get(snip)?.next)
    }

    /// Unlinks and returns the successor; the caller now owns that
    /// reference.
    pub fn detach_next(&self, snip: SnipId) -> Result<Option<SnipId>, PktBufError> {
        Ok(self.lock().writable(snip)?.next.take())
    }

    /// Links `next` behind `snip`, transferring the caller's reference.
    pub fn set_next(&self, snip: SnipId, next: SnipId) -> Result<(), PktBufError> {
        let mut a = self.lock();
        a.get(next)?;
        let s = a.writable(snip)?;
        if s.next.is_some() {
            return Err(PktBufError::HasNext);
        }
        s.next = Some(next);
        Ok(())
    }

    /// Shortens the visible data of a snip. The chunk keeps its size.
    pub fn truncate(&self, snip: SnipId, len: usize) -> Result<(), PktBufError> {
        let mut a = self.lock();
        let s = a.writable(snip)?;
        let cur = s.data.map_or(0, |r| r.len);
        if len > cur {
            return Err(PktBufError::InvalidSize { size: len, len: cur });
        }
        if let Some(r) = s.data.as_mut() {
            r.len = len;
        }
        Ok(())
    }

    /// Copies a snip's bytes out of the arena.
    pub fn read(&self, snip: SnipId) -> Result<Vec<u8>, PktBufError> {
        let a = self.lock();
        let s = a.get(snip)?;
        let out = a.data(s).to_vec();
        drop(a);
        self.charge(out.len());
        Ok(out)
    }

    pub fn with_data<R>(
        &self,
        snip: SnipId,
        f: impl FnOnce(&[u8]) -> R,
    ) -> Result<R, PktBufError> {
        let a = self.lock();
        let s = a.get(snip)?;
        Ok(f(a.data(s)))
    }

    /// Mutable access; fails on shared snips.
    pub fn with_data_mut<R>(
        &self,
        snip: SnipId,
        f: impl FnOnce(&mut [u8]) -> R,
    ) -> Result<R, PktBufError> {
        let mut a = self.lock();
        let r = a.writable(snip)?.data;
        Ok(match r {
            Some(r) => f(&mut a.mem[r.start..r.start + r.len]),
            None => f(&mut []),
        })
    }

    /// Overwrites `data.len()` bytes of a writable snip at `offset`.
    pub fn write_at(&self, snip: SnipId, offset: usize, data: &[u8]) -> Result<(), PktBufError> {
        let mut a = self.lock();
        let r = a.writable(snip)?.data;
        let len = r.map_or(0, |r| r.len);
        if offset + data.len() > len {
            return Err(invalid(
                "write_at",
                PktBufError::InvalidSize {
                    size: offset + data.len(),
                    len,
                },
            ));
        }
        if let Some(r) = r {
            a.mem[r.start + offset..r.start + offset + data.len()].copy_from_slice(data);
        }
        drop(a);
        self.charge(data.len());
        Ok(())
    }

    /// Handles of the chain starting at `snip`, in link order.
    pub fn chain(&self, snip: SnipId) -> Result<Vec<SnipId>, PktBufError> {
        let a = self.lock();
        let mut out = Vec::new();
        let mut cur = Some(snip);
        while let Some(id) = cur {
            out.push(id);
            cur = a.get(id)?.next;
        }
        Ok(out)
    }

    pub fn total_len(&self, snip: SnipId) -> Result<usize, PktBufError> {
        let a = self.lock();
        let mut total = 0;
        let mut cur = Some(snip);
        while let Some(id) = cur {
            let s = a.get(id)?;
            total += s.data.map_or(0, |r| r.len);
            cur = s.next;
        }
        Ok(total)
    }

    /// Concatenation of the chain's data in link order.
    pub fn flatten(&self, snip: SnipId) -> Result<Vec<u8>, PktBufError> {
        let a = self.lock();
        let mut out = Vec::new();
        let mut cur = Some(snip);
        while let Some(id) = cur {
            let s = a.get(id)?;
            out.extend_from_slice(a.data(s));
            cur = s.next;
        }
        drop(a);
        self.charge(out.len());
        Ok(out)
    }

    /// Appends `len` bytes of the chain's concatenated data, starting at
    /// `offset`, to `out`. Returns how many bytes were available.
    pub fn copy_range(
        &self,
        snip: SnipId,
        offset: usize,
        len: usize,
        out: &mut Vec<u8>,
    ) -> Result<usize, PktBufError> {
        let a = self.lock();
        let mut skip = offset;
        let mut want = len;
        let mut cur = Some(snip);
        while let Some(id) = cur {
            if want == 0 {
                break;
            }
            let s = a.get(id)?;
            let d = a.data(s);
            if skip >= d.len() {
                skip -= d.len();
            } else {
                let n = (d.len() - skip).min(want);
                out.extend_from_slice(&d[skip..skip + n]);
                want -= n;
                skip = 0;
            }
            cur = s.next;
        }
        drop(a);
        let copied = len - want;
        self.charge(copied);
        Ok(copied)
    }

    /// First snip of type `ty` in the chain starting at `snip`.
    pub fn search_type(&self, snip: SnipId, ty: NetType) -> Option<SnipId> {
        let a = self.lock();
        let mut cur = Some(snip);
        while let Some(id) = cur {
            let s = a.snip(id)?;
            if s.ty == ty {
                return Some(id);
            }
            cur = s.next;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_buffer_is_empty() {
        let pb = PktBuf::default();
        let s = pb.stats();
        assert_eq!(s.used, 0);
        assert_eq!(s.live_snips, 0);
        assert_eq!(s.capacity, DEFAULT_CAPACITY);
        assert_eq!(s.largest_free, DEFAULT_CAPACITY);
    }

    #[test]
    fn add_accounts_payload_and_metadata() {
        let pb = PktBuf::default();
        let s = pb.add(None, &[7; 20], NetType::Undef).unwrap();
        assert_eq!(pb.users(s).unwrap(), 1);
        assert_eq!(pb.len(s).unwrap(), 20);
        let used = pb.stats().used;
        assert!(used >= 20);
        assert!(used <= 20 + descriptor_cost() + CHUNK_HEADER + ALIGN);
        assert_eq!(used, descriptor_cost() + data_cost(20));
    }

    #[test]
    fn chain_composition() {
        let pb = PktBuf::default();
        let payload = pb.add(None, &[1; 20], NetType::Undef).unwrap();
        let udp = pb.add(Some(payload), &[2; 8], NetType::Udp).unwrap();
        assert_eq!(pb.total_len(udp).unwrap(), 28);
        assert_eq!(pb.users(payload).unwrap(), 1);
        assert_eq!(pb.chain(udp).unwrap(), vec![udp, payload]);
        pb.release(udp).unwrap();
        assert_eq!(pb.stats().used, 0);
        assert!(!pb.is_live(payload));
    }

    #[test]
    fn mark_splits_without_copy() {
        let pb = PktBuf::default();
        let data: Vec<u8> = (0..48).collect();
        let rx = pb.add(None, &data, NetType::Undef).unwrap();
        let before = pb.stats().used;
        let udp = pb.mark(rx, 8, NetType::Udp).unwrap();
        assert_eq!(pb.len(udp).unwrap(), 8);
        assert_eq!(pb.len(rx).unwrap(), 40);
        assert_eq!(pb.nettype(udp).unwrap(), NetType::Udp);
        assert_eq!(pb.next(rx).unwrap(), Some(udp));
        assert_eq!(pb.read(udp).unwrap(), data[..8]);
        assert_eq!(pb.read(rx).unwrap(), data[8..]);
        // only a descriptor was added
        assert_eq!(pb.stats().used, before + descriptor_cost());
        pb.release(rx).unwrap();
        assert_eq!(pb.stats().used, 0);
    }

    #[test]
    fn mark_whole_snip_leaves_empty_payload() {
        let pb = PktBuf::default();
        let rx = pb.add(None, &[7; 8], NetType::Undef).unwrap();
        let hdr = pb.mark(rx, 8, NetType::Udp).unwrap();
        assert_eq!(pb.len(rx).unwrap(), 0);
        assert_eq!(pb.read(hdr).unwrap(), vec![7; 8]);
        assert_eq!(pb.next(rx).unwrap(), Some(hdr));
        pb.release(rx).unwrap();
        assert_eq!(pb.stats().used, 0);
    }

    #[test]
    fn mark_boundaries() {
        let pb = PktBuf::default();
        let rx = pb.add(None, &[0; 48], NetType::Undef).unwrap();
        assert_eq!(
            pb.mark(rx, 49, NetType::Udp),
            Err(PktBufError::InvalidSize { size: 49, len: 48 })
        );
        assert!(matches!(
            pb.mark(rx, 0, NetType::Udp),
            Err(PktBufError::InvalidSize { .. })
        ));
        pb.hold(rx, 1).unwrap();
        assert_eq!(
            pb.mark(rx, 8, NetType::Udp),
            Err(PktBufError::SharedSnip { users: 2 })
        );
    }

    #[test]
    fn hold_release_is_balanced() {
        let pb = PktBuf::default();
        let s = pb.add(None, &[1; 33], NetType::Undef).unwrap();
        let used = pb.stats().used;
        pb.hold(s, 1).unwrap();
        assert_eq!(pb.users(s).unwrap(), 2);
        pb.release(s).unwrap();
        assert_eq!(pb.users(s).unwrap(), 1);
        assert_eq!(pb.stats().used, used);
        pb.release(s).unwrap();
        assert_eq!(pb.stats().used, 0);
    }

    #[test]
    fn shared_tail_survives_one_head() {
        let pb = PktBuf::default();
        let payload = pb.add(None, &[9; 64], NetType::Undef).unwrap();
        let h1 = pb.add(Some(payload), &[1; 8], NetType::Udp).unwrap();
        pb.hold(payload, 1).unwrap();
        let h2 = pb.add(Some(payload), &[2; 8], NetType::Udp).unwrap();
        assert_eq!(pb.users(payload).unwrap(), 2);
        pb.release(h1).unwrap();
        assert!(pb.is_live(payload));
        assert_eq!(pb.users(payload).unwrap(), 1);
        assert_eq!(pb.flatten(h2).unwrap().len(), 72);
        pb.release(h2).unwrap();
        assert_eq!(pb.stats().used, 0);
    }

    #[test]
    fn start_write_identity_when_exclusive() {
        let pb = PktBuf::default();
        let s = pb.add(None, &[1; 10], NetType::Undef).unwrap();
        let used = pb.stats().used;
        assert_eq!(pb.start_write(s).unwrap(), s);
        assert_eq!(pb.stats().used, used);
    }

    #[test]
    fn start_write_isolates_writer() {
        let pb = PktBuf::default();
        let s = pb.add(None, &[5; 16], NetType::Undef).unwrap();
        pb.hold(s, 1).unwrap();
        let w = pb.start_write(s).unwrap();
        assert_ne!(w, s);
        assert_eq!(pb.users(s).unwrap(), 1);
        pb.with_data_mut(w, |d| d.fill(0xee)).unwrap();
        assert_eq!(pb.read(s).unwrap(), vec![5; 16]);
        pb.release(w).unwrap();
        pb.release(s).unwrap();
        assert_eq!(pb.stats().used, 0);
    }

    #[test]
    fn start_write_copies_only_reachable_snips() {
        let pb = PktBuf::default();
        let c = pb.add(None, &[3; 30], NetType::Undef).unwrap();
        let b = pb.add(Some(c), &[2; 8], NetType::Udp).unwrap();
        let a = pb.add(Some(b), &[1; 40], NetType::Ipv6).unwrap();
        // another head links into `a`, so `a` is shared
        pb.hold(a, 1).unwrap();
        let other = pb.add(Some(a), &[0; 4], NetType::Netif).unwrap();
        let before = pb.stats();
        let w = pb.start_write(a).unwrap();
        let after = pb.stats();
        assert_eq!(after.live_snips - before.live_snips, 3);
        let expected = 3 * descriptor_cost() + data_cost(30) + data_cost(8) + data_cost(40);
        assert_eq!(after.used - before.used, expected);
        assert_eq!(pb.flatten(w).unwrap(), pb.flatten(a).unwrap());
        pb.release(w).unwrap();
        pb.release(other).unwrap();
        assert_eq!(pb.stats().used, 0);
    }

    #[test]
    fn out_of_memory_leaves_no_trace() {
        let pb = PktBuf::new(256);
        let s = pb.add(None, &[0; 100], NetType::Undef).unwrap();
        let used = pb.stats().used;
        assert!(matches!(
            pb.add(None, &[0; 200], NetType::Undef),
            Err(PktBufError::OutOfMemory { .. })
        ));
        assert_eq!(pb.stats().used, used);
        pb.hold(s, 1).unwrap();
        assert!(matches!(
            pb.start_write(s),
            Err(PktBufError::OutOfMemory { .. })
        ));
        assert_eq!(pb.stats().used, used);
        assert_eq!(pb.users(s).unwrap(), 2);
    }

    #[test]
    fn free_regions_coalesce() {
        let pb = PktBuf::new(1024);
        let ids: Vec<_> = (0..4)
            .map(|_| pb.add(None, &[0; 100], NetType::Undef).unwrap())
            .collect();
        pb.release(ids[1]).unwrap();
        pb.release(ids[2]).unwrap();
        pb.release(ids[0]).unwrap();
        pb.release(ids[3]).unwrap();
        assert_eq!(pb.stats().largest_free, 1024);
    }

    #[test]
    fn relink_helpers() {
        let pb = PktBuf::default();
        let b = pb.add(None, &[2; 4], NetType::Undef).unwrap();
        let a = pb.add(Some(b), &[1; 4], NetType::Netif).unwrap();
        let tail = pb.detach_next(a).unwrap().unwrap();
        assert_eq!(tail, b);
        let mid = pb.add(Some(b), &[9], NetType::Sixlowpan).unwrap();
        pb.set_next(a, mid).unwrap();
        assert_eq!(pb.flatten(a).unwrap(), vec![1, 1, 1, 1, 9, 2, 2, 2, 2]);
        assert_eq!(pb.set_next(a, mid), Err(PktBufError::HasNext));
        pb.release(a).unwrap();
        assert_eq!(pb.stats().live_snips, 0);
    }

    #[test]
    fn copy_range_spans_snips() {
        let pb = PktBuf::default();
        let c = pb.add(None, &[3, 4, 5], NetType::Undef).unwrap();
        let a = pb.add(Some(c), &[1, 2], NetType::Udp).unwrap();
        let mut out = Vec::new();
        assert_eq!(pb.copy_range(a, 1, 3, &mut out).unwrap(), 3);
        assert_eq!(out, vec![2, 3, 4]);
        out.clear();
        assert_eq!(pb.copy_range(a, 4, 10, &mut out).unwrap(), 1);
        assert_eq!(out, vec![5]);
    }

    #[test]
    #[cfg(debug_assertions)]
    #[should_panic(expected = "release")]
    fn double_release_aborts_in_debug() {
        let pb = PktBuf::default();
        let s = pb.add(None, &[1], NetType::Undef).unwrap();
        pb.release(s).unwrap();
        let _ = pb.release(s);
    }

    #[test]
    #[cfg(not(debug_assertions))]
    fn double_release_reports_in_release() {
        let pb = PktBuf::default();
        let s = pb.add(None, &[1], NetType::Undef).unwrap();
        pb.release(s).unwrap();
        assert_eq!(pb.release(s), Err(PktBufError::DoubleRelease(s)));
    }
}
