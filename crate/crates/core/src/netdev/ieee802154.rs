//! IEEE 802.15.4 data frames with short addressing and PAN ID compression.
//!
//! Layout: FCF (2) | seq (1) | dst PAN (2) | dst (2) | src (2) | payload |
//! FCS (2). Multi-byte fields are little endian on air.

use thiserror::Error;

/// Largest PSDU the PHY carries.
pub const MAX_PSDU: usize = 127;
pub const MHR_LEN: usize = 9;
pub const FCS_LEN: usize = 2;
/// Payload bytes left for upper layers in one frame.
pub const MAX_PAYLOAD: usize = MAX_PSDU - MHR_LEN - FCS_LEN;
/// MPDU of an immediate acknowledgment (FCF, seq, FCS).
pub const ACK_LEN: usize = 5;
pub const BROADCAST: u16 = 0xffff;
pub const DEFAULT_PAN: u16 = 0x0023;

const FCF_TYPE_DATA: u16 = 0b001;
const FCF_TYPE_ACK: u16 = 0b010;
const FCF_ACK_REQ: u16 = 1 << 5;
const FCF_PANID_COMP: u16 = 1 << 6;
const FCF_DST_SHORT: u16 = 0b10 << 10;
const FCF_SRC_SHORT: u16 = 0b10 << 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame of {0} bytes is too short")]
    TooShort(usize),
    #[error("frame of {0} bytes exceeds the PSDU bound")]
    TooLong(usize),
    #[error("frame check sequence mismatch")]
    BadFcs,
    #[error("unsupported frame control field {0:#06x}")]
    Unsupported(u16),
}

/// CRC-16/KERMIT as used for the 802.15.4 FCS.
pub fn crc16(data: &[u8]) -> u16 {
    let mut crc: u16 = 0;
    for &b in data {
        crc ^= b as u16;
        for _ in 0..8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ 0x8408
            } else {
                crc >> 1
            };
        }
    }
    crc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mhr {
    pub seq: u8,
    pub pan: u16,
    pub dst: u16,
    pub src: u16,
    pub ack_req: bool,
}

impl Mhr {
    pub fn fcf(&self) -> u16 {
        let mut fcf = FCF_TYPE_DATA | FCF_PANID_COMP | FCF_DST_SHORT | FCF_SRC_SHORT;
        if self.ack_req {
            fcf |= FCF_ACK_REQ;
        }
        fcf
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.fcf().to_le_bytes());
        out.push(self.seq);
        out.extend_from_slice(&self.pan.to_le_bytes());
        out.extend_from_slice(&self.dst.to_le_bytes());
        out.extend_from_slice(&self.src.to_le_bytes());
    }

    /// Parses the header of a data frame; does not check the FCS.
    pub fn parse(frame: &[u8]) -> Result<Mhr, FrameError> {
        if frame.len() < MHR_LEN + FCS_LEN {
            return Err(FrameError::TooShort(frame.len()));
        }
        let fcf = u16::from_le_bytes([frame[0], frame[1]]);
        let expected = FCF_TYPE_DATA | FCF_PANID_COMP | FCF_DST_SHORT | FCF_SRC_SHORT;
        if fcf & !FCF_ACK_REQ != expected {
            return Err(FrameError::Unsupported(fcf));
        }
        Ok(Mhr {
            seq: frame[2],
            pan: u16::from_le_bytes([frame[3], frame[4]]),
            dst: u16::from_le_bytes([frame[5], frame[6]]),
            src: u16::from_le_bytes([frame[7], frame[8]]),
            ack_req: fcf & FCF_ACK_REQ != 0,
        })
    }
}

fn push_fcs(out: &mut Vec<u8>) {
    let fcs = crc16(out);
    out.extend_from_slice(&fcs.to_le_bytes());
}

pub fn build_frame(mhr: &Mhr, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(MHR_LEN + payload.len() + FCS_LEN);
    mhr.write(&mut out);
    out.extend_from_slice(payload);
    push_fcs(&mut out);
    out
}

pub fn build_ack(seq: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(ACK_LEN);
    out.extend_from_slice(&FCF_TYPE_ACK.to_le_bytes());
    out.push(seq);
    push_fcs(&mut out);
    out
}

pub fn fcs_ok(frame: &[u8]) -> bool {
    if frame.len() < FCS_LEN {
        return false;
    }
    let (body, fcs) = frame.split_at(frame.len() - FCS_LEN);
    crc16(body) == u16::from_le_bytes([fcs[0], fcs[1]])
}

/// Validates a received frame and returns its header and payload.
pub fn split(frame: &[u8]) -> Result<(Mhr, &[u8]), FrameError> {
    if frame.len() > MAX_PSDU {
        return Err(FrameError::TooLong(frame.len()));
    }
    let mhr = Mhr::parse(frame)?;
    if !fcs_ok(frame) {
        return Err(FrameError::BadFcs);
    }
    Ok((mhr, &frame[MHR_LEN..frame.len() - FCS_LEN]))
}

/// Rewrites source and destination of a data frame and refreshes its FCS.
pub fn swap_addresses(frame: &[u8]) -> Result<Vec<u8>, FrameError> {
    let mhr = Mhr::parse(frame)?;
    let swapped = Mhr {
        dst: mhr.src,
        src: mhr.dst,
        ..mhr
    };
    Ok(build_frame(&swapped, &frame[MHR_LEN..frame.len() - FCS_LEN]))
}
