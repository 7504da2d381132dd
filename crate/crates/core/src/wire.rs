//! Framed observation/action exchange between the host plant and the
//! inference device.
//!
//! ```text
//! 0x7E | type | seq | len (u16 LE) | payload[len] | crc8
//! ```
//!
//! The CRC is CRC-8 with polynomial 0x07 and zero init, computed over
//! `type..payload`. There is no byte stuffing; a receiver that loses sync
//! scans forward for the next 0x7E.

use std::collections::VecDeque;

use crc::{Crc, CRC_8_SMBUS};

use crate::error::{Error, Result};

pub const SYNC: u8 = 0x7E;
pub const OBS_WIDTH: usize = 24;
pub const ACT_WIDTH: usize = 8;
/// Bytes outside the payload: sync, type, seq, two length bytes, crc.
pub const OVERHEAD: usize = 6;
pub const MAX_PAYLOAD: usize = OBS_WIDTH * 4;

const CRC8: Crc<u8> = Crc::<u8>::new(&CRC_8_SMBUS);

pub fn crc8(bytes: &[u8]) -> u8 {
    CRC8.checksum(bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Fp32,
    Int8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    ObservationFp32 = 0x01,
    ActionFp32 = 0x02,
    ObservationInt8 = 0x11,
    ActionInt8 = 0x12,
}

impl MsgType {
    pub const ALL: [MsgType; 4] = [
        MsgType::ObservationFp32,
        MsgType::ActionFp32,
        MsgType::ObservationInt8,
        MsgType::ActionInt8,
    ];

    pub fn from_byte(b: u8) -> Result<Self> {
        MsgType::ALL
            .into_iter()
            .find(|t| *t as u8 == b)
            .ok_or(Error::UnknownType(b))
    }

    pub fn precision(self) -> Precision {
        match self {
            MsgType::ObservationFp32 | MsgType::ActionFp32 => Precision::Fp32,
            MsgType::ObservationInt8 | MsgType::ActionInt8 => Precision::Int8,
        }
    }

    pub fn is_observation(self) -> bool {
        matches!(self, MsgType::ObservationFp32 | MsgType::ObservationInt8)
    }

    fn observation(p: Precision) -> Self {
        match p {
            Precision::Fp32 => MsgType::ObservationFp32,
            Precision::Int8 => MsgType::ObservationInt8,
        }
    }

    fn action(p: Precision) -> Self {
        match p {
            Precision::Fp32 => MsgType::ActionFp32,
            Precision::Int8 => MsgType::ActionInt8,
        }
    }

    /// Values carried by this message.
    pub fn width(self) -> usize {
        if self.is_observation() {
            OBS_WIDTH
        } else {
            ACT_WIDTH
        }
    }

    pub fn payload_len(self) -> usize {
        match self.precision() {
            Precision::Fp32 => 4 * self.width(),
            Precision::Int8 => self.width(),
        }
    }
}

/// A vector as it travels on the wire.
#[derive(Clone, Debug, PartialEq)]
pub enum WireVector {
    Fp32(Vec<f32>),
    Int8(Vec<i8>),
}

impl WireVector {
    pub fn precision(&self) -> Precision {
        match self {
            WireVector::Fp32(_) => Precision::Fp32,
            WireVector::Int8(_) => Precision::Int8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            WireVector::Fp32(v) => v.len(),
            WireVector::Int8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_payload(&self) -> Vec<u8> {
        match self {
            WireVector::Fp32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            WireVector::Int8(v) => v.iter().map(|&x| x as u8).collect(),
        }
    }

    fn from_payload(p: Precision, bytes: &[u8]) -> Self {
        match p {
            Precision::Fp32 => WireVector::Fp32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            Precision::Int8 => WireVector::Int8(bytes.iter().map(|&b| b as i8).collect()),
        }
    }

    /// Bitwise equality, so NaN payloads compare equal to themselves.
    pub fn bit_eq(&self, other: &WireVector) -> bool {
        self.precision() == other.precision() && self.to_payload() == other.to_payload()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub seq: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    fn new(msg_type: MsgType, seq: u8, v: &WireVector) -> Result<Self> {
        if v.len() != msg_type.width() {
            return Err(Error::Shape {
                context: if msg_type.is_observation() {
                    "observation"
                } else {
                    "action"
                },
                expected: msg_type.width(),
                got: v.len(),
            });
        }
        Ok(Frame {
            msg_type,
            seq,
            payload: v.to_payload(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(OVERHEAD + self.payload.len());
        out.push(SYNC);
        out.push(self.msg_type as u8);
        out.push(self.seq);
        out.extend_from_slice(&(self.payload.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out.push(crc8(&out[1..]));
        out
    }

    /// Decode exactly one frame occupying all of `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < OVERHEAD {
            return Err(Error::Truncated("frame header"));
        }
        if bytes[0] != SYNC {
            return Err(Error::BadSync(bytes[0]));
        }
        let len = u16::from_le_bytes([bytes[3], bytes[4]]) as usize;
        if bytes.len() != OVERHEAD + len {
            return Err(Error::WrongLength {
                expected: OVERHEAD + len,
                got: bytes.len(),
            });
        }
        let body = &bytes[1..bytes.len() - 1];
        let carried = bytes[bytes.len() - 1];
        let computed = crc8(body);
        if carried != computed {
            return Err(Error::BadCrc { carried, computed });
        }
        let msg_type = MsgType::from_byte(bytes[1])?;
        if len != msg_type.payload_len() {
            return Err(Error::WrongLength {
                expected: msg_type.payload_len(),
                got: len,
            });
        }
        Ok(Frame {
            msg_type,
            seq: bytes[2],
            payload: bytes[5..5 + len].to_vec(),
        })
    }

    pub fn vector(&self) -> WireVector {
        WireVector::from_payload(self.msg_type.precision(), &self.payload)
    }
}

pub fn encode_observation(obs: &WireVector, seq: u8) -> Result<Vec<u8>> {
    Ok(Frame::new(MsgType::observation(obs.precision()), seq, obs)?.to_bytes())
}

pub fn encode_action(act: &WireVector, seq: u8) -> Result<Vec<u8>> {
    Ok(Frame::new(MsgType::action(act.precision()), seq, act)?.to_bytes())
}

/// `(seq, vector)` of an observation frame.
pub fn decode_observation(bytes: &[u8]) -> Result<(u8, WireVector)> {
    let f = Frame::from_bytes(bytes)?;
    if !f.msg_type.is_observation() {
        return Err(Error::Protocol(format!(
            "expected an observation, got {:?}",
            f.msg_type
        )));
    }
    Ok((f.seq, f.vector()))
}

/// `(seq, vector)` of an action frame.
pub fn decode_action(bytes: &[u8]) -> Result<(u8, WireVector)> {
    let f = Frame::from_bytes(bytes)?;
    if f.msg_type.is_observation() {
        return Err(Error::Protocol(format!("expected an action, got {:?}", f.msg_type)));
    }
    Ok((f.seq, f.vector()))
}

/// Incremental frame extraction from a byte stream.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: VecDeque<u8>,
}

impl FrameReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, `None` if more bytes are needed.
    ///
    /// Garbage before a sync byte is skipped silently. A candidate frame
    /// that fails validation is reported once, then its sync byte is
    /// dropped and scanning resumes from the following byte.
    pub fn next_frame(&mut self) -> Option<Result<Frame>> {
        loop {
            let start = self.buf.iter().position(|&b| b == SYNC);
            match start {
                Some(k) => drop(self.buf.drain(..k)),
                None => {
                    self.buf.clear();
                    return None;
                }
            }
            if self.buf.len() < 5 {
                return None;
            }
            let len = u16::from_le_bytes([self.buf[3], self.buf[4]]) as usize;
            if len > MAX_PAYLOAD {
                self.buf.pop_front();
                continue;
            }
            if self.buf.len() < OVERHEAD + len {
                return None;
            }
            let candidate: Vec<u8> = self.buf.range(..OVERHEAD + len).copied().collect();
            return Some(match Frame::from_bytes(&candidate) {
                Ok(f) => {
                    self.buf.drain(..OVERHEAD + len);
                    Ok(f)
                }
                Err(e) => {
                    self.buf.pop_front();
                    Err(e)
                }
            });
        }
    }
}

/// Host side: sends observations, waits for the matching action.
#[derive(Debug, Default)]
pub struct HostSession {
    next_seq: u8,
    awaiting: Option<u8>,
}

impl HostSession {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn awaiting_reply(&self) -> bool {
        self.awaiting.is_some()
    }

    /// Frame the next observation. Fails if the previous one is unanswered.
    pub fn session_step(&mut self, obs: &WireVector) -> Result<Vec<u8>> {
        if let Some(seq) = self.awaiting {
            return Err(Error::Protocol(format!("observation {seq} still awaits an action")));
        }
        let bytes = encode_observation(obs, self.next_seq)?;
        self.awaiting = Some(self.next_seq);
        self.next_seq = self.next_seq.wrapping_add(1);
        Ok(bytes)
    }

    pub fn receive_action(&mut self, frame: &Frame) -> Result<WireVector> {
        let Some(expected) = self.awaiting else {
            return Err(Error::Protocol(
                "action received with no observation outstanding".into(),
            ));
        };
        if frame.msg_type.is_observation() {
            return Err(Error::Protocol(format!("expected an action, got {:?}", frame.msg_type)));
        }
        if frame.seq != expected {
            return Err(Error::Protocol(format!(
                "action seq {} does not answer {expected}",
                frame.seq
            )));
        }
        self.awaiting = None;
        Ok(frame.vector())
    }
}

/// Device side: answers each observation with exactly one action.
#[derive(Debug, Default)]
pub struct DeviceSession {
    expected_seq: Option<u8>,
    pending: Option<(u8, Precision)>,
}

impl DeviceSession {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn receive_observation(&mut self, frame: &Frame) -> Result<WireVector> {
        if let Some((seq, _)) = self.pending {
            return Err(Error::Protocol(format!("second observation before replying to {seq}")));
        }
        if !frame.msg_type.is_observation() {
            return Err(Error::Protocol(format!(
                "expected an observation, got {:?}",
                frame.msg_type
            )));
        }
        if let Some(exp) = self.expected_seq {
            if frame.seq != exp {
                return Err(Error::Protocol(format!(
                    "observation seq {} out of order, expected {exp}",
                    frame.seq
                )));
            }
        }
        self.pending = Some((frame.seq, frame.msg_type.precision()));
        self.expected_seq = Some(frame.seq.wrapping_add(1));
        Ok(frame.vector())
    }

    /// Reply to the outstanding observation. The action must use the same
    /// precision as the observation it answers.
    pub fn reply(&mut self, act: &WireVector) -> Result<Vec<u8>> {
        let Some((seq, precision)) = self.pending else {
            return Err(Error::Protocol("no observation to reply to".into()));
        };
        if act.precision() != precision {
            return Err(Error::Protocol(format!(
                "reply precision {:?} does not match request {precision:?}",
                act.precision()
            )));
        }
        let bytes = encode_action(act, seq)?;
        self.pending = None;
        Ok(bytes)
    }
}

/// In-memory duplex byte channel.
#[derive(Debug, Default)]
pub struct Loopback {
    to_device: FrameReader,
    to_host: FrameReader,
}

impl Loopback {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn host_send(&mut self, bytes: &[u8]) {
        self.to_device.push(bytes);
    }

    pub fn device_send(&mut self, bytes: &[u8]) {
        self.to_host.push(bytes);
    }

    pub fn device_recv(&mut self) -> Option<Result<Frame>> {
        self.to_device.next_frame()
    }

    pub fn host_recv(&mut self) -> Option<Result<Frame>> {
        self.to_host.next_frame()
    }
}

/// Parse whitespace-separated or contiguous hex digits into bytes.
pub fn parse_hex(text: &str) -> Result<Vec<u8>> {
    let digits: String = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join(" ")
        .split_whitespace()
        .map(|t| t.trim_start_matches("0x").trim_start_matches("0X"))
        .collect();
    if !digits.len().is_multiple_of(2) {
        return Err(Error::invalid("hex input", "odd number of hex digits"));
    }
    (0..digits.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&digits[i..i + 2], 16)
                .map_err(|_| Error::invalid("hex input", format!("bad hex byte {:?}", &digits[i..i + 2])))
        })
        .collect()
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bitwise_crc(bytes: &[u8]) -> u8 {
        let mut c = 0u8;
        for &b in bytes {
            c ^= b;
            for _ in 0..8 {
                c = if c & 0x80 != 0 { (c << 1) ^ 0x07 } else { c << 1 };
            }
        }
        c
    }

    #[test]
    fn crc_matches_bitwise_reference() {
        assert_eq!(crc8(b"123456789"), 0xF4);
        for n in 0..64u8 {
            let v: Vec<u8> = (0..n).map(|i| i.wrapping_mul(37) ^ n).collect();
            assert_eq!(crc8(&v), bitwise_crc(&v));
        }
    }

    #[test]
    fn golden_zero_int8_observation() {
        let bytes = encode_observation(&WireVector::Int8(vec![0; 24]), 0).unwrap();
        let mut expected = vec![0x7E, 0x11, 0x00, 0x18, 0x00];
        expected.extend([0u8; 24]);
        expected.push(bitwise_crc(&expected[1..]));
        assert_eq!(bytes, expected);
        assert_eq!(bytes.len(), 30);
    }

    #[test]
    fn round_trips() {
        let obs = WireVector::Fp32((0..24).map(|i| i as f32 * -0.37).collect());
        let (seq, back) = decode_observation(&encode_observation(&obs, 9).unwrap()).unwrap();
        assert_eq!((seq, back), (9, obs));
        let act = WireVector::Int8((0..8).map(|i| (i * 31 - 128) as i8).collect());
        let (seq, back) = decode_action(&encode_action(&act, 255).unwrap()).unwrap();
        assert_eq!((seq, back), (255, act));
    }

    #[test]
    fn distinct_errors() {
        let good = encode_action(&WireVector::Fp32(vec![1.0; 8]), 3).unwrap();
        let mut b = good.clone();
        b[0] = 0x7F;
        assert!(matches!(Frame::from_bytes(&b), Err(Error::BadSync(0x7F))));
        let mut b = good.clone();
        b[10] ^= 0x04;
        assert!(matches!(Frame::from_bytes(&b), Err(Error::BadCrc { .. })));
        assert!(matches!(
            Frame::from_bytes(&good[..good.len() - 1]),
            Err(Error::WrongLength { .. })
        ));
        let mut b = vec![SYNC, 0x33, 0, 1, 0, 0];
        let c = crc8(&b[1..]);
        b.push(c);
        assert!(matches!(Frame::from_bytes(&b), Err(Error::UnknownType(0x33))));
        // valid crc but the length disagrees with the type
        let mut b = vec![SYNC, 0x12, 0, 1, 0, 0];
        let c = crc8(&b[1..]);
        b.push(c);
        assert!(matches!(
            Frame::from_bytes(&b),
            Err(Error::WrongLength { expected: 8, got: 1 })
        ));
        assert!(matches!(Frame::from_bytes(&good[..3]), Err(Error::Truncated(_))));
        assert!(encode_observation(&WireVector::Int8(vec![0; 8]), 0).is_err());
        assert!(decode_observation(&good).is_err());
    }

    #[test]
    fn reader_resyncs_after_garbage_and_corruption() {
        let a = encode_observation(&WireVector::Int8(vec![1; 24]), 1).unwrap();
        let b = encode_observation(&WireVector::Int8(vec![2; 24]), 2).unwrap();
        let mut bad = a.clone();
        bad[7] ^= 0xFF;
        let mut r = FrameReader::new();
        r.push(&[0x00, 0x13, 0x7E]);
        r.push(&bad);
        r.push(&b[..10]);
        let mut oks = Vec::new();
        let mut errs = 0;
        while let Some(res) = r.next_frame() {
            match res {
                Ok(f) => oks.push(f.seq),
                Err(_) => errs += 1,
            }
        }
        assert!(oks.is_empty());
        assert!(errs >= 1);
        r.push(&b[10..]);
        let mut last = None;
        while let Some(res) = r.next_frame() {
            if let Ok(f) = res {
                last = Some(f.seq);
            }
        }
        assert_eq!(last, Some(2));
    }

    #[test]
    fn session_alternation() {
        let mut host = HostSession::new();
        let mut dev = DeviceSession::new();
        let mut link = Loopback::new();
        for step in 0..300u32 {
            let obs = WireVector::Int8(vec![step as i8; 24]);
            let bytes = host.session_step(&obs).unwrap();
            assert!(host.session_step(&obs).is_err());
            link.host_send(&bytes);
            let f = link.device_recv().unwrap().unwrap();
            assert_eq!(dev.receive_observation(&f).unwrap(), obs);
            assert!(dev.receive_observation(&f).is_err());
            assert!(dev.reply(&WireVector::Fp32(vec![0.0; 8])).is_err());
            link.device_send(&dev.reply(&WireVector::Int8(vec![1; 8])).unwrap());
            let f = link.host_recv().unwrap().unwrap();
            assert_eq!(host.receive_action(&f).unwrap(), WireVector::Int8(vec![1; 8]));
        }
    }

    #[test]
    fn session_rejects_out_of_order() {
        let mut dev = DeviceSession::new();
        let obs = WireVector::Int8(vec![0; 24]);
        let f0 = Frame::from_bytes(&encode_observation(&obs, 0).unwrap()).unwrap();
        let f2 = Frame::from_bytes(&encode_observation(&obs, 2).unwrap()).unwrap();
        dev.receive_observation(&f0).unwrap();
        dev.reply(&WireVector::Int8(vec![0; 8])).unwrap();
        assert!(matches!(dev.receive_observation(&f2), Err(Error::Protocol(_))));

        let mut host = HostSession::new();
        host.session_step(&obs).unwrap();
        let wrong = Frame::from_bytes(&encode_action(&WireVector::Int8(vec![0; 8]), 7).unwrap()).unwrap();
        assert!(matches!(host.receive_action(&wrong), Err(Error::Protocol(_))));
    }

    #[test]
    fn hex_parsing() {
        assert_eq!(parse_hex("7E 11\n0x00 # c\nff").unwrap(), vec![0x7E, 0x11, 0x00, 0xFF]);
        assert!(parse_hex("7E1").is_err());
        assert!(parse_hex("zz").is_err());
        assert_eq!(to_hex(&[0x7E, 0x01]), "7E 01");
    }
}
