//! Host-to-host framing.
//!
//! ```text
//! frame := u8 kind, u64 seq, u32 payload_len, payload
//! kind  := 0x01 handshake | 0x02 payment | 0x03 ack
//! ```
//!
//! Integers are little-endian. Ack frames carry the receiver's next expected
//! sequence number and an empty payload.

use std::io::{self, Read, Write};

use crate::crypto::{Ciphertext, EncryptionPublicKey, PublicKey, Quote};
use crate::enclave::Attestation;
use crate::encoding::{DecodeError, Decoder, Encoder};

pub const HEADER_LEN: usize = 13;

/// Payloads larger than this are rejected when reading from a stream.
pub const MAX_PAYLOAD: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Handshake,
    Payment,
    Ack,
}

impl FrameKind {
    fn tag(self) -> u8 {
        match self {
            FrameKind::Handshake => 0x01,
            FrameKind::Payment => 0x02,
            FrameKind::Ack => 0x03,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, DecodeError> {
        match tag {
            0x01 => Ok(FrameKind::Handshake),
            0x02 => Ok(FrameKind::Payment),
            0x03 => Ok(FrameKind::Ack),
            tag => Err(DecodeError::BadTag {
                what: "frame kind",
                tag,
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FrameKind::Handshake => "handshake",
            FrameKind::Payment => "payment",
            FrameKind::Ack => "ack",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub seq: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn ack(next_expected: u64) -> Self {
        Self {
            kind: FrameKind::Ack,
            seq: next_expected,
            payload: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u8(self.kind.tag()).u64(self.seq).bytes(&self.payload);
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(data);
        let kind = FrameKind::from_tag(dec.u8()?)?;
        let seq = dec.u64()?;
        let payload = dec.bytes()?.to_vec();
        dec.finish()?;
        Ok(Self { kind, seq, payload })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    /// Reads one frame from a byte stream. `Ok(None)` on clean end of stream.
    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Option<Frame>> {
        let mut header = [0u8; HEADER_LEN];
        match r.read_exact(&mut header) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e),
        }
        let len = u32::from_le_bytes(header[9..13].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "frame too large",
            ));
        }
        let mut buf = header.to_vec();
        buf.resize(HEADER_LEN + len, 0);
        r.read_exact(&mut buf[HEADER_LEN..])?;
        Frame::from_bytes(&buf)
            .map(Some)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

/// Handshake payloads carried in [`FrameKind::Handshake`] frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HandshakeMsg {
    Attestation(Attestation),
    Secrets(Ciphertext),
}

impl HandshakeMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match self {
            HandshakeMsg::Attestation(a) => {
                enc.u8(0x01)
                    .bytes(&a.quote.to_bytes())
                    .fixed(&a.enc_pk.0)
                    .fixed(&a.sign_pk.0);
            }
            HandshakeMsg::Secrets(ct) => {
                enc.u8(0x02).bytes(&ct.to_bytes());
            }
        }
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(data);
        let msg = match dec.u8()? {
            0x01 => HandshakeMsg::Attestation(Attestation {
                quote: Quote::from_bytes(dec.bytes()?)?,
                enc_pk: EncryptionPublicKey(dec.array()?),
                sign_pk: PublicKey(dec.array()?),
            }),
            0x02 => HandshakeMsg::Secrets(Ciphertext::from_bytes(dec.bytes()?)?),
            tag => {
                return Err(DecodeError::BadTag {
                    what: "handshake message",
                    tag,
                })
            }
        };
        dec.finish()?;
        Ok(msg)
    }
}
