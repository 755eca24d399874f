//! Routing and data packets plus their fixed-width wire layout.
//!
//! All integers are big-endian. Node ids, sequence numbers, broadcast ids
//! and probe ids are 32 bits; TTL and hop fields are 8 bits; the destination
//! digest is 160 bits. Every packet starts with a one-byte type tag:
//!
//! | tag | packet        | body                                                                                 |
//! |-----|---------------|--------------------------------------------------------------------------------------|
//! | 1   | RREQ          | src, dest, src_seq, dest_seq, bcast_id, ttl(8), hop_count(8), has_digest(8), [digest(160)], n_exclude(8), exclude(32)* |
//! | 2   | RREP          | src, dest, dest_seq, hop_count(8), originator, lifetime_ms, claimed_next_hop         |
//! | 3   | RERR          | n(8), (dest, dest_seq)*                                                              |
//! | 4   | DATA          | flow, seq, src, dest, hops_left(8), payload_len, sent_at_us(64)                       |
//! | 5   | ROUTE-CONFIRM | probe_id, asker, dest, target                                                        |
//! | 6   | ROUTE-REPLY   | probe_id, asker, dest, verdict(8)                                                    |
//!
//! The on-air sizes used for airtime are nominal and include MAC/IP framing,
//! see [`Packet::air_size`].

use thiserror::Error;

use crate::sdaodv::DigestAddr;
use crate::sim::SimTime;
use crate::NodeId;

pub type SeqNum = u32;

pub const RREQ_BYTES: u32 = 48;
pub const RREP_BYTES: u32 = 44;
pub const RERR_BYTES: u32 = 32;
pub const RERR_EXTRA_DEST_BYTES: u32 = 8;
pub const DIGEST_FIELD_BYTES: u32 = 20;
pub const EXCLUDE_ENTRY_BYTES: u32 = 4;
pub const PROBE_BYTES: u32 = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RreqPacket {
    pub src_id: NodeId,
    pub dest_id: NodeId,
    pub src_seq: SeqNum,
    pub dest_seq: SeqNum,
    pub bcast_id: u32,
    pub ttl: u8,
    pub hop_count: u8,
    pub digest_addr: Option<DigestAddr>,
    /// Neighbours the originator has flagged; relays ignore copies heard from them.
    pub exclude: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RrepPacket {
    pub src_id: NodeId,
    pub dest_id: NodeId,
    pub dest_seq: SeqNum,
    pub hop_count: u8,
    pub originator: NodeId,
    pub lifetime_ms: u32,
    pub claimed_next_hop: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RerrPacket {
    pub unreachable: Vec<(NodeId, SeqNum)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataPacket {
    pub flow: u32,
    pub seq: u32,
    pub src: NodeId,
    pub dest: NodeId,
    pub hops_left: u8,
    pub payload_len: u32,
    pub sent_at: SimTime,
    /// Every node that has handled this packet, source first. Simulator
    /// bookkeeping only; not part of the wire format.
    pub trace: Vec<NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RouteConfirm {
    pub probe_id: u32,
    pub asker: NodeId,
    pub dest: NodeId,
    pub target: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeVerdict {
    Confirm = 1,
    Deny = 2,
    /// The relay could not reach the claimed next hop.
    Unreachable = 3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RouteConfirmReply {
    pub probe_id: u32,
    pub asker: NodeId,
    pub dest: NodeId,
    pub verdict: ProbeVerdict,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Packet {
    Rreq(RreqPacket),
    Rrep(RrepPacket),
    Rerr(RerrPacket),
    Data(DataPacket),
    Confirm(RouteConfirm),
    ConfirmReply(RouteConfirmReply),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKind {
    Rreq,
    Rrep,
    Rerr,
    Data,
    Confirm,
    ConfirmReply,
}

impl PacketKind {
    pub const ALL: [PacketKind; 6] = [
        PacketKind::Rreq,
        PacketKind::Rrep,
        PacketKind::Rerr,
        PacketKind::Data,
        PacketKind::Confirm,
        PacketKind::ConfirmReply,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::Rreq => "rreq",
            PacketKind::Rrep => "rrep",
            PacketKind::Rerr => "rerr",
            PacketKind::Data => "data",
            PacketKind::Confirm => "confirm",
            PacketKind::ConfirmReply => "confirm_reply",
        }
    }
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match self {
            Packet::Rreq(_) => PacketKind::Rreq,
            Packet::Rrep(_) => PacketKind::Rrep,
            Packet::Rerr(_) => PacketKind::Rerr,
            Packet::Data(_) => PacketKind::Data,
            Packet::Confirm(_) => PacketKind::Confirm,
            Packet::ConfirmReply(_) => PacketKind::ConfirmReply,
        }
    }

    /// Nominal on-air size in octets.
    pub fn air_size(&self) -> u32 {
        match self {
            Packet::Rreq(r) => {
                RREQ_BYTES
                    + if r.digest_addr.is_some() { DIGEST_FIELD_BYTES } else { 0 }
                    + EXCLUDE_ENTRY_BYTES * r.exclude.len() as u32
            }
            Packet::Rrep(_) => RREP_BYTES,
            Packet::Rerr(e) => {
                RERR_BYTES + RERR_EXTRA_DEST_BYTES * e.unreachable.len().saturating_sub(1) as u32
            }
            Packet::Data(d) => d.payload_len.max(1),
            Packet::Confirm(_) | Packet::ConfirmReply(_) => PROBE_BYTES,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        let id = |out: &mut Vec<u8>, n: NodeId| out.extend_from_slice(&n.0.to_be_bytes());
        let word = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_be_bytes());
        match self {
            Packet::Rreq(r) => {
                out.push(1);
                id(&mut out, r.src_id);
                id(&mut out, r.dest_id);
                word(&mut out, r.src_seq);
                word(&mut out, r.dest_seq);
                word(&mut out, r.bcast_id);
                out.push(r.ttl);
                out.push(r.hop_count);
                match &r.digest_addr {
                    Some(d) => {
                        out.push(1);
                        out.extend_from_slice(d.as_bytes());
                    }
                    None => out.push(0),
                }
                out.push(r.exclude.len() as u8);
                for &n in &r.exclude {
                    id(&mut out, n);
                }
            }
            Packet::Rrep(r) => {
                out.push(2);
                id(&mut out, r.src_id);
                id(&mut out, r.dest_id);
                word(&mut out, r.dest_seq);
                out.push(r.hop_count);
                id(&mut out, r.originator);
                word(&mut out, r.lifetime_ms);
                id(&mut out, r.claimed_next_hop);
            }
            Packet::Rerr(e) => {
                out.push(3);
                out.push(e.unreachable.len() as u8);
                for &(d, s) in &e.unreachable {
                    id(&mut out, d);
                    word(&mut out, s);
                }
            }
            Packet::Data(d) => {
                out.push(4);
                word(&mut out, d.flow);
                word(&mut out, d.seq);
                id(&mut out, d.src);
                id(&mut out, d.dest);
                out.push(d.hops_left);
                word(&mut out, d.payload_len);
                out.extend_from_slice(&d.sent_at.as_micros().to_be_bytes());
            }
            Packet::Confirm(c) => {
                out.push(5);
                word(&mut out, c.probe_id);
                id(&mut out, c.asker);
                id(&mut out, c.dest);
                id(&mut out, c.target);
            }
            Packet::ConfirmReply(c) => {
                out.push(6);
                word(&mut out, c.probe_id);
                id(&mut out, c.asker);
                id(&mut out, c.dest);
                out.push(c.verdict as u8);
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Packet, WireError> {
        let mut r = Reader { buf, pos: 0 };
        let tag = r.u8()?;
        let pkt = match tag {
            1 => {
                let src_id = r.id()?;
                let dest_id = r.id()?;
                let src_seq = r.u32()?;
                let dest_seq = r.u32()?;
                let bcast_id = r.u32()?;
                let ttl = r.u8()?;
                let hop_count = r.u8()?;
                let digest_addr = match r.u8()? {
                    0 => None,
                    1 => Some(DigestAddr::from_bytes(r.take::<20>()?)),
                    other => return Err(WireError::BadFlag(other)),
                };
                let n = r.u8()? as usize;
                let exclude = (0..n).map(|_| r.id()).collect::<Result<_, _>>()?;
                Packet::Rreq(RreqPacket {
                    src_id,
                    dest_id,
                    src_seq,
                    dest_seq,
                    bcast_id,
                    ttl,
                    hop_count,
                    digest_addr,
                    exclude,
                })
            }
            2 => Packet::Rrep(RrepPacket {
                src_id: r.id()?,
                dest_id: r.id()?,
                dest_seq: r.u32()?,
                hop_count: r.u8()?,
                originator: r.id()?,
                lifetime_ms: r.u32()?,
                claimed_next_hop: r.id()?,
            }),
            3 => {
                let n = r.u8()? as usize;
                let unreachable =
                    (0..n).map(|_| Ok((r.id()?, r.u32()?))).collect::<Result<_, WireError>>()?;
                Packet::Rerr(RerrPacket { unreachable })
            }
            4 => Packet::Data(DataPacket {
                flow: r.u32()?,
                seq: r.u32()?,
                src: r.id()?,
                dest: r.id()?,
                hops_left: r.u8()?,
                payload_len: r.u32()?,
                sent_at: SimTime::from_micros(u64::from_be_bytes(r.take::<8>()?)),
                trace: Vec::new(),
            }),
            5 => Packet::Confirm(RouteConfirm {
                probe_id: r.u32()?,
                asker: r.id()?,
                dest: r.id()?,
                target: r.id()?,
            }),
            6 => Packet::ConfirmReply(RouteConfirmReply {
                probe_id: r.u32()?,
                asker: r.id()?,
                dest: r.id()?,
                verdict: match r.u8()? {
                    1 => ProbeVerdict::Confirm,
                    2 => ProbeVerdict::Deny,
                    3 => ProbeVerdict::Unreachable,
                    other => return Err(WireError::BadFlag(other)),
                },
            }),
            other => return Err(WireError::UnknownTag(other)),
        };
        if r.pos != buf.len() {
            return Err(WireError::Trailing(buf.len() - r.pos));
        }
        Ok(pkt)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated packet")]
    Truncated,
    #[error("unknown packet tag {0}")]
    UnknownTag(u8),
    #[error("invalid flag byte {0}")]
    BadFlag(u8),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let end = self.pos + N;
        let bytes = self.buf.get(self.pos..end).ok_or(WireError::Truncated)?;
        self.pos = end;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take::<4>()?))
    }

    fn id(&mut self) -> Result<NodeId, WireError> {
        self.u32().map(NodeId)
    }
}
