//! Canonical byte encoding of blocks, and the length-prefixed dump format.
//!
//! Body layout (all integers big-endian):
//!
//! ```text
//! u8      version (= 1)
//! [32]    creator key
//! u8      payload tag      0 genesis | 1 transaction | 2 approval | 3 friend
//! u32     payload length
//! ...     payload fields, in declaration order
//! u32     pointer count
//! ...     pointers, ascending by digest: [32 digest][32 creator][64 signature]
//! ```
//!
//! A block on the wire is `[32 digest][64 signature][body]`, and a dump is a
//! sequence of `u32 length || wire block` records.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::block::{
    Approval, ApprovalVerdict, Block, BlockHash, Comment, Payload, Payment, Transaction,
};
use super::crypto::{AgentId, Digest, Signature, AGENT_ID_LEN, DIGEST_LEN, SIGNATURE_LEN};

pub const ENCODING_VERSION: u8 = 1;

const TAG_GENESIS: u8 = 0;
const TAG_TRANSACTION: u8 = 1;
const TAG_APPROVAL: u8 = 2;
const TAG_FRIEND: u8 = 3;

const COMMENT_NONE: u8 = 0;
const COMMENT_REDEEM: u8 = 1;
const COMMENT_REPAY: u8 = 2;
const COMMENT_TEXT: u8 = 3;

const HASH_LEN: usize = DIGEST_LEN + AGENT_ID_LEN + SIGNATURE_LEN;
const WIRE_HEADER: usize = DIGEST_LEN + SIGNATURE_LEN;
/// Upper bound on a single dump record; anything larger is corrupt input.
const MAX_RECORD: usize = 16 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("pointers are not strictly ascending by digest at index {0}")]
    UnsortedPointers(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input at byte {0}")]
    Truncated(usize),
    #[error("unsupported encoding version {0}")]
    Version(u8),
    #[error("unknown {what} tag {tag}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("payload length {declared} does not match {actual} bytes read")]
    PayloadLength { declared: usize, actual: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("free-text comment is not UTF-8")]
    Utf8,
    #[error("record of {0} bytes exceeds limit")]
    RecordTooLarge(usize),
    #[error(transparent)]
    Pointers(#[from] EncodeError),
}

/// Deterministic encoding of `(creator, payload, pointers)`; the block digest
/// is the SHA-256 of these bytes.
pub fn canonical_encode(
    creator: &AgentId,
    payload: &Payload,
    pointers: &[BlockHash],
) -> Result<Vec<u8>, EncodeError> {
    check_sorted(pointers)?;
    let mut body = Vec::with_capacity(64 + pointers.len() * HASH_LEN);
    body.push(ENCODING_VERSION);
    body.extend_from_slice(creator.as_bytes());
    let mut fields = Vec::new();
    let tag = encode_payload(payload, &mut fields);
    body.push(tag);
    put_u32(&mut body, fields.len());
    body.extend_from_slice(&fields);
    put_u32(&mut body, pointers.len());
    for p in pointers {
        put_hash(&mut body, p);
    }
    Ok(body)
}

fn check_sorted(pointers: &[BlockHash]) -> Result<(), EncodeError> {
    for (i, w) in pointers.windows(2).enumerate() {
        if w[0].digest >= w[1].digest {
            return Err(EncodeError::UnsortedPointers(i + 1));
        }
    }
    Ok(())
}

fn encode_payload(payload: &Payload, out: &mut Vec<u8>) -> u8 {
    match payload {
        Payload::Genesis => TAG_GENESIS,
        Payload::Transaction(tx) => {
            out.extend_from_slice(tx.currency.as_bytes());
            put_u32(out, tx.payments.len());
            for p in &tx.payments {
                out.extend_from_slice(p.recipient.as_bytes());
                out.extend_from_slice(&p.amount.to_be_bytes());
            }
            match &tx.comment {
                Comment::None => out.push(COMMENT_NONE),
                Comment::Redeem(prefs) => {
                    out.push(COMMENT_REDEEM);
                    put_u32(out, prefs.len());
                    for a in prefs {
                        out.extend_from_slice(a.as_bytes());
                    }
                }
                Comment::Repay(h) => {
                    out.push(COMMENT_REPAY);
                    put_hash(out, h);
                }
                Comment::FreeText(s) => {
                    out.push(COMMENT_TEXT);
                    put_u32(out, s.len());
                    out.extend_from_slice(s.as_bytes());
                }
            }
            TAG_TRANSACTION
        }
        Payload::Approval(a) => {
            put_hash(out, &a.target);
            match &a.verdict {
                ApprovalVerdict::Approve => out.push(0),
                ApprovalVerdict::Disapprove { evidence } => {
                    out.push(1);
                    put_hash(out, evidence);
                }
            }
            TAG_APPROVAL
        }
        Payload::Friend(other) => {
            out.extend_from_slice(other.as_bytes());
            TAG_FRIEND
        }
    }
}

fn put_u32(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&(n as u32).to_be_bytes());
}

fn put_hash(out: &mut Vec<u8>, h: &BlockHash) {
    out.extend_from_slice(h.digest.as_bytes());
    out.extend_from_slice(h.creator.as_bytes());
    out.extend_from_slice(h.signature.as_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated(self.pos))?;
        let s = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated(self.buf.len()))?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, DecodeError> {
        Ok(u32::from_be_bytes(self.array()?) as usize)
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    fn agent(&mut self) -> Result<AgentId, DecodeError> {
        Ok(AgentId::from_bytes(self.array()?))
    }

    fn hash(&mut self) -> Result<BlockHash, DecodeError> {
        Ok(BlockHash {
            digest: Digest::from_bytes(self.array()?),
            creator: self.agent()?,
            signature: Signature::from_bytes(self.array()?),
        })
    }

    /// Bounds a count read from untrusted input by the bytes left.
    fn count(&mut self, item_len: usize) -> Result<usize, DecodeError> {
        let n = self.u32()?;
        if n.saturating_mul(item_len) > self.buf.len() - self.pos {
            return Err(DecodeError::Truncated(self.buf.len()));
        }
        Ok(n)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Inverse of [`canonical_encode`].
pub fn canonical_decode(
    bytes: &[u8],
) -> Result<(AgentId, Payload, Vec<BlockHash>), DecodeError> {
    let mut c = Cursor::new(bytes);
    let version = c.u8()?;
    if version != ENCODING_VERSION {
        return Err(DecodeError::Version(version));
    }
    let creator = c.agent()?;
    let tag = c.u8()?;
    let len = c.u32()?;
    let start = c.pos;
    let fields = c.take(len)?;
    let mut f = Cursor::new(fields);
    let payload = decode_payload(tag, &mut f)?;
    if f.remaining() != 0 {
        return Err(DecodeError::PayloadLength {
            declared: len,
            actual: f.pos,
        });
    }
    debug_assert_eq!(c.pos, start + len);
    let n = c.count(HASH_LEN)?;
    let mut pointers = Vec::with_capacity(n);
    for _ in 0..n {
        pointers.push(c.hash()?);
    }
    if c.remaining() != 0 {
        return Err(DecodeError::Trailing(c.remaining()));
    }
    check_sorted(&pointers)?;
    Ok((creator, payload, pointers))
}

fn decode_payload(tag: u8, f: &mut Cursor<'_>) -> Result<Payload, DecodeError> {
    Ok(match tag {
        TAG_GENESIS => Payload::Genesis,
        TAG_TRANSACTION => {
            let currency = f.agent()?;
            let n = f.count(AGENT_ID_LEN + 8)?;
            let mut payments = Vec::with_capacity(n);
            for _ in 0..n {
                let recipient = f.agent()?;
                let amount = f.u64()?;
                payments.push(Payment { recipient, amount });
            }
            let comment = match f.u8()? {
                COMMENT_NONE => Comment::None,
                COMMENT_REDEEM => {
                    let k = f.count(AGENT_ID_LEN)?;
                    let mut prefs = Vec::with_capacity(k);
                    for _ in 0..k {
                        prefs.push(f.agent()?);
                    }
                    Comment::Redeem(prefs)
                }
                COMMENT_REPAY => Comment::Repay(f.hash()?),
                COMMENT_TEXT => {
                    let k = f.count(1)?;
                    let s = std::str::from_utf8(f.take(k)?).map_err(|_| DecodeError::Utf8)?;
                    Comment::FreeText(s.to_owned())
                }
                tag => return Err(DecodeError::UnknownTag { what: "comment", tag }),
            };
            Payload::Transaction(Transaction {
                currency,
                payments,
                comment,
            })
        }
        TAG_APPROVAL => {
            let target = f.hash()?;
            let verdict = match f.u8()? {
                0 => ApprovalVerdict::Approve,
                1 => ApprovalVerdict::Disapprove {
                    evidence: f.hash()?,
                },
                tag => return Err(DecodeError::UnknownTag { what: "verdict", tag }),
            };
            Payload::Approval(Approval { target, verdict })
        }
        TAG_FRIEND => Payload::Friend(f.agent()?),
        tag => return Err(DecodeError::UnknownTag { what: "payload", tag }),
    })
}

/// Wire form of a block: digest, signature, then the canonical body.
pub fn encode_block(block: &Block) -> Vec<u8> {
    let body = canonical_encode(&block.creator(), block.payload(), block.pointers())
        .expect("blocks hold sorted pointers");
    let mut out = Vec::with_capacity(WIRE_HEADER + body.len());
    out.extend_from_slice(block.digest().as_bytes());
    out.extend_from_slice(block.hash().signature.as_bytes());
    out.extend_from_slice(&body);
    out
}

/// Parses a wire block. The digest and signature are taken as given; run
/// [`verify_block`](super::verify_block) before trusting the result.
pub fn decode_block(bytes: &[u8]) -> Result<Block, DecodeError> {
    if bytes.len() < WIRE_HEADER {
        return Err(DecodeError::Truncated(bytes.len()));
    }
    let digest = Digest::from_bytes(bytes[..DIGEST_LEN].try_into().expect("sized"));
    let signature = Signature::from_bytes(bytes[DIGEST_LEN..WIRE_HEADER].try_into().expect("sized"));
    let (creator, payload, pointers) = canonical_decode(&bytes[WIRE_HEADER..])?;
    Ok(Block::from_parts(
        BlockHash {
            digest,
            creator,
            signature,
        },
        payload,
        pointers,
    ))
}

/// Writes blocks as length-prefixed wire records.
pub fn write_dump<'a, W: Write>(
    mut w: W,
    blocks: impl IntoIterator<Item = &'a Block>,
) -> io::Result<()> {
    for b in blocks {
        let wire = encode_block(b);
        w.write_all(&(wire.len() as u32).to_be_bytes())?;
        w.write_all(&wire)?;
    }
    w.flush()
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("record {index}: {source}")]
    Record { index: usize, source: DecodeError },
}

/// Reads every record of a dump. A partial trailing record is an error.
pub fn read_dump<R: Read>(mut r: R) -> Result<Vec<Block>, DumpError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < buf.len() {
        let index = out.len();
        let rec = |source| DumpError::Record { index, source };
        let len_bytes = buf
            .get(pos..pos + 4)
            .ok_or_else(|| rec(DecodeError::Truncated(buf.len())))?;
        let len = u32::from_be_bytes(len_bytes.try_into().expect("sized")) as usize;
        if len > MAX_RECORD {
            return Err(rec(DecodeError::RecordTooLarge(len)));
        }
        pos += 4;
        let wire = buf
            .get(pos..pos + len)
            .ok_or_else(|| rec(DecodeError::Truncated(buf.len())))?;
        out.push(decode_block(wire).map_err(rec)?);
        pos += len;
    }
    Ok(out)
}
