//! Bit-exact codec for the 32-bit co-processor command words, SRAM address
//! mapping for the I/O pool, the text assembly format, and assembly of a
//! server program into an executable instruction stream.
//!
//! Word layout (bit ranges inclusive):
//!   [1:0]   class: 00 = c-type, 01 = p-type, 10 = i-type, 11 reserved
//!   [8:2]   task id (7 bits, zero for c-type)
//!   [11:9]  server id (3 bits, zero for i.run)
//!   [31:12] service:
//!     c-type: bit 31 = 0 set / 1 enr, [30:12] 19-bit value
//!     p/i-type loads: bit 31 = 0 (i-type bit 31 = 1 is i.run),
//!                     [30:26] plen−1 (5 bits), [25:12] priority (14 bits)
//!
//! Decoding is strict: padding bits that must be zero are checked, so every
//! successfully decoded word re-encodes to itself.

use crate::domain::Tick;
use crate::sched::ScheduleSolution;
use crate::server_config::EtsProgram;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const MAX_ETS: u8 = 7;
pub const MAX_TID: u8 = 127;
pub const MAX_PLEN: u8 = 32;
pub const MAX_PRIO: u16 = (1 << 14) - 1;
pub const MAX_VALUE: u32 = (1 << 19) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instruction {
    /// Set a server's budget (kernel mode).
    CSet { ets: u8, budget: u32 },
    /// Enroll a server with a start time (kernel mode).
    CEnr { ets: u8, start: u32 },
    /// Pre-load a task into a server.
    PLd { ets: u8, tid: u8, plen: u8, prio: u16 },
    /// Immediately load a task into a server.
    ILd { ets: u8, tid: u8, plen: u8, prio: u16 },
    /// Trigger a pre-loaded task.
    IRun { tid: u8 },
}

impl Instruction {
    /// c-type instructions are privileged.
    pub fn is_privileged(&self) -> bool {
        matches!(self, Instruction::CSet { .. } | Instruction::CEnr { .. })
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("{field} overflow: {value} exceeds {max}")]
    FieldOverflow {
        field: &'static str,
        value: u64,
        max: u64,
    },
    #[error("plen must be in [1, 32], got {0}")]
    PlenRange(u8),
    #[error("reserved opcode")]
    ReservedOpcode,
    #[error("reserved p-type sub-opcode")]
    ReservedSubOpcode,
    #[error("non-canonical word: {0}")]
    NonCanonical(&'static str),
}

fn check(field: &'static str, value: u64, max: u64) -> Result<(), CodecError> {
    if value > max {
        Err(CodecError::FieldOverflow { field, value, max })
    } else {
        Ok(())
    }
}

const CLASS_C: u32 = 0b00;
const CLASS_P: u32 = 0b01;
const CLASS_I: u32 = 0b10;

fn pack_load(class: u32, run_bit: u32, ets: u8, tid: u8, plen: u8, prio: u16) -> u32 {
    class
        | (tid as u32) << 2
        | (ets as u32) << 9
        | (prio as u32) << 12
        | ((plen as u32) - 1) << 26
        | run_bit << 31
}

/// Packs an instruction into its 32-bit word.
pub fn encode(i: &Instruction) -> Result<u32, CodecError> {
    match *i {
        Instruction::CSet { ets, budget } => {
            check("ets", ets as u64, MAX_ETS as u64)?;
            check("budget", budget as u64, MAX_VALUE as u64)?;
            Ok(CLASS_C | (ets as u32) << 9 | budget << 12)
        }
        Instruction::CEnr { ets, start } => {
            check("ets", ets as u64, MAX_ETS as u64)?;
            check("start", start as u64, MAX_VALUE as u64)?;
            Ok(CLASS_C | (ets as u32) << 9 | start << 12 | 1 << 31)
        }
        Instruction::PLd { ets, tid, plen, prio } => {
            check("ets", ets as u64, MAX_ETS as u64)?;
            check("tid", tid as u64, MAX_TID as u64)?;
            check("prio", prio as u64, MAX_PRIO as u64)?;
            if plen == 0 || plen > MAX_PLEN {
                return Err(CodecError::PlenRange(plen));
            }
            Ok(pack_load(CLASS_P, 0, ets, tid, plen, prio))
        }
        Instruction::ILd { ets, tid, plen, prio } => {
            check("ets", ets as u64, MAX_ETS as u64)?;
            check("tid", tid as u64, MAX_TID as u64)?;
            check("prio", prio as u64, MAX_PRIO as u64)?;
            if plen == 0 || plen > MAX_PLEN {
                return Err(CodecError::PlenRange(plen));
            }
            Ok(pack_load(CLASS_I, 0, ets, tid, plen, prio))
        }
        Instruction::IRun { tid } => {
            check("tid", tid as u64, MAX_TID as u64)?;
            Ok(CLASS_I | (tid as u32) << 2 | 1 << 31)
        }
    }
}

/// Decodes a 32-bit word. Exact inverse of [`encode`] on its image.
pub fn decode(word: u32) -> Result<Instruction, CodecError> {
    let class = word & 0b11;
    let tid = ((word >> 2) & 0x7f) as u8;
    let ets = ((word >> 9) & 0x7) as u8;
    let prio = ((word >> 12) & 0x3fff) as u16;
    let plen = ((word >> 26) & 0x1f) as u8 + 1;
    let hi = word >> 31;
    let value = (word >> 12) & MAX_VALUE;
    match class {
        CLASS_C => {
            if tid != 0 {
                return Err(CodecError::NonCanonical("c-type with nonzero task field"));
            }
            if hi == 0 {
                Ok(Instruction::CSet { ets, budget: value })
            } else {
                Ok(Instruction::CEnr { ets, start: value })
            }
        }
        CLASS_P => {
            if hi != 0 {
                return Err(CodecError::ReservedSubOpcode);
            }
            Ok(Instruction::PLd { ets, tid, plen, prio })
        }
        CLASS_I => {
            if hi == 0 {
                Ok(Instruction::ILd { ets, tid, plen, prio })
            } else {
                if ets != 0 || prio != 0 || plen != 1 {
                    return Err(CodecError::NonCanonical("i.run with nonzero service bits"));
                }
                Ok(Instruction::IRun { tid })
            }
        }
        _ => Err(CodecError::ReservedOpcode),
    }
}

/// 12-bit I/O pool address: upper 7 bits task id, lower 5 bits operation
/// release order.
pub fn sram_address(tid: u8, op_index: u8) -> Result<u16, CodecError> {
    check("tid", tid as u64, MAX_TID as u64)?;
    check("op_index", op_index as u64, 31)?;
    Ok((tid as u16) * 32 + op_index as u16)
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::CSet { ets, budget } => write!(f, "c.set {}, S{}", budget, ets),
            Instruction::CEnr { ets, start } => write!(f, "c.enr {}, S{}", start, ets),
            Instruction::PLd { ets, tid, plen, prio } => {
                write!(f, "p.ld T{} L{} Q{}, S{}", tid, plen, prio, ets)
            }
            Instruction::ILd { ets, tid, plen, prio } => {
                write!(f, "i.ld T{} L{} Q{}, S{}", tid, plen, prio, ets)
            }
            Instruction::IRun { tid } => write!(f, "i.run T{}", tid),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct AsmParseError {
    pub line: usize,
    pub message: String,
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, AsmParseError> {
    s.parse().map_err(|_| AsmParseError {
        line,
        message: format!("invalid {}: {:?}", what, s),
    })
}

fn parse_tagged(s: &str, tag: char, line: usize, what: &str) -> Result<u64, AsmParseError> {
    match s.strip_prefix(tag) {
        Some(rest) => parse_num(rest, line, what),
        None => Err(AsmParseError {
            line,
            message: format!("expected {}<n> for {}, got {:?}", tag, what, s),
        }),
    }
}

/// Parses one line of text assembly, e.g. `c.set 100, S3`.
pub fn parse_asm_line(text: &str, line: usize) -> Result<Instruction, AsmParseError> {
    let text = text.trim();
    let toks: Vec<&str> = text
        .split([' ', ',', '\t'])
        .filter(|t| !t.is_empty())
        .collect();
    let err = |message: String| AsmParseError { line, message };
    match toks.as_slice() {
        ["c.set", value, server] => Ok(Instruction::CSet {
            budget: parse_num(value, line, "budget")?,
            ets: parse_tagged(server, 'S', line, "server")? as u8,
        }),
        ["c.enr", value, server] => Ok(Instruction::CEnr {
            start: parse_num(value, line, "start")?,
            ets: parse_tagged(server, 'S', line, "server")? as u8,
        }),
        [op @ ("p.ld" | "i.ld"), tid, plen, prio, server] => {
            let i = Instruction::PLd {
                tid: parse_tagged(tid, 'T', line, "task")? as u8,
                plen: parse_tagged(plen, 'L', line, "plen")? as u8,
                prio: parse_tagged(prio, 'Q', line, "priority")? as u16,
                ets: parse_tagged(server, 'S', line, "server")? as u8,
            };
            if *op == "i.ld" {
                if let Instruction::PLd { ets, tid, plen, prio } = i {
                    return Ok(Instruction::ILd { ets, tid, plen, prio });
                }
            }
            Ok(i)
        }
        ["i.run", tid] => Ok(Instruction::IRun {
            tid: parse_tagged(tid, 'T', line, "task")? as u8,
        }),
        [] => Err(err("empty line".to_string())),
        [op, ..] => Err(err(format!("unknown or malformed instruction {:?}", op))),
    }
}

/// Parses a whole assembly listing; blank lines and `#` comments are skipped.
pub fn parse_asm(text: &str) -> Result<Vec<Instruction>, AsmParseError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_asm_line(line, n + 1)?);
    }
    Ok(out)
}

/// Serializes a stream as little-endian 32-bit words.
pub fn to_bytes(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StreamError {
    #[error("stream length {0} is not a multiple of 4")]
    Truncated(usize),
    #[error("word {index}: {source}")]
    Word {
        index: usize,
        #[source]
        source: CodecError,
    },
}

/// Splits a byte stream into words, validating the length.
pub fn from_bytes(bytes: &[u8]) -> Result<Vec<u32>, StreamError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(StreamError::Truncated(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Decodes every word of a byte stream.
pub fn decode_stream(bytes: &[u8]) -> Result<Vec<Instruction>, StreamError> {
    let words = from_bytes(bytes)?;
    words
        .iter()
        .enumerate()
        .map(|(index, &w)| decode(w).map_err(|source| StreamError::Word { index, source }))
        .collect()
}

/// Job start offsets travel beside the word stream; the wire format itself
/// carries only priorities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub jobs: Vec<SidecarJob>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidecarJob {
    pub tid: u8,
    pub j: u32,
    pub server: u8,
    pub theta: Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledProgram {
    pub instructions: Vec<Instruction>,
    pub sidecar: Sidecar,
}

impl AssembledProgram {
    pub fn words(&self) -> Result<Vec<u32>, CodecError> {
        self.instructions.iter().map(encode).collect()
    }

    pub fn listing(&self) -> String {
        let mut s = String::new();
        for i in &self.instructions {
            s.push_str(&i.to_string());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AssembleError {
    #[error("solution is infeasible; refusing to assemble")]
    Infeasible,
    #[error("program has {0} servers but the server id field holds at most 8")]
    TooManyServers(usize),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Emits the configuration stream for a finalized program: per server
/// (ascending start) a `c.set`/`c.enr` pair, then one `p.ld` per job in
/// start order. Job priority is the within-server start rank; plen is the
/// abstract operation count (one per WCET tick), capped at the SRAM block
/// size.
pub fn assemble_program(
    prog: &EtsProgram,
    sol: &ScheduleSolution,
    jobs: &[crate::domain::JobInstance],
) -> Result<AssembledProgram, AssembleError> {
    if !sol.feasible {
        return Err(AssembleError::Infeasible);
    }
    if prog.servers.len() > MAX_ETS as usize + 1 {
        return Err(AssembleError::TooManyServers(prog.servers.len()));
    }
    let mut instructions = Vec::new();
    let mut sidecar = Vec::new();
    for (k, server) in prog.servers.iter().enumerate() {
        let ets = k as u8;
        check_u32("budget", server.lambda_final)?;
        check_u32("start", server.alpha)?;
        instructions.push(Instruction::CSet {
            ets,
            budget: server.lambda_final as u32,
        });
        instructions.push(Instruction::CEnr {
            ets,
            start: server.alpha as u32,
        });
        let mut by_theta = server.jobs.clone();
        by_theta.sort_by_key(|a| a.theta);
        for (rank, a) in by_theta.iter().enumerate() {
            debug_assert!(
                sol.theta(a.task, a.index).is_some(),
                "program job missing from solution"
            );
            let wcet = jobs
                .iter()
                .find(|j| j.task == a.task && j.index == a.index)
                .map(|j| j.wcet)
                .unwrap_or(1);
            instructions.push(Instruction::PLd {
                ets,
                tid: a.task,
                plen: wcet.min(MAX_PLEN as Tick) as u8,
                prio: rank as u16,
            });
            sidecar.push(SidecarJob {
                tid: a.task,
                j: a.index,
                server: ets,
                theta: a.theta,
            });
        }
    }
    Ok(AssembledProgram {
        instructions,
        sidecar: Sidecar { jobs: sidecar },
    })
}

fn check_u32(field: &'static str, v: Tick) -> Result<(), CodecError> {
    check(field, v, MAX_VALUE as u64)
}
