use super::RamStyle;
use crate::diag::{DiagClass, Diagnostic, Span};
use crate::ir::*;
use serde::Serialize;
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageKind {
    /// Block RAM, registered read.
    Block,
    /// Distributed (LUT) RAM, registered read.
    Dist,
    /// Individual registers, combinational read.
    Registers,
    /// Owned by the caller; only the port buses exist here.
    External,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PortBinding {
    pub name: String,
    pub kind: String,
    pub banks_used: Vec<u64>,
    pub accesses: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StorageBinding {
    pub name: String,
    pub loc: String,
    pub kind: StorageKind,
    pub element_width: u32,
    pub banks: u64,
    pub words_per_bank: u64,
    pub addr_width: u32,
    pub read_latency: u64,
    pub ports: Vec<PortBinding>,
}

/// One access site: the port it goes through and its indices, `None` where
/// the index is only known at run time.
#[derive(Clone, Debug)]
pub struct Access {
    pub port: String,
    pub indices: Vec<Option<u64>>,
    pub span: Span,
}

pub(crate) fn addr_width(words: u64) -> u32 {
    bits_for(words.saturating_sub(1))
}

fn port_kind(p: PortKind) -> &'static str {
    match p {
        PortKind::Read => "r",
        PortKind::Write => "w",
        PortKind::ReadWrite => "rw",
    }
}

/// Binds a tensor to storage. `ports` lists every port onto the tensor;
/// `external` marks a function argument, whose storage lives in the caller.
#[allow(clippy::too_many_arguments)]
pub fn lower_memref(
    name: &str,
    mt: &MemrefType,
    ports: &[(String, PortKind)],
    accesses: &[Access],
    external: bool,
    style: RamStyle,
    port_limit: usize,
    span: &Span,
) -> Result<StorageBinding, Diagnostic> {
    let kind = if external {
        StorageKind::External
    } else {
        match (mt.storage, style) {
            (Storage::Ram, RamStyle::Auto | RamStyle::Block) => StorageKind::Block,
            (Storage::Ram, RamStyle::Dist) => StorageKind::Dist,
            (Storage::Reg, RamStyle::Auto | RamStyle::Reg) => StorageKind::Registers,
            (Storage::Ram, RamStyle::Reg) | (Storage::Reg, RamStyle::Block | RamStyle::Dist) => {
                let declared = if mt.storage == Storage::Ram { "ram" } else { "reg" };
                return Err(Diagnostic::error(
                    DiagClass::RamStyle,
                    span.clone(),
                    format!(
                        "%{name} is declared '{declared}' storage; --ram-style={} would change its read latency",
                        match style {
                            RamStyle::Block => "block",
                            RamStyle::Dist => "dist",
                            _ => "reg",
                        }
                    ),
                ));
            }
        }
    };
    let bindings: Vec<PortBinding> = ports
        .iter()
        .map(|(p, k)| {
            let mine: Vec<_> = accesses.iter().filter(|a| &a.port == p).collect();
            let banks: BTreeSet<u64> = mine
                .iter()
                .map(|a| mt.bank_of(&a.indices.iter().map(|i| i.unwrap_or(0)).collect::<Vec<_>>()))
                .collect();
            PortBinding { name: p.clone(), kind: port_kind(*k).into(), banks_used: banks.into_iter().collect(), accesses: mine.len() }
        })
        .collect();
    if matches!(kind, StorageKind::Block | StorageKind::Dist) {
        for bank in 0..mt.bank_count() {
            let used: Vec<&str> =
                bindings.iter().filter(|b| b.banks_used.contains(&bank)).map(|b| b.name.as_str()).collect();
            if used.len() > port_limit {
                return Err(Diagnostic::error(
                    DiagClass::PortLimit,
                    span.clone(),
                    format!(
                        "bank {bank} of %{name} is accessed through {} ports ({}) but a RAM has at most {port_limit}; \
                         RAMs are dual ported",
                        used.len(),
                        used.iter().map(|p| format!("%{p}")).collect::<Vec<_>>().join(", ")
                    ),
                ));
            }
        }
    }
    Ok(StorageBinding {
        name: name.to_string(),
        loc: span.to_string(),
        kind,
        element_width: mt.elem.width(),
        banks: mt.bank_count(),
        words_per_bank: mt.words_per_bank(),
        addr_width: addr_width(mt.words_per_bank()),
        read_latency: mt.read_latency(),
        ports: bindings,
    })
}

/// Index operand as seen by the address generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Index {
    Const(u64),
    Signal(String),
}

/// Bank number and word-address expression of an access. Distributed indices
/// must be constants; packed dimensions are linearized row-major.
pub(crate) fn address(mt: &MemrefType, idx: &[Index]) -> (u64, String) {
    let consts: Vec<u64> = idx.iter().map(|i| if let Index::Const(c) = i { *c } else { 0 }).collect();
    let bank = mt.bank_of(&consts);
    let aw = addr_width(mt.words_per_bank());
    let packed: Vec<(usize, u64)> =
        mt.dims.iter().enumerate().filter(|(_, k)| **k == DimKind::Packed).map(|(d, _)| (d, mt.shape[d])).collect();
    let mut stride = 1u64;
    let mut strides = vec![0u64; packed.len()];
    for (k, (_, ext)) in packed.iter().enumerate().rev() {
        strides[k] = stride;
        stride *= ext;
    }
    let mut konst = 0u64;
    let mut terms = Vec::new();
    for ((d, _), s) in packed.iter().zip(&strides) {
        match &idx[*d] {
            Index::Const(c) => konst += c * s,
            Index::Signal(n) if *s == 1 => terms.push(n.clone()),
            Index::Signal(n) => terms.push(format!("{n} * {}", super::lit(*s as i64, aw))),
        }
    }
    if terms.is_empty() {
        return (bank, super::lit(konst as i64, aw));
    }
    if konst != 0 {
        terms.push(super::lit(konst as i64, aw));
    }
    (bank, terms.join(" + "))
}
