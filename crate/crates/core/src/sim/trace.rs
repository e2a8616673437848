use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PortTxn {
    pub port: String,
    pub bank: u64,
    pub write: bool,
    /// Flattened cell index; `None` when the address was poisoned.
    pub addr: Option<u64>,
    /// `None` for poison.
    pub data: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CycleRecord {
    /// Root instants that occur this cycle.
    pub events: Vec<String>,
    pub ports: Vec<PortTxn>,
    pub values: Vec<(String, Option<i64>)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub cycles: BTreeMap<u64, CycleRecord>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Sig {
    Pulse,
    Bus(u32),
}

impl Trace {
    pub(crate) fn at(&mut self, cycle: u64) -> &mut CycleRecord {
        self.cycles.entry(cycle).or_default()
    }

    pub fn last_cycle(&self) -> u64 {
        self.cycles.keys().next_back().copied().unwrap_or(0)
    }

    /// Per-cycle CSV: `cycle,kind,name,bank,addr,data`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_else(|| "x".into());
        let mut out = String::from("cycle,kind,name,bank,addr,data\n");
        for (c, r) in &self.cycles {
            for e in &r.events {
                writeln!(out, "{c},event,{e},,,").unwrap();
            }
            for p in &r.ports {
                let kind = if p.write { "write" } else { "read" };
                writeln!(out, "{c},{kind},{},{},{},{}", p.port, p.bank, opt(p.addr.map(|a| a as i64)), opt(p.data)).unwrap();
            }
            for (n, v) in &r.values {
                writeln!(out, "{c},value,{n},,,{}", opt(*v)).unwrap();
            }
        }
        out
    }

    /// Value-change dump with one time unit per cycle. Events and port
    /// enables are pulses; addresses and data hold their last value.
    pub fn to_vcd(&self, top: &str) -> String {
        let mut sigs: BTreeMap<String, Sig> = BTreeMap::new();
        for r in self.cycles.values() {
            for e in &r.events {
                sigs.insert(e.clone(), Sig::Pulse);
            }
            for p in &r.ports {
                let pre = format!("{}_b{}", p.port, p.bank);
                sigs.insert(format!("{pre}_{}", if p.write { "wr" } else { "rd" }), Sig::Pulse);
                sigs.insert(format!("{pre}_addr"), Sig::Bus(32));
                sigs.insert(format!("{pre}_{}data", if p.write { "wr_" } else { "rd_" }), Sig::Bus(64));
            }
            for (n, _) in &r.values {
                sigs.insert(n.clone(), Sig::Bus(64));
            }
        }
        let ids: BTreeMap<&str, String> = sigs.keys().enumerate().map(|(i, n)| (n.as_str(), vcd_id(i))).collect();
        let mut out = String::new();
        out.push_str("$timescale 1ns $end\n");
        writeln!(out, "$scope module {} $end", vcd_name(top)).unwrap();
        for (n, s) in &sigs {
            let w = match s {
                Sig::Pulse => 1,
                Sig::Bus(w) => *w,
            };
            writeln!(out, "$var wire {w} {} {} $end", ids[n.as_str()], vcd_name(n)).unwrap();
        }
        out.push_str("$upscope $end\n$enddefinitions $end\n");

        let mut cur: BTreeMap<&str, String> = BTreeMap::new();
        let fmt = |s: Sig, v: Option<i64>| match (s, v) {
            (Sig::Pulse, Some(x)) => format!("{}", x & 1),
            (Sig::Pulse, None) => "x".into(),
            (Sig::Bus(w), Some(x)) => {
                let m = if w >= 64 { x as u64 } else { (x as u64) & ((1u64 << w) - 1) };
                format!("b{m:b} ")
            }
            (Sig::Bus(_), None) => "bx ".into(),
        };
        let mut pulses_high: BTreeSet<&str> = BTreeSet::new();
        let emit = |out: &mut String, cur: &mut BTreeMap<&str, String>, n: &'_ str, text: String, id: &str| {
            if cur.get(n) != Some(&text) {
                writeln!(out, "{text}{id}").unwrap();
            }
        };
        out.push_str("#0\n$dumpvars\n");
        for (n, s) in &sigs {
            let t = fmt(*s, if *s == Sig::Pulse { Some(0) } else { None });
            emit(&mut out, &mut cur, n, t.clone(), &ids[n.as_str()]);
            cur.insert(n.as_str(), t);
        }
        out.push_str("$end\n");
        let last = self.last_cycle() + 1;
        let cycles: Vec<u64> = self.cycles.keys().copied().chain(std::iter::once(last)).collect();
        let mut prev_cycle = None;
        for c in cycles {
            // Pulses from an earlier cycle drop back before this one.
            if let Some(p) = prev_cycle {
                if c > p + 1 && !pulses_high.is_empty() {
                    writeln!(out, "#{}", p + 1).unwrap();
                    for n in std::mem::take(&mut pulses_high) {
                        writeln!(out, "0{}", ids[n]).unwrap();
                        cur.insert(n, "0".into());
                    }
                }
            }
            let mut changes: BTreeMap<&str, String> = BTreeMap::new();
            for n in &pulses_high {
                changes.insert(n, "0".into());
            }
            pulses_high.clear();
            if let Some(r) = self.cycles.get(&c) {
                for e in &r.events {
                    changes.insert(e.as_str(), "1".into());
                }
                for p in &r.ports {
                    let pre = format!("{}_b{}", p.port, p.bank);
                    let en = format!("{pre}_{}", if p.write { "wr" } else { "rd" });
                    let (en_key, _) = sigs.get_key_value(&en).unwrap();
                    changes.insert(en_key.as_str(), "1".into());
                    let (ak, _) = sigs.get_key_value(&format!("{pre}_addr")).unwrap();
                    changes.insert(ak.as_str(), fmt(Sig::Bus(32), p.addr.map(|a| a as i64)));
                    let dn = format!("{pre}_{}data", if p.write { "wr_" } else { "rd_" });
                    let (dk, _) = sigs.get_key_value(&dn).unwrap();
                    changes.insert(dk.as_str(), fmt(Sig::Bus(64), p.data));
                }
                for (n, v) in &r.values {
                    let (k, _) = sigs.get_key_value(n).unwrap();
                    changes.insert(k.as_str(), fmt(Sig::Bus(64), *v));
                }
            }
            let mut lines = String::new();
            for (n, t) in changes {
                if t == "1" && sigs[n] == Sig::Pulse {
                    pulses_high.insert(n);
                }
                emit(&mut lines, &mut cur, n, t.clone(), &ids[n]);
                cur.insert(n, t);
            }
            if !lines.is_empty() {
                writeln!(out, "#{c}").unwrap();
                out.push_str(&lines);
            }
            prev_cycle = Some(c);
        }
        out
    }
}

fn vcd_id(mut i: usize) -> String {
    let mut s = String::new();
    loop {
        s.push((b'!' + (i % 94) as u8) as char);
        i /= 94;
        if i == 0 {
            return s;
        }
        i -= 1;
    }
}

fn vcd_name(n: &str) -> String {
    n.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' }).collect()
}
