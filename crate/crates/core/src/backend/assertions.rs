use super::{FunctionPlan, StorageKind};
use std::fmt::Write as _;

/// Simulation-only checks for the undefined behaviors the schedule cannot
/// rule out statically. Statically proven sites are left out.
pub fn emit_assertions(plan: &FunctionPlan) -> String {
    let live: Vec<_> = plan.assertions.iter().filter(|a| a.folded != Some(true)).collect();
    let shadows: Vec<_> = plan.memories.iter().filter(|m| m.kind != StorageKind::External).collect();
    if live.is_empty() && shadows.is_empty() {
        return String::new();
    }
    let mut out = String::new();
    out.push_str("\n`ifndef SYNTHESIS\n");
    for m in &shadows {
        for b in 0..m.banks {
            let writers: Vec<_> =
                m.ports.iter().filter(|p| p.kind.contains('w') && p.banks_used.contains(&b)).collect();
            if !m.ports.iter().any(|p| p.banks_used.contains(&b)) {
                continue;
            }
            let vld = format!("vld_{}_b{b}", m.name);
            writeln!(out, "  // {}", m.loc).unwrap();
            writeln!(out, "  reg [{}:0] {vld};", m.words_per_bank - 1).unwrap();
            writeln!(out, "  always @(posedge clk) begin").unwrap();
            writeln!(out, "    if (rst || start) {vld} <= {}'d0;", m.words_per_bank).unwrap();
            for p in &writers {
                let pre = format!("m_{}_b{b}", super::ident(&p.name));
                writeln!(out, "    else if ({pre}_wr_en) {vld}[{pre}_addr] <= 1'b1;").unwrap();
            }
            writeln!(out, "  end").unwrap();
        }
    }
    if let Some(first) = live.first() {
        writeln!(out, "  // {}", first.loc).unwrap();
        writeln!(out, "  always @(posedge clk) begin").unwrap();
        writeln!(out, "    if (!rst) begin").unwrap();
        for a in live {
            writeln!(out, "      // {}", a.loc).unwrap();
            let cond = if a.folded == Some(false) { "1'b0".to_string() } else { a.condition.clone() };
            writeln!(
                out,
                "      if (({}) && !({cond})) $display(\"HIR-ASSERT %0t {}: {}\", $time);",
                a.enable,
                a.loc,
                a.message.replace('"', "'")
            )
            .unwrap();
        }
        writeln!(out, "    end").unwrap();
        writeln!(out, "  end").unwrap();
    }
    out.push_str("`endif\n");
    out
}
