use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hir_core::backend::{lower, LowerOptions, RamStyle};
use hir_core::frontend::parse_unchecked;
use hir_core::passes::{run_pipeline, DEFAULT_PIPELINE};
use hir_core::sim::{self, SimInputs};
use hir_core::verify::verify_module;
use hir_core::{print, Diagnostic, Module};
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

#[derive(Parser)]
#[command(name = "hirc", version, about = "Check, optimize, emit and simulate hir programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse, validate and verify schedules.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Check, run optimization passes and print the result.
    Opt {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        passes: PassArgs,
        /// Write the optimized IR here instead of stdout.
        #[arg(short = 'o')]
        output: Option<PathBuf>,
    },
    /// Check, optimize and lower to Verilog.
    Emit {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        passes: PassArgs,
        /// Emit only this function and what it calls.
        #[arg(long)]
        top: Option<String>,
        /// Force RAM inference style: auto, block, dist or reg.
        #[arg(long, default_value = "auto")]
        ram_style: RamStyle,
        /// Write Verilog here instead of stdout.
        #[arg(short = 'o')]
        output: Option<PathBuf>,
        /// Also write the lowering plan as JSON.
        #[arg(long, value_name = "PATH")]
        emit_plan: Option<PathBuf>,
    },
    /// Check and simulate cycle by cycle.
    Sim {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        top: String,
        /// JSON file with scalars, tensors, port scripts and max_cycles.
        #[arg(long, value_name = "PATH")]
        inputs: Option<PathBuf>,
        /// Write a VCD waveform.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        /// Write a per-cycle CSV trace.
        #[arg(long, value_name = "PATH")]
        trace_csv: Option<PathBuf>,
        #[arg(long)]
        max_cycles: Option<u64>,
        /// Write results JSON here instead of stdout.
        #[arg(short = 'o')]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Print diagnostics as one JSON object per line on stdout.
    #[arg(long)]
    json_diagnostics: bool,
    /// Print wall-clock time per phase on stderr.
    #[arg(long)]
    time: bool,
}

#[derive(Args)]
struct PassArgs {
    /// Comma-separated pass list; defaults to the full pipeline, empty for none.
    #[arg(long, value_delimiter = ',')]
    passes: Option<Vec<String>>,
    /// Print a report for each pass on stderr.
    #[arg(long)]
    print_report: bool,
}

impl PassArgs {
    fn list(&self) -> Vec<&str> {
        match &self.passes {
            Some(p) => p.iter().map(String::as_str).filter(|s| !s.is_empty()).collect(),
            None => DEFAULT_PIPELINE.to_vec(),
        }
    }
}

/// Diagnostics were reported; exit 1.
struct Failed;

struct Session {
    json: bool,
    color: bool,
    phases: Vec<(&'static str, Duration)>,
    started: Instant,
}

impl Session {
    fn new(common: &Common) -> Self {
        let color = std::env::var("HIRC_COLOR").map_or(true, |v| v != "0") && std::io::stderr().is_terminal();
        Session { json: common.json_diagnostics, color, phases: Vec::new(), started: Instant::now() }
    }

    fn timed<T>(&mut self, phase: &'static str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        let d = t.elapsed();
        match self.phases.iter_mut().find(|(n, _)| *n == phase) {
            Some((_, total)) => *total += d,
            None => self.phases.push((phase, d)),
        }
        out
    }

    fn report(&self, diags: &[Diagnostic]) {
        for d in diags {
            if self.json {
                println!("{}", d.to_json());
            } else {
                eprintln!("{}", d.render(self.color));
            }
        }
    }

    /// Reports `diags`; fails if any is an error.
    fn gate(&self, diags: &[Diagnostic]) -> Result<(), Failed> {
        self.report(diags);
        if diags.iter().any(Diagnostic::is_error) {
            Err(Failed)
        } else {
            Ok(())
        }
    }

    fn timing_line(&self) -> String {
        let total = self.started.elapsed();
        let mut parts: Vec<String> = self.phases.iter().map(|(n, d)| format!("{n} {}", ms(*d))).collect();
        parts.push(format!("total {}", ms(total)));
        format!("time: {}", parts.join(", "))
    }
}

fn ms(d: Duration) -> String {
    format!("{:.3} ms", d.as_secs_f64() * 1e3)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Parse, validate and verify one file.
fn check(s: &mut Session, path: &Path) -> Result<Result<Module, Failed>> {
    let src = s.timed("parse", || read(path))?;
    let name = path.to_string_lossy();
    let (m, diags) = s.timed("parse", || parse_unchecked(&src, &name));
    if s.gate(&diags).is_err() {
        return Ok(Err(Failed));
    }
    let Some(m) = m else { return Ok(Ok(Module::default())) };
    let diags = s.timed("verify", || verify_module(&m));
    Ok(s.gate(&diags).map(|_| m))
}

fn optimize(s: &mut Session, m: &Module, p: &PassArgs) -> Result<Module, Failed> {
    let list = p.list();
    let out = s.timed("passes", || run_pipeline(m, &list));
    match out {
        Ok((m, reports)) => {
            if p.print_report {
                for r in &reports {
                    eprint!("{r}");
                }
            }
            Ok(m)
        }
        Err(d) => s.gate(&[d]).and(Err(Failed)),
    }
}

fn run(cmd: Cmd) -> Result<Result<(), Failed>> {
    let (mut s, time) = match &cmd {
        Cmd::Check { common, .. } | Cmd::Opt { common, .. } | Cmd::Emit { common, .. } | Cmd::Sim { common, .. } => {
            (Session::new(common), common.time)
        }
    };
    let outcome = match cmd {
        Cmd::Check { files, .. } => {
            let mut ok = Ok(());
            for f in &files {
                if check(&mut s, f)?.is_err() {
                    ok = Err(Failed);
                }
            }
            ok
        }
        Cmd::Opt { file, passes, output, .. } => match check(&mut s, &file)? {
            Err(f) => Err(f),
            Ok(m) => match optimize(&mut s, &m, &passes) {
                Ok(m) => {
                    s.timed("write", || write_out(output.as_deref(), &print(&m)))?;
                    Ok(())
                }
                Err(f) => Err(f),
            },
        },
        Cmd::Emit { file, passes, top, ram_style, output, emit_plan, .. } => {
            let m = match check(&mut s, &file)?.and_then(|m| optimize(&mut s, &m, &passes)) {
                Ok(m) => m,
                Err(f) => return finish(&s, time, Err(f)),
            };
            let opts = LowerOptions { ram_style, top, ..LowerOptions::default() };
            match s.timed("emit", || lower(&m, &opts)) {
                Ok(out) => {
                    s.timed("write", || -> Result<()> {
                        write_out(output.as_deref(), &out.verilog)?;
                        if let Some(p) = emit_plan {
                            write_out(Some(&p), &(serde_json::to_string_pretty(&out.plan)? + "\n"))?;
                        }
                        Ok(())
                    })?;
                    Ok(())
                }
                Err(d) => s.gate(&d),
            }
        }
        Cmd::Sim { file, top, inputs, trace, trace_csv, max_cycles, output, .. } => {
            let m = match check(&mut s, &file)? {
                Ok(m) => m,
                Err(f) => return finish(&s, time, Err(f)),
            };
            let mut ins = match &inputs {
                Some(p) => match SimInputs::from_json(&s.timed("parse", || read(p))?) {
                    Ok(i) => i,
                    Err(d) => return finish(&s, time, s.gate(&[d])),
                },
                None => SimInputs::default(),
            };
            if max_cycles.is_some() {
                ins.max_cycles = max_cycles;
            }
            match s.timed("simulate", || sim::run(&m, &top, &ins)) {
                Ok(r) => {
                    s.timed("write", || -> Result<()> {
                        if let Some(p) = &trace {
                            write_out(Some(p), &r.trace.to_vcd(&top))?;
                        }
                        if let Some(p) = &trace_csv {
                            write_out(Some(p), &r.trace.to_csv())?;
                        }
                        write_out(output.as_deref(), &(serde_json::to_string_pretty(&r)? + "\n"))
                    })?;
                    for e in &r.ub {
                        eprintln!("{e}");
                    }
                    for f in &r.timing_faults {
                        eprintln!("{}: timing fault at cycle {}: {} {}", f.loc, f.cycle, f.value, f.details);
                    }
                    if r.ub.is_empty() && r.timing_faults.is_empty() {
                        Ok(())
                    } else {
                        Err(Failed)
                    }
                }
                Err(d) => s.gate(&[d]),
            }
        }
    };
    finish(&s, time, outcome)
}

fn finish(s: &Session, time: bool, outcome: Result<(), Failed>) -> Result<Result<(), Failed>> {
    if time {
        eprintln!("{}", s.timing_line());
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failed)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("hirc: {e:#}");
            ExitCode::from(2)
        }
    }
}
