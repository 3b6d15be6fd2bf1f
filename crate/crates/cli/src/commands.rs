//! Subcommands. Each returns its exit status: 0 on success, 1 when a
//! property is violated or a run diverges, 2 on usage or input errors.

use std::fs;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coda::check::{explore, CheckConfig, Property, Verdict};
use coda::emit::{emit, emit_refinement, Emitted};
use coda::kernel::{EventRecord, KernelConfig};
use coda::oracle::{compare, compare_refinement, record, CompareOptions, Comparison, GoldenFile, OracleError, ProjectionOptions};
use coda::refine::{check_refinement, load_pair, RefineConfig, RefinementVerdict};
use coda::run::{run, Policy, RunError, RunOptions, Scenario, TraceHeader, SEMANTICS_VERSION};
use coda::ValidModel;

use crate::server::{DEFAULT_PORT, PORT_ENV};

pub const OK: i32 = 0;
pub const VIOLATION: i32 = 1;
pub const USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "coda", version, about = "Timed component models: simulate, check, refine, emit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct KernelArgs {
    /// Environment operations allowed per clock cycle.
    #[arg(long)]
    pub env_bound: Option<u32>,
    /// Treat two sends for the same delivery time as an error.
    #[arg(long)]
    pub strict_collisions: bool,
}

impl KernelArgs {
    fn config(&self) -> KernelConfig {
        let mut k = KernelConfig {
            strict_collisions: self.strict_collisions,
            ..KernelConfig::default()
        };
        if let Some(b) = self.env_bound {
            k.env_bound = b;
        }
        k
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Overrides the scenario's end time.
    #[arg(long)]
    pub max_time: Option<u64>,
    /// Order of simultaneously enabled internal events: `name` or `declaration`.
    #[arg(long, default_value_t = Policy::ByName)]
    pub policy: Policy,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            policy: self.policy,
            max_time: self.max_time,
            kernel: self.kernel.config(),
            ..RunOptions::default()
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and validate a model.
    Validate { model: PathBuf },
    /// Run a scenario and print the trace.
    Simulate {
        model: PathBuf,
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Write the trace as JSON lines.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Explore the state space for invariant violations and deadlock.
    Check {
        model: PathBuf,
        #[arg(long)]
        max_time: Option<u64>,
        #[arg(long)]
        max_states: Option<usize>,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Skip the deadlock check.
        #[arg(long)]
        no_deadlock: bool,
        #[arg(long)]
        parallel: bool,
        /// Print the result as JSON.
        #[arg(long)]
        json: bool,
        /// Counterexample file; defaults to `<model>.cex.jsonl` in the working directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check that a model refines the abstract model its `refines` clause names.
    Refine {
        model: PathBuf,
        /// Abstract model, when the concrete model does not name one.
        #[arg(long = "abstract")]
        abstract_model: Option<PathBuf>,
        #[arg(long)]
        max_time: Option<u64>,
        #[arg(long)]
        max_states: Option<usize>,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Skip exploring the abstract model alone for strengthened guards.
        #[arg(long)]
        no_coverage_diff: bool,
        #[arg(long)]
        json: bool,
        /// Write the counterexample trace, if any.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Translate a model to Event-B context and machine text.
    Emit {
        model: PathBuf,
        /// Abstract model for a refinement machine.
        #[arg(long = "abstract")]
        abstract_model: Option<PathBuf>,
        /// Ignore the model's `refines` clause.
        #[arg(long)]
        plain: bool,
        /// Directory for the two files; without it both go to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a scenario and write its golden file.
    Record {
        model: PathBuf,
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Re-run a scenario and compare against a golden file.
    Compare {
        model: PathBuf,
        scenario: PathBuf,
        golden: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Compare although the model changed since the golden was recorded.
        #[arg(long)]
        accept_model_change: bool,
        /// The golden belongs to the abstract model; project the concrete run onto it.
        #[arg(long)]
        project: bool,
        #[arg(long = "abstract")]
        abstract_model: Option<PathBuf>,
    },
    /// Serve the session API on the loopback interface.
    Serve {
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// Address to bind; anything but loopback exposes the unauthenticated API.
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load(path: &Path) -> Result<ValidModel> {
    let vm = coda::load_file(path).map_err(|d| anyhow!("{}", coda::diag::render(&d).trim_end()))?;
    for w in &vm.warnings {
        eprintln!("{w}");
    }
    Ok(vm)
}

fn scenario(path: &Path) -> Result<Scenario> {
    Scenario::parse(&read(path)?).with_context(|| path.display().to_string())
}

/// Trace file with a header line and one record per line.
fn trace_text(vm: &ValidModel, records: &[EventRecord]) -> String {
    let header = TraceHeader {
        format: "coda-trace/1".into(),
        semantics: SEMANTICS_VERSION.into(),
        model: vm.program.name.clone(),
        model_hash: vm.hash(),
        scenario_hash: String::new(),
    };
    let mut out = serde_json::to_string(&header).expect("header serialises");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialises"));
        out.push('\n');
    }
    out
}

fn describe(r: &EventRecord) -> String {
    let mut s = format!("{:>5}  {}", r.time, r.choice.event);
    if !r.choice.params.is_empty() {
        let ps: Vec<String> = r.choice.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        s.push_str(&format!("({})", ps.join(", ")));
    }
    for t in &r.states {
        s.push_str(&format!("  -> {t}"));
    }
    for send in &r.sends {
        s.push_str(&format!("  {}!{}@{}", send.connector, send.value, send.delivery));
    }
    for d in &r.deltas {
        s.push_str(&format!("  {}:={}", d.var, d.new));
    }
    s
}

fn run_failure(e: &RunError) -> i32 {
    eprintln!("{e}");
    VIOLATION
}

pub fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Validate { model } => match coda::load_file(&model) {
            Ok(vm) => {
                for w in &vm.warnings {
                    eprintln!("{w}");
                }
                let p = &vm.program;
                println!(
                    "{}: model {} is valid ({} components, {} connectors, {} machines)",
                    model.display(),
                    p.name,
                    p.components.len(),
                    p.connectors.len(),
                    p.machines.len()
                );
                Ok(OK)
            }
            Err(d) => {
                eprint!("{}", coda::diag::render(&d));
                Ok(VIOLATION)
            }
        },
        Command::Simulate {
            model,
            scenario: scn,
            run: args,
            output,
        } => {
            let vm = load(&model)?;
            let sc = scenario(&scn)?;
            let (records, status) = match run(&vm, &sc, &args.options()) {
                Ok(t) => {
                    if let Some(reason) = &t.deadlock {
                        println!("expected deadlock at time {}: {reason}", t.final_state().time);
                    }
                    (t.records, OK)
                }
                Err(e) => {
                    let partial = match &e {
                        RunError::DeadlockReached { trace, .. } => trace.records.clone(),
                        _ => vec![],
                    };
                    (partial, run_failure(&e))
                }
            };
            for r in &records {
                println!("{}", describe(r));
            }
            if let Some(out) = output {
                write(&out, &trace_text(&vm, &records))?;
            }
            Ok(status)
        }
        Command::Check {
            model,
            max_time,
            max_states,
            kernel,
            no_deadlock,
            parallel,
            json,
            output,
        } => {
            let vm = load(&model)?;
            let mut cfg = CheckConfig {
                kernel: kernel.config(),
                deadlock: !no_deadlock,
                parallel,
                ..CheckConfig::default()
            };
            if let Some(t) = max_time {
                cfg.max_time = t;
            }
            if let Some(n) = max_states {
                cfg.max_states = n;
            }
            let r = explore(&vm, &cfg).map_err(|e| anyhow!("{e}"))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                print!("{}", r.report());
            }
            let first = [Property::Invariants, Property::Deadlock, Property::Runtime]
                .into_iter()
                .find_map(|p| match r.verdicts.get(&p) {
                    Some(Verdict::Violated { counterexamples }) => counterexamples.first(),
                    _ => None,
                });
            let Some(cx) = first else {
                return Ok(OK);
            };
            let path = output.unwrap_or_else(|| {
                let stem = model
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "model".into());
                PathBuf::from(format!("{stem}.cex.jsonl"))
            });
            write(&path, &cx.to_jsonl(&vm))?;
            eprintln!("counterexample written to {}", path.display());
            Ok(VIOLATION)
        }
        Command::Refine {
            model,
            abstract_model,
            max_time,
            max_states,
            kernel,
            no_coverage_diff,
            json,
            output,
        } => {
            let spec = load_pair(&model, abstract_model.as_deref())?;
            let mut cfg = RefineConfig {
                kernel: kernel.config(),
                coverage_diff: !no_coverage_diff,
                ..RefineConfig::default()
            };
            if let Some(t) = max_time {
                cfg.max_time = t;
            }
            if let Some(n) = max_states {
                cfg.max_states = n;
            }
            let r = check_refinement(&spec, &cfg);
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                print!("{}", r.report());
            }
            match &r.verdict {
                RefinementVerdict::Violated(cx) => {
                    if let Some(out) = output {
                        write(&out, &trace_text(&spec.concrete, &cx.records))?;
                        eprintln!("counterexample written to {}", out.display());
                    }
                    Ok(VIOLATION)
                }
                _ => Ok(OK),
            }
        }
        Command::Emit {
            model,
            abstract_model,
            plain,
            output,
        } => {
            let vm = load(&model)?;
            let e: Emitted = if !plain && (vm.model.refines.is_some() || abstract_model.is_some()) {
                emit_refinement(&load_pair(&model, abstract_model.as_deref())?)
            } else {
                emit(&vm)
            };
            match output {
                Some(dir) => {
                    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
                    for (name, text) in [(e.context_file(), &e.context), (e.machine_file(), &e.machine)] {
                        let p = dir.join(name);
                        write(&p, text)?;
                        println!("{}", p.display());
                    }
                }
                None => print!("{}\n{}", e.context, e.machine),
            }
            Ok(OK)
        }
        Command::Record {
            model,
            scenario: scn,
            run: args,
            output,
        } => {
            let vm = load(&model)?;
            let sc = scenario(&scn)?;
            let g = match record(&vm, &sc, &args.options()) {
                Ok(g) => g,
                Err(OracleError::Run(e)) => return Ok(run_failure(&e)),
                Err(e) => bail!(e),
            };
            match output {
                Some(p) => write(&p, &g.to_text())?,
                None => print!("{}", g.to_text()),
            }
            Ok(OK)
        }
        Command::Compare {
            model,
            scenario: scn,
            golden,
            run: args,
            accept_model_change,
            project,
            abstract_model,
        } => {
            let sc = scenario(&scn)?;
            let g = GoldenFile::parse(&read(&golden)?).with_context(|| golden.display().to_string())?;
            let result = if project {
                let spec = load_pair(&model, abstract_model.as_deref())?;
                compare_refinement(&spec, &sc, &g, &args.options(), &ProjectionOptions::default())
            } else {
                let opts = CompareOptions {
                    run: args.options(),
                    allow_model_change: accept_model_change,
                };
                compare(&load(&model)?, &sc, &g, &opts)
            };
            match result {
                Ok(Comparison::Pass { records }) => {
                    println!("pass: {records} records match");
                    Ok(OK)
                }
                Ok(Comparison::InitialDiffers { expected, actual }) => {
                    println!("initial observations differ\n  expected: {expected:?}\n  actual:   {actual:?}");
                    Ok(VIOLATION)
                }
                Ok(Comparison::Diverged(d)) => {
                    print!("{d}");
                    Ok(VIOLATION)
                }
                Err(e @ OracleError::StaleGolden { .. }) => {
                    eprintln!("{e}");
                    Ok(VIOLATION)
                }
                Err(OracleError::Run(e)) => Ok(run_failure(&e)),
                Err(e) => bail!(e),
            }
        }
        Command::Serve { port, bind } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(SocketAddr::new(bind, port)))?;
            Ok(OK)
        }
    }
}
