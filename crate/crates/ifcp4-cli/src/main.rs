//! `ifcp4`: check, run, fuzz and format programs of the packet language.
//!
//! Exit status: 0 secure or ok, 1 insecure or counterexample found, 2 for
//! load, validation and usage errors.

use std::fmt::Display;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value as Json};

use ifcp4::frontend::{
    parse_contracts, parse_policy, parse_program, parse_state, print_program, PolicyFile,
};
use ifcp4::interp::Interpreter;
use ifcp4::lang_ast::Program;
use ifcp4::oracle::{
    differential_check, instantiate_env_pair, noninterference_oracle, Counterexample, OracleConfig,
    MAX_BITS,
};
use ifcp4::policy::{
    analyze_case, check_contracts, render_verdict, CaseVerdict, Clause, Contracts, PolicyCase,
    Severity, Verdict,
};
use ifcp4::typer::TyperOptions;

#[derive(Parser)]
#[command(
    name = "ifcp4",
    version,
    about = "Information-flow checker for a small P4-like language"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Type the program under every input case and check the output cases.
    Check(CheckArgs),
    /// Run the program once on a concrete state.
    Interp(InterpArgs),
    /// Search for a noninterference counterexample by enumeration.
    Oracle(OracleArgs),
    /// Compare analyzer and oracle on generated programs.
    Fuzz(FuzzArgs),
    /// Print a program in canonical form.
    Fmt(FmtArgs),
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    JsonLines,
}

#[derive(Args)]
struct Common {
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct Inputs {
    #[arg(short = 'p', long = "program")]
    program: PathBuf,
    /// Table and extern contracts.
    #[arg(short = 'c', long = "contracts")]
    contracts: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(short = 'i', long = "policy-in")]
    policy_in: PathBuf,
    #[arg(short = 'o', long = "policy-out")]
    policy_out: PathBuf,
    /// Limit on state types per statement.
    #[arg(long, default_value_t = TyperOptions::default().max_gammas)]
    max_gammas: usize,
    /// Print the final state types of every input case.
    #[arg(long)]
    emit_gammas: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    First,
    Second,
}

#[derive(Args)]
struct InterpArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Initial state as `lval = value` lines; unlisted leaves are zero.
    #[arg(long)]
    state: PathBuf,
    /// Seed of the environment pair drawn from the contracts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Which environment of the pair to run in.
    #[arg(long, value_enum, default_value_t = Side::First)]
    env: Side,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(short = 'i', long = "policy-in")]
    policy_in: PathBuf,
    #[arg(short = 'o', long = "policy-out")]
    policy_out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Budget for log2 of the number of enumerated states.
    #[arg(long, default_value_t = OracleConfig::default().max_bits)]
    max_bits: u32,
    #[arg(long, default_value_t = OracleConfig::default().env_pairs)]
    env_pairs: usize,
    /// Counterexample states go to `<PREFIX>.first.state` and `<PREFIX>.second.state`.
    #[arg(long, default_value = "counterexample")]
    write: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = OracleConfig::default().programs)]
    programs: usize,
    #[arg(long, default_value_t = OracleConfig::default().env_pairs)]
    env_pairs: usize,
    #[arg(long, default_value_t = OracleConfig::default().max_bits)]
    max_bits: u32,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FmtArgs {
    #[arg(short = 'p', long = "program")]
    program: PathBuf,
}

/// Reported on stderr; always exit status 2.
struct Failure(String);

impl<E: Display> From<E> for Failure {
    fn from(e: E) -> Failure {
        Failure(e.to_string())
    }
}

type Run = Result<ExitCode, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_program(path: &Path) -> Result<Program, Failure> {
    parse_program(&read(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_policy(path: &Path, program: &Program) -> Result<PolicyFile, Failure> {
    parse_policy(&read(path)?, program).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

/// Contracts with their load-time checks; errors stop the run, the rest
/// go to stderr.
fn load_contracts(path: Option<&Path>, program: &Program) -> Result<Contracts, Failure> {
    let contracts = match path {
        Some(p) => parse_contracts(&read(p)?, program)
            .map_err(|e| Failure(format!("{}: {e}", p.display())))?,
        None => Contracts::default(),
    };
    let diags = check_contracts(program, &contracts);
    let errors: Vec<String> = diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.to_string())
        .collect();
    if !errors.is_empty() {
        return Err(Failure(errors.join("\n")));
    }
    for d in diags {
        eprintln!("{d}");
    }
    Ok(contracts)
}

fn cases(file: PolicyFile, inputs: bool, path: &Path) -> Result<Vec<PolicyCase>, Failure> {
    let cases = if inputs {
        file.inputs()
    } else {
        file.outputs()
    };
    if cases.is_empty() {
        let kind = if inputs { "input" } else { "output" };
        return Err(Failure(format!("{}: no {kind} cases", path.display())));
    }
    Ok(cases)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

fn color() -> bool {
    match std::env::var("IFCP4_COLOR").as_deref() {
        Ok("1") => true,
        Ok("0") => false,
        _ => std::io::stdout().is_terminal(),
    }
}

fn paint(text: &str, secure: bool) -> String {
    if !color() {
        return text.to_string();
    }
    let code = if secure { 32 } else { 31 };
    text.lines()
        .map(|l| {
            if l == "SECURE" || l == "INSECURE" {
                format!("\x1b[1;{code}m{l}\x1b[0m")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

fn clause_name(c: Clause) -> &'static str {
    match c {
        Clause::Restrictive => "restrictive",
        Clause::Inclusion => "inclusion",
    }
}

fn case_json(c: &CaseVerdict, outputs: &[PolicyCase], emit: bool) -> Json {
    let witness = c.witness.as_ref().map(|w| {
        json!({
            "lval": w.lval,
            "clause": clause_name(w.clause),
            "first": c.gammas[w.first].render(),
            "second": c.gammas[w.second].render(),
            "output": outputs.get(w.output).map(|o| o.name.clone()),
        })
    });
    let mut v = json!({
        "case": c.input,
        "verdict": if c.is_secure() { "SECURE" } else { "INSECURE" },
        "state_types": c.gammas.len(),
        "witness": witness,
    });
    if emit {
        v["gammas"] = json!(c.gammas.iter().map(|g| g.render()).collect::<Vec<_>>());
    }
    v
}

fn check(a: CheckArgs) -> Run {
    let program = load_program(&a.inputs.program)?;
    let contracts = load_contracts(a.inputs.contracts.as_deref(), &program)?;
    let inputs = cases(load_policy(&a.policy_in, &program)?, true, &a.policy_in)?;
    let outputs = cases(load_policy(&a.policy_out, &program)?, false, &a.policy_out)?;
    let options = TyperOptions {
        max_gammas: a.max_gammas,
        ..TyperOptions::default()
    };
    let verdict = pool(a.common.jobs)?.install(|| {
        inputs
            .par_iter()
            .map(|i| analyze_case(&program, i, &outputs, &contracts, options))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let verdict = Verdict { cases: verdict };
    match a.common.format {
        Format::Text => {
            if a.emit_gammas {
                for c in &verdict.cases {
                    println!("# {}", c.input);
                    for g in &c.gammas {
                        println!("{g}");
                    }
                }
            }
            print!(
                "{}",
                paint(&render_verdict(&verdict, &outputs), verdict.is_secure())
            );
        }
        Format::JsonLines => {
            for c in &verdict.cases {
                println!("{}", case_json(c, &outputs, a.emit_gammas));
            }
            println!(
                "{}",
                json!({ "verdict": if verdict.is_secure() { "SECURE" } else { "INSECURE" } })
            );
        }
    }
    Ok(if verdict.is_secure() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn interp(a: InterpArgs) -> Run {
    let program = load_program(&a.inputs.program)?;
    let contracts = load_contracts(a.inputs.contracts.as_deref(), &program)?;
    let m = parse_state(&read(&a.state)?, &program)
        .map_err(|e| Failure(format!("{}: {e}", a.state.display())))?;
    let (e1, e2) = instantiate_env_pair(&program, &contracts, a.seed)?;
    let env = match a.env {
        Side::First => e1,
        Side::Second => e2,
    };
    let out = Interpreter::new(&program, &env).run(m)?;
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn oracle(a: OracleArgs) -> Run {
    let program = load_program(&a.inputs.program)?;
    let contracts = load_contracts(a.inputs.contracts.as_deref(), &program)?;
    let inputs = cases(load_policy(&a.policy_in, &program)?, true, &a.policy_in)?;
    let outputs = cases(load_policy(&a.policy_out, &program)?, false, &a.policy_out)?;
    if a.max_bits > MAX_BITS {
        return Err(Failure(format!("--max-bits is at most {MAX_BITS}")));
    }
    let config = OracleConfig {
        max_bits: a.max_bits,
        seed: a.seed,
        env_pairs: a.env_pairs,
        ..OracleConfig::default()
    };
    let pairs: Vec<(&PolicyCase, &PolicyCase)> = inputs
        .iter()
        .flat_map(|i| outputs.iter().map(move |o| (i, o)))
        .collect();
    let results = pool(a.common.jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|(i, o)| noninterference_oracle(&program, &i.gamma, &o.gamma, &contracts, &config))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let found: Option<(&PolicyCase, &PolicyCase, Counterexample)> = pairs
        .iter()
        .zip(results)
        .find_map(|((i, o), r)| r.map(|c| (*i, *o, c)));
    let Some((i, o, c)) = found else {
        match a.common.format {
            Format::Text => println!("ok: no counterexample in {} case pairs", pairs.len()),
            Format::JsonLines => {
                println!("{}", json!({ "result": "ok", "case_pairs": pairs.len() }))
            }
        }
        return Ok(ExitCode::SUCCESS);
    };
    let first = with_suffix(&a.write, ".first.state");
    let second = with_suffix(&a.write, ".second.state");
    std::fs::write(&first, c.first.to_string())
        .map_err(|e| Failure(format!("{}: {e}", first.display())))?;
    std::fs::write(&second, c.second.to_string())
        .map_err(|e| Failure(format!("{}: {e}", second.display())))?;
    match a.common.format {
        Format::Text => {
            println!("counterexample for input {} and output {}", i.name, o.name);
            print!("{}", c.render());
            println!("written to {} and {}", first.display(), second.display());
            println!(
                "replay with `interp --state <file> --seed {}` and `--env first` or `--env second`",
                c.env_seed
            );
        }
        Format::JsonLines => println!(
            "{}",
            json!({
                "result": "counterexample",
                "input": i.name,
                "output": o.name,
                "violation": format!("{:?}", c.violation),
                "env_seed": c.env_seed,
                "first": first.display().to_string(),
                "second": second.display().to_string(),
            })
        ),
    }
    Ok(ExitCode::from(1))
}

fn fuzz(a: FuzzArgs) -> Run {
    if a.max_bits > MAX_BITS {
        return Err(Failure(format!("--max-bits is at most {MAX_BITS}")));
    }
    let config = OracleConfig {
        max_bits: a.max_bits,
        programs: a.programs,
        seed: a.seed,
        env_pairs: a.env_pairs,
    };
    let report =
        pool(a.common.jobs)?.install(|| differential_check(&config, TyperOptions::default()));
    match a.common.format {
        Format::Text => {
            print!("{}", report.render());
            for v in &report.soundness_violations {
                println!(
                    "unsound: program seed {} input case {} output case {}",
                    v.seed, v.input, v.output
                );
                print!("{}", v.counterexample.render());
            }
            for (seed, input, _) in &report.abstraction_violations {
                println!("untyped final state: program seed {seed} input case {input}");
            }
        }
        Format::JsonLines => {
            for v in &report.soundness_violations {
                println!(
                    "{}",
                    json!({ "unsound": { "seed": v.seed, "input": v.input, "output": v.output } })
                );
            }
            for (seed, input, _) in &report.abstraction_violations {
                println!(
                    "{}",
                    json!({ "untyped_final": { "seed": seed, "input": input } })
                );
            }
            println!(
                "{}",
                json!({
                    "programs": report.programs,
                    "cases": report.cases,
                    "secure": report.secure,
                    "insecure": report.insecure,
                    "skipped": report.skipped,
                    "soundness_violations": report.soundness_violations.len(),
                    "abstraction_violations": report.abstraction_violations.len(),
                    "incomplete": report.incomplete,
                    "incompleteness_rate": report.incompleteness_rate(),
                })
            );
        }
    }
    Ok(if report.is_sound() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn fmt(a: FmtArgs) -> Run {
    print!("{}", print_program(&load_program(&a.program)?));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let r = match cli.cmd {
        Cmd::Check(a) => check(a),
        Cmd::Interp(a) => interp(a),
        Cmd::Oracle(a) => oracle(a),
        Cmd::Fuzz(a) => fuzz(a),
        Cmd::Fmt(a) => fmt(a),
    };
    r.unwrap_or_else(|Failure(m)| {
        eprintln!("error: {m}");
        ExitCode::from(2)
    })
}
