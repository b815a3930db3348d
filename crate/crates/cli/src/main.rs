//! Command-line front end: validity checking, flattening, equivalence,
//! projection, standardization, and plain reduction of higher-order rewrites.

use std::fs;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use horl_core::error::Error;
use horl_core::flatten::{flatten, flatten_noeta, seq_leaves};
use horl_core::hrs::{find_redexes, load_hrs, step, Hrs};
use horl_core::project::{decide_permeq, project, Verdict};
use horl_core::rewrite::{check_rewrite, print_rewrite, print_rewrite_annotated};
use horl_core::standard::{
    decide_permeq_std, del_step, pull_step, sequentialize, sr_measure, standardize_flat,
    SequentialRewrite, DEFAULT_STD_BUDGET,
};
use horl_core::syntax::{parse_rewrite, parse_term};
use horl_core::term::{print_term, print_term_annotated, TypingContext};

#[derive(Parser)]
#[command(
    name = "horl",
    about = "Checker for rewrites over orthogonal higher-order rewriting systems",
    version
)]
struct Cli {
    /// Emit a machine-readable JSON record instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Projection,
    Standardize,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an HRS file; optionally type-check a rewrite expression.
    Check {
        file: String,
        /// Rewrite expression to type-check against the HRS.
        #[arg(short = 'e', long = "expr")]
        expr: Option<String>,
    },
    /// Print the flat normal form of a rewrite.
    Flatten {
        file: String,
        #[arg(short = 'e', long = "expr")]
        expr: String,
        /// Normalize without the eta-contraction rule.
        #[arg(long)]
        no_eta: bool,
    },
    /// Decide permutation equivalence of two coinitial rewrites.
    Equiv {
        file: String,
        #[arg(short = 'e', long = "expr", num_args = 1)]
        exprs: Vec<String>,
        #[arg(long, value_enum, default_value = "projection")]
        method: Method,
        #[arg(long, default_value_t = DEFAULT_STD_BUDGET)]
        budget: usize,
    },
    /// Print the projection (residual) of the first rewrite over the second.
    Project {
        file: String,
        #[arg(short = 'e', long = "expr", num_args = 1)]
        exprs: Vec<String>,
    },
    /// Standardize a rewrite by the Del/Pull rules.
    Standardize {
        file: String,
        #[arg(short = 'e', long = "expr")]
        expr: String,
        #[arg(long, default_value_t = DEFAULT_STD_BUDGET)]
        budget: usize,
        /// Print each Del/Pull step with the termination measure.
        #[arg(long)]
        trace: bool,
    },
    /// Enumerate redexes of a term, optionally applying rewrite steps.
    Reduce {
        file: String,
        #[arg(short = 't', long = "term")]
        term: String,
        /// Apply this many leftmost-outermost steps.
        #[arg(long, default_value_t = 0)]
        steps: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let code = match e {
                Error::BudgetExceeded(_) => 3,
                _ => 2,
            };
            if cli.json {
                println!("{}", json!({"error": e.to_string(), "exit": code}));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code)
        }
    }
}

fn load(file: &str) -> Result<Hrs, Error> {
    let text = fs::read_to_string(file)
        .map_err(|e| Error::Parse(format!("cannot read {file}: {e}")))?;
    load_hrs(&text)
}

fn emit(cli: &Cli, record: Value, text: String) {
    if cli.json {
        println!("{record}");
    } else {
        println!("{text}");
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Check { file, expr } => {
            let hrs = load(file)?;
            match expr {
                None => {
                    let rules: Vec<String> =
                        hrs.rules.iter().map(|r| r.name.clone()).collect();
                    emit(
                        cli,
                        json!({"command": "check", "ok": true, "rules": rules}),
                        format!(
                            "ok: {} constants, {} rules ({})",
                            hrs.signature.len(),
                            hrs.rules.len(),
                            rules.join(", ")
                        ),
                    );
                }
                Some(e) => {
                    let rw = parse_rewrite(e, &hrs)?;
                    let j = check_rewrite(&TypingContext::new(), &rw, &hrs)?;
                    let src = print_term(&j.canonical_src(&hrs)?);
                    let tgt = print_term(&j.canonical_tgt(&hrs)?);
                    let ty = j.ty.to_string();
                    emit(
                        cli,
                        json!({"command": "check", "ok": true,
                               "src": print_term_annotated(&j.canonical_src(&hrs)?),
                               "tgt": print_term_annotated(&j.canonical_tgt(&hrs)?),
                               "type": ty}),
                        format!("src : {src}\ntgt : {tgt}\ntype: {ty}"),
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Flatten { file, expr, no_eta } => {
            let hrs = load(file)?;
            let rw = parse_rewrite(expr, &hrs)?;
            let leaves: Vec<horl_core::rewrite::Rewrite> = if *no_eta {
                seq_leaves(&flatten_noeta(&rw, &hrs)?)
            } else {
                flatten(&rw, &hrs)?
                    .steps()
                    .iter()
                    .map(|m| m.as_rewrite().clone())
                    .collect()
            };
            let pretty: Vec<String> = leaves.iter().map(print_rewrite).collect();
            let exact: Vec<String> = leaves.iter().map(print_rewrite_annotated).collect();
            emit(
                cli,
                json!({"command": "flatten", "steps": exact}),
                pretty.join(" ; "),
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Equiv {
            file,
            exprs,
            method,
            budget,
        } => {
            let hrs = load(file)?;
            if exprs.len() != 2 {
                return Err(Error::Parse(
                    "equiv needs exactly two -e expressions".into(),
                ));
            }
            let a = parse_rewrite(&exprs[0], &hrs)?;
            let b = parse_rewrite(&exprs[1], &hrs)?;
            let verdict = match method {
                Method::Projection => decide_permeq(&a, &b, &hrs)?,
                Method::Standardize => decide_permeq_std(&a, &b, &hrs, *budget)?,
                Method::Both => {
                    let v1 = decide_permeq(&a, &b, &hrs)?;
                    let v2 = decide_permeq_std(&a, &b, &hrs, *budget)?;
                    if v1.is_equivalent() != v2.is_equivalent() {
                        return Err(Error::IllTyped(
                            "projection and standardization disagree (internal bug)".into(),
                        ));
                    }
                    v1
                }
            };
            match verdict {
                Verdict::Equivalent => {
                    emit(
                        cli,
                        json!({"command": "equiv", "verdict": "equivalent", "witnesses": []}),
                        "equivalent".into(),
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Verdict::Inequivalent(ws) => {
                    let pretty: Vec<String> = ws
                        .iter()
                        .map(|w| {
                            format!("{} [{} at step {}]", w.residual, w.direction, w.index)
                        })
                        .collect();
                    let exact: Vec<String> = ws
                        .iter()
                        .map(|w| print_rewrite_annotated(w.residual.as_rewrite()))
                        .collect();
                    emit(
                        cli,
                        json!({"command": "equiv", "verdict": "inequivalent",
                               "witnesses": exact}),
                        format!("inequivalent\n{}", pretty.join("\n")),
                    );
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Project { file, exprs } => {
            let hrs = load(file)?;
            if exprs.len() != 2 {
                return Err(Error::Parse(
                    "project needs exactly two -e expressions".into(),
                ));
            }
            let a = parse_rewrite(&exprs[0], &hrs)?;
            let b = parse_rewrite(&exprs[1], &hrs)?;
            let p = project(&a, &b, &hrs)?;
            let pretty: Vec<String> = p.steps().iter().map(|m| m.to_string()).collect();
            let exact: Vec<String> = p
                .steps()
                .iter()
                .map(|m| print_rewrite_annotated(m.as_rewrite()))
                .collect();
            emit(
                cli,
                json!({"command": "project", "steps": exact}),
                pretty.join(" ; "),
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Standardize {
            file,
            expr,
            budget,
            trace,
        } => {
            let hrs = load(file)?;
            let rw = parse_rewrite(expr, &hrs)?;
            let flat = flatten(&rw, &hrs)?;
            let result: SequentialRewrite;
            let mut trace_lines = Vec::new();
            if *trace {
                let mut cur = sequentialize(&flat, &hrs)?;
                let mut spent = 0usize;
                loop {
                    if spent >= *budget {
                        return Err(Error::BudgetExceeded(*budget));
                    }
                    let (rule, next) = if let Some(next) = del_step(&cur) {
                        ("Del", next)
                    } else if let Some(next) = pull_step(&cur, &hrs)? {
                        ("Pull", next)
                    } else {
                        break;
                    };
                    spent += 1;
                    let m = sr_measure(&next, &hrs, 64)?;
                    let depths: Vec<String> = m
                        .rev_depths
                        .iter()
                        .map(|d| d.map(|x| x.to_string()).unwrap_or_else(|| "?".into()))
                        .collect();
                    trace_lines.push(format!(
                        "{rule}: {next}   [measure: ({}, [{}])]",
                        m.length,
                        depths.join(", ")
                    ));
                    cur = next;
                }
                result = cur;
            } else {
                result = standardize_flat(&flat, &hrs, *budget)?;
            }
            let steps: Vec<String> = result
                .steps
                .iter()
                .map(|m| print_rewrite_annotated(m.as_rewrite()))
                .collect();
            let terminator = print_rewrite_annotated(result.terminator.as_rewrite());
            let text = if trace_lines.is_empty() {
                result.to_string()
            } else {
                format!("{}\n{}", trace_lines.join("\n"), result)
            };
            emit(
                cli,
                json!({"command": "standardize", "steps": steps,
                       "terminator": terminator, "trace": trace_lines}),
                text,
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Reduce { file, term, steps } => {
            let hrs = load(file)?;
            let t = parse_term(term, &hrs)?;
            let mut cur = hrs.beta_eta_nf(&t)?;
            let mut seen = vec![print_term(&cur)];
            let mut exact = vec![print_term_annotated(&cur)];
            for _ in 0..*steps {
                let occs = find_redexes(&cur, &hrs)?;
                let Some(occ) = occs.first() else { break };
                cur = step(&cur, occ, &hrs)?;
                seen.push(print_term(&cur));
                exact.push(print_term_annotated(&cur));
            }
            let occs = find_redexes(&cur, &hrs)?;
            let redexes: Vec<String> = occs
                .iter()
                .map(|o| format!("{} at {:?}", o.rule, o.path))
                .collect();
            let text = {
                let mut lines = Vec::new();
                for (i, t) in seen.iter().enumerate() {
                    if i == 0 {
                        lines.push(t.clone());
                    } else {
                        lines.push(format!("  -> {t}"));
                    }
                }
                if redexes.is_empty() {
                    lines.push("normal form".into());
                } else {
                    for r in &redexes {
                        lines.push(format!("redex: {r}"));
                    }
                }
                lines.join("\n")
            };
            emit(
                cli,
                json!({"command": "reduce", "steps": exact, "redexes": redexes}),
                text,
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_cli() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
