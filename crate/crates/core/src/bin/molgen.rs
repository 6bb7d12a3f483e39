//! Command-line entry point: train, generate, analyze, fingerprint, split.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use molgen::chem::{Composition, SplitFractions};
use molgen::cli::{
    cmd_analyze, cmd_fingerprint, cmd_generate, cmd_split, cmd_train, AnalyzeArgs, CliError,
    GenerateArgs, KeepPolicy, SplitArgs,
};
use molgen::config::RunConfig;

const USAGE: &str = "\
molgen - conditional autoregressive generation of 3d molecules

USAGE:
  molgen train --config <file> [--seed N] [--out DIR]
  molgen generate --checkpoint <file> --count N [--seed N] [--out DIR]
                  [--workers N] [--temperature T] [--max-atoms N]
                  --<condition> <value> ...
  molgen analyze --samples <samples.jsonl> --reference <data.xyz>
                 [--out DIR] [--predict <property>] [--keep first|lowest-energy]
                 [--energy-key <property>]
  molgen fingerprint --input <file.xyz> [--index K] [--bits]
  molgen split --input <file.xyz> --fractions A,B,C [--seed N] [--out DIR]
               [--exclude-composition FORMULA]

Condition flags for `generate` come from the checkpoint schema, e.g.
`--gap 4.0 --rel-energy -0.2` or `--composition C7O2H10`.
";

struct Args {
    positional: Vec<String>,
    flags: BTreeMap<String, String>,
    switches: Vec<String>,
}

fn parse_args(raw: &[String]) -> Args {
    let mut positional = Vec::new();
    let mut flags = BTreeMap::new();
    let mut switches = Vec::new();
    let mut iter = raw.iter().peekable();
    while let Some(arg) = iter.next() {
        if let Some(name) = arg.strip_prefix("--") {
            let name = name.to_string();
            match iter.peek() {
                // A value follows unless it looks like the next flag; a
                // single leading '-' is accepted for negatives like -0.2.
                Some(next) if !next.starts_with("--") => {
                    flags.insert(name, iter.next().unwrap().clone());
                }
                _ => switches.push(name),
            }
        } else {
            positional.push(arg.clone());
        }
    }
    Args {
        positional,
        flags,
        switches,
    }
}

fn run() -> Result<(), CliError> {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let mut args = parse_args(&raw);
    let command = args
        .positional
        .first()
        .cloned()
        .ok_or_else(|| CliError::Usage(USAGE.into()))?;

    let take = |args: &mut Args, name: &str| args.flags.remove(name);
    let parse_u64 = |raw: Option<String>, name: &str| -> Result<Option<u64>, CliError> {
        raw.map(|v| {
            v.parse()
                .map_err(|_| CliError::Usage(format!("--{name} expects an integer")))
        })
        .transpose()
    };
    let parse_usize = |raw: Option<String>, name: &str| -> Result<Option<usize>, CliError> {
        raw.map(|v| {
            v.parse()
                .map_err(|_| CliError::Usage(format!("--{name} expects an integer")))
        })
        .transpose()
    };

    match command.as_str() {
        "train" => {
            let config_path = take(&mut args, "config")
                .ok_or_else(|| CliError::Usage("train needs --config <file>".into()))?;
            let mut config = RunConfig::load(std::path::Path::new(&config_path))
                .map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(seed) = parse_u64(take(&mut args, "seed"), "seed")? {
                config.seed = seed;
                config.train.seed = seed;
                config.sampler.seed = seed;
            }
            if let Some(out) = take(&mut args, "out") {
                config.out = PathBuf::from(out);
            }
            reject_leftovers(&args)?;
            let path = cmd_train(&config)?;
            println!("checkpoint written to {}", path.display());
            Ok(())
        }
        "generate" => {
            let checkpoint = take(&mut args, "checkpoint")
                .ok_or_else(|| CliError::Usage("generate needs --checkpoint <file>".into()))?;
            let count = parse_usize(take(&mut args, "count"), "count")?
                .ok_or_else(|| CliError::Usage("generate needs --count N".into()))?;
            let seed = parse_u64(take(&mut args, "seed"), "seed")?.unwrap_or(0);
            let out = PathBuf::from(take(&mut args, "out").unwrap_or_else(|| "out".into()));
            let workers = parse_usize(take(&mut args, "workers"), "workers")?.unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            });
            let temperature = take(&mut args, "temperature")
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| CliError::Usage("--temperature expects a number".into()))
                })
                .transpose()?;
            let max_atoms = parse_usize(take(&mut args, "max-atoms"), "max-atoms")?;
            // Remaining flags are condition values keyed by schema name.
            let conditions: BTreeMap<String, String> = args
                .flags
                .iter()
                .map(|(k, v)| (k.replace('-', "_"), v.clone()))
                .collect();
            args.flags.clear();
            reject_leftovers(&args)?;
            let (ok, failed) = cmd_generate(&GenerateArgs {
                checkpoint: PathBuf::from(checkpoint),
                conditions,
                count,
                seed,
                out: out.clone(),
                workers,
                temperature,
                max_atoms,
            })?;
            println!(
                "generated {ok} molecules, {failed} failures; logs in {}",
                out.display()
            );
            Ok(())
        }
        "analyze" => {
            let samples = take(&mut args, "samples")
                .ok_or_else(|| CliError::Usage("analyze needs --samples <file>".into()))?;
            let reference = take(&mut args, "reference")
                .ok_or_else(|| CliError::Usage("analyze needs --reference <file>".into()))?;
            let out = PathBuf::from(take(&mut args, "out").unwrap_or_else(|| "out".into()));
            let mut predict = Vec::new();
            if let Some(p) = take(&mut args, "predict") {
                predict.push(p);
            }
            let keep = match take(&mut args, "keep").as_deref() {
                None | Some("first") => KeepPolicy::First,
                Some("lowest-energy") => KeepPolicy::LowestEnergy,
                Some(other) => {
                    return Err(CliError::Usage(format!(
                        "--keep expects `first` or `lowest-energy`, got `{other}`"
                    )))
                }
            };
            let energy_key = take(&mut args, "energy-key");
            let _ = (take(&mut args, "seed"), take(&mut args, "workers"));
            reject_leftovers(&args)?;
            let report = cmd_analyze(&AnalyzeArgs {
                samples: PathBuf::from(samples),
                reference: PathBuf::from(reference),
                out,
                predict,
                keep,
                energy_key,
            })?;
            println!("report written to {}", report.display());
            Ok(())
        }
        "fingerprint" => {
            let input = take(&mut args, "input")
                .ok_or_else(|| CliError::Usage("fingerprint needs --input <file.xyz>".into()))?;
            let index = parse_usize(take(&mut args, "index"), "index")?.unwrap_or(0);
            let want_bits = args.switches.iter().any(|s| s == "bits");
            args.switches.retain(|s| s != "bits");
            let _ = (take(&mut args, "seed"), take(&mut args, "workers"), take(&mut args, "out"));
            reject_leftovers(&args)?;
            let (indices, bits) = cmd_fingerprint(std::path::Path::new(&input), index)?;
            if want_bits {
                println!("{bits}");
            } else {
                println!(
                    "{}",
                    indices
                        .iter()
                        .map(|i| i.to_string())
                        .collect::<Vec<_>>()
                        .join(" ")
                );
            }
            Ok(())
        }
        "split" => {
            let input = take(&mut args, "input")
                .ok_or_else(|| CliError::Usage("split needs --input <file.xyz>".into()))?;
            let fractions_raw = take(&mut args, "fractions")
                .ok_or_else(|| CliError::Usage("split needs --fractions A,B,C".into()))?;
            let parts: Vec<f64> = fractions_raw
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| CliError::Usage(format!("bad fraction `{p}`")))
                })
                .collect::<Result<_, _>>()?;
            if parts.len() != 3 {
                return Err(CliError::Usage("--fractions expects three numbers".into()));
            }
            let fractions = SplitFractions::new(parts[0], parts[1], parts[2])
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let seed = parse_u64(take(&mut args, "seed"), "seed")?.unwrap_or(0);
            let out = PathBuf::from(take(&mut args, "out").unwrap_or_else(|| "out".into()));
            let exclude = take(&mut args, "exclude-composition")
                .map(|f| Composition::parse(&f).map_err(|e| CliError::Usage(e.to_string())))
                .transpose()?;
            let _ = take(&mut args, "workers");
            reject_leftovers(&args)?;
            let (train, val, test) = cmd_split(&SplitArgs {
                input: PathBuf::from(input),
                fractions,
                seed,
                out: out.clone(),
                exclude_composition: exclude,
            })?;
            println!("split {train}/{val}/{test} records into {}", out.display());
            Ok(())
        }
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Usage(format!(
            "unknown command `{other}`\n\n{USAGE}"
        ))),
    }
}

fn reject_leftovers(args: &Args) -> Result<(), CliError> {
    if let Some((name, _)) = args.flags.iter().next() {
        return Err(CliError::Usage(format!("unknown flag `--{name}`")));
    }
    if let Some(name) = args.switches.first() {
        return Err(CliError::Usage(format!("unknown switch `--{name}`")));
    }
    if args.positional.len() > 1 {
        return Err(CliError::Usage(format!(
            "unexpected argument `{}`",
            args.positional[1]
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
