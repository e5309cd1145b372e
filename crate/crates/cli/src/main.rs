use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dwlab_core::dyadic::Truncation;
use dwlab_core::error::{Error, Result};
use dwlab_core::harness::{
    emit_suite, evaluate_norm, fmt_sig, reduce_dump, run_experiment, sig12, thresholds_of, transform_report, Experiment, ExperimentConfig,
    ExperimentName, Format, NormConfig, Report, Suite, ThresholdSpec, TransformKind,
};
use dwlab_core::reducing::Backend;
use dwlab_core::transforms::GridSpec;
use dwlab_core::weights::{QuadratureSpec, WeightPreset};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "dwlab", version, about = "Matrix-weighted Besov and Triebel-Lizorkin sequence spaces on dyadic windows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one sequence norm from a JSON config.
    Norm {
        /// Path to a JSON file, or inline JSON.
        #[arg(long)]
        config: String,
    },
    /// Build, validate and dump a reducing-operator family.
    Reduce {
        /// Preset name or inline JSON weight preset.
        #[arg(long)]
        weight: String,
        #[arg(long)]
        p: f64,
        /// exact2 or mvee.
        #[arg(long)]
        backend: Backend,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        j_min: i32,
        #[arg(long, default_value_t = 4)]
        j_max: i32,
        #[arg(long, default_value_t = 2)]
        root_extent: usize,
        #[arg(long, default_value_t = 8)]
        quadrature: usize,
    },
    /// Print the almost-diagonal threshold table for a space.
    Thresholds {
        /// Path to a JSON file, or inline JSON.
        #[arg(long)]
        space: String,
    },
    /// Run named experiments and write a report.
    Verify {
        /// Experiment name or `all`.
        experiment: String,
        #[arg(long, default_value = "0xDAD1C", value_parser = parse_seed)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "json")]
        format: Format,
        /// Optional sampler settings (JSON file or inline JSON).
        #[arg(long)]
        config: Option<String>,
    },
    /// Run a transform with its inverse on a grid function.
    Transform {
        /// dwt or phi.
        kind: TransformKind,
        /// Path to a JSON grid-function spec, or inline JSON.
        #[arg(long = "in")]
        input: String,
        /// DWT depth, or log2 of the grid size for phi.
        #[arg(long)]
        levels: u32,
        /// Daubechies vanishing moments (2, 3, 4, 6 or 8).
        #[arg(long, default_value_t = 4)]
        filter: usize,
    },
}

fn parse_seed(s: &str) -> std::result::Result<u64, String> {
    let t = s.trim();
    let r = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => t.parse(),
    };
    r.map_err(|e| format!("invalid seed `{s}`: {e}"))
}

/// Reads a JSON argument given inline or as a file path.
fn read_json<T: serde::de::DeserializeOwned>(arg: &str) -> Result<T> {
    let text = if arg.trim_start().starts_with(['{', '[']) {
        arg.to_string()
    } else {
        let path = Path::new(arg);
        std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?
    };
    Ok(serde_json::from_str(&text)?)
}

/// Rounds every float in a JSON tree to 12 significant digits.
fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n.as_f64().and_then(|x| serde_json::Number::from_f64(sig12(x))).map_or(Value::Null, Value::Number),
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&round_floats(serde_json::to_value(v)?))?);
    Ok(())
}

fn print_report_summary(r: &Report) {
    println!("{} {} ({:.1} s)", if r.passed() { "PASS" } else { "FAIL" }, r.experiment, r.wall_time);
    for c in &r.criteria {
        println!(
            "  [{}] {}: {} {} {} ({:?})",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            fmt_sig(c.value.0),
            c.relation.symbol(),
            fmt_sig(c.bound.0),
            c.basis
        );
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Norm { config } => {
            let c: NormConfig = read_json(&config)?;
            print_json(&evaluate_norm(&c)?)?;
            Ok(true)
        }
        Command::Reduce { weight, p, backend, n, j_min, j_max, root_extent, quadrature } => {
            let preset: WeightPreset = if weight.trim_start().starts_with('{') { read_json(&weight)? } else { WeightPreset::named(&weight)? };
            let t = Truncation::new(n, j_min, j_max, root_extent)?;
            let out = reduce_dump(&preset, p, backend, &t, QuadratureSpec::new(quadrature)?)?;
            print_json(&out)?;
            Ok(out.passed)
        }
        Command::Thresholds { space } => {
            let s: ThresholdSpec = read_json(&space)?;
            let th = thresholds_of(&s)?;
            println!("regime {:?}", th.regime);
            println!("J      {}", fmt_sig(th.j));
            println!("D_min  {}", fmt_sig(th.d_min));
            println!("E_min  {}", fmt_sig(th.e_min));
            println!("F_min  {}", fmt_sig(th.f_min));
            if let Some(d) = th.delta {
                println!("Delta  {}", fmt_sig(d));
            }
            Ok(true)
        }
        Command::Verify { experiment, seed, out, format, config } => {
            let cfg: ExperimentConfig = match config {
                Some(c) => read_json(&c)?,
                None => ExperimentConfig::default(),
            };
            let names: Vec<ExperimentName> =
                if experiment.eq_ignore_ascii_case("all") { ExperimentName::ALL.to_vec() } else { vec![experiment.parse()?] };
            let mut reports = Vec::with_capacity(names.len());
            for name in names {
                let r = run_experiment(&Experiment::new(name, seed).with_config(cfg.clone()))?;
                print_report_summary(&r);
                reports.push(r);
            }
            let suite = Suite::new(seed, reports);
            emit_suite(&suite, format, &out)?;
            println!("{} {}", if suite.passed { "ALL PASS" } else { "SOME FAILED" }, out.display());
            Ok(suite.passed)
        }
        Command::Transform { kind, input, levels, filter } => {
            let spec: GridSpec = read_json(&input)?;
            let out = transform_report(kind, &spec, levels, filter)?;
            print_json(&out)?;
            Ok(out.passed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dwlab_core::harness::DEFAULT_SEED;

    #[test]
    fn seeds_parse_in_hex_and_decimal() {
        assert_eq!(parse_seed("0xDAD1C").unwrap(), DEFAULT_SEED);
        assert_eq!(parse_seed("42").unwrap(), 42);
        assert!(parse_seed("x").is_err());
    }

    #[test]
    fn floats_are_rounded() {
        let v = round_floats(serde_json::json!({"a": [1.0 / 3.0], "b": 2}));
        assert_eq!(v["a"][0].as_f64().unwrap(), 0.333333333333);
        assert_eq!(v["b"], 2);
    }
}
