use clap::{Parser, ValueEnum};
use g2verify::report::{self, Format, VerifyOptions};
use std::io::Write;
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Json,
    Table,
}

/// Verify the catalog of closed G2-structures against their expected invariants.
#[derive(Parser, Debug)]
#[command(name = "verify", version)]
struct Args {
    /// Catalog ids to verify, or `all`.
    #[arg(default_value = "all")]
    ids: Vec<String>,
    #[arg(long, env = "G2VERIFY_SAMPLES", default_value_t = report::DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, env = "G2VERIFY_SEED", default_value_t = report::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, env = "G2VERIFY_TOL", default_value_t = report::DEFAULT_TOL)]
    tol: f64,
    /// Include stretch entries when running `all`.
    #[arg(long, env = "G2VERIFY_STRETCH")]
    stretch: bool,
    #[arg(long, value_enum, env = "G2VERIFY_FORMAT", default_value = "table")]
    format: OutFormat,
    /// Write the model spec of one entry as JSON and exit.
    #[arg(long, value_name = "ID")]
    dump: Option<String>,
    /// List catalog entries and exit.
    #[arg(long)]
    list: bool,
    /// Include wall times in JSON output.
    #[arg(long, env = "G2VERIFY_TIMING")]
    timing: bool,
}

fn emit(s: &str) -> ExitCode {
    let mut out = std::io::stdout().lock();
    if out
        .write_all(s.as_bytes())
        .and_then(|_| out.flush())
        .is_err()
    {
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("verify: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args = Args::parse();

    if args.list {
        let mut s = String::new();
        for e in g2verify::list_entries() {
            let lam = e
                .expected
                .lambda
                .map_or("-".to_string(), |l| format!("{l:.6}"));
            let flag = if e.stretch { "stretch" } else { "" };
            s.push_str(&format!(
                "{:<18} {:>9} {:<9} {:<7} {}\n",
                e.id,
                lam,
                format!("{:?}", e.expected.kind).to_lowercase(),
                flag,
                e.title
            ));
        }
        return emit(&s);
    }

    if let Some(id) = &args.dump {
        return match g2verify::build(id) {
            Ok(b) => match serde_json::to_string_pretty(&b.field.model.to_json()) {
                Ok(s) => emit(&(s + "\n")),
                Err(e) => fail(e),
            },
            Err(e) => fail(e),
        };
    }

    if args.tol.is_nan() || args.tol <= 0.0 || args.samples == 0 {
        return fail("--tol must be positive and --samples nonzero");
    }
    let ids: Vec<&str> = args.ids.iter().map(String::as_str).collect();
    let opts = VerifyOptions {
        samples: args.samples,
        seed: args.seed,
        tol: args.tol,
        include_stretch: args.stretch,
    };
    let r = match report::run_with(&ids, &opts) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let format = match args.format {
        OutFormat::Json => Format::Json,
        OutFormat::Table => Format::Table,
    };
    match report::emit_report(&r, format, args.timing) {
        Ok(s) => {
            let code = emit(&s);
            if code != ExitCode::SUCCESS {
                return code;
            }
        }
        Err(e) => return fail(e),
    }
    if r.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
