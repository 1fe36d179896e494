//! `wbstream`: stream a text-format update file into the paired sketches
//! and run the requested recovery, printing either the recovered object
//! or `NONE`.
//!
//! Exit codes: 0 recovered/decided, 1 usage or runtime error, 2 stream
//! parse error, 3 verified not-in-class verdict.

use std::io::BufReader;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use wbstream_core::harness::{
    play_game, sparse_recovery_judge, AdversaryStrategy, CollisionStrategy, EmptyStrategy,
    EnumRecovery, GameTranscript, ObliviousRandomStrategy,
};
use wbstream_core::io::{parse_stream, StreamItem, StreamKind};
use wbstream_core::lowrank::{
    rank_decision, recover_matrix, MatrixRecovery, RankDecision, SolverConfig,
};
use wbstream_core::matching::{max_matching, tutte_stream_update, MatchingOutcome, TutteSketch};
use wbstream_core::params::parse_seed_hex;
use wbstream_core::rpca::{rpca_recover, RpcaRecovery};
use wbstream_core::sparse::{
    enumerate_recover, estimate_l0, fast_recover, sparsity_for_eps, SyndromeState, VectorRecovery,
};
use wbstream_core::tensor::{recover_tensor, TensorRecovery};
use wbstream_core::{Error, RecoveryOutcome, SisSketch, SketchParams, StreamUpdate};

#[derive(Parser)]
#[command(name = "wbstream", version, about = "Adversarially robust turnstile stream recovery")]
struct Cli {
    /// Oracle seed: 64 hex characters.
    #[arg(long, global = true, default_value = ZERO_SEED)]
    seed: String,

    /// Solver configuration file with key=value lines
    /// (max_iters, tolerance, lambda_factor, step_mu, multiplier).
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

static ZERO_SEED: &str =
    "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Subcommand)]
enum Command {
    /// Recover a k-sparse vector from a `vector` stream on stdin.
    RecoverVector {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        beta: u64,
        /// Use the polynomial-time syndrome decoder instead of enumeration.
        #[arg(long)]
        fast: bool,
    },
    /// Estimate the number of nonzeros within a factor of n^eps.
    EstimateL0 {
        #[arg(long)]
        n: usize,
        /// Rational in (0,1): `1/2`, or a decimal like `0.5`.
        #[arg(long)]
        eps: String,
        #[arg(long, default_value_t = 100)]
        beta: u64,
    },
    /// Recover a rank-<=k matrix from a `matrix` stream on stdin.
    RecoverMatrix {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        beta: u64,
    },
    /// Decide whether the stream matrix has rank <= k.
    RankDecision {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        beta: u64,
    },
    /// Split a `matrix` stream into rank-<=k plus r-sparse parts.
    Rpca {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        beta: u64,
        /// l1 weight; defaults to 1/sqrt(n).
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Recover CP-rank-<=k factors from a `tensor` stream on stdin.
    RecoverTensor {
        /// Comma-separated side lengths, e.g. 4,4,4.
        #[arg(long)]
        dims: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        beta: u64,
    },
    /// Maximum matching of a `graph` stream, or LARGER_THAN k'.
    Matching {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        kprime: usize,
    },
    /// Simulate the white-box adversary game and print the transcript.
    Game {
        /// Algorithm under attack: `fast` or `enum`.
        #[arg(long)]
        alg: String,
        /// Adversary: `oblivious`, `collision`, or `empty`.
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value_t = 16)]
        rounds: usize,
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        beta: u64,
    },
}

/// Command outcome: what to print and which exit code to use.
struct Report {
    text: String,
    json: serde_json::Value,
    code: u8,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own help/version output is not an error
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(report) => {
            if json {
                println!("{}", report.json);
            } else if !report.text.is_empty() {
                println!("{}", report.text);
            }
            ExitCode::from(report.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<Report, Error> {
    let seed = parse_seed_hex(&cli.seed).map_err(Error::Parameter)?;
    let (config, multiplier) = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::RecoverVector { n, k, beta, fast } => {
            recover_vector_cmd(n, k, beta, fast, seed)
        }
        Command::EstimateL0 { n, eps, beta } => estimate_l0_cmd(n, &eps, beta, seed),
        Command::RecoverMatrix { n, k, beta } => {
            matrix_cmd(n, k, beta, seed, multiplier, &config, false)
        }
        Command::RankDecision { n, k, beta } => {
            matrix_cmd(n, k, beta, seed, multiplier, &config, true)
        }
        Command::Rpca { n, k, r, beta, lambda } => {
            rpca_cmd(n, k, r, beta, lambda, seed, multiplier, &config)
        }
        Command::RecoverTensor { dims, k, beta } => {
            tensor_cmd(&dims, k, beta, seed, multiplier, &config)
        }
        Command::Matching { n, kprime } => matching_cmd(n, kprime, seed, multiplier, &config),
        Command::Game { alg, strategy, rounds, budget, n, k, beta } => {
            game_cmd(&alg, &strategy, rounds, budget, n, k, beta, seed)
        }
    }
}

fn load_config(path: Option<&std::path::Path>) -> Result<(SolverConfig, f64), Error> {
    let mut config = SolverConfig::default();
    let mut multiplier = config.measurement_multiplier;
    let Some(path) = path else {
        return Ok((config, multiplier));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parameter(format!("cannot read config {}: {e}", path.display())))?;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("config line {}: expected key=value", i + 1)))?;
        let bad = |what: &str| Error::Parameter(format!("config line {}: bad {what}", i + 1));
        match key.trim() {
            "max_iters" => config.max_iters = value.trim().parse().map_err(|_| bad("max_iters"))?,
            "tolerance" => config.tolerance = value.trim().parse().map_err(|_| bad("tolerance"))?,
            "lambda_factor" => {
                config.lambda_factor = value.trim().parse().map_err(|_| bad("lambda_factor"))?
            }
            "step_mu" => config.step_mu = Some(value.trim().parse().map_err(|_| bad("step_mu"))?),
            "multiplier" => {
                multiplier = value.trim().parse().map_err(|_| bad("multiplier"))?;
            }
            other => {
                return Err(Error::Parameter(format!("config line {}: unknown key `{other}`", i + 1)))
            }
        }
    }
    config.measurement_multiplier = multiplier;
    Ok((config, multiplier))
}

/// Reads stdin as a stream file and checks the header against what the
/// subcommand expects.
fn read_stream(expected: &StreamKind) -> Result<Vec<StreamItem>, Error> {
    let stdin = std::io::stdin();
    let parser = parse_stream(BufReader::new(stdin.lock()))?;
    if parser.kind() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "stream header `{}` does not match the requested `{}`",
                parser.kind().header_line(),
                expected.header_line()
            ),
        });
    }
    parser.collect()
}

fn updates_of(items: Vec<StreamItem>) -> Vec<StreamUpdate> {
    items
        .into_iter()
        .map(|item| match item {
            StreamItem::Update(u) => u,
            StreamItem::Edge(_) => unreachable!("header check rejects edges here"),
        })
        .collect()
}

fn none_report() -> Report {
    Report { text: "NONE".into(), json: json!({ "outcome": "none" }), code: 3 }
}

fn recover_vector_cmd(
    n: usize,
    k: usize,
    beta: u64,
    fast: bool,
    seed: [u8; 32],
) -> Result<Report, Error> {
    let updates = updates_of(read_stream(&StreamKind::Vector { n })?);
    let max_updates = updates.len().max(1) as u64;
    let params = SketchParams::for_vector(n, k, beta, max_updates, seed)?;
    let outcome = if fast {
        let mut state = VectorRecovery::new(
            SisSketch::new(params),
            SyndromeState::new(n, k, beta, max_updates)?,
        )?;
        for u in &updates {
            state.update(u)?;
        }
        state.finalize();
        fast_recover(&state.sis, &state.det, k, beta)?
    } else {
        let mut sis = SisSketch::new(params);
        for u in &updates {
            sis.update(u)?;
        }
        sis.finalize();
        enumerate_recover(&sis, k, beta)?
    };
    Ok(match outcome {
        RecoveryOutcome::NotInClass(_) => none_report(),
        RecoveryOutcome::Recovered(y, _) => {
            let lines: Vec<String> =
                y.entries.iter().map(|(i, v)| format!("{} {v}", i + 1)).collect();
            Report {
                text: lines.join("\n"),
                json: json!({
                    "outcome": "recovered",
                    "entries": y.entries.iter().map(|&(i, v)| json!([i + 1, v])).collect::<Vec<_>>(),
                }),
                code: 0,
            }
        }
    })
}

fn parse_eps(eps: &str) -> Result<(u64, u64), Error> {
    let bad = || Error::Parameter(format!("eps `{eps}` is not a rational in (0,1)"));
    if let Some((num, den)) = eps.split_once('/') {
        let num: u64 = num.trim().parse().map_err(|_| bad())?;
        let den: u64 = den.trim().parse().map_err(|_| bad())?;
        return Ok((num, den));
    }
    if let Some(frac) = eps.strip_prefix("0.") {
        if !frac.is_empty() && frac.chars().all(|c| c.is_ascii_digit()) && frac.len() <= 9 {
            let num: u64 = frac.parse().map_err(|_| bad())?;
            return Ok((num, 10u64.pow(frac.len() as u32)));
        }
    }
    Err(bad())
}

fn estimate_l0_cmd(n: usize, eps: &str, beta: u64, seed: [u8; 32]) -> Result<Report, Error> {
    let (num, den) = parse_eps(eps)?;
    let k = sparsity_for_eps(n, num, den)?;
    let updates = updates_of(read_stream(&StreamKind::Vector { n })?);
    let max_updates = updates.len().max(1) as u64;
    let params = SketchParams::for_vector(n, k, beta, max_updates, seed)?;
    let mut state = VectorRecovery::new(
        SisSketch::new(params),
        SyndromeState::new(n, k, beta, max_updates)?,
    )?;
    for u in &updates {
        state.update(u)?;
    }
    state.finalize();
    let estimate = estimate_l0(&state.sis, &state.det, beta)?;
    Ok(Report {
        text: estimate.to_string(),
        json: json!({ "outcome": "estimated", "l0": estimate, "k": k }),
        code: 0,
    })
}

fn matrix_rows_text(m: &wbstream_core::lowrank::IntMatrix) -> String {
    (0..m.n)
        .map(|r| {
            (0..m.n).map(|c| m.get(r, c).to_string()).collect::<Vec<_>>().join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn matrix_rows_json(m: &wbstream_core::lowrank::IntMatrix) -> serde_json::Value {
    json!((0..m.n)
        .map(|r| (0..m.n).map(|c| m.get(r, c)).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn matrix_cmd(
    n: usize,
    k: usize,
    beta: u64,
    seed: [u8; 32],
    multiplier: f64,
    config: &SolverConfig,
    decision_only: bool,
) -> Result<Report, Error> {
    let updates = updates_of(read_stream(&StreamKind::Matrix { n })?);
    let mut state = MatrixRecovery::new(n, k, beta, updates.len().max(1) as u64, seed, multiplier)?;
    for u in &updates {
        state.update(u)?;
    }
    state.finalize();
    if decision_only {
        return Ok(match rank_decision(&state.sis, &state.real, k, beta, config)? {
            RankDecision::RankGreater(k) => Report {
                text: format!("RANK>{k}"),
                json: json!({ "outcome": "rank_greater", "k": k }),
                code: 3,
            },
            RankDecision::RankAtMost(k, m) => Report {
                text: matrix_rows_text(&m),
                json: json!({ "outcome": "rank_at_most", "k": k, "matrix": matrix_rows_json(&m) }),
                code: 0,
            },
        });
    }
    Ok(match recover_matrix(&state.sis, &state.real, k, beta, config)? {
        RecoveryOutcome::NotInClass(_) => none_report(),
        RecoveryOutcome::Recovered(m, _) => Report {
            text: matrix_rows_text(&m),
            json: json!({ "outcome": "recovered", "matrix": matrix_rows_json(&m) }),
            code: 0,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn rpca_cmd(
    n: usize,
    k: usize,
    r: usize,
    beta: u64,
    lambda: Option<f64>,
    seed: [u8; 32],
    multiplier: f64,
    config: &SolverConfig,
) -> Result<Report, Error> {
    let updates = updates_of(read_stream(&StreamKind::Matrix { n })?);
    let mut state =
        RpcaRecovery::new(n, k, r, beta, updates.len().max(1) as u64, seed, multiplier)?;
    for u in &updates {
        state.update(u)?;
    }
    state.finalize();
    Ok(match rpca_recover(&state.sis, &state.real, k, r, beta, lambda, config)? {
        RecoveryOutcome::NotInClass(_) => none_report(),
        RecoveryOutcome::Recovered(pair, _) => Report {
            text: format!(
                "L:\n{}\nS:\n{}",
                matrix_rows_text(&pair.low_rank),
                matrix_rows_text(&pair.sparse)
            ),
            json: json!({
                "outcome": "recovered",
                "L": matrix_rows_json(&pair.low_rank),
                "S": matrix_rows_json(&pair.sparse),
            }),
            code: 0,
        },
    })
}

fn tensor_cmd(
    dims: &str,
    k: usize,
    beta: u64,
    seed: [u8; 32],
    multiplier: f64,
    config: &SolverConfig,
) -> Result<Report, Error> {
    let dims: Vec<usize> = dims
        .split(',')
        .map(|d| {
            d.trim()
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::Parameter(format!("bad dimension `{d}` in --dims")))
        })
        .collect::<Result<_, _>>()?;
    let updates = updates_of(read_stream(&StreamKind::Tensor { dims: dims.clone() })?);
    let mut state =
        TensorRecovery::new(&dims, k, beta, updates.len().max(1) as u64, seed, multiplier)?;
    for u in &updates {
        state.update(u)?;
    }
    state.finalize();
    Ok(match recover_tensor(&state.sis, &state.real, k, beta, config)? {
        RecoveryOutcome::NotInClass(_) => none_report(),
        RecoveryOutcome::Recovered(factors, _) => {
            let mut text = String::new();
            for (j, f) in factors.factors.iter().enumerate() {
                text.push_str(&format!("mode {}:\n", j + 1));
                for row in 0..f.nrows() {
                    let cells: Vec<String> =
                        (0..f.ncols()).map(|c| format!("{:.6}", f[(row, c)])).collect();
                    text.push_str(&cells.join(" "));
                    text.push('\n');
                }
            }
            let modes: Vec<serde_json::Value> = factors
                .factors
                .iter()
                .map(|f| {
                    json!((0..f.nrows())
                        .map(|r| (0..f.ncols()).map(|c| f[(r, c)]).collect::<Vec<_>>())
                        .collect::<Vec<_>>())
                })
                .collect();
            Report {
                text: text.trim_end().to_string(),
                json: json!({ "outcome": "recovered", "factors": modes }),
                code: 0,
            }
        }
    })
}

fn matching_cmd(
    n: usize,
    kprime: usize,
    seed: [u8; 32],
    multiplier: f64,
    config: &SolverConfig,
) -> Result<Report, Error> {
    let items = read_stream(&StreamKind::Graph { n })?;
    let mut state = TutteSketch::new(n, kprime, items.len().max(1) as u64, seed, multiplier)?;
    for item in &items {
        let StreamItem::Edge(e) = item else {
            unreachable!("header check rejects non-edges here");
        };
        tutte_stream_update(&mut state, e)?;
    }
    state.finalize();
    Ok(match max_matching(&state.inner.sis, &state.inner.real, kprime, config)? {
        MatchingOutcome::LargerThan(k) => Report {
            text: format!("LARGER_THAN {k}"),
            json: json!({ "outcome": "larger_than", "kprime": k }),
            code: 3,
        },
        MatchingOutcome::MaximumMatching(edges) => {
            let lines: Vec<String> =
                edges.iter().map(|&(u, v)| format!("{} {}", u + 1, v + 1)).collect();
            Report {
                text: lines.join("\n"),
                json: json!({
                    "outcome": "matching",
                    "edges": edges.iter().map(|&(u, v)| json!([u + 1, v + 1])).collect::<Vec<_>>(),
                }),
                code: 0,
            }
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn game_cmd(
    alg: &str,
    strategy: &str,
    rounds: usize,
    budget: u64,
    n: usize,
    k: usize,
    beta: u64,
    seed: [u8; 32],
) -> Result<Report, Error> {
    let max_updates = rounds.max(1) as u64;
    // the collision demo needs deliberately weak parameters; honest ones
    // otherwise
    let toy = strategy == "collision";
    let params = if toy {
        SketchParams::unchecked(vec![n], k, beta, 17, 2, max_updates, seed)
    } else {
        SketchParams::for_vector(n, k, beta, max_updates, seed)?
    };
    let mut strategy_box: Box<dyn AdversaryStrategy> = match strategy {
        "oblivious" => Box::new(ObliviousRandomStrategy::new(seed, n, beta, rounds)),
        "collision" => Box::new(CollisionStrategy::new(&params, k, budget)),
        "empty" => Box::new(EmptyStrategy),
        other => return Err(Error::Parameter(format!("unknown strategy `{other}`"))),
    };
    let judge = sparse_recovery_judge(k, beta);
    let (transcript, verdict) = match alg {
        "enum" => {
            let mut alg = EnumRecovery { sis: SisSketch::new(params), k, beta };
            play_game(&mut alg, strategy_box.as_mut(), rounds, budget, seed, false, judge)?
        }
        "fast" => {
            if toy {
                return Err(Error::Parameter(
                    "the collision demo runs against --alg enum".into(),
                ));
            }
            let mut alg = VectorRecovery::new(
                SisSketch::new(params),
                SyndromeState::new(n, k, beta, max_updates)?,
            )?;
            play_game(&mut alg, strategy_box.as_mut(), rounds, budget, seed, false, judge)?
        }
        other => return Err(Error::Parameter(format!("unknown algorithm `{other}`"))),
    };
    let mut text = transcript_log(&transcript);
    let verdict_line = match verdict.losing_round {
        Some(t) => format!("VERDICT: adversary wins at round {t}"),
        None => "VERDICT: algorithm wins".to_string(),
    };
    text.push_str(&verdict_line);
    Ok(Report {
        text,
        json: json!({
            "outcome": if verdict.adversary_wins { "adversary_wins" } else { "algorithm_wins" },
            "losing_round": verdict.losing_round,
            "rounds_played": transcript.rounds.len(),
        }),
        code: 0,
    })
}

fn transcript_log(transcript: &GameTranscript) -> String {
    let mut out = String::new();
    for (t, round) in transcript.rounds.iter().enumerate() {
        let randomness: String =
            round.randomness.iter().map(|b| format!("{b:02x}")).collect();
        out.push_str(&format!(
            "round {t}: update={:?}{:+} state_bytes={} randomness={} response={}\n",
            round.update.index,
            round.update.delta,
            round.state.len(),
            randomness,
            round.response.as_deref().unwrap_or("-"),
        ));
    }
    out
}
