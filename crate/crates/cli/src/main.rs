//! Command-line driver: analyze orbit rigidity properties, construct and
//! re-verify non-rigidity witness pairs, and check train-track inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num::rational::BigRational;
use num::{One, Signed};

use cvn_core::freegroup::{FreeMap, Word, DEFAULT_LETTER_CAP};
use cvn_core::rigidity::{check_property_p, suggest_pair, w_to_wstar, Direction, PropertyWReport};
use cvn_core::trainmap::{
    parse_toprep, verify_good_rtt, verify_rtt, verify_train_track, PfClass, TopRep, CHECK_DEPTH,
};
use cvn_core::witness::{
    build_witness, candidate_graphs, parse_witness, recheck_witness, witness_to_string,
    WitnessOutcome,
};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_NOT_STABILIZED: u8 = 2;
const EXIT_NO_DIRECTION: u8 = 3;
const EXIT_TT_FAIL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "cvn-rigidity",
    about = "Orbit rigidity analysis, witness construction, and train-track checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DirArg {
    Fwd,
    Bwd,
    Both,
}

impl From<DirArg> for Direction {
    fn from(d: DirArg) -> Direction {
        match d {
            DirArg::Fwd => Direction::Forward,
            DirArg::Bwd => Direction::Backward,
            DirArg::Both => Direction::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GraphsArg {
    /// full candidate family in order
    Default,
    RoseOnly,
    LoopHungOnly,
    SubdividedOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze an automorphism orbit: letter-power bounds, basis-change
    /// check at rank 2, and candidate suggestions.
    Analyze {
        /// automorphism file (rank / image / inverse lines)
        auto: PathBuf,
        /// orbit seed word, e.g. "b a-" or "ba-"
        #[arg(long)]
        g: String,
        #[arg(long, default_value_t = 12)]
        horizon: i64,
        /// basis letter to bound (default: suggested from classification)
        #[arg(long)]
        letter: Option<String>,
        #[arg(long, value_enum, default_value_t = DirArg::Both)]
        direction: DirArg,
        #[arg(long, default_value_t = DEFAULT_LETTER_CAP)]
        letter_cap: usize,
        /// directory for report files (also printed to stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search the candidate graph family for a witness pair agreeing on the
    /// sampled orbit, or re-verify an existing witness file.
    Witness {
        auto: PathBuf,
        #[arg(long)]
        g: String,
        #[arg(long, default_value_t = 12)]
        horizon: i64,
        #[arg(long, value_enum, default_value_t = DirArg::Both)]
        direction: DirArg,
        #[arg(long, value_enum, default_value_t = GraphsArg::Default)]
        graphs: GraphsArg,
        /// margin: lengths never shrink below rho * original
        #[arg(long, default_value = "1/2")]
        rho: String,
        #[arg(long, default_value_t = 6)]
        max_wstar_len: usize,
        #[arg(long, default_value_t = DEFAULT_LETTER_CAP)]
        letter_cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// re-verify this witness file from scratch instead of searching
        #[arg(long)]
        recheck: Option<PathBuf>,
    },
    /// Verify a topological-representative file: train track, relative
    /// train track, and goodness conditions.
    Ttcheck {
        toprep: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run() -> Result<u8> {
    if let Ok(v) = std::env::var("CVN_RIGIDITY_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("bad CVN_RIGIDITY_THREADS value {v:?}"))?;
        if n == 0 {
            bail!("CVN_RIGIDITY_THREADS must be positive");
        }
    }
    match Cli::parse().command {
        Command::Analyze {
            auto,
            g,
            horizon,
            letter,
            direction,
            letter_cap,
            out,
        } => cmd_analyze(
            &auto,
            &g,
            horizon,
            letter.as_deref(),
            direction.into(),
            letter_cap,
            out.as_deref(),
        ),
        Command::Witness {
            auto,
            g,
            horizon,
            direction,
            graphs,
            rho,
            max_wstar_len,
            letter_cap,
            out,
            recheck,
        } => cmd_witness(
            &auto,
            &g,
            horizon,
            direction.into(),
            graphs,
            &rho,
            max_wstar_len,
            letter_cap,
            out.as_deref(),
            recheck.as_deref(),
        ),
        Command::Ttcheck { toprep, out } => cmd_ttcheck(&toprep, out.as_deref()),
    }
}

fn header(command: &str) -> String {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# cvn-rigidity {command} at unix time {ts}\n")
}

fn emit(report: &str, out: Option<&Path>, name: &str) -> Result<()> {
    print!("{report}");
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join(name), report)
            .with_context(|| format!("writing {}", dir.join(name).display()))?;
    }
    Ok(())
}

fn load_map(path: &Path) -> Result<FreeMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let phi = FreeMap::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    if phi.has_inverse() {
        phi.certify()
            .with_context(|| format!("certifying {}", path.display()))?;
    }
    Ok(phi)
}

fn parse_letter(s: &str, rank: usize) -> Result<usize> {
    let w = Word::parse(s).context("parsing letter")?;
    let [l] = w.letters() else {
        bail!("letter must be a single generator, got {s:?}");
    };
    if !l.is_positive() || l.index() >= rank {
        bail!("letter {s:?} out of range for rank {rank}");
    }
    Ok(l.index())
}

fn pf_label(c: &PfClass) -> String {
    match c {
        PfClass::Zero => "zero".into(),
        PfClass::Neg => "neg".into(),
        PfClass::Eg { lambda, cert_power } => {
            format!("eg lambda={lambda:.10} cert_power={cert_power}")
        }
    }
}

fn push_property_report(out: &mut String, tag: &str, r: &PropertyWReport) {
    out.push_str(&format!("{tag}_m {}\n", r.observed_m));
    out.push_str(&format!("{tag}_stabilized {}\n", r.stabilized));
    if r.truncated() {
        out.push_str(&format!("{tag}_truncated true\n"));
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze(
    auto: &Path,
    g: &str,
    horizon: i64,
    letter: Option<&str>,
    direction: Direction,
    letter_cap: usize,
    out: Option<&Path>,
) -> Result<u8> {
    if horizon < 1 {
        bail!("horizon must be at least 1");
    }
    let phi = load_map(auto)?;
    let g = Word::parse(g).context("parsing --g")?;

    let mut report = header("analyze");
    report.push_str(&format!("command analyze\nrank {}\n", phi.rank()));
    report.push_str(&format!("g {g}\nhorizon {horizon}\n"));

    // classification-driven suggestion needs representatives both ways
    let mut suggested = None;
    if phi.has_inverse() {
        let fwd = TopRep::rose_representative(&phi)?;
        let bwd = TopRep::rose_representative(&phi.inverse_map().expect("has inverse"))?;
        let sug = suggest_pair(&fwd, &bwd, None)?;
        report.push_str(&format!("forward_top {}\n", pf_label(&sug.forward_top)));
        report.push_str(&format!("backward_top {}\n", pf_label(&sug.backward_top)));
        if let Some((m, verified)) = sug.crossing_bound {
            report.push_str(&format!("crossing_bound {m} user_supplied={verified}\n"));
        }
        for c in &sug.candidates {
            report.push_str(&format!(
                "candidate {} certified={} ({})\n",
                c.word,
                c.basis_cert.is_some(),
                c.note
            ));
        }
        suggested = sug.candidates.iter().find_map(|c| match c.word.letters() {
            [l] if l.is_positive() => Some(l.index()),
            _ => None,
        });
    } else {
        report.push_str("suggest skipped (no inverse images in file)\n");
    }

    let letter = match letter {
        Some(s) => parse_letter(s, phi.rank())?,
        None => suggested.unwrap_or(0),
    };
    report.push_str(&format!(
        "letter {}\n",
        cvn_core::freegroup::Letter::new(letter, true)
    ));

    let directions: &[(Direction, &str)] = match direction {
        Direction::Forward => &[(Direction::Forward, "forward")],
        Direction::Backward => &[(Direction::Backward, "backward")],
        Direction::Both => &[
            (Direction::Forward, "forward"),
            (Direction::Backward, "backward"),
        ],
    };
    let mut all_stable = true;
    for &(d, tag) in directions {
        let r = check_property_p(&phi, &g, letter, horizon, d, letter_cap)?;
        all_stable &= r.stabilized && !r.truncated();
        push_property_report(&mut report, tag, &r);
    }

    if phi.rank() == 2 {
        let (n_lo, n_hi) = match direction {
            Direction::Forward => (0, horizon),
            Direction::Backward => (-horizon, 0),
            Direction::Both => (-horizon, horizon),
        };
        let orbit = phi.orbit(&g, n_lo, n_hi, letter_cap)?;
        let stream: Vec<_> = orbit.samples.iter().map(|s| s.cyclic.clone()).collect();
        // the basis change b -> b' a^-k needs k beyond the largest a-power
        let m_a = stream.iter().map(|c| c.max_power(0)).max().unwrap_or(0);
        let ws = w_to_wstar(&stream, m_a)?;
        report.push_str(&format!("wstar_k {}\n", ws.k));
        report.push_str(&format!("wstar_holds {}\n", ws.holds()));
        report.push_str(&format!(
            "wstar_violations cond1={} cond2={}\n",
            ws.cond1_violations.len(),
            ws.cond2_violations.len()
        ));
    }

    let code = if all_stable {
        EXIT_OK
    } else {
        EXIT_NOT_STABILIZED
    };
    report.push_str(&format!(
        "verdict {}\n",
        if all_stable {
            "stabilized"
        } else {
            "not-stabilized"
        }
    ));
    emit(&report, out, "analyze.report")?;
    Ok(code)
}

#[allow(clippy::too_many_arguments)]
fn cmd_witness(
    auto: &Path,
    g: &str,
    horizon: i64,
    direction: Direction,
    graphs: GraphsArg,
    rho: &str,
    max_wstar_len: usize,
    letter_cap: usize,
    out: Option<&Path>,
    recheck: Option<&Path>,
) -> Result<u8> {
    if horizon < 1 {
        bail!("horizon must be at least 1");
    }
    let phi = load_map(auto)?;
    let g = Word::parse(g).context("parsing --g")?;

    if let Some(path) = recheck {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let pair = parse_witness(&text).context("parsing witness file")?;
        let transcript = recheck_witness(&pair, &phi, &g, horizon, direction, letter_cap)
            .context("witness recheck failed")?;
        let mut report = header("witness --recheck");
        report.push_str("command recheck\nverdict verified\n");
        for line in &transcript {
            report.push_str(&format!("check {line}\n"));
        }
        emit(&report, out, "recheck.report")?;
        return Ok(EXIT_OK);
    }

    let rho: BigRational = rho.parse().map_err(|e| anyhow::anyhow!("bad --rho: {e}"))?;
    if !(rho.is_positive() && rho < BigRational::one()) {
        bail!("--rho must lie strictly between 0 and 1");
    }
    let family = candidate_graphs(phi.rank());
    let family: Vec<_> = match graphs {
        GraphsArg::Default => family,
        GraphsArg::RoseOnly => vec![family[0].clone()],
        GraphsArg::LoopHungOnly => vec![family[1].clone()],
        GraphsArg::SubdividedOnly => vec![family[2].clone()],
    };
    let outcome = build_witness(
        &phi,
        &g,
        horizon,
        direction,
        &family,
        &rho,
        max_wstar_len,
        letter_cap,
    )?;
    match outcome {
        WitnessOutcome::Found(pair) => {
            let mut file = header("witness");
            file.push_str(&witness_to_string(&pair));
            emit(&file, out, "witness.txt")?;
            Ok(EXIT_OK)
        }
        WitnessOutcome::NoDirection(ranks) => {
            let mut report = header("witness");
            report.push_str("verdict no-direction\n");
            for (gi, rank, cols) in &ranks.per_graph {
                report.push_str(&format!("graph {gi} rank {rank} cols {cols}\n"));
            }
            emit(&report, out, "witness.txt")?;
            Ok(EXIT_NO_DIRECTION)
        }
    }
}

fn cmd_ttcheck(toprep: &Path, out: Option<&Path>) -> Result<u8> {
    let text =
        fs::read_to_string(toprep).with_context(|| format!("reading {}", toprep.display()))?;
    let f = parse_toprep(&text).with_context(|| format!("parsing {}", toprep.display()))?;

    let mut report = header("ttcheck");
    report.push_str(&format!(
        "command ttcheck\nedges {}\nstrata {}\n",
        f.graph().n_edges(),
        f.n_strata()
    ));

    let tt = verify_train_track(&f, CHECK_DEPTH);
    report.push_str(&format!("train_track {}\n", tt.is_train_track()));
    for (edge, verdict) in &tt.illegal_turns {
        report.push_str(&format!("illegal_turn edge {edge} {verdict:?}\n"));
    }
    if let Some(w) = &tt.cancellation {
        report.push_str(&format!(
            "cancellation edge {} step {} pair {:?}\n",
            w.edge, w.step, w.pair
        ));
    }

    let rtt = verify_rtt(&f);
    report.push_str(&format!("relative_train_track {}\n", rtt.passes()));
    for (i, c) in rtt.classes.iter().enumerate() {
        report.push_str(&format!("stratum {i} class {}\n", pf_label(c)));
    }
    for (i, r) in &rtt.irreducibility {
        if let Err(wit) = r {
            report.push_str(&format!("reducible stratum {i} witness {wit:?}\n"));
        }
    }
    for (i, e) in &rtt.cond3a {
        report.push_str(&format!("cond3a stratum {i} edge {e}\n"));
    }
    for (i, p) in &rtt.cond3b {
        report.push_str(&format!("cond3b stratum {i} path {:?}\n", p.edges()));
    }
    for (i, p) in &rtt.cond3c {
        report.push_str(&format!("cond3c stratum {i} path {:?}\n", p.edges()));
    }
    for (i, p) in &rtt.splitting {
        report.push_str(&format!("splitting stratum {i} path {:?}\n", p.edges()));
    }

    let good = verify_good_rtt(&f);
    report.push_str(&format!("good_rtt {}\n", good.passes()));
    for (i, r) in &good.aperiodicity {
        match r {
            Ok(k) => report.push_str(&format!("aperiodic stratum {i} power {k}\n")),
            Err(()) => report.push_str(&format!("periodic stratum {i}\n")),
        }
    }
    for i in &good.zero_top {
        report.push_str(&format!("zero_top stratum {i}\n"));
    }
    for (i, r) in &good.neg_form {
        if let Err(reason) = r {
            report.push_str(&format!("neg_form stratum {i} fails: {reason}\n"));
        }
    }

    let pass = tt.is_train_track() && rtt.passes() && good.passes();
    report.push_str(&format!("verdict {}\n", if pass { "pass" } else { "fail" }));
    emit(&report, out, "ttcheck.report")?;
    Ok(if pass { EXIT_OK } else { EXIT_TT_FAIL })
}
