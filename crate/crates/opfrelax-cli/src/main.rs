//! Command-line driver: parse, tighten, decompose, solve, bench, calibrate.

mod report;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use opfrelax::casefmt::{build_admittance, network_to_json, parse_case, AdmittanceModel, Network};
use opfrelax::chordal::{
    calibrate, chordal_extend, maximal_cliques, merge_graph, merge_tree, CliqueDecomposition,
    CostCoeffs, SparsityGraph, WeightMode,
};
use opfrelax::conic::{
    assemble, export_sdpa, optimality_gap, run_calibration_probes, ClarabelBackend, SolveStatus,
    SolverBackend, DEFAULT_TOL,
};
use opfrelax::cuts::tighten_angle_bounds;
use opfrelax::relax::{build_model, recover_voltages, BuildConfig, BuildInputs, Variant};
use report::{write_report_table, RunReport};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_INACCURATE: u8 = 1;
const EXIT_DATA: u8 = 3;
const EXIT_SOLVER: u8 = 4;

#[derive(Parser)]
#[command(name = "opfrelax", version, about = "Convex relaxations of AC optimal power flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a case file.
    Parse {
        case: PathBuf,
        /// Write the parsed network as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Analytic angle and voltage-difference bound tightening.
    Tighten {
        case: PathBuf,
        /// Write per-branch bounds as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Chordal decomposition and clique merging statistics.
    Decompose {
        case: PathBuf,
        #[command(flatten)]
        merge: MergeArgs,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Build and solve one relaxation, reporting the bound and gap.
    Solve {
        case: PathBuf,
        /// Relaxation variant.
        #[arg(long, value_enum, default_value_t = ModelArg::Chr)]
        model: ModelArg,
        #[command(flatten)]
        merge: MergeArgs,
        /// Reference objective for the gap.
        #[arg(long, conflicts_with = "refs")]
        ref_objective: Option<f64>,
        /// JSON file with reference objectives per case id.
        #[arg(long)]
        refs: Option<PathBuf>,
        /// Export the assembled program in sparse SDPA format.
        #[arg(long)]
        export_sdpa: Option<PathBuf>,
        /// Interior-point tolerance.
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Write the run report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Disable the trilinear extreme-point envelopes (large-case mode).
        #[arg(long)]
        no_tlm: bool,
        /// Skip analytic bound tightening.
        #[arg(long)]
        no_tighten: bool,
        /// Seed recorded for sampling-based diagnostics.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a suite of (case, variant) rows and aggregate the gaps.
    Bench {
        suite: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Measure per-iteration solver cost and fit the merge cost model.
    Calibrate {
        /// Output coefficients file.
        #[arg(long, default_value = "coeffs.json")]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

#[derive(Args, Clone)]
struct MergeArgs {
    /// Clique merging strategy.
    #[arg(long, value_enum, default_value_t = MergeArg::Graph)]
    merge: MergeArg,
    /// Size threshold selecting the tree strategy's evaluation criterion.
    #[arg(long, default_value_t = 24)]
    kmax: usize,
    /// Convergence block size for the tree strategy.
    #[arg(long, default_value_t = 64)]
    limit: usize,
    /// Cost coefficients file produced by `calibrate`.
    #[arg(long)]
    coeffs: Option<PathBuf>,
    /// Weight combination mode for the merge criterion.
    #[arg(long, value_enum, default_value_t = WeightModeArg::Normalized)]
    weight_mode: WeightModeArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Sdr,
    Chr,
    ChrRms,
    ChrR,
    Qc,
    QcTlm,
    #[value(name = "e-chr-tlm-c")]
    EChrTlmC,
}

impl ModelArg {
    fn variant(self) -> Variant {
        match self {
            ModelArg::Sdr => Variant::Sdr,
            ModelArg::Chr => Variant::ChrC,
            ModelArg::ChrRms => Variant::ChrRms,
            ModelArg::ChrR => Variant::ChrR,
            ModelArg::Qc => Variant::Qc,
            ModelArg::QcTlm => Variant::QcTlm,
            ModelArg::EChrTlmC => Variant::EChrTlmC,
        }
    }

    fn parse_name(name: &str) -> Result<Self> {
        match name {
            "sdr" => Ok(ModelArg::Sdr),
            "chr" | "chr-c" => Ok(ModelArg::Chr),
            "chr-rms" => Ok(ModelArg::ChrRms),
            "chr-r" => Ok(ModelArg::ChrR),
            "qc" => Ok(ModelArg::Qc),
            "qc-tlm" => Ok(ModelArg::QcTlm),
            "e-chr-tlm-c" => Ok(ModelArg::EChrTlmC),
            _ => Err(anyhow!("unknown model `{name}`")),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MergeArg {
    None,
    Tree,
    Graph,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightModeArg {
    Raw,
    Normalized,
}

impl WeightModeArg {
    fn mode(self) -> WeightMode {
        match self {
            WeightModeArg::Raw => WeightMode::Raw,
            WeightModeArg::Normalized => WeightMode::Normalized,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Parse { case, json } => cmd_parse(&case, json.as_deref()),
        Command::Tighten { case, json } => cmd_tighten(&case, json.as_deref()),
        Command::Decompose { case, merge, json } => cmd_decompose(&case, &merge, json.as_deref()),
        Command::Solve {
            case,
            model,
            merge,
            ref_objective,
            refs,
            export_sdpa,
            tol,
            json,
            no_tlm,
            no_tighten,
            seed,
        } => cmd_solve(SolveJob {
            case,
            model,
            merge,
            ref_objective,
            refs,
            export_sdpa,
            tol,
            json,
            no_tlm,
            no_tighten,
            seed,
        }),
        Command::Bench { suite, json, tol } => cmd_bench(&suite, json.as_deref(), tol),
        Command::Calibrate { out, tol } => cmd_calibrate(&out, tol),
    }
}

fn load_network(path: &Path) -> Result<Network> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let net = parse_case(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(net)
}

fn case_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_parse(case: &Path, json: Option<&Path>) -> Result<ExitCode> {
    let net = load_network(case)?;
    let adm = build_admittance(&net)?;
    println!(
        "{}: {} buses, {} branches, {} generators, base {} MVA, ref bus {}",
        case_id(case),
        net.n_buses(),
        net.branches.len(),
        net.generators.len(),
        net.base_mva,
        net.ref_bus
    );
    println!(
        "  Ybus entries: {}, in-service branches: {}",
        adm.ybus_entries().count(),
        net.active_branches().count()
    );
    if let Some(path) = json {
        std::fs::write(path, serde_json::to_string_pretty(&network_to_json(&net))?)?;
        println!("  wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_tighten(case: &Path, json: Option<&Path>) -> Result<ExitCode> {
    let net = load_network(case)?;
    let adm = build_admittance(&net)?;
    let tb = tighten_angle_bounds(&net, &adm);
    let mut tightened = 0;
    let rows: Vec<serde_json::Value> = net
        .branches
        .iter()
        .enumerate()
        .map(|(i, br)| {
            let (lo0, hi0) = br.angle_bounds();
            if tb.angle[i].lo > lo0 || tb.angle[i].hi < hi0 {
                tightened += 1;
            }
            serde_json::json!({
                "branch": i,
                "from": br.from,
                "to": br.to,
                "theta_lo": tb.angle[i].lo,
                "theta_hi": tb.angle[i].hi,
                "vdiff_lo": tb.vdiff_fwd[i].map(|(_, iv)| iv.lo),
                "vdiff_hi": tb.vdiff_fwd[i].map(|(_, iv)| iv.hi),
                "vdiff_rev_lo": tb.vdiff_rev[i].map(|(_, iv)| iv.lo),
                "vdiff_rev_hi": tb.vdiff_rev[i].map(|(_, iv)| iv.hi),
            })
        })
        .collect();
    println!(
        "{}: tightened {} of {} branches ({} diagnostics)",
        case_id(case),
        tightened,
        net.branches.len(),
        tb.diagnostics.len()
    );
    for d in &tb.diagnostics {
        println!("  note: {d}");
    }
    if let Some(path) = json {
        let doc = serde_json::json!({
            "schema": "opfrelax-bounds/1",
            "case": case_id(case),
            "branches": rows,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        println!("  wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn load_coeffs(path: Option<&Path>) -> Result<CostCoeffs> {
    match path {
        None => Ok(CostCoeffs::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading coefficients {}", p.display()))?;
            let doc: serde_json::Value = serde_json::from_str(&text)?;
            let f = |k: &str| -> Result<f64> {
                doc.get(k)
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| anyhow!("coefficients file missing `{k}`"))
            };
            Ok(CostCoeffs {
                kappa: f("kappa")?,
                chi: f("chi")?,
                mu: f("mu")?,
                psi: f("psi")?,
            })
        }
    }
}

struct Decomposed {
    decomposition: CliqueDecomposition,
    pre_blocks: usize,
    pre_max: usize,
    merges: usize,
    fill: usize,
}

fn decompose(net: &Network, merge: &MergeArgs) -> Result<Decomposed> {
    let coeffs = load_coeffs(merge.coeffs.as_deref())?;
    let mode = merge.weight_mode.mode();
    let g = SparsityGraph::from_network(net);
    let ext = chordal_extend(&g);
    let cliques = maximal_cliques(&ext);
    let fill = ext.fill_edges.len();
    let pre_blocks = cliques.len();
    let pre_max = cliques.iter().map(|c| c.len()).max().unwrap_or(0);
    let (decomposition, merges) = match merge.merge {
        MergeArg::None => (
            CliqueDecomposition::from_blocks(cliques, fill, &coeffs, mode),
            0,
        ),
        MergeArg::Tree => {
            let out = merge_tree(&cliques, fill, &coeffs, merge.kmax, merge.limit, mode);
            (out.decomposition, out.merges)
        }
        MergeArg::Graph => {
            let out = merge_graph(&cliques, fill, &coeffs, mode);
            (out.decomposition, out.merges)
        }
    };
    Ok(Decomposed {
        decomposition,
        pre_blocks,
        pre_max,
        merges,
        fill,
    })
}

fn cmd_decompose(case: &Path, merge: &MergeArgs, json: Option<&Path>) -> Result<ExitCode> {
    let net = load_network(case)?;
    let coeffs = load_coeffs(merge.coeffs.as_deref())?;
    let d = decompose(&net, merge)?;
    let dec = &d.decomposition;
    println!(
        "{}: {} cliques (max {}) -> {} blocks (max {}), fill {}, {} merges",
        case_id(case),
        d.pre_blocks,
        d.pre_max,
        dec.blocks.len(),
        dec.max_block_size(),
        d.fill,
        d.merges
    );
    println!(
        "  estimated per-iteration cost: {:.6} s",
        dec.total_time_estimate(&coeffs)
    );
    if let Some(path) = json {
        let doc = serde_json::json!({
            "schema": "opfrelax-decomposition/1",
            "case": case_id(case),
            "fill_edges": d.fill,
            "pre_merge": {"blocks": d.pre_blocks, "max_size": d.pre_max},
            "post_merge": {
                "blocks": dec.blocks.len(),
                "max_size": dec.max_block_size(),
                "merges": d.merges,
                "sum_f_t": dec.total_time_estimate(&coeffs),
            },
            "blocks": dec.blocks,
            "tree_edges": dec.tree_edges,
            "graph_edges": dec.graph_edges,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        println!("  wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

struct SolveJob {
    case: PathBuf,
    model: ModelArg,
    merge: MergeArgs,
    ref_objective: Option<f64>,
    refs: Option<PathBuf>,
    export_sdpa: Option<PathBuf>,
    tol: f64,
    json: Option<PathBuf>,
    no_tlm: bool,
    no_tighten: bool,
    seed: u64,
}

impl SolveJob {
    fn merge_summary(&self) -> String {
        match self.merge.merge {
            MergeArg::None => "none".into(),
            MergeArg::Tree => format!("tree(kmax={},limit={})", self.merge.kmax, self.merge.limit),
            MergeArg::Graph => "graph".into(),
        }
    }
}

fn lookup_reference(
    refs: Option<&Path>,
    explicit: Option<f64>,
    id: &str,
) -> Result<Option<(f64, String)>> {
    if let Some(v) = explicit {
        return Ok(Some((v, "--ref-objective".to_string())));
    }
    let Some(path) = refs else {
        return Ok(None);
    };
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let entry = doc
        .get("references")
        .and_then(|r| r.get(id))
        .ok_or_else(|| anyhow!("no reference objective for `{id}` in {}", path.display()))?;
    let objective = entry
        .get("objective")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| anyhow!("reference for `{id}` has no objective"))?;
    let source = entry
        .get("source")
        .and_then(|v| v.as_str())
        .unwrap_or("refs file")
        .to_string();
    Ok(Some((objective, source)))
}

fn run_one(
    net: &Network,
    adm: &AdmittanceModel,
    job: &SolveJob,
    reference: Option<(f64, String)>,
) -> Result<RunReport> {
    let variant = job.model.variant();
    let t_build = Instant::now();
    let d = decompose(net, &job.merge)?;
    // analytic tightening feeds the envelope-bearing models; the plain
    // relaxations keep their own bounds so their reported values stay
    // comparable with the usual baselines
    let wants_tightening = matches!(variant, Variant::QcTlm | Variant::EChrTlmC);
    let bounds = if job.no_tighten || !wants_tightening {
        None
    } else {
        Some(tighten_angle_bounds(net, adm))
    };
    let inputs = BuildInputs {
        net,
        adm,
        decomposition: Some(&d.decomposition),
        bounds: bounds.as_ref(),
    };
    let config = BuildConfig {
        use_lambda: if job.no_tlm { Some(false) } else { None },
        ..Default::default()
    };
    let model = build_model(&inputs, variant, &config)?;
    let program = assemble(&model)?;
    let build_seconds = t_build.elapsed().as_secs_f64();

    if let Some(path) = &job.export_sdpa {
        export_sdpa(&program, path, true)?;
    }

    let backend = ClarabelBackend::new();
    let sol = backend.solve(&program, job.tol)?;
    let recovery = if matches!(sol.status, SolveStatus::Optimal | SolveStatus::Inaccurate) {
        Some(recover_voltages(net, adm, &model, &sol.primal))
    } else {
        None
    };

    let gap = match &reference {
        Some((v_ref, _)) => Some(optimality_gap(sol.objective, *v_ref)?),
        None => None,
    };
    Ok(RunReport::new(
        net,
        &d.decomposition,
        (d.pre_blocks, d.pre_max, d.merges, d.fill),
        variant,
        &job.merge_summary(),
        &model,
        &program,
        &sol,
        recovery,
        reference,
        gap,
        build_seconds,
        job.seed,
    ))
}

fn cmd_solve(job: SolveJob) -> Result<ExitCode> {
    let net = load_network(&job.case)?;
    let adm = build_admittance(&net)?;
    let id = case_id(&job.case);
    let reference = lookup_reference(job.refs.as_deref(), job.ref_objective, &id)?;
    let mut report = run_one(&net, &adm, &job, reference)?;
    report.case = id;
    println!("{}", report.render_text());
    if let Some(path) = &job.json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(match report.status.as_str() {
        "optimal" => ExitCode::SUCCESS,
        "inaccurate" => ExitCode::from(EXIT_INACCURATE),
        _ => ExitCode::from(EXIT_SOLVER),
    })
}

fn cmd_bench(suite: &Path, json: Option<&Path>, tol: f64) -> Result<ExitCode> {
    let text =
        std::fs::read_to_string(suite).with_context(|| format!("reading {}", suite.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let base_dir = suite.parent().unwrap_or(Path::new("."));
    let refs = doc
        .get("refs")
        .and_then(|v| v.as_str())
        .map(|s| base_dir.join(s));
    let runs = doc
        .get("runs")
        .and_then(|v| v.as_array())
        .ok_or_else(|| anyhow!("suite file needs a `runs` array"))?;

    let mut reports = Vec::new();
    let mut failures = 0;
    for entry in runs {
        let case = entry
            .get("case")
            .and_then(|v| v.as_str())
            .ok_or_else(|| anyhow!("suite row missing `case`"))?;
        let case_path = base_dir.join(case);
        let variants: Vec<String> = entry
            .get("variants")
            .and_then(|v| v.as_array())
            .map(|a| {
                a.iter()
                    .filter_map(|v| v.as_str().map(String::from))
                    .collect()
            })
            .unwrap_or_else(|| vec!["e-chr-tlm-c".to_string()]);
        let merge = entry
            .get("merge")
            .and_then(|v| v.as_str())
            .unwrap_or("graph");
        for vname in &variants {
            let job = SolveJob {
                case: case_path.clone(),
                model: ModelArg::parse_name(vname)?,
                merge: MergeArgs {
                    merge: match merge {
                        "none" => MergeArg::None,
                        "tree" => MergeArg::Tree,
                        _ => MergeArg::Graph,
                    },
                    kmax: 24,
                    limit: 64,
                    coeffs: None,
                    weight_mode: WeightModeArg::Normalized,
                },
                ref_objective: None,
                refs: refs.clone(),
                export_sdpa: None,
                tol,
                json: None,
                no_tlm: false,
                no_tighten: false,
                seed: 0,
            };
            let id = case_id(&job.case);
            let result = load_network(&job.case).and_then(|net| {
                let adm = build_admittance(&net)?;
                let reference = lookup_reference(job.refs.as_deref(), job.ref_objective, &id)?;
                run_one(&net, &adm, &job, reference)
            });
            match result {
                Ok(mut r) => {
                    r.case = id;
                    reports.push(r);
                }
                Err(e) => {
                    eprintln!("{id} {vname}: failed: {e:#}");
                    failures += 1;
                }
            }
        }
    }

    println!("{}", write_report_table(&reports));
    if let Some(path) = json {
        let doc = serde_json::json!({
            "schema": "opfrelax-bench/1",
            "rows": reports,
            "failures": failures,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(if failures > 0 {
        ExitCode::from(EXIT_SOLVER)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_calibrate(out: &Path, tol: f64) -> Result<ExitCode> {
    let backend = ClarabelBackend::new();
    eprintln!("running calibration probes (sequential timing)...");
    let probes = run_calibration_probes(&backend, tol)?;
    let fit = calibrate(&probes)?;
    let doc = serde_json::json!({
        "schema": "opfrelax-coeffs/1",
        "kappa": fit.coeffs.kappa,
        "chi": fit.coeffs.chi,
        "mu": fit.coeffs.mu,
        "psi": fit.coeffs.psi,
        "residual": fit.residual,
        "probes": fit.probes,
    });
    std::fs::write(out, serde_json::to_string_pretty(&doc)?)?;
    println!(
        "calibrated: kappa={:.4e} chi={:.4e} mu={:.4e} psi={:.4e} (rms residual {:.3e} s)",
        fit.coeffs.kappa, fit.coeffs.chi, fit.coeffs.mu, fit.coeffs.psi, fit.residual
    );
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}
