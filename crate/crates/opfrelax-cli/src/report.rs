//! Run reports: one solved relaxation per report, self-contained enough to
//! re-derive the gap from its own fields.

use opfrelax::casefmt::Network;
use opfrelax::chordal::CliqueDecomposition;
use opfrelax::conic::{ConicProgram, Solution};
use opfrelax::relax::{ModelInstance, ModelStats, Variant, VoltageRecovery};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub case: String,
    pub variant: String,
    pub merge_strategy: String,
    pub status: String,
    /// Certified lower bound on the AC-OPF objective, $/h.
    pub lower_bound: f64,
    pub reference_objective: Option<f64>,
    pub reference_source: Option<String>,
    /// 100·(1 − bound/reference).
    pub gap_percent: Option<f64>,
    pub model: ModelStats,
    pub clique: CliqueStats,
    pub program_rows: usize,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub iterations: u32,
    pub tolerance: f64,
    pub residuals: opfrelax::conic::ResidualReport,
    pub recovery: Option<RecoverySummary>,
    pub backend: String,
    pub tool_version: String,
    pub seed: u64,
    /// Hash of the run configuration, for reproducibility bookkeeping.
    pub config_hash: String,
    pub timestamp_unix: u64,
}

#[derive(Debug, Serialize)]
pub struct CliqueStats {
    pub pre_merge_blocks: usize,
    pub pre_merge_max_size: usize,
    pub blocks: usize,
    pub max_size: usize,
    pub merges: usize,
    pub fill_edges: usize,
}

#[derive(Debug, Serialize)]
pub struct RecoverySummary {
    pub max_rank_ratio: f64,
    pub balance_residual: f64,
    pub exact: bool,
}

/// FNV-1a over the canonical configuration string.
fn config_hash(parts: &[&str]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for part in parts {
        for b in part.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= 0x1f;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

impl RunReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        net: &Network,
        decomposition: &CliqueDecomposition,
        pre: (usize, usize, usize, usize),
        variant: Variant,
        merge_strategy: &str,
        model: &ModelInstance,
        program: &ConicProgram,
        sol: &Solution,
        recovery: Option<VoltageRecovery>,
        reference: Option<(f64, String)>,
        gap: Option<f64>,
        build_seconds: f64,
        seed: u64,
    ) -> Self {
        let (pre_blocks, pre_max, merges, fill) = pre;
        let status = match sol.status {
            opfrelax::conic::SolveStatus::Optimal => "optimal",
            opfrelax::conic::SolveStatus::Inaccurate => "inaccurate",
            opfrelax::conic::SolveStatus::Infeasible => "infeasible",
            opfrelax::conic::SolveStatus::Unbounded => "unbounded",
            opfrelax::conic::SolveStatus::Failed => "failed",
        };
        let hash = config_hash(&[
            variant.name(),
            merge_strategy,
            &format!("{:.17e}", sol.tolerance),
            &format!("buses={}", net.n_buses()),
            &format!("seed={seed}"),
        ]);
        RunReport {
            case: String::new(),
            variant: variant.name().to_string(),
            merge_strategy: merge_strategy.to_string(),
            status: status.to_string(),
            lower_bound: sol.objective,
            reference_objective: reference.as_ref().map(|(v, _)| *v),
            reference_source: reference.map(|(_, s)| s),
            gap_percent: gap,
            model: model.stats(),
            clique: CliqueStats {
                pre_merge_blocks: pre_blocks,
                pre_merge_max_size: pre_max,
                blocks: decomposition.blocks.len(),
                max_size: decomposition.max_block_size(),
                merges,
                fill_edges: fill,
            },
            program_rows: program.n_constraint_rows(),
            build_seconds,
            solve_seconds: sol.solve_seconds,
            iterations: sol.iterations,
            tolerance: sol.tolerance,
            residuals: sol.residuals,
            recovery: recovery.map(|r| RecoverySummary {
                max_rank_ratio: r.max_rank_ratio,
                balance_residual: r.balance_residual,
                exact: r.exact,
            }),
            backend: sol.backend.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: hash,
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn render_text(&self) -> String {
        let mut s = format!(
            "{} [{}] merge={} status={}\n  lower bound {:.4} $/h",
            self.case, self.variant, self.merge_strategy, self.status, self.lower_bound
        );
        if let (Some(r), Some(g)) = (self.reference_objective, self.gap_percent) {
            s.push_str(&format!("  reference {r:.4}  gap {g:.2}%"));
        }
        s.push_str(&format!(
            "\n  blocks {} -> {} (max {}), fill {}, vars {}, rows {}",
            self.clique.pre_merge_blocks,
            self.clique.blocks,
            self.clique.max_size,
            self.clique.fill_edges,
            self.model.variables,
            self.program_rows,
        ));
        s.push_str(&format!(
            "\n  build {:.2}s  solve {:.2}s  iters {}",
            self.build_seconds, self.solve_seconds, self.iterations
        ));
        if let Some(rec) = &self.recovery {
            s.push_str(&format!(
                "\n  rank ratio {:.2e} ({}), balance residual {:.2e}",
                rec.max_rank_ratio,
                if rec.exact { "rank-1" } else { "inexact" },
                rec.balance_residual
            ));
        }
        s
    }
}

/// Aligned text table over a batch of reports, with per-variant averages
/// (gaps rounded to two decimals like the usual comparison tables).
pub fn write_report_table(reports: &[RunReport]) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    writeln!(
        s,
        "{:<24} {:<12} {:>14} {:>12} {:>8} {:>10}",
        "case", "variant", "bound", "reference", "gap%", "status"
    )
    .unwrap();
    for r in reports {
        writeln!(
            s,
            "{:<24} {:<12} {:>14.4} {:>12} {:>8} {:>10}",
            r.case,
            r.variant,
            r.lower_bound,
            r.reference_objective
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into()),
            r.gap_percent
                .map(|g| format!("{g:.2}"))
                .unwrap_or_else(|| "-".into()),
            r.status,
        )
        .unwrap();
    }
    // per-variant average gap over rows that have one
    let mut variants: Vec<String> = reports.iter().map(|r| r.variant.clone()).collect();
    variants.sort();
    variants.dedup();
    for v in variants {
        let gaps: Vec<f64> = reports
            .iter()
            .filter(|r| r.variant == v)
            .filter_map(|r| r.gap_percent)
            .collect();
        if !gaps.is_empty() {
            writeln!(
                s,
                "{:<24} {:<12} {:>14} {:>12} {:>8.2} {:>10}",
                "average",
                v,
                "-",
                "-",
                gaps.iter().sum::<f64>() / gaps.len() as f64,
                "-"
            )
            .unwrap();
        }
    }
    s
}
