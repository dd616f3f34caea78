//! Development sweep: solve every bundled case under several variants and
//! print bounds and gaps against the reference objectives.

use opfrelax::casefmt::{build_admittance, parse_case};
use opfrelax::chordal::{
    chordal_extend, maximal_cliques, merge_graph, CliqueDecomposition, CostCoeffs, SparsityGraph,
    WeightMode,
};
use opfrelax::conic::{assemble, ClarabelBackend, SolverBackend, DEFAULT_TOL};
use opfrelax::cuts::tighten_angle_bounds;
use opfrelax::relax::{build_model, BuildConfig, BuildInputs, Variant};
use std::time::Instant;

fn main() {
    let refs: &[(&str, f64)] = &[
        ("case5.m", 17552.8992),
        ("case9.m", 5296.6862),
        ("case14.m", 8081.5265),
        ("case30.m", 576.8924),
        ("case57.m", 41737.7867),
        ("pglib_opf_case3_lmbd.m", 5812.64),
        ("pglib_opf_case5_pjm.m", 17551.89),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    let only: Option<&str> = args.first().map(|s| s.as_str());
    let backend = ClarabelBackend::new();
    for &(case, reference) in refs {
        if let Some(o) = only {
            if !case.contains(o) {
                continue;
            }
        }
        let text = std::fs::read_to_string(format!("cases/{case}")).unwrap();
        let net = parse_case(&text).unwrap();
        let adm = build_admittance(&net).unwrap();
        let g = SparsityGraph::from_network(&net);
        let ext = chordal_extend(&g);
        let cliques = maximal_cliques(&ext);
        let dec = CliqueDecomposition::from_blocks(
            cliques.clone(),
            ext.fill_edges.len(),
            &CostCoeffs::default(),
            WeightMode::Normalized,
        );
        let merged = merge_graph(
            &cliques,
            ext.fill_edges.len(),
            &CostCoeffs::default(),
            WeightMode::Normalized,
        );
        let tb = tighten_angle_bounds(&net, &adm);
        eprintln!(
            "== {case}: n={} cliques={} merged={} fill={}",
            net.n_buses(),
            dec.blocks.len(),
            merged.decomposition.blocks.len(),
            ext.fill_edges.len()
        );
        for variant in [
            Variant::Sdr,
            Variant::ChrC,
            Variant::ChrRms,
            Variant::ChrR,
            Variant::Qc,
            Variant::QcTlm,
            Variant::EChrTlmC,
        ] {
            let bounds = if matches!(variant, Variant::QcTlm | Variant::EChrTlmC) {
                Some(&tb)
            } else {
                None
            };
            let inputs = BuildInputs {
                net: &net,
                adm: &adm,
                decomposition: Some(&dec),
                bounds,
            };
            let t0 = Instant::now();
            let model = match build_model(&inputs, variant, &BuildConfig::default()) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("  {:12} build error: {e}", variant.name());
                    continue;
                }
            };
            let program = assemble(&model).unwrap();
            let sol = backend.solve(&program, DEFAULT_TOL).unwrap();
            let gap = 100.0 * (1.0 - sol.objective / reference);
            eprintln!(
                "  {:12} {:>12.4}  gap {:>8.4}%  [{:?}] vars={} rows={} iters={} {:.2}s",
                variant.name(),
                sol.objective,
                gap,
                sol.status,
                program.n_vars,
                program.n_constraint_rows(),
                sol.iterations,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
