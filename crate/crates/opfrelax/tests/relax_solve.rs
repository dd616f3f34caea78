//! End-to-end model assembly and solve checks against independent oracles.

use opfrelax::casefmt::{build_admittance, parse_case};
use opfrelax::chordal::{
    chordal_extend, maximal_cliques, CliqueDecomposition, CostCoeffs, SparsityGraph, WeightMode,
};
use opfrelax::conic::{assemble, ClarabelBackend, SolveStatus, SolverBackend, DEFAULT_TOL};
use opfrelax::cuts::tighten_angle_bounds;
use opfrelax::relax::{build_model, BuildConfig, BuildInputs, Variant};

fn load(name: &str) -> String {
    let path = format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {path}: {e}"))
}

const TWO_BUS: &str = "\
function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t2\t1\t50\t10\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t300\t-300\t1\t100\t1\t200\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0.02\t100\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t2\t10\t0;
];
";

/// Independent 2-bus AC-OPF oracle: for each sending-end magnitude, solve
/// the receiving-end power flow by Newton iteration and take the cheapest
/// feasible dispatch (cost is increasing in generation, so the optimum is
/// the loss-minimizing sending voltage).
fn two_bus_bruteforce() -> f64 {
    let (r, x, b_ch) = (0.01, 0.1, 0.02);
    let y = {
        let d = r * r + x * x;
        (r / d, -x / d)
    };
    let (p_load, q_load) = (0.5, 0.1);
    // flow out of bus 2 toward bus 1 must equal −S_load
    let mismatch = |v1: f64, v2: f64, th12: f64| -> (f64, f64) {
        // S_t = V2·conj(Ytf·V1 + Ytt·V2), θ2 − θ1 = −θ12
        let (g, bb) = y;
        let ytt = (g, bb + b_ch / 2.0);
        let ytf = (-g, -bb);
        // complex arithmetic by hand: V1 = v1·e^{jθ1}, take θ2 = 0
        let th1 = th12;
        let (v1re, v1im) = (v1 * th1.cos(), v1 * th1.sin());
        let (i_re, i_im) = (
            ytf.0 * v1re - ytf.1 * v1im + ytt.0 * v2,
            ytf.0 * v1im + ytf.1 * v1re + ytt.1 * v2,
        );
        let (s_re, s_im) = (v2 * i_re, -(v2 * i_im) * (-1.0f64).signum() * -1.0);
        // S = V2 · conj(I): conj(I) = (i_re, −i_im); V2 real
        let s_re = v2 * i_re;
        let s_im = -v2 * i_im;
        let _ = (s_re, s_im);
        ((s_re) + p_load, (s_im) + q_load)
    };
    let solve_pf = |v1: f64| -> Option<(f64, f64)> {
        // Newton on (v2, th12) from flat start
        let (mut v2, mut th) = (1.0, 0.0);
        for _ in 0..80 {
            let (f1, f2) = mismatch(v1, v2, th);
            if f1.abs() < 1e-12 && f2.abs() < 1e-12 {
                break;
            }
            let h = 1e-7;
            let (f1v, f2v) = mismatch(v1, v2 + h, th);
            let (f1t, f2t) = mismatch(v1, v2, th + h);
            let j11 = (f1v - f1) / h;
            let j12 = (f1t - f1) / h;
            let j21 = (f2v - f2) / h;
            let j22 = (f2t - f2) / h;
            let det = j11 * j22 - j12 * j21;
            if det.abs() < 1e-14 {
                return None;
            }
            v2 -= (f1 * j22 - f2 * j12) / det;
            th -= (f2 * j11 - f1 * j21) / det;
        }
        let (f1, f2) = mismatch(v1, v2, th);
        if f1.abs() > 1e-9 || f2.abs() > 1e-9 || !(0.9..=1.1).contains(&v2) {
            return None;
        }
        Some((v2, th))
    };
    let gen_p = |v1: f64, v2: f64, th12: f64| -> f64 {
        let (g, bb) = y;
        let yff = (g, bb + b_ch / 2.0);
        let yft = (-g, -bb);
        // S_f = V1·conj(Yff·V1 + Yft·V2), phases: θ1 = th12, θ2 = 0
        let (v1re, v1im) = (v1 * th12.cos(), v1 * th12.sin());
        let (i_re, i_im) = (
            yff.0 * v1re - yff.1 * v1im + yft.0 * v2,
            yff.0 * v1im + yff.1 * v1re + yft.1 * v2,
        );
        v1re * i_re + v1im * i_im
    };
    // golden-section over v1
    let cost = |v1: f64| -> f64 {
        match solve_pf(v1) {
            Some((v2, th)) => {
                let p = gen_p(v1, v2, th);
                let s_f = {
                    // thermal check at the sending end
                    let (g, bb) = y;
                    let yff = (g, bb + b_ch / 2.0);
                    let yft = (-g, -bb);
                    let (v1re, v1im) = (v1 * th.cos(), v1 * th.sin());
                    let (i_re, i_im) = (
                        yff.0 * v1re - yff.1 * v1im + yft.0 * v2,
                        yff.0 * v1im + yff.1 * v1re + yft.1 * v2,
                    );
                    let p_f = v1re * i_re + v1im * i_im;
                    let q_f = v1im * i_re - v1re * i_im;
                    (p_f * p_f + q_f * q_f).sqrt()
                };
                if s_f > 1.0 || !(0.0..=2.0).contains(&p) {
                    f64::INFINITY
                } else {
                    10.0 * p * 100.0
                }
            }
            None => f64::INFINITY,
        }
    };
    let (mut a, mut b) = (0.9f64, 1.1f64);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..120 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
    }
    cost((a + b) / 2.0).min(cost(0.9)).min(cost(1.1))
}

fn decομpose(net: &opfrelax::casefmt::Network) -> CliqueDecomposition {
    let g = SparsityGraph::from_network(net);
    let ext = chordal_extend(&g);
    let cliques = maximal_cliques(&ext);
    CliqueDecomposition::from_blocks(
        cliques,
        ext.fill_edges.len(),
        &CostCoeffs::default(),
        WeightMode::Normalized,
    )
}

#[test]
fn two_bus_sdr_equals_bruteforce() {
    let net = parse_case(TWO_BUS).unwrap();
    let adm = build_admittance(&net).unwrap();
    let inputs = BuildInputs {
        net: &net,
        adm: &adm,
        decomposition: None,
        bounds: None,
    };
    let model = build_model(&inputs, Variant::Sdr, &BuildConfig::default()).unwrap();
    assert_eq!(model.psd_blocks.len(), 1);
    assert_eq!(model.psd_blocks[0].dim, 4); // 2×2 Hermitian lifted to 4×4
    let program = assemble(&model).unwrap();
    let sol = ClarabelBackend::new().solve(&program, DEFAULT_TOL).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let oracle = two_bus_bruteforce();
    eprintln!("2-bus: sdr={} oracle={}", sol.objective, oracle);
    assert!(
        (sol.objective - oracle).abs() / oracle <= 2e-5,
        "sdr {} vs bruteforce {}",
        sol.objective,
        oracle
    );
}

#[test]
fn case9_sdr_and_chr_match() {
    let net = parse_case(&load("case9.m")).unwrap();
    let adm = build_admittance(&net).unwrap();
    let dec = decομpose(&net);
    let backend = ClarabelBackend::new();

    let inputs = BuildInputs {
        net: &net,
        adm: &adm,
        decomposition: Some(&dec),
        bounds: None,
    };
    let sdr = build_model(&inputs, Variant::Sdr, &BuildConfig::default()).unwrap();
    let sol_sdr = backend.solve(&assemble(&sdr).unwrap(), DEFAULT_TOL).unwrap();
    let chr = build_model(&inputs, Variant::ChrC, &BuildConfig::default()).unwrap();
    let sol_chr = backend.solve(&assemble(&chr).unwrap(), DEFAULT_TOL).unwrap();
    eprintln!(
        "case9: sdr={} ({:?}), chr={} ({:?})",
        sol_sdr.objective, sol_sdr.status, sol_chr.objective, sol_chr.status
    );
    assert_eq!(sol_sdr.status, SolveStatus::Optimal);
    assert_eq!(sol_chr.status, SolveStatus::Optimal);
    // known AC optimum of this case; the relaxation is tight here
    assert!(
        (sol_sdr.objective - 5296.69).abs() / 5296.69 < 5e-3,
        "case9 sdr bound {}",
        sol_sdr.objective
    );
    assert!((sol_sdr.objective - sol_chr.objective).abs() / sol_sdr.objective < 1e-6);
}

#[test]
fn case5_sdr_bound() {
    let net = parse_case(&load("case5.m")).unwrap();
    let adm = build_admittance(&net).unwrap();
    let inputs = BuildInputs {
        net: &net,
        adm: &adm,
        decomposition: None,
        bounds: None,
    };
    let model = build_model(&inputs, Variant::Sdr, &BuildConfig::default()).unwrap();
    let sol = ClarabelBackend::new()
        .solve(&assemble(&model).unwrap(), DEFAULT_TOL)
        .unwrap();
    eprintln!("case5: sdr={} ({:?})", sol.objective, sol.status);
    assert_eq!(sol.status, SolveStatus::Optimal);
    // gap vs the MIPS reference 17552.9 should be ≈ 5.22%
    let gap = 100.0 * (1.0 - sol.objective / 17552.8992);
    eprintln!("case5 sdr gap = {gap}");
    assert!((gap - 5.22).abs() < 0.3, "gap {gap}");
}

#[test]
fn case5_echr_with_tightening() {
    let net = parse_case(&load("case5.m")).unwrap();
    let adm = build_admittance(&net).unwrap();
    let dec = decομpose(&net);
    let tb = tighten_angle_bounds(&net, &adm);
    let inputs = BuildInputs {
        net: &net,
        adm: &adm,
        decomposition: Some(&dec),
        bounds: Some(&tb),
    };
    let model = build_model(&inputs, Variant::EChrTlmC, &BuildConfig::default()).unwrap();
    let sol = ClarabelBackend::new()
        .solve(&assemble(&model).unwrap(), DEFAULT_TOL)
        .unwrap();
    let gap = 100.0 * (1.0 - sol.objective / 17552.8992);
    eprintln!("case5: e-chr={} ({:?}) gap={gap}", sol.objective, sol.status);
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((gap - 5.15).abs() < 0.3, "gap {gap}");
}
