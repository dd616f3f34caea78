//! Parser and admittance checks against the bundled benchmark cases.

use num_complex::Complex64;
use opfrelax::casefmt::{build_admittance, parse_case, to_case_string};

fn load(name: &str) -> String {
    let path = format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {path}: {e}"))
}

#[test]
fn case5_counts() {
    let net = parse_case(&load("case5.m")).unwrap();
    assert_eq!(net.n_buses(), 5);
    assert_eq!(net.branches.len(), 6);
    assert_eq!(net.generators.len(), 5);
    assert_eq!(net.ref_bus, 4);
}

#[test]
fn case9_counts() {
    let net = parse_case(&load("case9.m")).unwrap();
    assert_eq!(net.n_buses(), 9);
    assert_eq!(net.branches.len(), 9);
    assert_eq!(net.generators.len(), 3);
}

#[test]
fn case300_noncontiguous_ids_resolve() {
    let net = parse_case(&load("case300.m")).unwrap();
    assert_eq!(net.n_buses(), 300);
    assert_eq!(net.branches.len(), 411);
    for br in &net.branches {
        assert!(net.bus_index(br.from).is_some());
        assert!(net.bus_index(br.to).is_some());
    }
}

/// Reference Ybus for case9, computed entrywise by an independent
/// implementation of the standard branch π-model assembly.
const CASE9_YBUS: &[(usize, usize, f64, f64)] = &[
    (0, 0, 0.0, -17.36111111111111),
    (0, 3, 0.0, 17.36111111111111),
    (1, 1, 0.0, -16.0),
    (1, 7, 0.0, 16.0),
    (2, 2, 0.0, -17.064846416382252),
    (2, 5, 0.0, 17.064846416382252),
    (3, 0, 0.0, 17.36111111111111),
    (3, 3, 3.3073789620253065, -39.30888872611897),
    (3, 4, -1.9421912487147266, 10.510682051867931),
    (3, 8, -1.36518771331058, 11.60409556313993),
    (4, 3, -1.9421912487147266, 10.510682051867931),
    (4, 4, 3.2242003871388416, -15.840927014229457),
    (4, 5, -1.2820091384241148, 5.588244962361526),
    (5, 2, 0.0, 17.064846416382252),
    (5, 4, -1.2820091384241148, 5.588244962361526),
    (5, 5, 2.437096619314212, -32.153861805106956),
    (5, 6, -1.1550874808900968, 9.784270426363173),
    (6, 5, -1.1550874808900968, 9.784270426363173),
    (6, 6, 2.772209954136233, -23.30324902327162),
    (6, 7, -1.617122473246136, 13.697978596908444),
    (7, 1, 0.0, 16.0),
    (7, 6, -1.617122473246136, 13.697978596908444),
    (7, 7, 2.8047268525372844, -35.44561313021703),
    (7, 8, -1.1876043792911484, 5.975134533308591),
    (8, 3, -1.36518771331058, 11.60409556313993),
    (8, 7, -1.1876043792911484, 5.975134533308591),
    (8, 8, 2.5527920926017282, -17.338230096448523),
];

#[test]
fn case9_ybus_matches_reference() {
    let net = parse_case(&load("case9.m")).unwrap();
    let adm = build_admittance(&net).unwrap();
    let mut seen = 0;
    for &(i, j, re, im) in CASE9_YBUS {
        let got = adm.ybus(i, j);
        let want = Complex64::new(re, im);
        assert!(
            (got - want).norm() <= 1e-10,
            "Ybus[{i}][{j}] = {got}, reference {want}"
        );
        seen += 1;
    }
    assert_eq!(seen, adm.ybus_entries().count());
}

#[test]
fn roundtrip_all_cases() {
    for name in [
        "case5.m",
        "case9.m",
        "case14.m",
        "case30.m",
        "case57.m",
        "case118.m",
        "case300.m",
        "pglib_opf_case3_lmbd.m",
        "pglib_opf_case5_pjm.m",
    ] {
        let net = parse_case(&load(name)).unwrap();
        let again = parse_case(&to_case_string(&net)).unwrap();
        assert_eq!(net, again, "round trip failed for {name}");
    }
}

#[test]
fn per_unit_conversion_is_exact() {
    for name in ["case5.m", "case57.m", "case300.m"] {
        let net = parse_case(&load(name)).unwrap();
        for (idx, bus) in net.buses.iter().enumerate() {
            let s = net.load_pu(idx);
            if bus.pd != 0.0 {
                assert!(((s.re * net.base_mva - bus.pd) / bus.pd).abs() < 1e-12);
            }
            if bus.qd != 0.0 {
                assert!(((s.im * net.base_mva - bus.qd) / bus.qd).abs() < 1e-12);
            }
        }
    }
}
