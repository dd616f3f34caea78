//! Text-level reader and writer for the MATPOWER matrix subset.

use super::{Branch, Bus, BusType, CaseError, Generator, Network, QuadraticCost};
use std::collections::BTreeMap;

/// One numeric matrix with the source line of each row, for error reporting.
struct Matrix {
    rows: Vec<Vec<f64>>,
    lines: Vec<usize>,
}

struct RawCase {
    base_mva: Option<f64>,
    matrices: BTreeMap<String, Matrix>,
}

/// Parse MATPOWER case text into a validated [`Network`].
pub fn parse_case(text: &str) -> Result<Network, CaseError> {
    let raw = scan(text)?;
    let base_mva = raw.base_mva.ok_or(CaseError::MissingMatrix("baseMVA"))?;
    if !(base_mva > 0.0) {
        return Err(CaseError::BadBaseMva(base_mva));
    }

    let bus = raw
        .matrices
        .get("bus")
        .ok_or(CaseError::MissingMatrix("bus"))?;
    let gen = raw
        .matrices
        .get("gen")
        .ok_or(CaseError::MissingMatrix("gen"))?;
    let branch = raw
        .matrices
        .get("branch")
        .ok_or(CaseError::MissingMatrix("branch"))?;
    let gencost = raw
        .matrices
        .get("gencost")
        .ok_or(CaseError::MissingMatrix("gencost"))?;

    let buses = bus
        .rows
        .iter()
        .zip(&bus.lines)
        .map(|(row, &line)| parse_bus(row, line))
        .collect::<Result<Vec<_>, _>>()?;

    let costs = parse_gencosts(gencost, gen.rows.len())?;
    let generators = gen
        .rows
        .iter()
        .zip(&gen.lines)
        .zip(costs)
        .map(|((row, &line), cost)| parse_gen(row, line, cost))
        .collect::<Result<Vec<_>, _>>()?;

    let branches = branch
        .rows
        .iter()
        .zip(&branch.lines)
        .map(|(row, &line)| parse_branch(row, line))
        .collect::<Result<Vec<_>, _>>()?;

    Network::new(base_mva, buses, generators, branches)
}

/// Scan assignments of the form `mpc.<name> = <scalar fragment>;` or
/// `mpc.<name> = [ rows ];`. Cell arrays (`{ ... }`) and string values are
/// skipped; comments run from `%` to end of line.
fn scan(text: &str) -> Result<RawCase, CaseError> {
    let mut raw = RawCase {
        base_mva: None,
        matrices: BTreeMap::new(),
    };
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line = strip_comment(lines[i]);
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("mpc.") {
            let (name, after) = match rest.split_once('=') {
                Some((n, a)) => (n.trim().to_string(), a.trim()),
                None => {
                    i += 1;
                    continue;
                }
            };
            if after.starts_with('[') {
                let (matrix, next) = scan_matrix(&lines, i, after)?;
                raw.matrices.insert(name, matrix);
                i = next;
                continue;
            } else if after.starts_with('{') {
                // cell array (e.g. bus_name): skip to closing brace
                let mut j = i;
                let mut frag = after.to_string();
                while !frag.contains('}') {
                    j += 1;
                    if j >= lines.len() {
                        return Err(CaseError::Syntax {
                            line: i + 1,
                            msg: format!("unterminated cell array `mpc.{name}`"),
                        });
                    }
                    frag = strip_comment(lines[j]).trim().to_string();
                }
                i = j + 1;
                continue;
            } else if name == "baseMVA" {
                let value = after.trim_end_matches(';').trim();
                raw.base_mva = Some(value.parse().map_err(|_| CaseError::Syntax {
                    line: i + 1,
                    msg: format!("invalid baseMVA value `{value}`"),
                })?);
            }
            // scalar/string assignments other than baseMVA are ignored
        }
        i += 1;
    }
    Ok(raw)
}

fn scan_matrix(
    lines: &[&str],
    start: usize,
    first_fragment: &str,
) -> Result<(Matrix, usize), CaseError> {
    let mut matrix = Matrix {
        rows: Vec::new(),
        lines: Vec::new(),
    };
    let mut i = start;
    // fragment after '[' on the assignment line
    let mut fragment = first_fragment[1..].to_string();
    loop {
        let (body, done) = match fragment.find(']') {
            Some(p) => (fragment[..p].to_string(), true),
            None => (fragment.clone(), false),
        };
        for piece in body.split(';') {
            let piece = piece.trim();
            if piece.is_empty() {
                continue;
            }
            let row = piece
                .split_whitespace()
                .map(|tok| parse_number(tok))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| CaseError::Syntax {
                    line: i + 1,
                    msg: format!("invalid numeric row `{piece}`"),
                })?;
            matrix.rows.push(row);
            matrix.lines.push(i + 1);
        }
        if done {
            return Ok((matrix, i + 1));
        }
        i += 1;
        if i >= lines.len() {
            return Err(CaseError::Syntax {
                line: start + 1,
                msg: "unterminated matrix literal".into(),
            });
        }
        fragment = strip_comment(lines[i]).trim().to_string();
    }
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse().ok(),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(p) => &line[..p],
        None => line,
    }
}

fn field(row: &[f64], idx: usize, line: usize, what: &str) -> Result<f64, CaseError> {
    row.get(idx).copied().ok_or_else(|| CaseError::Syntax {
        line,
        msg: format!("row too short: missing {what} (column {})", idx + 1),
    })
}

fn parse_bus(row: &[f64], line: usize) -> Result<Bus, CaseError> {
    let id = field(row, 0, line, "bus id")? as usize;
    let bus_type = match field(row, 1, line, "bus type")? as i64 {
        1 => BusType::Pq,
        2 => BusType::Pv,
        3 => BusType::Ref,
        t => {
            return Err(CaseError::Syntax {
                line,
                msg: format!("unsupported bus type {t} at bus {id}"),
            })
        }
    };
    Ok(Bus {
        id,
        bus_type,
        pd: field(row, 2, line, "Pd")?,
        qd: field(row, 3, line, "Qd")?,
        gs: field(row, 4, line, "Gs")?,
        bs: field(row, 5, line, "Bs")?,
        v_max: field(row, 11, line, "Vmax")?,
        v_min: field(row, 12, line, "Vmin")?,
    })
}

fn parse_gen(row: &[f64], line: usize, cost: QuadraticCost) -> Result<Generator, CaseError> {
    Ok(Generator {
        bus: field(row, 0, line, "gen bus")? as usize,
        q_max: field(row, 3, line, "Qmax")?,
        q_min: field(row, 4, line, "Qmin")?,
        status: field(row, 7, line, "gen status")? != 0.0,
        p_max: field(row, 8, line, "Pmax")?,
        p_min: field(row, 9, line, "Pmin")?,
        cost,
    })
}

fn parse_branch(row: &[f64], line: usize) -> Result<Branch, CaseError> {
    let ratio = field(row, 8, line, "ratio")?;
    Ok(Branch {
        from: field(row, 0, line, "from bus")? as usize,
        to: field(row, 1, line, "to bus")? as usize,
        r: field(row, 2, line, "r")?,
        x: field(row, 3, line, "x")?,
        b_ch: field(row, 4, line, "b")?,
        rate_a: field(row, 5, line, "rateA")?,
        tap: if ratio == 0.0 { 1.0 } else { ratio },
        shift_deg: field(row, 9, line, "angle")?,
        status: field(row, 10, line, "branch status")? != 0.0,
        ang_min_deg: field(row, 11, line, "angmin")?,
        ang_max_deg: field(row, 12, line, "angmax")?,
    })
}

fn parse_gencosts(m: &Matrix, n_gen: usize) -> Result<Vec<QuadraticCost>, CaseError> {
    // MATPOWER permits 2*ng rows (P costs then Q costs); only P costs are used.
    if m.rows.len() != n_gen && m.rows.len() != 2 * n_gen {
        return Err(CaseError::CostRowMismatch {
            got: m.rows.len(),
            expected: n_gen,
        });
    }
    m.rows
        .iter()
        .zip(&m.lines)
        .take(n_gen)
        .enumerate()
        .map(|(index, (row, &line))| {
            let model = field(row, 0, line, "cost model")? as i64;
            if model == 1 {
                return Err(CaseError::PiecewiseLinearCost { index });
            }
            if model != 2 {
                return Err(CaseError::Syntax {
                    line,
                    msg: format!("unknown cost model {model}"),
                });
            }
            let n = field(row, 3, line, "cost term count")? as usize;
            let coeffs = &row[4..];
            if coeffs.len() < n {
                return Err(CaseError::Syntax {
                    line,
                    msg: format!("expected {n} cost coefficients, found {}", coeffs.len()),
                });
            }
            // coefficients are highest degree first; anything above degree 2
            // must be zero
            if n > 3 && coeffs[..n - 3].iter().any(|&c| c != 0.0) {
                return Err(CaseError::UnsupportedCostDegree { index });
            }
            let low = &coeffs[n.saturating_sub(3)..n];
            let (a, b, c) = match low.len() {
                3 => (low[0], low[1], low[2]),
                2 => (0.0, low[0], low[1]),
                1 => (0.0, 0.0, low[0]),
                _ => (0.0, 0.0, 0.0),
            };
            Ok(QuadraticCost { a, b, c })
        })
        .collect()
}

/// Serialize a network back to MATPOWER case text.
///
/// Columns the network does not model (areas, setpoints, base kV, ramp data)
/// are emitted as neutral placeholders; re-parsing the output reproduces the
/// input network exactly.
pub fn to_case_string(net: &Network) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    writeln!(s, "function mpc = case").unwrap();
    writeln!(s, "mpc.version = '2';").unwrap();
    writeln!(s, "mpc.baseMVA = {};", net.base_mva).unwrap();
    writeln!(s, "mpc.bus = [").unwrap();
    for b in &net.buses {
        let t = match b.bus_type {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Ref => 3,
        };
        writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t1\t0\t0\t1\t{}\t{};",
            b.id, t, b.pd, b.qd, b.gs, b.bs, b.v_max, b.v_min
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();
    writeln!(s, "mpc.gen = [").unwrap();
    for g in &net.generators {
        writeln!(
            s,
            "\t{}\t0\t0\t{}\t{}\t1\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;",
            g.bus,
            g.q_max,
            g.q_min,
            net.base_mva,
            if g.status { 1 } else { 0 },
            g.p_max,
            g.p_min
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();
    writeln!(s, "mpc.branch = [").unwrap();
    for br in &net.branches {
        let ratio = if br.tap == 1.0 { 0.0 } else { br.tap };
        writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t{}\t{}\t{};",
            br.from,
            br.to,
            br.r,
            br.x,
            br.b_ch,
            br.rate_a,
            ratio,
            br.shift_deg,
            if br.status { 1 } else { 0 },
            br.ang_min_deg,
            br.ang_max_deg
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();
    writeln!(s, "mpc.gencost = [").unwrap();
    for g in &net.generators {
        writeln!(s, "\t2\t0\t0\t3\t{}\t{}\t{};", g.cost.a, g.cost.b, g.cost.c).unwrap();
    }
    writeln!(s, "];").unwrap();
    s
}

/// Versioned JSON dump of a parsed network.
pub fn network_to_json(net: &Network) -> serde_json::Value {
    serde_json::json!({
        "schema": "opfrelax-network/1",
        "network": net,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "\
function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t2\t1\t50\t10\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1\t100\t1\t200\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0.02\t100\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t2\t10\t0;
];
";

    #[test]
    fn parses_minimal_two_bus_case() {
        let net = parse_case(TWO_BUS).unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.generators.len(), 1);
        assert_eq!(net.branches.len(), 1);
        assert_eq!(net.ref_bus, 1);
        assert_eq!(net.generators[0].cost, QuadraticCost { a: 0.0, b: 10.0, c: 0.0 });
        // loads are kept in MW; per-unit accessor divides by the base
        let idx = net.bus_index(2).unwrap();
        assert!((net.load_pu(idx).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn missing_gencost_is_reported() {
        let text = TWO_BUS.replace("mpc.gencost", "mpc.othercost");
        match parse_case(&text) {
            Err(CaseError::MissingMatrix("gencost")) => {}
            other => panic!("expected missing gencost, got {other:?}"),
        }
    }

    #[test]
    fn piecewise_linear_cost_is_rejected() {
        let text = TWO_BUS.replace("2\t0\t0\t2\t10\t0;", "1\t0\t0\t2\t0\t0\t100\t1000;");
        match parse_case(&text) {
            Err(CaseError::PiecewiseLinearCost { index: 0 }) => {}
            other => panic!("expected piecewise-linear rejection, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_line_number() {
        let text = TWO_BUS.replace("\t1\t2\t0.01", "\t1\tzz\t0.01");
        match parse_case(&text) {
            Err(CaseError::Syntax { line, .. }) => assert!(line > 0),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_reproduces_network() {
        let net = parse_case(TWO_BUS).unwrap();
        let text = to_case_string(&net);
        let again = parse_case(&text).unwrap();
        assert_eq!(net, again);
    }
}
