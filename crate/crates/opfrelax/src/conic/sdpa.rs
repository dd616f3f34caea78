//! Sparse SDPA (".dat-s") export and an independent reader.
//!
//! The exported problem is `min cᵀx` subject to `X = Σ xₖ·Fₖ − F₀ ⪰ 0` with
//! one diagonal block carrying the scalar inequality rows (equalities are
//! split into opposing inequality pairs) and one dense block per PSD cone.
//! Second-order and rotated cones are lowered to arrow-shaped PSD blocks
//! when lowering is enabled, otherwise the export is rejected.

use super::{AffExpr, ConicError, ConicProgram, PsdBlock};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Matrix entries of one block: (variable index + 1, i, j, value) with
/// matno 0 carrying −constant.
type BlockEntries = BTreeMap<(usize, usize, usize), f64>;

fn fmt_val(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a program as SDPA sparse text (LF line endings, 17 significant
/// digits). `lower_cones = false` rejects programs with SOC/RSOC blocks.
pub fn write_sdpa_string(p: &ConicProgram, lower_cones: bool) -> Result<String, ConicError> {
    p.validate()?;
    if !lower_cones && (!p.soc_blocks.is_empty() || !p.rsoc_blocks.is_empty()) {
        return Err(ConicError::UnsupportedCone(
            "program has second-order blocks; enable cone lowering".into(),
        ));
    }
    let m = p.n_vars;

    // dense PSD blocks first, then arrow blocks, then the LP block
    let mut block_sizes: Vec<i64> = Vec::new();
    let mut blocks: Vec<BlockEntries> = Vec::new();

    let add_psd = |b: &PsdBlock| {
        let mut entries: BlockEntries = BTreeMap::new();
        let mut it = b.entries.iter();
        for q in 0..b.dim {
            for pdx in 0..=q {
                let e = it.next().expect("validated");
                if e.constant != 0.0 {
                    entries.insert((0, pdx + 1, q + 1), -e.constant);
                }
                for (&c, &v) in e.cols.iter().zip(&e.vals) {
                    if v != 0.0 {
                        entries.insert((c + 1, pdx + 1, q + 1), v);
                    }
                }
            }
        }
        (b.dim as i64, entries)
    };

    for b in &p.psd_blocks {
        let (dim, entries) = add_psd(b);
        block_sizes.push(dim);
        blocks.push(entries);
    }
    // arrow lowering: ‖u‖ ≤ t ⇔ [[t, uᵀ],[u, t·I]] ⪰ 0 and
    // s·t ≥ ‖u‖² ⇔ [[s, uᵀ],[u, t·I]] ⪰ 0
    let arrow = |head: &AffExpr, tail: &AffExpr, u: &[AffExpr]| -> (i64, BlockEntries) {
        let dim = 1 + u.len();
        let mut entries: BlockEntries = BTreeMap::new();
        let mut put = |e: &AffExpr, i: usize, j: usize| {
            if e.constant != 0.0 {
                entries.insert((0, i, j), -e.constant);
            }
            for (&c, &v) in e.cols.iter().zip(&e.vals) {
                if v != 0.0 {
                    entries.insert((c + 1, i, j), v);
                }
            }
        };
        put(head, 1, 1);
        for (k, uk) in u.iter().enumerate() {
            put(uk, 1, k + 2);
            put(tail, k + 2, k + 2);
        }
        (dim as i64, entries)
    };
    for soc in &p.soc_blocks {
        let (dim, entries) = arrow(&soc.t, &soc.t, &soc.u);
        block_sizes.push(dim);
        blocks.push(entries);
    }
    for r in &p.rsoc_blocks {
        let (dim, entries) = arrow(&r.s, &r.t, &r.u);
        block_sizes.push(dim);
        blocks.push(entries);
    }

    // scalar rows: nonneg rows plus split equalities, one diagonal block
    let mut lp_rows: Vec<&AffExpr> = p.nonneg_rows.iter().collect();
    let flipped: Vec<AffExpr> = p
        .eq_rows
        .iter()
        .map(|e| AffExpr {
            cols: e.cols.clone(),
            vals: e.vals.iter().map(|v| -v).collect(),
            constant: -e.constant,
        })
        .collect();
    for (e, f) in p.eq_rows.iter().zip(&flipped) {
        lp_rows.push(e);
        lp_rows.push(f);
    }
    if !lp_rows.is_empty() {
        let mut entries: BlockEntries = BTreeMap::new();
        for (r, e) in lp_rows.iter().enumerate() {
            if e.constant != 0.0 {
                entries.insert((0, r + 1, r + 1), -e.constant);
            }
            for (&c, &v) in e.cols.iter().zip(&e.vals) {
                if v != 0.0 {
                    entries.insert((c + 1, r + 1, r + 1), v);
                }
            }
        }
        block_sizes.push(-(lp_rows.len() as i64));
        blocks.push(entries);
    }

    let mut out = String::new();
    writeln!(out, "*SDPA sparse format, generated by opfrelax").unwrap();
    if p.obj_constant != 0.0 {
        writeln!(out, "*OBJCONST {}", fmt_val(p.obj_constant)).unwrap();
    }
    writeln!(out, "{m}").unwrap();
    writeln!(out, "{}", block_sizes.len()).unwrap();
    writeln!(
        out,
        "{}",
        block_sizes
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    )
    .unwrap();
    writeln!(
        out,
        "{}",
        p.objective
            .iter()
            .map(|&v| fmt_val(v))
            .collect::<Vec<_>>()
            .join(" ")
    )
    .unwrap();
    for (bno, entries) in blocks.iter().enumerate() {
        for (&(matno, i, j), &v) in entries {
            if v != 0.0 {
                writeln!(out, "{matno} {} {i} {j} {}", bno + 1, fmt_val(v)).unwrap();
            }
        }
    }
    Ok(out)
}

/// Write the SDPA text to a file.
pub fn export_sdpa(
    p: &ConicProgram,
    path: &Path,
    lower_cones: bool,
) -> Result<(), ConicError> {
    let text = write_sdpa_string(p, lower_cones)?;
    std::fs::write(path, text).map_err(|e| ConicError::Backend(format!("write {path:?}: {e}")))
}

/// Parse SDPA sparse text back into a conic program (diagonal blocks become
/// scalar inequality rows, dense blocks PSD cones).
pub fn read_sdpa(text: &str) -> Result<ConicProgram, ConicError> {
    let mut obj_constant = 0.0;
    let mut numbers: Vec<(usize, Vec<f64>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("*OBJCONST") {
            obj_constant = rest.trim().parse().map_err(|_| ConicError::SdpaParse {
                line: lineno + 1,
                msg: "bad OBJCONST value".into(),
            })?;
            continue;
        }
        if line.starts_with('*') || line.starts_with('"') {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect();
        match vals {
            Ok(v) if !v.is_empty() => numbers.push((lineno + 1, v)),
            _ => {
                return Err(ConicError::SdpaParse {
                    line: lineno + 1,
                    msg: format!("unparseable line `{line}`"),
                })
            }
        }
    }
    if numbers.len() < 4 {
        return Err(ConicError::SdpaParse {
            line: 0,
            msg: "truncated header".into(),
        });
    }
    let m = numbers[0].1[0] as usize;
    let nblocks = numbers[1].1[0] as usize;
    let sizes: Vec<i64> = numbers[2].1.iter().map(|&v| v as i64).collect();
    if sizes.len() != nblocks {
        return Err(ConicError::SdpaParse {
            line: numbers[2].0,
            msg: format!("expected {nblocks} block sizes, got {}", sizes.len()),
        });
    }
    let c = numbers[3].1.clone();
    if c.len() != m {
        return Err(ConicError::SdpaParse {
            line: numbers[3].0,
            msg: format!("expected {m} objective entries, got {}", c.len()),
        });
    }

    // per-block entry maps keyed (i, j, matno) so one matrix position is a
    // contiguous range
    let mut f: Vec<BTreeMap<(usize, usize, usize), f64>> = vec![BTreeMap::new(); nblocks];
    for (line, v) in &numbers[4..] {
        if v.len() != 5 {
            return Err(ConicError::SdpaParse {
                line: *line,
                msg: "entry lines need 5 fields".into(),
            });
        }
        let (matno, blkno) = (v[0] as usize, v[1] as usize);
        let (i, j) = ((v[2] as usize).min(v[3] as usize), (v[2] as usize).max(v[3] as usize));
        if blkno == 0 || blkno > nblocks || matno > m || i == 0 {
            return Err(ConicError::SdpaParse {
                line: *line,
                msg: "entry indices out of range".into(),
            });
        }
        f[blkno - 1].insert((i, j, matno), v[4]);
    }

    let mut p = ConicProgram {
        n_vars: m,
        objective: c,
        obj_constant,
        ..Default::default()
    };
    for (bi, &size) in sizes.iter().enumerate() {
        if size < 0 {
            // diagonal block: each element is one `expr ≥ 0` row
            let rows = (-size) as usize;
            let mut exprs = vec![AffExpr::default(); rows];
            for (&(i, j, matno), &v) in &f[bi] {
                if i != j {
                    return Err(ConicError::SdpaParse {
                        line: 0,
                        msg: "off-diagonal entry in a diagonal block".into(),
                    });
                }
                let e = &mut exprs[i - 1];
                if matno == 0 {
                    e.constant = -v;
                } else {
                    e.cols.push(matno - 1);
                    e.vals.push(v);
                }
            }
            p.nonneg_rows.extend(exprs);
        } else {
            let dim = size as usize;
            let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
            for q in 0..dim {
                for pdx in 0..=q {
                    let mut e = AffExpr::default();
                    for (&(i, j, matno), &v) in
                        f[bi].range((pdx + 1, q + 1, 0)..=(pdx + 1, q + 1, m))
                    {
                        debug_assert_eq!((i, j), (pdx + 1, q + 1));
                        if matno == 0 {
                            e.constant = -v;
                        } else {
                            e.cols.push(matno - 1);
                            e.vals.push(v);
                        }
                    }
                    entries.push(e);
                }
            }
            p.psd_blocks.push(PsdBlock { dim, entries });
        }
    }
    p.validate()?;
    Ok(p)
}
