//! Branch admittance blocks and bus admittance matrix assembly.

use super::{CaseError, Network};
use num_complex::Complex64;
use std::collections::BTreeMap;

/// 2×2 complex admittance block of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub y_ff: Complex64,
    pub y_ft: Complex64,
    pub y_tf: Complex64,
    pub y_tt: Complex64,
}

/// Per-branch blocks, per-bus shunts and the aggregated bus matrix.
#[derive(Debug, Clone)]
pub struct AdmittanceModel {
    /// One entry per branch in the network's branch list; `None` for
    /// out-of-service branches.
    pub branches: Vec<Option<BranchAdmittance>>,
    /// Shunt admittance per bus index, p.u.
    pub shunts: Vec<Complex64>,
    /// Aggregated Ybus entries keyed by dense (row, col) bus indices.
    ybus: BTreeMap<(usize, usize), Complex64>,
    n: usize,
}

impl AdmittanceModel {
    pub fn n_buses(&self) -> usize {
        self.n
    }

    /// Ybus entry at dense indices (zero when structurally absent).
    pub fn ybus(&self, i: usize, j: usize) -> Complex64 {
        self.ybus
            .get(&(i, j))
            .copied()
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    /// Iterator over structurally nonzero Ybus entries.
    pub fn ybus_entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.ybus.iter().map(|(&(i, j), &v)| (i, j, v))
    }
}

/// Build per-branch admittance blocks and the aggregated bus matrix.
///
/// For a branch with series admittance `y = 1/(r + ix)`, total charging
/// susceptance `b`, tap ratio `τ` and phase shift `σ`:
///
/// ```text
/// y_ff = (y + i b/2) / τ²      y_ft = −y / (τ e^{−iσ})
/// y_tf = −y / (τ e^{iσ})       y_tt =  y + i b/2
/// ```
///
/// Bus shunts `(Gs + i·Bs)/baseMVA` are added on the diagonal.
pub fn build_admittance(net: &Network) -> Result<AdmittanceModel, CaseError> {
    let n = net.n_buses();
    let mut blocks = Vec::with_capacity(net.branches.len());
    let mut ybus: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    let mut add = |i: usize, j: usize, v: Complex64| {
        *ybus.entry((i, j)).or_insert_with(|| Complex64::new(0.0, 0.0)) += v;
    };

    for br in &net.branches {
        if !br.status {
            blocks.push(None);
            continue;
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(CaseError::Invalid(format!(
                "branch {}-{}: zero series impedance",
                br.from, br.to
            )));
        }
        let y = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let half_charge = Complex64::new(0.0, br.b_ch / 2.0);
        let tap = Complex64::from_polar(br.tap, br.shift());
        let block = BranchAdmittance {
            y_ff: (y + half_charge) / (tap * tap.conj()),
            y_ft: -y / tap.conj(),
            y_tf: -y / tap,
            y_tt: y + half_charge,
        };
        let f = net.bus_index(br.from).expect("validated endpoint");
        let t = net.bus_index(br.to).expect("validated endpoint");
        add(f, f, block.y_ff);
        add(f, t, block.y_ft);
        add(t, f, block.y_tf);
        add(t, t, block.y_tt);
        blocks.push(Some(block));
    }

    let mut shunts = Vec::with_capacity(n);
    for idx in 0..n {
        let sh = net.shunt_pu(idx);
        shunts.push(sh);
        if sh != Complex64::new(0.0, 0.0) {
            add(idx, idx, sh);
        }
    }

    Ok(AdmittanceModel {
        branches: blocks,
        shunts,
        ybus,
        n,
    })
}
