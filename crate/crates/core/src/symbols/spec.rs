use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::matrix::{PolyMatrix, RatMatrix};
use super::poly::{rat_from_f64, Poly};
use super::SymbolError;

/// Derivative kinds in canonical order.
pub const KIND_NAMES: [&str; 10] = ["", "x", "y", "z", "xx", "xy", "xz", "yy", "yz", "zz"];

/// Monomial exponents of the multiplier attached to each derivative kind 1..=9.
const MU: [[u32; 3]; 9] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [2, 0, 0],
    [1, 1, 0],
    [1, 0, 1],
    [0, 2, 0],
    [0, 1, 1],
    [0, 0, 2],
];

/// One component of (u, ∂u, ∂²u): derivative kind 0..10 applied to component `component`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub kind: usize,
    pub component: usize,
}

impl Slot {
    pub fn canonical_index(&self, m: usize) -> usize {
        self.kind * m + self.component
    }

    fn name(&self, m: usize) -> String {
        let base = if m == 1 { "u".to_string() } else { format!("u{}", self.component + 1) };
        if self.kind == 0 {
            base
        } else {
            format!("{base}_{}", KIND_NAMES[self.kind])
        }
    }

    /// Parses names like `u`, `u_x`, `u_zx`, `u2_yy`. Without an explicit index
    /// the component defaults to `default_component`.
    fn parse(name: &str, default_component: usize) -> Result<Slot, SymbolError> {
        let bad = || SymbolError::InvalidSpec(format!("unrecognised slot name {name:?}"));
        let rest = name.strip_prefix('u').ok_or_else(bad)?;
        let (idx, deriv) = match rest.split_once('_') {
            Some((i, d)) => (i, d),
            None => (rest, ""),
        };
        let component = if idx.is_empty() {
            default_component
        } else {
            let k: usize = idx.parse().map_err(|_| bad())?;
            if k == 0 {
                return Err(bad());
            }
            k - 1
        };
        if rest.contains('_') && deriv.is_empty() {
            return Err(bad());
        }
        let mut letters: Vec<char> = deriv.chars().collect();
        if letters.len() > 2 || letters.iter().any(|c| !matches!(c, 'x' | 'y' | 'z')) {
            return Err(bad());
        }
        letters.sort_unstable();
        let key: String = letters.into_iter().collect();
        let kind = KIND_NAMES.iter().position(|k| *k == key).ok_or_else(bad)?;
        Ok(Slot { kind, component })
    }
}

/// Which slot each equation is resolved for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpecFile", into = "SpecFile")]
pub struct ResolutionSpec {
    m: usize,
    resolved: Vec<Slot>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    m: usize,
    resolved: Vec<String>,
}

impl TryFrom<SpecFile> for ResolutionSpec {
    type Error = SymbolError;
    fn try_from(f: SpecFile) -> Result<Self, SymbolError> {
        let slots = f
            .resolved
            .iter()
            .enumerate()
            .map(|(j, s)| Slot::parse(s, j))
            .collect::<Result<Vec<_>, _>>()?;
        ResolutionSpec::new(f.m, slots)
    }
}

impl From<ResolutionSpec> for SpecFile {
    fn from(s: ResolutionSpec) -> Self {
        SpecFile { m: s.m, resolved: s.resolved.iter().map(|x| x.name(s.m)).collect() }
    }
}

impl FromStr for ResolutionSpec {
    type Err = SymbolError;
    fn from_str(s: &str) -> Result<Self, SymbolError> {
        serde_json::from_str(s).map_err(|e| SymbolError::InvalidSpec(e.to_string()))
    }
}

impl fmt::Display for ResolutionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.resolved.iter().map(|s| s.name(self.m)).collect();
        write!(f, "m={} resolved=[{}]", self.m, names.join(", "))
    }
}

impl ResolutionSpec {
    pub fn new(m: usize, resolved: Vec<Slot>) -> Result<Self, SymbolError> {
        if m == 0 {
            return Err(SymbolError::InvalidSpec("m must be at least 1".into()));
        }
        if resolved.len() != m {
            return Err(SymbolError::InvalidSpec(format!("{} resolved slots for m = {m}", resolved.len())));
        }
        for (j, s) in resolved.iter().enumerate() {
            if s.kind >= 10 || s.component >= m {
                return Err(SymbolError::InvalidSpec(format!("slot {j} out of range")));
            }
            if resolved[..j].contains(s) {
                return Err(SymbolError::InvalidSpec(format!("slot {} resolved twice", s.name(m))));
            }
        }
        Ok(Self { m, resolved })
    }

    /// Single-equation spec from a slot name such as `u_xx`.
    pub fn single(name: &str) -> Result<Self, SymbolError> {
        Self::new(1, vec![Slot::parse(name, 0)?])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SymbolError> {
        let text = std::fs::read_to_string(path).map_err(|e| SymbolError::InvalidSpec(e.to_string()))?;
        text.parse()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn resolved(&self) -> &[Slot] {
        &self.resolved
    }

    /// Equation resolving `slot`, if any.
    pub fn equation_of(&self, slot: Slot) -> Option<usize> {
        self.resolved.iter().position(|s| *s == slot)
    }

    /// Unresolved slots in canonical order; their positions index the first 9m entries of Z.
    pub fn unresolved(&self) -> Vec<Slot> {
        (0..10)
            .flat_map(|kind| (0..self.m).map(move |component| Slot { kind, component }))
            .filter(|s| self.equation_of(*s).is_none())
            .collect()
    }

    /// Row order of B: rows whose slot is resolved come first in equation order,
    /// then the remaining derivative rows in canonical order.
    pub fn row_order(&self) -> Vec<Slot> {
        let mut rows: Vec<Slot> = self.resolved.iter().copied().filter(|s| s.kind > 0).collect();
        for kind in 1..10 {
            for component in 0..self.m {
                let s = Slot { kind, component };
                if self.equation_of(s).is_none() {
                    rows.push(s);
                }
            }
        }
        rows
    }
}

/// Coefficient blocks C₁…C₉, each m×m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamFile", into = "ParamFile")]
pub struct ParameterSet {
    c: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    c: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<ParamFile> for ParameterSet {
    type Error = SymbolError;
    fn try_from(f: ParamFile) -> Result<Self, SymbolError> {
        let m = f.c.first().map(Vec::len).unwrap_or(0);
        let mats = f
            .c
            .iter()
            .map(|rows| {
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return Err(SymbolError::InvalidParameters("blocks must all be m×m".into()));
                }
                Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ParameterSet::new(mats)
    }
}

impl From<ParameterSet> for ParamFile {
    fn from(p: ParameterSet) -> Self {
        ParamFile {
            c: p.c.iter().map(|b| (0..b.nrows()).map(|i| b.row(i).iter().copied().collect()).collect()).collect(),
        }
    }
}

impl ParameterSet {
    pub fn new(c: Vec<DMatrix<f64>>) -> Result<Self, SymbolError> {
        if c.len() != 9 {
            return Err(SymbolError::InvalidParameters(format!("expected 9 blocks, got {}", c.len())));
        }
        let m = c[0].nrows();
        if m == 0 || c.iter().any(|b| b.nrows() != m || b.ncols() != m) {
            return Err(SymbolError::InvalidParameters("blocks must all be m×m with m ≥ 1".into()));
        }
        if c.iter().any(|b| b.iter().any(|x| !x.is_finite())) {
            return Err(SymbolError::InvalidParameters("non-finite coefficient".into()));
        }
        Ok(Self { c })
    }

    pub fn zeros(m: usize) -> Self {
        Self { c: vec![DMatrix::zeros(m, m); 9] }
    }

    /// Scalar parameters for m = 1; `values[k]` is C_{k+1}.
    pub fn scalar(values: [f64; 9]) -> Self {
        Self { c: values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect() }
    }

    pub fn m(&self) -> usize {
        self.c[0].nrows()
    }

    /// C_k for k in 1..=9.
    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.c[k - 1]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut DMatrix<f64> {
        &mut self.c[k - 1]
    }
}

/// Worked single-equation systems.
pub mod presets {
    use super::*;

    /// u_xx = −u_yy − u_zz + S.
    pub fn laplacian() -> (ResolutionSpec, ParameterSet) {
        let mut c = [0.0; 9];
        c[6] = -1.0;
        c[8] = -1.0;
        (ResolutionSpec::single("u_xx").unwrap(), ParameterSet::scalar(c))
    }

    /// u = −u_x + S.
    pub fn ux_plus_u() -> (ResolutionSpec, ParameterSet) {
        let mut c = [0.0; 9];
        c[0] = -1.0;
        (ResolutionSpec::single("u").unwrap(), ParameterSet::scalar(c))
    }

    /// u_x = −u + S.
    pub fn ux_resolved() -> (ResolutionSpec, ParameterSet) {
        let mut c = [0.0; 9];
        c[0] = -1.0;
        (ResolutionSpec::single("u_x").unwrap(), ParameterSet::scalar(c))
    }

    pub fn by_name(name: &str) -> Option<(ResolutionSpec, ParameterSet)> {
        match name {
            "laplacian" => Some(laplacian()),
            "ux_plus_u" => Some(ux_plus_u()),
            "ux_resolved" => Some(ux_resolved()),
            _ => None,
        }
    }
}

/// Exact row of coefficients expressing `slot` in terms of Z (length 10m).
fn slot_row(spec: &ResolutionSpec, params: &ParameterSet, slot: Slot, positions: &[Option<usize>]) -> Vec<BigRational> {
    let m = spec.m;
    let mut row = vec![BigRational::zero(); 10 * m];
    match spec.equation_of(slot) {
        Some(j) => {
            for k in 0..9 {
                let b = &params.c[k];
                for c in 0..m {
                    row[k * m + c] = rat_from_f64(b[(j, c)]);
                }
            }
            row[9 * m + j] = BigRational::one();
        }
        None => {
            let p = positions[slot.canonical_index(m)].expect("unresolved slot has a position");
            row[p] = BigRational::one();
        }
    }
    row
}

fn z_positions(spec: &ResolutionSpec) -> Vec<Option<usize>> {
    let mut pos = vec![None; 10 * spec.m];
    for (p, s) in spec.unresolved().iter().enumerate() {
        pos[s.canonical_index(spec.m)] = Some(p);
    }
    pos
}

fn check_dims(spec: &ResolutionSpec, params: &ParameterSet) -> Result<(), SymbolError> {
    if params.m() != spec.m {
        return Err(SymbolError::InvalidParameters(format!(
            "parameter blocks are {0}×{0} but m = {1}",
            params.m(),
            spec.m
        )));
    }
    Ok(())
}

/// Constant pieces of B₁ = α₀A₀ − A: A₀ (m × 9m) and A (9m × 9m) in B-row order.
pub(crate) struct Structure {
    pub a0: RatMatrix,
    pub a: RatMatrix,
}

pub(crate) fn structure(spec: &ResolutionSpec, params: &ParameterSet) -> Result<Structure, SymbolError> {
    check_dims(spec, params)?;
    let m = spec.m;
    let n = 9 * m;
    let pos = z_positions(spec);
    let a0_rows: Vec<Vec<BigRational>> =
        (0..m).map(|c| slot_row(spec, params, Slot { kind: 0, component: c }, &pos)).collect();
    let rows = spec.row_order();
    let a_rows: Vec<Vec<BigRational>> = rows.iter().map(|s| slot_row(spec, params, *s, &pos)).collect();
    let a0 = RatMatrix::from_fn(m, n, |i, j| a0_rows[i][j].clone());
    let a = RatMatrix::from_fn(n, n, |i, j| a_rows[i][j].clone());
    Ok(Structure { a0, a })
}

/// Builds B₁ (9m×9m) and B₂ (9m×m).
pub fn build_symbol_matrices(spec: &ResolutionSpec, params: &ParameterSet) -> Result<(PolyMatrix, PolyMatrix), SymbolError> {
    check_dims(spec, params)?;
    let m = spec.m;
    let pos = z_positions(spec);
    let rows = spec.row_order();
    let a0: Vec<Vec<BigRational>> =
        (0..m).map(|c| slot_row(spec, params, Slot { kind: 0, component: c }, &pos)).collect();
    let b = PolyMatrix::from_fn(9 * m, 10 * m, |r, col| {
        let s = rows[r];
        let mu = Poly::monomial(MU[s.kind - 1], a0[s.component][col].clone());
        let own = slot_row(spec, params, s, &pos);
        &mu - &Poly::constant(own[col].clone())
    });
    Ok((b.columns(0..9 * m), b.columns(9 * m..10 * m).neg()))
}

/// Recovers C₁…C₉ from C′₁…C′₉ through the permutation that puts the stacked
/// [A₀(B₁); A(B₁)] into block form [C₁ … C₉; E].
pub fn derive_parameters(spec: &ResolutionSpec, c_prime: &[DMatrix<f64>]) -> Result<ParameterSet, SymbolError> {
    let m = spec.m;
    if c_prime.len() != 9 || c_prime.iter().any(|b| b.nrows() != m || b.ncols() != m) {
        return Err(SymbolError::InvalidParameters("C′ must be nine m×m blocks".into()));
    }
    let sigma = stack_permutation(spec);
    // X = (E, −C′₁, …, −C′₉), m × 10m; C″ = X·Pᵀ.
    let x = |i: usize, col: usize| -> BigRational {
        if col < m {
            if i == col { BigRational::one() } else { BigRational::zero() }
        } else {
            let k = (col - m) / m;
            -rat_from_f64(c_prime[k][(i, (col - m) % m)])
        }
    };
    let mut cpp = RatMatrix::zeros(m, 10 * m);
    for (r, &target) in sigma.iter().enumerate() {
        for i in 0..m {
            cpp[(i, target)] = x(i, r);
        }
    }
    let c1 = RatMatrix::from_fn(m, m, |i, j| cpp[(i, j)].clone());
    let (_, c1_inv) = c1.det_and_inverse();
    let c1_inv = c1_inv.ok_or(SymbolError::NotInvertible("C″₁"))?;
    let mut blocks = Vec::with_capacity(9);
    for k in 1..=9 {
        let next = RatMatrix::from_fn(m, m, |i, j| cpp[(i, k * m + j)].clone());
        let ck = c1_inv.mul(&next);
        blocks.push(DMatrix::from_fn(m, m, |i, j| -num_traits::ToPrimitive::to_f64(&ck[(i, j)]).unwrap_or(f64::NAN)));
    }
    let params = ParameterSet::new(blocks)?;
    let s = structure(spec, &params)?;
    if s.a.det_and_inverse().0.is_zero() {
        return Err(SymbolError::NotInvertible("A(B₁)"));
    }
    Ok(params)
}

/// Target row of each row of the stack [A₀(B₁); A(B₁)] under P: the row for
/// equation j's resolved slot goes to j, the unit row for Z position p goes to m + p.
pub fn stack_permutation(spec: &ResolutionSpec) -> Vec<usize> {
    let m = spec.m;
    let pos = z_positions(spec);
    let mut slots: Vec<Slot> = (0..m).map(|c| Slot { kind: 0, component: c }).collect();
    slots.extend(spec.row_order());
    slots
        .iter()
        .map(|s| match spec.equation_of(*s) {
            Some(j) => j,
            None => m + pos[s.canonical_index(m)].unwrap(),
        })
        .collect()
}

/// The stack [A₀(B₁); A(B₁)] (10m × 9m) for given parameters.
pub fn parameter_stack(spec: &ResolutionSpec, params: &ParameterSet) -> Result<RatMatrix, SymbolError> {
    let s = structure(spec, params)?;
    let m = spec.m;
    Ok(RatMatrix::from_fn(10 * m, 9 * m, |i, j| if i < m { s.a0[(i, j)].clone() } else { s.a[(i - m, j)].clone() }))
}
