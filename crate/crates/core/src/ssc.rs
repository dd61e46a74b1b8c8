//! Semantic Scan Context descriptor and similarity scoring.
//!
//! The scan is cut into `nr` rings × `ns` sectors of the polar plane. Each
//! block stores the class of highest priority among its points (0 when
//! empty). Two descriptors of aligned scans are scored by the fraction of
//! jointly occupied blocks whose codes agree.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{LabeledCloud, PriorityTable, SemanticClass, NUM_CLASSES};
use crate::projection::to_polar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SscParams {
    /// Sectors (descriptor columns).
    pub ns: usize,
    /// Rings (descriptor rows).
    pub nr: usize,
    /// Maximum effective range in meters; points at or beyond are dropped.
    pub rmax: f64,
}

impl Default for SscParams {
    fn default() -> Self {
        Self {
            ns: 360,
            nr: 50,
            rmax: 50.0,
        }
    }
}

impl SscParams {
    pub fn validate(&self) -> Result<()> {
        if self.ns == 0 || self.nr == 0 {
            return Err(Error::InvalidParams(format!(
                "ns = {}, nr = {} must be >= 1",
                self.ns, self.nr
            )));
        }
        if self.ns > u32::MAX as usize || self.nr > u32::MAX as usize {
            return Err(Error::InvalidParams("descriptor dimensions exceed u32".into()));
        }
        if !(self.rmax > 0.0) || !self.rmax.is_finite() {
            return Err(Error::InvalidParams(format!("rmax = {} must be > 0", self.rmax)));
        }
        Ok(())
    }
}

/// Index `k` with `k * step <= v < (k + 1) * step` under floating-point
/// evaluation of the bounds, clamped to `[0, n)`.
fn half_open_bin(v: f64, step: f64, n: usize) -> usize {
    // saturating cast: truncation is floor for v >= 0 and negatives land on 0
    let mut k = ((v / step) as usize).min(n - 1);
    while k > 0 && v < k as f64 * step {
        k -= 1;
    }
    while k + 1 < n && v >= (k + 1) as f64 * step {
        k += 1;
    }
    k
}

/// One-based `(ring, sector)` of a polar coordinate, `None` when `r >= rmax`.
pub fn block_index(r: f64, phi: f64, params: &SscParams) -> Option<(usize, usize)> {
    if !(r >= 0.0) || r >= params.rmax {
        return None;
    }
    let i = half_open_bin(r, params.rmax / params.nr as f64, params.nr);
    let j = half_open_bin(phi + PI, 2.0 * PI / params.ns as f64, params.ns);
    Some((i + 1, j + 1))
}

/// [`half_open_bin`] with the bounds `k * step` tabulated once. The guess
/// differs but the search settles on the same index.
struct BinTable {
    inv_step: f64,
    bounds: Vec<f64>,
}

impl BinTable {
    fn new(step: f64, n: usize) -> Self {
        Self {
            inv_step: 1.0 / step,
            bounds: (0..=n).map(|k| k as f64 * step).collect(),
        }
    }

    #[inline]
    fn bin(&self, v: f64) -> usize {
        let n = self.bounds.len() - 1;
        let mut k = ((v * self.inv_step) as usize).min(n - 1);
        while k > 0 && v < self.bounds[k] {
            k -= 1;
        }
        while k + 1 < n && v >= self.bounds[k + 1] {
            k += 1;
        }
        k
    }
}

/// Flat cell index of a point. Agrees with [`block_index`] on every input.
struct Binner {
    rmax: f64,
    ns: usize,
    rings: BinTable,
    sectors: BinTable,
    /// Points with `x² + y²` above this are certainly out of range.
    r2_cut: f64,
}

impl Binner {
    fn new(params: &SscParams) -> Self {
        Self {
            rmax: params.rmax,
            ns: params.ns,
            rings: BinTable::new(params.rmax / params.nr as f64, params.nr),
            sectors: BinTable::new(2.0 * PI / params.ns as f64, params.ns),
            r2_cut: params.rmax * params.rmax * (1.0 + 1e-9),
        }
    }

    #[inline]
    fn cell(&self, x: f64, y: f64) -> Option<usize> {
        if x * x + y * y > self.r2_cut {
            return None;
        }
        let (r, phi) = to_polar(x, y).ok()?;
        if r >= self.rmax {
            return None;
        }
        Some(self.rings.bin(r) * self.ns + self.sectors.bin(phi + PI))
    }
}

/// `nr × ns` grid of cell codes, row-major by ring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SscDescriptor {
    nr: usize,
    ns: usize,
    cells: Vec<u8>,
}

impl SscDescriptor {
    pub fn zeros(nr: usize, ns: usize) -> Self {
        Self {
            nr,
            ns,
            cells: vec![0; nr * ns],
        }
    }

    pub fn from_cells(nr: usize, ns: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != nr * ns {
            return Err(Error::Shape(format!(
                "{} cells for a {nr}x{ns} descriptor",
                cells.len()
            )));
        }
        Ok(Self { nr, ns, cells })
    }

    pub fn rings(&self) -> usize {
        self.nr
    }

    pub fn sectors(&self) -> usize {
        self.ns
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    /// Code at one-based `(ring, sector)`.
    pub fn get(&self, ring: usize, sector: usize) -> u8 {
        self.cells[(ring - 1) * self.ns + (sector - 1)]
    }

    pub fn set(&mut self, ring: usize, sector: usize, code: u8) {
        self.cells[(ring - 1) * self.ns + (sector - 1)] = code;
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    pub fn occupancy_ratio(&self) -> f64 {
        if self.cells.is_empty() {
            0.0
        } else {
            self.occupied() as f64 / self.cells.len() as f64
        }
    }

    /// Non-empty cell count per class code.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &c in &self.cells {
            if c != 0 && (c as usize) < NUM_CLASSES {
                counts[c as usize] += 1;
            }
        }
        counts
    }

    /// Header `(ns, nr)` as little-endian `u32`, then `nr * ns` code bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.cells.len());
        out.extend_from_slice(&(self.ns as u32).to_le_bytes());
        out.extend_from_slice(&(self.nr as u32).to_le_bytes());
        out.extend_from_slice(&self.cells);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Shape(format!("descriptor of {} bytes has no header", bytes.len())));
        }
        let ns = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let nr = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        Self::from_cells(nr, ns, bytes[8..].to_vec())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// One line per ring, comma-separated codes.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 3);
        for row in self.cells.chunks(self.ns.max(1)) {
            for (j, c) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut cells = Vec::new();
        let mut ns = None;
        let mut nr = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: Vec<u8> = line
                .split(',')
                .map(|t| t.trim().parse::<u8>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Shape(format!("ring {}: {e}", nr + 1)))?;
            if *ns.get_or_insert(row.len()) != row.len() {
                return Err(Error::Shape(format!("ring {} has {} sectors", nr + 1, row.len())));
            }
            cells.extend(row);
            nr += 1;
        }
        Self::from_cells(nr, ns.unwrap_or(0), cells)
    }
}

/// Encodes a labeled scan: each block keeps its highest-priority class.
/// Unlabeled points and points beyond `rmax` are ignored.
pub fn encode(cloud: &LabeledCloud, params: &SscParams, priority: &PriorityTable) -> SscDescriptor {
    let mut desc = SscDescriptor::zeros(params.nr, params.ns);
    let binner = Binner::new(params);
    let ranks: [u8; NUM_CLASSES] = std::array::from_fn(|c| priority.rank(SemanticClass::ALL[c]));
    for p in cloud.iter() {
        if p.label == SemanticClass::Unlabeled {
            continue;
        }
        let Some(idx) = binner.cell(p.x, p.y) else {
            continue;
        };
        let cell = &mut desc.cells[idx];
        // rank(unlabeled) = 0, so an empty cell always loses
        let code = p.label.code();
        if ranks[code as usize] > ranks[*cell as usize] {
            *cell = code;
        }
    }
    desc
}

pub const HEIGHT_MIN: f64 = -4.0;
pub const HEIGHT_MAX: f64 = 12.0;
pub const HEIGHT_BINS: usize = 20;

/// Height bin code in `1..=HEIGHT_BINS` for `z` clamped to the height range.
pub fn height_code(z: f64) -> u8 {
    let t = (z.clamp(HEIGHT_MIN, HEIGHT_MAX) - HEIGHT_MIN) / (HEIGHT_MAX - HEIGHT_MIN);
    let bin = ((t * HEIGHT_BINS as f64).floor() as usize).min(HEIGHT_BINS - 1);
    bin as u8 + 1
}

/// Height variant of the descriptor: each block holds the quantized maximum
/// `z` of all its points regardless of label.
pub fn encode_height(cloud: &LabeledCloud, params: &SscParams) -> SscDescriptor {
    let mut max_z = vec![f64::NEG_INFINITY; params.nr * params.ns];
    let binner = Binner::new(params);
    for p in cloud.iter() {
        if let Some(idx) = binner.cell(p.x, p.y) {
            max_z[idx] = max_z[idx].max(p.z);
        }
    }
    let cells = max_z
        .into_iter()
        .map(|z| if z == f64::NEG_INFINITY { 0 } else { height_code(z) })
        .collect();
    SscDescriptor {
        nr: params.nr,
        ns: params.ns,
        cells,
    }
}

fn check_dims(s1: &SscDescriptor, s2: &SscDescriptor) -> Result<()> {
    if s1.nr != s2.nr || s1.ns != s2.ns {
        return Err(Error::Shape(format!(
            "descriptors are {}x{} and {}x{}",
            s1.nr, s1.ns, s2.nr, s2.ns
        )));
    }
    Ok(())
}

/// Matching and jointly occupied cell counts with `s2`'s columns shifted:
/// cell `(i, j)` of `s1` is compared with `(i, j + col_shift mod ns)` of `s2`.
pub fn similarity_counts_shifted(
    s1: &SscDescriptor,
    s2: &SscDescriptor,
    col_shift: usize,
) -> Result<(usize, usize)> {
    check_dims(s1, s2)?;
    let ns = s1.ns;
    let mut matched = 0;
    let mut occupied = 0;
    if ns == 0 {
        return Ok((0, 0));
    }
    let c = col_shift % ns;
    for (r1, r2) in s1.cells.chunks(ns).zip(s2.cells.chunks(ns)) {
        for (j, &a) in r1.iter().enumerate() {
            let jj = j + c;
            let b = r2[if jj >= ns { jj - ns } else { jj }];
            if a != 0 || b != 0 {
                occupied += 1;
                matched += (a == b) as usize;
            }
        }
    }
    Ok((matched, occupied))
}

fn ratio(matched: usize, occupied: usize) -> f64 {
    if occupied == 0 {
        log::debug!("similarity of two empty descriptors scored 0");
        0.0
    } else {
        matched as f64 / occupied as f64
    }
}

/// Fraction of blocks occupied in either descriptor whose codes are equal.
/// Both-empty blocks count in neither the numerator nor the denominator.
pub fn similarity(s1: &SscDescriptor, s2: &SscDescriptor) -> Result<f64> {
    let (m, o) = similarity_counts_shifted(s1, s2, 0)?;
    Ok(ratio(m, o))
}

pub fn similarity_shifted(s1: &SscDescriptor, s2: &SscDescriptor, col_shift: usize) -> Result<f64> {
    let (m, o) = similarity_counts_shifted(s1, s2, col_shift)?;
    Ok(ratio(m, o))
}

/// Best score over all column shifts, `(shift, score)`; ties go to the
/// smallest shift.
pub fn max_shift_similarity(s1: &SscDescriptor, s2: &SscDescriptor) -> Result<(usize, f64)> {
    check_dims(s1, s2)?;
    let mut best = (0, f64::NEG_INFINITY);
    for c in 0..s1.ns.max(1) {
        let s = similarity_shifted(s1, s2, c)?;
        if s > best.1 {
            best = (c, s);
        }
    }
    Ok(best)
}
