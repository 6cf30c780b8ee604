//! Dense binary occupancy grids over `[-1, 1]^n`, sampled at cell centers.

use std::fmt;
use std::io::{self, BufRead, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use crate::ast::Dim;

/// Packed bit vector (little-endian within `u64` words).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    words: Vec<u64>,
    len: usize,
}

impl BitVec {
    pub fn zeros(len: usize) -> BitVec {
        BitVec {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn ones(len: usize) -> BitVec {
        let mut b = BitVec {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        b.clear_tail();
        b
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> BitVec {
        let mut b = BitVec::zeros(len);
        for i in 0..len {
            if f(i) {
                b.set(i, true);
            }
        }
        b
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        let w = &mut self.words[i >> 6];
        if v {
            *w |= 1 << (i & 63);
        } else {
            *w &= !(1 << (i & 63));
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn any(&self) -> bool {
        self.words.iter().any(|&w| w != 0)
    }

    fn zip(&self, other: &BitVec, f: impl Fn(u64, u64) -> u64) -> BitVec {
        assert_eq!(self.len, other.len, "bit length mismatch");
        let mut out = BitVec {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            len: self.len,
        };
        out.clear_tail();
        out
    }

    pub fn and(&self, other: &BitVec) -> BitVec {
        self.zip(other, |a, b| a & b)
    }

    pub fn or(&self, other: &BitVec) -> BitVec {
        self.zip(other, |a, b| a | b)
    }

    pub fn and_not(&self, other: &BitVec) -> BitVec {
        self.zip(other, |a, b| a & !b)
    }

    pub fn not(&self) -> BitVec {
        let mut out = BitVec {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        out.clear_tail();
        out
    }

    pub fn hamming(&self, other: &BitVec) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Hamming distance, stopping early once it reaches `bound`.
    pub fn hamming_bounded(&self, other: &BitVec, bound: usize) -> usize {
        let mut d = 0;
        for (a, b) in self.words.iter().zip(&other.words) {
            d += (a ^ b).count_ones() as usize;
            if d >= bound {
                return d;
            }
        }
        d
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }

    /// Bits packed into bytes, bit `i` at byte `i / 8`, position `i % 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        bytes.truncate(self.len.div_ceil(8));
        bytes
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Option<BitVec> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= u64::from(b) << (8 * (i % 8));
        }
        let mut out = BitVec { words, len };
        let before = out.words.clone();
        out.clear_tail();
        (out.words == before).then_some(out)
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec(len={}, ones={})", self.len, self.count_ones())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("grids differ in shape: {0:?} vs {1:?}")]
    ShapeMismatch(Shape, Shape),
    #[error("malformed grid file: {0}")]
    Format(String),
}

/// Dimension plus per-axis resolution. In 2D the third axis has size 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub dim: Dim,
    pub res: [usize; 3],
}

impl Shape {
    pub fn cubic(dim: Dim, res: usize) -> Shape {
        let res = match dim {
            Dim::Two => [res, res, 1],
            Dim::Three => [res, res, res],
        };
        Shape { dim, res }
    }

    pub fn default_for(dim: Dim) -> Shape {
        Shape::cubic(dim, dim.default_resolution())
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major linear index; the last axis varies fastest.
    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.res[1] + ijk[1]) * self.res[2] + ijk[2]
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.res[2];
        let rest = idx / self.res[2];
        [rest / self.res[1], rest % self.res[1], k]
    }

    /// Domain coordinate of the center of cell `i` along an axis of `res` cells.
    #[inline]
    pub fn cell_center(i: usize, res: usize) -> f64 {
        (i as f64 + 0.5) / res as f64 * 2.0 - 1.0
    }

    /// Cell containing coordinate `x`, or `None` outside `[-1, 1)`.
    #[inline]
    pub fn cell_of(x: f64, res: usize) -> Option<usize> {
        let f = (x + 1.0) * 0.5 * res as f64;
        if f >= 0.0 && f < res as f64 {
            Some(f as usize)
        } else {
            None
        }
    }

    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut p = [0.0; 3];
        for a in 0..self.dim.axes() {
            p[a] = Shape::cell_center(c[a], self.res[a]);
        }
        p
    }

    /// All cell centers in linear-index order.
    pub fn centers(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct OccupancyGrid {
    shape: Shape,
    bits: BitVec,
}

impl fmt::Debug for OccupancyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "OccupancyGrid({}D {:?}, occupied={})",
            self.shape.dim,
            &self.shape.res[..self.shape.dim.axes()],
            self.count()
        )
    }
}

/// Inclusive cell-index bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CellBox {
    pub fn extent(&self) -> [usize; 3] {
        [
            self.hi[0] - self.lo[0] + 1,
            self.hi[1] - self.lo[1] + 1,
            self.hi[2] - self.lo[2] + 1,
        ]
    }

    /// Continuous frame (center, half-extent) of the box's outer cell edges.
    pub fn frame(&self, shape: &Shape) -> Frame {
        let mut center = [0.0; 3];
        let mut half = [1.0; 3];
        for a in 0..shape.dim.axes() {
            let r = shape.res[a] as f64;
            let lo = self.lo[a] as f64 / r * 2.0 - 1.0;
            let hi = (self.hi[a] + 1) as f64 / r * 2.0 - 1.0;
            center[a] = 0.5 * (lo + hi);
            half[a] = 0.5 * (hi - lo);
        }
        Frame { center, half }
    }
}

/// Axis-aligned box in domain coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub center: [f64; 3],
    pub half: [f64; 3],
}

impl Frame {
    pub const UNIT: Frame = Frame {
        center: [0.0; 3],
        half: [1.0; 3],
    };
}

impl OccupancyGrid {
    pub fn empty(shape: Shape) -> OccupancyGrid {
        OccupancyGrid {
            shape,
            bits: BitVec::zeros(shape.len()),
        }
    }

    pub fn full(shape: Shape) -> OccupancyGrid {
        OccupancyGrid {
            shape,
            bits: BitVec::ones(shape.len()),
        }
    }

    pub fn from_bits(shape: Shape, bits: BitVec) -> OccupancyGrid {
        assert_eq!(shape.len(), bits.len(), "bit count must match the grid");
        OccupancyGrid { shape, bits }
    }

    pub fn from_fn(shape: Shape, f: impl FnMut(usize) -> bool) -> OccupancyGrid {
        OccupancyGrid {
            shape,
            bits: BitVec::from_fn(shape.len(), f),
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> Dim {
        self.shape.dim
    }

    pub fn bits(&self) -> &BitVec {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.any()
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.bits.get(idx)
    }

    pub fn at(&self, ijk: [usize; 3]) -> bool {
        self.bits.get(self.shape.index(ijk))
    }

    pub fn set(&mut self, idx: usize, v: bool) {
        self.bits.set(idx, v);
    }

    pub fn check_same(&self, other: &OccupancyGrid) -> Result<(), GridError> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(GridError::ShapeMismatch(self.shape, other.shape))
        }
    }

    pub fn union(&self, o: &OccupancyGrid) -> OccupancyGrid {
        OccupancyGrid::from_bits(self.shape, self.bits.or(&o.bits))
    }

    pub fn intersect(&self, o: &OccupancyGrid) -> OccupancyGrid {
        OccupancyGrid::from_bits(self.shape, self.bits.and(&o.bits))
    }

    pub fn subtract(&self, o: &OccupancyGrid) -> OccupancyGrid {
        OccupancyGrid::from_bits(self.shape, self.bits.and_not(&o.bits))
    }

    pub fn complement(&self) -> OccupancyGrid {
        OccupancyGrid::from_bits(self.shape, self.bits.not())
    }

    pub fn hamming(&self, o: &OccupancyGrid) -> usize {
        self.bits.hamming(&o.bits)
    }

    /// Bounding box of occupied cells, `None` when empty.
    pub fn bbox(&self) -> Option<CellBox> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for idx in self.bits.iter_ones() {
            any = true;
            let c = self.shape.coords(idx);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        any.then_some(CellBox { lo, hi })
    }

    /// Occupied cells with at least one empty face neighbor; cells on the
    /// domain edge count as bordering empty space.
    pub fn boundary_cells(&self) -> Vec<[usize; 3]> {
        let s = &self.shape;
        let axes = s.dim.axes();
        let mut out = Vec::new();
        for idx in self.bits.iter_ones() {
            let c = s.coords(idx);
            let mut boundary = false;
            'axes: for a in 0..axes {
                for delta in [-1i64, 1] {
                    let n = c[a] as i64 + delta;
                    if n < 0 || n >= s.res[a] as i64 {
                        boundary = true;
                        break 'axes;
                    }
                    let mut nc = c;
                    nc[a] = n as usize;
                    if !self.bits.get(s.index(nc)) {
                        boundary = true;
                        break 'axes;
                    }
                }
            }
            if boundary {
                out.push(c);
            }
        }
        out
    }

    /// `OCC <dim> <res...>` header line followed by base64 of the packed bits.
    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        let axes = self.shape.dim.axes();
        let res: Vec<String> = self.shape.res[..axes].iter().map(|r| r.to_string()).collect();
        writeln!(w, "OCC {} {}", axes, res.join(" "))?;
        writeln!(w, "{}", B64.encode(self.bits.to_bytes()))
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("grid text is ASCII")
    }

    pub fn read_from(r: impl BufRead) -> Result<OccupancyGrid, GridError> {
        let mut lines = r.lines();
        let bad = |m: &str| GridError::Format(m.to_string());
        let header = lines
            .next()
            .ok_or_else(|| bad("missing header"))?
            .map_err(|e| GridError::Format(e.to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.first() != Some(&"OCC") || fields.len() < 2 {
            return Err(bad("header must start with `OCC <dim>`"));
        }
        let axes: usize = fields[1].parse().map_err(|_| bad("bad dimension"))?;
        let dim = Dim::from_axes(axes).ok_or_else(|| bad("dimension must be 2 or 3"))?;
        if fields.len() != 2 + axes {
            return Err(bad("wrong number of resolutions"));
        }
        let mut res = [1usize; 3];
        for a in 0..axes {
            res[a] = fields[2 + a].parse().map_err(|_| bad("bad resolution"))?;
            if res[a] == 0 {
                return Err(bad("zero resolution"));
            }
        }
        let shape = Shape { dim, res };
        let body = lines
            .next()
            .ok_or_else(|| bad("missing payload"))?
            .map_err(|e| GridError::Format(e.to_string()))?;
        let bytes = B64
            .decode(body.trim())
            .map_err(|e| GridError::Format(e.to_string()))?;
        let bits = BitVec::from_bytes(&bytes, shape.len()).ok_or_else(|| bad("payload size mismatch"))?;
        Ok(OccupancyGrid { shape, bits })
    }

    pub fn from_text(text: &str) -> Result<OccupancyGrid, GridError> {
        OccupancyGrid::read_from(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cell_centers_and_lookup() {
        assert!((Shape::cell_center(0, 64) - (-1.0 + 1.0 / 64.0)).abs() < 1e-15);
        assert!((Shape::cell_center(63, 64) - (1.0 - 1.0 / 64.0)).abs() < 1e-15);
        assert_eq!(Shape::cell_of(Shape::cell_center(17, 32), 32), Some(17));
        assert_eq!(Shape::cell_of(1.0, 32), None);
        assert_eq!(Shape::cell_of(-1.0001, 32), None);
    }

    #[test]
    fn index_round_trip() {
        let s = Shape::cubic(Dim::Three, 5);
        for i in 0..s.len() {
            assert_eq!(s.index(s.coords(i)), i);
        }
        let s2 = Shape::cubic(Dim::Two, 7);
        assert_eq!(s2.len(), 49);
        assert_eq!(s2.coords(8), [1, 1, 0]);
    }

    #[test]
    fn set_algebra() {
        let s = Shape::cubic(Dim::Two, 10);
        let a = OccupancyGrid::from_fn(s, |i| i % 2 == 0);
        let b = OccupancyGrid::from_fn(s, |i| i % 3 == 0);
        let u = a.union(&b);
        let n = a.intersect(&b);
        assert_eq!(u.count() + n.count(), a.count() + b.count());
        assert_eq!(a.subtract(&b).count(), a.count() - n.count());
        assert_eq!(a.complement().count(), 100 - a.count());
        assert_eq!(OccupancyGrid::full(s).count(), 100);
    }

    #[test]
    fn bbox_and_boundary() {
        let s = Shape::cubic(Dim::Two, 8);
        let g = OccupancyGrid::from_fn(s, |i| {
            let c = s.coords(i);
            (2..=4).contains(&c[0]) && (3..=5).contains(&c[1])
        });
        let bb = g.bbox().unwrap();
        assert_eq!(bb.lo, [2, 3, 0]);
        assert_eq!(bb.hi, [4, 5, 0]);
        // 3x3 block: only the center cell is interior
        assert_eq!(g.boundary_cells().len(), 8);
        assert!(OccupancyGrid::empty(s).bbox().is_none());
        let f = bb.frame(&s);
        assert!((f.half[0] - 3.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(OccupancyGrid::from_text("OCC 4 3 3\nAA==\n").is_err());
        assert!(OccupancyGrid::from_text("GRID 2 3 3\nAA==\n").is_err());
        assert!(OccupancyGrid::from_text("OCC 2 3 3\nAA==\n").is_err());
    }

    proptest! {
        #[test]
        fn file_format_round_trips(
            dim3 in any::<bool>(),
            res in 1usize..9,
            seed in any::<u64>(),
        ) {
            let dim = if dim3 { Dim::Three } else { Dim::Two };
            let s = Shape::cubic(dim, res);
            let g = OccupancyGrid::from_fn(s, |i| (seed.rotate_left(i as u32 % 64) ^ i as u64) & 1 == 1);
            let text = g.to_text();
            let header = format!("OCC {}", dim.axes());
            prop_assert!(text.starts_with(&header));
            prop_assert_eq!(OccupancyGrid::from_text(&text).unwrap(), g);
        }
    }
}
