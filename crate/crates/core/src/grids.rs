//! Time partitions, spatial grids, and the two-time triangular fields the
//! solvers march on. Both time axes of a triangular field share one grid so
//! the diagonal is exactly representable.

use std::io::{Read, Write};

use num_traits::NumCast;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered time points `t₀ < t₁ < … < t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    points: Vec<T>,
}

/// How `build_partition` spaces its points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionKind<T> {
    Uniform,
    /// Consecutive gaps grow by the given ratio.
    Geometric { ratio: T },
}

pub fn build_partition<T: Scalar>(
    start: T,
    end: T,
    intervals: usize,
    kind: PartitionKind<T>,
) -> Result<Partition<T>> {
    if !(start < end) {
        return Err(Error::domain(format!(
            "partition needs start < end, got [{start}, {end}]"
        )));
    }
    if intervals == 0 {
        return Err(Error::domain("partition needs at least one interval"));
    }
    let span = end - start;
    let mut points = Vec::with_capacity(intervals + 1);
    match kind {
        PartitionKind::Uniform => {
            let dt = span / T::of_usize(intervals);
            points.push(start);
            for i in 1..intervals {
                points.push(start + dt * T::of_usize(i));
            }
            points.push(end);
        }
        PartitionKind::Geometric { ratio } => {
            if !(ratio > T::zero()) {
                return Err(Error::domain("geometric ratio must be positive"));
            }
            // first gap g with g·(1 + ρ + … + ρ^{N−1}) = span
            let mut total = T::zero();
            let mut pw = T::one();
            for _ in 0..intervals {
                total += pw;
                pw *= ratio;
            }
            let first = span / total;
            points.push(start);
            let mut acc = T::zero();
            let mut gap = first;
            for _ in 1..intervals {
                acc += gap;
                points.push(start + acc);
                gap *= ratio;
            }
            points.push(end);
        }
    }
    Partition::new(points)
}

impl<T: Scalar> Partition<T> {
    pub fn new(points: Vec<T>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::domain("partition needs at least two points"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("partition points must be strictly increasing"));
        }
        Ok(Partition { points })
    }

    pub fn uniform(start: T, end: T, intervals: usize) -> Result<Self> {
        build_partition(start, end, intervals, PartitionKind::Uniform)
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    #[inline]
    pub fn point(&self, i: usize) -> T {
        self.points[i]
    }

    pub fn start(&self) -> T {
        self.points[0]
    }

    pub fn end(&self) -> T {
        *self.points.last().unwrap()
    }

    /// Number of intervals (one less than the number of points).
    pub fn num_intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    /// Largest gap between consecutive points.
    pub fn mesh(&self) -> T {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::zero(), T::max)
    }

    fn check_inside(&self, t: T) -> Result<()> {
        if t < self.start() || t > self.end() {
            return Err(Error::domain(format!(
                "time {t} outside the partition range [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        Ok(())
    }

    /// Index `k` with `t ∈ [t_k, t_{k+1})`, and `N−1` on the closed last
    /// interval.
    pub fn floor_index(&self, t: T) -> Result<usize> {
        self.check_inside(t)?;
        let n = self.num_intervals();
        let mut lo = 0usize;
        let mut hi = n; // points index of upper bound
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.points[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo.min(n - 1))
    }

    /// `π(t)`: the partition point at or left of `t` (half-open convention).
    pub fn floor_of(&self, t: T) -> Result<T> {
        Ok(self.points[self.floor_index(t)?])
    }

    /// `π̃(t)`: the first point on `[t₀, t₁]`, and the right endpoint of the
    /// half-open-from-the-left interval `(t_k, t_{k+1}]` otherwise.
    pub fn ceil_of(&self, t: T) -> Result<T> {
        self.check_inside(t)?;
        if t <= self.points[1] {
            return Ok(self.points[1]);
        }
        let k = self.floor_index(t)?;
        if self.points[k] == t {
            Ok(self.points[k])
        } else {
            Ok(self.points[k + 1])
        }
    }

    /// Exact index of a time that must be a partition point.
    pub fn index_of(&self, t: T) -> Result<usize> {
        let k = self.floor_index(t)?;
        for cand in [k, k + 1] {
            if cand < self.points.len() {
                let p = self.points[cand];
                if (p - t).abs() <= T::c(1e-12) * (T::one() + t.abs()) {
                    return Ok(cand);
                }
            }
        }
        Err(Error::grid_mismatch(format!(
            "time {t} is not a grid point of the partition"
        )))
    }

    /// The sub-partition spanned by point indices `i0..=i1`.
    pub fn window(&self, i0: usize, i1: usize) -> Result<Partition<T>> {
        if i0 >= i1 || i1 >= self.points.len() {
            return Err(Error::domain("invalid partition window"));
        }
        Partition::new(self.points[i0..=i1].to_vec())
    }
}

/// Uniform one-dimensional spatial grid with truncation bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid<T> {
    pub dim: usize,
    lo: T,
    hi: T,
    count: usize,
    dx: T,
}

impl<T: Scalar> SpatialGrid<T> {
    pub fn uniform(lo: T, hi: T, count: usize) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::domain("spatial grid needs lo < hi"));
        }
        if count < 3 {
            return Err(Error::domain("spatial grid needs at least 3 nodes"));
        }
        let dx = (hi - lo) / T::of_usize(count - 1);
        Ok(SpatialGrid {
            dim: 1,
            lo,
            hi,
            count,
            dx,
        })
    }

    #[inline]
    pub fn node(&self, k: usize) -> T {
        if k + 1 == self.count {
            self.hi
        } else {
            self.lo + self.dx * T::of_usize(k)
        }
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn nearest_index(&self, x: T) -> usize {
        if x <= self.lo {
            return 0;
        }
        if x >= self.hi {
            return self.count - 1;
        }
        let raw = ((x - self.lo) / self.dx).round();
        raw.to_usize().unwrap_or(0).min(self.count - 1)
    }

    /// Linear interpolation weights `(k, w)` so a field value at `x` is
    /// `(1−w)·f[k] + w·f[k+1]`. Outside the bounds the first/last cell is
    /// extrapolated linearly, matching the zero-curvature boundary closure.
    pub fn interp_cell(&self, x: T) -> (usize, T) {
        let pos = (x - self.lo) / self.dx;
        let cell = pos.floor();
        let max_cell = T::of_usize(self.count - 2);
        let cell = cell.max(T::zero()).min(max_cell);
        let k = cell.to_usize().unwrap_or(0);
        (k, pos - cell)
    }
}

/// First and second difference of a field slice at node `k`: second-order
/// central stencils inside, one-sided first derivative and zero curvature at
/// the truncation boundary.
pub fn spatial_derivatives<T: Scalar>(values: &[T], k: usize, dx: T) -> Result<(T, T)> {
    let n = values.len();
    if n < 3 {
        return Err(Error::domain("derivative stencils need at least 3 nodes"));
    }
    if k >= n {
        return Err(Error::domain("stencil node out of range"));
    }
    let two_dx = T::two() * dx;
    if k == 0 {
        Ok(((values[1] - values[0]) / dx, T::zero()))
    } else if k + 1 == n {
        Ok(((values[n - 1] - values[n - 2]) / dx, T::zero()))
    } else {
        let first = (values[k + 1] - values[k - 1]) / two_dx;
        let second = (values[k + 1] - T::two() * values[k] + values[k - 1]) / (dx * dx);
        Ok((first, second))
    }
}

/// A scalar function of (time, space) stored layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    pub time: Partition<T>,
    pub space: SpatialGrid<T>,
    values: Vec<T>,
}

impl<T: Scalar> ScalarField<T> {
    pub fn zeros(time: Partition<T>, space: SpatialGrid<T>) -> Self {
        let len = time.num_points() * space.len();
        ScalarField {
            time,
            space,
            values: vec![T::zero(); len],
        }
    }

    pub fn from_fn(time: Partition<T>, space: SpatialGrid<T>, f: impl Fn(T, T) -> T) -> Self {
        let mut out = ScalarField::zeros(time, space);
        for j in 0..out.time.num_points() {
            let s = out.time.point(j);
            for k in 0..out.space.len() {
                let x = out.space.node(k);
                let v = f(s, x);
                out.set(j, k, v);
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> T {
        self.values[j * self.space.len() + k]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: T) {
        self.values[j * self.space.len() + k] = v;
    }

    pub fn layer(&self, j: usize) -> &[T] {
        let nx = self.space.len();
        &self.values[j * nx..(j + 1) * nx]
    }

    pub fn layer_mut(&mut self, j: usize) -> &mut [T] {
        let nx = self.space.len();
        &mut self.values[j * nx..(j + 1) * nx]
    }

    /// Linear interpolation in space at layer `j`.
    pub fn interp(&self, j: usize, x: T) -> T {
        let (k, w) = self.space.interp_cell(x);
        (T::one() - w) * self.get(j, k) + w * self.get(j, k + 1)
    }

    pub fn max_abs_diff(&self, other: &ScalarField<T>) -> Result<T> {
        if self.time != other.time || self.space != other.space {
            return Err(Error::grid_mismatch("scalar fields on different grids"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max))
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Two-time field Θ(t, s, x) on the triangle `t ≤ s`, both axes sharing one
/// time grid. Row `i` stores the layers `s = t_i, …, T` contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaField<T> {
    pub time: Partition<T>,
    pub space: SpatialGrid<T>,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> ThetaField<T> {
    /// Field with every stored entry zero.
    pub fn zeros(time: Partition<T>, space: SpatialGrid<T>) -> Self {
        let nx = space.len();
        let m = time.num_points();
        let rows = (0..m).map(|i| vec![T::zero(); (m - i) * nx]).collect();
        ThetaField { time, space, rows }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        let m = self.time.num_points();
        assert!(
            i <= j && j < m,
            "triangular access violated: row {i}, layer {j}, grid {m}"
        );
        (j - i) * self.space.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        let off = self.offset(i, j);
        self.rows[i][off + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let off = self.offset(i, j);
        self.rows[i][off + k] = v;
    }

    /// The spatial slice of row `i` at layer `j ≥ i`.
    pub fn row_layer(&self, i: usize, j: usize) -> &[T] {
        let off = self.offset(i, j);
        &self.rows[i][off..off + self.space.len()]
    }

    pub fn row_layer_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let off = self.offset(i, j);
        let nx = self.space.len();
        &mut self.rows[i][off..off + nx]
    }

    /// Split mutable access to all rows, used by layer-parallel marches.
    pub fn rows_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.rows
    }

    /// V(s, x) = Θ(s, s, x).
    pub fn diagonal_trace(&self) -> ScalarField<T> {
        let mut out = ScalarField::zeros(self.time.clone(), self.space.clone());
        for j in 0..self.time.num_points() {
            let diag = self.row_layer(j, j).to_vec();
            out.layer_mut(j).copy_from_slice(&diag);
        }
        out
    }

    /// Largest |self − other| over the shared triangle.
    pub fn max_abs_diff(&self, other: &ThetaField<T>) -> Result<T> {
        if self.time != other.time || self.space != other.space {
            return Err(Error::grid_mismatch("theta fields on different grids"));
        }
        let mut worst = T::zero();
        for (a, b) in self.rows.iter().zip(&other.rows) {
            for (x, y) in a.iter().zip(b) {
                let d = (*x - *y).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        Ok(worst)
    }

    /// Interpolate Θ(t_i, s_j, ·) at an off-grid state.
    pub fn interp(&self, i: usize, j: usize, x: T) -> T {
        let (k, w) = self.space.interp_cell(x);
        (T::one() - w) * self.get(i, j, k) + w * self.get(i, j, k + 1)
    }

    /// Spatial derivative Θ_x(t_i, s_j, ·) at an off-grid state, from the
    /// interpolation stencil.
    pub fn interp_dx(&self, i: usize, j: usize, x: T) -> T {
        let (k, _) = self.space.interp_cell(x);
        (self.get(i, j, k + 1) - self.get(i, j, k)) / self.space.dx()
    }

    /// Flat CSV with one line per stored node.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t_index,s_index,x_index,t,s,x,theta")?;
        for i in 0..self.time.num_points() {
            for j in i..self.time.num_points() {
                let layer = self.row_layer(i, j);
                for (k, v) in layer.iter().enumerate() {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        i,
                        j,
                        k,
                        self.time.point(i),
                        self.time.point(j),
                        self.space.node(k),
                        v
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Compact binary cache: magic `THF1`, version, dims, grids, triangle.
    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(b"THF1")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&(self.time.num_points() as u32).to_le_bytes())?;
        out.write_all(&(self.space.len() as u32).to_le_bytes())?;
        for p in self.time.points() {
            let v: f64 = NumCast::from(*p).unwrap();
            out.write_all(&v.to_le_bytes())?;
        }
        for idx in [self.space.lo(), self.space.hi()] {
            let v: f64 = NumCast::from(idx).unwrap();
            out.write_all(&v.to_le_bytes())?;
        }
        for row in &self.rows {
            for v in row {
                let v: f64 = NumCast::from(*v).unwrap();
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

impl ThetaField<f64> {
    pub fn read_binary<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"THF1" {
            return Err(Error::domain("bad magic in theta cache"));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != 1 {
            return Err(Error::domain(format!("unsupported cache version {version}")));
        }
        input.read_exact(&mut word)?;
        let m = u32::from_le_bytes(word) as usize;
        input.read_exact(&mut word)?;
        let nx = u32::from_le_bytes(word) as usize;
        let mut f = [0u8; 8];
        let mut points = Vec::with_capacity(m);
        for _ in 0..m {
            input.read_exact(&mut f)?;
            points.push(f64::from_le_bytes(f));
        }
        input.read_exact(&mut f)?;
        let lo = f64::from_le_bytes(f);
        input.read_exact(&mut f)?;
        let hi = f64::from_le_bytes(f);
        let time = Partition::new(points)?;
        let space = SpatialGrid::uniform(lo, hi, nx)?;
        let mut field = ThetaField::zeros(time, space);
        for i in 0..m {
            for j in i..m {
                for k in 0..nx {
                    input.read_exact(&mut f)?;
                    field.set(i, j, k, f64::from_le_bytes(f));
                }
            }
        }
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_partitions_match_hand_values() {
        let p = build_partition(0.0, 1.0, 1, PartitionKind::Uniform).unwrap();
        assert_eq!(p.points(), &[0.0, 1.0]);
        assert_eq!(p.mesh(), 1.0);

        let p = build_partition(0.0, 1.0, 4, PartitionKind::Uniform).unwrap();
        assert_eq!(p.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(p.mesh(), 0.25);
    }

    #[test]
    fn geometric_partition_normalizes_the_gap_sum() {
        let p: Partition<f64> =
            build_partition(0.0, 1.0, 2, PartitionKind::Geometric { ratio: 2.0 }).unwrap();
        assert!((p.point(1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.mesh() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_range_is_a_domain_error() {
        assert!(build_partition(1.0, 1.0, 2, PartitionKind::<f64>::Uniform).is_err());
        assert!(build_partition(2.0, 1.0, 2, PartitionKind::<f64>::Uniform).is_err());
    }

    #[test]
    fn floor_and_ceil_follow_the_half_open_conventions() {
        let p = Partition::new(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(p.floor_of(0.7).unwrap(), 0.5);
        assert_eq!(p.ceil_of(0.7).unwrap(), 1.0);
        // interior grid point: both projections return the point itself
        assert_eq!(p.floor_of(0.5).unwrap(), 0.5);
        assert_eq!(p.ceil_of(0.5).unwrap(), 0.5);
        // last interval is closed for the floor; the end maps to itself
        assert_eq!(p.floor_of(1.0).unwrap(), 0.5);
        assert_eq!(p.ceil_of(1.0).unwrap(), 1.0);
        // left edge of the first interval
        assert_eq!(p.floor_of(0.0).unwrap(), 0.0);
        assert_eq!(p.ceil_of(0.0).unwrap(), 0.5);
        assert!(p.floor_of(-0.1).is_err());
        assert!(p.ceil_of(1.1).is_err());
    }

    proptest! {
        #[test]
        fn floor_below_ceil_everywhere(t in 0.0f64..=1.0) {
            let p = Partition::new(vec![0.0, 0.21, 0.5, 0.77, 1.0]).unwrap();
            let lo = p.floor_of(t).unwrap();
            let hi = p.ceil_of(t).unwrap();
            prop_assert!(lo <= t || (t == 1.0 && lo == 0.77));
            prop_assert!(hi >= t);
            if lo == hi {
                // only at interior partition points
                prop_assert!(p.points().contains(&t));
            }
        }
    }

    #[test]
    fn diagonal_trace_reads_the_diagonal() {
        let time = Partition::new(vec![0.0, 0.5, 1.0]).unwrap();
        let space = SpatialGrid::uniform(-1.0, 1.0, 3).unwrap();
        let mut theta = ThetaField::zeros(time.clone(), space.clone());
        // constant everywhere
        for i in 0..3 {
            for j in i..3 {
                for k in 0..3 {
                    theta.set(i, j, k, 4.25);
                }
            }
        }
        let v = theta.diagonal_trace();
        assert!(v.values().iter().all(|&x| x == 4.25));

        // Θ[i][j][k] = t_i: the trace at layer j equals t_j
        for i in 0..3 {
            for j in i..3 {
                for k in 0..3 {
                    theta.set(i, j, k, time.point(i));
                }
            }
        }
        let v = theta.diagonal_trace();
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(v.get(j, k), time.point(j));
            }
        }
    }

    #[test]
    #[should_panic(expected = "triangular access violated")]
    fn reading_below_the_diagonal_panics() {
        let time = Partition::new(vec![0.0, 0.5, 1.0]).unwrap();
        let space = SpatialGrid::uniform(-1.0, 1.0, 3).unwrap();
        let theta = ThetaField::<f64>::zeros(time, space);
        let _ = theta.get(2, 1, 0);
    }

    #[test]
    fn stencils_are_exact_for_low_degree_fields() {
        let dx = 0.1f64;
        let constant = [3.0, 3.0, 3.0, 3.0, 3.0];
        assert_eq!(spatial_derivatives(&constant, 2, dx).unwrap(), (0.0, 0.0));

        let linear: Vec<f64> = (0..5).map(|k| -0.2 + dx * k as f64).collect();
        let (d1, d2) = spatial_derivatives(&linear, 2, dx).unwrap();
        assert!((d1 - 1.0).abs() < 1e-12);
        assert!(d2.abs() < 1e-10);

        // x² sampled around x = 0: central differences are exact
        let quad: Vec<f64> = (-2..=2).map(|k| (dx * k as f64).powi(2)).collect();
        let (d1, d2) = spatial_derivatives(&quad, 2, dx).unwrap();
        assert!(d1.abs() < 1e-14);
        assert!((d2 - 2.0).abs() < 1e-10);
    }

    #[test]
    fn boundary_stencils_are_one_sided_with_zero_curvature() {
        let dx = 0.5f64;
        let field = [1.0, 2.0, 4.0];
        let (d1, d2) = spatial_derivatives(&field, 0, dx).unwrap();
        assert_eq!((d1, d2), (2.0, 0.0));
        let (d1, d2) = spatial_derivatives(&field, 2, dx).unwrap();
        assert_eq!((d1, d2), (4.0, 0.0));
        assert!(spatial_derivatives(&[1.0f64, 2.0], 0, dx).is_err());
    }

    #[test]
    fn csv_layout_has_the_documented_header_and_triangle() {
        let time = Partition::new(vec![0.0, 1.0]).unwrap();
        let space = SpatialGrid::uniform(0.0, 1.0, 3).unwrap();
        let mut theta = ThetaField::zeros(time, space);
        theta.set(0, 1, 2, 7.5);
        let mut buf = Vec::new();
        theta.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t_index,s_index,x_index,t,s,x,theta");
        // rows: (0,0), (0,1), (1,1) with 3 nodes each
        assert_eq!(text.lines().count(), 1 + 3 * 3);
        assert!(text.lines().any(|l| l == "0,1,2,0,1,1,7.5"));
    }

    proptest! {
        #[test]
        fn binary_cache_round_trips(seed in 0u64..1000) {
            let time = Partition::new(vec![0.0, 0.4, 1.0]).unwrap();
            let space = SpatialGrid::uniform(-1.0, 1.0, 4).unwrap();
            let mut theta = ThetaField::zeros(time, space);
            let mut v = seed as f64;
            for i in 0..3 {
                for j in i..3 {
                    for k in 0..4 {
                        v = (v * 1.3 + 0.7).sin();
                        theta.set(i, j, k, v);
                    }
                }
            }
            let mut buf = Vec::new();
            theta.write_binary(&mut buf).unwrap();
            let back = ThetaField::read_binary(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back, theta);
        }
    }

    #[test]
    fn interpolation_extends_linearly_outside_the_grid() {
        let time = Partition::new(vec![0.0, 1.0]).unwrap();
        let space = SpatialGrid::uniform(0.0, 1.0, 3).unwrap();
        let f: ScalarField<f64> = ScalarField::from_fn(time, space, |_s, x| 2.0 * x + 1.0);
        assert!((f.interp(0, 0.25) - 1.5).abs() < 1e-14);
        assert!((f.interp(0, -1.0) + 1.0).abs() < 1e-14);
        assert!((f.interp(0, 2.0) - 5.0).abs() < 1e-14);
    }
}
