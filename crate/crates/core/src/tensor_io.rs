//! Design matrices, targets, lattice shapes and their on-disk formats, plus a
//! deterministic generator of smooth synthetic lattice data.
//!
//! Formats:
//!
//! - CSV matrices: comma separated, no header unless requested.
//! - Binary matrices: the 8-byte magic `GNMATRIX`, `u64` row count, `u64`
//!   column count, then `n·p` little-endian `f64` values in row-major order.
//! - Coefficient volumes: a header line `nx ny nz nt` followed by one value per
//!   line over the full grid, x fastest, with zeros at masked-out voxels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 8] = b"GNMATRIX";

/// Dense `n × p` observation matrix (rows are trials, columns are features).
///
/// Values are stored column-major so that coordinate updates read a
/// contiguous column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    /// Norms divided out of each column by [`DesignMatrix::standardize`];
    /// all ones for a matrix that was never standardized.
    column_norms: Vec<f64>,
    standardized: bool,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, p) = values.shape();
        if n == 0 || p == 0 {
            return Err(Error::Shape(format!("design matrix must be non-empty, got {n}x{p}")));
        }
        for j in 0..p {
            for i in 0..n {
                if !values[(i, j)].is_finite() {
                    return Err(Error::DataAt {
                        row: i + 1,
                        col: j + 1,
                        msg: format!("non-finite entry {}", values[(i, j)]),
                    });
                }
            }
        }
        Ok(Self {
            values,
            column_norms: vec![1.0; p],
            standardized: false,
        })
    }

    /// Build from `n·p` values in row-major order.
    pub fn from_row_major(n: usize, p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::Shape(format!(
                "expected {} values for a {n}x{p} matrix, got {}",
                n * p,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, p, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::DataAt {
                row: i + 1,
                col: r.len().min(p) + 1,
                msg: format!("expected {p} fields, found {}", r.len()),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(n, p, &flat)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Row-major copy of the values.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.values.transpose().as_slice().to_vec()
    }

    /// Scale every column to unit ℓ2 norm, recording the divided-out norms.
    pub fn standardize(&self) -> Result<Self> {
        let mut values = self.values.clone();
        let mut norms = self.column_norms.clone();
        for j in 0..self.p() {
            let mut col = values.column_mut(j);
            let norm = col.norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateColumn(j));
            }
            col /= norm;
            norms[j] *= norm;
        }
        Ok(Self {
            values,
            column_norms: norms,
            standardized: true,
        })
    }

    /// Subtract column means; returns the centered matrix and the means.
    /// Standardization metadata is reset because the columns changed.
    pub fn center(&self) -> (Self, Vec<f64>) {
        let n = self.n() as f64;
        let mut values = self.values.clone();
        let mut means = Vec::with_capacity(self.p());
        for j in 0..self.p() {
            let mut col = values.column_mut(j);
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            means.push(mean);
        }
        let p = self.p();
        (
            Self {
                values,
                column_norms: vec![1.0; p],
                standardized: false,
            },
            means,
        )
    }

    /// Map coefficients fitted on the standardized matrix back to the scale
    /// of the original columns.
    pub fn back_scale(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(&self.column_norms).map(|(b, s)| b / s).collect()
    }

    /// Select a subset of rows (duplicates allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let values = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.values[(rows[i], j)]);
        Self {
            values,
            column_norms: self.column_norms.clone(),
            standardized: false,
        }
    }

    /// `X β` for a dense coefficient vector.
    pub fn matvec(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (o, x) in out.iter_mut().zip(self.column(j)) {
                    *o += x * b;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Continuous,
    /// Labels in {−1, +1}.
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub values: Vec<f64>,
    pub kind: TargetKind,
    /// Subject/group identifiers used by grouped cross-validation.
    pub group_ids: Vec<u32>,
}

impl TargetVector {
    pub fn continuous(values: Vec<f64>, group_ids: Vec<u32>) -> Result<Self> {
        Self::check_groups(values.len(), &group_ids)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DataAt { row: i + 1, col: 1, msg: "non-finite target".into() });
        }
        Ok(Self { values, kind: TargetKind::Continuous, group_ids })
    }

    pub fn binary(values: Vec<f64>, group_ids: Vec<u32>) -> Result<Self> {
        Self::check_groups(values.len(), &group_ids)?;
        check_binary_labels(&values)?;
        Ok(Self { values, kind: TargetKind::Binary, group_ids })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_groups(n: usize, groups: &[u32]) -> Result<()> {
        if groups.len() != n {
            return Err(Error::Shape(format!(
                "{} group ids for {n} targets",
                groups.len()
            )));
        }
        Ok(())
    }
}

/// Labels must be exactly ±1 with both classes present.
pub fn check_binary_labels(labels: &[f64]) -> Result<()> {
    if let Some(i) = labels.iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Label(format!(
            "label {} at row {} is not -1 or +1",
            labels[i],
            i + 1
        )));
    }
    let pos = labels.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Label("both classes must be present".into()));
    }
    Ok(())
}

/// A 4-D voxel grid with a feature mask. Features (design-matrix columns) are
/// the masked-in voxels in x-fastest linear order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeShape {
    dims: [usize; 4],
    mask: Vec<bool>,
    feature_index: Vec<usize>,
    voxel_feature: Vec<Option<usize>>,
}

impl LatticeShape {
    pub fn full(dims: [usize; 4]) -> Result<Self> {
        let total = dims.iter().product();
        Self::with_mask(dims, vec![true; total])
    }

    pub fn with_mask(dims: [usize; 4], mask: Vec<bool>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if dims.contains(&0) {
            return Err(Error::Shape(format!("lattice dims must be positive, got {dims:?}")));
        }
        if mask.len() != total {
            return Err(Error::Shape(format!(
                "mask has {} entries for a grid of {total} voxels",
                mask.len()
            )));
        }
        let feature_index: Vec<usize> = (0..total).filter(|&v| mask[v]).collect();
        let mut voxel_feature = vec![None; total];
        for (f, &v) in feature_index.iter().enumerate() {
            voxel_feature[v] = Some(f);
        }
        Ok(Self { dims, mask, feature_index, voxel_feature })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn total_voxels(&self) -> usize {
        self.mask.len()
    }

    /// Number of features (masked-in voxels).
    pub fn p(&self) -> usize {
        self.feature_index.len()
    }

    pub fn linear_index(&self, [x, y, z, t]: [usize; 4]) -> usize {
        let [nx, ny, nz, _] = self.dims;
        x + nx * (y + ny * (z + nz * t))
    }

    pub fn coords(&self, mut v: usize) -> [usize; 4] {
        let [nx, ny, nz, _] = self.dims;
        let x = v % nx;
        v /= nx;
        let y = v % ny;
        v /= ny;
        let z = v % nz;
        [x, y, z, v / nz]
    }

    /// Voxel linear index of feature `f`.
    pub fn voxel_of(&self, f: usize) -> usize {
        self.feature_index[f]
    }

    /// Feature index of a voxel, if it is masked in.
    pub fn feature_of(&self, voxel: usize) -> Option<usize> {
        self.voxel_feature[voxel]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub beta_true: Vec<f64>,
    pub support: Vec<usize>,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Sigma(f64),
    /// Noise standard deviation set to `sd(Xβ) / snr`.
    Snr(f64),
}

/// Recipe for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    pub blobs: usize,
    /// Euclidean radius in voxels; every blob spans all time slices.
    pub radius: usize,
    pub amplitude: f64,
    pub noise: NoiseLevel,
    pub seed: u64,
    pub kind: TargetKind,
    /// Trials are split into this many contiguous groups.
    pub groups: usize,
    /// Explicit spatial blob centers; random placement when `None`.
    pub centers: Option<Vec<[usize; 3]>>,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            blobs: 2,
            radius: 1,
            amplitude: 1.0,
            noise: NoiseLevel::Sigma(1.0),
            seed: 0,
            kind: TargetKind::Continuous,
            groups: 1,
            centers: None,
        }
    }
}

/// Offsets `(dx, dy, dz, weight)` of a spatial ball of the given radius.
fn ball_offsets(radius: usize) -> Vec<([isize; 3], f64)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let d = ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                if d <= radius as f64 + 1e-12 {
                    out.push(([dx, dy, dz], 1.0 - d / (radius as f64 + 1.0)));
                }
            }
        }
    }
    out
}

fn shift(c: usize, d: isize, n: usize) -> Option<usize> {
    let v = c as isize + d;
    (v >= 0 && (v as usize) < n).then_some(v as usize)
}

/// All voxels (over every time slice) of a blob centered at `center`, or
/// `None` if any falls outside the grid or the mask.
fn blob_voxels(
    shape: &LatticeShape,
    center: [usize; 3],
    offsets: &[([isize; 3], f64)],
) -> Option<Vec<(usize, f64)>> {
    let [nx, ny, nz, nt] = shape.dims();
    let mut out = Vec::with_capacity(offsets.len() * nt);
    for &([dx, dy, dz], w) in offsets {
        let x = shift(center[0], dx, nx)?;
        let y = shift(center[1], dy, ny)?;
        let z = shift(center[2], dz, nz)?;
        for t in 0..nt {
            let f = shape.feature_of(shape.linear_index([x, y, z, t]))?;
            out.push((f, w));
        }
    }
    Some(out)
}

/// Smooth lattice data with blob-shaped true coefficients.
///
/// Each trial draws i.i.d. standard normals over the whole grid and averages
/// every voxel with its six spatial neighbours (weight 1/7 each; neighbours
/// outside the grid contribute zero). The rows of `X` are the smoothed values
/// at masked-in voxels. Targets are `Xβ + ε` or, for binary kind,
/// `sign(Xβ + ε)` with `sign(0) = +1`.
pub fn generate_synthetic(
    shape: &LatticeShape,
    truth: &TruthSpec,
    n: usize,
) -> Result<(DesignMatrix, TargetVector, SyntheticTruth)> {
    if n < 2 {
        return Err(Error::Spec(format!("need at least 2 trials, got {n}")));
    }
    if truth.groups == 0 || truth.groups > n {
        return Err(Error::Spec(format!("groups must be in 1..={n}, got {}", truth.groups)));
    }
    if shape.p() == 0 {
        return Err(Error::Spec("mask selects no voxels".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    let offsets = ball_offsets(truth.radius);
    let [nx, ny, nz, nt] = shape.dims();

    let centers: Vec<[usize; 3]> = match &truth.centers {
        Some(c) => c.clone(),
        None => {
            let mut candidates = Vec::new();
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        if blob_voxels(shape, [x, y, z], &offsets).is_some() {
                            candidates.push([x, y, z]);
                        }
                    }
                }
            }
            if candidates.is_empty() && truth.blobs > 0 {
                return Err(Error::Spec(format!(
                    "no position fits a blob of radius {} inside the mask",
                    truth.radius
                )));
            }
            let k = truth.blobs.min(candidates.len());
            let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), k).into_vec();
            while picked.len() < truth.blobs {
                picked.push(picked[picked.len() % k.max(1)]);
            }
            picked.into_iter().map(|i| candidates[i]).collect()
        }
    };

    let p = shape.p();
    let mut beta_true = vec![0.0f64; p];
    for &c in &centers {
        let voxels = blob_voxels(shape, c, &offsets).ok_or_else(|| {
            Error::Spec(format!("blob at {c:?} radius {} leaves the mask", truth.radius))
        })?;
        for (f, w) in voxels {
            let v = truth.amplitude * w;
            if v.abs() > beta_true[f].abs() {
                beta_true[f] = v;
            }
        }
    }
    let support: Vec<usize> = (0..p).filter(|&j| beta_true[j] != 0.0).collect();

    let total = shape.total_voxels();
    let mut raw = vec![0.0f64; total];
    let mut rows = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for r in raw.iter_mut() {
            *r = StandardNormal.sample(&mut rng);
        }
        for f in 0..p {
            let v = shape.voxel_of(f);
            let [x, y, z, t] = shape.coords(v);
            let mut acc = raw[v];
            for (axis, len) in [(0usize, nx), (1, ny), (2, nz)] {
                let mut c = [x, y, z];
                for d in [-1isize, 1] {
                    if let Some(s) = shift(c[axis], d, len) {
                        let keep = c[axis];
                        c[axis] = s;
                        acc += raw[shape.linear_index([c[0], c[1], c[2], t])];
                        c[axis] = keep;
                    }
                }
            }
            rows[(i, f)] = acc / 7.0;
        }
    }
    let _ = nt;
    let x = DesignMatrix::new(rows)?;
    let signal = x.matvec(&beta_true);

    let sigma = match truth.noise {
        NoiseLevel::Sigma(s) => s,
        NoiseLevel::Snr(snr) => {
            if snr <= 0.0 {
                return Err(Error::Spec(format!("snr must be positive, got {snr}")));
            }
            let mean = signal.iter().sum::<f64>() / n as f64;
            let var = signal.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
            var.sqrt() / snr
        }
    };
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Spec(format!("noise sigma must be finite and non-negative, got {sigma}")));
    }
    let mut y = signal;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Spec(e.to_string()))?;
        for v in y.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let groups: Vec<u32> = (0..n).map(|i| (i * truth.groups / n) as u32).collect();
    let target = match truth.kind {
        TargetKind::Continuous => TargetVector::continuous(y, groups)?,
        TargetKind::Binary => {
            let labels = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            TargetVector::binary(labels, groups)?
        }
    };
    Ok((
        x,
        target,
        SyntheticTruth { beta_true, support, noise_sigma: sigma, seed: truth.seed },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv { header: bool },
    Binary,
}

pub fn read_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DesignMatrix> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Csv { header } => {
            let rows = read_csv_rows(path, header)?;
            if rows.is_empty() {
                return Err(Error::Format(format!("{} contains no rows", path.display())));
            }
            DesignMatrix::from_rows(&rows)
        }
        MatrixFormat::Binary => {
            let mut buf = Vec::new();
            File::open(path)
                .and_then(|mut f| f.read_to_end(&mut buf))
                .map_err(|e| Error::io(path, e))?;
            decode_binary(&buf)
        }
    }
}

fn read_csv_rows(path: &Path, header: bool) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if let Some(first) = rows.first() {
            if record.len() != first.len() {
                return Err(Error::DataAt {
                    row,
                    col: record.len().min(first.len()) + 1,
                    msg: format!("ragged row: expected {} fields, found {}", first.len(), record.len()),
                });
            }
        }
        let mut values = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::DataAt {
                row,
                col: j + 1,
                msg: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::DataAt { row, col: j + 1, msg: format!("non-finite entry {field}") });
            }
            values.push(v);
        }
        rows.push(values);
    }
    Ok(rows)
}

/// Read a single-column CSV (or one value per line) as a vector.
pub fn read_vector(path: impl AsRef<Path>, header: bool) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let rows = read_csv_rows(path, header)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| match r.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::DataAt {
                row: i + 1,
                col: 1,
                msg: format!("expected one value per row, found {}", r.len()),
            }),
        })
        .collect()
}

/// Read integer group identifiers, one per line.
pub fn read_groups(path: impl AsRef<Path>, header: bool) -> Result<Vec<u32>> {
    read_vector(path, header)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(Error::DataAt { row: i + 1, col: 1, msg: format!("group id {v} is not a non-negative integer") })
            }
        })
        .collect()
}

pub fn write_vector(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for v in values {
        writeln!(w, "{v}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_groups(path: impl AsRef<Path>, groups: &[u32]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for g in groups {
        writeln!(w, "{g}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_binary(x: &DesignMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + 8 * x.n() * x.p());
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&(x.n() as u64).to_le_bytes());
    buf.extend_from_slice(&(x.p() as u64).to_le_bytes());
    for i in 0..x.n() {
        for j in 0..x.p() {
            buf.extend_from_slice(&x.values()[(i, j)].to_le_bytes());
        }
    }
    buf
}

pub fn decode_binary(buf: &[u8]) -> Result<DesignMatrix> {
    if buf.len() < 24 || &buf[..8] != BINARY_MAGIC {
        return Err(Error::Format("missing GNMATRIX header".into()));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")) as usize;
    let p = u64::from_le_bytes(buf[16..24].try_into().expect("8 bytes")) as usize;
    let expected = n
        .checked_mul(p)
        .and_then(|np| np.checked_mul(8))
        .and_then(|b| b.checked_add(24))
        .ok_or_else(|| Error::Format(format!("header dims {n}x{p} overflow")))?;
    if buf.len() != expected {
        return Err(Error::Format(format!(
            "header dims {n}x{p} need {expected} bytes, file has {}",
            buf.len()
        )));
    }
    let data: Vec<f64> = buf[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DesignMatrix::from_row_major(n, p, &data)
}

pub fn write_matrix(path: impl AsRef<Path>, x: &DesignMatrix, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res = match format {
        MatrixFormat::Binary => w.write_all(&encode_binary(x)),
        MatrixFormat::Csv { .. } => (0..x.n()).try_for_each(|i| {
            let line: Vec<String> = (0..x.p()).map(|j| x.values()[(i, j)].to_string()).collect();
            writeln!(w, "{}", line.join(","))
        }),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Write a p-vector as a full-grid text volume (see module docs).
pub fn write_coefficient_volume(beta: &[f64], shape: &LatticeShape, path: impl AsRef<Path>) -> Result<()> {
    if beta.len() != shape.p() {
        return Err(Error::Shape(format!(
            "coefficient vector has length {} but the mask selects {} voxels",
            beta.len(),
            shape.p()
        )));
    }
    let path = path.as_ref();
    let mut w = create(path)?;
    let [nx, ny, nz, nt] = shape.dims();
    let res = (|| {
        writeln!(w, "{nx} {ny} {nz} {nt}")?;
        for v in 0..shape.total_voxels() {
            match shape.feature_of(v) {
                Some(f) => writeln!(w, "{}", beta[f])?,
                None => writeln!(w, "0")?,
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Read a full-grid text volume: dims and all `nx·ny·nz·nt` values.
pub fn read_volume(path: impl AsRef<Path>) -> Result<([usize; 4], Vec<f64>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad volume header {header:?}"))))
        .collect::<Result<_>>()?;
    let dims: [usize; 4] = dims
        .try_into()
        .map_err(|_| Error::Format(format!("volume header needs 4 dims, got {header:?}")))?;
    let total: usize = dims.iter().product();
    let mut values = Vec::with_capacity(total);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| Error::DataAt {
            row: i + 2,
            col: 1,
            msg: format!("cannot parse {t:?}"),
        })?;
        values.push(v);
    }
    if values.len() != total {
        return Err(Error::Format(format!(
            "volume header {dims:?} needs {total} values, found {}",
            values.len()
        )));
    }
    Ok((dims, values))
}

/// Read a coefficient volume back into a p-vector over `shape`'s mask.
pub fn read_coefficient_volume(path: impl AsRef<Path>, shape: &LatticeShape) -> Result<Vec<f64>> {
    let (dims, values) = read_volume(path)?;
    if dims != shape.dims() {
        return Err(Error::Shape(format!("volume dims {dims:?} differ from lattice {:?}", shape.dims())));
    }
    Ok((0..shape.p()).map(|f| values[shape.voxel_of(f)]).collect())
}

/// Read a mask volume (nonzero = in mask).
pub fn read_mask(path: impl AsRef<Path>) -> Result<LatticeShape> {
    let (dims, values) = read_volume(path)?;
    LatticeShape::with_mask(dims, values.iter().map(|&v| v != 0.0).collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}
