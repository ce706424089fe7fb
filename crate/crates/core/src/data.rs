//! Dataset construction: windowing and splitting of multivariate series,
//! IDX and CSV loaders, and synthetic generators.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{matmul, Tensor};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Lagged input blocks and their next-step targets.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSeries {
    /// `[window, d]` each.
    pub inputs: Vec<Tensor>,
    /// `[d]` each.
    pub targets: Vec<Tensor>,
    pub window: usize,
    pub d: usize,
}

impl WindowedSeries {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

pub fn window_series(series: &Tensor, window: usize) -> Result<WindowedSeries> {
    let [t, d] = *series.shape() else {
        return Err(Error::dim("window_series", series.shape(), &[0, 0]));
    };
    if window == 0 || t <= window {
        return Err(Error::InsufficientData(format!(
            "a series of length {t} has no examples for window {window}"
        )));
    }
    let data = series.data();
    let inputs = (0..t - window)
        .map(|s| Tensor::new(vec![window, d], data[s * d..(s + window) * d].to_vec()))
        .collect::<Result<_>>()?;
    let targets = (window..t).map(|s| Tensor::vector(series.row(s).to_vec())).collect();
    Ok(WindowedSeries {
        inputs,
        targets,
        window,
        d,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Chronological 64/16/20 split: `floor(0.64n)`, `floor(0.16n)`, remainder.
pub fn sequential_split(n: usize) -> Result<SplitIndices> {
    if n < 5 {
        return Err(Error::InsufficientData(format!("need at least 5 examples to split, got {n}")));
    }
    let train = n * 64 / 100;
    let val = n * 16 / 100;
    Ok(SplitIndices {
        train: 0..train,
        val: train..train + val,
        test: train + val..n,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            offset,
            reason: "file ends inside the header".into(),
        })
}

/// Parses an IDX image container held in memory. `path` is only used in
/// diagnostics.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {IDX_IMAGES:#010x}"),
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let h = be_u32(bytes, 8, path)? as usize;
    let w = be_u32(bytes, 12, path)? as usize;
    let payload = &bytes[16..];
    let expected = n * h * w;
    if payload.len() != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 16 + payload.len().min(expected),
            reason: format!("header promises {expected} pixel bytes, payload has {}", payload.len()),
        });
    }
    Tensor::new(vec![n, 1, h, w], payload.iter().map(|&b| f64::from(b) / 255.0).collect())
}

/// Loads an IDX image file as `[N, 1, H, W]` scaled to `[0, 1]`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    parse_idx_images(&read_bytes(path)?, path)
}

/// Writes `[N, 1, H, W]` (or `[N, H, W]`) values in `[0, 1]` as IDX bytes,
/// rounding to the nearest of 256 levels.
pub fn write_idx_images(path: impl AsRef<Path>, images: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let (n, h, w) = match *images.shape() {
        [n, 1, h, w] | [n, h, w] => (n, h, w),
        _ => return Err(Error::dim("write_idx_images", images.shape(), &[0, 1, 0, 0])),
    };
    let mut bytes = Vec::with_capacity(16 + images.len());
    for v in [IDX_IMAGES, n as u32, h as u32, w as u32] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend(images.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {IDX_LABELS:#010x}"),
        });
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    if bytes.len() - 8 != n {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: bytes.len(),
            reason: format!("header promises {n} labels, payload has {}", bytes.len() - 8),
        });
    }
    Ok(bytes[8..].to_vec())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&IDX_LABELS.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a numeric CSV with a header row into `[T, d]`, rows in file order.
pub fn load_returns_csv(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let d = reader.headers().map_err(|e| csv_error(path, e))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = r + 2;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                column: c + 1,
                reason: format!("`{cell}` is not a number"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Tensor::new(vec![rows, d], data)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Csv(e),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Parse {
            path: path.to_path_buf(),
            row,
            column: (*len as usize).min(*expected_len as usize) + 1,
            reason: format!("row has {len} fields, header has {expected_len}"),
        },
        _ => Error::Parse {
            path: path.to_path_buf(),
            row,
            column: 0,
            reason: e.to_string(),
        },
    }
}

/// Per-column affine normalization fitted on a subset of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Fits column means and standard deviations on `rows` of a `[T, d]`
    /// series. Constant columns keep unit scale.
    pub fn fit(series: &Tensor, rows: Range<usize>) -> Result<Self> {
        let [t, d] = *series.shape() else {
            return Err(Error::dim("standardize", series.shape(), &[0, 0]));
        };
        if rows.end > t || rows.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "standardization needs at least 2 rows inside 0..{t}, got {rows:?}"
            )));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(series.row(r)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(series.row(r)).zip(&mean) {
                *s += (v - m) * (v - m) / (n - 1.0);
            }
        }
        let sd = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, sd })
    }

    pub fn apply(&self, series: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        if series.ndim() != 2 || series.shape()[1] != d {
            return Err(Error::dim("standardize", series.shape(), &[0, d]));
        }
        let data = series
            .data()
            .chunks(d)
            .flat_map(|row| row.iter().zip(&self.mean).zip(&self.sd).map(|((v, m), s)| (v - m) / s))
            .collect();
        Tensor::new(series.shape().to_vec(), data)
    }
}

/// First-order vector autoregression `x_t = A x_{t-1} + ε_t`,
/// `ε_t ~ N(0, noise_sd² I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarProcess {
    pub a: Tensor,
    pub noise_sd: f64,
}

impl VarProcess {
    /// Random transition matrix `Q T Qᵀ` with `Q` orthogonal and `T` upper
    /// triangular, whose real eigenvalues (the diagonal of `T`) are rescaled
    /// so the largest magnitude equals `spectral_radius`.
    pub fn random(d: usize, spectral_radius: f64, noise_sd: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(spectral_radius > 0.0 && spectral_radius < 1.0) {
            return Err(Error::ParamRange {
                name: "spectral_radius",
                value: spectral_radius,
                expected: "0 < radius < 1",
            });
        }
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(Error::ParamRange {
                name: "noise_sd",
                value: noise_sd,
                expected: "finite and non-negative",
            });
        }
        if d == 0 {
            return Err(Error::Parameter("series dimension must be positive".into()));
        }
        let q = random_orthogonal(d, rng);
        let mut eig: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if max > 0.0 { spectral_radius / max } else { 0.0 };
        if max == 0.0 {
            eig[0] = spectral_radius;
        }
        let mut t = Tensor::zeros(&[d, d]);
        for i in 0..d {
            t.data_mut()[i * d + i] = eig[i] * if max > 0.0 { scale } else { 1.0 };
            for j in i + 1..d {
                t.data_mut()[i * d + j] = rng.sample(StandardNormal);
            }
        }
        let qt = transpose(&q);
        let a = matmul(&matmul(&q, &t)?, &qt)?;
        Ok(Self { a, noise_sd })
    }

    /// `steps` observations starting from `x_0 = 0`; the zero state itself is
    /// not emitted.
    pub fn simulate(&self, steps: usize, rng: &mut impl Rng) -> Result<Tensor> {
        let d = self.a.shape()[0];
        let noise = Normal::new(0.0, self.noise_sd).map_err(|e| Error::Parameter(e.to_string()))?;
        let a = self.a.data();
        let mut x = vec![0.0; d];
        let mut out = Vec::with_capacity(steps * d);
        for _ in 0..steps {
            let next: Vec<f64> = (0..d)
                .map(|i| a[i * d..(i + 1) * d].iter().zip(&x).map(|(a, x)| a * x).sum::<f64>() + noise.sample(rng))
                .collect();
            out.extend_from_slice(&next);
            x = next;
        }
        Tensor::new(vec![steps, d], out)
    }

    /// Stationary covariance `Σ = A Σ Aᵀ + σ² I`, by fixed-point iteration.
    pub fn stationary_covariance(&self) -> Tensor {
        let d = self.a.shape()[0];
        let at = transpose(&self.a);
        let mut sigma = Tensor::zeros(&[d, d]);
        for _ in 0..10_000 {
            let mut next = matmul(&matmul(&self.a, &sigma).unwrap(), &at).unwrap();
            for i in 0..d {
                next.data_mut()[i * d + i] += self.noise_sd * self.noise_sd;
            }
            let diff = next.data().iter().zip(sigma.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            sigma = next;
            if diff <= 1e-14 * (1.0 + sigma.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                break;
            }
        }
        sigma
    }
}

/// Deterministic VAR(1) sample of shape `[T, d]` for `seed`.
pub fn synth_var_series(d: usize, t: usize, spectral_radius: f64, noise_sd: f64, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let process = VarProcess::random(d, spectral_radius, noise_sd, &mut rng)?;
    process.simulate(t, &mut rng)
}

fn transpose(m: &Tensor) -> Tensor {
    let (r, c) = (m.shape()[0], m.shape()[1]);
    let data = (0..c).flat_map(|j| (0..r).map(move |i| m.data()[i * c + j])).collect();
    Tensor::new(vec![c, r], data).unwrap()
}

/// Modified Gram–Schmidt on the columns of a Gaussian matrix.
fn random_orthogonal(d: usize, rng: &mut impl Rng) -> Tensor {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let mut ok = true;
        for j in 0..d {
            for k in 0..j {
                let proj: f64 = cols[j].iter().zip(&cols[k]).map(|(a, b)| a * b).sum();
                let qk = cols[k].clone();
                for (v, q) in cols[j].iter_mut().zip(&qk) {
                    *v -= proj * q;
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            cols[j].iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            let data = (0..d).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
            return Tensor::new(vec![d, d], data).unwrap();
        }
    }
}

/// Digit-like grayscale images `[n, 1, h, w]` in `[0, 1]`: each image holds
/// one or two anti-aliased strokes (an elliptical arc and a line segment)
/// on a black background.
pub fn synth_images(n: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor {
    let mut data = vec![0.0; n * h * w];
    let (hf, wf) = (h as f64, w as f64);
    for img in data.chunks_mut(h * w) {
        let thickness = rng.random_range(0.9..1.8) * hf / 28.0;
        let cx = rng.random_range(0.35..0.65) * wf;
        let cy = rng.random_range(0.35..0.65) * hf;
        let rx = rng.random_range(0.12..0.3) * wf;
        let ry = rng.random_range(0.15..0.35) * hf;
        let start = rng.random_range(0.0..std::f64::consts::TAU);
        let sweep = rng.random_range(2.0..std::f64::consts::TAU);
        let with_line = rng.random_bool(0.6);
        let (x0, y0) = (rng.random_range(0.2..0.8) * wf, rng.random_range(0.1..0.3) * hf);
        let (x1, y1) = (rng.random_range(0.2..0.8) * wf, rng.random_range(0.7..0.9) * hf);
        let ink = rng.random_range(0.75..1.0);

        let arc_pts: Vec<(f64, f64)> = (0..64)
            .map(|s| {
                let a = start + sweep * s as f64 / 63.0;
                (cx + rx * a.cos(), cy + ry * a.sin())
            })
            .collect();
        for y in 0..h {
            for x in 0..w {
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                let mut dist = arc_pts
                    .windows(2)
                    .map(|s| seg_dist(p, s[0], s[1]))
                    .fold(f64::INFINITY, f64::min);
                if with_line {
                    dist = dist.min(seg_dist(p, (x0, y0), (x1, y1)));
                }
                let v = (1.0 - (dist - thickness).max(0.0)).clamp(0.0, 1.0) * ink;
                img[y * w + x] = v;
            }
        }
    }
    Tensor::new(vec![n, 1, h, w], data).unwrap()
}

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn window_counts_and_boundary() {
        let s = Tensor::new(vec![100, 2], (0..200).map(f64::from).collect()).unwrap();
        let w = window_series(&s, 10).unwrap();
        assert_eq!(w.len(), 90);
        assert_eq!(w.inputs[0].shape(), &[10, 2]);
        assert_eq!(w.targets[0].data(), s.row(10));
        assert_eq!(w.inputs[89].row(9), s.row(98));

        let s11 = Tensor::new(vec![11, 1], (0..11).map(f64::from).collect()).unwrap();
        let w = window_series(&s11, 10).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.targets[0].data(), &[10.0]);

        let s10 = Tensor::zeros(&[10, 1]);
        assert!(matches!(window_series(&s10, 10), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn split_sizes() {
        let s = sequential_split(100).unwrap();
        assert_eq!((s.train, s.val, s.test), (0..64, 64..80, 80..100));
        let s = sequential_split(1000).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (640, 160, 200));
        assert!(sequential_split(4).is_err());
    }

    #[test]
    fn split_is_ordered_partition() {
        for n in 5..500 {
            let s = sequential_split(n).unwrap();
            assert_eq!(s.train.start, 0);
            assert_eq!(s.train.end, s.val.start);
            assert_eq!(s.val.end, s.test.start);
            assert_eq!(s.test.end, n);
        }
    }

    fn idx_bytes(n: u32, h: u32, w: u32, payload: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES, n, h, w] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn idx_hand_fixture() {
        let bytes = idx_bytes(2, 2, 2, &[0, 255, 255, 0, 0, 0, 255, 255]);
        let t = parse_idx_images(&bytes, Path::new("mem")).unwrap();
        assert_eq!(t.shape(), &[2, 1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn idx_errors() {
        let p = Path::new("mem");
        assert!(matches!(parse_idx_images(&[], p), Err(Error::Format { offset: 0, .. })));
        let short = idx_bytes(3, 2, 2, &[0; 8]);
        assert!(matches!(parse_idx_images(&short, p), Err(Error::Format { .. })));
        let mut bad = idx_bytes(1, 1, 1, &[0]);
        bad[3] = 0x01;
        assert!(matches!(parse_idx_images(&bad, p), Err(Error::Format { .. })));
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.idx");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let imgs = synth_images(4, 28, 28, &mut rng);
        write_idx_images(&path, &imgs).unwrap();
        let a = load_idx_images(&path).unwrap();
        write_idx_images(&path, &a).unwrap();
        assert_eq!(load_idx_images(&path).unwrap(), a);

        let lp = dir.path().join("lab.idx");
        write_idx_labels(&lp, &[3, 1, 4]).unwrap();
        assert_eq!(load_idx_labels(&lp).unwrap(), vec![3, 1, 4]);
        assert!(load_idx_labels(&path).is_err());
    }

    #[test]
    fn synth_images_have_ink_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let imgs = synth_images(20, 28, 28, &mut rng);
        assert!(imgs.data().iter().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..20 {
            let s = imgs.slab(i);
            let lit = s.iter().filter(|&&v| v > 0.5).count();
            assert!(lit > 10 && lit < 400, "image {i} has {lit} lit pixels");
        }
    }

    fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn csv_fixture_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write_file(&dir, "ok.csv", "us,uk\n0.1,-0.2\n0.3,0.4\n-0.5,0.6\n");
        let t = load_returns_csv(&ok).unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);

        let header = write_file(&dir, "h.csv", "us,uk\n");
        let t = load_returns_csv(&header).unwrap();
        assert_eq!(t.shape(), &[0, 2]);
        assert!(matches!(window_series(&t, 10), Err(Error::InsufficientData(_))));

        let bad = write_file(&dir, "bad.csv", "us,uk\n0.1,0.2\n0.3,abc\n");
        match load_returns_csv(&bad) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("{other:?}"),
        }

        let ragged = write_file(&dir, "r.csv", "us,uk\n0.1,0.2\n0.3\n");
        assert!(matches!(load_returns_csv(&ragged), Err(Error::Parse { .. })));
    }

    #[test]
    fn var_zero_noise_is_zero() {
        let s = synth_var_series(3, 50, 0.5, 0.0, 7).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn var_rejects_bad_radius() {
        for r in [0.0, 1.0, 1.5, -0.2, f64::NAN] {
            assert!(synth_var_series(2, 10, r, 1.0, 0).is_err());
        }
    }

    #[test]
    fn var_is_deterministic() {
        let a = synth_var_series(7, 200, 0.6, 1.0, 11).unwrap();
        let b = synth_var_series(7, 200, 0.6, 1.0, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_var_series(7, 200, 0.6, 1.0, 12).unwrap());
    }

    #[test]
    fn var_radius_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = VarProcess::random(2, 0.5, 1.0, &mut rng).unwrap();
        let a = p.a.data();
        let (tr, det) = (a[0] + a[3], a[0] * a[3] - a[1] * a[2]);
        let disc = tr * tr - 4.0 * det;
        assert!(disc >= 0.0);
        let r = ((tr.abs() + disc.sqrt()) / 2.0).abs();
        assert!((r - 0.5).abs() < 1e-12, "{r}");
    }

    #[test]
    fn var_sample_variance_matches_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = VarProcess::random(2, 0.5, 1.0, &mut rng).unwrap();
        let sigma = p.stationary_covariance();
        let s = p.simulate(10_000, &mut rng).unwrap();
        let sd = Standardizer::fit(&s, 0..5_000).unwrap();
        let sd2 = Standardizer::fit(&s, 5_000..10_000).unwrap();
        for i in 0..2 {
            let var_true = sigma.data()[i * 2 + i];
            for est in [sd.sd[i], sd2.sd[i]] {
                let rel = (est * est - var_true).abs() / var_true;
                assert!(rel < 0.15, "column {i}: {} vs {var_true}", est * est);
            }
        }
    }

    #[test]
    fn standardizer_uses_fit_rows_only() {
        let s = Tensor::from_rows(&[&[1.0, 5.0], &[3.0, 5.0], &[100.0, 0.0]]);
        let st = Standardizer::fit(&s, 0..2).unwrap();
        assert_eq!(st.mean, vec![2.0, 5.0]);
        assert_eq!(st.sd[1], 1.0);
        let out = st.apply(&s).unwrap();
        assert!((out.row(0)[0] + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(out.row(2)[1], -5.0);
    }
}
