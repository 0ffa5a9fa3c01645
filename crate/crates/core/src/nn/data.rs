//! Labelled image datasets: the on-disk `AIIVE-DS/1` file pair and a
//! seeded synthetic generator.
//!
//! A dataset named `base` lives in two files:
//!
//! - `base.meta`: UTF-8 text, one `key value` pair per line after the magic
//!   line `AIIVE-DS/1`; keys `N`, `D`, `C`, `train`, `validation`, `test`.
//! - `base.bin`: `N×D` little-endian `f32` pixels (row-major, one image
//!   per row) followed by `N` `u8` labels.
//!
//! Samples are stored split-contiguous: training rows first, then
//! validation, then test.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};

pub const MAGIC: &str = "AIIVE-DS/1";
pub const DEFAULT_SIDE: usize = 48;
pub const DEFAULT_CLASSES: usize = 7;
pub const DEFAULT_COUNTS: [usize; 3] = [3374, 419, 385];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Array2<f32>,
    labels: Vec<u8>,
    classes: usize,
    counts: [usize; 3],
}

impl Dataset {
    pub fn new(images: Array2<f32>, labels: Vec<u8>, classes: usize, counts: [usize; 3]) -> Result<Self> {
        let n = images.nrows();
        if labels.len() != n {
            return Err(Error::Format(format!("{} labels for {n} images", labels.len())));
        }
        if counts.iter().sum::<usize>() != n {
            return Err(Error::Format(format!(
                "split counts {counts:?} do not add up to {n}"
            )));
        }
        if classes == 0 || classes > 256 {
            return Err(Error::Format(format!("unsupported class count {classes}")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::Format(format!("label {bad} not below {classes}")));
        }
        if images.iter().any(|p| !p.is_finite()) {
            return Err(Error::Format("non-finite pixel".into()));
        }
        Ok(Dataset {
            images,
            labels,
            classes,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.images.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn split_len(&self, split: SplitKind) -> usize {
        self.counts[split as usize]
    }

    /// Global row indices belonging to `split`.
    pub fn split_range(&self, split: SplitKind) -> std::ops::Range<usize> {
        let start: usize = self.counts[..split as usize].iter().sum();
        start..start + self.counts[split as usize]
    }

    pub fn images(&self) -> &Array2<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Gathers rows (global indices) into an `f64` batch plus their labels.
    pub fn batch(&self, rows: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let d = self.input_dim();
        let mut x = Array2::zeros((rows.len(), d));
        let mut labels = Vec::with_capacity(rows.len());
        for (i, &r) in rows.iter().enumerate() {
            x.row_mut(i)
                .iter_mut()
                .zip(self.images.row(r))
                .for_each(|(dst, &src)| *dst = src as f64);
            labels.push(self.labels[r] as usize);
        }
        (x, labels)
    }

    pub fn split_batch(&self, split: SplitKind) -> (Array2<f64>, Vec<usize>) {
        let range = self.split_range(split);
        let x = self.images.slice(s![range.clone(), ..]).mapv(|p| p as f64);
        let labels = self.labels[range].iter().map(|&l| l as usize).collect();
        (x, labels)
    }

    pub fn save(&self, base: &Path) -> Result<()> {
        let (meta_path, bin_path) = file_pair(base);
        if let Some(dir) = meta_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let meta = format!(
            "{MAGIC}\nN {}\nD {}\nC {}\ntrain {}\nvalidation {}\ntest {}\n",
            self.len(),
            self.input_dim(),
            self.classes,
            self.counts[0],
            self.counts[1],
            self.counts[2]
        );
        fs::write(&meta_path, meta)?;
        let mut out = BufWriter::new(fs::File::create(&bin_path)?);
        for &p in self.images.iter() {
            out.write_all(&p.to_le_bytes())?;
        }
        out.write_all(&self.labels)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(base: &Path) -> Result<Self> {
        let (meta_path, bin_path) = file_pair(base);
        let meta = fs::read_to_string(&meta_path)?;
        let mut lines = meta.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(Error::Format(format!("{} lacks the {MAGIC} magic", meta_path.display())));
        }
        let mut field = |name: &str| -> Result<usize> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing `{name}`")))?;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(k), Some(v), None) if k == name => v
                    .parse()
                    .map_err(|_| Error::Format(format!("bad value for `{name}`: {v}"))),
                _ => Err(Error::Format(format!("expected `{name} <n>`, got `{line}`"))),
            }
        };
        let n = field("N")?;
        let d = field("D")?;
        let c = field("C")?;
        let counts = [field("train")?, field("validation")?, field("test")?];

        let bytes = fs::read(&bin_path)?;
        let expected = n
            .checked_mul(d)
            .and_then(|p| p.checked_mul(4))
            .and_then(|p| p.checked_add(n))
            .ok_or_else(|| Error::Format("size overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "{} has {} bytes, expected {expected}",
                bin_path.display(),
                bytes.len()
            )));
        }
        let (pixels, labels) = bytes.split_at(n * d * 4);
        let pixels: Vec<f32> = pixels
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let images = Array2::from_shape_vec((n, d), pixels)
            .map_err(|e| Error::Format(e.to_string()))?;
        Dataset::new(images, labels.to_vec(), c, counts)
    }
}

/// `(base.meta, base.bin)`; a trailing `.meta`/`.bin` on `base` is ignored.
pub fn file_pair(base: &Path) -> (PathBuf, PathBuf) {
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("meta") | Some("bin") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    let mut meta = stem.clone().into_os_string();
    meta.push(".meta");
    let mut bin = stem.into_os_string();
    bin.push(".bin");
    (meta.into(), bin.into())
}

/// Parameters of the synthetic class-template generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub side: usize,
    pub classes: usize,
    pub counts: [usize; 3],
    pub noise_sigma: f64,
    pub shared_blobs: usize,
    pub class_blobs: usize,
    /// Peak brightness of the shared blobs.
    pub shared_amplitude: f64,
    /// Peak brightness of the class-specific blobs.
    pub class_contrast: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    row: f64,
    col: f64,
    width: f64,
    amplitude: f64,
}

impl Blob {
    fn at(&self, r: f64, c: f64) -> f64 {
        let d2 = (r - self.row).powi(2) + (c - self.col).powi(2);
        self.amplitude * (-d2 / (2.0 * self.width * self.width)).exp()
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            side: DEFAULT_SIDE,
            classes: DEFAULT_CLASSES,
            counts: DEFAULT_COUNTS,
            noise_sigma: 0.15,
            shared_blobs: 3,
            shared_amplitude: 0.3,
            class_blobs: 2,
            class_contrast: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// One smooth field per class on a dark background: a set of bright
    /// Gaussian blobs shared by every class plus a few fainter
    /// class-specific blobs, clamped into `[0, 1]`.
    pub fn templates(&self) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let side = self.side as f64;
        let center = Uniform::new(side * 0.2, side * 0.8).expect("side > 0");
        let mut blob = |width: (f64, f64), amp: (f64, f64)| {
            let w = Uniform::new_inclusive(side * width.0, side * width.1).expect("valid widths");
            let a = Uniform::new_inclusive(amp.0, amp.1).expect("valid amplitude");
            Blob {
                row: center.sample(&mut rng),
                col: center.sample(&mut rng),
                width: w.sample(&mut rng),
                amplitude: a.sample(&mut rng),
            }
        };
        let shared: Vec<Blob> = (0..self.shared_blobs)
            .map(|_| blob((0.07, 0.11), (self.shared_amplitude * 0.8, self.shared_amplitude * 1.2)))
            .collect();
        let per_class: Vec<Vec<Blob>> = (0..self.classes)
            .map(|_| {
                (0..self.class_blobs)
                    .map(|_| blob((0.05, 0.08), (self.class_contrast * 0.75, self.class_contrast * 1.25)))
                    .collect()
            })
            .collect();
        per_class
            .iter()
            .map(|own| {
                (0..self.side * self.side)
                    .map(|i| {
                        let (r, c) = ((i / self.side) as f64, (i % self.side) as f64);
                        let v: f64 = shared.iter().chain(own).map(|b| b.at(r, c)).sum();
                        v.clamp(0.0, 1.0) as f32
                    })
                    .collect()
            })
            .collect()
    }

    /// Labels cycle through the classes within each split, so every split
    /// is balanced to within one sample per class.
    pub fn generate(&self) -> Result<Dataset> {
        if self.side == 0 || self.classes == 0 {
            return Err(Error::invalid("side and class count must be positive"));
        }
        if self.counts[0] == 0 {
            return Err(Error::invalid("training split must be non-empty"));
        }
        let templates = self.templates();
        let d = self.side * self.side;
        let n: usize = self.counts.iter().sum();
        let noise = Normal::new(0.0, self.noise_sigma)
            .map_err(|e| Error::invalid(format!("noise sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let mut images = Array2::<f32>::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        let mut row = 0;
        for &count in &self.counts {
            for i in 0..count {
                let label = i % self.classes;
                for (dst, &base) in images.row_mut(row).iter_mut().zip(&templates[label]) {
                    let v = base as f64 + noise.sample(&mut rng);
                    *dst = v.clamp(0.0, 1.0) as f32;
                }
                labels.push(label as u8);
                row += 1;
            }
        }
        Dataset::new(images, labels, self.classes, self.counts)
    }
}
