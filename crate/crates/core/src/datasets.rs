//! Train/test sample stores, IDX ingestion and a seeded Gaussian-blob
//! generator.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: wrong magic number 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        file: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("{file}: truncated payload ({got} bytes, expected {expected})")]
    Truncated {
        file: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{file}: {extra} trailing bytes after payload")]
    TrailingBytes { file: &'static str, extra: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("sample has dimension {got}, dataset expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },
    #[error("invalid data spec: {0}")]
    Spec(String),
    #[error("feature {index} = {value} lies outside [0, 1]")]
    Domain { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub input_dim: usize,
    pub num_classes: usize,
    train: Vec<Sample>,
    test: Vec<Sample>,
}

impl Dataset {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            num_classes,
            train: Vec::new(),
            test: Vec::new(),
        }
    }

    pub fn train(&self) -> &[Sample] {
        &self.train
    }

    pub fn test(&self) -> &[Sample] {
        &self.test
    }

    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    fn check(&self, sample: &Sample) -> Result<(), DatasetError> {
        if sample.input.len() != self.input_dim {
            return Err(DatasetError::Dimension {
                expected: self.input_dim,
                got: sample.input.len(),
            });
        }
        if sample.label >= self.num_classes {
            return Err(DatasetError::Label {
                label: sample.label,
                num_classes: self.num_classes,
            });
        }
        if let Some((index, &value)) = sample
            .input
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(DatasetError::Domain { index, value });
        }
        Ok(())
    }

    pub fn add_train_sample(&mut self, sample: Sample) -> Result<(), DatasetError> {
        self.check(&sample)?;
        self.train.push(sample);
        Ok(())
    }

    pub fn add_test_sample(&mut self, sample: Sample) -> Result<(), DatasetError> {
        self.check(&sample)?;
        self.test.push(sample);
        Ok(())
    }

    /// Replaces the whole split after checking every sample.
    pub fn replace_split(&mut self, split: Split, samples: Vec<Sample>) -> Result<(), DatasetError> {
        for s in &samples {
            self.check(s)?;
        }
        match split {
            Split::Train => self.train = samples,
            Split::Test => self.test = samples,
        }
        Ok(())
    }

    /// Keeps only the first `n` samples of a split.
    pub fn truncate(&mut self, split: Split, n: usize) {
        match split {
            Split::Train => self.train.truncate(n),
            Split::Test => self.test.truncate(n),
        }
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn header(
    file: &'static str,
    bytes: &[u8],
    magic: u32,
    ndims: usize,
) -> Result<Vec<usize>, DatasetError> {
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(DatasetError::Truncated {
            file,
            got: bytes.len(),
            expected: header_len,
        });
    }
    let found = read_u32(bytes, 0);
    if found != magic {
        return Err(DatasetError::BadMagic {
            file,
            found,
            expected: magic,
        });
    }
    Ok((0..ndims).map(|i| read_u32(bytes, 4 + 4 * i) as usize).collect())
}

fn check_payload(file: &'static str, bytes: &[u8], expected: usize) -> Result<(), DatasetError> {
    match bytes.len().cmp(&expected) {
        std::cmp::Ordering::Less => Err(DatasetError::Truncated {
            file,
            got: bytes.len(),
            expected,
        }),
        std::cmp::Ordering::Greater => Err(DatasetError::TrailingBytes {
            file,
            extra: bytes.len() - expected,
        }),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

/// Decodes an IDX image file into flattened rows scaled to `[0, 1]`.
/// Returns `(rows * cols, images)`.
pub fn decode_idx_images(bytes: &[u8]) -> Result<(usize, Vec<Vec<f64>>), DatasetError> {
    let dims = header("images", bytes, IDX_IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let d = rows * cols;
    check_payload("images", bytes, 16 + n * d)?;
    let images = bytes[16..]
        .chunks_exact(d.max(1))
        .take(n)
        .map(|px| px.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect();
    Ok((d, images))
}

pub fn decode_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, DatasetError> {
    let dims = header("labels", bytes, IDX_LABELS_MAGIC, 1)?;
    let n = dims[0];
    check_payload("labels", bytes, 8 + n)?;
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads an IDX image/label pair into one split of `ds`, replacing it.
pub fn load_idx_dataset(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    split: Split,
    ds: &mut Dataset,
) -> Result<(), DatasetError> {
    let (d, images) = decode_idx_images(&read(images_path.as_ref())?)?;
    let labels = decode_idx_labels(&read(labels_path.as_ref())?)?;
    if images.len() != labels.len() {
        return Err(DatasetError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    if d != ds.input_dim {
        return Err(DatasetError::Dimension {
            expected: ds.input_dim,
            got: d,
        });
    }
    let samples = images
        .into_iter()
        .zip(labels)
        .map(|(input, label)| Sample { input, label })
        .collect();
    ds.replace_split(split, samples)
}

fn default_classes() -> usize {
    10
}

/// Where a dataset comes from: the blob generator or IDX files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Synth {
        seed: u64,
        n_per_class: usize,
        num_classes: usize,
        dim: usize,
        spread: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default = "default_classes")]
        num_classes: usize,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
}

impl DataSpec {
    pub fn load(&self) -> Result<Dataset, DatasetError> {
        match self {
            DataSpec::Synth {
                seed,
                n_per_class,
                num_classes,
                dim,
                spread,
            } => {
                if *num_classes < 2 || *dim == 0 || !(*spread >= 0.0) {
                    return Err(DatasetError::Spec(
                        "synthetic data needs num_classes >= 2, dim >= 1 and spread >= 0".into(),
                    ));
                }
                Ok(synth_blobs(*seed, *n_per_class, *num_classes, *dim, *spread))
            }
            DataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                num_classes,
                train_limit,
                test_limit,
            } => {
                let (d, _) = decode_idx_images(&read(train_images)?)?;
                let mut ds = Dataset::new(d, *num_classes);
                load_idx_dataset(train_images, train_labels, Split::Train, &mut ds)?;
                match (test_images, test_labels) {
                    (Some(i), Some(l)) => load_idx_dataset(i, l, Split::Test, &mut ds)?,
                    (None, None) => {}
                    _ => {
                        return Err(DatasetError::Spec(
                            "test_images and test_labels must be given together".into(),
                        ))
                    }
                }
                if let Some(n) = train_limit {
                    ds.truncate(Split::Train, *n);
                }
                if let Some(n) = test_limit {
                    ds.truncate(Split::Test, *n);
                }
                Ok(ds)
            }
        }
    }
}

/// Isotropic Gaussian blobs around distinct seeded centers, clipped to the
/// unit cube. Samples are generated class-interleaved; every fifth goes to
/// the test split.
pub fn synth_blobs(
    seed: u64,
    n_per_class: usize,
    num_classes: usize,
    dim: usize,
    spread: f64,
) -> Dataset {
    assert!(num_classes >= 2 && dim >= 1, "need m >= 2 and d >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = blob_centers(&mut rng, num_classes, dim);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut ds = Dataset::new(dim, num_classes);
    let mut counter = 0usize;
    for _ in 0..n_per_class {
        for (label, center) in centers.iter().enumerate() {
            let input = center
                .iter()
                .map(|c| (c + spread * noise.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            let sample = Sample { input, label };
            if counter % 5 == 4 {
                ds.test.push(sample);
            } else {
                ds.train.push(sample);
            }
            counter += 1;
        }
    }
    ds
}

/// Class centers drawn from `[0.2, 0.8]^d`, pairwise at least `sep` apart.
/// `sep` starts at 0.4 and shrinks when the cube is too crowded.
pub fn blob_centers(rng: &mut ChaCha8Rng, num_classes: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sep: f64 = 0.4;
    loop {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
        let mut attempts = 0;
        while centers.len() < num_classes && attempts < 2000 {
            attempts += 1;
            let c: Vec<f64> = (0..dim).map(|_| rng.random_range(0.2..0.8)).collect();
            let far = centers.iter().all(|o| {
                o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= sep
            });
            if far {
                centers.push(c);
            }
        }
        if centers.len() == num_classes {
            return centers;
        }
        sep *= 0.8;
    }
}
