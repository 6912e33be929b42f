//! Dataset sources named on the command line.
//!
//! * `blobs:C=3,n=500,dim=16,sep=6[,test=100][,seed=0]` — Gaussian blobs,
//!   `n` samples per class, plus a held-out split of `test` per class.
//! * `idx:IMAGES,LABELS[,classes=10]` — one IDX image/label pair.
//! * a directory holding `train-images-idx3-ubyte` / `train-labels-idx1-ubyte`
//!   and optionally the matching `t10k-*` test pair.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hesslens::data::{load_idx, make_blobs_split, BlobSpec, Dataset};
use hesslens::{Error, Result};
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Blobs {
        spec: BlobSpec,
        test_per_class: usize,
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        classes: usize,
    },
    Dir(PathBuf),
}

fn parse_blobs(body: &str) -> Result<DataSource, String> {
    let (mut c, mut n, mut dim, mut sep, mut test, mut seed) = (None, None, None, None, None, 0u64);
    for kv in body.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("expected key=value in blobs spec, got {kv:?}"))?;
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| format!("bad integer {v:?} for {k}"))
        };
        match k.trim() {
            "C" | "c" => c = Some(int(v)?),
            "n" => n = Some(int(v)?),
            "dim" => dim = Some(int(v)?),
            "sep" => {
                sep = Some(
                    v.parse::<f64>()
                        .map_err(|_| format!("bad separation {v:?}"))?,
                )
            }
            "test" => test = Some(int(v)?),
            "seed" => seed = v.parse().map_err(|_| format!("bad seed {v:?}"))?,
            other => return Err(format!("unknown blobs key {other:?}")),
        }
    }
    let per_class = n.ok_or("blobs spec needs n=")?;
    Ok(DataSource::Blobs {
        spec: BlobSpec {
            classes: c.ok_or("blobs spec needs C=")?,
            per_class,
            dim: dim.ok_or("blobs spec needs dim=")?,
            separation: sep.ok_or("blobs spec needs sep=")?,
        },
        test_per_class: test.unwrap_or((per_class / 5).max(1)),
        seed,
    })
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(body) = s.strip_prefix("blobs:") {
            return parse_blobs(body);
        }
        if let Some(body) = s.strip_prefix("idx:") {
            let parts: Vec<&str> = body.split(',').collect();
            let classes = match parts.get(2) {
                Some(kv) => kv
                    .strip_prefix("classes=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| format!("expected classes=N, got {kv:?}"))?,
                None => 10,
            };
            if parts.len() < 2 || parts.len() > 3 {
                return Err("idx source is idx:IMAGES,LABELS[,classes=N]".into());
            }
            return Ok(DataSource::Idx {
                images: parts[0].into(),
                labels: parts[1].into(),
                classes,
            });
        }
        if s.is_empty() {
            return Err("empty data source".into());
        }
        Ok(DataSource::Dir(s.into()))
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Blobs {
                spec,
                test_per_class,
                seed,
            } => write!(
                f,
                "blobs:C={},n={},dim={},sep={},test={},seed={}",
                spec.classes, spec.per_class, spec.dim, spec.separation, test_per_class, seed
            ),
            DataSource::Idx {
                images,
                labels,
                classes,
            } => {
                write!(
                    f,
                    "idx:{},{},classes={}",
                    images.display(),
                    labels.display(),
                    classes
                )
            }
            DataSource::Dir(p) => write!(f, "{}", p.display()),
        }
    }
}

impl Serialize for DataSource {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub struct LoadedData {
    pub train: Dataset,
    pub test: Option<Dataset>,
    /// Content hashes of every file read (or of the generator spec).
    pub hashes: Vec<(String, String)>,
}

impl LoadedData {
    pub fn split(&self, which: Split) -> Result<&Dataset> {
        match which {
            Split::Train => Ok(&self.train),
            Split::Test => self
                .test
                .as_ref()
                .ok_or_else(|| Error::Config("data source has no test split".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

const DIR_NAMES: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

impl DataSource {
    pub fn load(&self) -> Result<LoadedData> {
        match self {
            DataSource::Blobs {
                spec,
                test_per_class,
                seed,
            } => {
                let (train, test) = make_blobs_split(spec, *test_per_class, *seed)?;
                Ok(LoadedData {
                    train,
                    test: Some(test),
                    hashes: vec![("data".into(), sha256_hex(self.to_string().as_bytes()))],
                })
            }
            DataSource::Idx {
                images,
                labels,
                classes,
            } => Ok(LoadedData {
                train: load_idx(images, labels, *classes)?,
                test: None,
                hashes: vec![
                    (images.display().to_string(), hash_file(images)?),
                    (labels.display().to_string(), hash_file(labels)?),
                ],
            }),
            DataSource::Dir(dir) => {
                let (ti, tl) = (dir.join(DIR_NAMES[0].0), dir.join(DIR_NAMES[0].1));
                if !ti.is_file() || !tl.is_file() {
                    return Err(Error::Config(format!(
                        "{} has no {} / {} pair",
                        dir.display(),
                        DIR_NAMES[0].0,
                        DIR_NAMES[0].1
                    )));
                }
                let mut hashes = vec![
                    (ti.display().to_string(), hash_file(&ti)?),
                    (tl.display().to_string(), hash_file(&tl)?),
                ];
                let train = load_idx(&ti, &tl, 10)?;
                let (ei, el) = (dir.join(DIR_NAMES[1].0), dir.join(DIR_NAMES[1].1));
                let test = if ei.is_file() && el.is_file() {
                    hashes.push((ei.display().to_string(), hash_file(&ei)?));
                    hashes.push((el.display().to_string(), hash_file(&el)?));
                    Some(load_idx(&ei, &el, 10)?)
                } else {
                    None
                };
                Ok(LoadedData {
                    train,
                    test,
                    hashes,
                })
            }
        }
    }
}
