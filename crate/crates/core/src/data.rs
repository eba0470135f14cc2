//! Caption + image-feature corpora.
//!
//! Captions file: UTF-8 TSV, `description_id<TAB>image_id<TAB>caption`, one
//! description per line. Description order in the file is the corpus order
//! used for semantic rows.
//!
//! Features file: a header line `n_img d_img`, then one whitespace-separated
//! row of `d_img` floats per image. Row `r` holds image id `r`, so caption
//! image ids are integers in `0..n_img`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::eval::RelevanceMap;
use crate::textsem::{porter, preprocess, PreprocessConfig, DEFAULT_STOPWORDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Description {
    pub id: String,
    /// Row of the owning image in the feature matrix.
    pub image: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// n_img × d_img.
    pub features: Array2<f64>,
    pub descriptions: Vec<Description>,
    pub relevance: RelevanceMap,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Array2<f64>, descriptions: Vec<Description>, split: Split) -> Result<Self> {
        let n_img = features.nrows();
        let mut seen = HashSet::new();
        for d in &descriptions {
            if d.image >= n_img {
                return Err(Error::MissingImageId {
                    description: d.id.clone(),
                    image: d.image.to_string(),
                });
            }
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateDescriptionId(d.id.clone()));
            }
        }
        let owners: Vec<usize> = descriptions.iter().map(|d| d.image).collect();
        let relevance = RelevanceMap::from_description_images(&owners, n_img)?;
        Ok(Self {
            features,
            descriptions,
            relevance,
            split,
        })
    }

    pub fn n_images(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_descriptions(&self) -> usize {
        self.descriptions.len()
    }

    pub fn d_img(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptions.is_empty()
    }

    /// Owning image of each description, in corpus order.
    pub fn description_images(&self) -> Vec<usize> {
        self.descriptions.iter().map(|d| d.image).collect()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.descriptions.iter().map(|d| d.text.as_str())
    }

    /// Keeps the listed images (in the given order) and their descriptions,
    /// which stay in their original relative order.
    pub fn select_images(&self, images: &[usize], split: Split) -> Result<Self> {
        let remap: BTreeMap<usize, usize> =
            images.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let features = self.features.select(Axis(0), images);
        let descriptions = self
            .descriptions
            .iter()
            .filter_map(|d| {
                remap.get(&d.image).map(|&image| Description {
                    image,
                    ..d.clone()
                })
            })
            .collect();
        Self::new(features, descriptions, split)
    }

    /// Deterministic hold-out: image `i` goes to the validation part when
    /// `i % every == every − 1`.
    pub fn split_holdout(&self, every: usize) -> Result<(Self, Self)> {
        if every < 2 {
            return Err(Error::InvalidConfig("hold-out period must be >= 2".into()));
        }
        let (val, train): (Vec<usize>, Vec<usize>) =
            (0..self.n_images()).partition(|i| i % every == every - 1);
        Ok((
            self.select_images(&train, Split::Train)?,
            self.select_images(&val, Split::Val)?,
        ))
    }
}

pub fn load_dataset(captions: &Path, features: &Path, split: Split) -> Result<Dataset> {
    let features = read_features(features)?;
    let n_img = features.nrows();
    let text = std::fs::read_to_string(captions).map_err(|e| Error::io(captions, e))?;
    let mut descriptions = Vec::new();
    let mut ids = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(img), Some(caption)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::Parse {
                path: captions.to_path_buf(),
                line: lineno + 1,
                message: "expected description_id<TAB>image_id<TAB>caption".into(),
            });
        };
        let image = match img.trim().parse::<usize>() {
            Ok(i) if i < n_img => i,
            _ => {
                return Err(Error::MissingImageId {
                    description: id.to_string(),
                    image: img.to_string(),
                })
            }
        };
        if !ids.insert(id.to_string()) {
            return Err(Error::DuplicateDescriptionId(id.to_string()));
        }
        descriptions.push(Description {
            id: id.to_string(),
            image,
            text: caption.to_string(),
        });
    }
    Dataset::new(features, descriptions, split)
}

fn read_features(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing `n_img d_img` header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    let [n_img, d_img] = dims[..] else {
        return Err(parse_err(1, "header must be `n_img d_img`".into()));
    };
    let mut data = Vec::with_capacity(n_img * d_img);
    let mut rows = 0;
    for (i, line) in lines {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(i + 1, format!("bad float: {e}")))?;
        if row.len() != d_img {
            return Err(Error::DimensionMismatch(format!(
                "{}:{}: expected {d_img} values, found {}",
                path.display(),
                i + 1,
                row.len()
            )));
        }
        data.extend(row);
        rows += 1;
    }
    if rows != n_img {
        return Err(Error::DimensionMismatch(format!(
            "{}: header declares {n_img} images, found {rows}",
            path.display()
        )));
    }
    Ok(Array2::from_shape_vec((n_img, d_img), data).expect("sized"))
}

pub fn write_dataset(dataset: &Dataset, captions: &Path, features: &Path) -> Result<()> {
    let mut cap = String::new();
    for d in &dataset.descriptions {
        writeln!(cap, "{}\t{}\t{}", d.id, d.image, d.text).unwrap();
    }
    std::fs::write(captions, cap).map_err(|e| Error::io(captions, e))?;

    let mut feat = format!("{} {}\n", dataset.n_images(), dataset.d_img());
    for row in dataset.features.rows() {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        feat.push_str(&line.join(" "));
        feat.push('\n');
    }
    std::fs::write(features, feat).map_err(|e| Error::io(features, e))
}

/// Parameters for a clustered synthetic corpus.
///
/// Every cluster owns a disjoint list of topic words and a Gaussian feature
/// center. Each image additionally carries a few attribute words drawn from a
/// vocabulary shared by all clusters; every attribute word has its own feature
/// direction, added to the image's features. A caption lists the cluster's
/// topic words (each kept with probability `overlap`, otherwise replaced by a
/// shared filler word) plus the image's attribute words, in random order.
/// With `feature_offset` set, features are shifted and rectified so they are
/// nonnegative with a shared component, like pooled CNN activations.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_clusters: usize,
    pub items_per_cluster: usize,
    pub captions_per_image: usize,
    pub d_img: usize,
    /// Probability that a caption keeps each of its cluster's topic words.
    pub overlap: f64,
    /// Standard deviation of per-image feature noise.
    pub noise: f64,
    pub topic_words: usize,
    pub attribute_words: usize,
    pub attributes_per_image: usize,
    pub filler_words: usize,
    /// `Some(c)` maps each feature `x` to `max(0, x + c)`.
    pub feature_offset: Option<f64>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            items_per_cluster: 25,
            captions_per_image: 5,
            d_img: 32,
            overlap: 0.8,
            noise: 0.5,
            topic_words: 8,
            attribute_words: 16,
            attributes_per_image: 2,
            filler_words: 16,
            feature_offset: Some(3.0),
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_clusters", self.n_clusters),
            ("items_per_cluster", self.items_per_cluster),
            ("captions_per_image", self.captions_per_image),
            ("d_img", self.d_img),
            ("topic_words", self.topic_words),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("synthetic {name} must be >= 1")));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::InvalidConfig(format!("overlap {} outside [0, 1]", self.overlap)));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise {} must be >= 0", self.noise)));
        }
        if self.feature_offset.is_some_and(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("feature_offset must be finite".into()));
        }
        if self.attributes_per_image > self.attribute_words {
            return Err(Error::InvalidConfig(
                "attributes_per_image exceeds attribute_words".into(),
            ));
        }
        if self.overlap < 1.0 && self.filler_words == 0 {
            return Err(Error::InvalidConfig("overlap < 1 needs filler_words >= 1".into()));
        }
        Ok(())
    }

    /// Cluster of each image; images are laid out cluster by cluster.
    pub fn image_clusters(&self) -> Vec<usize> {
        (0..self.n_clusters * self.items_per_cluster)
            .map(|i| i / self.items_per_cluster)
            .collect()
    }
}

/// Pronounceable lowercase words that are not stopwords and whose stems are
/// pairwise distinct, so each word survives preprocessing as its own term.
fn make_words(count: usize, rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>) -> Vec<String> {
    const CONS: &[u8] = b"bdfgklmnprtvz";
    const VOWELS: &[u8] = b"aiou";
    let mut words = Vec::with_capacity(count);
    while words.len() < count {
        let mut w = String::new();
        for _ in 0..3 {
            w.push(*CONS.choose(rng).unwrap() as char);
            w.push(*VOWELS.choose(rng).unwrap() as char);
        }
        let stem = porter::stem(&w);
        if DEFAULT_STOPWORDS.contains(&w.as_str()) || !taken.insert(stem) {
            continue;
        }
        words.push(w);
    }
    words
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = BTreeSet::new();
    let topics: Vec<Vec<String>> = (0..spec.n_clusters)
        .map(|_| make_words(spec.topic_words, &mut rng, &mut taken))
        .collect();
    let attributes = make_words(spec.attribute_words, &mut rng, &mut taken);
    let fillers = make_words(spec.filler_words, &mut rng, &mut taken);

    let gaussian = |rng: &mut ChaCha8Rng| -> Array1<f64> {
        Array1::from_shape_simple_fn(spec.d_img, || StandardNormal.sample(&mut *rng))
    };
    let centers: Vec<Array1<f64>> = (0..spec.n_clusters).map(|_| gaussian(&mut rng)).collect();
    let attr_dirs: Vec<Array1<f64>> = (0..spec.attribute_words).map(|_| gaussian(&mut rng)).collect();

    let n_img = spec.n_clusters * spec.items_per_cluster;
    let mut features = Array2::zeros((n_img, spec.d_img));
    let mut descriptions = Vec::with_capacity(n_img * spec.captions_per_image);
    let attr_ids: Vec<usize> = (0..spec.attribute_words).collect();
    for (img, cluster) in spec.image_clusters().into_iter().enumerate() {
        let attrs: Vec<usize> = attr_ids
            .choose_multiple(&mut rng, spec.attributes_per_image)
            .copied()
            .collect();
        let mut x = centers[cluster].clone();
        for &a in &attrs {
            x += &attr_dirs[a];
        }
        x.scaled_add(spec.noise, &gaussian(&mut rng));
        if let Some(c) = spec.feature_offset {
            x.mapv_inplace(|v| (v + c).max(0.0));
        }
        features.row_mut(img).assign(&x);

        for c in 0..spec.captions_per_image {
            let mut words: Vec<&str> = topics[cluster]
                .iter()
                .map(|t| {
                    if rng.random::<f64>() < spec.overlap {
                        t.as_str()
                    } else {
                        fillers.choose(&mut rng).unwrap().as_str()
                    }
                })
                .collect();
            words.extend(attrs.iter().map(|&a| attributes[a].as_str()));
            words.shuffle(&mut rng);
            let mut text = words.join(" ");
            if let Some(first) = text.get_mut(0..1) {
                first.make_ascii_uppercase();
            }
            text.push('.');
            descriptions.push(Description {
                id: format!("{img}_{c}"),
                image: img,
                text,
            });
        }
    }
    Dataset::new(features, descriptions, Split::Train)
}

/// Seeded shuffle of `0..n` for the given epoch, cut into chunks of
/// `batch_size`. A trailing chunk with fewer than 2 items is dropped.
pub fn minibatches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::InvalidConfig(format!("batch size {batch_size} < 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    Ok(order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect())
}

/// Maps preprocessed terms to word-embedding rows. Row 0 is reserved for
/// unknown terms; known terms follow in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenIndex {
    terms: BTreeMap<String, usize>,
}

impl TokenIndex {
    pub const UNKNOWN: usize = 0;

    pub fn build<S: AsRef<str>>(docs: &[Vec<S>]) -> Self {
        let unique: BTreeSet<&str> = docs.iter().flatten().map(AsRef::as_ref).collect();
        let terms = unique
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t.to_string(), i + 1))
            .collect();
        Self { terms }
    }

    /// Number of embedding rows, including the unknown row.
    pub fn len(&self) -> usize {
        self.terms.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Token ids for a preprocessed description; an empty description maps
    /// to the single unknown token.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        if tokens.is_empty() {
            return vec![Self::UNKNOWN];
        }
        tokens
            .iter()
            .map(|t| self.terms.get(t.as_ref()).copied().unwrap_or(Self::UNKNOWN))
            .collect()
    }
}

/// Preprocesses every description of `dataset` in corpus order.
pub fn preprocess_dataset(dataset: &Dataset, cfg: &PreprocessConfig) -> Vec<Vec<String>> {
    dataset.texts().map(|t| preprocess(t, cfg)).collect()
}
