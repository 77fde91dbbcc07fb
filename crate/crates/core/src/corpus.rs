//! Geolocated text corpora.
//!
//! One post per line, `lat<TAB>lon<TAB>text`, UTF-8 with LF endings. Unlabeled
//! posts leave the first two fields empty. Coordinates are decimal degrees and
//! are written back with the shortest representation that round-trips.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{GeoError, Result};

/// Latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if let Some(msg) = coordinate_problem(lat, lon) {
            return Err(GeoError::InvalidData(format!("{msg}: ({lat}, {lon})")));
        }
        Ok(Self { lat, lon })
    }

    /// Builds a point from raw regressor output: latitude is clamped to
    /// [-90, 90] and longitude wrapped into [-180, 180).
    pub fn from_regression(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GeoError::InvalidData(format!(
                "non-finite predicted coordinate ({lat}, {lon})"
            )));
        }
        let lat = lat.clamp(-90.0, 90.0);
        let lon = if (-180.0..=180.0).contains(&lon) {
            lon
        } else {
            (lon + 180.0).rem_euclid(360.0) - 180.0
        };
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn get(&self, coord: Coordinate) -> f64 {
        match coord {
            Coordinate::Lat => self.lat,
            Coordinate::Lon => self.lon,
        }
    }
}

fn coordinate_problem(lat: f64, lon: f64) -> Option<&'static str> {
    if !lat.is_finite() {
        Some("latitude is not finite")
    } else if !lon.is_finite() {
        Some("longitude is not finite")
    } else if !(-90.0..=90.0).contains(&lat) {
        Some("latitude out of range")
    } else if !(-180.0..=180.0).contains(&lon) {
        Some("longitude out of range")
    } else {
        None
    }
}

/// One of the two regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coordinate {
    Lat,
    Lon,
}

impl Coordinate {
    pub const BOTH: [Coordinate; 2] = [Coordinate::Lat, Coordinate::Lon];

    pub fn as_str(&self) -> &'static str {
        match self {
            Coordinate::Lat => "lat",
            Coordinate::Lon => "lon",
        }
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Coordinate {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lat" => Ok(Coordinate::Lat),
            "lon" => Ok(Coordinate::Lon),
            other => Err(GeoError::InvalidArgument(format!(
                "unknown coordinate '{other}' (expected lat or lon)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusRole {
    Train,
    Dev,
    Test,
}

impl CorpusRole {
    /// Train and dev corpora must carry a location on every post.
    pub fn requires_labels(&self) -> bool {
        !matches!(self, CorpusRole::Test)
    }
}

impl fmt::Display for CorpusRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusRole::Train => "train",
            CorpusRole::Dev => "dev",
            CorpusRole::Test => "test",
        })
    }
}

impl FromStr for CorpusRole {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(CorpusRole::Train),
            "dev" => Ok(CorpusRole::Dev),
            "test" => Ok(CorpusRole::Test),
            other => Err(GeoError::InvalidArgument(format!(
                "unknown corpus role '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Post {
    pub id: u64,
    pub text: String,
    pub location: Option<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    posts: Vec<Post>,
    role: CorpusRole,
}

impl Corpus {
    /// Validates id uniqueness, line-break-free texts, and labels for
    /// train/dev roles.
    pub fn new(posts: Vec<Post>, role: CorpusRole) -> Result<Self> {
        let mut seen = HashSet::with_capacity(posts.len());
        for post in &posts {
            if !seen.insert(post.id) {
                return Err(GeoError::InvalidData(format!(
                    "duplicate post id {}",
                    post.id
                )));
            }
            if post.text.contains(['\n', '\r']) {
                return Err(GeoError::InvalidData(format!(
                    "post {} contains a line break",
                    post.id
                )));
            }
            if role.requires_labels() && post.location.is_none() {
                return Err(GeoError::InvalidData(format!(
                    "post {} has no location but the corpus role is {role}",
                    post.id
                )));
            }
        }
        Ok(Self { posts, role })
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn role(&self) -> CorpusRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.posts.iter().map(|p| p.id).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.posts.iter().map(|p| p.text.as_str()).collect()
    }

    pub fn is_labeled(&self) -> bool {
        self.posts.iter().all(|p| p.location.is_some())
    }

    /// Locations of every post; fails on the first unlabeled one.
    pub fn locations(&self) -> Result<Vec<GeoPoint>> {
        self.posts
            .iter()
            .map(|p| {
                p.location
                    .ok_or_else(|| GeoError::InvalidData(format!("post {} has no location", p.id)))
            })
            .collect()
    }

    pub fn targets(&self, coord: Coordinate) -> Result<Vec<f64>> {
        Ok(self.locations()?.iter().map(|p| p.get(coord)).collect())
    }

    /// Posts at the given positions, in the given order, keeping their ids.
    pub fn select(&self, positions: &[usize]) -> Corpus {
        Corpus {
            posts: positions.iter().map(|&i| self.posts[i].clone()).collect(),
            role: self.role,
        }
    }

    pub fn with_role(self, role: CorpusRole) -> Result<Corpus> {
        Corpus::new(self.posts, role)
    }

    /// Concatenates corpora and renumbers ids 0..n in the merged order.
    pub fn merge(parts: &[&Corpus], role: CorpusRole) -> Result<Corpus> {
        let posts = parts
            .iter()
            .flat_map(|c| c.posts.iter())
            .enumerate()
            .map(|(i, p)| Post {
                id: i as u64,
                text: p.text.clone(),
                location: p.location,
            })
            .collect();
        Corpus::new(posts, role)
    }
}

/// Parses the corpus wire format. Empty lines are skipped; ids follow post order.
pub fn parse_corpus(input: &str, role: CorpusRole) -> Result<Corpus> {
    let mut posts = Vec::new();
    for (line_idx, line) in input.split('\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let line_no = line_idx + 1;
        let mut fields = line.splitn(3, '\t');
        let (lat_s, lon_s, text) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(GeoError::parse(
                    line_no,
                    "expected 3 tab-separated fields (lat, lon, text)",
                ))
            }
        };
        if text.contains('\r') {
            return Err(GeoError::parse(line_no, "carriage return in text"));
        }
        let location = match (lat_s.is_empty(), lon_s.is_empty()) {
            (true, true) => {
                if role.requires_labels() {
                    return Err(GeoError::parse(
                        line_no,
                        format!("missing coordinates (required for {role} corpora)"),
                    ));
                }
                None
            }
            (false, false) => {
                let lat: f64 = lat_s.parse().map_err(|_| {
                    GeoError::parse(line_no, format!("non-numeric latitude '{lat_s}'"))
                })?;
                let lon: f64 = lon_s.parse().map_err(|_| {
                    GeoError::parse(line_no, format!("non-numeric longitude '{lon_s}'"))
                })?;
                if let Some(msg) = coordinate_problem(lat, lon) {
                    return Err(GeoError::parse(line_no, msg));
                }
                Some(GeoPoint { lat, lon })
            }
            _ => {
                return Err(GeoError::parse(
                    line_no,
                    "only one of latitude/longitude present",
                ))
            }
        };
        posts.push(Post {
            id: posts.len() as u64,
            text: text.to_string(),
            location,
        });
    }
    Corpus::new(posts, role)
}

pub fn load_corpus(path: impl AsRef<Path>, role: CorpusRole) -> Result<Corpus> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| GeoError::from(e).in_file(path))?;
    let text = String::from_utf8(raw)
        .map_err(|_| GeoError::InvalidData("corpus is not valid UTF-8".into()).in_file(path))?;
    parse_corpus(&text, role).map_err(|e| e.in_file(path))
}

/// Serializes to the wire format. Ids are not stored; reloading numbers
/// posts by line order.
pub fn write_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for post in &corpus.posts {
        if let Some(loc) = post.location {
            out.push_str(&format!("{}\t{}\t", loc.lat, loc.lon));
        } else {
            out.push_str("\t\t");
        }
        out.push_str(&post.text);
        out.push('\n');
    }
    out
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), write_corpus(corpus))
        .map_err(|e| GeoError::from(e).in_file(path.as_ref()))
}

/// Deterministic shuffle-and-cut. The first part receives
/// `round(fraction * len)` posts; both parts keep the original relative order
/// and ids.
pub fn split_corpus(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(GeoError::InvalidArgument(format!(
            "split fraction {fraction} must lie in (0, 1)"
        )));
    }
    if corpus.len() < 2 {
        return Err(GeoError::InvalidArgument(
            "cannot split fewer than 2 posts".into(),
        ));
    }
    if !corpus.is_labeled() {
        return Err(GeoError::InvalidData(
            "split requires a fully labeled corpus".into(),
        ));
    }
    let n = corpus.len();
    let first = (fraction * n as f64).round() as usize;
    if first == 0 || first == n {
        return Err(GeoError::InvalidArgument(format!(
            "fraction {fraction} of {n} posts leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut a = order[..first].to_vec();
    let mut b = order[first..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    Ok((corpus.select(&a), corpus.select(&b)))
}

/// Parameters of the synthetic dialect-region corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_regions: usize,
    pub posts_per_region: usize,
    /// Size of the shared vocabulary and of each region-exclusive vocabulary.
    pub vocab_size: usize,
    /// Probability that a token comes from the post's region vocabulary.
    pub region_word_bias: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_regions: 4,
            posts_per_region: 250,
            vocab_size: 60,
            region_word_bias: 0.8,
            seed: 1,
        }
    }
}

/// Bounding box of region centers (roughly German-speaking Switzerland).
pub const SYNTH_LAT_RANGE: (f64, f64) = (45.8, 47.8);
pub const SYNTH_LON_RANGE: (f64, f64) = (6.0, 10.5);
/// Standard deviation, in degrees, of post locations around a region center.
pub const SYNTH_SIGMA_DEG: f64 = 0.1;
const SYNTH_TOKENS_PER_POST: (usize, usize) = (12, 30);

/// A generated corpus together with the latent structure that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub centers: Vec<GeoPoint>,
    pub region_of_post: Vec<usize>,
    pub shared_vocab: Vec<String>,
    pub region_vocab: Vec<Vec<String>>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    generate_synthetic_detailed(spec).map(|s| s.corpus)
}

pub fn generate_synthetic_detailed(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.n_regions < 2 {
        return Err(GeoError::InvalidArgument(
            "n_regions must be at least 2".into(),
        ));
    }
    if spec.posts_per_region < 1 {
        return Err(GeoError::InvalidArgument(
            "posts_per_region must be at least 1".into(),
        ));
    }
    if spec.vocab_size < 1 {
        return Err(GeoError::InvalidArgument(
            "vocab_size must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.region_word_bias) {
        return Err(GeoError::InvalidArgument(
            "region_word_bias must lie in [0, 1]".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<GeoPoint> = (0..spec.n_regions)
        .map(|_| GeoPoint {
            lat: rng.random_range(SYNTH_LAT_RANGE.0..SYNTH_LAT_RANGE.1),
            lon: rng.random_range(SYNTH_LON_RANGE.0..SYNTH_LON_RANGE.1),
        })
        .collect();

    // Shared words use every vowel; each region spells its own words with a
    // small vowel subset, the way dialects differ mostly in vowels.
    let mut seen = HashSet::new();
    let shared_vocab = distinct_words(&mut rng, spec.vocab_size, NUCLEI, &mut seen);
    let region_vocab: Vec<Vec<String>> = (0..spec.n_regions)
        .map(|_| {
            let nuclei: Vec<&str> = NUCLEI
                .choose_multiple(&mut rng, REGION_NUCLEI)
                .copied()
                .collect();
            distinct_words(&mut rng, spec.vocab_size, &nuclei, &mut seen)
        })
        .collect();

    let mut region_of_post: Vec<usize> = (0..spec.n_regions)
        .flat_map(|r| std::iter::repeat_n(r, spec.posts_per_region))
        .collect();
    region_of_post.shuffle(&mut rng);

    let noise = Normal::new(0.0, SYNTH_SIGMA_DEG).expect("positive sigma");
    let mut posts = Vec::with_capacity(region_of_post.len());
    for (id, &region) in region_of_post.iter().enumerate() {
        let center = centers[region];
        let lat = (center.lat + noise.sample(&mut rng)).clamp(-90.0, 90.0);
        let lon = (center.lon + noise.sample(&mut rng)).clamp(-180.0, 180.0);
        let n_tokens = rng.random_range(SYNTH_TOKENS_PER_POST.0..=SYNTH_TOKENS_PER_POST.1);
        let tokens: Vec<&str> = (0..n_tokens)
            .map(|_| {
                let vocab = if rng.random::<f64>() < spec.region_word_bias {
                    &region_vocab[region]
                } else {
                    &shared_vocab
                };
                vocab[rng.random_range(0..vocab.len())].as_str()
            })
            .collect();
        posts.push(Post {
            id: id as u64,
            text: tokens.join(" "),
            location: Some(GeoPoint { lat, lon }),
        });
    }

    Ok(SyntheticCorpus {
        corpus: Corpus::new(posts, CorpusRole::Train)?,
        centers,
        region_of_post,
        shared_vocab,
        region_vocab,
    })
}

const ONSETS: &[&str] = &[
    "b", "ch", "chl", "d", "f", "g", "gr", "h", "j", "k", "l", "m", "n", "p", "r", "s", "sch",
    "st", "t", "w", "z",
];
const NUCLEI: &[&str] = &[
    "a", "e", "i", "o", "u", "ä", "ö", "ü", "ei", "ie", "ue", "ou",
];
const CODAS: &[&str] = &["", "", "n", "t", "li", "ch", "r", "s", "ll", "gg"];

const REGION_NUCLEI: usize = 3;

/// `count` words not yet in `seen`, built from onset-nucleus-coda syllables.
fn distinct_words(
    rng: &mut ChaCha8Rng,
    count: usize,
    nuclei: &[&str],
    seen: &mut HashSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.random_range(1..=3);
        let mut word = String::new();
        for _ in 0..syllables {
            word.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
            word.push_str(nuclei[rng.random_range(0..nuclei.len())]);
            word.push_str(CODAS[rng.random_range(0..CODAS.len())]);
        }
        if seen.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}
