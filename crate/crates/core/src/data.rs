//! Multilingual video-caption corpora: in-memory model, the `C2KC` binary
//! file format, splits, deterministic batching, and a seeded synthetic
//! generator whose per-language translation noise is controllable.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, Tensor2D};
use crate::model::ByteReader;

pub const CORPUS_MAGIC: &[u8; 4] = b"C2KC";
pub const CORPUS_VERSION: u16 = 1;
pub const ENGLISH: &str = "en";

/// Two-letter tags used by the multilingual benchmarks.
pub const KNOWN_LANGUAGES: [&str; 13] = [
    "en", "de", "fr", "cs", "zh", "ru", "vi", "sw", "es", "ja", "hi", "kn", "mr",
];

/// SplitMix64 finalizer used to derive independent seeds.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One video with its frame features and per-language caption token features.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    pub id: u64,
    pub frames: Tensor2D,
    pub captions: BTreeMap<String, Tensor2D>,
}

impl CorpusRecord {
    pub fn caption(&self, language: &str) -> Result<&Tensor2D> {
        self.captions
            .get(language)
            .ok_or_else(|| Error::Data(format!("record {} has no `{language}` caption", self.id)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    languages: Vec<String>,
    frame_dim: usize,
    token_dim: usize,
    records: Vec<CorpusRecord>,
    index: HashMap<u64, usize>,
}

impl Corpus {
    /// Validates and indexes a set of records.
    ///
    /// Every record must carry an English caption, at least one frame, and
    /// at least one token for every caption it has.
    pub fn new(
        languages: Vec<String>,
        frame_dim: usize,
        token_dim: usize,
        records: Vec<CorpusRecord>,
    ) -> Result<Self> {
        if !languages.iter().any(|l| l == ENGLISH) {
            return Err(Error::Data("corpus language table must include `en`".into()));
        }
        let unique: HashSet<_> = languages.iter().collect();
        if unique.len() != languages.len() {
            return Err(Error::Data("duplicate language tag".into()));
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.id, i).is_some() {
                return Err(Error::Data(format!("duplicate record id {}", r.id)));
            }
            if r.frames.rows() == 0 || r.frames.cols() != frame_dim {
                return Err(Error::Data(format!(
                    "record {} frames are {}, expected at least one row of width {frame_dim}",
                    r.id,
                    r.frames.shape()
                )));
            }
            if !r.captions.contains_key(ENGLISH) {
                return Err(Error::Data(format!("record {} has no English caption", r.id)));
            }
            for (lang, tokens) in &r.captions {
                if !unique.contains(lang) {
                    return Err(Error::Data(format!("record {} uses unknown language `{lang}`", r.id)));
                }
                if tokens.rows() == 0 || tokens.cols() != token_dim {
                    return Err(Error::Data(format!(
                        "record {} `{lang}` caption is {}, expected at least one row of width {token_dim}",
                        r.id,
                        tokens.shape()
                    )));
                }
            }
        }
        Ok(Self {
            languages,
            frame_dim,
            token_dim,
            records,
            index,
        })
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn frame_dim(&self) -> usize {
        self.frame_dim
    }

    pub fn token_dim(&self) -> usize {
        self.token_dim
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.id).collect()
    }

    pub fn get(&self, id: u64) -> Result<&CorpusRecord> {
        self.index
            .get(&id)
            .map(|&i| &self.records[i])
            .ok_or_else(|| Error::Data(format!("unknown record id {id}")))
    }

    /// Serializes to the `C2KC` layout. Features are stored as `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CORPUS_MAGIC);
        out.extend_from_slice(&CORPUS_VERSION.to_le_bytes());
        for v in [self.records.len(), self.frame_dim, self.token_dim, self.languages.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for lang in &self.languages {
            out.extend_from_slice(&(lang.len() as u32).to_le_bytes());
            out.extend_from_slice(lang.as_bytes());
        }
        let put_block = |out: &mut Vec<u8>, t: &Tensor2D| {
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        };
        for r in &self.records {
            out.extend_from_slice(&r.id.to_le_bytes());
            put_block(&mut out, &r.frames);
            for lang in &self.languages {
                match r.captions.get(lang) {
                    Some(t) => put_block(&mut out, t),
                    None => out.extend_from_slice(&0u32.to_le_bytes()),
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != CORPUS_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad corpus magic".into(),
            });
        }
        let version = r.u16()?;
        if version != CORPUS_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported corpus version {version}"),
            });
        }
        let n_records = r.u32()? as usize;
        let frame_dim = r.u32()? as usize;
        let token_dim = r.u32()? as usize;
        let n_languages = r.u32()? as usize;
        let mut languages = Vec::with_capacity(n_languages.min(64));
        for _ in 0..n_languages {
            let at = r.pos as u64;
            let len = r.u32()? as usize;
            let tag = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format {
                offset: at,
                message: "language tag is not UTF-8".into(),
            })?;
            languages.push(tag.to_string());
        }
        let read_block = |r: &mut ByteReader, rows: usize, cols: usize| -> Result<Tensor2D> {
            let needed = rows.checked_mul(cols).and_then(|n| n.checked_mul(4));
            if needed.is_none_or(|n| n > r.bytes.len() - r.pos) {
                return Err(Error::Format {
                    offset: r.pos as u64,
                    message: format!("truncated {rows}x{cols} feature block"),
                });
            }
            let data = (0..rows * cols)
                .map(|_| r.f32().map(f64::from))
                .collect::<Result<Vec<_>>>()?;
            Tensor2D::new(rows, cols, data)
        };
        let mut records = Vec::with_capacity(n_records.min(1 << 20));
        for _ in 0..n_records {
            let id = r.u64()?;
            let t_v = r.u32()? as usize;
            let frames = read_block(&mut r, t_v, frame_dim)?;
            let mut captions = BTreeMap::new();
            for lang in &languages {
                let t_t = r.u32()? as usize;
                if t_t > 0 {
                    captions.insert(lang.clone(), read_block(&mut r, t_t, token_dim)?);
                }
            }
            records.push(CorpusRecord { id, frames, captions });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        let end = r.pos as u64;
        Corpus::new(languages, frame_dim, token_dim, records).map_err(|e| Error::Format {
            offset: end,
            message: e.to_string(),
        })
    }
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, corpus.to_bytes())?;
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    Corpus::from_bytes(&std::fs::read(path)?)
}

/// Per-language translation noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageNoise {
    pub tag: String,
    pub noise: f64,
}

/// Parameters of a synthetic multilingual corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub records: usize,
    pub concept_dim: usize,
    pub token_dim: usize,
    pub frame_dim: usize,
    pub languages: Vec<LanguageNoise>,
    #[serde(default = "default_video_noise")]
    pub video_noise: f64,
    #[serde(default = "default_token_noise")]
    pub token_noise: f64,
    /// Inclusive frame-count range.
    #[serde(default = "default_frames")]
    pub frames: (usize, usize),
    /// Inclusive token-count range.
    #[serde(default = "default_tokens")]
    pub tokens: (usize, usize),
    pub seed: u64,
}

fn default_video_noise() -> f64 {
    0.3
}

fn default_token_noise() -> f64 {
    0.3
}

fn default_frames() -> (usize, usize) {
    (4, 8)
}

fn default_tokens() -> (usize, usize) {
    (3, 8)
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("records", self.records),
            ("concept_dim", self.concept_dim),
            ("token_dim", self.token_dim),
            ("frame_dim", self.frame_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Spec(format!("{name} must be at least 1")));
        }
        if self.frames.0 == 0 || self.frames.0 > self.frames.1 {
            return Err(Error::Spec(format!("invalid frame range {:?}", self.frames)));
        }
        if self.tokens.0 == 0 || self.tokens.0 > self.tokens.1 {
            return Err(Error::Spec(format!("invalid token range {:?}", self.tokens)));
        }
        let english = self
            .languages
            .iter()
            .find(|l| l.tag == ENGLISH)
            .ok_or_else(|| Error::Spec("languages must include `en`".into()))?;
        let mut seen = HashSet::new();
        for l in &self.languages {
            if !seen.insert(&l.tag) {
                return Err(Error::Spec(format!("duplicate language `{}`", l.tag)));
            }
            if !(l.noise >= 0.0) || !l.noise.is_finite() {
                return Err(Error::Spec(format!("noise for `{}` must be finite and non-negative", l.tag)));
            }
            if l.noise < english.noise {
                return Err(Error::Spec(format!(
                    "`{}` noise {} is below the English noise {}",
                    l.tag, l.noise, english.noise
                )));
            }
        }
        for (name, v) in [("video_noise", self.video_noise), ("token_noise", self.token_noise)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Spec(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor2D {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect();
    Tensor2D::new(rows, cols, data).expect("length matches shape")
}

fn normal_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Rounds through `f32` so corpora survive a save/load round trip exactly.
fn quantize(v: f64) -> f64 {
    f64::from(v as f32)
}

/// The fixed random mixing maps from latent concepts to feature spaces.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub spec: SyntheticSpec,
    /// `D_v × D_c`
    pub video_map: Tensor2D,
    /// Per language, `D_t × D_c`.
    pub language_maps: BTreeMap<String, Tensor2D>,
}

impl SyntheticWorld {
    pub fn new(spec: &SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let scale = 1.0 / (spec.concept_dim as f64).sqrt();
        let video_map = normal_matrix(spec.frame_dim, spec.concept_dim, scale, &mut rng);
        let language_maps = spec
            .languages
            .iter()
            .map(|l| (l.tag.clone(), normal_matrix(spec.token_dim, spec.concept_dim, scale, &mut rng)))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            video_map,
            language_maps,
        })
    }

    fn record(&self, index: usize) -> CorpusRecord {
        let spec = &self.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, index as u64 + 1));
        let concept = Tensor2D::row_vector(&normal_vec(spec.concept_dim, &mut rng));

        let emit = |map: &Tensor2D, latent: &Tensor2D, rows: usize, noise: f64, rng: &mut ChaCha8Rng| {
            let clean = kernel::matmul_nt(latent, map).expect("concept width matches map");
            let mut out = Tensor2D::zeros(rows, map.rows());
            for r in 0..rows {
                for (o, c) in out.row_mut(r).iter_mut().zip(clean.data()) {
                    let eps: f64 = rng.sample(StandardNormal);
                    *o = quantize(c + noise * eps);
                }
            }
            out
        };

        let t_v = rng.random_range(spec.frames.0..=spec.frames.1);
        let frames = emit(&self.video_map, &concept, t_v, spec.video_noise, &mut rng);
        let mut captions = BTreeMap::new();
        for l in &spec.languages {
            let translation = normal_vec(spec.concept_dim, &mut rng);
            let latent: Vec<f64> = concept
                .data()
                .iter()
                .zip(&translation)
                .map(|(z, e)| z + l.noise * e)
                .collect();
            let t_t = rng.random_range(spec.tokens.0..=spec.tokens.1);
            let tokens = emit(
                &self.language_maps[&l.tag],
                &Tensor2D::row_vector(&latent),
                t_t,
                spec.token_noise,
                &mut rng,
            );
            captions.insert(l.tag.clone(), tokens);
        }
        CorpusRecord {
            id: index as u64,
            frames,
            captions,
        }
    }

    pub fn generate(&self) -> Result<Corpus> {
        let records = (0..self.spec.records).map(|i| self.record(i)).collect();
        Corpus::new(
            self.spec.languages.iter().map(|l| l.tag.clone()).collect(),
            self.spec.frame_dim,
            self.spec.token_dim,
            records,
        )
    }

    /// Cosine between the matched-filter concept estimates `Aₗᵀ·mean(tokens)`
    /// and `A_vᵀ·mean(frames)` of one record.
    pub fn alignment(&self, record: &CorpusRecord, language: &str) -> Result<f64> {
        let map = self
            .language_maps
            .get(language)
            .ok_or_else(|| Error::Data(format!("unknown language `{language}`")))?;
        let text = kernel::matmul(&record.caption(language)?.mean_rows(), map)?;
        let video = kernel::matmul(&record.frames.mean_rows(), &self.video_map)?;
        let (t, v) = (text.data(), video.data());
        Ok(kernel::dot(t, v) / (kernel::dot(t, t).sqrt() * kernel::dot(v, v).sqrt()))
    }
}

/// Generates a synthetic corpus; a pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    SyntheticWorld::new(spec)?.generate()
}

/// Disjoint train / validation / test record ids covering a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u64>,
    pub validation: Vec<u64>,
    pub test: Vec<u64>,
}

impl Split {
    /// Partitions the corpus by counts, in corpus order or shuffled by `seed`.
    pub fn by_counts(corpus: &Corpus, train: usize, validation: usize, test: usize, seed: Option<u64>) -> Result<Self> {
        if train + validation + test != corpus.len() {
            return Err(Error::Data(format!(
                "split counts {train}+{validation}+{test} do not cover {} records",
                corpus.len()
            )));
        }
        let mut ids = corpus.ids();
        if let Some(seed) = seed {
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let test_ids = ids.split_off(train + validation);
        let val_ids = ids.split_off(train);
        Ok(Self {
            train: ids,
            validation: val_ids,
            test: test_ids,
        })
    }

    /// Checks disjointness and coverage.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.validation).chain(&self.test) {
            corpus.get(*id)?;
            if !seen.insert(*id) {
                return Err(Error::Data(format!("record {id} appears in more than one split")));
            }
        }
        if seen.len() != corpus.len() {
            return Err(Error::Data(format!(
                "split covers {} of {} records",
                seen.len(),
                corpus.len()
            )));
        }
        Ok(())
    }
}

/// A batch of aligned videos and captions.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub records: Vec<&'a CorpusRecord>,
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.id).collect()
    }

    pub fn frames(&self) -> Vec<&'a Tensor2D> {
        self.records.iter().map(|r| &r.frames).collect()
    }

    pub fn captions(&self, language: &str) -> Result<Vec<&'a Tensor2D>> {
        self.records.iter().map(|r| r.caption(language)).collect()
    }
}

/// Checks that every listed record carries every requested language.
pub fn require_languages(corpus: &Corpus, ids: &[u64], languages: &[String]) -> Result<()> {
    for id in ids {
        let r = corpus.get(*id)?;
        for lang in languages {
            r.caption(lang)?;
        }
    }
    Ok(())
}

/// Deterministically shuffled full batches of `ids` for one epoch; the
/// trailing short batch is dropped.
pub fn batch_iterator<'a>(
    corpus: &'a Corpus,
    ids: &[u64],
    batch_size: usize,
    languages: &[String],
    seed: u64,
    epoch: usize,
) -> Result<Vec<Batch<'a>>> {
    if batch_size < 2 {
        return Err(Error::Parameter(format!("batch size must be at least 2, got {batch_size}")));
    }
    require_languages(corpus, ids, languages)?;
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch as u64)));
    order
        .chunks_exact(batch_size)
        .map(|chunk| {
            Ok(Batch {
                records: chunk.iter().map(|id| corpus.get(*id)).collect::<Result<_>>()?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            records: 10,
            concept_dim: 4,
            token_dim: 6,
            frame_dim: 5,
            languages: vec![
                LanguageNoise { tag: "en".into(), noise: 0.1 },
                LanguageNoise { tag: "de".into(), noise: 0.5 },
            ],
            video_noise: 0.2,
            token_noise: 0.2,
            frames: (1, 3),
            tokens: (1, 4),
            seed: 17,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&small_spec()).unwrap();
        let b = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn zero_noise_captions_are_functions_of_the_concept() {
        let mut spec = small_spec();
        for l in &mut spec.languages {
            l.noise = 0.0;
        }
        spec.token_noise = 0.0;
        spec.video_noise = 0.0;
        let world = SyntheticWorld::new(&spec).unwrap();
        let corpus = world.generate().unwrap();
        for r in corpus.records() {
            // every token row is the same clean projection
            for lang in ["en", "de"] {
                let c = r.caption(lang).unwrap();
                for row in c.row_iter() {
                    assert_eq!(row, c.row(0));
                }
            }
            // Least-squares decoding recovers the same concept from every language.
            let en = decode(&world.language_maps["en"], r.caption("en").unwrap().row(0));
            let de = decode(&world.language_maps["de"], r.caption("de").unwrap().row(0));
            for (a, b) in en.iter().zip(&de) {
                assert!((a - b).abs() < 1e-5, "{en:?} vs {de:?}");
            }
        }
    }

    /// Solves the normal equations `AᵀA x = Aᵀ c` by Gaussian elimination.
    fn decode(map: &Tensor2D, c: &[f64]) -> Vec<f64> {
        let n = map.cols();
        let ata = kernel::matmul_tn(map, map).unwrap();
        let atc = kernel::matmul_tn(map, &Tensor2D::new(c.len(), 1, c.to_vec()).unwrap()).unwrap();
        let mut aug: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = ata.row(i).to_vec();
                row.push(atc.get(i, 0));
                row
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n).max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs())).unwrap();
            aug.swap(col, pivot);
            for r in 0..n {
                if r != col {
                    let f = aug[r][col] / aug[col][col];
                    for k in col..=n {
                        aug[r][k] -= f * aug[col][k];
                    }
                }
            }
        }
        (0..n).map(|i| aug[i][n] / aug[i][i]).collect()
    }

    #[test]
    fn spec_validation() {
        let mut spec = small_spec();
        spec.languages[1].noise = 0.05;
        assert!(matches!(generate_synthetic(&spec), Err(Error::Spec(_))));
        let mut spec = small_spec();
        spec.languages.remove(0);
        assert!(matches!(generate_synthetic(&spec), Err(Error::Spec(_))));
        let mut spec = small_spec();
        spec.token_dim = 0;
        assert!(matches!(generate_synthetic(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn batching_counts_and_determinism() {
        let corpus = generate_synthetic(&small_spec()).unwrap();
        let langs = vec!["en".to_string()];
        let ids = corpus.ids();
        let a = batch_iterator(&corpus, &ids, 4, &langs, 3, 0).unwrap();
        assert_eq!(a.len(), 2);
        let used: usize = a.iter().map(Batch::len).sum();
        assert_eq!(ids.len() - used, 2);
        let b = batch_iterator(&corpus, &ids, 4, &langs, 3, 0).unwrap();
        let ids_a: Vec<_> = a.iter().map(Batch::ids).collect();
        let ids_b: Vec<_> = b.iter().map(Batch::ids).collect();
        assert_eq!(ids_a, ids_b);
        let c = batch_iterator(&corpus, &ids, 4, &langs, 3, 1).unwrap();
        let ids_c: Vec<_> = c.iter().map(Batch::ids).collect();
        assert_ne!(ids_a, ids_c);

        assert!(matches!(batch_iterator(&corpus, &ids, 1, &langs, 3, 0), Err(Error::Parameter(_))));
        let missing = vec!["fr".to_string()];
        assert!(matches!(batch_iterator(&corpus, &ids, 4, &missing, 3, 0), Err(Error::Data(_))));
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let corpus = generate_synthetic(&small_spec()).unwrap();
        let split = Split::by_counts(&corpus, 6, 1, 3, Some(9)).unwrap();
        split.validate(&corpus).unwrap();
        assert_eq!((split.train.len(), split.validation.len(), split.test.len()), (6, 1, 3));
        assert!(Split::by_counts(&corpus, 6, 1, 2, None).is_err());
        let bad = Split {
            train: vec![0, 1],
            validation: vec![1],
            test: (2..10).collect(),
        };
        assert!(bad.validate(&corpus).is_err());
    }

    #[test]
    fn file_size_matches_layout() {
        let mut spec = small_spec();
        spec.records = 3;
        let corpus = generate_synthetic(&spec).unwrap();
        let bytes = corpus.to_bytes();
        let header = 4 + 2 + 4 * 4 + (4 + 2) * 2;
        let body: usize = corpus
            .records()
            .iter()
            .map(|r| {
                8 + 4
                    + 4 * r.frames.len()
                    + r.captions.values().map(|c| 4 + 4 * c.len()).sum::<usize>()
            })
            .sum();
        assert_eq!(bytes.len(), header + body);
    }

    #[test]
    fn corrupt_files_are_rejected_with_offsets() {
        let corpus = generate_synthetic(&small_spec()).unwrap();
        let mut bytes = corpus.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Corpus::from_bytes(&bytes), Err(Error::Format { offset: 0, .. })));
        let bytes = corpus.to_bytes();
        let cut = &bytes[..bytes.len() - 3];
        match Corpus::from_bytes(cut) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut bytes = corpus.to_bytes();
        bytes[4] = 9;
        assert!(matches!(Corpus::from_bytes(&bytes), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn missing_languages_round_trip() {
        let corpus = generate_synthetic(&small_spec()).unwrap();
        let mut records = corpus.records().to_vec();
        records[2].captions.remove("de");
        let c = Corpus::new(corpus.languages().to_vec(), 5, 6, records).unwrap();
        let back = Corpus::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert!(back.get(2).unwrap().caption("de").is_err());
    }
}
