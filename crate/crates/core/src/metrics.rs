//! Topic-quality metrics over a static word-embedding table, representative
//! words, and planar membership coordinates.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::corpus::EmbeddingCorpus;
use crate::density::{DensityError, DensityModel};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("corpus has no tokens")]
    NoTokens,
    #[error("topic list is empty")]
    EmptyTopicList,
    #[error("at least two topics are needed, got {0}")]
    TooFewTopics(usize),
    #[error("membership vector is not on the simplex")]
    NotOnSimplex,
    #[error("table line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate word {0:?} in table")]
    DuplicateWord(String),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Static (non-contextual) embedding per word.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    words: Vec<String>,
    dim: usize,
    vectors: Vec<f64>,
    index: HashMap<String, usize>,
}

impl WordEmbeddingTable {
    pub fn new(words: Vec<String>, dim: usize, vectors: Vec<f64>) -> Result<Self, MetricsError> {
        if vectors.len() != words.len() * dim {
            return Err(MetricsError::Parse {
                line: 0,
                msg: format!("{} values for {} words of dimension {dim}", vectors.len(), words.len()),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(MetricsError::DuplicateWord(w.clone()));
            }
        }
        Ok(Self {
            words,
            dim,
            vectors,
            index,
        })
    }

    /// Parses `word<TAB>v1<TAB>...<TAB>vD` lines; blank lines are skipped.
    pub fn from_tsv(reader: impl BufRead) -> Result<Self, MetricsError> {
        let mut words = Vec::new();
        let mut vectors = Vec::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let word = fields.next().unwrap_or_default().to_string();
            let vals: Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| MetricsError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            let expected = *dim.get_or_insert(vals.len());
            if vals.is_empty() || vals.len() != expected {
                return Err(MetricsError::Parse {
                    line: i + 1,
                    msg: format!("expected {expected} values, found {}", vals.len()),
                });
            }
            words.push(word);
            vectors.extend(vals);
        }
        Self::new(words, dim.unwrap_or(0), vectors)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        let f = std::fs::File::open(path)?;
        Self::from_tsv(std::io::BufReader::new(f))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    fn lookup_topic<'a>(&'a self, words: &[String]) -> Vec<&'a [f64]> {
        words
            .iter()
            .filter_map(|w| {
                let v = self.get(w);
                if v.is_none() {
                    log::warn!("word {w:?} missing from embedding table; skipped");
                }
                v
            })
            .collect()
    }
}

/// Top `m` distinct words per topic, ranked by relevance at each observed
/// embedding; duplicates are compared case-insensitively and the
/// highest-ranked spelling is kept.
pub fn top_words(model: &DensityModel, corpus: &EmbeddingCorpus, m: usize) -> Result<Vec<Vec<String>>, MetricsError> {
    let tokens = corpus.tokens().ok_or(MetricsError::NoTokens)?;
    let k = model.k();
    let b = model.relevance_at_rows(corpus)?;
    let mut out = Vec::with_capacity(k);
    for topic in 0..k {
        let mut order: Vec<usize> = (0..tokens.len()).collect();
        order.sort_by(|&x, &y| b[y * k + topic].total_cmp(&b[x * k + topic]).then(x.cmp(&y)));
        let mut seen = HashSet::new();
        let mut words = Vec::new();
        for row in order {
            if words.len() == m {
                break;
            }
            if seen.insert(tokens[row].to_lowercase()) {
                words.push(tokens[row].clone());
            }
        }
        out.push(words);
    }
    Ok(out)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// `(1/K) sum_k sum_{i != j} cos(phi_ki, phi_kj)`, not normalized by the
/// number of pairs, so values are only comparable at equal `m`.
pub fn embedded_tc(top: &[Vec<String>], table: &WordEmbeddingTable) -> Result<f64, MetricsError> {
    if top.is_empty() {
        return Err(MetricsError::EmptyTopicList);
    }
    let mut total = 0.0;
    for words in top {
        let vecs = table.lookup_topic(words);
        for (i, a) in vecs.iter().enumerate() {
            for (j, b) in vecs.iter().enumerate() {
                if i != j {
                    total += cosine(a, b);
                }
            }
        }
    }
    Ok(total / top.len() as f64)
}

/// Average Euclidean distance between the mean embeddings of every ordered
/// pair of distinct topics.
pub fn embedded_td(top: &[Vec<String>], table: &WordEmbeddingTable) -> Result<f64, MetricsError> {
    if top.is_empty() {
        return Err(MetricsError::EmptyTopicList);
    }
    let k = top.len();
    if k < 2 {
        return Err(MetricsError::TooFewTopics(k));
    }
    let dim = table.dim();
    let mut means = Vec::with_capacity(k);
    for words in top {
        let vecs = table.lookup_topic(words);
        if vecs.is_empty() {
            return Err(MetricsError::EmptyTopicList);
        }
        let mut mean = vec![0.0; dim];
        for v in &vecs {
            for (m, x) in mean.iter_mut().zip(*v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= vecs.len() as f64);
        means.push(mean);
    }
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            if a != b {
                total += means[a]
                    .iter()
                    .zip(&means[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
            }
        }
    }
    Ok(total / (k * (k - 1)) as f64)
}

/// Vertices of the regular `K`-gon on the unit circle, first at the top,
/// counterclockwise.
pub fn polygon_vertices(k: usize) -> Vec<[f64; 2]> {
    (0..k)
        .map(|i| {
            let angle = PI / 2.0 + 2.0 * PI * i as f64 / k as f64;
            [angle.cos(), angle.sin()]
        })
        .collect()
}

pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// `sum_k B_k v_k` over the polygon vertices.
pub fn membership_coords(b: &[f64]) -> Result<[f64; 2], MetricsError> {
    let sum: f64 = b.iter().sum();
    if b.is_empty() || (sum - 1.0).abs() > SIMPLEX_TOLERANCE || b.iter().any(|&v| !(v >= -SIMPLEX_TOLERANCE)) {
        return Err(MetricsError::NotOnSimplex);
    }
    let mut out = [0.0; 2];
    for (w, v) in b.iter().zip(polygon_vertices(b.len())) {
        out[0] += w * v[0];
        out[1] += w * v[1];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, &[f64])]) -> WordEmbeddingTable {
        let dim = rows[0].1.len();
        WordEmbeddingTable::new(
            rows.iter().map(|r| r.0.to_string()).collect(),
            dim,
            rows.iter().flat_map(|r| r.1.to_vec()).collect(),
        )
        .unwrap()
    }

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tc_identical_and_orthogonal() {
        let t = table(&[("a", &[1.0, 1.0]), ("b", &[2.0, 2.0]), ("c", &[0.5, 0.5])]);
        let tc = embedded_tc(&[words(&["a", "b", "c"])], &t).unwrap();
        assert!((tc - 6.0).abs() < 1e-12);
        let t = table(&[("x", &[1.0, 0.0, 0.0]), ("y", &[0.0, 2.0, 0.0]), ("z", &[0.0, 0.0, 3.0])]);
        assert_eq!(embedded_tc(&[words(&["x", "y", "z"])], &t).unwrap(), 0.0);
    }

    #[test]
    fn td_cases() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let td = embedded_td(&[words(&["a"]), words(&["b"])], &t).unwrap();
        assert!((td - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(embedded_td(&[words(&["a", "b"]), words(&["b", "a"])], &t).unwrap(), 0.0);
        assert!(matches!(
            embedded_td(&[words(&["a"])], &t),
            Err(MetricsError::TooFewTopics(1))
        ));
        assert!(matches!(embedded_tc(&[], &t), Err(MetricsError::EmptyTopicList)));
    }

    #[test]
    fn missing_words_skipped() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[1.0, 0.0])]);
        let tc = embedded_tc(&[words(&["a", "ghost", "b"])], &t).unwrap();
        assert!((tc - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tsv_parsing() {
        let src = "apple\t1.0\t2.0\nbanana\t-1\t0.5\n\n";
        let t = WordEmbeddingTable::from_tsv(src.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("banana").unwrap(), &[-1.0, 0.5]);
        assert!(WordEmbeddingTable::from_tsv("a\t1\t2\nb\t1\n".as_bytes()).is_err());
        assert!(matches!(
            WordEmbeddingTable::from_tsv("a\t1\na\t2\n".as_bytes()),
            Err(MetricsError::DuplicateWord(_))
        ));
    }

    #[test]
    fn coords() {
        let mut e3 = vec![0.0; 7];
        e3[2] = 1.0;
        let c = membership_coords(&e3).unwrap();
        let angle = PI / 2.0 + 4.0 * PI / 7.0;
        assert!((c[0] - angle.cos()).abs() < 1e-15 && (c[1] - angle.sin()).abs() < 1e-15);
        let u = membership_coords(&[1.0 / 7.0; 7]).unwrap();
        assert!(u[0].abs() < 1e-12 && u[1].abs() < 1e-12);
        assert!(matches!(membership_coords(&[0.5, 0.6]), Err(MetricsError::NotOnSimplex)));
        let top = membership_coords(&[1.0, 0.0, 0.0]).unwrap();
        assert!(top[0].abs() < 1e-15 && (top[1] - 1.0).abs() < 1e-15);
    }
}
