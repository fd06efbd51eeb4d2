use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension standardization. Constant dimensions keep scale 1 and are
/// flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Scaler {
    /// Fits on `points`, using the population standard deviation.
    pub fn fit(points: &[&[f64]]) -> Option<Scaler> {
        let dim = points.first()?.len();
        let n = points.len() as f64;
        let mut means = vec![0.0; dim];
        for p in points {
            for (m, x) in means.iter_mut().zip(p.iter()) {
                *m += x / n;
            }
        }
        let mut vars = vec![0.0; dim];
        for p in points {
            for ((v, x), m) in vars.iter_mut().zip(p.iter()).zip(&means) {
                *v += (x - m).powi(2) / n;
            }
        }
        let constant: Vec<bool> = vars.iter().map(|v| *v <= f64::EPSILON * f64::EPSILON).collect();
        let stds = vars
            .iter()
            .zip(&constant)
            .map(|(v, c)| if *c { 1.0 } else { v.sqrt() })
            .collect();
        Some(Scaler { means, stds, constant })
    }

    pub fn transform(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dimension: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
    /// Statistics over every retained vector.
    pub scaling: Option<Scaler>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, vectors: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if let Some((w, v)) = vectors.iter().find(|(_, v)| v.len() != dimension) {
            return Err(Error::Format {
                row: 0,
                message: format!("`{w}` has {} components, expected {dimension}", v.len()),
            });
        }
        let scaling = Scaler::fit(&vectors.values().map(|v| v.as_slice()).collect::<Vec<_>>());
        Ok(EmbeddingTable {
            dimension,
            vectors,
            scaling,
        })
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Text,
    Binary,
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace();
    let parse = |s: Option<&str>| -> Result<usize> {
        s.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Format {
            row: 0,
            message: format!("bad header `{}`", line.trim()),
        })
    };
    let count = parse(it.next())?;
    let dim = parse(it.next())?;
    if dim == 0 {
        return Err(Error::Format {
            row: 0,
            message: "zero dimension".into(),
        });
    }
    Ok((count, dim))
}

/// Reads word2vec text or binary vectors. With `restrict`, only the listed
/// words are kept; the rest are parsed for validation and dropped.
pub fn load_embeddings<R: BufRead>(
    mut reader: R,
    format: EmbeddingFormat,
    restrict: Option<&HashSet<String>>,
) -> Result<EmbeddingTable> {
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let (count, dim) = parse_header(&header)?;
    let keep = |w: &str| restrict.is_none_or(|r| r.contains(w));
    let mut vectors = BTreeMap::new();
    match format {
        EmbeddingFormat::Text => {
            let mut row = 0;
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                row += 1;
                let mut parts = line.split_whitespace();
                let word = parts.next().unwrap_or_default();
                let values: Vec<f64> = parts
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Format {
                        row,
                        message: format!("`{word}`: {e}"),
                    })?;
                if values.len() != dim {
                    return Err(Error::Format {
                        row,
                        message: format!("`{word}` has {} components, expected {dim}", values.len()),
                    });
                }
                if keep(word) {
                    vectors.insert(word.to_string(), values);
                }
            }
        }
        EmbeddingFormat::Binary => {
            let mut buf = vec![0u8; 4 * dim];
            for row in 1..=count {
                let mut word = Vec::new();
                reader.read_until(b' ', &mut word)?;
                if word.last() != Some(&b' ') {
                    return Err(Error::Format {
                        row,
                        message: "truncated word entry".into(),
                    });
                }
                word.pop();
                let start = word.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(word.len());
                let word = String::from_utf8_lossy(&word[start..]).into_owned();
                reader.read_exact(&mut buf).map_err(|_| Error::Format {
                    row,
                    message: format!("`{word}`: fewer than {dim} components"),
                })?;
                if keep(&word) {
                    let v = buf
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                        .collect();
                    vectors.insert(word, v);
                }
            }
        }
    }
    EmbeddingTable::new(dim, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_format() {
        let t = load_embeddings("2 3\ncat 1 2 3\ndog 4 5 6\n".as_bytes(), EmbeddingFormat::Text, None).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("dog"), Some(&[4.0, 5.0, 6.0][..]));
        let s = t.scaling.as_ref().unwrap();
        let scaled: Vec<Vec<f64>> = t.vectors.values().map(|v| s.transform(v)).collect();
        for d in 0..3 {
            assert!(scaled.iter().map(|v| v[d]).sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_reports_row() {
        match load_embeddings("2 3\ncat 1 2 3\ndog 4 5\n".as_bytes(), EmbeddingFormat::Text, None) {
            Err(Error::Format { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binary_format_and_restrict() {
        let mut raw = b"3 2\n".to_vec();
        for (w, v) in [("cat", [1.0f32, 2.0]), ("dog", [3.0, 4.0]), ("emu", [5.0, 6.0])] {
            raw.extend_from_slice(w.as_bytes());
            raw.push(b' ');
            for x in v {
                raw.extend_from_slice(&x.to_le_bytes());
            }
            raw.push(b'\n');
        }
        let keep: HashSet<String> = ["dog", "emu"].iter().map(|s| s.to_string()).collect();
        let t = load_embeddings(&raw[..], EmbeddingFormat::Binary, Some(&keep)).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("emu"), Some(&[5.0, 6.0][..]));
        assert!(t.get("cat").is_none());
        assert!(load_embeddings(&raw[..20], EmbeddingFormat::Binary, None).is_err());
    }

    #[test]
    fn constant_dimension_flagged() {
        let s = Scaler::fit(&[&[1.0, 2.0], &[1.0, 4.0]]).unwrap();
        assert_eq!(s.constant, vec![true, false]);
        assert_eq!(s.transform(&[1.0, 3.0]), vec![0.0, 0.0]);
    }
}
