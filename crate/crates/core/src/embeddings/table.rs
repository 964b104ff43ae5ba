use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::tokenize;

/// Token vectors of a single fixed dimension. Immutable once built; lookups
/// of unknown tokens fall back to the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

/// A pooled text encoding. `oov` is set when no token of the text was in the
/// table, in which case `vector` is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub vector: Vec<f64>,
    pub oov: bool,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dimension,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        })
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: &[f64]) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: vector.len(),
            });
        }
        if self.index.contains_key(&token) {
            return Err(Error::DuplicateToken(token));
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.data[i * self.dimension..(i + 1) * self.dimension])
    }

    /// Mean of the in-vocabulary token vectors of `text`, scaled to unit
    /// length. Texts with no known token encode as the zero vector.
    pub fn encode_text(&self, text: &str) -> Encoding {
        let mut sum = vec![0.0; self.dimension];
        let mut hits = 0usize;
        for tok in tokenize(text) {
            if let Some(v) = self.get(&tok) {
                hits += 1;
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
            }
        }
        if hits == 0 {
            return Encoding { vector: sum, oov: true };
        }
        for s in sum.iter_mut() {
            *s /= hits as f64;
        }
        let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for s in sum.iter_mut() {
                *s /= norm;
            }
        }
        Encoding { vector: sum, oov: false }
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        self.encode_text(text).vector
    }

    /// Reads the text format: a `<token_count> <dimension>` header followed
    /// by one `token v1 .. vd` row per token. Reported row numbers are file
    /// line numbers.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let bad = |row: usize, message: String| Error::EmbeddingFormat { row, message };
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "missing header".into()))?;
        let header = header.map_err(|e| bad(1, e.to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| bad(1, format!("header: {e}")));
        if fields.len() != 2 {
            return Err(bad(1, format!("header must be `<count> <dimension>`, got `{header}`")));
        }
        let count = parse_usize(fields[0])?;
        let dimension = parse_usize(fields[1])?;
        if dimension == 0 {
            return Err(bad(1, "dimension must be positive".into()));
        }
        let mut table = EmbeddingTable::new(dimension)?;
        let mut values = Vec::with_capacity(dimension);
        for (idx, line) in lines {
            let row = idx + 1;
            let line = line.map_err(|e| bad(row, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if table.len() == count {
                return Err(bad(row, format!("header declares {count} tokens but more rows follow")));
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line has a field");
            values.clear();
            for p in parts {
                values.push(
                    p.parse::<f64>()
                        .map_err(|e| bad(row, format!("value `{p}`: {e}")))?,
                );
            }
            if values.len() != dimension {
                return Err(bad(
                    row,
                    format!("expected {dimension} values, found {}", values.len()),
                ));
            }
            table.insert(token, &values)?;
        }
        if table.len() != count {
            return Err(bad(
                table.len() + 2,
                format!("header declares {count} tokens, file has {}", table.len()),
            ));
        }
        Ok(table)
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load(BufReader::new(f))
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<writer>", e);
        writeln!(w, "{} {}", self.len(), self.dimension).map_err(io)?;
        for (i, tok) in self.tokens.iter().enumerate() {
            write!(w, "{tok}").map_err(io)?;
            for x in &self.data[i * self.dimension..(i + 1) * self.dimension] {
                write!(w, " {x}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.save(BufWriter::new(f))
    }
}

/// Euclidean distance. On unit vectors this orders pairs exactly as cosine
/// distance does.
pub fn distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(squared_distance(u, v).sqrt())
}

pub(crate) fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in u.iter().zip(v) {
        let d = a - b;
        s += d * d;
    }
    s
}
