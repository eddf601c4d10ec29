use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector, TextItem};

/// Precomputed vectors keyed by id.
///
/// File format: a header line `dim=<d>`, then one `id<TAB>v1,v2,...` row
/// per vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorStore {
    pub dim: usize,
    pub vectors: HashMap<String, EmbeddingVector>,
    /// Label used in provider ids, usually the file name.
    pub name: String,
}

impl VectorStore {
    pub fn read<R: Read>(reader: R, name: &str) -> Result<Self, EmbeddingError> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, Ok(l))) if l.trim().is_empty() => continue,
                Some((_, Ok(l))) => break l,
                Some((_, Err(e))) => return Err(EmbeddingError::Io(e.to_string())),
                None => return Err(EmbeddingError::Io(format!("{name}: missing `dim=` header"))),
            }
        };
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse().ok())
            .filter(|d| *d > 0)
            .ok_or_else(|| EmbeddingError::Io(format!("{name}: bad header `{header}`")))?;
        let mut vectors = HashMap::new();
        for (i, line) in lines {
            let line = line.map_err(|e| EmbeddingError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| EmbeddingError::Io(format!("{name}:{}: expected `id<TAB>values`", i + 1)))?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| EmbeddingError::Io(format!("{name}:{}: {e}", i + 1)))?;
            if values.len() != dim {
                return Err(EmbeddingError::DimensionMismatch { expected: dim, found: values.len() });
            }
            vectors.insert(id.to_owned(), EmbeddingVector::new(values)?);
        }
        Ok(VectorStore { dim, vectors, name: name.to_owned() })
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let f = std::fs::File::open(path).map_err(|e| EmbeddingError::Io(format!("{}: {e}", path.display())))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        VectorStore::read(f, &name)
    }

    /// Write rows sorted by id.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dim={}", self.dim)?;
        let mut ids: Vec<&String> = self.vectors.keys().collect();
        ids.sort();
        for id in ids {
            let vals: Vec<String> = self.vectors[id].values().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{id}\t{}", vals.join(","))?;
        }
        w.flush()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }
}

impl EmbeddingProvider for VectorStore {
    fn id(&self) -> String {
        format!("store:{}:dim={}", self.name, self.dim)
    }

    fn embed(&self, items: &[TextItem]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        items
            .iter()
            .map(|it| {
                self.vectors
                    .get(&it.id)
                    .cloned()
                    .ok_or_else(|| EmbeddingError::ProviderUnavailable(format!("no stored vector for id `{}`", it.id)))
            })
            .collect()
    }
}
