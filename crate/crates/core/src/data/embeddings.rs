use std::collections::HashSet;
use std::io::BufRead;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Range of the uniform initializer for rows absent from the file.
pub const INIT_RANGE: f64 = 0.1;

/// Reads `token v₁ … v_dim` lines into a `[vocab.len(), dim]` matrix.
/// Rows not covered by the file are drawn uniformly from ±`INIT_RANGE`
/// using `seed`; the first occurrence of a repeated token wins.
pub fn load_embeddings<R: BufRead>(reader: R, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<(Tensor, usize)> {
    if dim == 0 {
        return Err(Error::Config("embedding dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = (0..vocab.len() * dim)
        .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
        .collect();
    let mut seen: HashSet<usize> = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Data(format!("line {}: bad number `{f}`", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::EmbeddingDim {
                line: lineno + 1,
                expected: dim,
                found: values.len(),
            });
        }
        let Some(id) = vocab.get(token) else { continue };
        if !seen.insert(id) {
            log::warn!("line {}: duplicate embedding for `{token}` ignored", lineno + 1);
            continue;
        }
        data[id * dim..(id + 1) * dim].copy_from_slice(&values);
    }
    Ok((Tensor::matrix(vocab.len(), dim, data)?, seen.len()))
}
