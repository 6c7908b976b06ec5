// Compress a small embedding table, check the per-row error bound and
// the parameter savings, then round-trip it through TTE1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttemb::format::DenseTable;
use ttemb::planner::{plan, ShapePolicy};
use ttemb::{CompressSpec, CompressedVocab};

/// Rows built as a sum of two separable 4 x 4 x 4 terms, plus a little noise.
fn structured_table(rows: usize, seed: u64) -> DenseTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(rows * 64);
    for _ in 0..rows {
        let f: Vec<[f64; 4]> = (0..6)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect();
        for k in 0..4 {
            for j in 0..4 {
                for i in 0..4 {
                    let v = f[0][i] * f[1][j] * f[2][k] + f[3][i] * f[4][j] * f[5][k];
                    data.push(v + 1e-3 * rng.random_range(-1.0..1.0));
                }
            }
        }
    }
    DenseTable::new(rows, 64, data).expect("rows x 64")
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let table = structured_table(100, 1);

    let shape = plan(64, &ShapePolicy::TargetOrder(3), 1, 0.0)?.shape;
    assert_eq!(shape, vec![4, 4, 4]);
    let spec = CompressSpec::unbounded(shape, 0.05)?;
    let vocab = CompressedVocab::build(&table, &spec)?;

    println!(
        "{} tokens, {} params instead of {}, eta {:.3}, eta_emb {:.3}",
        vocab.len(),
        vocab.total_params(),
        vocab.dense_params(),
        vocab.compression_ratio(),
        vocab.embedding_reduction()
    );
    // at most rank 2 per bond: 4*2 + 2*4*2 + 2*4 = 32 scalars per token
    assert!(vocab.total_params() <= 100 * 32);
    assert!(vocab.compression_ratio() >= 1.0);

    for (i, row) in table.iter_rows().enumerate() {
        let back = vocab.lookup(i as u64)?;
        let err: f64 = row
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = row.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err <= 0.05 * norm);
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("vocab.tte1");
    vocab.save(&path)?;
    let loaded = CompressedVocab::load(&path)?;
    println!("TTE1 file: {} bytes", std::fs::metadata(&path)?.len());
    assert_eq!(loaded.len(), 100);
    assert_eq!(loaded.total_params(), vocab.total_params());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
