// A deployed vocabulary changing over time: tokens are added and removed
// in place, saved atomically, and read back with random access.

use ttemb::vocab::IndexedFile;
use ttemb::{CompressSpec, CompressedVocab, Error, SharedVocab};

fn embedding(seed: u64) -> Vec<f64> {
    (0..24).map(|i| ((seed * 31 + i) as f64).sin()).collect()
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = CompressSpec::unbounded(vec![2, 3, 4], 0.1)?;
    let mut vocab = CompressedVocab::new(spec);
    for id in 0..10 {
        vocab.add_token(id, &embedding(id))?;
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("vocab.tte1");
    vocab.save(&path)?;
    let original = std::fs::read(&path)?;

    // A new token arrives, then is withdrawn: the file comes back byte for byte.
    vocab.add_token(50258, &embedding(50258))?;
    vocab.save(&path)?;
    vocab.remove_token(50258)?;
    vocab.save(&path)?;
    assert_eq!(std::fs::read(&path)?, original);

    match vocab.remove_token(50258) {
        Err(Error::TokenNotFound(id)) => println!("token {id} already gone"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        vocab.add_token(3, &embedding(3)),
        Err(Error::DuplicateToken(3))
    ));

    // Random access without loading every payload.
    let mut file = IndexedFile::open(&path)?;
    let row = file.lookup(7)?;
    let x = embedding(7);
    let err: f64 = x
        .iter()
        .zip(&row)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    println!("token 7 from disk: relative error {:.2e}", err / norm);
    assert!(err <= 0.1 * norm + 1e-6);

    // Readers keep a consistent snapshot while a writer publishes changes.
    let shared = SharedVocab::new(vocab);
    let before = shared.snapshot();
    shared.update(|v| v.add_token(99, &embedding(99)))?;
    assert_eq!(before.len(), 10);
    assert_eq!(shared.snapshot().len(), 11);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
