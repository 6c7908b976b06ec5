// Timing reconstruction and per-text lookup. The numbers depend on the
// machine; the flop counts do not.

use ttemb::bench::{
    bench_lookup_text, bench_reconstruct, gaussian_table, sample_ids, BenchConfig, CSV_HEADER,
    TEXT_LENGTH,
};
use ttemb::{CompressSpec, CompressedVocab};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = BenchConfig {
        reps: 5,
        warmup: 1,
        seed: 42,
        tokens: 16,
    };

    let spec = CompressSpec::uniform(vec![3, 3, 3], 1, 0.0)?;
    let vocab = CompressedVocab::build(&gaussian_table(32, 27, 1), &spec)?;
    let ids = sample_ids(&vocab, cfg.tokens, cfg.seed);
    let recon = bench_reconstruct(&vocab, &ids, &cfg)?;
    let text = bench_lookup_text(&vocab, TEXT_LENGTH, &cfg)?;

    println!("{CSV_HEADER}");
    println!("{}", recon.csv_row());
    println!("{}", text.csv_row());
    assert_eq!(recon.flops_per_token, 72.0);
    assert_eq!(text.length, 50);

    // A longer chain of cores means more serial products per token.
    let deep = CompressSpec::uniform(vec![2, 2, 2, 2, 2, 2], 2, 0.0)?;
    let v2 = CompressedVocab::build(&gaussian_table(8, 64, 2), &deep)?;
    let tt = v2.get(0).expect("token 0");
    println!(
        "order 6: {} serial products, {} flops",
        tt.chain_length(),
        tt.reconstruction_flops()
    );
    assert_eq!(tt.chain_length(), 5);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
