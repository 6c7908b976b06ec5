// Perplexity before and after compression, and the trade-off score.

use ttemb::metrics::{
    compression_ratios, delta_ln_ppl, delta_log_ppl, ln_perplexity, perplexity_normalized,
    read_logprobs, tradeoff_score, LogProbSequence, MetricsReport,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let before = read_logprobs("-1.20\n-0.35\n-2.10\n-0.80\n".as_bytes())?;
    // Every token half as likely after compression.
    let after = LogProbSequence::new(before.values().iter().map(|v| v - 2f64.ln()).collect())?;

    println!(
        "ln PPL before {:.4}, after {:.4}",
        ln_perplexity(&before)?,
        ln_perplexity(&after)?
    );
    let d = delta_ln_ppl(&before, &after)?;
    assert!((d - 4.0 * 2f64.ln()).abs() < 1e-12);
    assert_eq!(delta_ln_ppl(&after, &before)?, -d);

    let uniform = LogProbSequence::from_probs(&[0.25; 4])?;
    assert!((perplexity_normalized(&uniform)? - 4.0).abs() < 1e-12);

    let r = compression_ratios(27, 9)?;
    assert_eq!(r.eta, 2.0);
    println!("eta {} eta_emb {:.4}", r.eta, r.eta_emb);

    let lg = delta_log_ppl(&before, &after, 10.0)?;
    let score = tradeoff_score(lg, r.eta_emb)?;
    println!("delta lg PPL {lg:.4}, trade-off {score:.4}");

    let report = MetricsReport::compute(&before, &after, 27, 9)?;
    println!("{report}");
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
