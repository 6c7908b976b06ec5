// The whole-table low-rank baseline next to per-token TT at about the
// same parameter count.

use ttemb::baseline::compress_table;
use ttemb::bench::{compare_errors, gaussian_table, matched_rank};
use ttemb::CompressSpec;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let table = gaussian_table(8, 6, 3);
    let lr = compress_table(&table, 3)?;
    println!(
        "rank {}: {} params, {} flops per row lookup",
        lr.rank(),
        lr.param_count(),
        lr.lookup_flops()
    );
    assert_eq!(lr.param_count(), 3 * (8 + 6));
    assert_eq!(lr.lookup_flops(), 2 * 6 * 3 - 6);

    let dense = lr.reconstruct_dense();
    let row = lr.lookup_row(5)?;
    for (a, b) in row.iter().zip(dense.row(5)) {
        assert!((a - b).abs() < 1e-12);
    }

    // Full rank reproduces the table.
    let full = compress_table(&table, 6)?;
    for (a, b) in full.lookup_row(2)?.iter().zip(table.row(2)) {
        assert!((a - b).abs() < 1e-9);
    }

    // Equal budgets on a wider table; both errors are reported, neither is
    // expected to win on Gaussian data.
    let wide = gaussian_table(64, 16, 4);
    let spec = CompressSpec::uniform(vec![4, 4], 2, 0.0)?;
    let cmp = compare_errors(&wide, &spec)?;
    assert_eq!(cmp.svd_rank, matched_rank(64, 16, cmp.tt_params));
    println!(
        "TT {} params, mean rel error {:.3}; SVD rank {} ({} params), mean rel error {:.3}",
        cmp.tt_params, cmp.tt_mean_rel_error, cmp.svd_rank, cmp.svd_params, cmp.svd_mean_rel_error
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
