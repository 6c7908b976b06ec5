// Inference energy of a GPT-2-sized embedding layer: dense, TT at half
// the parameters, and a rank-192 whole-table factorization.

use ttemb::energy::{
    compare, preset, EnergyConfig, Level, Mode, TtBudget, CSV_HEADER, WIRELESS_NJ,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EnergyConfig::new(50257, 768, 50, TtBudget::Params(384), 192);
    let r = compare(&cfg)?;
    println!("{CSV_HEADER}\n{}", r.csv_row());
    assert_eq!(r.e_nu, 38_635_776.0);
    assert!((r.omega_tt - 0.50).abs() < 0.02);
    assert!((r.omega_svd - 0.335).abs() < 0.005);

    // A real shape with its exact parameter count.
    let shaped = EnergyConfig {
        tt: TtBudget::Cores {
            shape: vec![8, 8, 12],
            ranks: vec![1, 4, 4, 1],
        },
        ..cfg.clone()
    };
    let r2 = compare(&shaped)?;
    println!(
        "(8,8,12) ranks (1,4,4,1): p={} omega_tt={:.4}",
        r2.p(),
        r2.omega_tt
    );
    assert_eq!(r2.p(), 208);

    // Counting reconstruction work per token instead of the formula's p.
    let exact = compare(&shaped.clone().with_mode(Mode::ExactCount))?;
    println!("exact-count compute term: {} pJ", exact.e_tau_tt);
    assert!(exact.e_tau_tt > r2.e_tau_tt);

    // Device figures instead of the 5:1 default.
    let (nu, tau) = preset("pi5-mid")?;
    let pi = compare(&cfg.clone().with_costs(nu, tau))?;
    println!("pi5 mid: nu={nu} tau={tau} omega_tt={:.4}", pi.omega_tt);

    // Shipping the table once over a wireless link.
    let (dense, tt, _) = r.download_nj(Level::Mid.pick(WIRELESS_NJ));
    println!("download: dense {:.3e} nJ, tt {:.3e} nJ", dense, tt);
    assert_eq!(dense, 2.0 * tt);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
