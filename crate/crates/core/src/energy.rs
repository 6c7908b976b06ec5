//! Analytic inference-energy estimates for dense, TT-compressed and
//! low-rank-SVD embedding layers.
//!
//! For an input of `l` tokens over a `V x d` table, with memory cost `nu`
//! and compute cost `tau` per float32:
//!
//! ```text
//! dense   E_nu   = nu (dV + ld)                  E_tau   = 0
//! TT      E'_nu  = nu (Vp + lp + ld)             E'_tau  = tau p
//! SVD     E''_nu = nu [k (V + 2d + l + 1) + ld]  E''_tau = tau (2ldk - ld + kd)
//! omega = (E_nu' + E_tau') / (E_nu + E_tau)
//! ```
//!
//! `p` is the per-token TT parameter count. In [`Mode::ExactCount`] the TT
//! compute term becomes `tau * l * flops`, with `flops` the reconstruction
//! cost of one token.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tt::{param_count_for, reconstruction_flops_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    PaperFormula,
    ExactCount,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::PaperFormula => "paper-formula",
            Mode::ExactCount => "exact-count",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-formula" | "formula" => Ok(Mode::PaperFormula),
            "exact-count" | "exact" => Ok(Mode::ExactCount),
            _ => Err(Error::Parse(format!(
                "unknown energy mode {s:?} (expected paper-formula or exact-count)"
            ))),
        }
    }
}

/// How the per-token TT size is given.
#[derive(Debug, Clone, PartialEq)]
pub enum TtBudget {
    /// A bare parameter count. Enough for the formula mode only.
    Params(usize),
    /// `N` modes of size `I` with every interior rank `r`.
    Uniform {
        order: usize,
        mode: usize,
        rank: usize,
    },
    /// A concrete shape and rank vector.
    Cores {
        shape: Vec<usize>,
        ranks: Vec<usize>,
    },
}

impl TtBudget {
    /// The `p` that enters the formulas. A uniform budget uses `N I r^2`,
    /// which counts the two boundary cores as if they had rank `r` on both
    /// sides; the other forms are exact.
    pub fn formula_params(&self) -> usize {
        match self {
            TtBudget::Params(p) => *p,
            TtBudget::Uniform { order, mode, rank } => order * mode * rank * rank,
            TtBudget::Cores { shape, ranks } => param_count_for(shape, ranks),
        }
    }

    /// Exact `sum_k r_{k-1} I_k r_k`, when the budget pins it down.
    pub fn exact_params(&self) -> Option<usize> {
        match self {
            TtBudget::Params(p) => Some(*p),
            TtBudget::Uniform { .. } | TtBudget::Cores { .. } => {
                let (shape, ranks) = self.shape_and_ranks()?;
                Some(param_count_for(&shape, &ranks))
            }
        }
    }

    /// Reconstruction flops for one token, when shape and ranks are known.
    pub fn reconstruction_flops(&self) -> Option<u64> {
        let (shape, ranks) = self.shape_and_ranks()?;
        Some(reconstruction_flops_for(&shape, &ranks))
    }

    fn shape_and_ranks(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match self {
            TtBudget::Params(_) => None,
            TtBudget::Uniform { order, mode, rank } => {
                let mut ranks = vec![*rank; order + 1];
                ranks[0] = 1;
                ranks[*order] = 1;
                Some((vec![*mode; *order], ranks))
            }
            TtBudget::Cores { shape, ranks } => Some((shape.clone(), ranks.clone())),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TtBudget::Params(_) => Ok(()),
            TtBudget::Uniform { order, mode, rank } => {
                if *order == 0 || *mode == 0 || *rank == 0 {
                    return Err(Error::InvalidEnergyConfig(
                        "uniform TT budget needs order, mode size and rank >= 1".into(),
                    ));
                }
                Ok(())
            }
            TtBudget::Cores { shape, ranks } => {
                if shape.is_empty() || ranks.len() != shape.len() + 1 {
                    return Err(Error::InvalidEnergyConfig(format!(
                        "shape {shape:?} needs {} ranks, got {}",
                        shape.len() + 1,
                        ranks.len()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Per-float32 costs in pJ, taken from a range table of device figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceCosts {
    pub add: (f64, f64),
    pub mult: (f64, f64),
    pub memory: (f64, f64),
}

pub const RASPBERRY_PI_5: DeviceCosts = DeviceCosts {
    add: (1.0, 2.5),
    mult: (1.2, 3.0),
    memory: (70.0, 260.0),
};

pub const A100: DeviceCosts = DeviceCosts {
    add: (5.0, 12.0),
    mult: (6.0, 15.0),
    memory: (100.0, 450.0),
};

/// Network transfer cost per float32, nJ.
pub const WIRED_NJ: (f64, f64) = (50.0, 350.0);
pub const WIRELESS_NJ: (f64, f64) = (400.0, 6000.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Low,
    Mid,
    High,
}

impl Level {
    pub fn pick(self, range: (f64, f64)) -> f64 {
        match self {
            Level::Low => range.0,
            Level::Mid => (range.0 + range.1) / 2.0,
            Level::High => range.1,
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Level::Low),
            "mid" => Ok(Level::Mid),
            "high" => Ok(Level::High),
            _ => Err(Error::Parse(format!("unknown level {s:?}"))),
        }
    }
}

impl DeviceCosts {
    /// `(nu, tau)`: memory cost, and the mean of add and mult as the cost
    /// of one scalar op.
    pub fn costs(&self, level: Level) -> (f64, f64) {
        let tau = (level.pick(self.add) + level.pick(self.mult)) / 2.0;
        (level.pick(self.memory), tau)
    }
}

/// `"pi5-mid"`, `"a100:low"` and so on. A bare device name means `mid`.
pub fn preset(name: &str) -> Result<(f64, f64)> {
    let (device, level) = name.split_once([':', '-']).unwrap_or((name, "mid"));
    let costs = match device {
        "pi5" | "rpi5" => RASPBERRY_PI_5,
        "a100" => A100,
        _ => {
            return Err(Error::Parse(format!(
                "unknown device {device:?} (expected pi5 or a100)"
            )))
        }
    };
    Ok(costs.costs(level.parse()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConfig {
    pub nu: f64,
    pub tau: f64,
    pub vocab: usize,
    pub dim: usize,
    pub length: usize,
    pub tt: TtBudget,
    pub svd_rank: usize,
    pub mode: Mode,
}

impl EnergyConfig {
    /// Default memory and compute costs: a 5:1 ratio with `nu = 1`.
    pub const DEFAULT_NU: f64 = 1.0;
    pub const DEFAULT_TAU: f64 = 0.2;

    pub fn new(vocab: usize, dim: usize, length: usize, tt: TtBudget, svd_rank: usize) -> Self {
        Self {
            nu: Self::DEFAULT_NU,
            tau: Self::DEFAULT_TAU,
            vocab,
            dim,
            length,
            tt,
            svd_rank,
            mode: Mode::PaperFormula,
        }
    }

    pub fn with_costs(mut self, nu: f64, tau: f64) -> Self {
        self.nu = nu;
        self.tau = tau;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("nu", self.nu), ("tau", self.tau)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidEnergyConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        self.tt.validate()?;
        if self.mode == Mode::ExactCount && self.tt.reconstruction_flops().is_none() {
            return Err(Error::InvalidEnergyConfig(
                "exact-count mode needs a TT shape and ranks, not a bare parameter count".into(),
            ));
        }
        Ok(())
    }

    fn p(&self) -> f64 {
        match self.mode {
            Mode::PaperFormula => self.tt.formula_params() as f64,
            Mode::ExactCount => self.tt.exact_params().expect("validated") as f64,
        }
    }
}

/// `(E_nu, E_tau)` for the uncompressed table.
pub fn baseline_energy(cfg: &EnergyConfig) -> (f64, f64) {
    let (v, d, l) = (cfg.vocab as f64, cfg.dim as f64, cfg.length as f64);
    (cfg.nu * (d * v + l * d), 0.0)
}

/// `(E'_nu, E'_tau)` for the TT store.
pub fn tt_energy(cfg: &EnergyConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let (v, d, l) = (cfg.vocab as f64, cfg.dim as f64, cfg.length as f64);
    let p = cfg.p();
    let e_nu = cfg.nu * (v * p + l * p + l * d);
    let e_tau = match cfg.mode {
        Mode::PaperFormula => cfg.tau * p,
        Mode::ExactCount => cfg.tau * l * cfg.tt.reconstruction_flops().expect("validated") as f64,
    };
    Ok((e_nu, e_tau))
}

/// `(E''_nu, E''_tau, clamped)` for the rank-`k` factorization. The compute
/// term is clamped at zero when it would go negative, and the flag says so.
pub fn svd_energy(cfg: &EnergyConfig) -> (f64, f64, bool) {
    let (v, d, l) = (cfg.vocab as f64, cfg.dim as f64, cfg.length as f64);
    let k = cfg.svd_rank as f64;
    let e_nu = cfg.nu * (k * (v + 2.0 * d + l + 1.0) + l * d);
    let raw = cfg.tau * (2.0 * l * d * k - l * d + k * d);
    (e_nu, raw.max(0.0), raw < 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub config: EnergyConfig,
    pub p_formula: usize,
    pub p_exact: Option<usize>,
    pub e_nu: f64,
    pub e_tau: f64,
    pub e_nu_tt: f64,
    pub e_tau_tt: f64,
    pub e_nu_svd: f64,
    pub e_tau_svd: f64,
    pub svd_tau_clamped: bool,
    pub omega_tt: f64,
    pub omega_svd: f64,
}

pub const CSV_HEADER: &str =
    "V,d,l,p,k,nu,tau,mode,E_nu,E_tau,E_nu_tt,E_tau_tt,E_nu_svd,E_tau_svd,omega_tt,omega_svd";

pub fn compare(cfg: &EnergyConfig) -> Result<EnergyReport> {
    cfg.validate()?;
    let (e_nu, e_tau) = baseline_energy(cfg);
    let (e_nu_tt, e_tau_tt) = tt_energy(cfg)?;
    let (e_nu_svd, e_tau_svd, clamped) = svd_energy(cfg);
    let base = e_nu + e_tau;
    let ratio = |a: f64, b: f64| if base > 0.0 { (a + b) / base } else { 0.0 };
    Ok(EnergyReport {
        config: cfg.clone(),
        p_formula: cfg.tt.formula_params(),
        p_exact: cfg.tt.exact_params(),
        e_nu,
        e_tau,
        e_nu_tt,
        e_tau_tt,
        e_nu_svd,
        e_tau_svd,
        svd_tau_clamped: clamped,
        omega_tt: ratio(e_nu_tt, e_tau_tt),
        omega_svd: ratio(e_nu_svd, e_tau_svd),
    })
}

impl EnergyReport {
    /// The `p` actually used for the TT rows.
    pub fn p(&self) -> usize {
        match self.config.mode {
            Mode::PaperFormula => self.p_formula,
            Mode::ExactCount => self.p_exact.unwrap_or(self.p_formula),
        }
    }

    pub fn csv_row(&self) -> String {
        let c = &self.config;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.vocab,
            c.dim,
            c.length,
            self.p(),
            c.svd_rank,
            c.nu,
            c.tau,
            c.mode,
            self.e_nu,
            self.e_tau,
            self.e_nu_tt,
            self.e_tau_tt,
            self.e_nu_svd,
            self.e_tau_svd,
            self.omega_tt,
            self.omega_svd
        )
    }

    /// One-time download of the whole table, nJ: `(dense, tt, svd)`.
    pub fn download_nj(&self, per_float_nj: f64) -> (f64, f64, f64) {
        let c = &self.config;
        let dense = (c.vocab * c.dim) as f64;
        let tt = (c.vocab * self.p()) as f64;
        let svd = (c.svd_rank * (c.vocab + c.dim)) as f64;
        (dense * per_float_nj, tt * per_float_nj, svd * per_float_nj)
    }
}

impl fmt::Display for EnergyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "V={}", c.vocab)?;
        writeln!(f, "d={}", c.dim)?;
        writeln!(f, "l={}", c.length)?;
        writeln!(f, "k={}", c.svd_rank)?;
        writeln!(f, "nu={}", c.nu)?;
        writeln!(f, "tau={}", c.tau)?;
        writeln!(f, "mode={}", c.mode)?;
        writeln!(f, "p={}", self.p())?;
        writeln!(f, "p_formula={}", self.p_formula)?;
        match self.p_exact {
            Some(p) => writeln!(f, "p_exact={p}")?,
            None => writeln!(f, "p_exact=unknown")?,
        }
        writeln!(f, "E_nu={}", self.e_nu)?;
        writeln!(f, "E_tau={}", self.e_tau)?;
        writeln!(f, "E_nu_tt={}", self.e_nu_tt)?;
        writeln!(f, "E_tau_tt={}", self.e_tau_tt)?;
        writeln!(f, "E_nu_svd={}", self.e_nu_svd)?;
        writeln!(f, "E_tau_svd={}", self.e_tau_svd)?;
        writeln!(f, "E_tau_svd_clamped={}", self.svd_tau_clamped)?;
        writeln!(f, "omega_tt={}", self.omega_tt)?;
        write!(f, "omega_svd={}", self.omega_svd)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn gpt2(tt: TtBudget, k: usize) -> EnergyConfig {
        EnergyConfig::new(50257, 768, 50, tt, k)
    }

    #[test]
    fn dense_energy() {
        let cfg = gpt2(TtBudget::Params(384), 192);
        assert_eq!(baseline_energy(&cfg), (38_635_776.0, 0.0));
        let mut empty = cfg.clone();
        empty.length = 0;
        assert_eq!(baseline_energy(&empty).0, 50257.0 * 768.0);
        let free = cfg.with_costs(0.0, 0.2);
        assert_eq!(baseline_energy(&free).0, 0.0);
    }

    #[test]
    fn tt_half_budget() {
        let cfg = gpt2(TtBudget::Params(384), 192);
        let (e_nu, e_tau) = tt_energy(&cfg).unwrap();
        // 50257 * 384 + 50 * 384 + 50 * 768
        assert_eq!(e_nu, 19_298_688.0 + 19_200.0 + 38_400.0);
        assert!((e_tau - 76.8).abs() < 1e-9);
        let r = compare(&cfg).unwrap();
        assert!((r.omega_tt - 0.501).abs() < 5e-4, "{}", r.omega_tt);
    }

    #[test]
    fn tt_full_budget_without_input_is_dense() {
        let mut cfg = gpt2(TtBudget::Params(768), 192);
        cfg.length = 0;
        assert_eq!(tt_energy(&cfg).unwrap().0, baseline_energy(&cfg).0);
    }

    #[test]
    fn tt_real_shape() {
        let cfg = gpt2(
            TtBudget::Cores {
                shape: vec![8, 8, 12],
                ranks: vec![1, 4, 4, 1],
            },
            192,
        );
        let r = compare(&cfg).unwrap();
        assert_eq!(r.p(), 208);
        assert!((r.omega_tt - 0.272).abs() < 5e-4, "{}", r.omega_tt);
    }

    #[test]
    fn svd_reference_numbers() {
        let cfg = gpt2(TtBudget::Params(384), 192);
        let (e_nu, e_tau, clamped) = svd_energy(&cfg);
        assert_eq!(e_nu, 9_992_448.0);
        assert!((e_tau - 2_970_931.2).abs() < 1e-6);
        assert!(!clamped);
        let r = compare(&cfg).unwrap();
        assert!((r.omega_svd - (9_992_448.0 + 2_970_931.2) / 38_635_776.0).abs() < 1e-12);
        assert!((r.omega_svd - 0.335).abs() < 5e-3);
    }

    #[test]
    fn tt_cheaper_than_svd_at_matched_storage() {
        // both store about half the dense table: 384 * V and k (V + d)
        let k = 50257 * 384 / (50257 + 768);
        assert_eq!(k, 378);
        let r = compare(&gpt2(TtBudget::Params(384), k)).unwrap();
        assert!(
            r.omega_tt < r.omega_svd,
            "{} vs {}",
            r.omega_tt,
            r.omega_svd
        );
    }

    #[test]
    fn svd_degenerate_ranks() {
        let mut cfg = gpt2(TtBudget::Params(384), 0);
        let (e_nu, e_tau, clamped) = svd_energy(&cfg);
        assert_eq!(e_nu, 50.0 * 768.0);
        assert_eq!(e_tau, 0.0);
        assert!(clamped);
        cfg.svd_rank = 192;
        cfg.length = 0;
        let (_, e_tau, _) = svd_energy(&cfg);
        assert!((e_tau - 0.2 * 192.0 * 768.0).abs() < 1e-9);
    }

    #[test]
    fn no_compression_no_saving() {
        let cfg = EnergyConfig::new(1000, 64, 50, TtBudget::Params(64), 64);
        let r = compare(&cfg).unwrap();
        assert!(r.omega_tt >= 1.0);
        assert!(r.omega_svd >= 1.0);
    }

    #[test]
    fn heavier_memory_cost_pulls_toward_memory_only_ratio() {
        let cfg = gpt2(TtBudget::Params(384), 192);
        let limit_tt = tt_energy(&cfg).unwrap().0 / baseline_energy(&cfg).0;
        let limit_svd = svd_energy(&cfg).0 / baseline_energy(&cfg).0;
        let a = compare(&cfg).unwrap();
        let b = compare(&cfg.clone().with_costs(2.0, 0.2)).unwrap();
        assert!((b.omega_tt - limit_tt).abs() <= (a.omega_tt - limit_tt).abs());
        assert!((b.omega_svd - limit_svd).abs() <= (a.omega_svd - limit_svd).abs());
    }

    #[test]
    fn uniform_budget_reports_boundary_gap() {
        let cfg = gpt2(
            TtBudget::Uniform {
                order: 3,
                mode: 8,
                rank: 4,
            },
            192,
        );
        let r = compare(&cfg).unwrap();
        assert_eq!(r.p_formula, 3 * 8 * 16);
        assert_eq!(r.p_exact, Some(2 * 8 * 4 + 8 * 16));
        let exact = compare(&cfg.with_mode(Mode::ExactCount)).unwrap();
        assert_eq!(exact.p(), 192);
        assert!(exact.to_string().contains("p_formula=384"));
    }

    #[test]
    fn exact_count_scales_compute_with_length() {
        let cfg = EnergyConfig::new(
            10,
            27,
            4,
            TtBudget::Cores {
                shape: vec![3, 3, 3],
                ranks: vec![1, 1, 1, 1],
            },
            2,
        )
        .with_mode(Mode::ExactCount);
        let (_, e_tau) = tt_energy(&cfg).unwrap();
        assert!((e_tau - 0.2 * 4.0 * 72.0).abs() < 1e-12);
        let bare = EnergyConfig::new(10, 27, 4, TtBudget::Params(9), 2).with_mode(Mode::ExactCount);
        assert!(matches!(compare(&bare), Err(Error::InvalidEnergyConfig(_))));
    }

    #[test]
    fn presets() {
        let (nu, tau) = preset("pi5:low").unwrap();
        assert_eq!(nu, 70.0);
        assert!((tau - 1.1).abs() < 1e-12);
        assert_eq!(preset("a100:high").unwrap(), (450.0, 13.5));
        assert_eq!(preset("a100-high").unwrap(), (450.0, 13.5));
        let (nu, tau) = preset("pi5").unwrap();
        assert_eq!(nu, 165.0);
        assert!((tau - 1.925).abs() < 1e-12);
        assert!(preset("tpu").is_err());
        assert!(preset("pi5:max").is_err());
    }

    #[test]
    fn csv_and_download() {
        let r = compare(&gpt2(TtBudget::Params(384), 192)).unwrap();
        assert_eq!(
            r.csv_row().split(',').count(),
            CSV_HEADER.split(',').count()
        );
        assert!(r
            .csv_row()
            .starts_with("50257,768,50,384,192,1,0.2,paper-formula,38635776,"));
        let (dense, tt, _) = r.download_nj(Level::Low.pick(WIRED_NJ));
        assert_eq!(dense, 50257.0 * 768.0 * 50.0);
        assert_eq!(tt * 2.0, dense);
    }

    #[test]
    fn rejects_negative_costs() {
        let cfg = gpt2(TtBudget::Params(1), 1).with_costs(-1.0, 0.2);
        assert!(compare(&cfg).is_err());
        let cfg = gpt2(TtBudget::Params(1), 1).with_costs(1.0, f64::NAN);
        assert!(compare(&cfg).is_err());
    }

    proptest! {
        #[test]
        fn reports_are_finite_and_monotone(
            v in 1usize..100_000,
            d in 1usize..4096,
            l in 0usize..2048,
            p in 0usize..4096,
            k in 0usize..1024,
            nu in 0.0f64..500.0,
            tau in 0.0f64..50.0,
        ) {
            let cfg = EnergyConfig::new(v, d, l, TtBudget::Params(p), k).with_costs(nu, tau);
            let r = compare(&cfg).unwrap();
            for x in [r.e_nu, r.e_tau, r.e_nu_tt, r.e_tau_tt, r.e_nu_svd, r.e_tau_svd, r.omega_tt, r.omega_svd] {
                prop_assert!(x.is_finite() && x >= 0.0);
            }
            let more_p = compare(&EnergyConfig { tt: TtBudget::Params(p + 1), ..cfg.clone() }).unwrap();
            prop_assert!(more_p.omega_tt >= r.omega_tt);
            let more_k = compare(&EnergyConfig { svd_rank: k + 1, ..cfg }).unwrap();
            prop_assert!(more_k.omega_svd >= r.omega_svd);
        }
    }
}
