//! Perplexity and compression metrics.
//!
//! `ln PPL(S) = -sum_i ln p(x_i | x_<i)`, taken over the whole sequence
//! without dividing by its length. [`ln_perplexity_normalized`] is the
//! per-token average for when a length-independent number is wanted.

use std::io::BufRead;

use crate::error::{Error, Result};

/// Per-token natural-log probabilities, each finite and `<= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbSequence {
    values: Vec<f64>,
}

impl LogProbSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v > 0.0)
        {
            return Err(Error::InvalidLogProb { index, value });
        }
        Ok(Self { values })
    }

    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        Self::new(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn non_empty(&self) -> Result<&[f64]> {
        if self.values.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(&self.values)
    }
}

pub fn ln_perplexity(s: &LogProbSequence) -> Result<f64> {
    Ok(-s.non_empty()?.iter().sum::<f64>())
}

pub fn perplexity(s: &LogProbSequence) -> Result<f64> {
    Ok(ln_perplexity(s)?.exp())
}

pub fn ln_perplexity_normalized(s: &LogProbSequence) -> Result<f64> {
    Ok(ln_perplexity(s)? / s.len() as f64)
}

pub fn perplexity_normalized(s: &LogProbSequence) -> Result<f64> {
    Ok(ln_perplexity_normalized(s)?.exp())
}

/// `ln PPL(after) - ln PPL(before)`, i.e. `sum_i ln(p_before / p_after)`.
/// Positive when the compressed model is less sure of the text.
pub fn delta_ln_ppl(before: &LogProbSequence, after: &LogProbSequence) -> Result<f64> {
    if before.len() != after.len() {
        return Err(Error::LengthMismatch(before.len(), after.len()));
    }
    Ok(ln_perplexity(after)? - ln_perplexity(before)?)
}

/// [`delta_ln_ppl`] in another log base; base 10 gives `lg`.
pub fn delta_log_ppl(before: &LogProbSequence, after: &LogProbSequence, base: f64) -> Result<f64> {
    Ok(delta_ln_ppl(before, after)? / base.ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionRatios {
    /// `(orig - cmpr) / cmpr`
    pub eta: f64,
    /// `(orig - cmpr) / orig`
    pub eta_emb: f64,
    /// Same value as `eta_emb`, under its other name.
    pub phi: f64,
}

pub fn compression_ratios(orig_params: usize, cmpr_params: usize) -> Result<CompressionRatios> {
    if orig_params == 0 {
        return Err(Error::DivisionByZero("original parameter count"));
    }
    if cmpr_params == 0 {
        return Err(Error::DivisionByZero("compressed parameter count"));
    }
    let (o, c) = (orig_params as f64, cmpr_params as f64);
    let reduction = (o - c) / o;
    Ok(CompressionRatios {
        eta: (o - c) / c,
        eta_emb: reduction,
        phi: reduction,
    })
}

/// Perplexity cost per unit of embedding compression; lower is better.
pub fn tradeoff_score(delta_log_ppl: f64, eta_emb: f64) -> Result<f64> {
    if eta_emb == 0.0 {
        return Err(Error::DivisionByZero("eta_emb"));
    }
    Ok(delta_log_ppl / eta_emb)
}

/// One decimal log-probability per line; blank lines are skipped.
pub fn read_logprobs(reader: impl BufRead) -> Result<LogProbSequence> {
    let mut values = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {t:?}: {e}", n + 1)))?,
        );
    }
    LogProbSequence::new(values)
}

/// Everything derivable from a before/after pair plus parameter counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub tokens: usize,
    pub ln_ppl_before: f64,
    pub ln_ppl_after: f64,
    pub ppl_before_normalized: f64,
    pub ppl_after_normalized: f64,
    pub delta_ln_ppl: f64,
    pub delta_lg_ppl: f64,
    pub ratios: CompressionRatios,
    pub tradeoff: Option<f64>,
}

pub const CSV_HEADER: &str = "tokens,ln_ppl_before,ln_ppl_after,ppl_before_norm,ppl_after_norm,delta_ln_ppl,delta_lg_ppl,eta,eta_emb,phi,tradeoff";

impl MetricsReport {
    pub fn compute(
        before: &LogProbSequence,
        after: &LogProbSequence,
        orig_params: usize,
        cmpr_params: usize,
    ) -> Result<Self> {
        let delta = delta_ln_ppl(before, after)?;
        let delta_lg = delta_log_ppl(before, after, 10.0)?;
        let ratios = compression_ratios(orig_params, cmpr_params)?;
        Ok(Self {
            tokens: before.len(),
            ln_ppl_before: ln_perplexity(before)?,
            ln_ppl_after: ln_perplexity(after)?,
            ppl_before_normalized: perplexity_normalized(before)?,
            ppl_after_normalized: perplexity_normalized(after)?,
            delta_ln_ppl: delta,
            delta_lg_ppl: delta_lg,
            ratios,
            tradeoff: tradeoff_score(delta_lg, ratios.eta_emb).ok(),
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.tokens,
            self.ln_ppl_before,
            self.ln_ppl_after,
            self.ppl_before_normalized,
            self.ppl_after_normalized,
            self.delta_ln_ppl,
            self.delta_lg_ppl,
            self.ratios.eta,
            self.ratios.eta_emb,
            self.ratios.phi,
            self.tradeoff.map(|t| t.to_string()).unwrap_or_default()
        )
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "tokens={}", self.tokens)?;
        writeln!(f, "ln_ppl_before={}", self.ln_ppl_before)?;
        writeln!(f, "ln_ppl_after={}", self.ln_ppl_after)?;
        writeln!(f, "ppl_before_normalized={}", self.ppl_before_normalized)?;
        writeln!(f, "ppl_after_normalized={}", self.ppl_after_normalized)?;
        writeln!(f, "delta_ln_ppl={}", self.delta_ln_ppl)?;
        writeln!(f, "delta_lg_ppl={}", self.delta_lg_ppl)?;
        writeln!(f, "eta={}", self.ratios.eta)?;
        writeln!(f, "eta_emb={}", self.ratios.eta_emb)?;
        writeln!(f, "phi={}", self.ratios.phi)?;
        match self.tradeoff {
            Some(t) => write!(f, "tradeoff={t}"),
            None => write!(f, "tradeoff=undefined"),
        }
    }
}
