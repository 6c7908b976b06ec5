//! The `ttemb` command line.
//!
//! Flag defaults come from, in order of precedence: the command line,
//! `TTEMB_*` environment variables, a `key=value` file named by `--config`
//! (or `TTEMB_CONFIG`), and the built-in default. Output is CSV or
//! `key=value` lines unless `--pretty` is given.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric (including unknown
//! token ids), 4 malformed or incompatible files.

use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};

use crate::bench::{self, BenchConfig};
use crate::energy::{self, EnergyConfig, Level, Mode, TtBudget};
use crate::error::{Error, Result};
use crate::format::DenseTable;
use crate::metrics::{self, MetricsReport};
use crate::planner::{self, clipped_ranks, parse_shape, ShapePolicy, DEFAULT_MAX_ORDER};
use crate::tt::CompressSpec;
use crate::vocab::{CompressedVocab, IndexedFile};

#[derive(Debug, Parser)]
#[command(
    name = "ttemb",
    version,
    about = "Compress token embedding tables into per-token tensor-train cores"
)]
pub struct Cli {
    /// File of key=value lines supplying flag defaults
    #[arg(long, global = true, env = "TTEMB_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Aligned human-readable output instead of CSV or key=value
    #[arg(long, global = true, env = "TTEMB_PRETTY")]
    pub pretty: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress an EMB1 table into a TTE1 store
    Compress {
        #[arg(long, short, env = "TTEMB_INPUT")]
        input: PathBuf,
        #[arg(long, short, env = "TTEMB_OUTPUT")]
        output: PathBuf,
        /// Explicit mode sizes, e.g. 8,8,12
        #[arg(long, env = "TTEMB_SHAPE")]
        shape: Option<String>,
        /// Shape policy when --shape is absent: max or order:N
        #[arg(long, env = "TTEMB_AUTO_SHAPE", default_value = "max")]
        auto_shape: String,
        /// Relative error bound per vector
        #[arg(long, env = "TTEMB_EPS", default_value_t = 0.0)]
        eps: f64,
        /// Cap on every interior rank (default: no cap)
        #[arg(long, env = "TTEMB_MAX_RANK")]
        max_rank: Option<usize>,
        /// Compress rows on all cores
        #[arg(long, env = "TTEMB_PARALLEL")]
        parallel: bool,
    },
    /// Decompress selected tokens
    Reconstruct {
        #[arg(long, env = "TTEMB_VOCAB")]
        vocab: PathBuf,
        /// Comma-separated token ids
        #[arg(long)]
        ids: String,
        /// Write rows as EMB1 instead of CSV on stdout
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compress one embedding and add it to a store
    AddToken {
        #[arg(long, env = "TTEMB_VOCAB")]
        vocab: PathBuf,
        #[arg(long)]
        id: u64,
        /// EMB1 file holding the embedding
        #[arg(long)]
        embedding: PathBuf,
        /// Row of the EMB1 file to use
        #[arg(long, default_value_t = 0)]
        row: usize,
        /// Cap on every interior rank (default: no cap)
        #[arg(long, env = "TTEMB_MAX_RANK")]
        max_rank: Option<usize>,
    },
    /// Remove a token from a store
    RmToken {
        #[arg(long, env = "TTEMB_VOCAB")]
        vocab: PathBuf,
        #[arg(long)]
        id: u64,
    },
    /// Parameter counts, compression ratios and rank histogram of a store
    Stats {
        #[arg(long, env = "TTEMB_VOCAB")]
        vocab: PathBuf,
    },
    /// Choose a tensor shape for an embedding dimension
    PlanShape {
        #[arg(long)]
        d: usize,
        /// max, order:N or an explicit shape
        #[arg(long, env = "TTEMB_POLICY", default_value = "max")]
        policy: String,
        /// Interior rank cap used for the prediction
        #[arg(long, env = "TTEMB_RANK", default_value_t = 1)]
        rank: usize,
        #[arg(long, env = "TTEMB_EPS", default_value_t = 0.0)]
        eps: f64,
        /// List every shape with minimal storage instead
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_ORDER)]
        max_order: usize,
    },
    /// Inference energy of dense, TT and low-rank embedding layers
    Energy {
        #[arg(long = "V", visible_alias = "vocab-size", default_value_t = 50257)]
        vocab_size: usize,
        #[arg(long, default_value_t = 768)]
        d: usize,
        /// Tokens per input text
        #[arg(long, default_value_t = 50)]
        l: usize,
        /// TT parameters per token (default d/2)
        #[arg(long)]
        p: Option<usize>,
        /// TT shape; give with --ranks
        #[arg(long, requires = "ranks")]
        shape: Option<String>,
        /// Full TT rank vector r_0..r_N
        #[arg(long, requires = "shape")]
        ranks: Option<String>,
        /// Uniform TT budget N,I,r
        #[arg(long)]
        uniform: Option<String>,
        /// Rank of the whole-table factorization
        #[arg(long, default_value_t = 192)]
        k: usize,
        /// Device costs: pi5 or a100, with -low, -mid or -high
        #[arg(long, env = "TTEMB_PRESET")]
        preset: Option<String>,
        /// Memory energy per float32, pJ
        #[arg(long, env = "TTEMB_NU")]
        nu: Option<f64>,
        /// Compute energy per float32 op, pJ
        #[arg(long, env = "TTEMB_TAU")]
        tau: Option<f64>,
        /// paper-formula or exact-count
        #[arg(long, env = "TTEMB_MODE", default_value = "paper-formula")]
        mode: String,
        /// key=value report instead of CSV
        #[arg(long)]
        kv: bool,
        /// Add one-time download energy: wired or wireless, with -low, -mid or -high
        #[arg(long)]
        comm: Option<String>,
    },
    /// Time compression, reconstruction and per-text lookup
    Bench {
        /// all, compress, reconstruct, lookup or errors
        #[arg(long, default_value = "all")]
        suite: String,
        /// EMB1 table to use (default: synthetic Gaussian)
        #[arg(long, short)]
        input: Option<PathBuf>,
        /// Rows of the synthetic table
        #[arg(long = "V", visible_alias = "vocab-size", default_value_t = 256)]
        vocab_size: usize,
        /// Width of the synthetic table
        #[arg(long, default_value_t = 768)]
        d: usize,
        #[arg(long, env = "TTEMB_SHAPE")]
        shape: Option<String>,
        #[arg(long, env = "TTEMB_AUTO_SHAPE", default_value = "order:3")]
        auto_shape: String,
        #[arg(long, env = "TTEMB_EPS", default_value_t = 0.1)]
        eps: f64,
        #[arg(long, env = "TTEMB_MAX_RANK")]
        max_rank: Option<usize>,
        #[arg(long, default_value_t = bench::DEFAULT_REPS)]
        reps: usize,
        #[arg(long, default_value_t = bench::DEFAULT_WARMUP)]
        warmup: usize,
        /// Tokens per repetition
        #[arg(long, default_value_t = 64)]
        tokens: usize,
        /// Tokens per text for the lookup benchmark
        #[arg(long, default_value_t = bench::TEXT_LENGTH)]
        l: usize,
        #[arg(long, env = "TTEMB_SEED", default_value_t = 0)]
        seed: u64,
        /// Also time whole-table compression on all cores
        #[arg(long)]
        parallel: bool,
        /// Print published reference latencies as # comments
        #[arg(long)]
        reference: bool,
    },
    /// Decompress a whole store back into an EMB1 table
    ExportDense {
        #[arg(long, env = "TTEMB_VOCAB")]
        vocab: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Perplexity change and compression trade-off from log-probabilities
    Metrics {
        /// Per-token ln p under the original model, one per line
        #[arg(long)]
        before: PathBuf,
        /// Per-token ln p under the compressed model
        #[arg(long)]
        after: PathBuf,
        /// Embedding parameters before compression
        #[arg(long)]
        orig_params: Option<usize>,
        /// Embedding parameters after compression
        #[arg(long)]
        cmpr_params: Option<usize>,
        /// Take both parameter counts from a TTE1 store
        #[arg(long, conflicts_with_all = ["orig_params", "cmpr_params"])]
        vocab: Option<PathBuf>,
        /// CSV instead of key=value
        #[arg(long)]
        csv: bool,
    },
}

/// Ordered `key=value` output.
#[derive(Debug, Default)]
struct Report(Vec<(String, String)>);

impl Report {
    fn put(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    fn write(&self, out: &mut dyn Write, pretty: bool) -> Result<()> {
        let width = self.0.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.0 {
            if pretty {
                writeln!(out, "{k:<width$}  {v}")?;
            } else {
                writeln!(out, "{k}={v}")?;
            }
        }
        Ok(())
    }
}

fn write_csv(out: &mut dyn Write, header: &str, rows: &[String], pretty: bool) -> Result<()> {
    if !pretty {
        writeln!(out, "{header}")?;
        for r in rows {
            writeln!(out, "{r}")?;
        }
        return Ok(());
    }
    let table: Vec<Vec<&str>> = std::iter::once(header)
        .chain(rows.iter().map(String::as_str))
        .map(|l| l.split(',').collect())
        .collect();
    let cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            table
                .iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s:>w$}"))
            .collect();
        writeln!(out, "{}", line.join("  "))?;
    }
    Ok(())
}

fn parse_ids(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Parse(format!("bad token id {t:?}")))
        })
        .collect()
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split([',', 'x'])
        .map(str::trim)
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Parse(format!("bad {what} entry {t:?}")))
        })
        .collect()
}

fn pick_shape(d: usize, shape: Option<&str>, auto: &str) -> Result<Vec<usize>> {
    let policy = match shape {
        Some(s) => ShapePolicy::Explicit(parse_shape(s)?),
        None => auto.parse()?,
    };
    Ok(planner::plan(d, &policy, 1, 0.0)?.shape)
}

fn spec_for(shape: Vec<usize>, max_rank: Option<usize>, eps: f64) -> Result<CompressSpec> {
    match max_rank {
        Some(0) => Err(Error::InvalidSpec("--max-rank must be >= 1".into())),
        Some(r) => {
            let caps = clipped_ranks(&shape, &vec![r; shape.len() - 1]);
            CompressSpec::new(shape, caps, eps)
        }
        None => CompressSpec::unbounded(shape, eps),
    }
}

/// Prefixes I/O errors with the path involved.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })
}

/// Exclusive advisory lock on a `.lock` file next to `path`, held until
/// the returned handle drops.
fn lock_store(path: &Path) -> Result<File> {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".lock");
    let lock = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(false)
        .open(path.with_file_name(name))?;
    lock.lock()?;
    Ok(lock)
}

fn vocab_report(r: &mut Report, vocab: &CompressedVocab) {
    r.put("tokens", vocab.len())
        .put("d", vocab.dim())
        .put("shape", planner::join(vocab.shape(), ","))
        .put("eps", vocab.epsilon())
        .put("total_params", vocab.total_params())
        .put("dense_params", vocab.dense_params())
        .put("eta", vocab.compression_ratio())
        .put("eta_emb", vocab.embedding_reduction())
        .put("phi", vocab.embedding_reduction());
}

/// Parses `args` (program name first) and runs the command, writing
/// results to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = apply_config(args.into_iter().map(Into::into).collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(out, "{e}")?;
                return Ok(());
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            return Err(Error::Parse(
                first.trim_start_matches("error: ").to_string(),
            ));
        }
    };
    execute(cli, out)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let pretty = cli.pretty;
    match cli.command {
        Command::Compress {
            input,
            output,
            shape,
            auto_shape,
            eps,
            max_rank,
            parallel,
        } => {
            let table = at(&input, DenseTable::read(&input))?;
            let shape = pick_shape(table.dim(), shape.as_deref(), &auto_shape)?;
            let spec = spec_for(shape, max_rank, eps)?;
            let vocab = if parallel {
                CompressedVocab::build_parallel(&table, &spec)?
            } else {
                CompressedVocab::build(&table, &spec)?
            };
            let _lock = at(&output, lock_store(&output))?;
            at(&output, vocab.save(&output))?;
            let mut r = Report::default();
            r.put("output", output.display());
            vocab_report(&mut r, &vocab);
            r.write(out, pretty)
        }
        Command::Reconstruct { vocab, ids, output } => {
            let ids = parse_ids(&ids)?;
            let mut file = at(&vocab, IndexedFile::open(&vocab))?;
            let rows = ids
                .iter()
                .map(|&id| file.lookup(id))
                .collect::<Result<Vec<_>>>()?;
            let d: usize = file.shape().iter().product();
            match output {
                Some(path) => {
                    at(&path, DenseTable::from_rows(d, &rows)?.write(&path))?;
                    Report::default()
                        .put("output", path.display())
                        .put("rows", rows.len())
                        .put("d", d)
                        .write(out, pretty)
                }
                None => {
                    for (id, row) in ids.iter().zip(&rows) {
                        let vals: Vec<String> =
                            row.iter().map(|v| (*v as f32).to_string()).collect();
                        writeln!(out, "{id},{}", vals.join(","))?;
                    }
                    Ok(())
                }
            }
        }
        Command::AddToken {
            vocab: path,
            id,
            embedding,
            row,
            max_rank,
        } => {
            let table = at(&embedding, DenseTable::read(&embedding))?;
            if row >= table.rows() {
                return Err(Error::TokenOutOfRange(row));
            }
            if !path.exists() {
                return at(
                    &path,
                    Err(std::io::Error::from(std::io::ErrorKind::NotFound).into()),
                );
            }
            let _lock = at(&path, lock_store(&path))?;
            let mut vocab = at(&path, CompressedVocab::load(&path))?;
            if let Some(r) = max_rank {
                let spec = spec_for(vocab.shape().to_vec(), Some(r), vocab.epsilon())?;
                vocab.set_rank_caps(spec.max_ranks().to_vec())?;
            }
            vocab.add_token(id, table.row(row))?;
            at(&path, vocab.save(&path))?;
            let tt = vocab.get(id).expect("just added");
            Report::default()
                .put("added", id)
                .put("ranks", planner::join(tt.ranks(), ","))
                .put("params", tt.param_count())
                .put("tokens", vocab.len())
                .put("total_params", vocab.total_params())
                .write(out, pretty)
        }
        Command::RmToken { vocab: path, id } => {
            if !path.exists() {
                return at(
                    &path,
                    Err(std::io::Error::from(std::io::ErrorKind::NotFound).into()),
                );
            }
            let _lock = at(&path, lock_store(&path))?;
            let mut vocab = at(&path, CompressedVocab::load(&path))?;
            let removed = vocab.remove_token(id)?;
            at(&path, vocab.save(&path))?;
            Report::default()
                .put("removed", id)
                .put("params", removed.param_count())
                .put("tokens", vocab.len())
                .put("total_params", vocab.total_params())
                .write(out, pretty)
        }
        Command::Stats { vocab: path } => {
            let vocab = at(&path, CompressedVocab::load(&path))?;
            let mut r = Report::default();
            r.put("format_version", vocab.format_version());
            vocab_report(&mut r, &vocab);
            let mean = if vocab.is_empty() {
                0.0
            } else {
                vocab.total_params() as f64 / vocab.len() as f64
            };
            r.put("mean_params_per_token", mean);
            r.put(
                "file_bytes",
                at(&path, fs::metadata(&path).map_err(Error::from))?.len(),
            );
            for (k, hist) in vocab.rank_histogram().iter().enumerate() {
                let cells: Vec<String> = hist.iter().map(|(r, n)| format!("{r}:{n}")).collect();
                r.put(&format!("rank_hist_r{}", k + 1), cells.join(" "));
            }
            r.write(out, pretty)
        }
        Command::PlanShape {
            d,
            policy,
            rank,
            eps,
            all,
            max_order,
        } => {
            if all {
                if d == 0 || rank == 0 {
                    return Err(Error::InvalidSpec("d and rank must be >= 1".into()));
                }
                let (_, shapes) = planner::optimal_shapes_with_order(d, rank, max_order);
                for s in shapes {
                    let plan = planner::plan(d, &ShapePolicy::Explicit(s), rank, eps)?;
                    writeln!(out, "{plan}")?;
                }
                return Ok(());
            }
            let plan = planner::plan(d, &policy.parse()?, rank, eps)?;
            writeln!(out, "{plan}")?;
            Ok(())
        }
        Command::Energy {
            vocab_size,
            d,
            l,
            p,
            shape,
            ranks,
            uniform,
            k,
            preset,
            nu,
            tau,
            mode,
            kv,
            comm,
        } => {
            let tt = match (p, shape, ranks, uniform) {
                (None, Some(s), Some(r), None) => TtBudget::Cores {
                    shape: parse_list(&s, "shape")?,
                    ranks: parse_list(&r, "ranks")?,
                },
                (None, None, None, Some(u)) => match parse_list(&u, "uniform")?[..] {
                    [order, mode, rank] => TtBudget::Uniform { order, mode, rank },
                    _ => return Err(Error::Parse("--uniform takes N,I,r".into())),
                },
                (p, None, None, None) => TtBudget::Params(p.unwrap_or(d / 2)),
                _ => {
                    return Err(Error::Parse(
                        "give one of --p, --shape with --ranks, or --uniform".into(),
                    ))
                }
            };
            let (mut cost_nu, mut cost_tau) = match &preset {
                Some(name) => energy::preset(name)?,
                None => (EnergyConfig::DEFAULT_NU, EnergyConfig::DEFAULT_TAU),
            };
            cost_nu = nu.unwrap_or(cost_nu);
            cost_tau = tau.unwrap_or(cost_tau);
            let cfg = EnergyConfig::new(vocab_size, d, l, tt, k)
                .with_costs(cost_nu, cost_tau)
                .with_mode(mode.parse::<Mode>()?);
            let report = energy::compare(&cfg)?;
            let download = match &comm {
                Some(c) => {
                    let (medium, level) = c.split_once(['-', ':']).unwrap_or((c, "mid"));
                    let range = match medium {
                        "wired" => energy::WIRED_NJ,
                        "wireless" => energy::WIRELESS_NJ,
                        _ => return Err(Error::Parse(format!("unknown medium {medium:?}"))),
                    };
                    Some(report.download_nj(level.parse::<Level>()?.pick(range)))
                }
                None => None,
            };
            if kv || pretty {
                let mut r = Report::default();
                for line in report.to_string().lines() {
                    let (key, value) = line.split_once('=').expect("key=value");
                    r.put(key, value);
                }
                if let Some((dense, tt, svd)) = download {
                    r.put("download_nj_dense", dense)
                        .put("download_nj_tt", tt)
                        .put("download_nj_svd", svd);
                }
                return r.write(out, pretty);
            }
            writeln!(out, "{}", energy::CSV_HEADER)?;
            writeln!(out, "{}", report.csv_row())?;
            if let Some((dense, tt, svd)) = download {
                writeln!(out, "# download_nj dense={dense} tt={tt} svd={svd}")?;
            }
            Ok(())
        }
        Command::Bench {
            suite,
            input,
            vocab_size,
            d,
            shape,
            auto_shape,
            eps,
            max_rank,
            reps,
            warmup,
            tokens,
            l,
            seed,
            parallel,
            reference,
        } => {
            let table = match &input {
                Some(path) => at(path, DenseTable::read(path))?,
                None => bench::gaussian_table(vocab_size, d, seed),
            };
            let shape = pick_shape(table.dim(), shape.as_deref(), &auto_shape)?;
            let spec = spec_for(shape, max_rank, eps)?;
            let cfg = BenchConfig {
                reps,
                warmup,
                seed,
                tokens,
            };
            let want = |name: &str| suite == "all" || suite == name;
            if !["all", "compress", "reconstruct", "lookup", "errors"].contains(&suite.as_str()) {
                return Err(Error::Parse(format!("unknown suite {suite:?}")));
            }
            let mut rows = Vec::new();
            if want("compress") {
                rows.push(bench::bench_compress(&table, &spec, &cfg)?);
                if parallel {
                    rows.push(bench::bench_compress_parallel(&table, &spec, &cfg)?);
                }
            }
            if want("reconstruct") || want("lookup") {
                let vocab = CompressedVocab::build_parallel(&table, &spec)?;
                if want("reconstruct") {
                    let ids = bench::sample_ids(&vocab, tokens, seed);
                    rows.push(bench::bench_reconstruct(&vocab, &ids, &cfg)?);
                }
                if want("lookup") {
                    rows.push(bench::bench_lookup_text(&vocab, l, &cfg)?);
                }
            }
            if pretty {
                for r in &rows {
                    writeln!(out, "{r}")?;
                }
            } else if !rows.is_empty() {
                let csv: Vec<String> = rows.iter().map(|r| r.csv_row()).collect();
                write_csv(out, bench::CSV_HEADER, &csv, false)?;
            }
            if want("errors") {
                let cmp = bench::compare_errors(&table, &spec)?;
                let mut r = Report::default();
                r.put("tt_params", cmp.tt_params)
                    .put("tt_mean_rel_error", cmp.tt_mean_rel_error)
                    .put("svd_rank", cmp.svd_rank)
                    .put("svd_params", cmp.svd_params)
                    .put("svd_mean_rel_error", cmp.svd_mean_rel_error);
                if !pretty {
                    for (k, v) in &r.0 {
                        writeln!(out, "# {k}={v}")?;
                    }
                } else {
                    r.write(out, true)?;
                }
            }
            if reference {
                for line in bench::REFERENCE_NOTE.lines() {
                    writeln!(out, "# {line}")?;
                }
            }
            Ok(())
        }
        Command::ExportDense {
            vocab: path,
            output,
        } => {
            let vocab = at(&path, CompressedVocab::load(&path))?;
            let table = vocab.to_dense();
            at(&output, table.write(&output))?;
            let ids: Vec<u64> = vocab.ids().collect();
            let dense_ids = ids.iter().enumerate().all(|(i, &id)| id == i as u64);
            Report::default()
                .put("output", output.display())
                .put("rows", table.rows())
                .put("d", table.dim())
                .put("ids_contiguous", dense_ids)
                .write(out, pretty)
        }
        Command::Metrics {
            before,
            after,
            orig_params,
            cmpr_params,
            vocab,
            csv,
        } => {
            let read = |p: &Path| -> Result<_> {
                at(p, File::open(p).map_err(Error::from))
                    .and_then(|f| metrics::read_logprobs(BufReader::new(f)))
            };
            let (b, a) = (read(&before)?, read(&after)?);
            let (orig, cmpr) = match (&vocab, orig_params, cmpr_params) {
                (Some(path), _, _) => {
                    let v = at(path, CompressedVocab::load(path))?;
                    (v.dense_params(), v.total_params())
                }
                (None, Some(o), Some(c)) => (o, c),
                _ => {
                    return Err(Error::Parse(
                        "give --orig-params and --cmpr-params, or --vocab".into(),
                    ))
                }
            };
            let report = MetricsReport::compute(&b, &a, orig, cmpr)?;
            if csv {
                return write_csv(out, metrics::CSV_HEADER, &[report.csv_row()], pretty);
            }
            let mut r = Report::default();
            for line in report.to_string().lines() {
                let (key, value) = line.split_once('=').expect("key=value");
                r.put(key, value);
            }
            r.write(out, pretty)
        }
    }
}

/// Injects `key=value` pairs from the config file as flags, skipping any
/// flag already given on the command line or through the environment,
/// and any key the chosen subcommand does not take.
fn apply_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let path = config_path(&args).or_else(|| std::env::var_os("TTEMB_CONFIG").map(PathBuf::from));
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)?;
    let root = Cli::command();
    let sub_name = args
        .iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find(|a| root.find_subcommand(a).is_some())
        .map(str::to_string);
    let mut known: Vec<clap::Arg> = root.get_arguments().cloned().collect();
    if let Some(sub) = sub_name.as_deref().and_then(|n| root.find_subcommand(n)) {
        known.extend(sub.get_arguments().cloned());
    }
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("{}:{}: expected key=value", path.display(), n + 1))
        })?;
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        let Some(arg) = known.iter().find(|a| a.get_long() == Some(key.as_str())) else {
            continue;
        };
        let flag = format!("--{key}");
        let given = args.iter().filter_map(|a| a.to_str()).any(|a| {
            a == flag
                || a.strip_prefix(&flag)
                    .is_some_and(|rest| rest.starts_with('='))
        });
        let from_env = arg.get_env().is_some_and(|e| std::env::var_os(e).is_some());
        if given || from_env {
            continue;
        }
        let takes_value = arg.get_action().takes_values();
        if takes_value {
            args.push(format!("{flag}={value}").into());
        } else if matches!(value, "true" | "1" | "yes" | "on") {
            args.push(flag.into());
        }
    }
    Ok(args)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_str()?;
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Runs the process command line; returns the exit code.
pub fn main_entry() -> i32 {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(std::env::args_os(), &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("ttemb: {e}");
            e.class().exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> Result<String> {
        let mut out = Vec::new();
        let mut full = vec!["ttemb"];
        full.extend_from_slice(args);
        run(full, &mut out)?;
        Ok(String::from_utf8(out).unwrap())
    }

    #[test]
    fn plan_shape_line() {
        assert_eq!(
            run_str(&["plan-shape", "--d", "27", "--policy", "max"]).unwrap(),
            "3,3,3 params 9 eta 2.0\n"
        );
        let all = run_str(&["plan-shape", "--d", "16", "--all"]).unwrap();
        assert!(all.lines().any(|l| l.starts_with("2,2,2,2 ")));
        assert!(all.lines().any(|l| l.starts_with("4,4 ")));
    }

    #[test]
    fn energy_csv() {
        let out = run_str(&[
            "energy", "--V", "50257", "--d", "768", "--l", "50", "--p", "384", "--k", "192",
        ])
        .unwrap();
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), energy::CSV_HEADER);
        assert!(lines
            .next()
            .unwrap()
            .starts_with("50257,768,50,384,192,1,0.2,paper-formula,38635776,"));
        let kv = run_str(&["energy", "--preset", "pi5-mid", "--kv"]).unwrap();
        assert!(kv.contains("nu=165\n"));
    }

    #[test]
    fn usage_errors() {
        let e = run_str(&["plan-shape"]).unwrap_err();
        assert_eq!(e.class().exit_code(), 1);
        let e = run_str(&["energy", "--p", "3", "--uniform", "3,8,4"]).unwrap_err();
        assert_eq!(e.class().exit_code(), 1);
        let e = run_str(&["plan-shape", "--d", "7", "--policy", "order:2"]).unwrap_err();
        assert_eq!(e.class().exit_code(), 1);
        assert!(run_str(&["--help"]).unwrap().contains("compress"));
    }

    #[test]
    fn config_file_supplies_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("ttemb.conf");
        fs::write(
            &cfg,
            "# defaults\nrank = 2\npolicy=order:2\nunknown-key=1\n",
        )
        .unwrap();
        let c = cfg.to_str().unwrap();
        let out = run_str(&["--config", c, "plan-shape", "--d", "16"]).unwrap();
        // (4,4) with rank 2: 4*2 + 2*4
        assert_eq!(out, "4,4 params 16 eta 0.0\n");
        let out = run_str(&["--config", c, "plan-shape", "--d", "16", "--rank", "1"]).unwrap();
        assert_eq!(out, "4,4 params 8 eta 1.0\n");
    }

    #[test]
    fn id_lists() {
        assert_eq!(parse_ids("1, 5,9,").unwrap(), vec![1, 5, 9]);
        assert!(parse_ids("1,x").is_err());
    }
}
