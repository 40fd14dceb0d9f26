//! Experiment configuration: a `key = value` text file.
//!
//! ```text
//! # comments start with '#'
//! mode = hhe                # plain | bfv | hhe (required)
//! clients = 12
//! train_clients = 4
//! eval_clients = 12
//! rounds = 10
//! epochs = 10
//! batch_size = 64
//! learning_rate = 0.001
//! patience = 2
//! alpha = 5
//! variant = pasta-4         # pasta-3 | pasta-4 | <t>:<rounds>
//! preset = bfv-16384        # bfv-4096 | bfv-8192 | bfv-16384 | insecure:<N>:<bits>x<count>
//! seed = 0
//! dataset = synthetic       # synthetic | idx:<directory with MNIST training files>
//! samples = 60000           # synthetic size, or a cap on the IDX samples
//! features = 784            # synthetic only
//! classes = 10              # synthetic only
//! model = paper-size        # paper-size | hidden16
//! transport = in-process    # in-process | tcp:<host:port>
//! timeout_ms = 600000       # upload deadline per phase
//! plain_quantize = true     # plain mode aggregates quantized weights
//! bfv_packing = chunked     # chunked (t values per ciphertext) | full
//! fail = 2:3                # round:client pairs whose training fails
//! kill = 3:1                # round:client pairs where the client process exits
//! workers = 1               # concurrent transciphering threads
//! ```
//!
//! Defaults follow the paper's experiment table where it has a value.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use hhefl_core::bfv::{BfvParams, SecurityPreset};
use hhefl_core::codec::QuantSpec;
use hhefl_core::pasta::PastaVariant;

use crate::error::{Error, Result};
use crate::learner::{batch_count, idx, split_sizes, ModelPreset, TrainConfig};
use crate::protocol::{check_constraint, Mode};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic {
        samples: usize,
        features: usize,
        classes: usize,
    },
    Idx {
        dir: PathBuf,
        limit: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    Tcp(String),
}

/// BFV parameters: a standard preset, or a small ring that is fast but
/// offers no security, for tests and demonstrations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamSet {
    Preset(SecurityPreset),
    Insecure { degree: usize, primes: Vec<u32> },
}

impl ParamSet {
    pub fn degree(&self) -> usize {
        match self {
            ParamSet::Preset(p) => p.degree(),
            ParamSet::Insecure { degree, .. } => *degree,
        }
    }

    /// `bfv-16384` (or `16384`), or `insecure:2048:55x8`.
    pub fn from_name(s: &str) -> Option<Self> {
        if let Some(p) = SecurityPreset::from_name(s) {
            return Some(ParamSet::Preset(p));
        }
        let rest = s.strip_prefix("insecure:")?;
        let (n, chain) = rest.split_once(':')?;
        let (bits, count) = chain.split_once('x')?;
        let (bits, count): (u32, usize) = (bits.parse().ok()?, count.parse().ok()?);
        Some(ParamSet::Insecure {
            degree: n.parse().ok()?,
            primes: vec![bits; count],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Packing {
    /// `t` values per ciphertext, like the symmetric chunks.
    Chunked,
    /// Every slot used.
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub clients: usize,
    pub train_clients: usize,
    pub eval_clients: usize,
    pub rounds: u32,
    pub train: TrainConfig,
    pub alpha: f64,
    pub variant: PastaVariant,
    pub preset: ParamSet,
    pub seed: u64,
    pub data: DataSource,
    pub model: ModelPreset,
    pub transport: TransportKind,
    pub timeout: Duration,
    pub plain_quantize: bool,
    pub packing: Packing,
    pub failures: Vec<(u32, u32)>,
    pub kills: Vec<(u32, u32)>,
    pub workers: usize,
}

impl ExperimentConfig {
    /// Paper defaults for everything but the mode.
    pub fn with_mode(mode: Mode) -> Self {
        ExperimentConfig {
            mode,
            clients: 12,
            train_clients: 4,
            eval_clients: 12,
            rounds: 10,
            train: TrainConfig::default(),
            alpha: 5.0,
            variant: PastaVariant::PASTA_4,
            preset: ParamSet::Preset(SecurityPreset::N16384),
            seed: 0,
            data: DataSource::Synthetic {
                samples: 60000,
                features: 784,
                classes: 10,
            },
            model: ModelPreset::PaperSize,
            transport: TransportKind::InProcess,
            timeout: Duration::from_secs(600),
            plain_quantize: true,
            packing: Packing::Chunked,
            failures: Vec::new(),
            kills: Vec::new(),
            workers: 1,
        }
    }

    pub fn quant_spec(&self) -> Result<QuantSpec> {
        Ok(QuantSpec::new(self.alpha)?)
    }

    pub fn bfv_params(&self) -> Result<BfvParams> {
        Ok(match &self.preset {
            ParamSet::Preset(p) => BfvParams::preset(*p)?,
            ParamSet::Insecure { degree, primes } => BfvParams::custom(*degree, primes)?,
        })
    }

    /// Values per BFV ciphertext in the BFV-only mode.
    pub fn bfv_chunk(&self) -> usize {
        match self.packing {
            Packing::Chunked => self.variant.block_size(),
            Packing::Full => self.preset.degree(),
        }
    }

    /// Number of samples the data source provides.
    pub fn sample_count(&self) -> Result<usize> {
        Ok(match &self.data {
            DataSource::Synthetic { samples, .. } => *samples,
            DataSource::Idx { dir, limit } => {
                let n = idx::label_count(&dir.join("train-labels-idx1-ubyte"))?;
                limit.map_or(n, |l| l.min(n))
            }
        })
    }

    /// Largest per-client batch count the partition produces.
    pub fn max_batches(&self) -> Result<u64> {
        let n = self.sample_count()?;
        let shard = n.div_ceil(self.clients.max(1));
        let (fit, val, _) = split_sizes(shard);
        Ok(batch_count(fit + val, self.train.batch_size))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.into()));
        if self.clients == 0 || self.train_clients == 0 || self.eval_clients == 0 {
            return bad("client counts must be positive");
        }
        if self.train_clients > self.clients || self.eval_clients > self.clients {
            return bad("phase client counts exceed the number of clients");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        self.train.validate()?;
        self.quant_spec()?;
        if self.mode != Mode::Plain {
            self.bfv_params()?;
        }
        if let DataSource::Synthetic {
            features, classes, ..
        } = self.data
        {
            if features == 0 || !(2..=256).contains(&classes) {
                return bad("synthetic data needs features > 0 and 2..=256 classes");
            }
        }
        if self.sample_count()? < self.clients {
            return bad("fewer samples than clients");
        }
        let n_k = self.max_batches()?;
        if n_k == 0 {
            return bad("each client needs at least one full batch of training data");
        }
        if self.mode != Mode::Plain || self.plain_quantize {
            check_constraint(n_k, self.train_clients as u64)?;
        }
        if self.mode == Mode::Hhe && 4 * self.variant.block_size() > self.preset.degree() / 2 {
            return bad("the PASTA block does not fit the BFV slot rows");
        }
        Ok(())
    }

    /// Applies `HHEFL_SEED` if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var("HHEFL_SEED") {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("HHEFL_SEED is not an integer: {v}")))?;
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let cfg = parse_config(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn pairs(v: &str) -> Option<Vec<(u32, u32)>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| {
            let (r, c) = p.split_once(':')?;
            Some((r.trim().parse().ok()?, c.trim().parse().ok()?))
        })
        .collect()
}

/// `pasta-3`, `pasta-4` or `<t>:<rounds>`.
pub fn parse_variant(v: &str) -> Option<PastaVariant> {
    PastaVariant::from_name(v).or_else(|| {
        let (t, r) = v.split_once(':')?;
        PastaVariant::new(t.parse().ok()?, r.parse().ok()?).ok()
    })
}

/// Parses without validating; see [`ExperimentConfig::validate`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut mode = None;
    let mut cfg = ExperimentConfig::with_mode(Mode::Plain);
    let mut seen = HashSet::new();
    let mut synth = (60000usize, 784usize, 10usize);
    let mut idx_dir: Option<PathBuf> = None;
    let mut samples_set = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Config { line, msg };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        let invalid = || err(format!("invalid value `{value}` for `{key}`"));
        macro_rules! num {
            () => {
                value.parse().map_err(|_| invalid())?
            };
        }
        match key {
            "mode" => mode = Some(Mode::from_name(value).ok_or_else(invalid)?),
            "clients" => cfg.clients = num!(),
            "train_clients" => cfg.train_clients = num!(),
            "eval_clients" => cfg.eval_clients = num!(),
            "rounds" => cfg.rounds = num!(),
            "epochs" => cfg.train.epochs = num!(),
            "batch_size" => cfg.train.batch_size = num!(),
            "learning_rate" => cfg.train.learning_rate = num!(),
            "patience" => cfg.train.patience = num!(),
            "alpha" => cfg.alpha = num!(),
            "variant" => cfg.variant = parse_variant(value).ok_or_else(invalid)?,
            "preset" => cfg.preset = ParamSet::from_name(value).ok_or_else(invalid)?,
            "seed" => cfg.seed = num!(),
            "dataset" => {
                if value == "synthetic" {
                    idx_dir = None;
                } else if let Some(dir) = value.strip_prefix("idx:") {
                    idx_dir = Some(PathBuf::from(dir.trim()));
                } else {
                    return Err(invalid());
                }
            }
            "samples" => {
                synth.0 = num!();
                samples_set = true;
            }
            "features" => synth.1 = num!(),
            "classes" => synth.2 = num!(),
            "model" => cfg.model = ModelPreset::from_name(value).ok_or_else(invalid)?,
            "transport" => {
                cfg.transport = match value {
                    "in-process" => TransportKind::InProcess,
                    _ => TransportKind::Tcp(
                        value
                            .strip_prefix("tcp:")
                            .filter(|a| !a.is_empty())
                            .ok_or_else(invalid)?
                            .to_string(),
                    ),
                }
            }
            "timeout_ms" => cfg.timeout = Duration::from_millis(num!()),
            "plain_quantize" => cfg.plain_quantize = num!(),
            "bfv_packing" => {
                cfg.packing = match value {
                    "chunked" => Packing::Chunked,
                    "full" => Packing::Full,
                    _ => return Err(invalid()),
                }
            }
            "fail" => cfg.failures = pairs(value).ok_or_else(invalid)?,
            "kill" => cfg.kills = pairs(value).ok_or_else(invalid)?,
            "workers" => cfg.workers = num!(),
            _ => return Err(err(format!("unknown key `{key}`"))),
        }
    }
    cfg.mode = mode.ok_or(Error::Config {
        line: 0,
        msg: "`mode` is required (plain, bfv or hhe)".into(),
    })?;
    cfg.data = match idx_dir {
        Some(dir) => DataSource::Idx {
            dir,
            limit: samples_set.then_some(synth.0),
        },
        None => DataSource::Synthetic {
            samples: synth.0,
            features: synth.1,
            classes: synth.2,
        },
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "mode = hhe\nclients = 12\nrounds = 10\nepochs = 10\nbatch_size = 64\n\
        learning_rate = 0.001\ntrain_clients = 4\neval_clients = 12\nalpha = 5\npreset = 16384\n";

    #[test]
    fn paper_table_is_accepted() {
        let cfg = parse_config(TABLE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg, ExperimentConfig::with_mode(Mode::Hhe));
        assert_eq!(cfg.max_batches().unwrap(), 62);
    }

    #[test]
    fn constraint_rejection_names_the_bound() {
        let text = "mode = bfv\ntrain_clients = 8\nclients = 8\neval_clients = 8\nbatch_size = 64\nsamples = 41000\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.max_batches().unwrap(), 64);
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("32768"), "{msg}");
    }

    #[test]
    fn mode_is_required() {
        let err = parse_config("clients = 3\n").unwrap_err().to_string();
        assert!(err.contains("mode"), "{err}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("mode = plain\n# fine\nrounds = many\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        assert!(matches!(parse_config("mode = plain\nbogus = 1\n"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("mode = plain\nmode = hhe\n"), Err(Error::Config { line: 2, .. })));
    }

    #[test]
    fn full_syntax() {
        let text = "mode = plain # trailing comment\nvariant = 4:3\ntransport = tcp:127.0.0.1:9000\n\
            fail = 1:2, 3:0\nkill = 2:1\ndataset = idx:/data/mnist\nsamples = 2000\n\
            bfv_packing = full\nplain_quantize = false\nmodel = hidden16\ntimeout_ms = 1500\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.variant, PastaVariant::new(4, 3).unwrap());
        assert_eq!(cfg.transport, TransportKind::Tcp("127.0.0.1:9000".into()));
        assert_eq!(cfg.failures, vec![(1, 2), (3, 0)]);
        assert_eq!(cfg.kills, vec![(2, 1)]);
        assert_eq!(
            cfg.data,
            DataSource::Idx {
                dir: "/data/mnist".into(),
                limit: Some(2000)
            }
        );
        assert_eq!(cfg.packing, Packing::Full);
        assert_eq!(cfg.bfv_chunk(), 16384);
        assert!(!cfg.plain_quantize);
        let small = parse_config("mode = hhe\npreset = insecure:2048:55x8\n").unwrap();
        assert_eq!(small.bfv_params().unwrap().degree(), 2048);
        assert_eq!(small.bfv_params().unwrap().level_count(), 8);
        assert_eq!(cfg.model, ModelPreset::Hidden16);
        assert_eq!(cfg.timeout, Duration::from_millis(1500));
    }
}
