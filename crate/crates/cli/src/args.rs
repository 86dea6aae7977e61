use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "sprl", version, about = "Semantic proto-role labeling with marker networks")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one model and write its checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a seed ensemble (seeds `seed .. seed + n`).
    Ensemble {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = sprl_core::ensemble::DEFAULT_MEMBERS)]
        n_voters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write predictions of a checkpoint or ensemble for one split.
    Predict {
        /// Checkpoint or ensemble manifest.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: InputArgs,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metric CSV of predictions against gold.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        gold: GoldArgs,
        /// Expected mode; must agree with the files.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-property McNemar tests of system A against system B.
    Significance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[command(flatten)]
        gold: GoldArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-out ablation table; each row is an ensemble.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 1)]
        n_voters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score change per added voter of an ensemble.
    Convergence {
        /// Ensemble manifest.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: InputArgs,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus: dataset, word vectors and inventory.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Lexical)]
        kind: SynthKind,
        /// Examples (lexical) or sentences (twins).
        #[arg(long, default_value_t = 200)]
        size: usize,
        #[arg(long, default_value_t = 12)]
        dim: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the checksums recorded in a run manifest.
    Verify { manifest: PathBuf },
}

/// Dataset and vector inputs.
#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Dataset file, one JSON record per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Word vector file (`token v1 ... vd` per line).
    #[arg(long)]
    pub vectors: PathBuf,
    /// Per-token contextual vectors appended to the word vectors.
    #[arg(long)]
    pub contextual: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// `spr1`, `spr2` or an inventory file.
    #[arg(long, default_value = "spr1")]
    pub inventory: String,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Key/value configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ablation switch (repeatable).
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(sprl_core::Ablation::SWITCHES))]
    pub ablate: Vec<String>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

/// Gold labels from a predictions-format file or from a dataset split.
#[derive(Args, Debug, Clone)]
pub struct GoldArgs {
    #[arg(long, conflicts_with = "gold_data", required_unless_present = "gold_data")]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub gold_data: Option<PathBuf>,
    #[arg(long, default_value = "spr1")]
    pub inventory: String,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Multilabel,
    Regression,
}

impl From<ModeArg> for sprl_core::Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Multilabel => sprl_core::Mode::Multilabel,
            ModeArg::Regression => sprl_core::Mode::Regression,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for sprl_core::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => sprl_core::Split::Train,
            SplitArg::Dev => sprl_core::Split::Dev,
            SplitArg::Test => sprl_core::Split::Test,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Three properties tied to argument identity and position.
    Lexical,
    /// Predicate/argument swap pairs over shared sentences.
    Twins,
}
