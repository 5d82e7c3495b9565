//! Command implementations behind the `depablate` binary. Each command reads
//! files, writes results under temporary names and renames them on success.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    frequency_breakdown, language_breakdown, las, pair_treebanks, pos_breakdown, Axis,
    BreakdownReport, FormCounts,
};
use crate::conllu::{compute_stats, overlay_tags, write_conllu, TagSource, Treebank, TreebankStats};
use crate::error::{Error, Result};
use crate::neural::gradcheck::{self, CheckResult};
use crate::parser::{run_protocol, EpochRecord, EpochTiming, ParserConfig, ParserModel, ProtocolSummary, TrainSchedule};
use crate::representation::{load_pretrained, Pretrained, RepresentationConfig, System, CHAR_PRESETS};

/// Where test-time tags come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagChoice {
    Gold,
    File(PathBuf),
}

impl std::str::FromStr for TagChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "" => Err(Error::Config("empty tag source".into())),
            "gold" => Ok(TagChoice::Gold),
            path => Ok(TagChoice::File(PathBuf::from(path))),
        }
    }
}

/// Overlays test-time tags on `tb`.
pub fn apply_tags(tb: &Treebank, tags: &TagChoice) -> Result<Treebank> {
    match tags {
        TagChoice::Gold => overlay_tags(tb, TagSource::Gold),
        TagChoice::File(path) => {
            let external = Treebank::read(path, &tb.language_id)?;
            overlay_tags(tb, TagSource::External(&external))
        }
    }
}

/// Optional settings as read from a TOML config file. Anything left out
/// falls back to the defaults; command-line flags override both.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub system: Option<String>,
    pub char_size: Option<usize>,
    pub tags: Option<String>,
    pub embeddings: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub best_epochs: Option<usize>,
    pub out: Option<PathBuf>,
    pub lstm_layers: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub mlp_hidden: Option<usize>,
    pub k_warmup: Option<usize>,
    pub p_explore: Option<f64>,
}

impl FileConfig {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` replace those here.
    pub fn merge(self, other: FileConfig) -> FileConfig {
        FileConfig {
            train: other.train.or(self.train),
            dev: other.dev.or(self.dev),
            system: other.system.or(self.system),
            char_size: other.char_size.or(self.char_size),
            tags: other.tags.or(self.tags),
            embeddings: other.embeddings.or(self.embeddings),
            epochs: other.epochs.or(self.epochs),
            seeds: other.seeds.or(self.seeds),
            best_epochs: other.best_epochs.or(self.best_epochs),
            out: other.out.or(self.out),
            lstm_layers: other.lstm_layers.or(self.lstm_layers),
            lstm_hidden: other.lstm_hidden.or(self.lstm_hidden),
            mlp_hidden: other.mlp_hidden.or(self.mlp_hidden),
            k_warmup: other.k_warmup.or(self.k_warmup),
            p_explore: other.p_explore.or(self.p_explore),
        }
    }
}

/// A fully resolved training run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub system: System,
    pub char_size: usize,
    pub tags: Option<TagChoice>,
    pub embeddings: Option<PathBuf>,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub schedule: TrainSchedule,
    pub out: PathBuf,
    pub parser: ParserConfig,
}

impl RunConfig {
    /// Resolves and checks a merged configuration before anything is loaded.
    pub fn resolve(cfg: FileConfig) -> Result<Self> {
        let missing = |what: &str| Error::Config(format!("missing {what}"));
        let system: System = cfg.system.as_deref().unwrap_or("combined").parse()?;
        let char_size = cfg.char_size.unwrap_or(500);
        let tags = cfg.tags.as_deref().map(str::parse).transpose()?;
        let mut parser = ParserConfig::new(RepresentationConfig::for_system(system, char_size)?);
        if let Some(v) = cfg.lstm_layers {
            parser.lstm_layers = v;
        }
        if let Some(v) = cfg.lstm_hidden {
            parser.lstm_hidden = v;
        }
        if let Some(v) = cfg.mlp_hidden {
            parser.mlp_hidden = v;
        }
        if let Some(v) = cfg.k_warmup {
            parser.k_warmup = v;
        }
        if let Some(v) = cfg.p_explore {
            parser.p_explore = v;
        }
        let defaults = TrainSchedule::default();
        let schedule = TrainSchedule {
            epochs: cfg.epochs.unwrap_or(defaults.epochs),
            seeds: cfg.seeds.unwrap_or(defaults.seeds),
            best_epochs_kept: cfg.best_epochs.unwrap_or(defaults.best_epochs_kept),
        };
        let run = RunConfig {
            system,
            char_size,
            tags,
            embeddings: cfg.embeddings,
            train: cfg.train.ok_or_else(|| missing("--train"))?,
            dev: cfg.dev.ok_or_else(|| missing("--dev"))?,
            schedule,
            out: cfg.out.ok_or_else(|| missing("--out"))?,
            parser,
        };
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        let (ext, _, pos) = self.system.flags();
        if pos && self.tags.is_none() {
            return Err(Error::Config(format!("system {} uses POS tags but no --tags source was given", self.system)));
        }
        if ext && self.embeddings.is_none() {
            return Err(Error::Config(format!(
                "system {} uses pre-trained embeddings but no --embeddings file was given",
                self.system
            )));
        }
        self.schedule.validate()?;
        self.parser.validate()
    }
}

/// Loaded inputs of a run.
pub struct RunData {
    pub train: Treebank,
    pub dev: Treebank,
    pub pretrained: Option<Pretrained>,
}

impl RunData {
    pub fn load(run: &RunConfig) -> Result<Self> {
        let lang = language_of(&run.train);
        let train = Treebank::read(&run.train, &lang)?;
        let mut dev = Treebank::read(&run.dev, &lang)?;
        if let Some(tags) = &run.tags {
            dev = apply_tags(&dev, tags)?;
        }
        let pretrained = match &run.embeddings {
            Some(path) => Some(load_pretrained(path, Some(run.parser.representation.word_dim))?),
            None => None,
        };
        Ok(RunData { train, dev, pretrained })
    }
}

/// Language id taken from a file name such as `fi-train.conllu`.
pub fn language_of(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("unknown");
    stem.split(['-', '_', '.']).next().unwrap_or(stem).to_owned()
}

/// Writes `contents` to `path` through a temporary sibling.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn cmd_stats(train: &Path, dev: &Path) -> Result<TreebankStats> {
    let lang = language_of(train);
    compute_stats(&Treebank::read(train, &lang)?, &Treebank::read(dev, &lang)?)
}

pub const SUMMARY_NAME: &str = "summary.json";

/// Trains every seed, leaving the epoch log, best-epoch checkpoints and a
/// JSON summary in the output directory.
pub fn cmd_train(run: &RunConfig, on_epoch: impl FnMut(&EpochRecord, &EpochTiming)) -> Result<ProtocolSummary> {
    run.validate()?;
    let data = RunData::load(run)?;
    let summary = run_protocol(
        &data.train,
        &data.dev,
        &run.parser,
        &run.schedule,
        data.pretrained.as_ref(),
        Some(&run.out),
        on_epoch,
    )?;
    let json = serde_json::json!({ "run": run, "summary": summary });
    write_atomic(&run.out.join(SUMMARY_NAME), serde_json::to_string_pretty(&json)?.as_bytes())?;
    Ok(summary)
}

/// Parses `input` with a saved model and returns CoNLL-U text.
pub fn cmd_parse(checkpoint: &Path, input: &Path, tags: Option<&TagChoice>) -> Result<String> {
    let model = ParserModel::load(checkpoint)?;
    let mut tb = Treebank::read(input, &language_of(input))?;
    if let Some(tags) = tags {
        tb = apply_tags(&tb, tags)?;
    } else if model.config().representation.use_pos {
        return Err(Error::Config("this model uses POS tags; pass --tags".into()));
    }
    Ok(write_conllu(&model.parse_treebank(&tb)?))
}

pub fn cmd_eval(gold: &Path, predicted: &Path) -> Result<f64> {
    let g = Treebank::read(gold, &language_of(gold))?;
    let p = Treebank::read(predicted, &language_of(predicted))?;
    las(&pair_treebanks(&g, &p)?)
}

/// Breakdown of one system's predictions. The language axis takes one
/// (gold, predicted) pair per language; the others expect exactly one pair,
/// and the frequency axis also needs the training treebank.
pub fn cmd_analyze(
    files: &[(PathBuf, PathBuf)],
    train: Option<&Path>,
    axis: Axis,
    system_name: &str,
) -> Result<BreakdownReport> {
    let loaded = files
        .iter()
        .map(|(g, p)| {
            let lang = language_of(g);
            Ok((lang.clone(), Treebank::read(g, &lang)?, Treebank::read(p, &lang)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if loaded.is_empty() {
        return Err(Error::Config("no gold/predicted files given".into()));
    }
    if axis != Axis::Language && loaded.len() != 1 {
        return Err(Error::Config(format!("the {} axis takes one gold/predicted pair", axis.name())));
    }
    let (_, gold, predicted) = &loaded[0];
    match axis {
        Axis::Frequency => {
            let train = train.ok_or_else(|| Error::Config("the frequency axis needs --train".into()))?;
            let counts = FormCounts::new(&Treebank::read(train, &language_of(train))?);
            Ok(frequency_breakdown(&pair_treebanks(gold, predicted)?, &counts, system_name))
        }
        Axis::Pos => Ok(pos_breakdown(&pair_treebanks(gold, predicted)?, system_name)),
        Axis::Language => {
            let per_language = loaded
                .iter()
                .map(|(lang, g, p)| Ok((lang.clone(), pair_treebanks(g, p)?)))
                .collect::<Result<Vec<_>>>()?;
            language_breakdown(&per_language, system_name)
        }
    }
}

/// Which cells a sweep covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    /// The eight representation systems at one character size.
    Systems,
    /// The combined system at every character-size preset.
    Char,
}

impl std::str::FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "systems" => Ok(Grid::Systems),
            "char" => Ok(Grid::Char),
            _ => Err(Error::Config(format!("unknown grid {s:?}"))),
        }
    }
}

/// One row of a sweep summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub system: String,
    pub char_size: usize,
    pub language: String,
    /// Model seeds of the cell, `;`-separated; all randomness of the cell
    /// derives from them.
    pub seeds: String,
    pub grand_mean: f64,
    pub seed_means: String,
}

impl SweepRow {
    fn key(&self) -> (String, usize, String) {
        (self.system.clone(), self.char_size, self.language.clone())
    }
}

pub const SWEEP_SUMMARY: &str = "sweep.csv";

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// The cells of a grid as (system, character size).
pub fn grid_cells(grid: Grid, base: &RunConfig) -> Vec<(System, usize)> {
    match grid {
        Grid::Systems => System::ALL.iter().map(|&s| (s, base.char_size)).collect(),
        Grid::Char => CHAR_PRESETS.iter().map(|&(c, _)| (System::Combined, c)).collect(),
    }
}

/// Runs every cell not already present in the summary, appending one row
/// per finished cell. Returns the full summary.
pub fn cmd_sweep(
    base: &RunConfig,
    grid: Grid,
    mut on_cell: impl FnMut(&SweepRow, bool),
    mut on_epoch: impl FnMut(&str, &EpochRecord, &EpochTiming),
) -> Result<Vec<SweepRow>> {
    fs::create_dir_all(&base.out).map_err(|e| Error::io(&base.out, e))?;
    let summary_path = base.out.join(SWEEP_SUMMARY);
    let mut rows = read_sweep(&summary_path)?;
    let language = language_of(&base.train);
    let seeds = base
        .schedule
        .seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(";");
    // validate every cell before training any
    let mut cells = Vec::new();
    for (system, char_size) in grid_cells(grid, base) {
        let mut run = base.clone();
        run.system = system;
        run.char_size = char_size;
        let mut rep = RepresentationConfig::for_system(system, char_size)?;
        rep.word_dim = base.parser.representation.word_dim;
        run.parser.representation = rep;
        run.out = base.out.join(format!("{}_char{char_size}", system.name()));
        run.validate()?;
        cells.push(run);
    }
    let mut data: Option<RunData> = None;
    for run in cells {
        let key = (run.system.name().to_owned(), run.char_size, language.clone());
        if let Some(row) = rows.iter().find(|r| r.key() == key) {
            on_cell(row, true);
            continue;
        }
        if data.is_none() {
            data = Some(RunData::load(base)?);
        }
        let loaded = data.as_ref().expect("loaded above");
        let cell = format!("{} char {}", run.system, run.char_size);
        let summary = run_protocol(
            &loaded.train,
            &loaded.dev,
            &run.parser,
            &run.schedule,
            if run.system.flags().0 { loaded.pretrained.as_ref() } else { None },
            Some(&run.out),
            |r, t| on_epoch(&cell, r, t),
        )?;
        let row = SweepRow {
            system: run.system.name().to_owned(),
            char_size: run.char_size,
            language: language.clone(),
            seeds: seeds.clone(),
            grand_mean: summary.grand_mean,
            seed_means: summary
                .per_seed
                .iter()
                .map(|s| format!("{:.4}", s.best_mean))
                .collect::<Vec<_>>()
                .join(";"),
        };
        rows.push(row.clone());
        write_sweep(&summary_path, &rows)?;
        on_cell(&row, false);
    }
    Ok(rows)
}

/// Finite-difference checks of every operation plus the full parser
/// pipeline on a tiny generated treebank.
pub fn cmd_gradcheck(seed: u64) -> Result<Vec<CheckResult>> {
    use crate::synthetic::SuffixLanguage;
    use rand::SeedableRng;

    let mut results = gradcheck::op_suite(seed)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let lang = SuffixLanguage::new(8, 0, &mut rng);
    let train = overlay_tags(&lang.treebank(4, false, &mut rng), TagSource::Gold)?;
    let pretrained = lang.pretrained(6, 0.2, &mut rng);
    let mut rep = RepresentationConfig::for_system(System::Combined, 24)?;
    rep.word_dim = 6;
    rep.pos_dim = 4;
    let mut config = ParserConfig::new(rep);
    config.lstm_hidden = 4;
    config.mlp_hidden = 5;
    let mut model = ParserModel::new(&train, config, Some(&pretrained), seed)?;
    let sentence = train
        .sentences
        .iter()
        .max_by_key(|s| s.len())
        .cloned()
        .ok_or_else(|| Error::Empty("generated treebank".into()))?;
    results.push(model.gradient_check(&sentence, 24)?);
    Ok(results)
}
