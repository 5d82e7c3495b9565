//! Token input vectors for the eight word-representation systems: a word
//! embedding (random or pre-trained initialisation), optionally followed by
//! a character BiLSTM encoding and a POS-tag embedding.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::{Token, Treebank, UPOS_TAGS};
use crate::error::{Error, Result};
use crate::neural::{BiLstm, Graph, ParamId, ParamStore, Tensor, Var};

pub const WORD_DIM: usize = 100;
pub const POS_DIM: usize = 20;
pub const DEFAULT_WORD_DROPOUT: f64 = 0.33;

/// Character embedding size paired with the character BiLSTM output size.
pub const CHAR_PRESETS: [(usize, usize); 3] = [(24, 50), (100, 75), (500, 100)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum System {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "+ext")]
    PlusExt,
    #[serde(rename = "+char")]
    PlusChar,
    #[serde(rename = "+pos")]
    PlusPos,
    #[serde(rename = "-ext")]
    MinusExt,
    #[serde(rename = "-char")]
    MinusChar,
    #[serde(rename = "-pos")]
    MinusPos,
    #[serde(rename = "combined")]
    Combined,
}

impl System {
    pub const ALL: [System; 8] = [
        System::Baseline,
        System::PlusExt,
        System::PlusChar,
        System::PlusPos,
        System::MinusExt,
        System::MinusChar,
        System::MinusPos,
        System::Combined,
    ];

    /// (ext, char, pos)
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            System::Baseline => (false, false, false),
            System::PlusExt => (true, false, false),
            System::PlusChar => (false, true, false),
            System::PlusPos => (false, false, true),
            System::MinusExt => (false, true, true),
            System::MinusChar => (true, false, true),
            System::MinusPos => (true, true, false),
            System::Combined => (true, true, true),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            System::Baseline => "baseline",
            System::PlusExt => "+ext",
            System::PlusChar => "+char",
            System::PlusPos => "+pos",
            System::MinusExt => "-ext",
            System::MinusChar => "-char",
            System::MinusPos => "-pos",
            System::Combined => "combined",
        }
    }

    /// Number of active techniques.
    pub fn techniques(self) -> usize {
        let (e, c, p) = self.flags();
        usize::from(e) + usize::from(c) + usize::from(p)
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('\u{2212}', "-");
        System::ALL
            .into_iter()
            .find(|sys| sys.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown system {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationConfig {
    pub use_ext: bool,
    pub use_char: bool,
    pub use_pos: bool,
    pub word_dim: usize,
    pub char_emb_dim: usize,
    pub char_bilstm_out: usize,
    pub pos_dim: usize,
    pub word_dropout_rate: f64,
    /// Fall back to the lowercased form when looking up pre-trained vectors.
    pub lowercase_lookup: bool,
}

impl RepresentationConfig {
    pub fn for_system(system: System, char_emb_dim: usize) -> Result<Self> {
        let (use_ext, use_char, use_pos) = system.flags();
        let out = char_output_size(char_emb_dim)?;
        Ok(RepresentationConfig {
            use_ext,
            use_char,
            use_pos,
            word_dim: WORD_DIM,
            char_emb_dim,
            char_bilstm_out: out,
            pos_dim: POS_DIM,
            word_dropout_rate: DEFAULT_WORD_DROPOUT,
            lowercase_lookup: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if char_output_size(self.char_emb_dim)? != self.char_bilstm_out {
            return Err(Error::Config(format!(
                "character BiLSTM output {} does not pair with embedding size {}",
                self.char_bilstm_out, self.char_emb_dim
            )));
        }
        if self.word_dim == 0 || self.pos_dim == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.word_dropout_rate) {
            return Err(Error::Config("word dropout rate must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Length of the token vector.
    pub fn token_dim(&self) -> usize {
        self.word_dim
            + if self.use_char { self.char_bilstm_out } else { 0 }
            + if self.use_pos { self.pos_dim } else { 0 }
    }
}

pub fn char_output_size(char_emb_dim: usize) -> Result<usize> {
    CHAR_PRESETS
        .iter()
        .find(|(e, _)| *e == char_emb_dim)
        .map(|(_, o)| *o)
        .ok_or_else(|| Error::Config(format!("character embedding size must be 24, 100 or 500, not {char_emb_dim}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

/// Vectors read from a word2vec-style text file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pretrained {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
    /// Rows skipped for having the wrong number of values or bad numbers.
    pub rejected: usize,
}

impl Pretrained {
    pub fn get(&self, form: &str, lowercase: bool) -> Option<&Vec<f64>> {
        self.vectors
            .get(form)
            .or_else(|| if lowercase { self.vectors.get(&form.to_lowercase()) } else { None })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub fn load_pretrained(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Pretrained> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pretrained(&text, expected_dim)
}

/// Parses word2vec text: an optional "count dim" header, then "form v1 .. vd"
/// rows. Without an expected size the header or the first row decides it.
pub fn parse_pretrained(text: &str, expected_dim: Option<usize>) -> Result<Pretrained> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let mut dim = expected_dim;
    if let Some(first) = lines.peek() {
        let fields: Vec<&str> = first.split_whitespace().collect();
        if fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let header_dim: usize = fields[1].parse().unwrap();
            dim.get_or_insert(header_dim);
            lines.next();
        }
    }
    let mut out = Pretrained::default();
    for line in lines {
        let mut fields = line.split_whitespace();
        let Some(form) = fields.next() else { continue };
        let values: std::result::Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
        let Ok(values) = values else {
            out.rejected += 1;
            continue;
        };
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            out.rejected += 1;
            continue;
        }
        out.vectors.insert(form.to_owned(), values);
    }
    if out.vectors.is_empty() {
        return Err(Error::Empty("no usable pre-trained vectors".into()));
    }
    out.dim = dim.unwrap_or(0);
    if out.rejected > 0 {
        log::warn!("skipped {} pre-trained rows of the wrong dimension", out.rejected);
    }
    Ok(out)
}

/// Training forms with their counts, in order of first occurrence.
pub fn train_vocabulary(train: &Treebank) -> (Vec<String>, Vec<usize>) {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut forms = Vec::new();
    let mut counts = Vec::new();
    for tok in train.tokens() {
        match index.get(tok.form.as_str()) {
            Some(&i) => counts[i] += 1,
            None => {
                index.insert(&tok.form, forms.len());
                forms.push(tok.form.clone());
                counts.push(1);
            }
        }
    }
    (forms, counts)
}

/// Word embedding table; row 0 is the learned OOV vector.
#[derive(Clone, Debug)]
pub struct WordLookup {
    pub table: ParamId,
    forms: Vec<String>,
    freqs: Vec<usize>,
    index: HashMap<String, usize>,
    /// Un-updated copy of the pre-trained vectors (empty unless ext is on).
    pub pretrained: Pretrained,
    pub dropout_rate: f64,
    pub lowercase: bool,
}

impl WordLookup {
    /// A table over the given vocabulary, every row random.
    pub fn new(
        store: &mut ParamStore,
        forms: Vec<String>,
        freqs: Vec<usize>,
        pretrained: Pretrained,
        config: &RepresentationConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let rows = forms.len() + 1;
        let table = Tensor::glorot(rows, config.word_dim, 1, config.word_dim, rng);
        let index = forms.iter().enumerate().map(|(i, f)| (f.clone(), i + 1)).collect();
        WordLookup {
            table: store.add_table("word.table", table),
            forms,
            freqs,
            index,
            pretrained,
            dropout_rate: config.word_dropout_rate,
            lowercase: config.lowercase_lookup,
        }
    }

    pub fn forms(&self) -> &[String] {
        &self.forms
    }

    pub fn freqs(&self) -> &[usize] {
        &self.freqs
    }

    /// Table row of a training form.
    pub fn row(&self, form: &str) -> Option<usize> {
        self.index.get(form).copied()
    }

    pub fn freq(&self, form: &str) -> usize {
        self.row(form).map_or(0, |r| self.freqs[r - 1])
    }

    /// Training types that have a pre-trained vector.
    pub fn coverage(&self) -> usize {
        self.forms
            .iter()
            .filter(|f| self.pretrained.get(f, self.lowercase).is_some())
            .count()
    }

    /// Probability that a training occurrence is replaced by the OOV vector.
    pub fn dropout_probability(&self, form: &str) -> f64 {
        self.dropout_rate / (1.0 + self.freq(form) as f64)
    }

    pub fn embed(&self, g: &mut Graph, form: &str, phase: Phase, rng: &mut impl Rng) -> Result<Var> {
        match (self.row(form), phase) {
            (Some(row), Phase::Train) => {
                let p = self.dropout_probability(form);
                let row = if p > 0.0 && rng.gen::<f64>() < p { 0 } else { row };
                g.lookup(self.table, row)
            }
            (Some(row), Phase::Test) => g.lookup(self.table, row),
            (None, Phase::Test) => match self.pretrained.get(form, self.lowercase) {
                Some(v) => Ok(g.input(v.clone())),
                None => g.lookup(self.table, 0),
            },
            (None, Phase::Train) => g.lookup(self.table, 0),
        }
    }
}

/// Builds the word table for a training set, copying pre-trained rows in
/// when the configuration uses them.
pub fn init_word_table(
    store: &mut ParamStore,
    train: &Treebank,
    config: &RepresentationConfig,
    pretrained: Option<&Pretrained>,
    rng: &mut impl Rng,
) -> Result<WordLookup> {
    let (forms, freqs) = train_vocabulary(train);
    let pretrained = match (config.use_ext, pretrained) {
        (true, Some(p)) => {
            if p.dim != config.word_dim {
                return Err(Error::Config(format!(
                    "pre-trained vectors have dimension {}, expected {}",
                    p.dim, config.word_dim
                )));
            }
            p.clone()
        }
        (true, None) => return Err(Error::Config("system uses pre-trained embeddings but none were given".into())),
        (false, _) => Pretrained::default(),
    };
    let lookup = WordLookup::new(store, forms, freqs, pretrained, config, rng);
    let table = store.get_mut(lookup.table);
    for (i, form) in lookup.forms.iter().enumerate() {
        if let Some(v) = lookup.pretrained.get(form, lookup.lowercase) {
            table.row_mut(i + 1).copy_from_slice(v);
        }
    }
    Ok(lookup)
}

/// Character embeddings read by a BiLSTM; index 0 is the unknown character.
#[derive(Clone, Debug)]
pub struct CharModel {
    pub table: ParamId,
    pub bilstm: BiLstm,
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharModel {
    /// Forward and backward halves split the output size, the forward one
    /// taking the extra unit when it is odd.
    pub fn new(store: &mut ParamStore, chars: Vec<char>, emb_dim: usize, out: usize, rng: &mut impl Rng) -> Self {
        let table = Tensor::glorot(chars.len() + 1, emb_dim, 1, emb_dim, rng);
        let table = store.add_table("char.table", table);
        let bwd = out / 2;
        let bilstm = BiLstm::new(store, "char.lstm", emb_dim, out - bwd, bwd, rng);
        let index = chars.iter().enumerate().map(|(i, c)| (*c, i + 1)).collect();
        CharModel {
            table,
            bilstm,
            chars,
            index,
        }
    }

    /// Characters of the training forms, in order of first occurrence.
    pub fn charset(train: &Treebank) -> Vec<char> {
        let mut seen = std::collections::HashSet::new();
        train
            .tokens()
            .flat_map(|t| t.form.chars())
            .filter(|c| seen.insert(*c))
            .collect()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn output_size(&self) -> usize {
        self.bilstm.output_size()
    }

    pub fn char_index(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(0)
    }

    pub fn embed(&self, g: &mut Graph, form: &str) -> Result<Var> {
        if form.is_empty() {
            return Err(Error::Empty("character encoding of an empty form".into()));
        }
        let xs = form
            .chars()
            .map(|c| g.lookup(self.table, self.char_index(c)))
            .collect::<Result<Vec<_>>>()?;
        self.bilstm.final_states(g, &xs)
    }
}

/// UPOS embeddings; row 0 is the unknown tag.
#[derive(Clone, Debug)]
pub struct PosEmbedding {
    pub table: ParamId,
}

impl PosEmbedding {
    pub fn new(store: &mut ParamStore, dim: usize, rng: &mut impl Rng) -> Self {
        let table = Tensor::glorot(UPOS_TAGS.len() + 1, dim, 1, dim, rng);
        PosEmbedding {
            table: store.add_table("pos.table", table),
        }
    }

    pub fn tag_index(tag: &str) -> usize {
        UPOS_TAGS.iter().position(|t| *t == tag).map_or(0, |i| i + 1)
    }

    pub fn embed(&self, g: &mut Graph, tag: &str) -> Result<Var> {
        g.lookup(self.table, Self::tag_index(tag))
    }
}

/// All input components of one system.
#[derive(Clone, Debug)]
pub struct Representation {
    pub config: RepresentationConfig,
    pub words: WordLookup,
    pub chars: Option<CharModel>,
    pub pos: Option<PosEmbedding>,
}

impl Representation {
    pub fn build(
        store: &mut ParamStore,
        train: &Treebank,
        config: &RepresentationConfig,
        pretrained: Option<&Pretrained>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let words = init_word_table(store, train, config, pretrained, rng)?;
        let chars = config
            .use_char
            .then(|| CharModel::new(store, CharModel::charset(train), config.char_emb_dim, config.char_bilstm_out, rng));
        let pos = config.use_pos.then(|| PosEmbedding::new(store, config.pos_dim, rng));
        Ok(Representation {
            config: config.clone(),
            words,
            chars,
            pos,
        })
    }

    /// Rebuilds the components over known vocabularies, e.g. when loading a
    /// checkpoint. Table contents are random until overwritten.
    pub fn from_parts(
        store: &mut ParamStore,
        config: &RepresentationConfig,
        forms: Vec<String>,
        freqs: Vec<usize>,
        chars: Vec<char>,
        pretrained: Pretrained,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let words = WordLookup::new(store, forms, freqs, pretrained, config, rng);
        let chars = config
            .use_char
            .then(|| CharModel::new(store, chars, config.char_emb_dim, config.char_bilstm_out, rng));
        let pos = config.use_pos.then(|| PosEmbedding::new(store, config.pos_dim, rng));
        Ok(Representation {
            config: config.clone(),
            words,
            chars,
            pos,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.token_dim()
    }

    /// x_i = word ∘ char ∘ pos, with absent parts left out. Training reads the
    /// gold tag, testing the overlaid predicted tag.
    pub fn token_vector(&self, g: &mut Graph, token: &Token, phase: Phase, rng: &mut impl Rng) -> Result<Var> {
        let mut parts = vec![self.words.embed(g, &token.form, phase, rng)?];
        if let Some(cm) = &self.chars {
            parts.push(cm.embed(g, &token.form)?);
        }
        if let Some(pe) = &self.pos {
            let tag = match phase {
                Phase::Train => token.upos.as_str(),
                Phase::Test => token.predicted_upos.as_deref().ok_or_else(|| {
                    Error::Config(format!("token {} ({}) has no predicted POS tag", token.id, token.form))
                })?,
            };
            parts.push(pe.embed(g, tag)?);
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            g.concat(&parts)
        }
    }
}
