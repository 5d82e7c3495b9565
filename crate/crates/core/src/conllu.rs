//! CoNLL-U reading and writing, tag overlays and treebank statistics.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// The universal part-of-speech inventory.
pub const UPOS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "SCONJ", "SYM", "VERB", "X",
];

/// Placeholder for absent CoNLL-U fields.
pub const EMPTY: &str = "_";

pub fn is_upos(tag: &str) -> bool {
    tag == EMPTY || UPOS_TAGS.contains(&tag)
}

/// One syntactic word of a sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
    /// Tag used as parser input at test time. Never written to CoNLL-U.
    pub predicted_upos: Option<String>,
}

impl Token {
    /// A token with only the columns the parser cares about filled in.
    pub fn new(id: usize, form: &str, upos: &str, head: usize, deprel: &str) -> Self {
        Token {
            id,
            form: form.to_owned(),
            lemma: EMPTY.to_owned(),
            upos: upos.to_owned(),
            xpos: EMPTY.to_owned(),
            feats: EMPTY.to_owned(),
            head,
            deprel: deprel.to_owned(),
            deps: EMPTY.to_owned(),
            misc: EMPTY.to_owned(),
            predicted_upos: None,
        }
    }
}

/// A sentence: `#` comments, tokens, and the multiword-token / empty-node
/// lines that are kept only for output.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    pub comments: Vec<String>,
    pub tokens: Vec<Token>,
    /// Range ("3-4") and empty-node ("3.1") lines, keyed by the number of
    /// tokens that precede them.
    pub passthrough: Vec<(usize, String)>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            tokens,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Gold heads indexed by token id; entry 0 is the root and holds 0.
    pub fn heads(&self) -> Vec<usize> {
        std::iter::once(0)
            .chain(self.tokens.iter().map(|t| t.head))
            .collect()
    }

    /// Checks ids, head range and acyclicity. `index` only labels errors.
    pub fn validate(&self, index: usize) -> Result<()> {
        let n = self.tokens.len();
        let structure = |message: String| Error::Structure {
            sentence: index,
            message,
        };
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.id != i + 1 {
                return Err(structure(format!(
                    "token ids must be 1..{n}, found {} at position {}",
                    tok.id,
                    i + 1
                )));
            }
            if tok.head > n {
                return Err(structure(format!(
                    "token {} has head {} outside the sentence",
                    tok.id, tok.head
                )));
            }
            if tok.head == tok.id {
                return Err(structure(format!("token {} is its own head", tok.id)));
            }
        }
        let heads = self.heads();
        // 0 = unvisited, 1 = on current path, 2 = known to reach the root
        let mut state = vec![0u8; n + 1];
        state[0] = 2;
        for start in 1..=n {
            let mut path = Vec::new();
            let mut node = start;
            while state[node] == 0 {
                state[node] = 1;
                path.push(node);
                node = heads[node];
            }
            if state[node] == 1 {
                return Err(structure(format!("head cycle through token {node}")));
            }
            for p in path {
                state[p] = 2;
            }
        }
        Ok(())
    }
}

/// A corpus in one language.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Treebank {
    pub sentences: Vec<Sentence>,
    pub language_id: String,
}

impl Treebank {
    pub fn new(language_id: &str, sentences: Vec<Sentence>) -> Self {
        Treebank {
            sentences,
            language_id: language_id.to_owned(),
        }
    }

    pub fn read(path: impl AsRef<Path>, language_id: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_conllu(&text, language_id)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }
}

fn is_special_id(id: &str) -> bool {
    id.contains('-') || id.contains('.')
}

fn parse_row(line: &str, lineno: usize) -> Result<Token> {
    let cols: Vec<&str> = line.split('\t').collect();
    let parse_err = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    if cols.len() != 10 {
        return Err(parse_err(format!("expected 10 columns, found {}", cols.len())));
    }
    let id = cols[0]
        .parse::<usize>()
        .ok()
        .filter(|&id| id > 0)
        .ok_or_else(|| parse_err(format!("invalid token id '{}'", cols[0])))?;
    let head = cols[6]
        .parse::<usize>()
        .map_err(|_| parse_err(format!("non-integer head '{}'", cols[6])))?;
    if !is_upos(cols[3]) {
        return Err(parse_err(format!("unknown UPOS tag '{}'", cols[3])));
    }
    Ok(Token {
        id,
        form: cols[1].to_owned(),
        lemma: cols[2].to_owned(),
        upos: cols[3].to_owned(),
        xpos: cols[4].to_owned(),
        feats: cols[5].to_owned(),
        head,
        deprel: cols[7].to_owned(),
        deps: cols[8].to_owned(),
        misc: cols[9].to_owned(),
        predicted_upos: None,
    })
}

/// Parses CoNLL-U text. Every sentence is validated as a tree.
pub fn parse_conllu(text: &str, language_id: &str) -> Result<Treebank> {
    let mut sentences = Vec::new();
    let mut current = Sentence::default();
    let mut started = false;

    let finish = |sent: Sentence, sentences: &mut Vec<Sentence>| -> Result<()> {
        sent.validate(sentences.len())?;
        sentences.push(sent);
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if started {
                finish(std::mem::take(&mut current), &mut sentences)?;
                started = false;
            }
            continue;
        }
        started = true;
        if line.starts_with('#') {
            if current.tokens.is_empty() && current.passthrough.is_empty() {
                current.comments.push(line.to_owned());
            } else {
                return Err(Error::Parse {
                    line: lineno,
                    message: "comment line inside a sentence".to_owned(),
                });
            }
            continue;
        }
        let id = line.split('\t').next().unwrap_or("");
        if is_special_id(id) {
            current
                .passthrough
                .push((current.tokens.len(), line.to_owned()));
            continue;
        }
        current.tokens.push(parse_row(line, lineno)?);
    }
    if started {
        finish(current, &mut sentences)?;
    }
    Ok(Treebank::new(language_id, sentences))
}

fn write_row(out: &mut String, tok: &Token) {
    let _ = writeln!(
        out,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        tok.id,
        tok.form,
        tok.lemma,
        tok.upos,
        tok.xpos,
        tok.feats,
        tok.head,
        tok.deprel,
        tok.deps,
        tok.misc
    );
}

/// Serialises a treebank; each sentence is followed by a blank line.
pub fn write_conllu(tb: &Treebank) -> String {
    let mut out = String::new();
    for sent in &tb.sentences {
        for comment in &sent.comments {
            out.push_str(comment);
            out.push('\n');
        }
        let mut extra = sent.passthrough.iter().peekable();
        for (i, tok) in sent.tokens.iter().enumerate() {
            while let Some((_, line)) = extra.next_if(|(pos, _)| *pos <= i) {
                out.push_str(line);
                out.push('\n');
            }
            write_row(&mut out, tok);
        }
        for (_, line) in extra {
            out.push_str(line);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Corpus statistics reported per treebank.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TreebankStats {
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub type_token_ratio: f64,
    pub charset_size: usize,
}

/// Sentence counts, type-token ratio and character-set size. Forms are
/// counted raw and case-sensitive.
pub fn compute_stats(train: &Treebank, dev: &Treebank) -> Result<TreebankStats> {
    let total = train.token_count();
    if total == 0 {
        return Err(Error::Empty("training treebank has no tokens".to_owned()));
    }
    let mut types = HashSet::new();
    let mut chars = HashSet::new();
    for tok in train.tokens() {
        types.insert(tok.form.as_str());
        chars.extend(tok.form.chars());
    }
    Ok(TreebankStats {
        train_sentences: train.sentences.len(),
        dev_sentences: dev.sentences.len(),
        type_token_ratio: types.len() as f64 / total as f64,
        charset_size: chars.len(),
    })
}

/// Where test-time POS tags come from.
#[derive(Clone, Copy, Debug)]
pub enum TagSource<'a> {
    /// Copy the gold UPOS column.
    Gold,
    /// UPOS column of an aligned CoNLL-U file.
    External(&'a Treebank),
}

/// Sets `predicted_upos` on every token. Gold annotation is left untouched.
pub fn overlay_tags(tb: &Treebank, source: TagSource<'_>) -> Result<Treebank> {
    let mut out = tb.clone();
    match source {
        TagSource::Gold => {
            for sent in &mut out.sentences {
                for tok in &mut sent.tokens {
                    tok.predicted_upos = Some(tok.upos.clone());
                }
            }
        }
        TagSource::External(tags) => {
            if tags.sentences.len() != out.sentences.len() {
                let sentence = tags.sentences.len().min(out.sentences.len());
                return Err(Error::Alignment {
                    sentence,
                    expected: out.sentences.get(sentence).map_or(0, Sentence::len),
                    found: tags.sentences.get(sentence).map_or(0, Sentence::len),
                });
            }
            for (i, (sent, tagged)) in out.sentences.iter_mut().zip(&tags.sentences).enumerate() {
                if sent.len() != tagged.len() {
                    return Err(Error::Alignment {
                        sentence: i,
                        expected: sent.len(),
                        found: tagged.len(),
                    });
                }
                for (tok, tag) in sent.tokens.iter_mut().zip(&tagged.tokens) {
                    tok.predicted_upos = Some(tag.upos.clone());
                }
            }
        }
    }
    Ok(out)
}
