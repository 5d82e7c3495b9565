//! The BiLSTM transition parser: a sentence encoder over token vectors, an
//! MLP scoring transitions from a window of stack and buffer items, greedy
//! decoding, and training against the dynamic oracle with exploration.

mod protocol;

pub use protocol::{run_protocol, EpochRecord, EpochTiming, ProtocolSummary, SeedSummary, TrainSchedule};

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::{Sentence, Treebank};
use crate::error::{Error, Result};
use crate::neural::gradcheck::CheckResult;
use crate::neural::{
    gradcheck, read_checkpoint, write_checkpoint, Adam, AdamConfig, Checkpoint, Graph, Mlp, ParamId, ParamStore,
    StackedBiLstm, Tensor, Var,
};
use crate::representation::{Phase, Pretrained, Representation, RepresentationConfig};
use crate::transition::{max_transitions, Configuration, KindSet, Oracle, Transition, TransitionKind, FALLBACK_LABEL};

pub const MARGIN: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Hinge,
    CrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub representation: RepresentationConfig,
    pub lstm_layers: usize,
    /// Per direction.
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub loss: LossKind,
    /// Epochs trained before exploration starts.
    pub k_warmup: usize,
    pub p_explore: f64,
    pub adam: AdamConfig,
}

impl ParserConfig {
    pub fn new(representation: RepresentationConfig) -> Self {
        ParserConfig {
            representation,
            lstm_layers: 2,
            lstm_hidden: 125,
            mlp_hidden: 100,
            loss: LossKind::Hinge,
            k_warmup: 3,
            p_explore: 0.1,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.representation.validate()?;
        if self.lstm_layers == 0 || self.lstm_hidden == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("network sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_explore) {
            return Err(Error::Config("exploration probability must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Number of MLP outputs for `labels` labels.
pub fn output_count(labels: usize) -> usize {
    2 + 2 * labels
}

/// Output layout: SHIFT, SWAP, then LEFT-ARC and RIGHT-ARC per label.
pub fn output_index(kind: TransitionKind, label: usize) -> usize {
    match kind {
        TransitionKind::Shift => 0,
        TransitionKind::Swap => 1,
        TransitionKind::LeftArc => 2 + 2 * label,
        TransitionKind::RightArc => 3 + 2 * label,
    }
}

pub fn output_transition(i: usize) -> (TransitionKind, Option<usize>) {
    match i {
        0 => (TransitionKind::Shift, None),
        1 => (TransitionKind::Swap, None),
        _ if i.is_multiple_of(2) => (TransitionKind::LeftArc, Some((i - 2) / 2)),
        _ => (TransitionKind::RightArc, Some((i - 3) / 2)),
    }
}

/// Outputs of the legal transitions, in tie-breaking order: SHIFT, LEFT-ARC,
/// RIGHT-ARC, SWAP, and by label within a kind.
fn legal_outputs(legal: KindSet, labels: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for kind in legal.iter() {
        if kind.is_arc() {
            out.extend((0..labels).map(|l| output_index(kind, l)));
        } else {
            out.push(output_index(kind, 0));
        }
    }
    out
}

/// Highest score; the first candidate wins ties.
fn argmax(scores: &[f64], candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in candidates {
        if best.is_none_or(|b| scores[i] > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Node ids feeding the scorer: top three stack items then the buffer front.
pub fn feature_window(cfg: &Configuration) -> [Option<usize>; 4] {
    [cfg.stack_item(0), cfg.stack_item(1), cfg.stack_item(2), cfg.buffer_front()]
}

/// Everything with parameters, separate from the optimiser and random state.
#[derive(Clone, Debug)]
pub struct Network {
    pub config: ParserConfig,
    pub rep: Representation,
    pub encoder: StackedBiLstm,
    /// Input vector standing in for the synthetic root.
    pub root: ParamId,
    /// Encoded vector for empty feature positions.
    pub pad: ParamId,
    pub mlp: Mlp,
    pub labels: Vec<String>,
    label_index: HashMap<String, usize>,
}

impl Network {
    fn new(store: &mut ParamStore, config: ParserConfig, rep: Representation, labels: Vec<String>, rng: &mut impl Rng) -> Self {
        let input = rep.dim();
        let hidden = config.lstm_hidden;
        let encoder = StackedBiLstm::new(store, "encoder", input, hidden, config.lstm_layers, rng);
        let root = store.add("root", Tensor::glorot(input, 1, 1, input, rng));
        let pad = store.add("pad", Tensor::glorot(2 * hidden, 1, 1, 2 * hidden, rng));
        let mlp = Mlp::new(store, "mlp", 8 * hidden, config.mlp_hidden, output_count(labels.len()), rng);
        let label_index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Network {
            config,
            rep,
            encoder,
            root,
            pad,
            mlp,
            labels,
            label_index,
        }
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.label_index.get(label).copied()
    }

    /// Contextual vectors for the root followed by every token.
    pub fn encode(&self, g: &mut Graph, sentence: &Sentence, phase: Phase, rng: &mut impl Rng) -> Result<Vec<Var>> {
        let mut xs = Vec::with_capacity(sentence.len() + 1);
        xs.push(g.param(self.root));
        for tok in &sentence.tokens {
            xs.push(self.rep.token_vector(g, tok, phase, rng)?);
        }
        self.encoder.run(g, &xs)
    }

    /// Scores of all outputs; `pad` is the graph node of the padding vector.
    pub fn score(&self, g: &mut Graph, encoded: &[Var], pad: Var, cfg: &Configuration) -> Result<Var> {
        let parts: Vec<Var> = feature_window(cfg)
            .iter()
            .map(|p| p.map_or(pad, |i| encoded[i]))
            .collect();
        let x = g.concat(&parts)?;
        self.mlp.forward(g, x)
    }

    pub fn transition(&self, output: usize) -> Transition {
        let (kind, label) = output_transition(output);
        Transition {
            kind,
            label: label.map(|l| self.labels[l].clone()),
        }
    }
}

/// Outcome of training on one sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SentenceStats {
    pub loss: f64,
    pub steps: usize,
    pub updated: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochStats {
    /// Mean loss per sentence.
    pub avg_loss: f64,
    pub sentences: usize,
    pub updates: usize,
    pub seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    config: ParserConfig,
    labels: Vec<String>,
    forms: Vec<String>,
    freqs: Vec<usize>,
    chars: Vec<char>,
    pretrained_forms: Vec<String>,
    pretrained_dim: usize,
    seed: u64,
    epoch: usize,
}

const PRETRAINED_TENSOR: &str = "pretrained";

pub struct ParserModel {
    pub net: Network,
    pub store: ParamStore,
    adam: Adam,
    rng: ChaCha8Rng,
    pub seed: u64,
    epoch: usize,
}

impl ParserModel {
    pub fn new(train: &Treebank, config: ParserConfig, pretrained: Option<&Pretrained>, seed: u64) -> Result<Self> {
        config.validate()?;
        if train.sentences.is_empty() {
            return Err(Error::Empty("training treebank".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let rep = Representation::build(&mut store, train, &config.representation, pretrained, &mut rng)?;
        let labels: Vec<String> = train
            .tokens()
            .map(|t| t.deprel.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let net = Network::new(&mut store, config, rep, labels, &mut rng);
        let adam = Adam::new(net.config.adam, &store);
        Ok(ParserModel {
            net,
            store,
            adam,
            rng,
            seed,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &ParserConfig {
        &self.net.config
    }

    pub fn labels(&self) -> &[String] {
        &self.net.labels
    }

    /// Epochs trained so far.
    pub fn epochs_trained(&self) -> usize {
        self.epoch
    }

    /// Encoded vectors (root first) in the test phase.
    pub fn encode_sentence(&self, sentence: &Sentence) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new(&self.store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = self.net.encode(&mut g, sentence, Phase::Test, &mut rng)?;
        Ok(enc.iter().map(|v| g.value(*v).to_vec()).collect())
    }

    /// Test-phase scores of every output in one configuration.
    pub fn scores(&self, sentence: &Sentence, cfg: &Configuration) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = self.net.encode(&mut g, sentence, Phase::Test, &mut rng)?;
        let pad = g.param(self.net.pad);
        let s = self.net.score(&mut g, &enc, pad, cfg)?;
        Ok(g.value(s).to_vec())
    }

    /// Greedy decoding: the best legal transition until terminal.
    pub fn parse(&self, sentence: &Sentence) -> Result<Sentence> {
        let n = sentence.len();
        let mut cfg = Configuration::initial(sentence);
        if n > 0 {
            let mut g = Graph::new(&self.store);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let enc = self.net.encode(&mut g, sentence, Phase::Test, &mut rng)?;
            let pad = g.param(self.net.pad);
            let mut steps = 0;
            while !cfg.is_terminal() && steps < max_transitions(n) {
                let s = self.net.score(&mut g, &enc, pad, &cfg)?;
                let best = argmax(g.value(s), legal_outputs(cfg.legal(), self.net.labels.len()))
                    .ok_or_else(|| Error::contract("no legal transition"))?;
                let (kind, label) = output_transition(best);
                cfg.apply_kind(kind, label.map_or("", |l| &self.net.labels[l]));
                steps += 1;
            }
        }
        // only reachable if the step bound were ever hit
        while !cfg.is_terminal() {
            if cfg.buffer_len() > 0 {
                cfg.apply_kind(TransitionKind::Shift, "");
            } else {
                cfg.apply_kind(TransitionKind::RightArc, FALLBACK_LABEL);
            }
        }
        cfg.extract_tree(sentence)
    }

    pub fn parse_treebank(&self, tb: &Treebank) -> Result<Treebank> {
        let sentences = tb.sentences.iter().map(|s| self.parse(s)).collect::<Result<_>>()?;
        Ok(Treebank {
            sentences,
            language_id: tb.language_id.clone(),
        })
    }

    /// One pass over a sentence, updating the parameters if any step had a
    /// loss.
    pub fn train_sentence(&mut self, sentence: &Sentence, explore: bool) -> Result<SentenceStats> {
        let oracle = Oracle::new(sentence)?;
        let n = sentence.len();
        if n == 0 {
            return Ok(SentenceStats::default());
        }
        let net = &self.net;
        let rng = &mut self.rng;
        let labels = net.labels.len();
        let mut g = Graph::new(&self.store);
        let enc = net.encode(&mut g, sentence, Phase::Train, rng)?;
        let pad = g.param(net.pad);
        let mut cfg = Configuration::initial(sentence);
        let mut losses = Vec::new();
        let mut loss_value = 0.0;
        let mut steps = 0;
        while !cfg.is_terminal() {
            if steps >= max_transitions(n) {
                return Err(Error::contract("training exceeded the transition bound"));
            }
            steps += 1;
            let scores = net.score(&mut g, &enc, pad, &cfg)?;
            let s = g.value(scores).to_vec();
            let costs = oracle.costs(&cfg);
            let cost = |i: usize| {
                let (kind, label) = output_transition(i);
                costs
                    .cost(kind, label.map(|l| net.labels[l].as_str()))
                    .expect("legal transitions have a cost")
            };
            let candidates = legal_outputs(cfg.legal(), labels);
            let good = argmax(&s, candidates.iter().copied().filter(|&i| cost(i) == 0))
                .ok_or_else(|| Error::contract("no zero-cost transition"))?;
            let bad = argmax(&s, candidates.iter().copied().filter(|&i| cost(i) > 0));
            match net.config.loss {
                LossKind::Hinge => {
                    if let Some(bad) = bad.filter(|&b| s[good] < s[b] + MARGIN) {
                        let a = g.pick(scores, good)?;
                        let b = g.pick(scores, bad)?;
                        let l = g.hinge(a, b, MARGIN)?;
                        loss_value += g.value(l)[0];
                        losses.push(l);
                    }
                }
                LossKind::CrossEntropy => {
                    let l = g.softmax_ce(scores, good)?;
                    loss_value += g.value(l)[0];
                    losses.push(l);
                }
            }
            let predicted = argmax(&s, candidates.iter().copied()).expect("non-terminal has a legal move");
            let (kind, _) = output_transition(predicted);
            let follow = if cost(predicted) == 0
                || (explore
                    && kind != TransitionKind::Swap
                    && !oracle.swap_prescribed(&cfg)
                    && rng.gen::<f64>() < net.config.p_explore)
            {
                predicted
            } else {
                good
            };
            let (kind, label) = output_transition(follow);
            cfg.apply_kind(kind, label.map_or("", |l| &net.labels[l]));
        }
        if losses.is_empty() {
            return Ok(SentenceStats {
                loss: 0.0,
                steps,
                updated: false,
            });
        }
        let total = g.add_n(&losses)?;
        let grads = g.backward(total)?.params;
        drop(g);
        self.adam.update(&mut self.store, grads);
        Ok(SentenceStats {
            loss: loss_value,
            steps,
            updated: true,
        })
    }

    /// One shuffled pass over the training set.
    pub fn train_epoch(&mut self, train: &Treebank) -> Result<EpochStats> {
        let start = Instant::now();
        let explore = self.epoch >= self.net.config.k_warmup && self.net.config.p_explore > 0.0;
        let mut order: Vec<usize> = (0..train.sentences.len()).collect();
        order.shuffle(&mut self.rng);
        let mut stats = EpochStats::default();
        let mut total = 0.0;
        for i in order {
            let s = self.train_sentence(&train.sentences[i], explore)?;
            total += s.loss;
            stats.updates += usize::from(s.updated);
            stats.sentences += 1;
        }
        stats.avg_loss = if stats.sentences > 0 {
            total / stats.sentences as f64
        } else {
            0.0
        };
        stats.seconds = start.elapsed().as_secs_f64();
        self.epoch += 1;
        Ok(stats)
    }

    /// Hinge loss summed along the static-oracle path, without updating.
    pub fn static_path_loss(&self, sentence: &Sentence) -> Result<f64> {
        let oracle = Oracle::new(sentence)?;
        let mut g = Graph::new(&self.store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = self.net.encode(&mut g, sentence, Phase::Test, &mut rng)?;
        let pad = g.param(self.net.pad);
        let mut cfg = Configuration::initial(sentence);
        let mut total = 0.0;
        while let Some(t) = oracle.static_next(&cfg) {
            if cfg.is_terminal() {
                break;
            }
            let s = self.net.score(&mut g, &enc, pad, &cfg)?;
            let s = g.value(s);
            let gold = output_index(t.kind, t.label.as_deref().and_then(|l| self.net.label_id(l)).unwrap_or(0));
            let worst_other = legal_outputs(cfg.legal(), self.net.labels.len())
                .into_iter()
                .filter(|&i| i != gold)
                .map(|i| s[i])
                .fold(f64::NEG_INFINITY, f64::max);
            total += (MARGIN - s[gold] + worst_other).max(0.0);
            cfg.apply(&t)?;
        }
        Ok(total)
    }

    /// Finite-difference check of the whole encode, score and hinge chain
    /// along the static-oracle path of `sentence`. The hinge pairs are fixed
    /// at the current parameters so the loss stays smooth around them.
    pub fn gradient_check(&mut self, sentence: &Sentence, max_per_param: usize) -> Result<CheckResult> {
        let oracle = Oracle::new(sentence)?;
        let mut steps = Vec::new();
        let mut cfg = Configuration::initial(sentence);
        while !cfg.is_terminal() {
            let t = oracle
                .static_next(&cfg)
                .ok_or_else(|| Error::contract("static oracle stuck"))?;
            let s = self.scores(sentence, &cfg)?;
            let good = output_index(t.kind, t.label.as_deref().and_then(|l| self.net.label_id(l)).unwrap_or(0));
            let bad = argmax(&s, legal_outputs(cfg.legal(), self.net.labels.len()).into_iter().filter(|&i| i != good));
            if let Some(bad) = bad.filter(|&b| (s[good] - s[b] - MARGIN).abs() > 1e-3) {
                steps.push((cfg.clone(), good, bad));
            }
            cfg.apply(&t)?;
        }
        if steps.is_empty() {
            return Err(Error::Empty("no scored step to check".into()));
        }
        let net = &self.net;
        gradcheck::check("pipeline", &mut self.store, &[], max_per_param, |g, _| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let enc = net.encode(g, sentence, Phase::Test, &mut rng)?;
            let pad = g.param(net.pad);
            let mut losses = Vec::new();
            for (cfg, good, bad) in &steps {
                let s = net.score(g, &enc, pad, cfg)?;
                let a = g.pick(s, *good)?;
                let b = g.pick(s, *bad)?;
                losses.push(g.hinge(a, b, MARGIN)?);
            }
            g.add_n(&losses)
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let words = &self.net.rep.words;
        let mut pretrained_forms: Vec<String> = words.pretrained.vectors.keys().cloned().collect();
        pretrained_forms.sort();
        let dim = words.pretrained.dim;
        let mut data = Vec::with_capacity(pretrained_forms.len() * dim);
        for f in &pretrained_forms {
            data.extend_from_slice(&words.pretrained.vectors[f]);
        }
        let meta = ModelMeta {
            config: self.net.config.clone(),
            labels: self.net.labels.clone(),
            forms: words.forms().to_vec(),
            freqs: words.freqs().to_vec(),
            chars: self.net.rep.chars.as_ref().map_or_else(Vec::new, |c| c.chars().to_vec()),
            pretrained_forms: pretrained_forms.clone(),
            pretrained_dim: dim,
            seed: self.seed,
            epoch: self.epoch,
        };
        let mut tensors: Vec<(String, Tensor)> = self.store.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        tensors.push((
            PRETRAINED_TENSOR.to_owned(),
            Tensor {
                rows: pretrained_forms.len(),
                cols: dim,
                data,
            },
        ));
        Checkpoint {
            meta: serde_json::to_value(meta).expect("model metadata serialises"),
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: ModelMeta = serde_json::from_value(ckpt.meta.clone())?;
        let table = ckpt
            .tensor(PRETRAINED_TENSOR)
            .ok_or_else(|| Error::Checkpoint("missing pre-trained table".into()))?;
        if table.rows != meta.pretrained_forms.len() || table.cols != meta.pretrained_dim {
            return Err(Error::Checkpoint("pre-trained table shape mismatch".into()));
        }
        let pretrained = Pretrained {
            dim: meta.pretrained_dim,
            vectors: meta
                .pretrained_forms
                .iter()
                .enumerate()
                .map(|(i, f)| (f.clone(), table.row(i).to_vec()))
                .collect(),
            rejected: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
        let mut store = ParamStore::new();
        let rep = Representation::from_parts(
            &mut store,
            &meta.config.representation,
            meta.forms,
            meta.freqs,
            meta.chars,
            pretrained,
            &mut rng,
        )?;
        let net = Network::new(&mut store, meta.config, rep, meta.labels, &mut rng);
        store.load_from(&ckpt.tensors)?;
        let adam = Adam::new(net.config.adam, &store);
        Ok(ParserModel {
            net,
            store,
            adam,
            rng,
            seed: meta.seed,
            epoch: meta.epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(path, &self.to_checkpoint())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&read_checkpoint(path)?)
    }
}
