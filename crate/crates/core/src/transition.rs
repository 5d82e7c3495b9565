//! Arc-hybrid transition system with an online-reordering SWAP, plus the
//! static-dynamic training oracle.
//!
//! SWAP moves the stack top back into the buffer behind the buffer front.
//! It is only legal when the stack top precedes the buffer front in the
//! original word order, so every pair of words is swapped at most once.
//!
//! The oracle decides SWAP statically from the projective order of the gold
//! tree (an in-order traversal): whenever the stack top comes after the
//! buffer front in that order, SWAP is the only correct move. All other
//! transitions are costed dynamically as the number of gold arcs that stop
//! being reachable.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::conllu::Sentence;
use crate::error::{Error, Result};

/// Label given to words left unattached when a parse is read off.
pub const FALLBACK_LABEL: &str = "root";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransitionKind {
    Shift,
    LeftArc,
    RightArc,
    Swap,
}

impl TransitionKind {
    pub const ALL: [TransitionKind; 4] = [
        TransitionKind::Shift,
        TransitionKind::LeftArc,
        TransitionKind::RightArc,
        TransitionKind::Swap,
    ];

    pub fn is_arc(self) -> bool {
        matches!(self, TransitionKind::LeftArc | TransitionKind::RightArc)
    }

    fn bit(self) -> u8 {
        1 << self as u8
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransitionKind::Shift => "SHIFT",
            TransitionKind::LeftArc => "LEFT-ARC",
            TransitionKind::RightArc => "RIGHT-ARC",
            TransitionKind::Swap => "SWAP",
        })
    }
}

/// A small set of transition kinds.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct KindSet(u8);

impl KindSet {
    pub fn empty() -> Self {
        KindSet(0)
    }

    pub fn insert(&mut self, kind: TransitionKind) {
        self.0 |= kind.bit();
    }

    pub fn contains(self, kind: TransitionKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = TransitionKind> {
        TransitionKind::ALL
            .into_iter()
            .filter(move |k| self.contains(*k))
    }
}

impl FromIterator<TransitionKind> for KindSet {
    fn from_iter<I: IntoIterator<Item = TransitionKind>>(iter: I) -> Self {
        let mut set = KindSet::empty();
        for k in iter {
            set.insert(k);
        }
        set
    }
}

impl fmt::Debug for KindSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transition {
    pub kind: TransitionKind,
    /// Present exactly for arc transitions.
    pub label: Option<String>,
}

impl Transition {
    pub fn shift() -> Self {
        Transition {
            kind: TransitionKind::Shift,
            label: None,
        }
    }

    pub fn swap() -> Self {
        Transition {
            kind: TransitionKind::Swap,
            label: None,
        }
    }

    pub fn left(label: &str) -> Self {
        Transition {
            kind: TransitionKind::LeftArc,
            label: Some(label.to_owned()),
        }
    }

    pub fn right(label: &str) -> Self {
        Transition {
            kind: TransitionKind::RightArc,
            label: Some(label.to_owned()),
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "{}({})", self.kind, l),
            None => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Arc {
    pub head: usize,
    pub label: String,
}

/// Parser state over a sentence of `n` words; 0 is the synthetic root.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    stack: Vec<usize>,
    buffer: VecDeque<usize>,
    /// Indexed by dependent id; slot 0 is unused.
    arcs: Vec<Option<Arc>>,
}

impl Configuration {
    pub fn new(n: usize) -> Self {
        Configuration {
            stack: vec![0],
            buffer: (1..=n).collect(),
            arcs: vec![None; n + 1],
        }
    }

    /// Builds a configuration from explicit parts, checking the partition
    /// invariant.
    pub fn from_parts(n: usize, stack: Vec<usize>, buffer: Vec<usize>, arcs: Vec<(usize, usize, String)>) -> Result<Self> {
        let mut seen = vec![false; n + 1];
        let mut arc_vec = vec![None; n + 1];
        for &(head, dep, ref label) in &arcs {
            if dep == 0 || dep > n || head > n {
                return Err(Error::contract(format!("arc {head}->{dep} out of range")));
            }
            if arc_vec[dep].is_some() {
                return Err(Error::contract(format!("word {dep} has two heads")));
            }
            arc_vec[dep] = Some(Arc {
                head,
                label: label.clone(),
            });
        }
        for &x in stack.iter().chain(&buffer) {
            if x > n || seen[x] || (x > 0 && arc_vec[x].is_some()) {
                return Err(Error::contract(format!("word {x} placed twice")));
            }
            seen[x] = true;
        }
        if stack.first() != Some(&0) {
            return Err(Error::contract("stack must start with the root"));
        }
        for x in 1..=n {
            if !seen[x] && arc_vec[x].is_none() {
                return Err(Error::contract(format!("word {x} missing")));
            }
        }
        Ok(Configuration {
            stack,
            buffer: buffer.into(),
            arcs: arc_vec,
        })
    }

    pub fn initial(sentence: &Sentence) -> Self {
        Configuration::new(sentence.len())
    }

    /// Number of words, excluding the root.
    pub fn len(&self) -> usize {
        self.arcs.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bottom to top.
    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    /// Front first.
    pub fn buffer(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.buffer.iter().copied()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn buffer_front(&self) -> Option<usize> {
        self.buffer.front().copied()
    }

    /// `i`-th item from the stack top (0 = top).
    pub fn stack_item(&self, i: usize) -> Option<usize> {
        self.stack.len().checked_sub(i + 1).map(|j| self.stack[j])
    }

    pub fn arc(&self, dependent: usize) -> Option<&Arc> {
        self.arcs.get(dependent).and_then(Option::as_ref)
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, &str)> + '_ {
        self.arcs
            .iter()
            .enumerate()
            .filter_map(|(d, a)| a.as_ref().map(|a| (a.head, d, a.label.as_str())))
    }

    pub fn is_terminal(&self) -> bool {
        self.buffer.is_empty() && self.stack.len() == 1
    }

    pub fn legal(&self) -> KindSet {
        let mut set = KindSet::empty();
        let top = self.stack_item(0);
        let front = self.buffer_front();
        if front.is_some() {
            set.insert(TransitionKind::Shift);
        }
        if let (Some(s0), Some(b0)) = (top, front) {
            if s0 != 0 {
                set.insert(TransitionKind::LeftArc);
                if s0 < b0 {
                    set.insert(TransitionKind::Swap);
                }
            }
        }
        if self.stack.len() >= 2 && top != Some(0) {
            set.insert(TransitionKind::RightArc);
        }
        set
    }

    pub fn apply(&mut self, t: &Transition) -> Result<()> {
        if !self.legal().contains(t.kind) {
            return Err(Error::contract(format!("{t} is not legal here")));
        }
        if t.kind.is_arc() != t.label.is_some() {
            return Err(Error::contract(format!("{t}: label must accompany arc transitions only")));
        }
        let label = t.label.as_deref().unwrap_or("");
        self.apply_kind(t.kind, label);
        Ok(())
    }

    /// Applies a transition known to be legal.
    pub(crate) fn apply_kind(&mut self, kind: TransitionKind, label: &str) {
        match kind {
            TransitionKind::Shift => {
                let b0 = self.buffer.pop_front().expect("shift on empty buffer");
                self.stack.push(b0);
            }
            TransitionKind::LeftArc => {
                let dep = self.stack.pop().expect("left-arc on empty stack");
                let head = self.buffer[0];
                self.arcs[dep] = Some(Arc {
                    head,
                    label: label.to_owned(),
                });
            }
            TransitionKind::RightArc => {
                let dep = self.stack.pop().expect("right-arc on empty stack");
                let head = *self.stack.last().expect("right-arc without second item");
                self.arcs[dep] = Some(Arc {
                    head,
                    label: label.to_owned(),
                });
            }
            TransitionKind::Swap => {
                let s0 = self.stack.pop().expect("swap on empty stack");
                self.buffer.insert(1, s0);
            }
        }
    }

    /// The head and dependent an arc transition of `kind` would connect.
    pub fn arc_endpoints(&self, kind: TransitionKind) -> Option<(usize, usize)> {
        match kind {
            TransitionKind::LeftArc => Some((self.buffer_front()?, self.stack_item(0)?)),
            TransitionKind::RightArc => Some((self.stack_item(1)?, self.stack_item(0)?)),
            _ => None,
        }
    }

    /// Copies the predicted arcs onto `sentence`. Unattached words go to the
    /// root with [`FALLBACK_LABEL`].
    pub fn extract_tree(&self, sentence: &Sentence) -> Result<Sentence> {
        if !self.is_terminal() {
            return Err(Error::contract("extract_tree on a non-terminal configuration"));
        }
        if sentence.len() != self.len() {
            return Err(Error::contract("sentence length does not match configuration"));
        }
        let mut out = sentence.clone();
        for tok in &mut out.tokens {
            match &self.arcs[tok.id] {
                Some(arc) => {
                    tok.head = arc.head;
                    tok.deprel = arc.label.clone();
                }
                None => {
                    tok.head = 0;
                    tok.deprel = FALLBACK_LABEL.to_owned();
                }
            }
        }
        Ok(out)
    }
}

/// Upper bound on the transitions of any legal derivation for `n` words.
pub fn max_transitions(n: usize) -> usize {
    n * (n + 1)
}

/// Rank of every node (root included) in the in-order traversal of the tree
/// given by `heads` (`heads[0]` is ignored).
pub fn projective_order(heads: &[usize]) -> Vec<usize> {
    let n = heads.len().saturating_sub(1);
    let mut children = vec![Vec::new(); n + 1];
    for d in 1..=n {
        children[heads[d]].push(d);
    }
    let mut rank = vec![0; n + 1];
    let mut next = 0;
    // (node, expanded) pairs; children lists are already sorted by id
    let mut todo = vec![(0usize, false)];
    while let Some((node, expanded)) = todo.pop() {
        if expanded {
            rank[node] = next;
            next += 1;
            continue;
        }
        for &c in children[node].iter().rev().filter(|&&c| c > node) {
            todo.push((c, false));
        }
        todo.push((node, true));
        for &c in children[node].iter().rev().filter(|&&c| c < node) {
            todo.push((c, false));
        }
    }
    rank
}

/// Costs of every legal transition kind in a configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleOutcome {
    pub zero_cost: KindSet,
    pub costs: BTreeMap<TransitionKind, usize>,
}

/// Cost of an arc transition as a function of its label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArcCost {
    /// Arcs lost regardless of the label.
    pub base: usize,
    /// Gold label of the dependent when the proposed head is its gold head.
    pub gold_label: Option<String>,
    /// Whether the dependent's gold arc was still reachable.
    pub dependent_reachable: bool,
}

impl ArcCost {
    pub fn cost(&self, label: &str) -> usize {
        let correct = self.gold_label.as_deref() == Some(label);
        self.base + usize::from(self.dependent_reachable && !correct)
    }

    /// Cost with the best possible label.
    pub fn min_cost(&self) -> usize {
        self.base + usize::from(self.dependent_reachable && self.gold_label.is_none())
    }
}

/// Costs of all legal transitions, labels resolved lazily for arcs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionCosts {
    pub shift: Option<usize>,
    pub swap: Option<usize>,
    pub left: Option<ArcCost>,
    pub right: Option<ArcCost>,
}

impl TransitionCosts {
    pub fn cost(&self, kind: TransitionKind, label: Option<&str>) -> Option<usize> {
        match kind {
            TransitionKind::Shift => self.shift,
            TransitionKind::Swap => self.swap,
            TransitionKind::LeftArc => self.left.as_ref().map(|c| c.cost(label.unwrap_or(""))),
            TransitionKind::RightArc => self.right.as_ref().map(|c| c.cost(label.unwrap_or(""))),
        }
    }

    pub fn min_cost(&self, kind: TransitionKind) -> Option<usize> {
        match kind {
            TransitionKind::Shift => self.shift,
            TransitionKind::Swap => self.swap,
            TransitionKind::LeftArc => self.left.as_ref().map(ArcCost::min_cost),
            TransitionKind::RightArc => self.right.as_ref().map(ArcCost::min_cost),
        }
    }
}

/// Gold information for one sentence.
#[derive(Clone, Debug)]
pub struct Oracle {
    heads: Vec<usize>,
    labels: Vec<String>,
    order: Vec<usize>,
}

impl Oracle {
    /// Fails when the gold heads do not form a tree.
    pub fn new(sentence: &Sentence) -> Result<Self> {
        sentence.validate(0)?;
        let heads = sentence.heads();
        let labels = std::iter::once(String::new())
            .chain(sentence.tokens.iter().map(|t| t.deprel.clone()))
            .collect();
        let order = projective_order(&heads);
        Ok(Oracle {
            heads,
            labels,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.heads.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gold_head(&self, dep: usize) -> usize {
        self.heads[dep]
    }

    pub fn gold_label(&self, dep: usize) -> &str {
        &self.labels[dep]
    }

    pub fn projective_rank(&self, node: usize) -> usize {
        self.order[node]
    }

    /// Whether the gold tree is projective in the original word order.
    pub fn is_projective(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &r)| i == r)
    }

    /// SWAP is prescribed iff it is legal and the stack top comes after the
    /// buffer front in projective order.
    pub fn swap_prescribed(&self, cfg: &Configuration) -> bool {
        match (cfg.stack_item(0), cfg.buffer_front()) {
            (Some(s0), Some(b0)) => s0 != 0 && s0 < b0 && self.order[s0] > self.order[b0],
            _ => false,
        }
    }

    /// Words whose gold arc can still be built, indexed by word id.
    pub fn reachable(&self, cfg: &Configuration) -> Vec<bool> {
        let mut cfg = cfg.clone();
        while self.swap_prescribed(&cfg) {
            cfg.apply_kind(TransitionKind::Swap, "");
        }
        let n = self.len();
        // stack position (1-based) or 0 when not on the stack
        let mut stack_pos = vec![0usize; n + 1];
        for (i, &x) in cfg.stack.iter().enumerate() {
            stack_pos[x] = i + 1;
        }
        let mut in_buffer = vec![false; n + 1];
        let mut min_buffer_rank = usize::MAX;
        for &x in &cfg.buffer {
            in_buffer[x] = true;
            min_buffer_rank = min_buffer_rank.min(self.order[x]);
        }
        let releasable = |x: usize| min_buffer_rank < self.order[x];

        let mut out = vec![false; n + 1];
        for d in 1..=n {
            let h = self.heads[d];
            let d_alive = in_buffer[d] || stack_pos[d] > 0;
            let h_alive = in_buffer[h] || stack_pos[h] > 0;
            if !d_alive || !h_alive {
                continue;
            }
            out[d] = if in_buffer[d] || in_buffer[h] {
                true
            } else if stack_pos[h] < stack_pos[d] {
                stack_pos[h] + 1 == stack_pos[d] || releasable(d)
            } else {
                releasable(h)
            };
        }
        out
    }

    /// Label-aware costs of every legal transition.
    pub fn costs(&self, cfg: &Configuration) -> TransitionCosts {
        let legal = cfg.legal();
        let excluded = self.len() + 1;
        let mut costs = TransitionCosts {
            shift: None,
            swap: None,
            left: None,
            right: None,
        };
        let prescribed = self.swap_prescribed(cfg);
        if legal.contains(TransitionKind::Swap) {
            costs.swap = Some(if prescribed { 0 } else { excluded });
        }
        let before = self.reachable(cfg);
        for kind in legal.iter().filter(|k| *k != TransitionKind::Swap) {
            if prescribed {
                let flat = ArcCost {
                    base: excluded,
                    gold_label: None,
                    dependent_reachable: false,
                };
                match kind {
                    TransitionKind::Shift => costs.shift = Some(excluded),
                    TransitionKind::LeftArc => costs.left = Some(flat),
                    TransitionKind::RightArc => costs.right = Some(flat),
                    TransitionKind::Swap => {}
                }
                continue;
            }
            let endpoints = cfg.arc_endpoints(kind);
            let mut next = cfg.clone();
            next.apply_kind(kind, "");
            let after = self.reachable(&next);
            let base = (1..before.len())
                .filter(|&d| before[d] && !after[d] && endpoints.is_none_or(|(_, dep)| dep != d))
                .count();
            match (kind, endpoints) {
                (TransitionKind::Shift, _) => costs.shift = Some(base),
                (_, Some((head, dep))) => {
                    let arc = ArcCost {
                        base,
                        gold_label: (self.heads[dep] == head).then(|| self.labels[dep].clone()),
                        dependent_reachable: before[dep],
                    };
                    if kind == TransitionKind::LeftArc {
                        costs.left = Some(arc);
                    } else {
                        costs.right = Some(arc);
                    }
                }
                _ => unreachable!("arc transition without endpoints"),
            }
        }
        costs
    }

    /// Per-kind costs with the best label for arc kinds.
    pub fn dynamic_cost(&self, cfg: &Configuration) -> OracleOutcome {
        let costs = self.costs(cfg);
        let mut outcome = OracleOutcome {
            zero_cost: KindSet::empty(),
            costs: BTreeMap::new(),
        };
        for kind in TransitionKind::ALL {
            if let Some(c) = costs.min_cost(kind) {
                outcome.costs.insert(kind, c);
                if c == 0 {
                    outcome.zero_cost.insert(kind);
                }
            }
        }
        outcome
    }

    fn has_pending_dependents(&self, cfg: &Configuration, head: usize) -> bool {
        (1..=self.len()).any(|d| self.heads[d] == head && cfg.arcs[d].is_none())
    }

    /// Next transition of the canonical derivation.
    pub fn static_next(&self, cfg: &Configuration) -> Option<Transition> {
        if self.swap_prescribed(cfg) {
            return Some(Transition::swap());
        }
        if let Some(s0) = cfg.stack_item(0).filter(|&s| s != 0) {
            let complete = !self.has_pending_dependents(cfg, s0);
            if complete && cfg.buffer_front() == Some(self.heads[s0]) {
                return Some(Transition::left(&self.labels[s0]));
            }
            if complete && cfg.stack_item(1) == Some(self.heads[s0]) {
                return Some(Transition::right(&self.labels[s0]));
            }
        }
        cfg.buffer_front().map(|_| Transition::shift())
    }
}

/// Canonical transition sequence that rebuilds the gold tree exactly.
pub fn static_oracle(sentence: &Sentence) -> Result<Vec<Transition>> {
    let oracle = Oracle::new(sentence)?;
    let mut cfg = Configuration::initial(sentence);
    let mut seq = Vec::new();
    while !cfg.is_terminal() {
        let t = oracle
            .static_next(&cfg)
            .ok_or_else(|| Error::contract("static oracle stuck"))?;
        cfg.apply(&t)?;
        seq.push(t);
        if seq.len() > max_transitions(sentence.len()) {
            return Err(Error::contract("static oracle exceeded the transition bound"));
        }
    }
    Ok(seq)
}
