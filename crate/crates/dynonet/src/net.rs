//! The network: parameters, graph embedding, encoder and decoder on a tape.

use mutualfriends_autodiff::{BoundLstm, GraphEdge, Lstm, ParamId, ParamStore, Tape, Tensor, Var};
use mutualfriends_core::kgraph::{DialogueGraph, NodeKind};
use mutualfriends_core::{Kb, Result, Schema, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::tokens::{EntityTable, Step, Tok};
use crate::vocab::{Vocab, BOS, EOS};

const INIT_SCALE: f64 = 0.1;

/// Derived sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub num_attrs: usize,
    /// Node feature width F.
    pub feat: usize,
    /// Mention vector width (self and partner halves).
    pub mention: usize,
    /// Width of V^k(v) for one depth.
    pub node: usize,
    /// Width of the concatenated node embedding V(v).
    pub v: usize,
    pub vocab: usize,
    pub labels: usize,
    pub entities: usize,
}

/// Parameter handles.
#[derive(Debug, Clone, Copy)]
pub struct ParamIds {
    pub word_emb: ParamId,
    /// One row per schema attribute plus a final row for item tokens.
    pub type_emb: ParamId,
    pub enc: Lstm,
    pub dec: Lstm,
    pub inc_w: ParamId,
    pub inc_b: ParamId,
    /// Message weights split as `[W_node | W_rel]`.
    pub mp_node: ParamId,
    pub mp_rel: ParamId,
    /// Relation embedding table R, shared across depths.
    pub rel: ParamId,
    pub attn_v: ParamId,
    pub attn_h: ParamId,
    pub attn_w: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub id_in: Option<ParamId>,
    pub id_node: Option<ParamId>,
}

/// Parameters recorded on one tape.
#[derive(Debug, Clone, Copy)]
pub struct Bound {
    word_emb: Var,
    type_emb: Var,
    enc: BoundLstm,
    dec: BoundLstm,
    inc_w: Var,
    inc_b: Var,
    mp_node: Var,
    mp_rel: Var,
    rel: Var,
    attn_v: Var,
    attn_h: Var,
    attn_w: Var,
    out_w: Var,
    out_b: Var,
    id_in: Option<Var>,
    id_node: Option<Var>,
    zeros_v: Var,
    zeros_h: Var,
    zeros_m: Var,
    zeros_node: Var,
}

/// Per-perspective dialogue state on a tape.
#[derive(Debug, Clone)]
pub struct Live {
    pub side: Side,
    pub graph: DialogueGraph,
    pub m: Vec<Var>,
    pub h: Var,
    pub c: Var,
    /// Node embeddings used for the next decode.
    pub v: Var,
    pub attn_pre: Var,
}

/// Per-perspective dialogue state as plain values, for incremental use.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueState {
    pub side: Side,
    pub graph: DialogueGraph,
    pub m: Vec<Tensor>,
    pub h: Tensor,
    pub c: Tensor,
    pub v: Tensor,
    pub attn_pre: Tensor,
}

/// Architecture and vocabulary; parameter values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Net {
    pub config: ModelConfig,
    pub dims: Dims,
    pub ids: ParamIds,
    pub vocab: Vocab,
    pub schema: Schema,
    pub entities: EntityTable,
}

impl Net {
    /// Builds the architecture and a freshly initialised parameter store.
    pub fn new(config: ModelConfig, schema: Schema, vocab: Vocab) -> (Self, ParamStore) {
        let num_attrs = schema.attributes().len();
        let feat = DialogueGraph::feature_dim_for(num_attrs);
        let mention = config.mention_dim();
        let node = feat + mention;
        let v = (config.k + 1) * node;
        let entities = EntityTable::new(&schema);
        let dims = Dims {
            num_attrs,
            feat,
            mention,
            node,
            v,
            vocab: vocab.len(),
            labels: 2 * num_attrs + 2,
            entities: entities.len(),
        };
        let (h, e) = (config.hidden, config.emb);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut s = ParamStore::new();
        let mut u = |s: &mut ParamStore, name: &str, shape: &[usize]| {
            s.add_uniform(name, shape, INIT_SCALE, &mut rng)
        };
        let word_emb = u(&mut s, "word_emb", &[dims.vocab, e]);
        let type_emb = u(&mut s, "type_emb", &[num_attrs + 1, e]);
        let gate = if config.vector_gate { mention } else { 1 };
        let inc_w = u(&mut s, "inc.w", &[gate, 2 * mention]);
        let inc_b = u(&mut s, "inc.b", &[gate]);
        let mp_node = u(&mut s, "mp.node", &[node, node]);
        let mp_rel = u(&mut s, "mp.rel", &[node, config.rel_dim]);
        let rel = u(&mut s, "rel", &[dims.labels, config.rel_dim]);
        let attn_v = u(&mut s, "attn.v", &[h, v]);
        let attn_h = u(&mut s, "attn.h", &[h, h]);
        let attn_w = u(&mut s, "attn.w", &[1, h]);
        let out_w = u(&mut s, "out.w", &[dims.vocab, h]);
        let out_b = u(&mut s, "out.b", &[dims.vocab]);
        let (id_in, id_node) = if config.abstraction {
            (None, None)
        } else {
            (
                Some(u(&mut s, "id.in", &[dims.entities, e])),
                Some(u(&mut s, "id.node", &[dims.entities, node])),
            )
        };
        let enc = Lstm::new(&mut s, "enc", e + v, h, &mut rng);
        let dec = Lstm::new(&mut s, "dec", e + 2 * v, h, &mut rng);
        let ids = ParamIds {
            word_emb,
            type_emb,
            enc,
            dec,
            inc_w,
            inc_b,
            mp_node,
            mp_rel,
            rel,
            attn_v,
            attn_h,
            attn_w,
            out_w,
            out_b,
            id_in,
            id_node,
        };
        let net = Self {
            config,
            dims,
            ids,
            vocab,
            schema,
            entities,
        };
        (net, s)
    }

    pub fn bind(&self, t: &mut Tape) -> Bound {
        let p = &self.ids;
        Bound {
            word_emb: t.param(p.word_emb),
            type_emb: t.param(p.type_emb),
            enc: p.enc.bind(t),
            dec: p.dec.bind(t),
            inc_w: t.param(p.inc_w),
            inc_b: t.param(p.inc_b),
            mp_node: t.param(p.mp_node),
            mp_rel: t.param(p.mp_rel),
            rel: t.param(p.rel),
            attn_v: t.param(p.attn_v),
            attn_h: t.param(p.attn_h),
            attn_w: t.param(p.attn_w),
            out_w: t.param(p.out_w),
            out_b: t.param(p.out_b),
            id_in: p.id_in.map(|id| t.param(id)),
            id_node: p.id_node.map(|id| t.param(id)),
            zeros_v: t.leaf(Tensor::zeros(&[self.dims.v])),
            zeros_h: t.leaf(Tensor::zeros(&[self.config.hidden])),
            zeros_m: t.leaf(Tensor::zeros(&[self.dims.mention])),
            zeros_node: t.leaf(Tensor::zeros(&[self.dims.node])),
        }
    }

    /// Message-passing edges `(dst, src, label)`: every node receives from
    /// the targets of its outgoing edges.
    pub fn edges(&self, graph: &DialogueGraph) -> Vec<GraphEdge> {
        let mut edges = Vec::new();
        for v in 0..graph.len() {
            for &(nbr, label) in graph.neighbors(v) {
                edges.push((v, nbr, label.index(self.dims.num_attrs)));
            }
        }
        edges
    }

    pub fn features(&self, graph: &DialogueGraph) -> Tensor {
        let mut data = Vec::with_capacity(graph.len() * self.dims.feat);
        for v in 0..graph.len() {
            data.extend(graph.node_features(v).expect("node exists"));
        }
        Tensor::matrix(graph.len(), self.dims.feat, data)
    }

    /// V^0 = [F, M] per node (plus identity rows when abstraction is off).
    pub fn base_embedding(&self, t: &mut Tape, b: &Bound, graph: &DialogueGraph, m: &[Var]) -> Var {
        let f = t.leaf(self.features(graph));
        let mm = t.stack(m);
        let v0 = t.concat_cols(&[f, mm]);
        match b.id_node {
            None => v0,
            Some(table) => {
                let rows: Vec<Var> = graph
                    .nodes()
                    .iter()
                    .map(|n| match n.kind {
                        NodeKind::Entity(_) => {
                            let e = self.entities.index(&n.label).expect("schema entity");
                            t.row(table, e)
                        }
                        _ => b.zeros_node,
                    })
                    .collect();
                let ids = t.stack(&rows);
                t.add(v0, ids)
            }
        }
    }

    /// `[V^0, ..., V^K]` for every node as an `[n, (K+1) d_node]` matrix.
    pub fn embed(&self, t: &mut Tape, b: &Bound, graph: &DialogueGraph, m: &[Var]) -> Var {
        let edges = self.edges(graph);
        let mut depths = vec![self.base_embedding(t, b, graph, m)];
        if self.config.k > 0 {
            let q = t.linear(b.mp_rel, b.rel);
            for k in 1..=self.config.k {
                let p = t.linear(b.mp_node, depths[k - 1]);
                depths.push(t.edge_max(p, q, &edges, graph.len()));
            }
        }
        if depths.len() == 1 {
            depths[0]
        } else {
            t.concat_cols(&depths)
        }
    }

    pub fn attention_pre(&self, t: &mut Tape, b: &Bound, v: Var) -> Var {
        t.linear(b.attn_v, v)
    }

    /// Attention scores `s_v = w · tanh(W_v V(v) + W_h h)`.
    pub fn scores(&self, t: &mut Tape, b: &Bound, attn_pre: Var, h: Var) -> Var {
        let wh = t.linear(b.attn_h, h);
        let pre = t.add_row(attn_pre, wh);
        let act = t.tanh(pre);
        let s = t.linear(b.attn_w, act);
        let n = t.value(s).len();
        t.reshape(s, &[n])
    }

    /// Entity abstraction: the input vector for one token.
    pub fn token_input(&self, t: &mut Tape, b: &Bound, tok: Tok, graph: &DialogueGraph, v: Var) -> Var {
        match tok {
            Tok::Word(w) => {
                let e = t.row(b.word_emb, w);
                t.concat(&[e, b.zeros_v])
            }
            Tok::Entity(e) => {
                let mut ty = t.row(b.type_emb, self.entities.attr[e]);
                if let Some(table) = b.id_in {
                    let id = t.row(table, e);
                    ty = t.add(ty, id);
                }
                let node = match graph.entity_node_of(&self.entities.ids[e]) {
                    Some(n) => t.row(v, n),
                    None => b.zeros_v,
                };
                t.concat(&[ty, node])
            }
            Tok::Item(i) => {
                let ty = t.row(b.type_emb, self.dims.num_attrs);
                let node = match graph.item_node(i) {
                    Some(n) => t.row(v, n),
                    None => b.zeros_v,
                };
                t.concat(&[ty, node])
            }
        }
    }

    /// Output index of a target token in vocab ∪ nodes, if it can be produced.
    pub fn target_index(&self, tok: Tok, graph: &DialogueGraph) -> Option<usize> {
        match tok {
            Tok::Word(w) => Some(w),
            Tok::Entity(e) => graph
                .entity_node_of(&self.entities.ids[e])
                .map(|n| self.dims.vocab + n),
            Tok::Item(i) => graph.item_node(i).map(|n| self.dims.vocab + n),
        }
    }

    pub fn start(&self, t: &mut Tape, b: &Bound, kb: &Kb, side: Side) -> Result<Live> {
        let graph = DialogueGraph::from_kb(kb, &self.schema)?;
        let m = vec![b.zeros_m; graph.len()];
        let v = self.embed(t, b, &graph, &m);
        let attn_pre = self.attention_pre(t, b, v);
        Ok(Live {
            side,
            graph,
            m,
            h: b.zeros_h,
            c: b.zeros_h,
            v,
            attn_pre,
        })
    }

    /// Reads one event: graph update, encoding, mention update and the
    /// embedding for the next decode.
    pub fn observe(&self, t: &mut Tape, b: &Bound, live: &mut Live, step: &Step) -> Result<()> {
        let relevant = if self.config.dynamic {
            let r = live
                .graph
                .apply_utterance(&step.entities, &self.schema, step.speaker)?;
            live.m.resize(live.graph.len(), b.zeros_m);
            Some(r)
        } else {
            None
        };
        let v_pre = match relevant {
            Some(_) => self.embed(t, b, &live.graph, &live.m),
            None => live.v,
        };
        let (mut h, mut c) = (live.h, live.c);
        for &tok in &step.input {
            let x = self.token_input(t, b, tok, &live.graph, v_pre);
            (h, c) = b.enc.step(t, x, h, c);
        }
        live.h = h;
        live.c = c;
        if let Some(relevant) = relevant {
            let tagged = if step.speaker == live.side {
                t.concat(&[h, b.zeros_h])
            } else {
                t.concat(&[b.zeros_h, h])
            };
            for &node in &relevant.0 {
                live.m[node] = self.mention_update(t, b, live.m[node], tagged);
            }
            live.v = self.embed(t, b, &live.graph, &live.m);
            live.attn_pre = self.attention_pre(t, b, live.v);
        }
        Ok(())
    }

    /// `M' = λ M + (1 - λ) ũ` with `λ = σ(W_inc [M, ũ] + b)`.
    pub fn mention_update(&self, t: &mut Tape, b: &Bound, m: Var, tagged: Var) -> Var {
        let x = t.concat(&[m, tagged]);
        let z = t.linear(b.inc_w, x);
        let z = t.add(z, b.inc_b);
        let gate = t.sigmoid(z);
        t.lerp(gate, m, tagged)
    }

    /// Decoder state at the start of an utterance.
    pub fn decode_start(&self, t: &mut Tape, b: &Bound, live: &Live) -> DecodeState {
        let s = self.scores(t, b, live.attn_pre, live.h);
        let alpha = t.softmax(s, 1.0);
        let ctx = t.weighted_sum(alpha, live.v);
        DecodeState {
            h: live.h,
            c: live.c,
            ctx,
            prev: Tok::Word(BOS),
        }
    }

    /// One decoder step; returns logits over vocab ∪ nodes and advances `st`.
    pub fn decode_step(&self, t: &mut Tape, b: &Bound, live: &Live, st: &mut DecodeState) -> Var {
        let a = self.token_input(t, b, st.prev, &live.graph, live.v);
        let x = t.concat(&[a, st.ctx]);
        let (h, c) = b.dec.step(t, x, st.h, st.c);
        let s = self.scores(t, b, live.attn_pre, h);
        let wv = t.linear(b.out_w, h);
        let words = t.add(wv, b.out_b);
        let logits = t.concat(&[words, s]);
        let alpha = t.softmax(s, 1.0);
        st.ctx = t.weighted_sum(alpha, live.v);
        st.h = h;
        st.c = c;
        logits
    }

    /// Teacher-forced token losses for one of the perspective's own events.
    pub fn decode_losses(&self, t: &mut Tape, b: &Bound, live: &Live, target: &[Tok]) -> Vec<Var> {
        let mut st = self.decode_start(t, b, live);
        let mut losses = Vec::new();
        for &y in target.iter().chain(std::iter::once(&Tok::Word(EOS))) {
            let logits = self.decode_step(t, b, live, &mut st);
            if let Some(idx) = self.target_index(y, &live.graph) {
                losses.push(t.cross_entropy(logits, idx, None));
            }
            st.prev = y;
        }
        losses
    }

    /// Sum of token losses over a whole example and the number of scored tokens.
    pub fn example_loss(&self, t: &mut Tape, ex: &crate::Example) -> Result<(Option<Var>, usize)> {
        let b = self.bind(t);
        let mut live = self.start(t, &b, &ex.kb, ex.side)?;
        let mut losses = Vec::new();
        for step in &ex.steps {
            if step.speaker == ex.side {
                losses.extend(self.decode_losses(t, &b, &live, &step.target));
            }
            self.observe(t, &b, &mut live, step)?;
        }
        if losses.is_empty() {
            return Ok((None, 0));
        }
        let n = losses.len();
        let stacked = t.concat(&losses);
        Ok((Some(t.sum(stacked)), n))
    }

    pub fn live_from_state(&self, t: &mut Tape, st: &DialogueState) -> Live {
        Live {
            side: st.side,
            graph: st.graph.clone(),
            m: st.m.iter().map(|x| t.leaf(x.clone())).collect(),
            h: t.leaf(st.h.clone()),
            c: t.leaf(st.c.clone()),
            v: t.leaf(st.v.clone()),
            attn_pre: t.leaf(st.attn_pre.clone()),
        }
    }

    pub fn state_from_live(&self, t: &Tape, live: Live) -> DialogueState {
        DialogueState {
            side: live.side,
            m: live.m.iter().map(|&x| t.value(x).clone()).collect(),
            h: t.value(live.h).clone(),
            c: t.value(live.c).clone(),
            v: t.value(live.v).clone(),
            attn_pre: t.value(live.attn_pre).clone(),
            graph: live.graph,
        }
    }
}

/// Running decoder state within one utterance.
#[derive(Debug, Clone, Copy)]
pub struct DecodeState {
    pub h: Var,
    pub c: Var,
    pub ctx: Var,
    pub prev: Tok,
}
