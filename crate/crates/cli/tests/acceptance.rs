//! Acceptance run: one PASS/FAIL line per criterion, followed by the
//! numbers behind it. Exits non-zero if a gated criterion fails.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use mutualfriends_autodiff::{check_gradients, ParamStore, Tape, Tensor, Var};
use mutualfriends_core::agent::AgentRegistry;
use mutualfriends_core::kgraph::DialogueGraph;
use mutualfriends_core::lexicon::{classify_utterance, realize_entity, tokenize};
use mutualfriends_core::metrics::{corpus_stats, strategy_stats};
use mutualfriends_core::scenario::{alpha_groups, generate_scenarios, polya_sample, AlphaGroup};
use mutualfriends_core::schema::record_surface_forms;
use mutualfriends_core::selfplay::self_play;
use mutualfriends_core::session::{validate_pacing, ClockMode, Limits};
use mutualfriends_core::{Kb, Resources, Scenario, Schema, Side, SpeechAct, SurfaceFormStore, Transcript};
use mutualfriends_dynonet::vocab::SELECT;
use mutualfriends_dynonet::{
    build_vocab, halve_select, register, sampling_distribution, split_811, Example, Model, ModelConfig, Step, Tok,
    TrainOptions, Trainer, Vocab,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Run {
    failed: Vec<&'static str>,
}

impl Run {
    fn report(&mut self, name: &'static str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name);
        }
    }

    /// A criterion that is printed honestly but does not fail the run.
    fn report_ungated(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail} [not gated]", if pass { "PASS" } else { "FAIL" });
    }

    fn info(&self, name: &str, detail: String) {
        println!("INFO {name}: {detail}");
    }
}

fn main() {
    let mut run = Run { failed: Vec::new() };
    let start = Instant::now();
    scenarios(&mut run);
    autodiff(&mut run);
    message_passing(&mut run);
    semantics(&mut run);
    let corpus = rule_session(&mut run);
    metrics(&mut run, &corpus);
    lexicon(&mut run, &corpus);
    learning(&mut run);
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if !run.failed.is_empty() {
        println!("gated failures: {}", run.failed.join(", "));
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- scenarios

fn match_rate(n_values: usize, alpha: f64, trials: usize, seed: u64) -> f64 {
    let values: Vec<usize> = (0..n_values).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..trials)
        .filter(|_| {
            let d = polya_sample(&values, alpha, 2, &mut rng).unwrap();
            d[0] == d[1]
        })
        .count();
    hits as f64 / trials as f64
}

fn scenarios(run: &mut Run) {
    let t0 = Instant::now();
    let schema = Schema::bundled();
    let all = generate_scenarios(&schema, 10_000, 1).expect("generation");
    let unique = all
        .iter()
        .filter(|s| s.validate(&schema).is_ok() && s.shared_items().len() == 1)
        .count();
    let mut counts = BTreeMap::new();
    for s in &all {
        *counts.entry(s.n_items()).or_insert(0usize) += 1;
    }
    let expected = all.len() as f64 / 8.0;
    let chi2: f64 = (5..=12)
        .map(|n| {
            let o = counts.get(&n).copied().unwrap_or(0) as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    let in_range = counts.keys().all(|n| (5..=12).contains(n));
    let p = 1.0 - ChiSquared::new(7.0).unwrap().cdf(chi2);
    let skewed = match_rate(2, 0.3, 100_000, 11);
    let flat = match_rate(2, 3.0, 100_000, 12);
    let iid = match_rate(3, 1000.0, 100_000, 13);
    let secs = t0.elapsed().as_secs_f64();
    let pass = unique == all.len()
        && in_range
        && p > 0.01
        && (skewed - 0.8125).abs() <= 0.01
        && (flat - 4.0 / 7.0).abs() <= 0.01
        && (iid - 1.0 / 3.0).abs() <= 0.01
        && secs < 30.0;
    run.report(
        "scenario generator",
        pass,
        format!(
            "{unique}/{} unique-shared; N_S chi2 = {chi2:.2} (p = {p:.3}); match alpha=0.3 {skewed:.4} (0.8125), \
             alpha=3 {flat:.4} (0.5714), alpha=1000 {iid:.4} (0.3333); {secs:.1} s",
            all.len()
        ),
    );
}

// ----------------------------------------------------------------- autodiff

fn store_with(shapes: &[(&str, Vec<usize>)], seed: u64) -> ParamStore {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    for (name, shape) in shapes {
        s.add_uniform(name, shape, 1.0, &mut r);
    }
    s
}

fn reduce(t: &mut Tape, v: Var) -> Var {
    let n = t.value(v).len();
    let w = t.leaf(Tensor::new(
        t.value(v).shape.clone(),
        (0..n).map(|i| 0.3 + 0.17 * i as f64).collect(),
    ));
    let p = t.mul(v, w);
    t.sum(p)
}

const OPS: [&str; 22] = [
    "add", "sub", "mul", "scale", "sigmoid", "tanh", "linear_vec", "linear_mat", "concat", "concat_cols", "add_row",
    "slice", "stack", "rows", "max_set", "edge_max", "softmax", "weighted_sum", "lerp_scalar", "lerp_vector",
    "cross_entropy", "masked_cross_entropy",
];

fn op_error(op: &str, n: usize, m: usize, seed: u64) -> f64 {
    let mut s = store_with(
        &[
            ("a", vec![n]),
            ("b", vec![n]),
            ("w", vec![m, n]),
            ("x", vec![m, n]),
            ("q", vec![3, n]),
            ("g", vec![1]),
        ],
        seed,
    );
    let [a, b, w, x, q, g] = ["a", "b", "w", "x", "q", "g"].map(|k| s.id(k).unwrap());
    let f = |t: &mut Tape| {
        let (va, vb, vw, vx) = (t.param(a), t.param(b), t.param(w), t.param(x));
        let out = match op {
            "add" => t.add(va, vb),
            "sub" => t.sub(va, vb),
            "mul" => t.mul(va, vb),
            "scale" => t.scale(va, -1.7),
            "sigmoid" => t.sigmoid(va),
            "tanh" => t.tanh(va),
            "linear_vec" => t.linear(vw, va),
            "linear_mat" => t.linear(vw, vx),
            "concat" => t.concat(&[va, vw, vb]),
            "concat_cols" => {
                let vq = t.param(q);
                let top = t.rows(vx, &[0, 1, m - 1]);
                t.concat_cols(&[top, vq, top])
            }
            "add_row" => t.add_row(vx, va),
            "slice" => t.slice(vw, 1, m * n - 1),
            "stack" => t.stack(&[vb, va, vb]),
            "rows" => t.rows(vx, &[m - 1, 0, m - 1]),
            "max_set" => t.max_set(&[va, vb]),
            "edge_max" => {
                let vq = t.param(q);
                let edges: Vec<_> = (0..m).map(|src| (src % 2, src, src % 3)).collect();
                t.edge_max(vx, vq, &edges, 3)
            }
            "softmax" => t.softmax(va, 0.5),
            "weighted_sum" => {
                let wv = t.row(vw, 0);
                let wv = t.slice(wv, 0, m.min(n));
                let rows: Vec<usize> = (0..m.min(n)).collect();
                let xr = t.rows(vx, &rows);
                t.weighted_sum(wv, xr)
            }
            "lerp_scalar" => {
                let gs = t.param(g);
                let gs = t.sigmoid(gs);
                t.lerp(gs, va, vb)
            }
            "lerp_vector" => {
                let gv = t.sigmoid(vb);
                let r = t.row(vw, 0);
                t.lerp(gv, va, r)
            }
            "cross_entropy" => return t.cross_entropy(va, n - 1, None),
            "masked_cross_entropy" => {
                let mask: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
                return t.cross_entropy(va, 0, Some(&mask));
            }
            other => panic!("unknown op {other}"),
        };
        reduce(t, out)
    };
    check_gradients(&mut s, f, 1e-5, 64).max_rel_err
}

fn autodiff(run: &mut Run) {
    let t0 = Instant::now();
    let mut worst = ("", 0.0f64);
    for op in OPS {
        for (n, m, seed) in [(5, 4, 11), (2, 7, 3), (8, 2, 29)] {
            let e = op_error(op, n, m, seed);
            if e > worst.1 {
                worst = (op, e);
            }
        }
    }
    let m = tiny_model(ModelConfig { ..tiny_config() });
    let kb = two_item_kb();
    let mut end_to_end = 0.0f64;
    for side in [Side::A, Side::B] {
        let ex = Example {
            scenario_id: "grad".into(),
            side,
            kb: kb.clone(),
            steps: short_dialogue(&m, &kb),
        };
        let mut store = m.store.clone();
        let net = m.net.clone();
        let r = check_gradients(&mut store, |t| net.example_loss(t, &ex).unwrap().0.unwrap(), 1e-5, 12);
        end_to_end = end_to_end.max(r.max_rel_err);
    }
    let secs = t0.elapsed().as_secs_f64();
    run.report(
        "autodiff gradient checks",
        worst.1 < 1e-4 && end_to_end < 1e-3 && secs < 60.0,
        format!(
            "{} ops, worst per-op rel err {:.2e} ({}); DynoNet 2-item KB rel err {end_to_end:.2e}; {secs:.1} s",
            OPS.len(),
            worst.1,
            worst.0
        ),
    );
}

// ----------------------------------------------------------- shared models

const WORDS: &[&str] = &[
    "hi", "do", "you", "have", "any", "friends", "who", "like", "?", "yes", "no", "i", "went", "to", "work", "at",
    "anyone",
];

fn tiny_config() -> ModelConfig {
    ModelConfig {
        hidden: 4,
        emb: 3,
        k: 2,
        rel_dim: 3,
        seed: 1,
        ..ModelConfig::default()
    }
}

fn tiny_model(config: ModelConfig) -> Model {
    Model::new(config, Schema::bundled_small(), Vocab::build(WORDS.iter().copied(), 1))
}

fn kb(attrs: &[&str], items: &[&[&str]]) -> Kb {
    Kb {
        attributes: attrs.iter().map(|s| s.to_string()).collect(),
        items: items.iter().map(|row| row.iter().map(|s| s.to_string()).collect()).collect(),
    }
}

fn two_item_kb() -> Kb {
    kb(
        &["school", "company"],
        &[&["columbia-university", "google"], &["yale-university", "intel"]],
    )
}

fn w(m: &Model, word: &str) -> Tok {
    Tok::Word(m.net.vocab.id(word))
}

fn e(m: &Model, id: &str) -> Tok {
    Tok::Entity(m.net.entities.index(id).expect("entity in schema"))
}

fn utter(m: &Model, speaker: Side, toks: Vec<Tok>) -> Step {
    let entities = toks
        .iter()
        .filter_map(|t| match t {
            Tok::Entity(i) => Some(m.net.entities.ids[*i].clone()),
            _ => None,
        })
        .collect();
    Step {
        speaker,
        input: toks.clone(),
        target: toks,
        entities,
    }
}

fn short_dialogue(m: &Model, kb: &Kb) -> Vec<Step> {
    let mut sel = vec![Tok::Word(SELECT)];
    sel.extend(kb.items[0].iter().map(|id| e(m, id)));
    vec![
        utter(m, Side::A, vec![w(m, "i"), w(m, "went"), w(m, "to"), e(m, "columbia-university")]),
        utter(m, Side::B, vec![w(m, "no"), w(m, "anyone"), w(m, "at"), e(m, "amazon"), w(m, "?")]),
        Step {
            speaker: Side::A,
            input: sel,
            target: vec![Tok::Word(SELECT), Tok::Item(0)],
            entities: kb.items[0].clone(),
        },
    ]
}

fn state_after(m: &Model, kb: &Kb, side: Side, steps: &[Step]) -> mutualfriends_dynonet::DialogueState {
    let mut st = m.start(kb, side).unwrap();
    for s in steps {
        m.observe_step(&mut st, s).unwrap();
    }
    st
}

// --------------------------------------------------------- message passing

fn dot(w: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..x.len() {
        s += w[j] * x[j];
    }
    s
}

/// Plain recursive evaluation: depth 0 is [F, M]; depth k is the
/// elementwise max over out-edges of tanh(W_node V^{k-1} + W_rel R(label)),
/// zeros for an isolated node.
fn reference_depth(
    graph: &DialogueGraph,
    m: &[Vec<f64>],
    model: &Model,
    k: usize,
    v: usize,
) -> Vec<f64> {
    if k == 0 {
        let mut x = graph.node_features(v).unwrap();
        x.extend(&m[v]);
        return x;
    }
    let ids = &model.net.ids;
    let (w_node, w_rel, rel) = (model.store.get(ids.mp_node), model.store.get(ids.mp_rel), model.store.get(ids.rel));
    let d = w_node.shape[0];
    let nbrs = graph.neighbors(v);
    if nbrs.is_empty() {
        return vec![0.0; d];
    }
    let below: Vec<(Vec<f64>, usize)> = nbrs
        .iter()
        .map(|&(u, l)| (reference_depth(graph, m, model, k - 1, u), l.index(graph.num_attributes())))
        .collect();
    (0..d)
        .map(|i| {
            let mut best = f64::NEG_INFINITY;
            for (x, l) in &below {
                let msg = (dot(w_node.row(i), x) + dot(w_rel.row(i), rel.row(*l))).tanh();
                if best == f64::NEG_INFINITY || msg > best {
                    best = msg;
                }
            }
            best
        })
        .collect()
}

fn message_passing(run: &mut Run) {
    const ATTRS: [&str; 2] = ["school", "company"];
    const VALUES: [[&str; 2]; 2] = [["columbia-university", "yale-university"], ["google", "intel"]];
    let schema = Schema::bundled_small();
    let (mut graphs, mut compared, mut mismatched, mut k0_ok) = (0, 0usize, 0usize, true);
    for k in 0..=2 {
        let model = tiny_model(ModelConfig { k, seed: 7 + k as u64, ..tiny_config() });
        for n_items in 1..=2 {
            for n_attrs in 1..=2 {
                for picks in 0..16usize {
                    let rows: Vec<Vec<&str>> = (0..n_items)
                        .map(|i| (0..n_attrs).map(|a| VALUES[a][(picks >> (i * 2 + a)) & 1]).collect())
                        .collect();
                    let rows: Vec<&[&str]> = rows.iter().map(|r| r.as_slice()).collect();
                    let kb = kb(&ATTRS[..n_attrs], &rows);
                    let graph = DialogueGraph::from_kb(&kb, &schema).unwrap();
                    if graph.len() > 6 {
                        continue;
                    }
                    graphs += 1;
                    let mut rng = ChaCha8Rng::seed_from_u64(picks as u64 * 31 + k as u64);
                    let mention: Vec<Vec<f64>> = (0..graph.len())
                        .map(|_| (0..model.net.dims.mention).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .collect();
                    let mut t = Tape::new(&model.store);
                    let b = model.net.bind(&mut t);
                    let vars: Vec<_> = mention.iter().map(|r| t.leaf(Tensor::vector(r.clone()))).collect();
                    let got = model.net.embed(&mut t, &b, &graph, &vars);
                    let got = t.value(got).clone();
                    for v in 0..graph.len() {
                        let want: Vec<f64> = (0..=k).flat_map(|d| reference_depth(&graph, &mention, &model, d, v)).collect();
                        compared += want.len();
                        mismatched += got
                            .row(v)
                            .iter()
                            .zip(&want)
                            .filter(|(a, b)| a.to_bits() != b.to_bits())
                            .count()
                            + got.row(v).len().abs_diff(want.len());
                        if k == 0 {
                            let mut fm = graph.node_features(v).unwrap();
                            fm.extend(&mention[v]);
                            k0_ok &= got.row(v) == fm.as_slice();
                        }
                    }
                }
            }
        }
    }
    run.report(
        "message passing",
        mismatched == 0 && k0_ok && graphs > 0,
        format!("{graphs} graphs (<= 6 nodes, K = 0..2), {compared} values, {mismatched} bitwise mismatches; K=0 equals [F, M]: {k0_ok}"),
    );
}

// --------------------------------------------------------- model semantics

fn semantics(run: &mut Run) {
    // StanoNet: node embeddings never change across turns
    let m = tiny_model(ModelConfig { dynamic: false, ..tiny_config() });
    let kb2 = two_item_kb();
    let steps = short_dialogue(&m, &kb2);
    let st0 = m.start(&kb2, Side::A).unwrap();
    let mut st = st0.clone();
    let mut frozen = true;
    for s in &steps {
        m.observe_step(&mut st, s).unwrap();
        frozen &= st.v.data.len() == st0.v.data.len()
            && st.v.data.iter().zip(&st0.v.data).all(|(a, b)| a.to_bits() == b.to_bits());
    }

    // entity identity permutation invariance
    let m = tiny_model(tiny_config());
    let kb_a = two_item_kb();
    let kb_b = kb(
        &["school", "company"],
        &[&["yale-university", "google"], &["columbia-university", "intel"]],
    );
    let dialogue = |school: &str| {
        vec![
            utter(&m, Side::B, vec![w(&m, "anyone"), w(&m, "at"), e(&m, school), w(&m, "?")]),
            utter(&m, Side::A, vec![w(&m, "yes"), e(&m, school), e(&m, "google")]),
        ]
    };
    let (d1, d2) = (dialogue("columbia-university"), dialogue("yale-university"));
    let s1 = state_after(&m, &kb_a, Side::A, &d1);
    let s2 = state_after(&m, &kb_b, Side::A, &d2);
    let p1 = m.next_distribution(&s1, &[w(&m, "i")]);
    let p2 = m.next_distribution(&s2, &[w(&m, "i")]);
    let ex = |k: &Kb, d: &Vec<Step>| Example {
        scenario_id: "perm".into(),
        side: Side::A,
        kb: k.clone(),
        steps: d.clone(),
    };
    let l1 = m.example_nll(&ex(&kb_a, &d1)).unwrap();
    let l2 = m.example_nll(&ex(&kb_b, &d2)).unwrap();
    let invariant = s1.h == s2.h
        && s1.v == s2.v
        && p1.iter().zip(&p2).all(|(a, b)| a.to_bits() == b.to_bits())
        && l1.0.to_bits() == l2.0.to_bits();

    // output distribution sums to one at every step
    let mut worst_sum = 0.0f64;
    for n in 0..=steps.len() {
        let st = state_after(&m, &kb2, Side::A, &steps[..n]);
        for prefix in [vec![], vec![w(&m, "hi")], vec![Tok::Word(SELECT)]] {
            let p = m.next_distribution(&st, &prefix);
            worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        }
    }

    // halving the select probability: 0.5/0.5 becomes 1/3 and 2/3
    let mut p = vec![0.5, 0.5];
    halve_select(&mut p, 0);
    let q = sampling_distribution(&[0.0, 0.0, 0.0, 0.0], &[false, false, true, true], 1.0, Some(2));
    let halving = (p[0] - 1.0 / 3.0).abs() < 1e-12
        && (p[1] - 2.0 / 3.0).abs() < 1e-12
        && (q[2] - 1.0 / 3.0).abs() < 1e-12
        && (q[3] - 2.0 / 3.0).abs() < 1e-12;

    run.report(
        "model semantics",
        frozen && invariant && worst_sum < 1e-9 && halving,
        format!(
            "StanoNet embeddings constant: {frozen}; permutation invariant: {invariant}; \
             max |sum p - 1| = {worst_sum:.1e}; halving 1/3-2/3: {halving}"
        ),
    );
}

// ------------------------------------------------------------ rule + session

struct Corpus {
    transcripts: Vec<Transcript>,
    scenarios: Vec<Scenario>,
}

fn rule_corpus(schema: Schema, n: usize, seed: u64) -> Corpus {
    let scenarios = generate_scenarios(&schema, n, seed).unwrap();
    let resources = Resources::new(schema, SurfaceFormStore::new());
    let transcripts = self_play(
        &AgentRegistry::with_builtin(),
        ["rule", "rule"],
        &scenarios,
        &resources,
        &Limits::default(),
        ClockMode::Simulated,
        seed,
        1,
    )
    .unwrap();
    Corpus { transcripts, scenarios }
}

fn rule_session(run: &mut Run) -> Corpus {
    let t0 = Instant::now();
    let first = rule_corpus(Schema::bundled(), 200, 7);
    let again = rule_corpus(Schema::bundled(), 200, 7);
    let secs = t0.elapsed().as_secs_f64();
    let limits = Limits::default();
    let successes = first.transcripts.iter().filter(|t| t.is_success()).count();
    let violations: usize = first.transcripts.iter().map(|t| validate_pacing(t, &limits).len()).sum();
    let text = |c: &Corpus| c.transcripts.iter().map(|t| t.to_jsonl()).collect::<String>();
    let identical = text(&first) == text(&again);
    let rate = successes as f64 / first.transcripts.len() as f64;
    run.report(
        "rule bot + session",
        rate >= 0.80 && violations == 0 && identical && secs < 60.0,
        format!(
            "C = {rate:.3} ({successes}/200); pacing violations {violations}; bitwise reproducible: {identical}; \
             {secs:.1} s for two runs"
        ),
    );
    first
}

// ------------------------------------------------------------------ metrics

fn metrics(run: &mut Run, corpus: &Corpus) {
    let anchor = format!("{:.2}", 0.82 / 11.41);
    let stats = corpus_stats(&corpus.transcripts).unwrap();
    let turns_identity = (stats.success_per_turn * stats.mean_turns - stats.success_rate).abs() < 1e-12;
    let select_identity = (stats.success_per_selection * stats.mean_selections - stats.success_rate).abs() < 1e-12;
    run.report(
        "metrics C_T / C_S",
        anchor == "0.07" && turns_identity && select_identity,
        format!(
            ".82 / 11.41 = {anchor}; rule corpus C = {:.3}, C_T = {:.4}, C_S = {:.4}; \
             C_T * turns = C: {turns_identity}; C_S * selections = C: {select_identity}",
            stats.success_rate, stats.success_per_turn, stats.success_per_selection
        ),
    );

    let big = rule_corpus(Schema::bundled(), 500, 17);
    let strat = strategy_stats(&big.transcripts, &big.scenarios, &Schema::bundled()).unwrap();
    let h = &strat.first_attr_histogram;
    let total: usize = h.values().sum();
    let frac = |g: AlphaGroup| h.get(&g).copied().unwrap_or(0) as f64 / total.max(1) as f64;
    let least = frac(AlphaGroup::LeastUniform);
    let strictly_largest = AlphaGroup::ALL
        .iter()
        .filter(|&&g| g != AlphaGroup::LeastUniform)
        .all(|&g| h[&g] < h[&AlphaGroup::LeastUniform]);
    // Count weighting gives every attribute the same total weight (one per
    // item), so the first-mentioned attribute is uniform over attributes.
    let mut expected: BTreeMap<AlphaGroup, f64> = AlphaGroup::ALL.iter().map(|&g| (g, 0.0)).collect();
    for s in &big.scenarios {
        let groups = alpha_groups(s);
        for g in groups.values() {
            *expected.get_mut(g).unwrap() += 1.0 / (groups.len() * big.scenarios.len()) as f64;
        }
    }
    let shown = |f: &dyn Fn(AlphaGroup) -> f64| {
        AlphaGroup::ALL
            .iter()
            .map(|&g| format!("{} {:.3}", g.name(), f(g)))
            .collect::<Vec<_>>()
            .join(", ")
    };
    run.report_ungated(
        "first-attribute skew (least_uniform strictly largest, 500 dialogues)",
        strictly_largest,
        format!("observed {}; least_uniform {least:.3}", shown(&frac)),
    );
    run.info(
        "first-attribute skew",
        format!("uniform-over-attributes expectation under count weighting: {}", shown(&|g| expected[&g])),
    );
}

// ------------------------------------------------------------------ lexicon

fn lexicon(run: &mut Run, corpus: &Corpus) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut tried, mut recovered) = (0, 0);
    let mut misses = Vec::new();
    for schema in [Schema::bundled(), Schema::bundled_small()] {
        let mut forms = SurfaceFormStore::new();
        if schema.num_entities() == Schema::bundled().num_entities() {
            for t in &corpus.transcripts {
                forms = record_surface_forms(forms, t, &schema).unwrap();
            }
        }
        let res = Resources::new(schema.clone(), SurfaceFormStore::new());
        let mut check = |id: &str, surface: String| {
            tried += 1;
            let links = res.lexicon.link_text(&surface, None);
            if links.iter().filter_map(|l| l.entity.as_deref()).collect::<Vec<_>>() == [id] {
                recovered += 1;
            } else if misses.len() < 5 {
                misses.push(format!("{surface} -> {id}"));
            }
        };
        for ent in schema.entities() {
            check(&ent.id, realize_entity(ent, &SurfaceFormStore::new(), &mut rng));
        }
        for (id, surface, _) in forms.iter() {
            check(id, surface.to_string());
        }
    }

    use SpeechAct::*;
    let res = Resources::new(Schema::bundled(), SurfaceFormStore::new());
    let examples: [(&str, &[SpeechAct]); 7] = [
        ("do you have anyone who went to columbia ?", &[Ask]),
        ("anyone went to columbia?", &[Ask]),
        ("does anyone like hiking", &[Ask]),
        ("i have 2 friends who went to columbia", &[Inform]),
        ("nope", &[Answer]),
        ("hi", &[Greeting]),
        ("sorry , no", &[Apology, Answer]),
    ];
    let mut wrong = Vec::new();
    for (text, want) in examples {
        let toks = tokenize(text);
        let links = res.lexicon.link(&toks, None);
        let got = classify_utterance(&toks, &links);
        if got != want.iter().copied().collect() {
            wrong.push(format!("{text:?} -> {got:?}"));
        }
    }
    run.report(
        "lexicon",
        recovered == tried && wrong.is_empty(),
        format!(
            "link(realize(e)) recovered {recovered}/{tried}{}; classification {}/{} examples{}",
            if misses.is_empty() { String::new() } else { format!(" (misses: {})", misses.join("; ")) },
            examples.len() - wrong.len(),
            examples.len(),
            if wrong.is_empty() { String::new() } else { format!(" (wrong: {})", wrong.join("; ")) },
        ),
    );
}

// ----------------------------------------------------------------- learning

fn learn_config(k: usize, abstraction: bool) -> ModelConfig {
    ModelConfig {
        hidden: 20,
        emb: 20,
        k,
        abstraction,
        seed: 5,
        ..ModelConfig::default()
    }
}

fn success_vs_rule(model: Model, scenarios: &[Scenario], seed: u64) -> f64 {
    let mut reg = AgentRegistry::with_builtin();
    register(&mut reg, "dynonet", Arc::new(model));
    let res = Resources::new(Schema::bundled_small(), SurfaceFormStore::new());
    let t = self_play(&reg, ["dynonet", "rule"], scenarios, &res, &Limits::default(), ClockMode::Simulated, seed, 1).unwrap();
    t.iter().filter(|t| t.is_success()).count() as f64 / t.len() as f64
}

fn learning(run: &mut Run) {
    let t0 = Instant::now();
    let small = Schema::bundled_small();

    // overfit ten dialogues
    let tiny = rule_corpus(small.clone(), 10, 21);
    let mut m = Model::new(learn_config(2, true), small.clone(), build_vocab(&tiny.transcripts, 1));
    let ex = m.examples(&tiny.transcripts, &tiny.scenarios);
    let mut trainer = Trainer::new(&m, TrainOptions::default());
    let mut reached = None;
    let mut loss = m.per_token_loss(&ex).unwrap();
    for epoch in 1..=200 {
        trainer.epoch(&mut m, &ex).unwrap();
        loss = m.per_token_loss(&ex).unwrap();
        if loss < 0.5 {
            reached = Some(epoch);
            break;
        }
    }
    run.report(
        "learning: overfit 10 dialogues",
        reached.is_some(),
        match reached {
            Some(e) => format!("per-token loss {loss:.3} < 0.5 after {e} epochs"),
            None => format!("per-token loss still {loss:.3} after 200 epochs"),
        },
    );

    // 2000 dialogues: dev loss over the first epochs, then play the rule bot
    let corpus = rule_corpus(small.clone(), 2000, 23);
    let (train_t, dev_t, test_t) = split_811(&corpus.transcripts, 23);
    let vocab = build_vocab(&train_t, 1);
    let mut m = Model::new(learn_config(2, true), small.clone(), vocab.clone());
    let untrained = Model::new(learn_config(2, true), small.clone(), vocab.clone());
    let train_ex = m.examples(&train_t, &corpus.scenarios);
    let dev_ex = m.examples(&dev_t, &corpus.scenarios);
    let mut dev = vec![m.per_token_loss(&dev_ex).unwrap()];
    let mut trainer = Trainer::new(&m, TrainOptions::default());
    for _ in 0..3 {
        trainer.epoch(&mut m, &train_ex).unwrap();
        dev.push(m.per_token_loss(&dev_ex).unwrap());
    }
    let decreasing = dev.windows(2).all(|p| p[1] < p[0]);
    let test_ids: std::collections::HashSet<&str> = test_t.iter().map(|t| t.scenario_id.as_str()).collect();
    let test_scenarios: Vec<Scenario> = corpus
        .scenarios
        .iter()
        .filter(|s| test_ids.contains(s.id.as_str()))
        .take(100)
        .cloned()
        .collect();
    let trained_c = success_vs_rule(m, &test_scenarios, 31);
    let untrained_c = success_vs_rule(untrained, &test_scenarios, 31);
    let secs = t0.elapsed().as_secs_f64();
    let dev_text = dev.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>().join(" > ");
    run.report(
        "learning: 2000 rule dialogues",
        decreasing && trained_c - untrained_c >= 0.2 && secs < 1800.0,
        format!(
            "dev loss by epoch {dev_text} (strictly decreasing: {decreasing}); vs rule on {} held-out scenarios: \
             trained C = {trained_c:.2}, untrained C = {untrained_c:.2}; {secs:.0} s",
            test_scenarios.len()
        ),
    );

    // ablation on a slice of the same corpus, reported only
    let slice = &train_ex[..train_ex.len().min(800)];
    let mut ablation = Vec::new();
    for (name, k, abstraction) in [("K=0", 0, true), ("K=1", 1, true), ("K=2", 2, true), ("K=2 no abstraction", 2, false)] {
        let mut m = Model::new(learn_config(k, abstraction), small.clone(), vocab.clone());
        let mut trainer = Trainer::new(&m, TrainOptions::default());
        for _ in 0..2 {
            trainer.epoch(&mut m, slice).unwrap();
        }
        ablation.push((name, m.per_token_loss(&dev_ex).unwrap()));
    }
    let l = |i: usize| ablation[i].1;
    let depth_order = l(2) <= l(1) && l(1) <= l(0);
    let abstraction_order = l(2) <= l(3);
    run.info(
        "ablation (dev loss, 800 examples x 2 epochs)",
        format!(
            "{}; K=2 <= K=1 <= K=0: {depth_order}; abstraction on <= off: {abstraction_order}",
            ablation.iter().map(|(n, d)| format!("{n} {d:.3}")).collect::<Vec<_>>().join(", ")
        ),
    );
}
