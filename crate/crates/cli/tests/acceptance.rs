//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

use pacc::analysis::{attention_structure_correlation, hypergeometric_upper_tail, ora_enrichment, AttentionProfile, GeneSet, ProfileKind};
use pacc::chem::{
    canonical_form, detokenize, enumerate_smiles, parse_smiles, tanimoto, tokenize, Fingerprint, Vocabulary,
};
use pacc::data::{
    build_drug_records, lenient_split, load_expression, strict_split, CellRecord, Dataset, Fold, PairSample, SplitPlan,
};
use pacc::models::{Model, ModelInput, ModelKind, ModelSpec};
use pacc::netprop::{initial_weights, propagate, solve_fixed_point, Edge, PpiNetwork};
use pacc::nn::{
    bigru_forward, conv1d_forward, dense_forward, embedding_forward, grad_check, mse_loss, Activation, BatchNorm, BiGru, Mode,
    NnError, ParamStore, Tape, Tensor, Var,
};
use pacc::rng::RngStream;
use pacc::train::{ensemble_predict, metrics, normalized_predictions, predict, train, Checkpoint, TrainConfig};
use pacc_cli::query::{PredictRequest, Predictor};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- propagation

fn random_network(rng: &mut RngStream) -> PpiNetwork {
    let n = 5 + rng.below(196);
    let name = |i: usize| format!("N{i:03}");
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((i, Edge { a: name(rng.below(i)), b: name(i), weight: rng.uniform_range(0.05, 1.0) }));
    }
    for _ in 0..n {
        let (a, b) = (rng.below(n), rng.below(n));
        if a != b {
            edges.push((n + a, Edge { a: name(a), b: name(b), weight: rng.uniform_range(0.05, 1.0) }));
        }
    }
    PpiNetwork::from_edges(edges).expect("valid random network")
}

fn propagation_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(2024);
    let mut worst: f64 = 0.0;
    for g in 0..20 {
        let net = random_network(&mut rng);
        let n = net.node_count();
        let targets: Vec<String> = (0..1 + rng.below(5)).map(|_| net.genes()[rng.below(n)].clone()).collect();
        let (w0, _) = initial_weights(&net, &targets, 1.0, 1e-5);
        let iterated = propagate(&net, &w0, 0.7, 1e-6, 100_000).map_err(|e| e.to_string())?;
        let direct = solve_fixed_point(&net, &w0, 0.7).map_err(|e| e.to_string())?;
        let diff = iterated.weights.max_abs_diff(&direct);
        worst = worst.max(diff);
        let zero = propagate(&net, &w0, 0.0, 1e-6, 100).map_err(|e| e.to_string())?;
        check(zero.weights == w0, || format!("graph {g}: alpha = 0 changed W0"))?;
    }
    let elapsed = start.elapsed();
    check(worst < 1e-8, || format!("max |propagate - LU| = {worst:.3e} over 20 graphs (limit 1e-8)"))?;
    check(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("max deviation {worst:.2e}, {:.2}s", elapsed.as_secs_f64()))
}

// ----------------------------------------------------------------------- chem

/// Random valid SMILES: a main chain with branches, ring closures, charges,
/// isotopes, multiple bonds and aromatic rings.
fn random_smiles(rng: &mut RngStream) -> String {
    const ATOMS: [&str; 12] = ["C", "C", "C", "N", "O", "S", "F", "Cl", "Br", "[NH3+]", "[O-]", "[13CH3]"];
    let mut s = String::new();
    let mut next_ring = 1u32;
    let mut open: Vec<(u32, usize)> = Vec::new();
    let n = 2 + rng.below(18);
    for i in 0..n {
        if i > 0 && rng.bernoulli(0.1) {
            s.push('=');
        }
        if rng.bernoulli(0.1) {
            s.push_str(&format!("c{next_ring}ccccc{next_ring}"));
            next_ring += 1;
        } else {
            s.push('C');
        }
        if let Some(pos) = open.iter().position(|&(_, at)| i >= at + 2) {
            if rng.bernoulli(0.4) {
                let (d, _) = open.remove(pos);
                s.push_str(&d.to_string());
            }
        } else if next_ring <= 9 && rng.bernoulli(0.15) {
            s.push_str(&next_ring.to_string());
            open.push((next_ring, i));
            next_ring += 1;
        }
        if i + 1 < n && rng.bernoulli(0.2) {
            s.push('(');
            for j in 0..1 + rng.below(3) {
                if j > 0 && rng.bernoulli(0.1) {
                    s.push('#');
                    s.push('C');
                } else {
                    s.push_str(ATOMS[rng.below(ATOMS.len())]);
                }
            }
            s.push(')');
        }
    }
    for (d, _) in open {
        s.push_str(&format!("CC{d}"));
    }
    s
}

fn chem_round_trips() -> Outcome {
    let mut rng = RngStream::new(77);
    let corpus: Vec<String> = (0..500).map(|_| random_smiles(&mut rng)).collect();
    let mut token_ok = 0;
    let mut enum_ok = 0;
    for s in &corpus {
        let tokens = tokenize(s).map_err(|e| format!("{s}: {e}"))?;
        if detokenize(&tokens) == *s {
            token_ok += 1;
        }
        let g = parse_smiles(s).map_err(|e| format!("{s}: {e}"))?;
        let canonical = canonical_form(&g);
        let variants = enumerate_smiles(&g, 32, rng.next_u64());
        if variants.iter().all(|v| parse_smiles(v).map(|h| canonical_form(&h) == canonical).unwrap_or(false)) {
            enum_ok += 1;
        }
    }
    check(token_ok == 500, || format!("tokenize/detokenize identity on {token_ok}/500"))?;
    check(enum_ok == 500, || format!("enumeration round trip on {enum_ok}/500"))?;

    let mut tanimoto_ok = 0;
    for _ in 0..1000 {
        let width = 1 << (3 + rng.below(8));
        let bits = |rng: &mut RngStream| -> BTreeSet<usize> { (0..width).filter(|_| rng.bernoulli(0.3)).collect() };
        let (a, b) = (bits(&mut rng), bits(&mut rng));
        let union = a.union(&b).count();
        let expected = if union == 0 { 0.0 } else { a.intersection(&b).count() as f64 / union as f64 };
        let fa = Fingerprint::from_bits(width, a.iter().copied());
        let fb = Fingerprint::from_bits(width, b.iter().copied());
        let got = tanimoto(&fa, &fb).map_err(|e| e.to_string())?;
        if got == expected || (union == 0 && got.is_nan() == expected.is_nan()) {
            tanimoto_ok += 1;
        }
    }
    check(tanimoto_ok == 1000, || format!("Tanimoto exact on {tanimoto_ok}/1000"))?;
    Ok("500/500 token identity, 500/500 enumeration, 1000/1000 Tanimoto".into())
}

// ------------------------------------------------------------------ gradients

fn random_tensor(shape: Vec<usize>, rng: &mut RngStream) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
}

fn project(tape: &mut Tape<'_, f64>, y: Var, seed: u64) -> Result<Var, NnError> {
    let mut rng = RngStream::new(seed);
    let n = tape.value(y).len();
    let c: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let weighted = tape.mul_const(y, c)?;
    Ok(tape.sum(weighted))
}

fn toy_spec(kind: ModelKind) -> ModelSpec {
    let mut spec = ModelSpec::new(kind, 7, 5, 12);
    spec.embedding = 3;
    spec.attention = 4;
    spec.filters = 3;
    spec.heads = 2;
    spec.rnn_hidden = 2;
    spec.dense = vec![4, 3];
    spec.fingerprint_width = 8;
    match kind {
        ModelKind::Scnn => {
            spec.kernel_widths = vec![3, 3];
            spec.scnn_channels = vec![3, 2];
        }
        ModelKind::Mca => spec.kernel_widths = vec![3, 5],
        _ => {}
    }
    spec
}

fn random_input(spec: &ModelSpec, batch: usize, seq_len: usize, seed: u64) -> ModelInput {
    let mut rng = RngStream::new(seed);
    let smiles = spec.kind.uses_smiles();
    let (mut ids, mut pad_mask) = (Vec::new(), Vec::new());
    for _ in 0..if smiles { batch } else { 0 } {
        let len = 1 + rng.below(seq_len);
        for t in 0..seq_len {
            pad_mask.push(t >= len);
            ids.push(if t >= len { 0 } else { 2 + rng.below(spec.vocab - 2) });
        }
    }
    let fingerprints =
        if smiles { Vec::new() } else { (0..batch * spec.fingerprint_width).map(|_| f64::from(rng.bernoulli(0.3) as u8)).collect() };
    ModelInput {
        batch,
        seq_len: if smiles { seq_len } else { 0 },
        ids,
        pad_mask,
        fingerprints,
        genes: (0..batch * spec.panel).map(|_| rng.normal()).collect(),
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut primitive: Vec<(String, f64)> = Vec::new();
    let mut record = |name: &str, r: Result<pacc::nn::GradCheckReport, NnError>| -> Result<(), String> {
        primitive.push((name.to_string(), r.map_err(|e| format!("{name}: {e}"))?.max_error()));
        Ok(())
    };
    let mut rng = RngStream::new(11);
    for act in [Activation::Linear, Activation::Sigmoid, Activation::Tanh, Activation::Relu] {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", random_tensor(vec![4, 3], &mut rng), true);
        let w = store.add("w", random_tensor(vec![3, 2], &mut rng), true);
        let b = store.add("b", random_tensor(vec![2], &mut rng), true);
        record(
            &format!("dense {act:?}"),
            grad_check(&store, Mode::Train, 0, |t| {
                let (xv, wv, bv) = (t.param(x), t.param(w), t.param(b));
                let y = dense_forward(t, xv, wv, bv, act)?;
                project(t, y, 5)
            }),
        )?;
    }
    let mut store = ParamStore::<f64>::new();
    let e = store.add("e", random_tensor(vec![5, 6], &mut rng), true);
    record(
        "embedding",
        grad_check(&store, Mode::Eval, 0, |t| {
            let ev = t.param(e);
            let y = embedding_forward(t, &[0, 4, 4, 2, 1, 4], 2, ev)?;
            project(t, y, 8)
        }),
    )?;
    let mut store = ParamStore::<f64>::new();
    let x = store.add("x", random_tensor(vec![2, 6, 3], &mut rng), true);
    let w = store.add("w", random_tensor(vec![5, 3, 4], &mut rng), true);
    let b = store.add("b", random_tensor(vec![4], &mut rng), true);
    record(
        "conv1d",
        grad_check(&store, Mode::Eval, 0, |t| {
            let (xv, wv, bv) = (t.param(x), t.param(w), t.param(b));
            let y = conv1d_forward(t, xv, wv, bv, Activation::Tanh)?;
            project(t, y, 9)
        }),
    )?;
    let mut store = ParamStore::<f64>::new();
    let x = store.add("x", random_tensor(vec![2, 5], &mut rng), true);
    let mask = [false, false, true, false, true, false, false, false, false, true];
    record(
        "masked softmax",
        grad_check(&store, Mode::Eval, 0, |t| {
            let xv = t.param(x);
            let y = t.softmax(xv, Some(&mask))?;
            project(t, y, 10)
        }),
    )?;
    let mut store = ParamStore::<f64>::new();
    let x = store.add("x", random_tensor(vec![6, 4], &mut rng), true);
    let bn = BatchNorm::new(&mut store, "bn", 4);
    *store.value_mut(bn.gamma) = random_tensor(vec![4], &mut rng);
    *store.value_mut(bn.beta) = random_tensor(vec![4], &mut rng);
    record(
        "batch norm",
        grad_check(&store, Mode::Train, 0, |t| {
            let xv = t.param(x);
            let y = bn.forward(t, xv)?;
            project(t, y, 11)
        }),
    )?;
    let mut store = ParamStore::<f64>::new();
    let p = store.add("p", random_tensor(vec![4], &mut rng), true);
    let target = [0.0, 0.5, 1.0, 1.0];
    record(
        "mse",
        grad_check(&store, Mode::Eval, 0, |t| {
            let pv = t.param(p);
            mse_loss(t, pv, &target)
        }),
    )?;
    let mut store = ParamStore::<f64>::new();
    let alpha = store.add("alpha", random_tensor(vec![2, 4], &mut rng), true);
    let seq = store.add("seq", random_tensor(vec![2, 4, 3], &mut rng), true);
    let ctx = store.add("ctx", random_tensor(vec![2, 3], &mut rng), true);
    record(
        "attention pooling",
        grad_check(&store, Mode::Eval, 0, |t| {
            let (a, s, c) = (t.param(alpha), t.param(seq), t.param(ctx));
            let shifted = t.add_per_sequence(s, c)?;
            let pooled = t.weighted_sum(a, shifted)?;
            project(t, pooled, 12)
        }),
    )?;
    let mut store = ParamStore::<f64>::new();
    let a = store.add("a", random_tensor(vec![3, 4], &mut rng), true);
    let b = store.add("b", random_tensor(vec![3, 2], &mut rng), true);
    let row = store.add("row", random_tensor(vec![6], &mut rng), true);
    record(
        "structural ops",
        grad_check(&store, Mode::Eval, 0, |t| {
            let (av, bv, rv) = (t.param(a), t.param(b), t.param(row));
            let c = t.concat(&[av, bv])?;
            let c = t.mul_row(c, rv)?;
            let s = t.slice_cols(c, 1, 4)?;
            let g = t.gather_rows(s, vec![2, 0, 2])?;
            let m = t.mul(g, g)?;
            let d = t.sub(m, g)?;
            let e = t.affine(d, 0.5, 1.0);
            let held = t.blend(e, g, vec![1.0, 0.0, 1.0])?;
            let r = t.reshape(held, vec![1, 3, 4])?;
            let mx = t.max_over_time(r, Some(&[false, false, true]))?;
            project(t, mx, 13)
        }),
    )?;
    let mut store = ParamStore::<f64>::new();
    let x = store.add("x", random_tensor(vec![2, 3, 2], &mut rng), true);
    let gru = BiGru::new(&mut store, "gru", 2, 2, 2, &mut rng);
    record(
        "bidirectional GRU",
        grad_check(&store, Mode::Eval, 0, |t| {
            let xv = t.param(x);
            let y = bigru_forward(t, &gru, xv, &[false, false, false, false, false, true])?;
            project(t, y, 14)
        }),
    )?;

    let mut composite: Vec<(String, f64)> = Vec::new();
    for kind in ModelKind::ALL {
        let spec = toy_spec(kind);
        let mut model = Model::<f64>::new(spec.clone(), 13).map_err(|e| e.to_string())?;
        // spread embeddings so token attention visibly moves the loss
        let ids: Vec<_> = model.store.iter().filter(|(_, p)| p.name.ends_with("embedding.table")).map(|(id, _)| id).collect();
        for id in ids {
            model.store.value_mut(id).data_mut().iter_mut().for_each(|v| *v *= 20.0);
        }
        let input = random_input(&spec, 4, 6, 17);
        let mut trng = RngStream::new(19);
        let y: Vec<f64> = (0..4).map(|_| trng.uniform()).collect();
        let report = grad_check(&model.store, Mode::Train, 23, |t| {
            model.loss(t, &input, &y).map(|(l, _)| l).map_err(|e| match e {
                pacc::models::ModelError::Nn(n) => n,
                other => NnError::ShapeMismatch(other.to_string()),
            })
        })
        .map_err(|e| format!("{kind}: {e}"))?;
        composite.push((kind.to_string(), report.max_error()));
    }
    let elapsed = start.elapsed();
    let worst = |v: &[(String, f64)]| v.iter().cloned().fold((String::new(), 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    let (pn, pe) = worst(&primitive);
    let (cn, ce) = worst(&composite);
    check(pe < 1e-4, || format!("primitive {pn}: relative error {pe:.2e} (limit 1e-4)"))?;
    check(ce < 1e-3, || format!("model {cn}: relative error {ce:.2e} (limit 1e-3)"))?;
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} primitives max {pe:.1e} ({pn}), 6 models max {ce:.1e} ({cn}), {:.1}s",
        primitive.len(),
        elapsed.as_secs_f64()
    ))
}

// ------------------------------------------------------------------ attention

fn attention_invariants() -> Outcome {
    let mut checked = 0;
    for kind in ModelKind::ALL {
        let spec = toy_spec(kind);
        let model = Model::<f32>::new(spec.clone(), 7).map_err(|e| e.to_string())?;
        for seed in 0..10 {
            let input = random_input(&spec, 5, 10, seed);
            let out = model.predict(&input).map_err(|e| e.to_string())?;
            if let Some(g) = &out.gene_attention {
                for row in g.data().chunks(spec.panel) {
                    let s: f64 = row.iter().sum();
                    check((s - 1.0).abs() < 1e-5, || format!("{kind}: gene attention sums to {s}"))?;
                    checked += 1;
                }
            }
            if let Some(att) = &out.smiles_attention {
                let heads = att.shape()[1];
                for (i, row) in att.data().chunks(10).enumerate() {
                    let b = i / heads;
                    let s: f64 = row.iter().sum();
                    check((s - 1.0).abs() < 1e-5, || format!("{kind}: token attention sums to {s}"))?;
                    for (t, &a) in row.iter().enumerate() {
                        check(!input.pad_mask[b * 10 + t] || a == 0.0, || format!("{kind}: attention {a} at a pad"))?;
                    }
                    checked += 1;
                }
            }
        }
    }
    let mut worst: f64 = 0.0;
    let mut toy = toy_spec(ModelKind::Mca);
    toy.max_len = 40;
    for (spec, seed) in [(toy, 1), (ModelSpec::new(ModelKind::Mca, 30, 12, 64), 2)] {
        let model = Model::<f32>::new(spec.clone(), seed).map_err(|e| e.to_string())?;
        let input = random_input(&spec, 4, 20, seed + 10);
        let base = model.predict(&input).map_err(|e| e.to_string())?.prediction;
        for extra in [1, 8, 20] {
            let mut padded = input.clone();
            padded.seq_len += extra;
            padded.ids.clear();
            padded.pad_mask.clear();
            for r in 0..input.batch {
                padded.ids.extend_from_slice(&input.ids[r * 20..(r + 1) * 20]);
                padded.ids.extend(std::iter::repeat_n(0, extra));
                padded.pad_mask.extend_from_slice(&input.pad_mask[r * 20..(r + 1) * 20]);
                padded.pad_mask.extend(std::iter::repeat_n(true, extra));
            }
            let p = model.predict(&padded).map_err(|e| e.to_string())?.prediction;
            worst = base.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
    }
    check(worst < 1e-6, || format!("MCA pad sensitivity {worst:.2e} (limit 1e-6)"))?;
    let spec = ModelSpec::new(ModelKind::Mca, 30, 10, 40);
    let width = spec.mca_concat_width();
    check(width == 3 * 4 * spec.filters + 4 * spec.embedding && width == 832, || format!("concat width {width}"))?;
    Ok(format!("{checked} distributions, pad deviation {worst:.1e}, concat width {width}"))
}

// -------------------------------------------------------------------- overfit

fn synthetic_dataset(n_drugs: usize, n_cells: usize, panel: usize, variants: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed);
    let drugs: Vec<(String, String)> =
        (0..n_drugs).map(|i| (format!("D{i:02}"), common::SMILES[i % common::SMILES.len()].to_string())).collect();
    let records = build_drug_records(&drugs, variants, seed, 2, 64).unwrap();
    let vocab = Vocabulary::from_corpus(records.iter().flat_map(|r| r.variants.clone())).unwrap();
    let genes: Vec<String> = (0..panel).map(|g| format!("G{g}")).collect();
    let cells: Vec<CellRecord> = (0..n_cells)
        .map(|c| CellRecord { id: format!("C{c:02}"), expression: (0..panel).map(|_| 2.0 * rng.normal() + 5.0).collect() })
        .collect();
    let weights: Vec<f64> = (0..panel).map(|_| rng.normal()).collect();
    let effects: Vec<f64> = (0..n_drugs).map(|_| 2.0 * rng.normal()).collect();
    let mut pairs = Vec::new();
    for (d, (id, _)) in drugs.iter().enumerate() {
        for c in &cells {
            let x: f64 = c.expression.iter().zip(&weights).map(|(e, w)| (e - 5.0) * w).sum::<f64>() / panel as f64;
            pairs.push(PairSample { drug: id.clone(), cell: c.id.clone(), label: effects[d] + x });
        }
    }
    let max_len = records.iter().flat_map(|r| r.variants.iter()).map(|v| tokenize(v).unwrap().len()).max().unwrap();
    Dataset::new(records, cells, pairs, genes, vocab, max_len).unwrap()
}

fn reduced_mca(ds: &Dataset) -> ModelSpec {
    let mut spec = ModelSpec::new(ModelKind::Mca, ds.vocab.len(), ds.panel.len(), ds.max_len);
    spec.embedding = 8;
    spec.filters = 8;
    spec.attention = 8;
    spec.heads = 2;
    spec.dense = vec![32, 16];
    // dropout off: the target measures memorization of 64 pairs
    spec.p_drop = 0.0;
    spec
}

fn overfit_target() -> Outcome {
    let ds = synthetic_dataset(8, 8, 16, 1, 1);
    let all: Vec<usize> = (0..ds.pairs.len()).collect();
    let fold = Fold { validation_drugs: Vec::new(), validation_cells: Vec::new(), train: all.clone(), validation: all.clone() };
    let spec = reduced_mca(&ds);
    let cfg = TrainConfig { max_steps: 5000, batch_size: 64, eval_interval: 1000, checkpoint_keep: 1, seed: 1, augment: false, ..TrainConfig::default() };
    let start = Instant::now();
    let outcome = train(&spec, &ds, &fold, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let best = &outcome.checkpoints[0];
    let score = |c: &Checkpoint| -> Result<f64, String> {
        let pred = normalized_predictions(&c.model().map_err(|e| e.to_string())?, &c.expression, &ds, &all, false).map_err(|e| e.to_string())?;
        let truth: Vec<f64> = ds.labels(&all).iter().map(|&l| c.labels.apply(l)).collect();
        Ok(metrics(&pred, &truth).map_err(|e| e.to_string())?.rmse)
    };
    let rmse = score(best)?;
    check(rmse < 0.02, || format!("train RMSE {rmse:.4} after 5000 steps (limit 0.02)"))?;
    check(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;

    let short = TrainConfig { max_steps: 300, eval_interval: 100, checkpoint_keep: 3, ..cfg };
    let a = train(&spec, &ds, &fold, &short).map_err(|e| e.to_string())?;
    let b = train(&spec, &ds, &fold, &short).map_err(|e| e.to_string())?;
    let bytes = |o: &pacc::train::TrainOutcome| o.checkpoints.iter().map(Checkpoint::to_bytes).collect::<Vec<_>>();
    check(a.history == b.history && bytes(&a) == bytes(&b), || "two runs with seed 1 differ".into())?;
    Ok(format!("train RMSE {rmse:.5} (best checkpoint at step {}), {:.1}s, repeat runs bit-identical", best.step, elapsed.as_secs_f64()))
}

// --------------------------------------------------------------------- splits

fn random_universe(rng: &mut RngStream) -> (Vec<String>, Vec<String>, Vec<PairSample>) {
    let drugs: Vec<String> = (0..30 + rng.below(31)).map(|i| format!("drug{i}")).collect();
    let cells: Vec<String> = (0..30 + rng.below(31)).map(|i| format!("cell{i}")).collect();
    let density = rng.uniform_range(0.3, 1.0);
    let mut pairs = Vec::new();
    for d in &drugs {
        for c in &cells {
            if rng.bernoulli(density) {
                pairs.push(PairSample { drug: d.clone(), cell: c.clone(), label: rng.normal() });
            }
        }
    }
    rng.shuffle(&mut pairs);
    (drugs, cells, pairs)
}

fn strict_leaks(plan: &SplitPlan, pairs: &[PairSample]) -> Option<String> {
    let set = |v: &[String]| v.iter().cloned().collect::<HashSet<_>>();
    let (td, tc) = (set(&plan.test_drugs), set(&plan.test_cells));
    for &p in &plan.test {
        if !td.contains(&pairs[p].drug) || !tc.contains(&pairs[p].cell) {
            return Some(format!("test pair {p} outside the test entities"));
        }
    }
    if plan.folds.len() != 25 {
        return Some(format!("{} folds", plan.folds.len()));
    }
    for (k, f) in plan.folds.iter().enumerate() {
        let (vd, vc) = (set(&f.validation_drugs), set(&f.validation_cells));
        let train: HashSet<usize> = f.train.iter().copied().collect();
        for &p in &f.train {
            let (d, c) = (&pairs[p].drug, &pairs[p].cell);
            if vd.contains(d) || vc.contains(c) || td.contains(d) || tc.contains(c) {
                return Some(format!("fold {k}: training pair {p} leaks"));
            }
        }
        for &p in &f.validation {
            if !vd.contains(&pairs[p].drug) || !vc.contains(&pairs[p].cell) || train.contains(&p) {
                return Some(format!("fold {k}: validation pair {p} outside the validation entities"));
            }
        }
    }
    None
}

fn lenient_gaps(plan: &SplitPlan, n: usize) -> Option<String> {
    let test: HashSet<usize> = plan.test.iter().copied().collect();
    let rest: BTreeSet<usize> = (0..n).filter(|p| !test.contains(p)).collect();
    let mut covered = BTreeSet::new();
    for (k, f) in plan.folds.iter().enumerate() {
        let v: BTreeSet<usize> = f.validation.iter().copied().collect();
        let t: BTreeSet<usize> = f.train.iter().copied().collect();
        if !v.is_disjoint(&t) || v.union(&t).copied().collect::<BTreeSet<_>>() != rest || f.validation.len() != v.len() {
            return Some(format!("fold {k} does not partition the non-test pairs"));
        }
        if !covered.is_disjoint(&v) {
            return Some(format!("fold {k} repeats validation pairs"));
        }
        covered.extend(v);
    }
    (covered != rest).then(|| "validation sets do not cover the non-test pairs".into())
}

fn split_safety() -> Outcome {
    let mut rng = RngStream::new(31337);
    let mut pairs_seen = 0;
    for seed in 0..100u64 {
        let (drugs, cells, pairs) = random_universe(&mut rng);
        pairs_seen += pairs.len();
        let strict = strict_split(&drugs, &cells, &pairs, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        if let Some(m) = strict_leaks(&strict, &pairs) {
            return Err(format!("seed {seed}: {m}"));
        }
        let again = strict_split(&drugs, &cells, &pairs, seed).map_err(|e| e.to_string())?;
        check(strict.to_text(&pairs) == again.to_text(&pairs), || format!("seed {seed}: strict plans differ"))?;
        let lenient = lenient_split(&pairs, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        if let Some(m) = lenient_gaps(&lenient, pairs.len()) {
            return Err(format!("seed {seed}: {m}"));
        }
        let again = lenient_split(&pairs, seed).map_err(|e| e.to_string())?;
        check(lenient.to_text(&pairs) == again.to_text(&pairs), || format!("seed {seed}: lenient plans differ"))?;
    }
    Ok(format!("100 seeds, {pairs_seen} pairs, no leakage, exact partitions, byte-identical replays"))
}

// -------------------------------------------------------------------- oracles

fn reference_metrics(p: &[f64], t: &[f64]) -> (f64, f64, f64) {
    let n = p.len() as f64;
    let mse = p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let mp = p.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let cov: f64 = p.iter().zip(t).map(|(a, b)| (a - mp) * (b - mt)).sum();
    let vp: f64 = p.iter().map(|a| (a - mp).powi(2)).sum();
    let vt: f64 = t.iter().map(|b| (b - mt).powi(2)).sum();
    let ss_res: f64 = p.iter().zip(t).map(|(a, b)| (b - a).powi(2)).sum();
    (mse.sqrt(), cov / (vp.sqrt() * vt.sqrt()), 1.0 - ss_res / vt)
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, j| acc * (n - k + j) / j)
}

/// Upper tail by listing every draw of `draws` genes from the universe.
fn enumerated_tail(k: usize, universe: usize, successes: usize, draws: usize) -> f64 {
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..1 << universe {
        if mask.count_ones() as usize != draws {
            continue;
        }
        total += 1;
        if (mask & ((1 << successes) - 1)).count_ones() as usize >= k {
            hits += 1;
        }
    }
    debug_assert_eq!(total, binomial(universe as u64, draws as u64));
    hits as f64 / total as f64
}

fn oracles() -> Outcome {
    let mut rng = RngStream::new(4242);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = 2 + rng.below(200);
        let t: Vec<f64> = (0..n).map(|_| rng.normal() * 3.0).collect();
        let p: Vec<f64> = t.iter().map(|x| x + rng.normal()).collect();
        let m = metrics(&p, &t).map_err(|e| e.to_string())?;
        let (rmse, r, r2) = reference_metrics(&p, &t);
        worst = worst.max((m.rmse - rmse).abs()).max((m.pearson - r).abs()).max((m.r2 - r2).abs());
    }
    check(worst < 1e-12, || format!("metrics deviate by {worst:.2e}"))?;

    // correlation pipeline on 3 drugs x 4 cells
    let (drugs, cells) = (["A", "B", "C"], ["c1", "c2", "c3", "c4"]);
    let mut profiles = Vec::new();
    for d in drugs {
        for c in cells {
            let raw: Vec<f64> = (0..5).map(|_| rng.uniform()).collect();
            let s: f64 = raw.iter().sum();
            profiles.push(AttentionProfile { drug: d.into(), cell: c.into(), tokens: raw.iter().map(|x| x / s).collect(), genes: vec![1.0] });
        }
    }
    let fps: BTreeMap<String, Fingerprint> =
        drugs.iter().map(|d| (d.to_string(), Fingerprint::from_bits(32, (0..32).filter(|_| rng.bernoulli(0.4))))).collect();
    let got = attention_structure_correlation(&profiles, &fps, ProfileKind::Token).map_err(|e| e.to_string())?;
    let matrix = |d: &str| -> Vec<f64> {
        let rows: Vec<&AttentionProfile> = cells.iter().map(|c| profiles.iter().find(|p| p.drug == d && p.cell == *c).unwrap()).collect();
        let mut m = Vec::new();
        for a in &rows {
            for b in &rows {
                m.push(a.tokens.iter().zip(&b.tokens).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
            }
        }
        m
    };
    let (mut fro, mut tan) = (Vec::new(), Vec::new());
    for a in drugs {
        for b in drugs {
            fro.push(matrix(a).iter().zip(matrix(b)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
            let (fa, fb) = (&fps[a], &fps[b]);
            let inter = (0..32).filter(|&i| fa.get(i) && fb.get(i)).count() as f64;
            let union = (0..32).filter(|&i| fa.get(i) || fb.get(i)).count() as f64;
            tan.push(inter / union);
        }
    }
    let (_, r, _) = reference_metrics(&fro, &tan);
    check(got.n == 9 && (got.pearson - r).abs() < 1e-12, || format!("correlation {} vs reference {r} (n = {})", got.pearson, got.n))?;

    // ORA against enumeration
    let universe: Vec<String> = (0..10).map(|i| format!("g{i}")).collect();
    let five: Vec<String> = universe[..5].to_vec();
    let res = ora_enrichment(&five, &[GeneSet { id: "S".into(), description: String::new(), genes: five.clone() }], &universe)
        .map_err(|e| e.to_string())?;
    check(res[0].p_value == 1.0 / 252.0, || format!("1/252 case gave {}", res[0].p_value))?;
    let mut cases = 0;
    for n in 1..=15 {
        for s in 0..=n {
            for d in 0..=n {
                for k in 0..=s.min(d) {
                    let (got, want) = (hypergeometric_upper_tail(k, n, s, d), enumerated_tail(k, n, s, d));
                    check(got == want, || format!("tail(k={k}, N={n}, K={s}, n={d}) = {got} vs {want}"))?;
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("metrics within {worst:.1e}, correlation matches, {cases} ORA tails exact"))
}

// ---------------------------------------------------------------- persistence

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = synthetic_dataset(6, 5, 4, 3, 5);
    let all: Vec<usize> = (0..ds.pairs.len()).collect();
    let fold = Fold { validation_drugs: Vec::new(), validation_cells: Vec::new(), train: all[..20].to_vec(), validation: all[20..].to_vec() };
    for kind in ModelKind::ALL {
        let mut spec = toy_spec(kind);
        spec.vocab = if kind.uses_smiles() { ds.vocab.len() } else { 0 };
        spec.panel = ds.panel.len();
        spec.max_len = if kind.uses_smiles() { ds.max_len } else { 0 };
        spec.fingerprint_width = 64;
        let cfg = TrainConfig { max_steps: 30, batch_size: 8, eval_interval: 10, checkpoint_keep: 2, seed: 9, ..TrainConfig::default() };
        let outcome = train(&spec, &ds, &fold, &cfg).map_err(|e| format!("{kind}: {e}"))?;
        let ckpt = &outcome.checkpoints[0];
        let path = dir.path().join(format!("{kind}.pacc"));
        ckpt.save(&path).map_err(|e| e.to_string())?;
        let loaded = Checkpoint::load(&path).map_err(|e| e.to_string())?;
        for average in [false, true] {
            let mem = predict(ckpt, &ds, &all, average).map_err(|e| e.to_string())?;
            let disk = predict(&loaded, &ds, &all, average).map_err(|e| e.to_string())?;
            check(mem.iter().map(|x| x.to_bits()).eq(disk.iter().map(|x| x.to_bits())), || format!("{kind}: reloaded predictions differ"))?;
            for k in [2, 5, 20] {
                let ens = ensemble_predict(&vec![loaded.clone(); k], &ds, &all, average).map_err(|e| e.to_string())?;
                check(ens.iter().map(|x| x.to_bits()).eq(mem.iter().map(|x| x.to_bits())), || format!("{kind}: ensemble of {k} differs"))?;
            }
        }
    }
    Ok("6 kinds bit-identical after reload; ensembles of 2, 5, 20 copies exact".into())
}

// -------------------------------------------------------------------- service

async fn service_consistency() -> Outcome {
    let f = common::fixture(12, 10, 24, 21);
    let ckpt_path = common::trained_checkpoint(&f, &[]);
    let expr = load_expression(std::io::BufReader::new(std::fs::File::open(&f.expression).map_err(|e| e.to_string())?)).map_err(|e| e.to_string())?;
    let ckpt = Checkpoint::load(&ckpt_path).map_err(|e| e.to_string())?;
    let panel = ckpt.panel.len();
    let predictor = Arc::new(Predictor::new(ckpt, &expr).map_err(|e| e.to_string())?);
    let app = pacc_cli::serve::router(predictor);
    let call = |body: String| {
        let app = app.clone();
        async move {
            let req = Request::post("/v1/predict").header(header::CONTENT_TYPE, "application/json").body(Body::from(body)).unwrap();
            let resp = app.oneshot(req).await.unwrap();
            let status = resp.status();
            (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
        }
    };
    let mut rng = RngStream::new(99);
    let pool: Vec<String> = common::SMILES
        .iter()
        .flat_map(|s| enumerate_smiles(&parse_smiles(s).unwrap(), 3, 5))
        .collect();
    let (ck, ex) = (common::Fixture::s(&ckpt_path), common::Fixture::s(&f.expression));
    for i in 0..50 {
        let smiles = pool[rng.below(pool.len())].clone();
        let top_k = 1 + rng.below(panel);
        let explicit = rng.bernoulli(0.5);
        let req = PredictRequest {
            smiles: smiles.clone(),
            cell_id: (!explicit).then(|| format!("C{:02}", rng.below(10))),
            expression: explicit.then(|| (0..panel).map(|_| rng.normal() * 2.0 + 5.0).collect()),
            top_k_genes: Some(top_k),
        };
        let out = f.out(&format!("svc{i}"));
        let top = top_k.to_string();
        let mut args = vec!["predict", "--checkpoint", &ck, "--expression", &ex, "--query", &smiles, "--top-k-genes", &top];
        let values = req.expression.as_ref().map(|v| v.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        match (&req.cell_id, &values) {
            (Some(c), _) => args.extend_from_slice(&["--cell-id", c]),
            (None, Some(v)) => args.extend_from_slice(&["--expression-values", v]),
            _ => unreachable!(),
        }
        let out_s = common::Fixture::s(&out);
        args.extend_from_slice(&["--out", &out_s]);
        check(common::pacc(&args) == 0, || format!("request {i}: CLI failed for {smiles}"))?;
        let cli = std::fs::read(out.join("prediction.json")).map_err(|e| e.to_string())?;
        let (status, body) = call(serde_json::to_string(&req).unwrap()).await;
        check(status == StatusCode::OK, || format!("request {i}: status {status}"))?;
        check(body == cli, || format!("request {i}: endpoint and CLI responses differ"))?;
    }
    let (status, body) = call(r#"{"smiles":"C1CC","cell_id":"C00"}"#.into()).await;
    let text = String::from_utf8_lossy(&body).to_string();
    check(status == StatusCode::BAD_REQUEST && text.contains("UnclosedRingBond"), || format!("malformed SMILES gave {status}: {text}"))?;
    Ok("50/50 responses byte-identical to CLI; \"C1CC\" -> 400 UnclosedRingBond".into())
}

fn main() {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("runtime");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("propagation oracle", Box::new(propagation_oracle)),
        ("chem round trips", Box::new(chem_round_trips)),
        ("gradient suite", Box::new(gradient_suite)),
        ("attention invariants", Box::new(attention_invariants)),
        ("overfit target", Box::new(overfit_target)),
        ("split safety", Box::new(split_safety)),
        ("metrics and analysis oracles", Box::new(oracles)),
        ("persistence", Box::new(persistence)),
        ("service consistency", Box::new(move || runtime.block_on(service_consistency()))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
