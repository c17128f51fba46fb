//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use molfed::autodiff::{
    central_difference, five_point_difference, max_relative_error, AdamConfig, Scalar, Tape, Tensor, Var,
};
use molfed::cli::{self, RunReport};
use molfed::config::ExperimentConfig;
use molfed::federation::{
    client_rng, fedavg_models, partition_iid, partition_noniid, run_round, FederationConfig, FederationState,
    PlateauRule,
};
use molfed::gan::{
    discriminator_loss, generator_loss, gradient_penalty, rgcn_layer, train_epochs, Discriminator, DiscriminatorConfig,
    DiscriminatorMasks, Generator, GeneratorConfig, GeneratorNoise, LocalModels, LossForm, OutputMode,
};
use molfed::metrics::{
    fingerprint, int_div, novelty, snn, table_header, tanimoto, uniqueness, Fingerprint, FingerprintConfig,
};
use molfed::molgraph::{canonical_key, AtomType, MolecularGraph, NUM_ATOM_TYPES as B, NUM_BOND_TYPES as T};
use molfed::smiles::{self, load_dataset, parse_with_limit};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn data_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/solubility.csv")
}

fn corpus() -> &'static Vec<MolecularGraph> {
    static CORPUS: OnceLock<Vec<MolecularGraph>> = OnceLock::new();
    CORPUS.get_or_init(|| load_dataset(&data_path(), None, 10).expect("corpus loads").graphs)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join(format!("molfed-acceptance-{}", std::process::id()))
        .join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

// ---------------------------------------------------------------------------
// 1. gradients

trait Objective {
    fn eval<'t, F: Scalar>(&self, params: &[Var<'t, F>]) -> Var<'t, F>;
}

struct GenObjective {
    gen: Generator,
    disc: Discriminator,
    noise: GeneratorNoise,
    mode: OutputMode,
    masks: Option<DiscriminatorMasks>,
    form: LossForm,
}

impl Objective for GenObjective {
    fn eval<'t, F: Scalar>(&self, params: &[Var<'t, F>]) -> Var<'t, F> {
        let tape = params[0].tape();
        let dp: Vec<_> = self.disc.params.iter().map(|t| tape.constant(t.cast())).collect();
        let out = self.gen.forward(params, &self.noise, self.mode).unwrap();
        let d = self
            .disc
            .forward(&dp, out.nodes, out.edges, self.masks.as_ref())
            .unwrap();
        generator_loss(d, self.form)
    }
}

struct CriticObjective {
    disc: Discriminator,
    real: (Tensor, Tensor),
    fake: (Tensor, Tensor),
    eps: Tensor,
    masks: Option<DiscriminatorMasks>,
    form: LossForm,
}

impl Objective for CriticObjective {
    fn eval<'t, F: Scalar>(&self, params: &[Var<'t, F>]) -> Var<'t, F> {
        let tape = params[0].tape();
        let real: (Tensor<F>, Tensor<F>) = (self.real.0.cast(), self.real.1.cast());
        let fake: (Tensor<F>, Tensor<F>) = (self.fake.0.cast(), self.fake.1.cast());
        let m = self.masks.as_ref();
        let df = self
            .disc
            .forward(params, tape.constant(fake.0.clone()), tape.constant(fake.1.clone()), m)
            .unwrap();
        let dr = self
            .disc
            .forward(params, tape.constant(real.0.clone()), tape.constant(real.1.clone()), m)
            .unwrap();
        let pen = gradient_penalty(
            &self.disc,
            params,
            (&real.0, &real.1),
            (&fake.0, &fake.1),
            &self.eps.cast(),
            m,
        )
        .unwrap();
        discriminator_loss(df, dr, pen, 10.0, self.form).unwrap()
    }
}

/// Returns (f32 error against central differences, f64 error against the
/// five-point stencil).
fn gradient_errors<O: Objective>(obj: &O, params: &[Tensor]) -> (f64, f64) {
    let p64: Vec<Tensor<f64>> = params.iter().map(|t| t.cast()).collect();
    let numeric = |xs: &[Tensor<f64>]| {
        let tape = Tape::new();
        let v: Vec<_> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        obj.eval(&v).item()
    };

    let tape = Tape::<f32>::new();
    let v: Vec<_> = params.iter().map(|t| tape.leaf(t.clone())).collect();
    let g32: Vec<Tensor<f64>> = tape
        .grad(obj.eval(&v), &v)
        .unwrap()
        .iter()
        .map(|g| g.value().cast())
        .collect();
    let e32 = max_relative_error(&g32, &central_difference(numeric, &p64, 1e-3), 1e-2);

    let tape = Tape::<f64>::new();
    let v: Vec<_> = p64.iter().map(|t| tape.leaf(t.clone())).collect();
    let g64: Vec<Tensor<f64>> = tape
        .grad(obj.eval(&v), &v)
        .unwrap()
        .iter()
        .map(|g| (*g.value()).clone())
        .collect();
    let e64 = max_relative_error(&g64, &five_point_difference(numeric, &p64, 1e-3), 1e-3);
    (e32, e64)
}

fn randomize_biases(params: &mut [Tensor], rng: &mut ChaCha8Rng) {
    for p in params.iter_mut().filter(|p| p.rank() == 1) {
        *p = Tensor::from_fn(p.shape(), |_| rng.gen_range(-0.3..0.3));
    }
}

fn soft_batch(bs: usize, n: usize, rng: &mut ChaCha8Rng) -> (Tensor, Tensor) {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for _ in 0..bs {
        let (v, a) = soft_graph(n, rng);
        nodes.extend(v.concat());
        edges.extend(a.iter().flat_map(|r| r.concat()));
    }
    let f = |x: Vec<f64>| x.into_iter().map(|v| v as f32).collect::<Vec<_>>();
    (
        Tensor::new(vec![bs, n, B], f(nodes)).unwrap(),
        Tensor::new(vec![bs, n, n, T], f(edges)).unwrap(),
    )
}

fn criterion_gradients() -> Outcome {
    let (mut worst32, mut worst64) = (0.0f64, 0.0f64);
    let mut checked = 0usize;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = 3 + (seed as usize % 2);
        let dropout = if seed % 2 == 1 { 0.2 } else { 0.0 };
        let form = if seed % 4 < 2 { LossForm::Wgan } else { LossForm::Log };
        let mut gen = Generator::new(
            GeneratorConfig {
                hidden_dims: vec![6],
                noise_dim: 4,
                n_max: n,
                dropout,
            },
            &mut rng,
        )
        .unwrap();
        randomize_biases(&mut gen.params, &mut rng);
        let mut disc = Discriminator::new(
            DiscriminatorConfig {
                conv_dims: vec![4, 3],
                reduce_dim: 3,
                head_dim: 3,
                n_max: n,
                dropout,
            },
            &mut rng,
        )
        .unwrap();
        randomize_biases(&mut disc.params, &mut rng);
        let bs = 2;
        let masks = disc.draw_masks(bs, &mut rng);
        let noise = gen.draw_noise(gen.draw_z(bs, &mut rng), true, &mut rng);
        let mode = if seed % 3 == 0 {
            OutputMode::Softmax
        } else {
            OutputMode::Gumbel {
                temperature: 0.8,
                hard: false,
            }
        };

        let g = GenObjective {
            gen: gen.clone(),
            disc: disc.clone(),
            noise,
            mode,
            masks: masks.clone(),
            form,
        };
        let (a, b) = gradient_errors(&g, &gen.params);
        worst32 = worst32.max(a);
        worst64 = worst64.max(b);

        let c = CriticObjective {
            disc: disc.clone(),
            real: soft_batch(bs, n, &mut rng),
            fake: soft_batch(bs, n, &mut rng),
            eps: Tensor::from_fn(&[bs], |_| rng.gen()),
            masks,
            form,
        };
        let (a, b) = gradient_errors(&c, &disc.params);
        worst32 = worst32.max(a);
        worst64 = worst64.max(b);
        checked += gen.params.iter().chain(&disc.params).map(Tensor::len).sum::<usize>();
    }
    let detail = format!("{checked} partials; f32 max rel err {worst32:.2e} (< 1e-3), f64 {worst64:.2e} (< 1e-7)");
    ensure!(worst32 < 1e-3 && worst64 < 1e-7, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 2. convolution and critic against loops

type Nodes = Vec<Vec<f64>>;
type Edges = Vec<Vec<Vec<f64>>>;

fn soft_graph(n: usize, rng: &mut ChaCha8Rng) -> (Nodes, Edges) {
    let simplex = |w: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let r: Vec<f64> = (0..w).map(|_| rng.gen_range(0.01..1.0)).collect();
        let s: f64 = r.iter().sum();
        r.into_iter().map(|x| x / s).collect()
    };
    let v = (0..n).map(|_| simplex(B, rng)).collect();
    let mut a = vec![vec![vec![0.0; T]; n]; n];
    for i in 0..n {
        a[i][i][0] = 1.0;
        for j in i + 1..n {
            let r = simplex(T, rng);
            a[i][j] = r.clone();
            a[j][i] = r;
        }
    }
    (v, a)
}

fn hard_graph(n: usize, rng: &mut ChaCha8Rng) -> (Nodes, Edges) {
    let one_hot = |w: usize, k: usize| -> Vec<f64> { (0..w).map(|i| f64::from(u8::from(i == k))).collect() };
    let v = (0..n).map(|_| one_hot(B, rng.gen_range(0..B))).collect();
    let mut a = vec![vec![one_hot(T, 0); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let k = if rng.gen_bool(0.4) { rng.gen_range(1..T) } else { 0 };
            a[i][j] = one_hot(T, k);
            a[j][i] = one_hot(T, k);
        }
    }
    (v, a)
}

fn affine(x: &[f64], w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let out = w.shape()[1];
    (0..out)
        .map(|o| {
            b.data()[o]
                + x.iter()
                    .enumerate()
                    .map(|(c, xc)| xc * w.data()[c * out + o])
                    .sum::<f64>()
        })
        .collect()
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn loop_layer(h: &Nodes, v: &Nodes, a: &Edges, p: &[Tensor<f64>]) -> Nodes {
    let n = h.len();
    (0..n)
        .map(|i| {
            let mut acc = affine(&cat(&h[i], &v[i]), &p[0], &p[1]);
            let mut degree = 0.0;
            for j in 0..n {
                for k in 1..T {
                    degree += a[i][j][k];
                }
            }
            let norm = if degree > 1.0 { degree } else { 1.0 };
            for j in 0..n {
                for k in 1..T {
                    let m = affine(&cat(&h[j], &v[i]), &p[2 * k], &p[2 * k + 1]);
                    for (o, x) in acc.iter_mut().enumerate() {
                        *x += a[i][j][k] / norm * m[o];
                    }
                }
            }
            acc.into_iter().map(f64::tanh).collect()
        })
        .collect()
}

// mask entry for sample `b`, node `i`, channel `o`
fn mask_at(m: Option<&Tensor>, b: usize, n: usize, i: usize, o: usize) -> f64 {
    m.map_or(1.0, |t| {
        let w = t.shape()[2];
        f64::from(t.data()[(b * n + i) * w + o])
    })
}

fn loop_critic(
    cfg: &DiscriminatorConfig,
    p: &[Tensor<f64>],
    v: &Nodes,
    a: &Edges,
    masks: Option<&DiscriminatorMasks>,
    b: usize,
) -> f64 {
    let n = v.len();
    let per = 2 * T;
    let mut h = v.clone();
    for l in 0..cfg.conv_dims.len() {
        h = loop_layer(&h, v, a, &p[l * per..(l + 1) * per]);
        for (i, row) in h.iter_mut().enumerate() {
            for (o, x) in row.iter_mut().enumerate() {
                *x *= mask_at(masks.map(|m| &m.conv[l]), b, n, i, o);
            }
        }
    }
    let q = &p[cfg.conv_dims.len() * per..];
    let mut pooled = vec![0.0; cfg.head_dim];
    for i in 0..n {
        let reduced: Vec<f64> = affine(&cat(&h[i], &v[i]), &q[0], &q[1])
            .into_iter()
            .map(f64::tanh)
            .collect();
        let x = cat(&reduced, &v[i]);
        let gate = affine(&x, &q[2], &q[3]);
        let value = affine(&x, &q[4], &q[5]);
        for o in 0..cfg.head_dim {
            let g = 1.0 / (1.0 + (-gate[o]).exp()) * mask_at(masks.map(|m| &m.gate), b, n, i, o);
            let val = value[o].tanh() * mask_at(masks.map(|m| &m.value), b, n, i, o);
            pooled[o] += g * val;
        }
    }
    affine(&pooled, &q[6], &q[7])[0].tanh()
}

fn criterion_convolution() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut graphs = 0;
    for case in 0..50 {
        let n = 1 + case % 10;
        let bs = 2;
        let mut disc = Discriminator::new(
            DiscriminatorConfig {
                conv_dims: vec![6, 5],
                reduce_dim: 4,
                head_dim: 5,
                n_max: n,
                dropout: if case % 2 == 0 { 0.3 } else { 0.0 },
            },
            &mut rng,
        )
        .unwrap();
        randomize_biases(&mut disc.params, &mut rng);
        let masks = disc.draw_masks(bs, &mut rng);
        let sample: Vec<(Nodes, Edges)> = (0..bs)
            .map(|b| {
                if (case + b) % 2 == 0 {
                    soft_graph(n, &mut rng)
                } else {
                    hard_graph(n, &mut rng)
                }
            })
            .collect();
        graphs += bs;
        let hidden: Vec<Nodes> = (0..bs)
            .map(|_| {
                (0..n)
                    .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect();

        let p64: Vec<Tensor<f64>> = disc.params.iter().map(|t| t.cast()).collect();
        let flat_v: Vec<f64> = sample.iter().flat_map(|(v, _)| v.concat()).collect();
        let flat_a: Vec<f64> = sample
            .iter()
            .flat_map(|(_, a)| a.iter().flat_map(|r| r.concat()))
            .collect();
        let flat_h: Vec<f64> = hidden.iter().flat_map(|h| h.concat()).collect();
        let tape = Tape::<f64>::new();
        let p: Vec<_> = p64.iter().map(|t| tape.constant(t.clone())).collect();
        let vv = tape.constant(Tensor::new(vec![bs, n, B], flat_v).unwrap());
        let aa = tape.constant(Tensor::new(vec![bs, n, n, T], flat_a).unwrap());
        let hh = tape.constant(Tensor::new(vec![bs, n, 6], flat_h).unwrap());

        let first = rgcn_layer(vv, vv, aa, &p[..2 * T]).unwrap().value();
        let second = rgcn_layer(hh, vv, aa, &p[2 * T..4 * T]).unwrap().value();
        let scores = disc.forward(&p, vv, aa, masks.as_ref()).unwrap().value();
        for (b, (v, a)) in sample.iter().enumerate() {
            let want1 = loop_layer(v, v, a, &p64[..2 * T]);
            let want2 = loop_layer(&hidden[b], v, a, &p64[2 * T..4 * T]);
            for i in 0..n {
                for o in 0..6 {
                    worst = worst.max((first.data()[(b * n + i) * 6 + o] - want1[i][o]).abs());
                }
                for o in 0..5 {
                    worst = worst.max((second.data()[(b * n + i) * 5 + o] - want2[i][o]).abs());
                }
            }
            let want = loop_critic(&disc.config, &p64, v, a, masks.as_ref(), b);
            worst = worst.max((scores.data()[b] - want).abs());
        }
    }
    let detail = format!("{graphs} graphs, n <= 10; max abs deviation {worst:.2e} (<= 1e-6)");
    ensure!(worst <= 1e-6, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 3. metrics against brute force

fn bit_set(fp: &Fingerprint) -> HashSet<usize> {
    (0..fp.width()).filter(|&b| fp.contains(b)).collect()
}

fn brute_tanimoto(a: &HashSet<usize>, b: &HashSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn brute_int_div(sets: &[HashSet<usize>], p: u32) -> f64 {
    let mut total = 0.0;
    for a in sets {
        for b in sets {
            let t = brute_tanimoto(a, b);
            total += if p == 1 { t } else { t * t };
        }
    }
    let mean = total / (sets.len() * sets.len()) as f64;
    1.0 - if p == 1 { mean } else { mean.sqrt() }
}

fn brute_snn(gen: &[HashSet<usize>], refs: &[HashSet<usize>]) -> f64 {
    let mut total = 0.0;
    for g in gen {
        total += refs.iter().map(|r| brute_tanimoto(g, r)).fold(0.0, f64::max);
    }
    total / gen.len() as f64
}

// backtracking search for an atom- and bond-preserving bijection
fn isomorphic(a: &MolecularGraph, b: &MolecularGraph) -> bool {
    let (a, b) = (a.strip_padding(), b.strip_padding());
    let n = a.num_nodes();
    if n != b.num_nodes() {
        return false;
    }
    let profile = |g: &MolecularGraph| {
        let mut p: Vec<(AtomType, usize)> = (0..n).map(|i| (g.atom(i), g.degree(i))).collect();
        p.sort_by_key(|&(t, d)| (t.index(), d));
        p
    };
    if profile(&a) != profile(&b) {
        return false;
    }
    fn extend(k: usize, a: &MolecularGraph, b: &MolecularGraph, map: &mut Vec<usize>, used: &mut [bool]) -> bool {
        if k == a.num_nodes() {
            return true;
        }
        for c in 0..b.num_nodes() {
            if used[c] || a.atom(k) != b.atom(c) || a.degree(k) != b.degree(c) {
                continue;
            }
            if (0..k).all(|j| a.bond(k, j) == b.bond(c, map[j])) {
                map.push(c);
                used[c] = true;
                if extend(k + 1, a, b, map, used) {
                    return true;
                }
                map.pop();
                used[c] = false;
            }
        }
        false
    }
    extend(0, &a, &b, &mut Vec::new(), &mut vec![false; n])
}

fn criterion_metrics() -> Outcome {
    let pool = corpus();
    let fcfg = FingerprintConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut comparisons = 0usize;
    for set in 0..50 {
        let size = rng.gen_range(1..=50);
        let mut mols: Vec<MolecularGraph> = Vec::with_capacity(size);
        for _ in 0..size {
            // relabelled and padded copies of earlier picks exercise the isomorphism handling
            let g = if !mols.is_empty() && rng.gen_bool(0.3) {
                let src = mols[rng.gen_range(0..mols.len())].strip_padding();
                let mut perm: Vec<usize> = (0..src.num_nodes()).collect();
                perm.shuffle(&mut rng);
                src.permuted(&perm)
            } else {
                pool[rng.gen_range(0..pool.len())].clone()
            };
            mols.push(if rng.gen_bool(0.2) { g.padded(10) } else { g });
        }
        let refs: Vec<MolecularGraph> = (0..30).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();

        let fps: Vec<Fingerprint> = mols.iter().map(|g| fingerprint(g, fcfg).unwrap()).collect();
        let ref_fps: Vec<Fingerprint> = refs.iter().map(|g| fingerprint(g, fcfg).unwrap()).collect();
        let sets: Vec<HashSet<usize>> = fps.iter().map(bit_set).collect();
        let ref_sets: Vec<HashSet<usize>> = ref_fps.iter().map(bit_set).collect();

        for (i, a) in fps.iter().enumerate() {
            for (j, b) in fps.iter().enumerate() {
                let got = tanimoto(a, b).unwrap();
                ensure!(
                    got == brute_tanimoto(&sets[i], &sets[j]),
                    "set {set}: tanimoto({i},{j}) = {got}"
                );
                comparisons += 1;
            }
        }
        for p in [1, 2] {
            let got = int_div(&fps, p).unwrap();
            let want = brute_int_div(&sets, p);
            ensure!(got == want, "set {set}: int_div p={p} {got} vs {want}");
        }
        let (got, want) = (snn(&fps, &ref_fps).unwrap(), brute_snn(&sets, &ref_sets));
        ensure!(got == want, "set {set}: snn {got} vs {want}");

        let mut classes: Vec<&MolecularGraph> = Vec::new();
        for g in &mols {
            if !classes.iter().any(|c| isomorphic(c, g)) {
                classes.push(g);
            }
        }
        let want = 100.0 * classes.len() as f64 / mols.len() as f64;
        let got = uniqueness(&mols).unwrap();
        ensure!(got == want, "set {set}: uniqueness {got} vs {want}");

        let ref_keys: HashSet<Vec<u8>> = refs.iter().map(|g| canonical_key(g).unwrap()).collect();
        let novel = mols.iter().filter(|g| !refs.iter().any(|r| isomorphic(r, g))).count();
        let want = 100.0 * novel as f64 / mols.len() as f64;
        let got = novelty(&mols, &ref_keys).unwrap();
        ensure!(got == want, "set {set}: novelty {got} vs {want}");
    }

    let disjoint = [Fingerprint::from_bits(64, [1]), Fingerprint::from_bits(64, [2])];
    let hand = int_div(&disjoint, 1).unwrap();
    ensure!(hand == 0.5, "two disjoint fingerprints give IntDiv_1 {hand}");
    Ok(format!(
        "50 sets, {comparisons} similarity pairs, all exact; two-molecule hand case = {hand}"
    ))
}

// ---------------------------------------------------------------------------
// 4. parser corpus

// counts atoms in an organic-subset SMILES string; None if it uses anything else
fn organic_atom_count(s: &str) -> Option<usize> {
    if s.contains('[') {
        return None;
    }
    let chars: Vec<char> = s.chars().collect();
    let mut count = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        if two == "Cl" || two == "Br" {
            count += 1;
            i += 2;
            continue;
        }
        match c {
            'C' | 'N' | 'O' | 'F' | 'P' | 'S' | 'I' | 'c' | 'n' | 'o' | 's' | 'p' => count += 1,
            'B' | 'b' => return None,
            c if c.is_ascii_alphabetic() => return None,
            _ => {}
        }
        i += 1;
    }
    Some(count)
}

fn criterion_parser() -> Outcome {
    let mut reader = csv::Reader::from_path(data_path()).map_err(|e| e.to_string())?;
    let column = reader
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .position(|h| h == "smiles")
        .ok_or("no smiles column")?;
    let (mut eligible, mut parsed, mut preserved) = (0usize, 0usize, 0usize);
    let mut failures = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let text = rec[column].trim().to_string();
        if !matches!(organic_atom_count(&text), Some(k) if k <= 10) {
            continue;
        }
        eligible += 1;
        let Ok(g) = parse_with_limit(&text, 10) else {
            failures.push(text);
            continue;
        };
        parsed += 1;
        let again = smiles::write(&g).ok().and_then(|s| parse_with_limit(&s, 10).ok());
        if again.is_some_and(|h| canonical_key(&h).ok() == canonical_key(&g).ok()) {
            preserved += 1;
        } else {
            failures.push(format!("round trip {text}"));
        }
    }
    let rate = 100.0 * parsed as f64 / eligible as f64;
    let detail = format!(
        "{parsed}/{eligible} organic-subset records with <= 10 heavy atoms parse ({rate:.1}% >= 99%), \
         {preserved}/{parsed} keep their canonical key through write and reparse"
    );
    ensure!(rate >= 99.0 && preserved == parsed, "{detail}; failures: {failures:?}");
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 5. federation equivalence

fn criterion_federation() -> Outcome {
    let data: Vec<MolecularGraph> = corpus()[..96].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gen = Generator::new(
        GeneratorConfig {
            hidden_dims: vec![16, 32],
            noise_dim: 8,
            n_max: 10,
            dropout: 0.1,
        },
        &mut rng,
    )
    .unwrap();
    let disc: Discriminator = Discriminator::new("[16,16],16,[16,1]".parse().unwrap(), &mut rng).unwrap();
    let cfg = FederationConfig {
        num_clients: 1,
        epochs_per_round: 2,
        batch_size: 16,
        rounds: 5,
        seed: 17,
        deterministic: true,
        noise_resample: 3,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        ..FederationConfig::default()
    };

    let mut state = FederationState::new(gen.clone(), disc.clone(), &data, &cfg).unwrap();
    for _ in 0..cfg.rounds {
        run_round(&mut state, &cfg).unwrap();
    }
    let mut central = LocalModels::new(gen, disc, cfg.adam, cfg.noise_resample);
    for r in 0..cfg.rounds {
        let mut rng = client_rng(cfg.seed, r, 0);
        train_epochs(
            &mut central,
            &data,
            cfg.epochs_per_round,
            cfg.batch_size,
            &cfg.train,
            &mut rng,
        )
        .unwrap();
    }
    let bits = |ts: &[Tensor]| -> Vec<u32> { ts.iter().flat_map(|t| t.data().iter().map(|x| x.to_bits())).collect() };
    ensure!(
        bits(&state.gen.params) == bits(&central.gen.params) && bits(&state.disc.params) == bits(&central.disc.params),
        "single-client federation diverged from centralized training"
    );

    let (g, d) = (&central.gen, &central.disc);
    let (ag, ad) = fedavg_models(&[(g, d), (g, d), (g, d)], &[3.0, 41.0, 7.0]).unwrap();
    let mut worst = 0.0f32;
    for (a, b) in ag.params.iter().chain(&ad.params).zip(g.params.iter().chain(&d.params)) {
        for (x, y) in a.data().iter().zip(b.data()) {
            worst = worst.max((x - y).abs() / y.abs().max(1.0));
        }
    }
    ensure!(
        worst <= 1e-7,
        "averaging identical models moved a parameter by {worst:e}"
    );
    Ok(format!(
        "K=1 equals centralized bit for bit after {} rounds; identical-model average deviates {worst:.1e} (<= 1e-7)",
        cfg.rounds
    ))
}

// ---------------------------------------------------------------------------
// 6. partitioners

fn criterion_partitions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..100 {
        let size = rng.gen_range(1..400);
        let classes = rng.gen_range(1..20);
        let k = rng.gen_range(1..9);
        let labels: Vec<usize> = (0..size).map(|_| rng.gen_range(0..classes)).collect();
        let mut train: Vec<usize> = (0..size).collect();
        train.shuffle(&mut rng);
        train.truncate(rng.gen_range(1..=size));
        let seed = rng.gen();
        let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();

        let parts = partition_iid(&train, &train_labels, k, seed).map_err(|e| e.to_string())?;
        for c in 0..classes {
            let counts: Vec<usize> = parts
                .iter()
                .map(|p| p.iter().filter(|&&i| labels[i] == c).count())
                .collect();
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            ensure!(spread <= 1, "case {case}: class {c} counts {counts:?}");
        }

        let alpha = [0.05, 0.5, 1.0, 100.0][case % 4];
        let a = partition_noniid(&train, &train_labels, k, alpha, seed).map_err(|e| e.to_string())?;
        let b = partition_noniid(&train, &train_labels, k, alpha, seed).map_err(|e| e.to_string())?;
        ensure!(a == b, "case {case}: same seed gave different partitions");
        ensure!(a.len() == k, "case {case}: {} parts for {k} clients", a.len());
        for parts in [&parts, &a] {
            let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
            all.sort_unstable();
            let mut want = train.clone();
            want.sort_unstable();
            ensure!(all == want, "case {case}: partition is not complete and disjoint");
        }
    }
    Ok("100 datasets: IID per-class spread <= 1; non-IID complete, disjoint, reproducible".into())
}

// ---------------------------------------------------------------------------
// 7 and 8. convergence run

const PLATEAU: PlateauRule = PlateauRule {
    window: 10,
    threshold: 0.05,
    stop: false,
};

struct ConvergenceRun {
    report: RunReport,
    gen_curve: Vec<f64>,
    disc_curve: Vec<f64>,
    seconds: f64,
}

fn subset_file(dir: &Path, count: usize) -> PathBuf {
    let ds = load_dataset(&data_path(), None, 10).unwrap();
    let path = dir.join("subset.smi");
    let lines: Vec<&str> = ds.smiles.iter().take(count).map(String::as_str).collect();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn convergence_config(dataset: &Path, dropout: f64) -> ExperimentConfig {
    let text = format!(
        r#"version = 1
preset = "esol"
dataset = "{}"
split = [1.0, 0.0, 0.0]
generator_dims = [32, 128]
discriminator_dims = "[32,64],32,[64,1]"
clients = 4
partition = "iid"
epochs_per_round = 20
batch_size = 16
rounds = 40
eval_samples = 256
dropout_gen = {dropout}
dropout_disc = {dropout}
seed = 1
deterministic = true
"#,
        dataset.display()
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

fn read_curve(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect()
}

fn convergence_run(dropout: f64) -> ConvergenceRun {
    let dir = scratch(&format!("convergence-{dropout}"));
    let dataset = subset_file(&dir, 512);
    let cfg = convergence_config(&dataset, dropout);
    let start = Instant::now();
    let report = cli::train(&cfg, &dir.join("run")).expect("convergence run trains");
    ConvergenceRun {
        report,
        gen_curve: read_curve(&dir.join("run/loss_gen.tsv")),
        disc_curve: read_curve(&dir.join("run/loss_disc.tsv")),
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn base_run() -> &'static ConvergenceRun {
    static RUN: OnceLock<ConvergenceRun> = OnceLock::new();
    RUN.get_or_init(|| convergence_run(0.0))
}

fn tail_motion(curve: &[f64]) -> (f64, f64) {
    let lo = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail = &curve[curve.len().saturating_sub(PLATEAU.window + 1)..];
    let step = tail.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    (step, hi - lo)
}

fn criterion_convergence() -> Outcome {
    let run = base_run();
    let (gs, gr) = tail_motion(&run.gen_curve);
    let (ds, dr) = tail_motion(&run.disc_curve);
    let detail = format!(
        "{} rounds in {:.0}s; generator last-10 max |delta| {gs:.4} vs 5% of range {:.4}, \
         critic {ds:.4} vs {:.4}",
        run.gen_curve.len(),
        run.seconds,
        0.05 * gr,
        0.05 * dr
    );
    ensure!(
        PLATEAU.reached(&run.gen_curve) && PLATEAU.reached(&run.disc_curve),
        "{detail}"
    );
    Ok(detail)
}

fn describe_quality(tag: &str, r: &RunReport) -> String {
    let m = &r.metrics;
    format!(
        "{tag}: {} valid of {}, novelty {:.1}, IntDiv_1 {}, all-PAD {:.1}%",
        m.valid,
        m.generated,
        m.novelty,
        m.int_div_1.map_or("n/a".into(), |x| format!("{x:.3}")),
        m.all_pad_fraction
    )
}

fn criterion_quality() -> Outcome {
    let base = base_run();
    let mut detail = describe_quality("dropout 0", &base.report);
    let judged = if base.report.metrics.valid < 10 {
        let rerun = convergence_run(0.25);
        detail = format!("{detail}; {}", describe_quality("dropout 0.25", &rerun.report));
        rerun.report
    } else {
        base.report.clone()
    };
    let m = &judged.metrics;
    let ok = m.valid > 0 && m.novelty >= 90.0 && m.int_div_1.is_some_and(|d| d >= 0.80);
    ensure!(ok, "{detail} (needs novelty >= 90 and IntDiv_1 >= 0.80)");
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 9 and 10. command outputs

fn fixture_header() -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sweep_header.txt")).unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let dataset = subset_file(dir, 48);
    let path = dir.join("tiny.toml");
    let text = format!(
        r#"version = 1
dataset = "{}"
dataset_name = "tiny"
generator_dims = [8, 16]
noise_dim = 4
discriminator_dims = "[8,8],8,[8,1]"
clients = 2
epochs_per_round = 1
batch_size = 8
rounds = 2
eval_samples = 16
snn_sample_size = 20
"#,
        dataset.display()
    );
    fs::write(&path, text).unwrap();
    path
}

fn molfed(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_molfed"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("molfed {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out)
}

fn criterion_header() -> Outcome {
    let golden = fixture_header();
    ensure!(
        table_header() == golden,
        "header differs:\n{}\nvs fixture\n{golden}",
        table_header()
    );
    let dir = scratch("sweep");
    let config = tiny_config(&dir);
    let mut text = fs::read_to_string(&config).unwrap();
    text.push_str("sweep_clients = [1, 2]\n");
    fs::write(&config, text).unwrap();
    let out = dir.join("out");
    molfed(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--deterministic",
        "--out",
        out.to_str().unwrap(),
    ])?;
    let table = fs::read_to_string(out.join("sweep.txt")).unwrap();
    ensure!(
        table.starts_with(&golden),
        "sweep.txt header differs from the fixture:\n{table}"
    );
    let rows = table.lines().count() - 2;
    ensure!(rows == 2, "sweep.txt has {rows} rows for two sweep points");
    Ok(format!(
        "fixture matches table_header and a two-point sweep.txt byte for byte ({} bytes)",
        golden.len()
    ))
}

fn criterion_determinism() -> Outcome {
    let dir = scratch("determinism");
    let config = tiny_config(&dir);
    let cfg = config.to_str().unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        let o = out.to_str().unwrap();
        molfed(&["train", "--config", cfg, "--deterministic", "--seed", "7", "--out", o])?;
        let ckpt = out.join("final.ckpt");
        let ckpt = ckpt.to_str().unwrap();
        let eval = out.join("eval.json");
        molfed(&[
            "eval",
            "--config",
            cfg,
            "--deterministic",
            "--seed",
            "7",
            "--checkpoint",
            ckpt,
            "--samples",
            "32",
            "--out",
            eval.to_str().unwrap(),
        ])?;
        let dump = molfed(&["dump-samples", "--seed", "7", "--checkpoint", ckpt, "--n", "10"])?.stdout;
        let mut files = Vec::new();
        for name in [
            "report.json",
            "report.txt",
            "loss_gen.tsv",
            "loss_disc.tsv",
            "final.ckpt",
            "eval.json",
        ] {
            files.push((name.to_string(), fs::read(out.join(name)).unwrap()));
        }
        files.push(("dump-samples".into(), dump));
        reports.push(files);
    }
    for ((name, a), (_, b)) in reports[0].iter().zip(&reports[1]) {
        ensure!(a == b, "{name} differs between identical runs");
    }
    Ok(format!(
        "train, eval and dump-samples repeat byte for byte ({} artifacts)",
        reports[0].len()
    ))
}

// ---------------------------------------------------------------------------

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "loss gradients match finite differences", criterion_gradients),
    (2, "convolution and critic match loop oracles", criterion_convolution),
    (3, "metrics match brute-force oracles", criterion_metrics),
    (4, "parser corpus and round trip", criterion_parser),
    (5, "single-client federation equals centralized", criterion_federation),
    (6, "partitioner contracts", criterion_partitions),
    (7, "loss curves plateau", criterion_convergence),
    (8, "novelty and diversity of the converged generator", criterion_quality),
    (9, "sweep table header matches the golden fixture", criterion_header),
    (10, "deterministic commands repeat byte for byte", criterion_determinism),
];

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in CRITERIA {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    let _ = fs::remove_dir_all(std::env::temp_dir().join(format!("molfed-acceptance-{}", std::process::id())));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
