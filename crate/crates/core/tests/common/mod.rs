//! Independent oracles shared by the core tests and the acceptance suite.
//! Each check returns a one-line summary, or the reason it failed.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use adaptids_core::cluster::kmeans;
use adaptids_core::heads::openmax::{openmax_probabilities, rank_classes, recalibrate};
use adaptids_core::heads::weibull::fit_weibull_mle;
use adaptids_core::heads::{Distance, OpenMaxConfig, WeibullClassModel};
use adaptids_core::neural::{
    loss_1vr, loss_posttrain, loss_softmax_ce, Architecture, HeadKind, HeadLoss, LossSpec, ModelParams, SparseInput,
    Target,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------------------
// Gradients

pub fn tiny_arch(head: HeadKind) -> Architecture {
    Architecture {
        rows: 10,
        cols: 5,
        kernel: 3,
        channels: 4,
        hidden: 8,
        classes: 3,
        head,
    }
}

/// Parameters as f64 arrays in the `ModelParams` layouts.
struct Params64 {
    arrays: [Vec<f64>; 6],
}

impl Params64 {
    fn from(p: &ModelParams) -> Self {
        let a = p.arrays();
        Params64 {
            arrays: std::array::from_fn(|i| a[i].iter().map(|&v| v as f64).collect()),
        }
    }
}

/// Piecewise-linear regime of one forward pass: max-pool winners and ReLU6
/// regions. Finite differences are only valid inside one regime.
#[derive(PartialEq)]
struct Regime(Vec<usize>, Vec<u8>);

enum Loss64<'a> {
    OneVsRest,
    Softmax,
    OneVsRestPost(f64, &'a [Option<Vec<f64>>]),
}

/// Straight-line f64 forward pass and summed loss.
fn loss64(arch: &Architecture, p: &Params64, xs: &[Vec<f64>], targets: &[Target], loss: &Loss64) -> (f64, Regime) {
    let [conv_w, conv_b, fc1_w, fc1_b, fc2_w, fc2_b] = &p.arrays;
    let (ch, cols, hid, k) = (arch.channels, arch.cols, arch.hidden, arch.classes);
    let mut total = 0.0;
    let mut winners = Vec::new();
    let mut regions = Vec::new();
    for (i, (x, t)) in xs.iter().zip(targets).enumerate() {
        let mut pooled = vec![f64::NEG_INFINITY; ch];
        let mut arg = vec![0; ch];
        for pos in 0..arch.positions() {
            for c in 0..ch {
                let mut s = conv_b[c];
                for o in 0..arch.kernel {
                    for col in 0..cols {
                        s += conv_w[(o * cols + col) * ch + c] * x[(pos + o) * cols + col];
                    }
                }
                if s > pooled[c] {
                    pooled[c] = s;
                    arg[c] = pos;
                }
            }
        }
        winners.extend(arg);
        let h: Vec<f64> = (0..hid)
            .map(|j| {
                let s = fc1_b[j] + (0..ch).map(|c| fc1_w[j * ch + c] * pooled[c]).sum::<f64>();
                regions.push(if s <= 0.0 { 0 } else if s >= 6.0 { 2 } else { 1 });
                s.clamp(0.0, 6.0)
            })
            .collect();
        let z: Vec<f64> = (0..k)
            .map(|c| fc2_b[c] + (0..hid).map(|j| fc2_w[c * hid + j] * h[j]).sum::<f64>())
            .collect();
        let y = |c: usize| matches!(t, Target::Class(tc) if *tc == c) as u8 as f64;
        match loss {
            Loss64::OneVsRest | Loss64::OneVsRestPost(..) => {
                for (c, &zc) in z.iter().enumerate() {
                    let pc = 1.0 / (1.0 + (-zc).exp());
                    total += -y(c) * pc.ln() - (1.0 - y(c)) * (1.0 - pc).ln();
                }
            }
            Loss64::Softmax => {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                let Target::Class(tc) = t else { panic!("softmax needs a class") };
                total += lse - z[*tc];
            }
        }
        if let Loss64::OneVsRestPost(lambda, centroids) = loss {
            if let Some(cvec) = &centroids[i] {
                total += lambda * z.iter().zip(cvec).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
        }
    }
    (total, Regime(winners, regions))
}

pub struct GradientReport {
    /// Worst per-layer relative error ||analytic - numeric|| / max norm.
    pub worst: f64,
    pub worst_layer: String,
    pub checked: usize,
    pub skipped: usize,
}

const LAYERS: [&str; 6] = ["conv_w", "conv_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b"];

/// Central differences (h = 1e-3) of an f64 reimplementation against the
/// analytic gradient, for every parameter of the shrunken network.
pub fn gradient_check(head: HeadLoss, posttrain: bool, seed: u64) -> GradientReport {
    let kind = match head {
        HeadLoss::OneVsRest => HeadKind::Sigmoid1vr,
        HeadLoss::SoftmaxCe => HeadKind::Softmax,
    };
    let arch = tiny_arch(kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(arch, seed);
    for b in params.fc1_b.iter_mut().chain(params.conv_b.iter_mut()).chain(params.fc2_b.iter_mut()) {
        *b = rng.random_range(-0.5..0.5);
    }
    let batch = 4;
    let dense: Vec<Vec<f32>> = (0..batch)
        .map(|_| {
            (0..arch.rows * arch.cols)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) })
                .collect()
        })
        .collect();
    let inputs: Vec<SparseInput> = dense.iter().map(|d| SparseInput::from_dense(arch.rows, arch.cols, d)).collect();
    let mut targets: Vec<Target> = (0..batch).map(|i| Target::Class(i % arch.classes)).collect();
    if head == HeadLoss::OneVsRest {
        targets[batch - 1] = Target::Unknown;
    }
    let centroids: Vec<Option<Vec<f32>>> = (0..batch)
        .map(|i| (i != 1).then(|| (0..arch.classes).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    let lambda = 0.3f32;
    let spec = LossSpec {
        head,
        posttrain: posttrain.then_some((lambda, centroids.as_slice())),
    };
    let (_, grad) = params.backward(&inputs, &targets, &spec).expect("backward");

    let xs: Vec<Vec<f64>> = dense.iter().map(|d| d.iter().map(|&v| v as f64).collect()).collect();
    let c64: Vec<Option<Vec<f64>>> = centroids
        .iter()
        .map(|c| c.as_ref().map(|c| c.iter().map(|&v| v as f64).collect()))
        .collect();
    let loss = match (head, posttrain) {
        (HeadLoss::OneVsRest, false) => Loss64::OneVsRest,
        (HeadLoss::OneVsRest, true) => Loss64::OneVsRestPost(lambda as f64, &c64),
        (HeadLoss::SoftmaxCe, _) => Loss64::Softmax,
    };
    let base = Params64::from(&params);
    let (_, base_regime) = loss64(&arch, &base, &xs, &targets, &loss);
    let h = 1e-3;
    let analytic = grad.arrays();
    let mut report = GradientReport {
        worst: 0.0,
        worst_layer: String::new(),
        checked: 0,
        skipped: 0,
    };
    for layer in 0..6 {
        let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for idx in 0..base.arrays[layer].len() {
            let mut plus = Params64 { arrays: base.arrays.clone() };
            plus.arrays[layer][idx] += h;
            let mut minus = Params64 { arrays: base.arrays.clone() };
            minus.arrays[layer][idx] -= h;
            let (lp, rp) = loss64(&arch, &plus, &xs, &targets, &loss);
            let (lm, rm) = loss64(&arch, &minus, &xs, &targets, &loss);
            if rp != base_regime || rm != base_regime {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic[layer][idx] as f64;
            diff += (a - numeric).powi(2);
            na += a * a;
            nn += numeric * numeric;
        }
        let denom = na.sqrt().max(nn.sqrt());
        let rel = if denom == 0.0 { 0.0 } else { diff.sqrt() / denom };
        if rel >= report.worst {
            report.worst = rel;
            report.worst_layer = LAYERS[layer].to_string();
        }
    }
    report
}

pub fn gradient_oracle() -> Check {
    let started = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, head, post) in [
        ("1vr", HeadLoss::OneVsRest, false),
        ("softmax-ce", HeadLoss::SoftmaxCe, false),
        ("1vr+centroid", HeadLoss::OneVsRest, true),
    ] {
        for seed in 0..3 {
            let r = gradient_check(head, post, seed);
            ok &= r.worst < 1e-3 && r.checked > 10 * r.skipped;
            lines.push(format!("{name}/{seed}: {:.1e} ({})", r.worst, r.worst_layer));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(ok && secs < 30.0, format!("worst relative error per loss/seed [{}], {secs:.1} s", lines.join(", ")))
}

// ---------------------------------------------------------------------------
// Losses

pub fn loss_oracles() -> Check {
    let ln2 = std::f64::consts::LN_2;
    let mut centroids = HashMap::new();
    centroids.insert("a", vec![0.0f32, 0.0]);
    centroids.insert("b", vec![1.0f32, 1.0]);
    let cases = [
        ("1vr known", loss_1vr(&[vec![0.5, 0.5]], &[Target::Class(0)]).unwrap(), 2.0 * ln2),
        ("1vr unknown-train", loss_1vr(&[vec![0.5, 0.5]], &[Target::Unknown]).unwrap(), 2.0 * ln2),
        ("softmax ce", loss_softmax_ce(&[vec![0.25; 4]], &[Target::Class(2)]).unwrap(), 4f64.ln()),
        (
            "centroid",
            loss_posttrain(&[vec![1.0, 2.0], vec![0.0, 0.0]], &["a", "b"], &centroids).unwrap(),
            5.0 + 2.0,
        ),
        ("centroid at centroid", loss_posttrain(&[vec![1.0, 1.0]], &["b"], &centroids).unwrap(), 0.0),
    ];
    let worst = cases.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let list: Vec<String> = cases.iter().map(|(n, got, _)| format!("{n}={got:.4}")).collect();
    ensure(worst < 1e-6, format!("{} (max |err| {worst:.1e})", list.join(", ")))
}

// ---------------------------------------------------------------------------
// OpenMax

fn random_model(rng: &mut ChaCha8Rng, k: usize) -> WeibullClassModel {
    WeibullClassModel {
        mav: (0..k).map(|_| rng.random_range(-3.0..3.0)).collect(),
        shape: rng.random_range(0.5..4.0),
        scale: rng.random_range(0.5..5.0),
        shift: rng.random_range(0.0..2.0),
    }
}

fn euclid(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt()
}

/// Step-by-step recalibration written directly from the formula.
fn hand_recalibration(v: &[f32], models: &[WeibullClassModel], alpha: usize) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
    let mut known: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    let mut unknown = 0.0;
    for (rank, &c) in order.iter().take(alpha).enumerate() {
        let m = &models[c];
        let d = euclid(v, &m.mav) - m.shift;
        let w = if d <= 0.0 { 0.0 } else { 1.0 - (-(d / m.scale).powf(m.shape)).exp() };
        let rw = (alpha - rank) as f64 / alpha as f64;
        unknown += known[c] * w * rw;
        known[c] *= 1.0 - w * rw;
    }
    (known, unknown)
}

pub fn openmax_properties(cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut worst_mass, mut worst_hand) = (0.0f64, 0.0f64);
    let mut degenerate_mismatch = 0;
    for _ in 0..cases {
        let k = rng.random_range(2..=6);
        let alpha = rng.random_range(1..=k);
        let v: Vec<f32> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let models: Vec<WeibullClassModel> = (0..k).map(|_| random_model(&mut rng, k)).collect();
        let cfg = OpenMaxConfig {
            alpha,
            distance: Distance::Euclidean,
            ..Default::default()
        };
        let r = recalibrate(&v, &models, &cfg);
        let before: f64 = v.iter().map(|&x| x as f64).sum();
        let after: f64 = r.known.iter().sum::<f64>() + r.unknown;
        worst_mass = worst_mass.max((before - after).abs());
        let (hk, hu) = hand_recalibration(&v, &models, alpha);
        let hand_err = hk.iter().zip(&r.known).map(|(a, b)| (a - b).abs()).fold((hu - r.unknown).abs(), f64::max);
        worst_hand = worst_hand.max(hand_err);

        // Every CDF is zero when all distances fall below the shift.
        let zero: Vec<WeibullClassModel> = models
            .iter()
            .map(|m| WeibullClassModel {
                shift: 1e6,
                ..m.clone()
            })
            .collect();
        let r0 = recalibrate(&v, &zero, &cfg);
        let p = openmax_probabilities(&r0);
        let known_best = (0..k).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        if known_best != rank_classes(&v)[0] || r0.unknown != 0.0 {
            degenerate_mismatch += 1;
        }
    }
    ensure(
        worst_mass < 1e-6 && worst_hand < 1e-9 && degenerate_mismatch == 0,
        format!(
            "{cases} cases: mass error {worst_mass:.1e}, hand-formula error {worst_hand:.1e}, degenerate argmax mismatches {degenerate_mismatch}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Weibull

/// Inverse-CDF draws from Weibull(shape, scale).
pub fn weibull_draws(shape: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            scale * (-(1.0 - u).ln()).powf(1.0 / shape)
        })
        .collect()
}

pub fn weibull_recovery() -> Check {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for (shape, scale) in [(2.0, 1.0), (0.8, 3.0), (5.0, 0.2)] {
        for seed in 0..5 {
            let fit = fit_weibull_mle(&weibull_draws(shape, scale, 1000, seed)).map_err(|e| e.to_string())?;
            let err = ((fit.shape - shape).abs() / shape).max((fit.scale - scale).abs() / scale);
            worst = worst.max(err);
            if seed == 0 {
                lines.push(format!("({shape},{scale})->({:.3},{:.3})", fit.shape, fit.scale));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(
        worst < 0.10 && secs < 5.0,
        format!("{} ; worst relative error {:.1}% over 15 fits, {secs:.2} s", lines.join(" "), 100.0 * worst),
    )
}

// ---------------------------------------------------------------------------
// Completeness and homogeneity

/// Every partition of n items into at most `max_blocks` blocks, as
/// restricted growth strings.
pub fn partitions(n: usize, max_blocks: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, max_blocks: usize, cur: &mut Vec<usize>, used: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=used.min(max_blocks - 1) {
            cur.push(b);
            rec(n, max_blocks, cur, used.max(b + 1), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, max_blocks, &mut Vec::new(), 0, &mut out);
    out
}

/// H(A | B) from the contingency counts, natural log.
pub fn conditional_entropy(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut nb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *nb.entry(y).or_default() += 1.0;
    }
    joint.iter().map(|(&(_, y), &c)| -(c / n) * (c / nb[&y]).ln()).sum()
}

pub fn entropy(a: &[usize]) -> f64 {
    conditional_entropy(a, &vec![0; a.len()])
}

/// (completeness, homogeneity) straight from the definitions.
pub fn oracle_quality(classes: &[usize], clusters: &[usize]) -> (f64, f64) {
    let hc = entropy(classes);
    let hk = entropy(clusters);
    let homogeneity = if hc == 0.0 { 1.0 } else { 1.0 - conditional_entropy(classes, clusters) / hc };
    let completeness = if hk == 0.0 { 1.0 } else { 1.0 - conditional_entropy(clusters, classes) / hk };
    (completeness, homogeneity)
}

pub fn quality_enumeration() -> Check {
    use adaptids_core::cluster::completeness_homogeneity;
    let mut pairs = 0usize;
    let mut worst = 0.0f64;
    for n in 1..=8 {
        let parts = partitions(n, 3);
        for classes in &parts {
            for clusters in &parts {
                let q = completeness_homogeneity(classes, clusters).map_err(|e| e.to_string())?;
                let (c, h) = oracle_quality(classes, clusters);
                worst = worst.max((q.completeness - c).abs()).max((q.homogeneity - h).abs());
                pairs += 1;
            }
        }
    }
    ensure(worst < 1e-9, format!("{pairs} partition pairs (n <= 8, <= 3 blocks), max |err| {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// k-means

fn blob_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn kmeans_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut iterations = 0;
    for i in 0..100 {
        let n = rng.random_range(10..120);
        let dim = rng.random_range(1..6);
        let k = rng.random_range(1..8);
        let pts = blob_points(&mut rng, n, dim);
        let m = kmeans(&pts, k, i).map_err(|e| e.to_string())?;
        iterations += m.history.len();
        for w in m.history.windows(2) {
            if w[1] > w[0] * (1.0 + 1e-12) + 1e-12 {
                violations += 1;
            }
        }
    }
    // Planted clusters: tight blobs around far-apart centers.
    let mut recovered = 0;
    for i in 0..20 {
        let k = rng.random_range(2..7);
        let dim = 3;
        let centers: Vec<Vec<f32>> = (0..k)
            .map(|c| (0..dim).map(|d| if d == 0 { 100.0 * c as f32 } else { rng.random_range(-50.0..50.0) }).collect())
            .collect();
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..rng.random_range(3..15) {
                pts.push(center.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect::<Vec<f32>>());
                truth.push(c);
            }
        }
        let m = kmeans(&pts, k, i).map_err(|e| e.to_string())?;
        let mut map = BTreeMap::new();
        let consistent = truth.iter().zip(&m.assignment).all(|(t, a)| *map.entry(*t).or_insert(*a) == *a);
        let mut targets: Vec<usize> = map.values().copied().collect();
        targets.sort_unstable();
        targets.dedup();
        if consistent && targets.len() == k {
            recovered += 1;
        }
    }
    ensure(
        violations == 0 && recovered == 20,
        format!("100 instances, {iterations} Lloyd iterations, {violations} inertia increases; planted recovery {recovered}/20"),
    )
}

// ---------------------------------------------------------------------------
// Post-training

pub struct PosttrainEffect {
    pub seed: u64,
    pub before: adaptids_core::cluster::ClusterQuality,
    pub after: adaptids_core::cluster::ClusterQuality,
    /// Mean per-label closed-set accuracy on held-out flows, in percent.
    pub closed_before: f64,
    pub closed_after: f64,
    pub train_closed_before: f64,
    pub train_closed_after: f64,
}

pub const POSTTRAIN_CLASSES: [&str; 4] = ["DoS-Hulk", "PortScan", "SSH-Patator", "FTP-Patator"];

fn closed_accuracy(d: &adaptids_core::heads::Detector, flows: &[adaptids_core::ingest::LabeledFlow]) -> f64 {
    let mut by: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for f in flows {
        let v = d.classify(&f.tensor).expect("classify");
        let e = by.entry(f.label.as_str()).or_default();
        e.1 += 1;
        e.0 += usize::from(d.predicted_label(&v) == Some(f.label.as_str()));
    }
    by.values().map(|(c, t)| 100.0 * *c as f64 / *t as f64).sum::<f64>() / by.len() as f64
}

/// Trains a DOC model on four synthetic classes, then post-trains it.
pub fn posttrain_effect(seed: u64, flows_per_class: usize) -> PosttrainEffect {
    use adaptids_core::cluster::{posttrain, training_quality, PosttrainConfig};
    use adaptids_core::experiment::SplitData;
    use adaptids_core::heads::{Detector, HeadType, OpenSetConfig};
    use adaptids_core::ingest::{generate_synthetic, SyntheticProfile};
    use adaptids_core::neural::TrainConfig;

    let pool: Vec<SyntheticProfile> = SyntheticProfile::desk_pool()
        .into_iter()
        .filter(|p| POSTTRAIN_CLASSES.contains(&p.class_name.as_str()))
        .collect();
    let split = SplitData::split(generate_synthetic(&pool, flows_per_class, seed).unwrap(), 0.8);
    let train: Vec<_> = split.train.values().flatten().cloned().collect();
    let test: Vec<_> = split.test.values().flatten().cloned().collect();
    let classes: Vec<String> = POSTTRAIN_CLASSES.iter().map(|s| s.to_string()).collect();
    let mut d = Detector::untrained(classes, HeadType::Doc, &OpenSetConfig::default(), seed).unwrap();
    let tcfg = TrainConfig { seed, ..Default::default() };
    d.train(&train, &tcfg).unwrap();
    let pcfg = PosttrainConfig { seed, ..Default::default() };
    let before = training_quality(&d, &train, seed).unwrap();
    let (closed_before, train_closed_before) = (closed_accuracy(&d, &test), closed_accuracy(&d, &train));
    posttrain(&mut d, &train, &tcfg, &pcfg).unwrap();
    let after = training_quality(&d, &train, seed).unwrap();
    PosttrainEffect {
        seed,
        before,
        after,
        closed_before,
        closed_after: closed_accuracy(&d, &test),
        train_closed_before,
        train_closed_after: closed_accuracy(&d, &train),
    }
}

pub fn posttrain_check(seeds: &[u64], flows_per_class: usize) -> Check {
    let runs: Vec<PosttrainEffect> = seeds.iter().map(|&s| posttrain_effect(s, flows_per_class)).collect();
    let n = runs.len() as f64;
    let avg = |f: &dyn Fn(&PosttrainEffect) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let (cb, ca) = (avg(&|r| r.before.completeness), avg(&|r| r.after.completeness));
    let (hb, ha) = (avg(&|r| r.before.homogeneity), avg(&|r| r.after.homogeneity));
    let drop = runs.iter().map(|r| r.closed_before - r.closed_after).fold(f64::NEG_INFINITY, f64::max);
    let train_drop = runs
        .iter()
        .map(|r| r.train_closed_before - r.train_closed_after)
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(
        ca >= cb && ha >= hb && drop < 2.0 && train_drop < 2.0,
        format!(
            "{} seeds: completeness {cb:.4} -> {ca:.4}, homogeneity {hb:.4} -> {ha:.4}, worst closed-set drop {drop:.2} points (training {train_drop:.2})",
            runs.len()
        ),
    )
}
