//! Acceptance suite: one PASS/FAIL line per criterion, run in order on a
//! single thread so the timing checks see an otherwise idle process.
//!
//! Exits non-zero when any criterion fails, except those listed in
//! `UNATTAINABLE`, which are reported as FAIL and explained in the README.

use std::collections::BTreeMap;
use std::f64::consts::E;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use speech_unlearn::bench::{cmd_bench, ResultRow};
use speech_unlearn::evalkit::{subset_accuracy, MiaAttacker, Section};
use speech_unlearn::nnkit::{
    cross_entropy, cross_entropy_grad, finite_difference_grad, gradients_agree, init_model, kl_divergence, kl_grad,
    lambert_w, Matrix, Model,
};
use speech_unlearn::speechgen::{generate, select_forget, split, ForgetSpec, GenSpec, Partition, Task, TaskData};
use speech_unlearn::unlearn::{
    per_sample_losses, retrain_oracle, run_unlearn, superloss_weight, train, Method, TrainSettings, UnlearnConfig,
};

/// Lambert W residual ≤ 1e−10 cannot hold near x = 1e6 in binary64: one
/// ulp of W there moves W·e^W by about 1e−9.
const UNATTAINABLE: &[u32] = &[2];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "gradient correctness", gradients),
        (2, "Lambert W identity", lambert),
        (3, "SuperLoss closed form", superloss),
        (4, "degenerate equivalences", degenerate),
        (5, "retrain oracle forgets a class", oracle),
        (6, "sample unlearning ordering", ordering),
        (7, "SuperLoss lowers D_f accuracy", superloss_direction),
        (8, "time budget", time_budget),
        (9, "determinism and bench runtime", determinism),
        (10, "MIA sanity", mia_sanity),
    ];
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && UNATTAINABLE.contains(&id) { " [known]" } else { "" };
        println!(
            "criterion {id:>2} {verdict}{note}  {name}: {} ({:.1} s)",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass && !UNATTAINABLE.contains(&id) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- kernels

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Finite differences are meaningless across a ReLU kink, so resample until
/// every hidden pre-activation is at least `margin` away from zero.
fn kink_free_batch(model: &Model, rng: &mut ChaCha8Rng, rows: usize, margin: f64) -> Matrix {
    loop {
        let x = random_matrix(rng, rows, model.input_dim());
        let mut h = x.clone();
        let mut ok = true;
        for layer in &model.layers()[..model.layers().len() - 1] {
            let mut z = h.matmul(&layer.weights).unwrap();
            z.add_row_vector(&layer.bias);
            ok &= z.as_slice().iter().all(|v| v.abs() > margin);
            z.map_inplace(|v| v.max(0.0));
            h = z;
        }
        if ok {
            return x;
        }
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    let models = 24;
    for k in 0..models {
        let input = rng.gen_range(2..6);
        let hidden: Vec<usize> = (0..rng.gen_range(1..3)).map(|_| rng.gen_range(2..7)).collect();
        let classes = rng.gen_range(2..6);
        let m = init_model(input, &hidden, classes, k).unwrap();
        let x = kink_free_batch(&m, &mut rng, 4, 1e-3);
        let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..classes)).collect();
        let target = random_matrix(&mut rng, 4, classes);
        let ce = cross_entropy_grad(&m, &x, &labels).unwrap().flat();
        let fd = finite_difference_grad(&m, 1e-5, |p| cross_entropy(&p.logits(&x).unwrap(), &labels).unwrap().loss);
        if !gradients_agree(&ce, &fd, 1e-4, 1e-8) {
            failures.push(format!("ce#{k}"));
        }
        let kl = kl_grad(&m, &x, &target).unwrap().flat();
        let fd = finite_difference_grad(&m, 1e-5, |p| kl_divergence(&p.logits(&x).unwrap(), &target).unwrap().loss);
        if !gradients_agree(&kl, &fd, 1e-4, 1e-8) {
            failures.push(format!("kl#{k}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs < 30.0,
        format!("{models} models x 2 objectives, mismatches {failures:?}, {secs:.2} s"),
    )
}

fn lambert() -> Outcome {
    let lo = -1.0 / E + 1e-9;
    // Geometric in the distance from the branch point, so both the branch
    // neighbourhood and the large-x tail are sampled.
    let span = (1e6 - lo) / 1e-9;
    let grid: Vec<f64> = (0..1000)
        .map(|i| {
            let x = -1.0 / E + 1e-9 * span.powf(i as f64 / 999.0);
            x.clamp(lo, 1e6)
        })
        .collect();
    let mut worst = (0.0f64, 0.0f64);
    let mut over = 0;
    for &x in &grid {
        let w = lambert_w(x).unwrap();
        let r = (w * w.exp() - x).abs();
        if r > 1e-10 {
            over += 1;
        }
        if r > worst.0 {
            worst = (r, x);
        }
    }
    let anchors = [(0.0, 0.0), (E, 1.0), (-1.0 / E, -1.0)];
    let anchors_ok = anchors.iter().all(|&(x, w)| (lambert_w(x).unwrap() - w).abs() <= 1e-10);
    outcome(
        over == 0 && anchors_ok,
        format!(
            "{over}/1000 grid points above 1e-10, worst {:.2e} at x = {:.3e}; anchors {}",
            worst.0,
            worst.1,
            if anchors_ok { "exact" } else { "off" }
        ),
    )
}

/// Independent oracle: golden-section minimization of the SuperLoss
/// objective over u = log σ on [−40, 1].
fn golden_sigma(diff: f64, lam: f64) -> f64 {
    let f = |u: f64| diff * u.exp() + lam * u * u;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-40.0f64, 1.0f64);
    let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-11 {
        if fc <= fd {
            (b, d, fd) = (d, c, fc);
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            (a, c, fc) = (c, d, fd);
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    ((a + b) / 2.0).exp()
}

fn superloss() -> Outcome {
    let mut worst = 0.0f64;
    for lam in [0.1, 0.25, 1.0] {
        for i in 0..=200 {
            let diff = -5.0 + 0.05 * i as f64;
            let closed = superloss_weight(1.0 + diff, 1.0, lam).unwrap();
            worst = worst.max((closed - golden_sigma(diff, lam)).abs());
        }
    }
    let neutral = [0.0, 0.7, 3.0].iter().all(|&t| superloss_weight(t, t, 0.25).unwrap() == 1.0);
    outcome(
        worst <= 1e-6 && neutral,
        format!("max |closed - oracle| = {worst:.2e} over 603 points; sigma(l = tau) = 1 {neutral}"),
    )
}

// ---------------------------------------------------------------- methods

struct Desk {
    data: TaskData,
    base: Partition,
    original: Model,
}

fn desk(task: Task, seed: u64) -> Desk {
    let corpus = generate(&GenSpec::default()).unwrap();
    let data = corpus.task_data(task).unwrap();
    let base = split(&corpus, task, 0.2, seed).unwrap();
    let original = train(&data, &base, &TrainSettings::default(), seed).unwrap();
    Desk { data, base, original }
}

fn degenerate() -> Outcome {
    let d = desk(Task::Keyword, 0);
    let p = select_forget(&d.base, &ForgetSpec::Sample { ratio: 0.05, seed: 0 }, &d.data.labels).unwrap();
    let run = |method: Method, edit: &dyn Fn(&mut UnlearnConfig), p: &Partition| {
        let mut c = UnlearnConfig {
            method,
            seed: 0,
            ..UnlearnConfig::default()
        };
        edit(&mut c);
        run_unlearn(&d.original, &d.data, p, &c).unwrap().model
    };
    let mut broken = Vec::new();
    if run(Method::SalUn, &|c| c.gamma = 1.0, &p) != run(Method::RandLabel, &|_| {}, &p) {
        broken.push("salun(1) != rand_label".to_string());
    }
    if run(Method::SalUn, &|c| c.gamma = 0.0, &p) != d.original {
        broken.push("salun(0) changed f".into());
    }
    let empty = p.without_forget();
    for m in Method::ALL {
        if m != Method::Retrain && run(m, &|c| c.epochs = 0, &p) != d.original {
            broken.push(format!("{m} epochs=0 changed f"));
        }
        for sl in [false, true] {
            if sl && m == Method::Retrain {
                continue;
            }
            if run(m, &|c| c.superloss_enabled = sl, &empty) != d.original {
                broken.push(format!("{m} empty D_f changed f"));
            }
        }
    }
    outcome(
        broken.is_empty(),
        if broken.is_empty() {
            "bit-for-bit on the default corpus".to_string()
        } else {
            broken.join("; ")
        },
    )
}

fn oracle() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for task in Task::ALL {
        let (mut forgotten, mut retain, mut retain_f) = (0.0, 0.0, 0.0);
        for seed in 0..5 {
            let d = desk(task, seed);
            let p = select_forget(&d.base, &ForgetSpec::Class { target_class: 0 }, &d.data.labels).unwrap();
            let r = retrain_oracle(&d.data, &p, &TrainSettings::default(), seed).unwrap();
            forgotten += subset_accuracy(&r.model, &d.data, &p.forgotten_class_test_ids(&d.data.labels)).unwrap() / 5.0;
            retain += subset_accuracy(&r.model, &d.data, &p.retain_ids).unwrap() / 5.0;
            retain_f += subset_accuracy(&d.original, &d.data, &p.retain_ids).unwrap() / 5.0;
        }
        pass &= forgotten <= 5.0 && retain >= 0.9 * retain_f;
        parts.push(format!("{task}: forgotten-class test {forgotten:.2}%, D_r {retain:.2}% vs {retain_f:.2}%"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < 120.0, format!("{}; {secs:.1} s", parts.join("; ")))
}

// ---------------------------------------------------------------- bench

fn bench(extra: &str) -> (Vec<ResultRow>, String, f64) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = speech_unlearn::config::parse_config(extra).unwrap();
    cfg.out = dir.path().to_path_buf();
    cfg.workers = 1;
    let start = Instant::now();
    let summary = cmd_bench(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    (summary.rows, csv, secs)
}

thread_local! {
    static DEFAULT: std::cell::OnceCell<(Vec<ResultRow>, String, f64)> = const { std::cell::OnceCell::new() };
    static WRAPPED: std::cell::OnceCell<(Vec<ResultRow>, String, f64)> = const { std::cell::OnceCell::new() };
}

fn default_bench() -> (Vec<ResultRow>, String, f64) {
    DEFAULT.with(|c| c.get_or_init(|| bench("")).clone())
}

fn wrapped_bench() -> (Vec<ResultRow>, String, f64) {
    WRAPPED.with(|c| c.get_or_init(|| bench("superloss = true\nmethods = grad_ascent\n")).clone())
}

#[derive(Default, Clone, Copy)]
struct Mean {
    forget: f64,
    retain: f64,
    mia: f64,
    n: f64,
}

/// Per (task, method) means over the sample-mode rows: every default
/// ratio and seed.
fn sample_means(rows: &[ResultRow]) -> BTreeMap<(Task, String), Mean> {
    let mut out: BTreeMap<(Task, String), Mean> = BTreeMap::new();
    for r in rows {
        let original_sample = r.method == "original" && r.section == Section::Original;
        if !(r.section == Section::Sample || original_sample) {
            continue;
        }
        let m = r.outcome.as_ref().expect("bench row failed");
        let e = out.entry((r.task, r.method.clone())).or_default();
        e.forget += m.acc_forget;
        e.retain += m.acc_retain;
        e.mia += m.mia;
        e.n += 1.0;
    }
    for e in out.values_mut() {
        e.forget /= e.n;
        e.retain /= e.n;
        e.mia /= e.n;
    }
    out
}

fn ordering() -> Outcome {
    let (rows, _, _) = default_bench();
    let means = sample_means(&rows);
    let mut pass = true;
    let mut parts = Vec::new();
    for task in Task::ALL {
        let get = |m: &str| means[&(task, m.to_string())];
        let (orig, ga) = (get("original"), get("grad_ascent"));
        let baselines = ["grad_ascent", "rand_label", "salun", "scrub", "bad_t"];
        let a = baselines.iter().all(|&b| b == "grad_ascent" || get(b).forget > ga.forget)
            && orig.retain - ga.retain >= 20.0;
        let b = ["rand_label", "salun"]
            .iter()
            .all(|&m| get(m).retain >= 0.95 * orig.retain && get(m).forget > ga.forget);
        let unlearned = ["grad_ascent", "rand_label", "salun", "scrub", "bad_t", "retrain"];
        let lowest_mia = unlearned.iter().map(|&m| get(m).mia).fold(f64::INFINITY, f64::min);
        let c = lowest_mia > orig.mia;
        pass &= a && b && c;
        parts.push(format!(
            "{task}: (a) {a} GA D_f {:.2} D_r {:.2} vs {:.2}; (b) {b}; (c) {c} MIA min {lowest_mia:.2} > {:.2}",
            ga.forget, ga.retain, orig.retain, orig.mia
        ));
    }
    outcome(pass, parts.join("; "))
}

fn superloss_direction() -> Outcome {
    let (rows, _, _) = wrapped_bench();
    let means = sample_means(&rows);
    let mut pass = true;
    let mut parts = Vec::new();
    for task in Task::ALL {
        let plain = means[&(task, "grad_ascent".to_string())];
        let sl = means[&(task, "grad_ascent+sl".to_string())];
        let ok = sl.forget < plain.forget && (sl.retain - plain.retain).abs() <= 5.0;
        pass &= ok;
        parts.push(format!(
            "{task}: D_f {:.2} -> {:.2}, D_r {:.2} -> {:.2}",
            plain.forget, sl.forget, plain.retain, sl.retain
        ));
    }
    outcome(pass, parts.join("; "))
}

fn time_budget() -> Outcome {
    let mut checked = 0;
    let mut over = Vec::new();
    for rows in [default_bench().0, wrapped_bench().0] {
        // `budget` is the retrain oracle's wall time on the row's partition.
        for r in rows.iter().filter(|r| r.method != "retrain" && r.method != "original") {
            let budget = r.budget.expect("time budget is on by default");
            checked += 1;
            if r.wall_time > budget {
                over.push(format!("{} {} {} s{}", r.task, r.method, r.forget, r.seed));
            }
        }
    }
    outcome(over.is_empty(), format!("{checked} runs checked, over budget: {over:?}"))
}

fn determinism() -> Outcome {
    let (_, first, secs) = default_bench();
    let (_, second, secs2) = bench("");
    let same = first == second;
    let slowest = secs.max(secs2);
    outcome(
        same && slowest < 600.0,
        format!(
            "results.csv {} ({} bytes); default bench {secs:.1} s and {secs2:.1} s",
            if same { "byte-identical" } else { "differs" },
            first.len()
        ),
    )
}

fn mia_sanity() -> Outcome {
    // A large held-out pool from the default generator, cut into four
    // disjoint quarters: calibrate on two, score on the other two.
    let spec = GenSpec {
        samples_per_class: 1000,
        ..GenSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let data = corpus.task_data(Task::Keyword).unwrap();
    let base = split(&corpus, Task::Keyword, 0.5, 0).unwrap();
    let model = train(&data, &base, &TrainSettings::default(), 0).unwrap();
    let losses = per_sample_losses(&model, &data, &base.test_ids).unwrap();
    let mut shuffled = losses.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
    let q: Vec<&[f64]> = shuffled.chunks(shuffled.len().div_ceil(4)).collect();
    let attacker = MiaAttacker::calibrate(q[0], q[1]).unwrap();
    let same = attacker.balanced_accuracy_on(q[2], q[3]).unwrap();

    let members: Vec<f64> = (0..200).map(|i| 0.01 + 0.001 * i as f64).collect();
    let outsiders: Vec<f64> = (0..200).map(|i| 2.0 + 0.01 * i as f64).collect();
    let separated = MiaAttacker::calibrate(&members, &outsiders).unwrap();
    let sep_fit = separated.balanced_accuracy;
    let sep_held = separated.balanced_accuracy_on(&members[..100], &outsiders[100..]).unwrap();
    outcome(
        (same - 50.0).abs() <= 3.0 && sep_fit == 100.0 && sep_held == 100.0,
        format!(
            "same distribution {same:.2}% on held-out quarters of {} losses; separated {sep_fit:.1}% / {sep_held:.1}%",
            losses.len()
        ),
    )
}
