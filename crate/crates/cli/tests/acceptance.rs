//! Acceptance suite. Prints one `PASS`/`FAIL`/`SKIP` line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Set `LOGION_DATASET` to the published dataset (schema JSONL) to run the
//! dataset-statistics check against it.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use erratum_cli::commands::corpus_vocabulary;
use erratum_cli::corpus::load_corpus;
use erratum_cli::run_from_args;
use erratum_core::candidates::{build_index, Vocabulary};
use erratum_core::dataset::{
    dataset_to_string, load_dataset, sample_presumed_negatives, ErrorCategory, InjectedError, Label,
    LabeledExample, SegmentationOptions, DatasetSummary, SCHEMA,
};
use erratum_core::detectors::{ccr_score, pllr_score, write_scores, DetectorConfig, DetectorKind, ErrorScore};
use erratum_core::eval::{roc, tpr_at_fpr};
use erratum_core::providers::{NgramModel, NgramTrainer};
use erratum_core::providers::Context;
use erratum_core::text::{Document, NormalizationPolicy, Tokenization};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("candidate-index oracle", candidate_oracle),
        ("ccr brute-force equivalence", ccr_equivalence),
        ("pllr identity bound", pllr_identity),
        ("roc correctness", roc_correctness),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("dataset statistics", dataset_statistics),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Outcome::Skip(d) => println!("SKIP {name} ({secs:.1}s): {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn lev(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            cur[j] = (prev[j - 1] + usize::from(a[i - 1] != b[j - 1]))
                .min(prev[j] + 1)
                .min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn random_word(rng: &mut ChaCha8Rng, alphabet: &[char], max_len: usize) -> String {
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

fn random_vocab(rng: &mut ChaCha8Rng, alphabet: &[char], max_len: usize, size: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < size && attempts < size * 50 {
        attempts += 1;
        let w = random_word(rng, alphabet, max_len);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn mutate(rng: &mut ChaCha8Rng, w: &str, alphabet: &[char], edits: usize) -> String {
    let mut c: Vec<char> = w.chars().collect();
    for _ in 0..edits {
        match rng.gen_range(0..3) {
            0 if !c.is_empty() => {
                let i = rng.gen_range(0..c.len());
                c[i] = *alphabet.choose(rng).unwrap();
            }
            1 if c.len() > 1 => {
                c.remove(rng.gen_range(0..c.len()));
            }
            _ => {
                let i = rng.gen_range(0..=c.len());
                c.insert(i, *alphabet.choose(rng).unwrap());
            }
        }
    }
    c.into_iter().collect()
}

fn candidate_oracle() -> Outcome {
    let alphabet: Vec<char> = "abcdeάω".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let t = Instant::now();
    let mut queries = 0;
    let mut mismatched = 0;
    let mut mismatches = Vec::new();
    for v in 0..50 {
        let size = if v % 5 == 0 { 5000 } else { rng.gen_range(1..=5000) };
        let words = random_vocab(&mut rng, &alphabet, 7, size);
        let vocab = Arc::new(Vocabulary::from_words(&words, NormalizationPolicy::Compose).unwrap());
        let index = build_index(vocab.clone()).unwrap();
        let chars: Vec<Vec<char>> = vocab.words().iter().map(|w| w.chars().collect()).collect();
        for _ in 0..200 {
            let q = match rng.gen_range(0..4) {
                0 => words.choose(&mut rng).unwrap().clone(),
                1 | 2 => {
                    let e = rng.gen_range(1..=2);
                    let base = words.choose(&mut rng).unwrap().clone();
                    mutate(&mut rng, &base, &alphabet, e)
                }
                _ => random_word(&mut rng, &alphabet, 8),
            };
            let qc: Vec<char> = q.chars().collect();
            let dist: Vec<usize> = chars.iter().map(|w| lev(&qc, w)).collect();
            for k in 0..=2 {
                queries += 1;
                let mut expected: Vec<(usize, u32)> = dist
                    .iter()
                    .enumerate()
                    .filter(|(_, &d)| d <= k)
                    .map(|(id, &d)| (d, id as u32))
                    .collect();
                expected.sort_unstable();
                let got: Vec<(usize, u32)> = index
                    .neighbors(&q, k)
                    .unwrap()
                    .members
                    .iter()
                    .map(|c| (c.distance, c.id))
                    .collect();
                if got != expected {
                    mismatched += 1;
                }
                if got != expected && mismatches.len() < 3 {
                    mismatches.push(format!("vocab {v} query `{q}` k={k}: {} vs {}", got.len(), expected.len()));
                }
            }
        }
    }
    let elapsed = t.elapsed();
    check(
        mismatched == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{queries} queries, {mismatched} mismatches {:?}, {:.1}s (limit 60s)",
            mismatches,
            elapsed.as_secs_f64()
        ),
    )
}

/// Independent bidirectional bigram: counts over string symbols and an
/// explicit sum over the vocabulary.
struct BigramOracle {
    vocab: Vec<String>,
    in_vocab: HashSet<String>,
    pair: HashMap<(String, String), f64>,
    left: HashMap<String, f64>,
    s: f64,
}

const BOS: &str = "<s>";
const EOS: &str = "</s>";
const UNK: &str = "<unk>";

impl BigramOracle {
    fn new(vocab: &[String], training: &[Vec<String>]) -> Self {
        let in_vocab: HashSet<String> = vocab.iter().cloned().collect();
        let mut pair = HashMap::new();
        let mut left = HashMap::new();
        for seq in training {
            let mut syms = vec![BOS.to_string()];
            syms.extend(seq.iter().map(|w| if in_vocab.contains(w) { w.clone() } else { UNK.to_string() }));
            syms.push(EOS.to_string());
            for w in syms.windows(2) {
                *pair.entry((w[0].clone(), w[1].clone())).or_insert(0.0) += 1.0;
                *left.entry(w[0].clone()).or_insert(0.0) += 1.0;
            }
        }
        BigramOracle {
            vocab: vocab.to_vec(),
            in_vocab,
            pair,
            left,
            s: vocab.len() as f64 + 2.0,
        }
    }

    fn sym(&self, w: &str) -> String {
        if self.in_vocab.contains(w) {
            w.to_string()
        } else {
            UNK.to_string()
        }
    }

    fn weight(&self, l: &str, w: &str, r: &str) -> f64 {
        if !self.in_vocab.contains(w) {
            return 1.0 / self.s;
        }
        let c = |a: &str, b: &str| self.pair.get(&(a.to_string(), b.to_string())).copied().unwrap_or(0.0);
        (c(l, w) + 1.0) * (c(w, r) + 1.0) / (self.left.get(w).copied().unwrap_or(0.0) + self.s)
    }

    fn log_prob(&self, words: &[String], i: usize, w: &str) -> f64 {
        let l = if i == 0 { BOS.to_string() } else { self.sym(&words[i - 1]) };
        let r = if i + 1 == words.len() { EOS.to_string() } else { self.sym(&words[i + 1]) };
        let z: f64 = self.vocab.iter().map(|x| self.weight(&l, x, &r)).sum();
        (self.weight(&l, w, &r) / z).ln()
    }

    fn pseudo_log_likelihood(&self, words: &[String]) -> f64 {
        (0..words.len()).map(|i| self.log_prob(words, i, &words[i])).sum()
    }

    fn within(&self, w: &str, k: usize) -> Vec<&String> {
        let wc: Vec<char> = w.chars().collect();
        self.vocab
            .iter()
            .filter(|v| lev(&wc, &v.chars().collect::<Vec<_>>()) <= k)
            .collect()
    }

    fn ccr(&self, words: &[String], i: usize, k: usize) -> f64 {
        let obs = &words[i];
        let mut cands = self.within(obs, k);
        if cands.is_empty() {
            return 0.0;
        }
        let chance = self.log_prob(words, i, obs);
        if !self.in_vocab.contains(obs) {
            cands.push(obs);
        }
        let conf = cands
            .iter()
            .map(|c| self.log_prob(words, i, c))
            .fold(f64::NEG_INFINITY, f64::max);
        conf - chance
    }

    fn pllr(&self, words: &[String], i: usize, k: usize) -> (f64, f64) {
        let base = self.pseudo_log_likelihood(words);
        let mut best = f64::NEG_INFINITY;
        for c in self.within(&words[i], k) {
            if *c == words[i] {
                continue;
            }
            let mut v = words.to_vec();
            v[i] = c.clone();
            best = best.max(self.pseudo_log_likelihood(&v) - base);
        }
        (best.max(0.0), best)
    }
}

struct Case {
    vocab: Vec<String>,
    training: Vec<Vec<String>>,
    words: Vec<String>,
    index: usize,
    k: usize,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let alphabet: Vec<char> = "abcd".chars().collect();
    let size = rng.gen_range(2..=200);
    let vocab = random_vocab(rng, &alphabet, 4, size);
    let oov: Vec<String> = vec!["zz".into(), "qq".into(), "abcz".into()];
    let draw = |rng: &mut ChaCha8Rng| -> String {
        if rng.gen_bool(0.1) {
            oov.choose(rng).unwrap().clone()
        } else {
            vocab.choose(rng).unwrap().clone()
        }
    };
    let training = (0..rng.gen_range(1..=20))
        .map(|_| (0..rng.gen_range(1..=15)).map(|_| draw(rng)).collect())
        .collect();
    let words: Vec<String> = (0..rng.gen_range(1..=12)).map(|_| draw(rng)).collect();
    let index = rng.gen_range(0..words.len());
    let k = rng.gen_range(0..=2);
    Case {
        vocab,
        training,
        words,
        index,
        k,
    }
}

fn model_for(case: &Case) -> (NgramModel, Arc<erratum_core::NeighborIndex>, Document) {
    let vocab = Arc::new(Vocabulary::from_words(&case.vocab, NormalizationPolicy::Compose).unwrap());
    let mut trainer = NgramTrainer::with_vocabulary(vocab.clone());
    for s in &case.training {
        trainer.add_sequence(s);
    }
    let model = trainer.build().unwrap();
    let index = Arc::new(build_index(vocab).unwrap());
    let doc = Document::new("case", &case.words.join(" "), NormalizationPolicy::Compose, Tokenization::Word);
    assert_eq!(doc.words(), case.words);
    (model, index, doc)
}

fn ccr_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let mut nonzero = 0;
    for n in 0..1000 {
        let case = random_case(&mut rng);
        let (model, index, doc) = model_for(&case);
        let mut config = DetectorConfig::new(DetectorKind::Ccr);
        config.radius = case.k;
        let got = ccr_score(&doc.spans[case.index], &Context::from(&doc), &model, &index, &config)
            .unwrap()
            .score;
        let want = BigramOracle::new(&case.vocab, &case.training).ccr(&case.words, case.index, case.k);
        let err = (got - want).abs();
        worst = worst.max(err);
        if want > 0.0 {
            nonzero += 1;
        }
        if (err.is_nan() || err > 1e-12) && bad.len() < 3 {
            bad.push(format!("case {n}: {got} vs {want}"));
        }
    }
    check(
        bad.is_empty(),
        format!("1000 cases ({nonzero} non-zero), max |diff| {worst:.2e} (tol 1e-12) {bad:?}"),
    )
}

fn pllr_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut negative = 0;
    let mut nonzero_at_max = 0;
    let mut observed_max = 0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let case = random_case(&mut rng);
        let (model, index, doc) = model_for(&case);
        let mut config = DetectorConfig::new(DetectorKind::Pllr);
        config.radius = case.k;
        let got = pllr_score(&doc.spans[case.index], &Context::from(&doc), &model, &index, &config)
            .unwrap()
            .score;
        let (want, best_gain) = BigramOracle::new(&case.vocab, &case.training).pllr(&case.words, case.index, case.k);
        if got < 0.0 {
            negative += 1;
        }
        if best_gain < -1e-9 {
            observed_max += 1;
            if got != 0.0 {
                nonzero_at_max += 1;
            }
        }
        worst = worst.max((got - want).abs());
    }
    check(
        negative == 0 && nonzero_at_max == 0 && worst <= 1e-9,
        format!(
            "1000 cases: {negative} negative, {nonzero_at_max}/{observed_max} non-zero where the observed word maximizes, \
             max |diff| vs full pseudo-likelihood {worst:.2e}"
        ),
    )
}

fn mann_whitney(data: &[(f64, bool)]) -> f64 {
    let pos: Vec<f64> = data.iter().filter(|d| d.1).map(|d| d.0).collect();
    let neg: Vec<f64> = data.iter().filter(|d| !d.1).map(|d| d.0).collect();
    let mut u = 0.0;
    for p in &pos {
        for n in &neg {
            u += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    u / (pos.len() * neg.len()) as f64
}

fn roc_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    let mut variant_mismatch = 0;
    for set in 0..100 {
        let n = rng.gen_range(2..=500);
        let ties = set % 2 == 0;
        let mut data: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let y = rng.gen_bool(0.3);
                let s = if ties {
                    rng.gen_range(0..8) as f64 + if y { 1.0 } else { 0.0 }
                } else {
                    rng.gen::<f64>() + if y { 0.3 } else { 0.0 }
                };
                (s, y)
            })
            .collect();
        data[0].1 = true;
        data[1].1 = false;
        let curve = roc(&data).unwrap();
        worst = worst.max((curve.auroc - mann_whitney(&data)).abs());
        let transformed: Vec<(f64, bool)> = data.iter().map(|&(s, y)| ((s * 0.5).exp() * 3.0 - 1.0, y)).collect();
        let t = roc(&transformed).unwrap();
        if t.auroc != curve.auroc
            || t.points != curve.points
            || tpr_at_fpr(&t, 0.1) != tpr_at_fpr(&curve, 0.1)
        {
            variant_mismatch += 1;
        }
    }
    check(
        worst <= 1e-9 && variant_mismatch == 0,
        format!("100 sets: max |auroc - mann-whitney| {worst:.2e}, {variant_mismatch} transform mismatches"),
    )
}

fn moby() -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/moby_dick.txt");
    fs::read_to_string(p).expect("moby_dick.txt")
}

fn run(args: &[&str]) {
    let mut v = vec!["erratum"];
    v.extend_from_slice(args);
    if let Err(e) = run_from_args(v) {
        panic!("erratum {}: {e:#}", args.join(" "));
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_chunks(dir: &Path, tokens: &[&str], per_file: usize) {
    fs::create_dir_all(dir).unwrap();
    for (k, chunk) in tokens.chunks(per_file).enumerate() {
        fs::write(dir.join(format!("part{k:03}.txt")), chunk.join(" ") + "\n").unwrap();
    }
}

struct Synthetic {
    root: PathBuf,
    train: PathBuf,
    vocab: PathBuf,
    injected: PathBuf,
}

fn prepare_synthetic(root: &Path) -> Synthetic {
    let text = moby();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let (a, b) = tokens.split_at(tokens.len() / 2);
    let train = root.join("train");
    let clean = root.join("clean");
    write_chunks(&train, a, 2000);
    write_chunks(&clean, b, 2000);
    let seg = SegmentationOptions::default();
    let train_docs = load_corpus(&train, seg.policy, seg.scheme).unwrap();
    let vocab = corpus_vocabulary(&train_docs, seg.policy).unwrap();
    let vocab_path = root.join("vocab.txt");
    fs::write(&vocab_path, vocab.to_file_contents()).unwrap();
    let injected = root.join("inject");
    run(&[
        "--seed",
        "2024",
        "inject",
        "--corpus",
        p(&clean),
        "--rate",
        "0.02",
        "--channel",
        "word_neighbor_swap",
        "--vocab",
        p(&vocab_path),
        "--out",
        p(&injected),
    ]);
    Synthetic {
        root: root.to_path_buf(),
        train,
        vocab: vocab_path,
        injected,
    }
}

fn score_ccr(s: &Synthetic, out: &Path) {
    run(&[
        "score",
        "--corpus",
        p(&s.injected.join("corpus")),
        "--provider",
        &format!("ngram:{}", p(&s.train)),
        "--vocab",
        p(&s.vocab),
        "--detector",
        "ccr",
        "--radius",
        "1",
        "--out",
        p(out),
    ]);
}

fn read_auroc(report: &Path, name: &str) -> f64 {
    let text = fs::read_to_string(report).unwrap();
    let line = text
        .lines()
        .find(|l| l.starts_with(&format!("{name},all,")))
        .unwrap_or_else(|| panic!("no `{name}` row in {text}"));
    line.split(',').nth(2).unwrap().parse().unwrap()
}

fn synthetic_end_to_end() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let s = prepare_synthetic(dir.path());
    let flags: Vec<InjectedError> = csv::Reader::from_path(s.injected.join("flags.csv"))
        .unwrap()
        .deserialize()
        .map(|r| r.unwrap())
        .collect();
    let flagged: HashSet<(String, usize)> = flags.iter().map(|f| (f.doc_id.clone(), f.word_index)).collect();

    let ccr_out = s.root.join("ccr");
    score_ccr(&s, &ccr_out);

    let seg = SegmentationOptions::default();
    let docs = load_corpus(&s.injected.join("corpus"), seg.policy, seg.scheme).unwrap();
    let lexical: Vec<(String, usize, String)> = docs
        .iter()
        .flat_map(|d| d.lexical_spans().map(|sp| (sp.doc_id.clone(), sp.word_index, sp.surface.clone())))
        .collect();

    // A detector that ignores its input.
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let uniform: Vec<ErrorScore> = lexical
        .iter()
        .map(|(d, i, w)| ErrorScore {
            doc_id: d.clone(),
            word_index: *i,
            surface: w.clone(),
            score: rng.gen(),
            detector: "uniform".into(),
            best_alternative: None,
            abstained: false,
        })
        .collect();
    let uniform_path = s.root.join("uniform.csv");
    write_scores(fs::File::create(&uniform_path).unwrap(), &uniform).unwrap();

    // Replaced-token scores from an oracle that knows the flags, with noise.
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut disc = String::new();
    for (d, i, _) in &lexical {
        let u: f64 = rng.gen();
        let score = if flagged.contains(&(d.clone(), *i)) { 0.5 + 0.5 * u } else { 0.55 * u };
        disc.push_str(&format!("{d}\t{i}\t{score}\n"));
    }
    let disc_path = s.root.join("oracle.disc");
    fs::write(&disc_path, disc).unwrap();
    let disc_out = s.root.join("disc");
    run(&[
        "score",
        "--corpus",
        p(&s.injected.join("corpus")),
        "--provider",
        &format!("discriminator:{}", p(&disc_path)),
        "--detector",
        "discriminator",
        "--out",
        p(&disc_out),
    ]);

    let eval = s.root.join("eval");
    run(&[
        "evaluate",
        "--scores",
        p(&ccr_out.join("scores.csv")),
        "--scores",
        p(&uniform_path),
        "--scores",
        p(&disc_out.join("scores.csv")),
        "--name",
        "ccr",
        "--name",
        "uniform",
        "--name",
        "discriminator",
        "--flags",
        p(&s.injected.join("flags.csv")),
        "--corpus",
        p(&s.injected.join("corpus")),
        "--out",
        p(&eval),
    ]);
    let report = eval.join("report.csv");
    let (ccr, uni, dis) = (
        read_auroc(&report, "ccr"),
        read_auroc(&report, "uniform"),
        read_auroc(&report, "discriminator"),
    );
    let elapsed = t.elapsed();
    let band = (0.44, 0.56);
    check(
        ccr >= 0.80 && ccr > band.1 && uni >= band.0 && uni <= band.1 && dis >= 0.95 && elapsed < Duration::from_secs(600),
        format!(
            "{} words, {} flags: ccr auroc {ccr:.4} (>= 0.80), uniform {uni:.4} (band 0.5 ± 0.06), \
             discriminator {dis:.4} (>= 0.95), {:.0}s (limit 600s)",
            lexical.len(),
            flags.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn summary_matches(s: &DatasetSummary) -> Result<String, String> {
    let got = (
        s.rows,
        s.definitive(),
        s.category(ErrorCategory::Digitization),
        s.category(ErrorCategory::Print),
        s.category(ErrorCategory::Scribal),
        s.positives(),
    );
    let want = (1000, 763, 42, 114, 61, 217);
    let text = format!(
        "rows {} definitive {} categories {}/{}/{} positives {}/{}",
        got.0, got.1, got.2, got.3, got.4, got.5, got.1
    );
    if got == want {
        Ok(text)
    } else {
        Err(text)
    }
}

fn synthetic_dataset(path: &Path) {
    let ctx = "alpha beta gamma delta epsilon zeta eta theta";
    let words: Vec<&str> = ctx.split(' ').collect();
    let mut plan: Vec<(Label, Option<ErrorCategory>)> = Vec::new();
    plan.extend(std::iter::repeat_n((Label::Error, Some(ErrorCategory::Digitization)), 42));
    plan.extend(std::iter::repeat_n((Label::Error, Some(ErrorCategory::Print)), 114));
    plan.extend(std::iter::repeat_n((Label::Error, Some(ErrorCategory::Scribal)), 61));
    plan.extend(std::iter::repeat_n((Label::NonError, None), 546));
    plan.extend(std::iter::repeat_n((Label::Plausible, None), 150));
    plan.extend(std::iter::repeat_n((Label::Uncertain, None), 87));
    let rows: Vec<LabeledExample> = plan
        .into_iter()
        .enumerate()
        .map(|(n, (label, category))| LabeledExample {
            schema: SCHEMA.into(),
            doc_id: format!("doc{}", n / words.len()),
            word_index: n % words.len(),
            surface: words[n % words.len()].into(),
            label,
            category,
            expert_notes: String::new(),
            suggested_alternative: None,
            context_text: ctx.into(),
            part: None,
        })
        .collect();
    fs::write(path, dataset_to_string(&rows)).unwrap();
}

fn dataset_statistics() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture.jsonl");
    synthetic_dataset(&fixture);
    let seg = SegmentationOptions::default();
    let fixture_check = summary_matches(&DatasetSummary::of(&load_dataset(&fixture, seg).unwrap()));
    if let Err(e) = &fixture_check {
        return Outcome::Fail(format!("synthetic fixture: {e}"));
    }
    match std::env::var_os("LOGION_DATASET") {
        None => Outcome::Skip(
            "published dataset not supplied (set LOGION_DATASET); counting checked on a synthetic 1000-row fixture".into(),
        ),
        Some(path) => match load_dataset(Path::new(&path), seg) {
            Err(e) => Outcome::Fail(format!("loading {}: {e}", Path::new(&path).display())),
            Ok(rows) => match summary_matches(&DatasetSummary::of(&rows)) {
                Ok(t) => Outcome::Pass(t),
                Err(t) => Outcome::Fail(format!("{t}; expected rows 1000 definitive 763 categories 42/114/61 positives 217/763")),
            },
        },
    }
}

fn determinism() -> Outcome {
    let mut mismatches = Vec::new();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = prepare_synthetic(a.path());
    let sb = prepare_synthetic(b.path());
    let same = |x: &Path, y: &Path| fs::read(x).unwrap() == fs::read(y).unwrap();
    if !same(&sa.injected.join("flags.csv"), &sb.injected.join("flags.csv")) {
        mismatches.push("inject flags");
    }
    for e in fs::read_dir(sa.injected.join("corpus")).unwrap() {
        let name = e.unwrap().file_name();
        if !same(&sa.injected.join("corpus").join(&name), &sb.injected.join("corpus").join(&name)) {
            mismatches.push("inject corpus");
            break;
        }
    }
    for s in [&sa, &sb] {
        score_ccr(s, &s.root.join("ccr"));
        run(&[
            "--seed",
            "9",
            "evaluate",
            "--scores",
            p(&s.root.join("ccr/scores.csv")),
            "--flags",
            p(&s.injected.join("flags.csv")),
            "--corpus",
            p(&s.injected.join("corpus")),
            "--out",
            p(&s.root.join("eval")),
        ]);
    }
    if !same(&sa.root.join("ccr/scores.csv"), &sb.root.join("ccr/scores.csv")) {
        mismatches.push("score");
    }
    if !same(&sa.root.join("eval/report.csv"), &sb.root.join("eval/report.csv")) {
        mismatches.push("evaluate report");
    }
    for e in fs::read_dir(sa.root.join("eval")).unwrap() {
        let name = e.unwrap().file_name();
        if name.to_string_lossy().ends_with(".svg") && !same(&sa.root.join("eval").join(&name), &sb.root.join("eval").join(&name)) {
            mismatches.push("evaluate svg");
        }
    }
    let seg = SegmentationOptions::default();
    let docs = load_corpus(&sa.injected.join("corpus"), seg.policy, seg.scheme).unwrap();
    let n1 = sample_presumed_negatives(&docs, 237, 42).unwrap();
    let n2 = sample_presumed_negatives(&docs, 237, 42).unwrap();
    if n1 != n2 {
        mismatches.push("presumed-negative sampling");
    }
    check(
        mismatches.is_empty(),
        format!("inject, score, evaluate and sampling reruns compared byte for byte; mismatches {mismatches:?}"),
    )
}
