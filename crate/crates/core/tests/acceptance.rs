//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on
//! any failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use spantag::corpus::{Annotation, Corpus, Document};
use spantag::crf::CrfModel;
use spantag::emitters::SpanProbs;
use spantag::eval::{micro_f1, span_f1};
use spantag::gazetteer::{stem, Gazetteer};
use spantag::pipeline::{ablate, PipelineConfig};
use spantag::postproc::{
    apply_repetition, fix_in_chars, resolve_nesting_strategy1, resolve_nesting_strategy2, NestingModel,
    PunctuationRuleConfig, RepetitionRuleConfig,
};
use spantag::spanops::{Span, SpanSet};
use spantag::synthetic::{
    generate_classification, generate_identification, write_classification_fixture, write_identification_fixture,
    ClassificationSpec, IdentificationSpec,
};
use spantag::tagcodec::{decode, encode, repair, validate, DecodeMode, Scheme};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn crf_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(101);
    let mut worst_z = 0.0f64;
    for case in 0..200 {
        let (scheme, tags) = random_inventory(&mut r, 4);
        let t = r.random_range(1..=5);
        let m = random_model(&mut r, tags.clone(), scheme, 2.0);
        let em = random_emissions(&mut r, tags, t, 3.0);
        let z = m.log_partition(&em).map_err(|e| e.to_string())?;
        let bz = brute_log_partition(&m, &em);
        worst_z = worst_z.max((z - bz).abs());
        ensure((z - bz).abs() <= 1e-9, || format!("case {case}: log Z {z} vs brute {bz}"))?;
        let (path, score) = m.viterbi(&em, None).map_err(|e| e.to_string())?;
        let (bpath, bscore) = brute_best(&m, &em, false).expect("non-empty");
        ensure(path == bpath && (score - bscore).abs() <= 1e-9, || {
            format!("case {case}: viterbi {path:?} ({score}) vs brute {bpath:?} ({bscore})")
        })?;
    }
    let elapsed = t0.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("200 instances, max |dlogZ| {worst_z:.1e}, {elapsed:.2?}"))
}

fn crf_gradient() -> Outcome {
    let mut r = rng(202);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for case in 0..20 {
        let (scheme, tags) = random_inventory(&mut r, 4);
        let t = r.random_range(1..=5);
        let m = random_model(&mut r, tags.clone(), scheme, 1.0);
        let em = random_emissions(&mut r, tags, t, 2.0);
        let legal: Vec<Vec<usize>> = all_paths(t, m.tag_order.len())
            .into_iter()
            .filter(|p| oracle_legal(&p.iter().map(|&y| m.tag_order[y].clone()).collect::<Vec<_>>(), scheme))
            .collect();
        let gold = legal[r.random_range(0..legal.len())].clone();
        let l2 = if case % 2 == 0 { 0.0 } else { 0.05 };
        let (_, g) = m.nll_and_gradient(&[(&em, &gold)], l2).map_err(|e| e.to_string())?;

        let loss = |m: &CrfModel, em: &spantag::crf::EmissionMatrix| m.nll_and_gradient(&[(em, &gold)], l2).unwrap().0;
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        let k = m.tag_order.len();
        for i in 0..k {
            for j in 0..k {
                let (mut a, mut b) = (m.clone(), m.clone());
                a.transitions[[i, j]] += h;
                b.transitions[[i, j]] -= h;
                numeric.push((loss(&a, &em) - loss(&b, &em)) / (2.0 * h));
                analytic.push(g.transitions[[i, j]]);
            }
            for which in 0..2 {
                let (mut a, mut b) = (m.clone(), m.clone());
                let (va, vb) = if which == 0 { (&mut a.start, &mut b.start) } else { (&mut a.end, &mut b.end) };
                va[i] += h;
                vb[i] -= h;
                numeric.push((loss(&a, &em) - loss(&b, &em)) / (2.0 * h));
                analytic.push(if which == 0 { g.start[i] } else { g.end[i] });
            }
            for tt in 0..t {
                let (mut a, mut b) = (em.clone(), em.clone());
                a.scores[[tt, i]] += h;
                b.scores[[tt, i]] -= h;
                numeric.push((loss(&m, &a) - loss(&m, &b)) / (2.0 * h));
                analytic.push(g.emissions[0][[tt, i]]);
            }
        }
        let err = relative_error(&analytic, &numeric);
        worst = worst.max(err);
        ensure(err <= 1e-4, || format!("case {case}: relative error {err:.2e}"))?;
    }
    Ok(format!("20 instances, worst relative error {worst:.2e}"))
}

fn masked_legality() -> Outcome {
    let mut r = rng(303);
    for scheme in Scheme::ALL {
        for case in 0..1000 {
            let classes = r.random_range(1..=3);
            let tags = scheme.tag_set(&class_names(classes));
            let t = r.random_range(1..=30);
            let m = random_model(&mut r, tags.clone(), scheme, 3.0);
            let em = random_emissions(&mut r, tags, t, 4.0);
            let seq = m.decode_tags(&em, true).map_err(|e| e.to_string())?;
            ensure(validate(&seq).is_empty() && oracle_legal(&seq.tags, scheme), || {
                format!("{scheme} case {case}: illegal output {:?}", seq.tags)
            })?;
        }
    }
    Ok("3000 matrices, zero violations".into())
}

fn codec() -> Outcome {
    let mut r = rng(404);
    for scheme in Scheme::ALL {
        for case in 0..1000 {
            let n = r.random_range(0..=20);
            let classes = r.random_range(1..=3);
            let spans = random_ranges(&mut r, n, classes, scheme);
            let seq = encode(&spans, n, scheme).map_err(|e| format!("{scheme} case {case}: {e}"))?;
            let back = decode(&seq, DecodeMode::Strict).map_err(|e| format!("{scheme} case {case}: {e}"))?;
            ensure(back == spans, || format!("{scheme} case {case}: {spans:?} -> {back:?}"))?;
        }
    }
    for case in 0..1000 {
        let scheme = Scheme::ALL[case % 3];
        let len = r.random_range(0..=15);
        let classes = r.random_range(1..=2);
        let seq = random_tags(&mut r, scheme, classes, len);
        let once = repair(&seq);
        ensure(repair(&once) == once && validate(&once).is_empty(), || {
            format!("repair case {case} not idempotent on {:?}", seq.tags)
        })?;
    }
    Ok("3000 roundtrips, 1000 repairs".into())
}

fn repetition_grid() -> Outcome {
    let (t1, t2, eps) = (0.001, 0.99, 1e-6);
    let cfg = RepetitionRuleConfig::default();
    ensure(cfg.t1 == t1 && cfg.t2 == t2, || "default thresholds changed".into())?;
    let mut cells = 0;
    for k in 1..=4usize {
        for p in [0.0, t1 - eps, t1, 0.5, t2, t2 + eps, 1.0] {
            let expected = if k >= 3 || (k == 2 && p >= t1) {
                1.0
            } else if k == 1 && p <= t2 {
                0.0
            } else {
                p
            };
            let probs = SpanProbs::from_pairs(&[("Repetition", p), ("Doubt", 0.25)]);
            let out = apply_repetition(&probs, k, &cfg).map_err(|e| e.to_string())?;
            ensure(out.get("Repetition") == expected && out.get("Doubt") == 0.25, || {
                format!("k={k}, p={p}: got {}", out.get("Repetition"))
            })?;
            cells += 1;
        }
    }
    Ok(format!("{cells} grid cells"))
}

fn boundary() -> Outcome {
    let rule = PunctuationRuleConfig::default();
    let mut r = rng(505);
    for case in 0..5000 {
        let len = r.random_range(2..=40);
        let chars = random_text(&mut r, len);
        let start = r.random_range(0..chars.len());
        let end = r.random_range(start + 1..=chars.len());
        let (s, e) = fix_in_chars(start, end, &chars, &rule);
        ensure(s < e && e <= chars.len(), || format!("case {case}: empty or out of range"))?;
        let all_punct = chars[s..e].iter().all(|&c| c.is_whitespace() || PUNCT.contains(c));
        ensure(all_punct || !bad_edges(&chars, s, e, &QUOTE_PAIRS), || {
            let text: String = chars.iter().collect();
            format!("case {case}: {text:?} [{start},{end}) -> [{s},{e})")
        })?;
        ensure(fix_in_chars(s, e, &chars, &rule) == (s, e), || format!("case {case}: not idempotent"))?;
    }
    let text: Vec<char> = "He said: \"It is what it is.\" Then left.".chars().collect();
    let want = (9, 28);
    for variant in ["\"It is what it is", "It is what it is."] {
        let joined: String = text.iter().collect();
        let byte = joined.find(variant).unwrap();
        let start = joined[..byte].chars().count();
        let got = fix_in_chars(start, start + variant.chars().count(), &text, &rule);
        ensure(got == want, || format!("{variant:?} repaired to {got:?}"))?;
    }
    Ok("5000 fuzz spans, both quotation variants repaired".into())
}

fn probs3(r: &mut rand_chacha::ChaCha8Rng, classes: &[String]) -> SpanProbs {
    let raw: Vec<f64> = (0..3).map(|_| r.random_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    SpanProbs::new(classes.iter().cloned().zip(raw.into_iter().map(|v| v / total)))
}

fn nesting() -> Outcome {
    let classes = class_names(3);
    let mut r = rng(606);
    let cells: Vec<(usize, usize)> = (0..3).flat_map(|x| (0..3).map(move |y| (x, y))).collect();
    let argmax = |p: &SpanProbs| p.argmax().unwrap().to_string();
    // strategy 1: every allowed-pair subset
    for mask in 0u32..512 {
        let inner = probs3(&mut r, &classes);
        let outer = probs3(&mut r, &classes);
        let allowed: BTreeSet<(String, String)> = cells
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &(x, y))| (classes[x].clone(), classes[y].clone()))
            .collect();
        let got = resolve_nesting_strategy1(&inner, &outer, &allowed).map_err(|e| e.to_string())?;
        let want = allowed
            .iter()
            .map(|(x, y)| (inner.get(x) * outer.get(y), x.clone(), y.clone()))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, x, y)| (x, y))
            .unwrap_or_else(|| (argmax(&inner), argmax(&outer)));
        ensure((got.inner.clone(), got.outer.clone()) == want, || {
            format!("strategy 1, mask {mask}: {got:?} vs {want:?}")
        })?;
    }
    // strategy 2: every count matrix over {0, 1, 2}
    let temperature = 0.26;
    for code in 0..3u32.pow(9) {
        let counts: Vec<Vec<u64>> = (0..3)
            .map(|x| (0..3).map(|y| (code / 3u32.pow(3 * x + y) % 3) as u64).collect())
            .collect();
        let model = NestingModel::new(classes.clone(), counts.clone(), temperature).map_err(|e| e.to_string())?;
        let inner = probs3(&mut r, &classes);
        let outer = probs3(&mut r, &classes);
        let z: f64 = counts.iter().flatten().map(|&n| (n as f64 / temperature).exp()).sum();
        let mut best = (f64::NEG_INFINITY, String::new(), String::new());
        for &(x, y) in &cells {
            let pa = (counts[x][y] as f64 / temperature).exp() / z;
            let v = inner.get(&classes[x]) * outer.get(&classes[y]) * pa;
            if v > best.0 {
                best = (v, classes[x].clone(), classes[y].clone());
            }
        }
        let got = resolve_nesting_strategy2(&inner, &outer, &model).map_err(|e| e.to_string())?;
        ensure(got.inner == best.1 && got.outer == best.2, || {
            format!("strategy 2, counts {counts:?}: {got:?} vs ({}, {})", best.1, best.2)
        })?;
    }
    for c in 0..5u64 {
        let model = NestingModel::new(classes.clone(), vec![vec![c; 3]; 3], temperature).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let inner = probs3(&mut r, &classes);
            let outer = probs3(&mut r, &classes);
            let got = resolve_nesting_strategy2(&inner, &outer, &model).map_err(|e| e.to_string())?;
            ensure(got.inner == argmax(&inner) && got.outer == argmax(&outer), || {
                format!("constant counts {c}: {got:?}")
            })?;
        }
    }
    Ok(format!("512 allowed sets, {} count matrices, constant-count argmax", 3u32.pow(9)))
}

fn metrics() -> Outcome {
    let set = |v: &[(usize, usize)]| SpanSet::from_ranges(v.iter().copied()).unwrap();
    let s = span_f1(&set(&[(0, 5)]), &set(&[(0, 10)]));
    ensure(s.precision == 1.0 && s.recall == 0.5 && (s.f1 - 2.0 / 3.0).abs() < 1e-12, || format!("{s:?}"))?;
    ensure(span_f1(&set(&[]), &set(&[])).f1 == 1.0, || "both empty".into())?;
    ensure(span_f1(&set(&[(0, 3)]), &set(&[(5, 9)])).f1 == 0.0, || "disjoint".into())?;
    let same = set(&[(0, 3), (7, 12)]);
    ensure(span_f1(&same, &same).f1 == 1.0, || "identity".into())?;
    let labelled = SpanSet::new(vec![Span::with_class(0, 4, "A")]).unwrap();
    let other = SpanSet::new(vec![Span::with_class(0, 4, "B")]).unwrap();
    ensure(span_f1(&labelled, &other).f1 == 0.0, || "label mismatch credited".into())?;

    let mut r = rng(808);
    let labels = ["A", "B", "C", "D"];
    let gold: Vec<&str> = (0..50).map(|_| labels[r.random_range(0..4)]).collect();
    let pred: Vec<&str> = (0..50).map(|_| labels[r.random_range(0..4)]).collect();
    let accuracy = gold.iter().zip(&pred).filter(|(g, p)| g == p).count() as f64 / 50.0;
    let micro = micro_f1(&pred, &gold).map_err(|e| e.to_string())?;
    ensure((micro - accuracy).abs() < 1e-12, || format!("micro {micro} vs accuracy {accuracy}"))?;
    Ok(format!("fixtures hold, micro_f1 = accuracy = {accuracy:.2}"))
}

fn synthetic_effects() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seed = 13;

    let id_data = generate_identification(&IdentificationSpec::default(), seed).map_err(|e| e.to_string())?;
    let id_cfg = write_identification_fixture(&dir.path().join("si"), &id_data, Scheme::Bio, seed).map_err(|e| e.to_string())?;
    let mut config = PipelineConfig::load(&id_cfg).map_err(|e| e.to_string())?;
    config.ablation.toggles = vec!["crf".into()];
    let table = ablate(&config).map_err(|e| e.to_string())?;
    let (base, crf) = (table.value("baseline").unwrap(), table.value("+crf").unwrap());
    ensure(crf - base > 0.0, || format!("+crf delta {:.4}", crf - base))?;

    let tc_data = generate_classification(&ClassificationSpec::default(), seed).map_err(|e| e.to_string())?;
    let tc_cfg = write_classification_fixture(&dir.path().join("tc"), &tc_data, seed).map_err(|e| e.to_string())?;
    let config = PipelineConfig::load(&tc_cfg).map_err(|e| e.to_string())?;
    let table = ablate(&config).map_err(|e| e.to_string())?;
    let (b, l, rep) = (
        table.value("baseline").unwrap(),
        table.value("+length").unwrap(),
        table.value("+repetition").unwrap(),
    );
    ensure(l - b > 0.0, || format!("+length delta {:.4}", l - b))?;
    ensure(rep - l > 0.0, || format!("+repetition delta {:.4}", rep - l))?;

    let elapsed = t0.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "span F1 {base:.3} -> {crf:.3}; micro F1 {b:.3} -> {l:.3} (+length) -> {rep:.3} (+repetition); {elapsed:.2?}"
    ))
}

fn gazetteer() -> Outcome {
    let docs: BTreeMap<String, Document> = [
        ("1", "Make America great again. They lie, they lie!"),
        ("2", "Make america GREAT again and again. Lying lies."),
    ]
    .into_iter()
    .map(|(id, t)| (id.to_string(), Document::new(id, t).unwrap()))
    .collect();
    let anns = vec![
        Annotation::new("1", "Slogans", 0, 24),
        Annotation::new("1", "Repetition", 26, 34),
        Annotation::new("1", "Repetition", 36, 44),
        Annotation::new("2", "Slogans", 0, 24),
        Annotation::new("2", "Loaded_Language", 36, 41),
    ];
    let corpus = Corpus::new(docs.clone(), anns.clone()).map_err(|e| e.to_string())?;
    let mut shuffled = anns.clone();
    shuffled.shuffle(&mut rng(1010));
    let other = Corpus::new(docs, shuffled).map_err(|e| e.to_string())?;
    let (a, b) = (Gazetteer::from_corpus(&corpus), Gazetteer::from_corpus(&other));
    ensure(a == b && a.to_tsv() == b.to_tsv(), || "build depends on input order".into())?;
    let reloaded = Gazetteer::from_tsv(&a.to_tsv()).map_err(|e| e.to_string())?;
    ensure(reloaded == a, || "TSV roundtrip changed the gazetteer".into())?;
    let hit = a.lookup("make AMERICA great  again").cloned();
    ensure(hit.as_ref().is_some_and(|d| d.get("Slogans") == Some(&1.0)), || format!("lookup {hit:?}"))?;

    let oracle = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/porter_oracle.tsv"))
        .map_err(|e| e.to_string())?;
    let pairs: Vec<(&str, &str)> = oracle.lines().filter_map(|l| l.split_once('\t')).collect();
    ensure(pairs.len() == 100, || format!("{} oracle pairs", pairs.len()))?;
    for (word, want) in &pairs {
        let got = stem(word);
        ensure(got == *want, || format!("stem({word}) = {got}, want {want}"))?;
    }
    Ok("deterministic build and lookup, 100/100 stems".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("crf_oracle_equivalence", crf_oracle),
        ("crf_gradient_check", crf_gradient),
        ("constrained_decoding_legality", masked_legality),
        ("codec_roundtrip_and_repair", codec),
        ("repetition_branch_grid", repetition_grid),
        ("boundary_rule_invariant", boundary),
        ("nesting_strategies", nesting),
        ("metric_properties", metrics),
        ("synthetic_effect_directions", synthetic_effects),
        ("gazetteer_and_porter", gazetteer),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
