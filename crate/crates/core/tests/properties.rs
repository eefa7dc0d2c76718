use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use proptest::prelude::*;

use rrseg::corpus::{
    adjudicate, reduce_labels, shift_statistic, split_corpus, AnnotationCell, DocumentRecord, Domain, MainLabel,
    Reduction, RhetoricalRole, SentenceRecord, SplitRatios,
};
use rrseg::distill::{self_training_objective, weighted_union};
use rrseg::encoders::EmbeddingArchive;
use rrseg::experiments::{
    extract_rr_for_judgment, run_transfer, DomainSplit, RrSource, TransferData, TransferDomain, TransferModel,
};
use rrseg::labelers::{
    evaluate, mean_loss, Checkpoint, DocInput, EncoderIds, SequenceModel, SequenceModelConfig, TrainExample,
    TrainedModel,
};
use rrseg::lsp::{build_shift_dataset, positive_rate, shift_labels, siamese_input};
use rrseg::metrics::{
    confusion_matrix, domain_transfer_delta, fleiss_kappa, macro_f1, pairwise_annotator_f1, Normalization,
};

fn role() -> impl Strategy<Value = RhetoricalRole> {
    prop::sample::select(RhetoricalRole::ALL.to_vec())
}

fn main_label() -> impl Strategy<Value = MainLabel> {
    prop::sample::select(MainLabel::ALL.to_vec())
}

fn labelled_doc(id: String, labels: &[MainLabel]) -> DocumentRecord {
    let sentences = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut s = SentenceRecord::new(i, format!("{id} sentence {i}"));
            s.gold_main = Some(*l);
            s
        })
        .collect();
    DocumentRecord { doc_id: id, domain: Domain::It, sentences }
}

fn corpus() -> impl Strategy<Value = Vec<DocumentRecord>> {
    corpus_of(1)
}

fn corpus_of(min_docs: usize) -> impl Strategy<Value = Vec<DocumentRecord>> {
    prop::collection::vec(prop::collection::vec(main_label(), 1..15), min_docs..25)
        .prop_map(|docs| docs.iter().enumerate().map(|(d, l)| labelled_doc(format!("d{d:03}"), l)).collect())
}

#[test]
fn every_role_reduces_to_one_main_label_or_drops() {
    let mut kept = BTreeSet::new();
    for role in RhetoricalRole::ALL {
        match role.reduce() {
            Reduction::Keep(l) => {
                assert!(MainLabel::ALL.contains(&l));
                kept.insert(l);
            }
            Reduction::Drop => assert!(matches!(role, RhetoricalRole::Non | RhetoricalRole::Dis)),
        }
    }
    assert_eq!(kept.len(), MainLabel::COUNT);
}

proptest! {
    #[test]
    fn strict_majority_sets_gold(
        primaries in prop::collection::vec((role(), role(), role()), 1..12),
        secondary in prop::option::of(role()),
    ) {
        let sentences = primaries
            .iter()
            .enumerate()
            .map(|(i, (a, b, c))| {
                let mut s = SentenceRecord::new(i, format!("s{i}"));
                for (name, p) in [("A1", a), ("A2", b), ("A3", c)] {
                    let mut cell = AnnotationCell::new(name, *p);
                    cell.secondary = secondary;
                    s.annotations.push(cell);
                }
                s
            })
            .collect();
        let doc = DocumentRecord { doc_id: "d".into(), domain: Domain::Cl, sentences };
        let adj = adjudicate(&doc, &BTreeMap::new()).unwrap();
        for (i, (a, b, c)) in primaries.iter().enumerate() {
            let majority = if a == b || a == c { Some(*a) } else if b == c { Some(*b) } else { None };
            prop_assert_eq!(adj.doc.sentences[i].gold, majority);
            prop_assert_eq!(adj.unresolved.contains(&i), majority.is_none());
        }
    }

    #[test]
    fn reduction_keeps_sentence_order(roles in prop::collection::vec(role(), 1..30)) {
        let sentences = roles
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut s = SentenceRecord::new(i, format!("s{i}"));
                s.gold = Some(*r);
                s
            })
            .collect();
        let doc = DocumentRecord { doc_id: "d".into(), domain: Domain::It, sentences };
        let reduced = reduce_labels(&doc).unwrap();
        let kept: Vec<usize> = reduced.doc.sentences.iter().map(|s| s.text[1..].parse().unwrap()).collect();
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(kept.len() + reduced.dropped, roles.len());
        prop_assert!(reduced.doc.sentences.iter().enumerate().all(|(i, s)| s.index == i));
    }

    #[test]
    fn splits_partition_and_repeat(docs in corpus_of(3), seed in any::<u64>(), train in 1u32..8, val in 0u32..4, test in 0u32..4) {
        let ratios = SplitRatios { train: train as f64, val: val as f64, test: test as f64 };
        let total = ratios.train + ratios.val + ratios.test;
        let ratios = SplitRatios { train: ratios.train / total, val: ratios.val / total, test: ratios.test / total };
        let a = split_corpus(&docs, ratios, seed).unwrap();
        let b = split_corpus(&docs, ratios, seed).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        prop_assert!(a.is_partition_of(docs.iter().map(|d| d.doc_id.as_str())));
        let mut seen = BTreeSet::new();
        for id in a.train.iter().chain(&a.val).chain(&a.test) {
            prop_assert!(seen.insert(id.clone()));
        }
        prop_assert_eq!(seen.len(), docs.len());
    }

    #[test]
    fn same_fraction_complements_shift_positions(docs in corpus()) {
        let stat = shift_statistic(&docs);
        let pairs = build_shift_dataset(&docs).unwrap();
        for entry in &stat.per_doc {
            let doc = docs.iter().find(|d| d.doc_id == entry.doc_id).unwrap();
            let shifts: usize = shift_labels(&doc.main_labels().unwrap()).iter().map(|&y| y as usize).sum();
            let expected = 1.0 - shifts as f64 / (doc.len() - 1) as f64;
            prop_assert!((entry.same_fraction() - expected).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&entry.same_fraction()));
        }
        for doc in &docs {
            let n = pairs.iter().filter(|p| p.doc_id == doc.doc_id).count();
            prop_assert_eq!(n, doc.len().saturating_sub(1));
        }
        match stat.pooled_same_fraction {
            Some(same) => prop_assert!((positive_rate(&pairs) + same - 1.0).abs() < 1e-12),
            None => prop_assert!(pairs.is_empty()),
        }
    }

    #[test]
    fn shift_labels_mark_changes(gold in prop::collection::vec(0u8..4, 0..20)) {
        let y = shift_labels(&gold);
        prop_assert_eq!(y.len(), gold.len().saturating_sub(1));
        for (i, &v) in y.iter().enumerate() {
            prop_assert_eq!(v == 1, gold[i] != gold[i + 1]);
        }
    }

    #[test]
    fn siamese_difference_block_vanishes_for_equal_sentences(v in prop::collection::vec(-10.0f32..10.0, 1..16)) {
        let a = ndarray::Array1::from(v);
        let x = siamese_input(a.view(), a.view());
        let d = a.len();
        prop_assert!(x.slice(ndarray::s![2 * d..]).iter().all(|&z| z == 0.0));
        prop_assert_eq!(x.slice(ndarray::s![..d]), a.view());
    }

    #[test]
    fn perfect_predictions_score_one(refs in prop::collection::vec(main_label(), 1..50)) {
        let report = macro_f1(&refs, &refs, MainLabel::ALL).unwrap();
        prop_assert_eq!(report.macro_f1, 1.0);
    }

    #[test]
    fn pairwise_f1_is_symmetric(pairs in prop::collection::vec((main_label(), main_label()), 1..60)) {
        let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let ab = pairwise_annotator_f1(&a, &b, MainLabel::ALL).unwrap();
        let ba = pairwise_annotator_f1(&b, &a, MainLabel::ALL).unwrap();
        prop_assert!((ab.macro_f1 - ba.macro_f1).abs() < 1e-12);
        prop_assert_eq!(ab.per_label_f1.len(), ba.per_label_f1.len());
    }

    #[test]
    fn confusion_counts_and_row_percentages(pairs in prop::collection::vec((main_label(), main_label()), 1..80)) {
        let (r, h): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let counts = confusion_matrix(&r, &h, MainLabel::ALL, Normalization::None).unwrap();
        prop_assert_eq!(counts.total(), r.len() as u64);
        let pct = confusion_matrix(&r, &h, MainLabel::ALL, Normalization::RowPercent).unwrap();
        for (row, raw) in pct.values().iter().zip(&counts.counts) {
            let sum: f64 = row.iter().sum();
            if raw.iter().sum::<u64>() > 0 {
                prop_assert!((sum - 100.0).abs() <= 0.01);
            } else {
                prop_assert_eq!(sum, 0.0);
            }
        }
    }

    #[test]
    fn perfect_agreement_kappa_is_one(choices in prop::collection::vec(0usize..4, 2..40), raters in 2usize..6) {
        prop_assume!(choices.iter().collect::<BTreeSet<_>>().len() >= 2);
        let table: Vec<Vec<usize>> = choices
            .iter()
            .map(|&c| (0..4).map(|k| if k == c { raters } else { 0 }).collect())
            .collect();
        prop_assert_eq!(fleiss_kappa(&table, raters).unwrap(), 1.0);
    }

    #[test]
    fn archive_roundtrip_is_bit_exact(
        rows in 1usize..12,
        values in prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL, 48),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let m = Array2::from_shape_fn((rows, 4), |(i, j)| values[(i * 4 + j) % values.len()]);
        let mut archive = EmbeddingArchive::open_or_create(dir.path(), "enc", 4).unwrap();
        archive.write("doc", &m).unwrap();
        let back = EmbeddingArchive::open(dir.path()).unwrap().read("doc").unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        prop_assert!(back.iter().zip(&m).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn delta_is_percent_drop(reference in 0.01f64..1.0, transferred in 0.0f64..1.0) {
        let d = domain_transfer_delta(reference, transferred).unwrap();
        prop_assert!((transferred - reference * (1.0 - d / 100.0)).abs() < 1e-12);
    }
}

fn toy_examples(docs: usize, dim: usize, seed: u64) -> Vec<TrainExample> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|d| {
            let n = rng.random_range(1..8);
            let x = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0f32..1.0));
            let labels = (0..n).map(|_| rng.random_range(0..MainLabel::COUNT)).collect();
            TrainExample::new(format!("t{seed}-{d}"), DocInput::new(x), labels)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_cover_every_sentence(seed in 0u64..1000, n in 1usize..20) {
        let mut config = SequenceModelConfig::bilstm_crf(5);
        config.seed = seed;
        let model = SequenceModel::new(config).unwrap();
        let x = Array2::from_shape_fn((n, 5), |(i, j)| ((i * 7 + j * 3 + seed as usize) % 11) as f32 / 5.0 - 1.0);
        let labels = model.predict(&DocInput::new(x.clone())).unwrap();
        prop_assert_eq!(labels.len(), n);
        prop_assert!(labels.iter().all(|&l| l < MainLabel::COUNT));
        prop_assert_eq!(model.predict(&DocInput::new(x)).unwrap(), labels);
    }

    #[test]
    fn weighted_union_realises_the_objective(alpha in 0.0f64..2.0, seed in 0u64..1000, unlabeled in 0usize..5) {
        let labeled = toy_examples(4, 3, seed);
        let pseudo = toy_examples(unlabeled, 3, seed + 1);
        let model = SequenceModel::new(SequenceModelConfig::bilstm_crf(3)).unwrap();
        let objective = self_training_objective(&model, &labeled, &pseudo, alpha).unwrap();
        let union = mean_loss(&model, &weighted_union(&labeled, &pseudo, alpha)).unwrap();
        prop_assert!((objective - union).abs() <= 1e-9 * objective.abs().max(1.0));
        let supervised = mean_loss(&model, &labeled).unwrap();
        let degenerate = self_training_objective(&model, &labeled, &pseudo, 0.0).unwrap();
        prop_assert_eq!(degenerate, supervised);
        let empty = self_training_objective(&model, &labeled, &[], alpha).unwrap();
        prop_assert_eq!(empty, supervised);
    }

    #[test]
    fn gold_extraction_matches_perfect_predictions(docs in corpus(), wanted in prop::collection::btree_set(main_label(), 1..4)) {
        let wanted: Vec<MainLabel> = wanted.into_iter().collect();
        let outcomes: BTreeMap<String, u8> = docs.iter().enumerate().map(|(i, d)| (d.doc_id.clone(), (i % 2) as u8)).collect();
        let perfect: BTreeMap<String, Vec<MainLabel>> =
            docs.iter().map(|d| (d.doc_id.clone(), d.main_labels().unwrap())).collect();
        let gold = extract_rr_for_judgment(&docs, RrSource::Gold, &wanted, &outcomes).unwrap();
        let predicted = extract_rr_for_judgment(&docs, RrSource::Predicted(&perfect), &wanted, &outcomes).unwrap();
        prop_assert_eq!(gold.inputs.len() + gold.excluded.len(), docs.len());
        prop_assert_eq!(&gold.excluded, &predicted.excluded);
        for (g, p) in gold.inputs.iter().zip(&predicted.inputs) {
            prop_assert_eq!(&g.doc_id, &p.doc_id);
            prop_assert_eq!(&g.text, &p.text);
            prop_assert_eq!(g.outcome, p.outcome);
        }
    }
}

/// Scores a test set by a fixed per-domain table, so deltas are checkable.
struct TableModel(f64);

impl TransferModel for TableModel {
    fn macro_f1(&self, test: &[DocumentRecord]) -> rrseg::Result<f64> {
        Ok(self.0 * (0.5 + 0.5 / test.len() as f64))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transfer_deltas_recompute_from_their_cells(scale in 0.1f64..1.0, it_docs in 1usize..5, cl_docs in 1usize..5) {
        let split = |prefix: &str, n: usize| DomainSplit {
            train: vec![labelled_doc(format!("{prefix}-train"), &[MainLabel::Fac])],
            val: vec![],
            test: (0..n).map(|i| labelled_doc(format!("{prefix}-{i}"), &[MainLabel::Arg])).collect(),
        };
        let data = TransferData::new(split("it", it_docs), split("cl", cl_docs));
        use TransferDomain::*;
        let cells = [(It, It), (It, Cl), (Cl, Cl), (Cl, It), (ItCl, It), (ItCl, ItCl)];
        let runs = run_transfer(&cells, "bilstm_crf", &data, |s| Ok(TableModel(scale + s.test.len() as f64 * 1e-3))).unwrap();
        for run in &runs {
            let reference = runs.iter().find(|r| r.train_domain == run.train_domain && r.test_domain == run.train_domain);
            match (reference, run.delta_g) {
                (Some(r), Some(d)) => {
                    prop_assert_eq!(run.in_domain_f1, Some(r.f1));
                    prop_assert_eq!(d, domain_transfer_delta(r.f1, run.f1).unwrap());
                }
                (None, None) => {}
                other => prop_assert!(false, "inconsistent delta {:?}", other.1),
            }
        }
    }
}

#[test]
fn random_labels_have_kappa_near_zero() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let table: Vec<Vec<usize>> = (0..10_000)
        .map(|_| {
            let mut row = vec![0; 4];
            for _ in 0..3 {
                row[rng.random_range(0..4)] += 1;
            }
            row
        })
        .collect();
    assert!(fleiss_kappa(&table, 3).unwrap().abs() < 0.05);
}

#[test]
fn checkpoint_reload_keeps_scores() {
    let train = toy_examples(6, 4, 1);
    let mut config = SequenceModelConfig::bilstm_crf(4);
    config.epochs = 2;
    config.batch_size = 3;
    let trained: TrainedModel = rrseg::labelers::train_sequence_labeler(config, &train, &train).unwrap();
    let before = evaluate(&trained.model, &train).unwrap().macro_f1;
    let dir = tempfile::tempdir().unwrap();
    Checkpoint::from_trained(trained, EncoderIds { rr: "enc".into(), shift: None }).save(dir.path()).unwrap();
    let reloaded = Checkpoint::load(dir.path()).unwrap();
    assert_eq!(evaluate(&reloaded.model, &train).unwrap().macro_f1, before);
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let train = toy_examples(5, 3, 2);
    let mut config = SequenceModelConfig::bilstm_crf(3);
    config.epochs = 1;
    config.batch_size = 2;
    let a = rrseg::labelers::train_sequence_labeler(config.clone(), &train, &train).unwrap();
    let b = rrseg::labelers::train_sequence_labeler(config, &train, &train).unwrap();
    assert_eq!(a.log[0], b.log[0]);
    assert_eq!(a.model, b.model);
}
