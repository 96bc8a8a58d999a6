use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::Rng;
use session_intent::analysis::{embedding_agreement, page_similarity_matrix, topic_count_histogram, transition_matrix};
use session_intent::corpus::{PageToken, Session, SessionCorpus};
use session_intent::embedding::EmbeddingMatrix;
use session_intent::rng::rng;

fn token(i: usize) -> PageToken {
    PageToken::new(format!("p{i}")).unwrap()
}

fn corpus_strategy() -> impl Strategy<Value = SessionCorpus> {
    prop::collection::vec(prop::collection::vec(0usize..12, 1..10), 0..40).prop_map(|sessions| {
        let sessions = sessions
            .into_iter()
            .enumerate()
            .map(|(i, p)| Session::new("u", i as u64, p.into_iter().map(token).collect()).unwrap())
            .collect();
        SessionCorpus::new(sessions, "proptest")
    })
}

proptest! {
    // pages 10 and 11 stay unlabeled
    #[test]
    fn transition_counts_match_naive_recount(corpus in corpus_strategy(), labels in prop::collection::vec(0usize..4, 10)) {
        let map: BTreeMap<PageToken, usize> = labels.iter().enumerate().map(|(i, &l)| (token(i), l)).collect();
        let t = transition_matrix(&corpus, &map, 4);

        let mut naive = [[0u64; 4]; 4];
        for s in &corpus.sessions {
            let seq: Vec<usize> = s.pages.iter().filter_map(|p| map.get(p).copied()).collect();
            for w in seq.windows(2) {
                naive[w[0]][w[1]] += 1;
            }
        }
        for i in 0..4 {
            prop_assert_eq!(&t.counts[i][..], &naive[i][..]);
        }
    }

    #[test]
    fn histogram_total_counts_labeled_sessions(corpus in corpus_strategy(), labels in prop::collection::vec(0usize..4, 10)) {
        let map: BTreeMap<PageToken, usize> = labels.iter().enumerate().map(|(i, &l)| (token(i), l)).collect();
        let h = topic_count_histogram(&corpus, &map);
        let labeled: Vec<BTreeSet<usize>> = corpus
            .sessions
            .iter()
            .map(|s| s.pages.iter().filter_map(|p| map.get(p).copied()).collect::<BTreeSet<_>>())
            .filter(|set| !set.is_empty())
            .collect();
        prop_assert_eq!(h.total, labeled.len());
        prop_assert_eq!(h.counts.values().sum::<usize>(), h.total);
        for set in &labeled {
            prop_assert!(h.counts.contains_key(&set.len()));
        }
        prop_assert!(h.counts.keys().all(|&k| k >= 1));
    }
}

#[test]
fn independent_embeddings_barely_agree() {
    let ids: Vec<PageToken> = (0..50).map(token).collect();
    let mut r = rng(99);
    let mut random_matrix = || {
        let rows: Vec<Vec<f32>> = (0..50).map(|_| (0..16).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        EmbeddingMatrix::from_rows(&rows).unwrap()
    };
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m1 = page_similarity_matrix(&ids, &ids, &random_matrix()).unwrap();
        let m2 = page_similarity_matrix(&ids, &ids, &random_matrix()).unwrap();
        worst = worst.max(embedding_agreement(&m1, &m2).unwrap().abs());
    }
    assert!(worst < 0.2, "largest |correlation| {worst}");
}
