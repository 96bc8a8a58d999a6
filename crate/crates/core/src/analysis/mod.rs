//! Consistency analyses over labeled sessions and page vectors.

mod cluster;
mod decay;
mod report;
mod similarity;
mod stats;

use std::collections::{BTreeMap, HashMap};

use crate::corpus::{PageToken, SessionCorpus};

pub use cluster::{cluster_separation, matched_accuracy, project_2d};
pub use decay::{similarity_decay, DecayCurve, TimedVector};
pub use report::{write_bundle, AnalysisReport, ProjectionRow};
pub use similarity::{embedding_agreement, page_similarity_matrix, SimilarityMatrix};
pub use stats::{pearson, ranks, spearman};

/// Anything that can label a page with an intent id.
pub trait PageLabels {
    fn label_of(&self, page: &PageToken) -> Option<usize>;
}

impl PageLabels for HashMap<PageToken, usize> {
    fn label_of(&self, page: &PageToken) -> Option<usize> {
        self.get(page).copied()
    }
}

impl PageLabels for BTreeMap<PageToken, usize> {
    fn label_of(&self, page: &PageToken) -> Option<usize> {
        self.get(page).copied()
    }
}

/// Session count by number of distinct page labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicHistogram {
    pub counts: BTreeMap<usize, usize>,
    pub total: usize,
    /// Page occurrences without a label; they are ignored.
    pub unlabeled_pages: usize,
}

impl TopicHistogram {
    pub fn fraction(&self, n_topics: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        *self.counts.get(&n_topics).unwrap_or(&0) as f64 / self.total as f64
    }

    /// Fraction of sessions with at most `n_topics` distinct labels.
    pub fn cumulative_fraction(&self, n_topics: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts.range(..=n_topics).map(|(_, c)| c).sum::<usize>() as f64 / self.total as f64
    }
}

pub fn topic_count_histogram(corpus: &SessionCorpus, labels: &impl PageLabels) -> TopicHistogram {
    let mut hist = TopicHistogram::default();
    let mut seen = Vec::new();
    for session in &corpus.sessions {
        seen.clear();
        for page in &session.pages {
            match labels.label_of(page) {
                Some(l) if !seen.contains(&l) => seen.push(l),
                Some(_) => {}
                None => hist.unlabeled_pages += 1,
            }
        }
        if !seen.is_empty() {
            *hist.counts.entry(seen.len()).or_default() += 1;
            hist.total += 1;
        }
    }
    hist
}

/// Consecutive in-session label transitions, self-transitions included.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub k: usize,
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized counts; rows without outgoing transitions are all zero.
    pub probs: Vec<Vec<f64>>,
    /// Rows normalized after removing self-transitions.
    pub probs_excluding_self: Vec<Vec<f64>>,
    pub empty_rows: Vec<usize>,
}

fn normalize_rows(counts: &[Vec<u64>], skip_diagonal: bool) -> Vec<Vec<f64>> {
    counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let kept = |j: usize| !(skip_diagonal && i == j);
            let total: u64 = row.iter().enumerate().filter(|(j, _)| kept(*j)).map(|(_, c)| c).sum();
            row.iter()
                .enumerate()
                .map(|(j, &c)| if total == 0 || !kept(j) { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect()
}

impl TransitionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Share of all transitions that change label.
    pub fn off_diagonal_mass(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let diagonal: u64 = (0..self.k).map(|i| self.counts[i][i]).sum();
        (total - diagonal) as f64 / total as f64
    }
}

/// Counts `label_t → label_{t+1}` over each session's labeled pages. Unlabeled
/// pages and labels `>= k` are skipped.
pub fn transition_matrix(corpus: &SessionCorpus, labels: &impl PageLabels, k: usize) -> TransitionMatrix {
    let mut counts = vec![vec![0u64; k]; k];
    for session in &corpus.sessions {
        let mut prev: Option<usize> = None;
        for label in session.pages.iter().filter_map(|p| labels.label_of(p)).filter(|&l| l < k) {
            if let Some(p) = prev {
                counts[p][label] += 1;
            }
            prev = Some(label);
        }
    }
    let empty_rows = (0..k).filter(|&i| counts[i].iter().all(|&c| c == 0)).collect();
    TransitionMatrix {
        k,
        probs: normalize_rows(&counts, false),
        probs_excluding_self: normalize_rows(&counts, true),
        counts,
        empty_rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Session;
    use proptest::prelude::*;

    fn labels(pairs: &[(&str, usize)]) -> HashMap<PageToken, usize> {
        pairs.iter().map(|(p, l)| (PageToken::new(*p).unwrap(), *l)).collect()
    }

    fn corpus(sessions: &[&[&str]]) -> SessionCorpus {
        SessionCorpus::new(
            sessions
                .iter()
                .map(|s| Session::new("u", 0, s.iter().map(|p| PageToken::new(*p).unwrap()).collect()).unwrap())
                .collect(),
            "t",
        )
    }

    #[test]
    fn histogram_counts_distinct_labels() {
        let l = labels(&[("a1", 0), ("a2", 0), ("b1", 1)]);
        let h = topic_count_histogram(&corpus(&[&["a1"], &["a1", "b1"], &["a1", "a2"]]), &l);
        assert_eq!(h.counts, BTreeMap::from([(1, 2), (2, 1)]));
        assert_eq!(h.total, 3);
        assert!((h.fraction(1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(h.cumulative_fraction(2), 1.0);
    }

    #[test]
    fn histogram_single_label_and_unlabeled() {
        let l = labels(&[("a", 3), ("b", 3)]);
        let h = topic_count_histogram(&corpus(&[&["a", "b"], &["b", "zz"], &["zz"]]), &l);
        assert_eq!(h.counts, BTreeMap::from([(1, 2)]));
        assert_eq!(h.total, 2);
        assert_eq!(h.unlabeled_pages, 2);
    }

    #[test]
    fn transitions_count_consecutive_pairs() {
        let l = labels(&[("a", 0), ("b", 1)]);
        let t = transition_matrix(&corpus(&[&["a", "a", "b"]]), &l, 2);
        assert_eq!(t.counts, vec![vec![1, 1], vec![0, 0]]);
        assert_eq!(t.probs[0], vec![0.5, 0.5]);
        assert_eq!(t.probs_excluding_self[0], vec![0.0, 1.0]);
        assert_eq!(t.empty_rows, vec![1]);
        assert_eq!(t.off_diagonal_mass(), 0.5);
        let single = transition_matrix(&corpus(&[&["a"], &["b"]]), &l, 2);
        assert_eq!(single.total(), 0);
    }

    fn naive_recount(c: &SessionCorpus, l: &HashMap<PageToken, usize>, k: usize) -> Vec<Vec<u64>> {
        let mut m = vec![vec![0u64; k]; k];
        for s in &c.sessions {
            let seq: Vec<usize> = s.pages.iter().filter_map(|p| l.get(p).copied()).collect();
            for i in 1..seq.len() {
                m[seq[i - 1]][seq[i]] += 1;
            }
        }
        m
    }

    proptest! {
        #[test]
        fn transition_rows_are_stochastic(
            sessions in prop::collection::vec(prop::collection::vec(0usize..6, 1..10), 0..30),
        ) {
            let names: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
            let l: HashMap<PageToken, usize> =
                names.iter().enumerate().take(5).map(|(i, n)| (PageToken::new(n.as_str()).unwrap(), i % 4)).collect();
            let c = SessionCorpus::new(
                sessions.iter().map(|s| Session::new("u", 0, s.iter().map(|&i| PageToken::new(names[i].as_str()).unwrap()).collect()).unwrap()).collect(),
                "t",
            );
            let t = transition_matrix(&c, &l, 4);
            prop_assert_eq!(&t.counts, &naive_recount(&c, &l, 4));
            for (i, row) in t.probs.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if t.empty_rows.contains(&i) {
                    prop_assert_eq!(sum, 0.0);
                } else {
                    prop_assert!((sum - 1.0).abs() < 1e-9);
                }
            }
            let h = topic_count_histogram(&c, &l);
            prop_assert_eq!(h.counts.values().sum::<usize>(), h.total);
            let labeled = c.sessions.iter().filter(|s| s.pages.iter().any(|p| l.contains_key(p))).count();
            prop_assert_eq!(h.total, labeled);
        }
    }
}
