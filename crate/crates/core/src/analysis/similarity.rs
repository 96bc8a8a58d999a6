use std::collections::HashMap;

use super::stats::pearson;
use crate::corpus::PageToken;
use crate::embedding::{cosine, EmbeddingMatrix};
use crate::error::{Error, Result};

/// Pairwise page cosines. Symmetric by construction with an exact unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub ids: Vec<PageToken>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    /// Strict upper triangle, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.ids.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.values[i][j])
            .collect()
    }
}

/// Cosine matrix over `ids`, resolving vectors through `tokens` (row order of `embeddings`).
pub fn page_similarity_matrix(
    ids: &[PageToken],
    tokens: &[PageToken],
    embeddings: &EmbeddingMatrix,
) -> Result<SimilarityMatrix> {
    let index: HashMap<&PageToken, usize> = tokens.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let rows = ids
        .iter()
        .map(|id| {
            let row = *index.get(id).ok_or_else(|| Error::UnknownPage(id.to_string()))?;
            let v = embeddings.vector(row);
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::Numeric(format!("page {id} has a zero vector")));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = ids.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        values[i][i] = 1.0;
        for j in i + 1..n {
            let c = cosine(rows[i], rows[j])?;
            values[i][j] = c;
            values[j][i] = c;
        }
    }
    Ok(SimilarityMatrix {
        ids: ids.to_vec(),
        values,
    })
}

/// Pearson correlation between the off-diagonal entries of two matrices over the same pages.
pub fn embedding_agreement(m1: &SimilarityMatrix, m2: &SimilarityMatrix) -> Result<f64> {
    if m1.ids != m2.ids {
        return Err(Error::format("similarity matrices", "page ids differ"));
    }
    pearson(&m1.upper_triangle(), &m2.upper_triangle())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tokens(n: usize) -> Vec<PageToken> {
        (0..n).map(|i| PageToken::new(format!("p{i}")).unwrap()).collect()
    }

    #[test]
    fn identical_and_orthogonal_pairs() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let t = tokens(3);
        let s = page_similarity_matrix(&t, &t, &m).unwrap();
        assert_eq!(s.values[0][1], 1.0);
        assert_eq!(s.values[0][2], 0.0);
        assert_eq!(s.values[2][2], 1.0);
        let subset = page_similarity_matrix(&[t[2].clone(), t[0].clone()], &t, &m).unwrap();
        assert_eq!(subset.values[0][1], 0.0);
    }

    #[test]
    fn unknown_and_zero_pages_are_errors() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let t = tokens(2);
        assert!(page_similarity_matrix(&[PageToken::new("zz").unwrap()], &t, &m).is_err());
        assert!(page_similarity_matrix(&t, &t, &m).is_err());
    }

    #[test]
    fn agreement_extremes() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0], vec![-1.0, 0.2]]).unwrap();
        let t = tokens(4);
        let s = page_similarity_matrix(&t, &t, &m).unwrap();
        assert!((embedding_agreement(&s, &s).unwrap() - 1.0).abs() < 1e-12);
        let mut neg = s.clone();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    neg.values[i][j] = -neg.values[i][j];
                }
            }
        }
        assert!((embedding_agreement(&s, &neg).unwrap() + 1.0).abs() < 1e-12);
        let mut other = s.clone();
        other.ids.reverse();
        assert!(embedding_agreement(&s, &other).is_err());
        let flat = SimilarityMatrix { ids: t.clone(), values: vec![vec![0.5; 4]; 4] };
        assert!(matches!(embedding_agreement(&s, &flat), Err(Error::UndefinedCorrelation(_))));
    }

    proptest! {
        #[test]
        fn matrix_is_symmetric_with_unit_diagonal(
            rows in prop::collection::vec(prop::collection::vec(-5.0f32..5.0, 3), 2..12),
        ) {
            prop_assume!(rows.iter().all(|r| r.iter().any(|x| x.abs() > 1e-3)));
            let m = EmbeddingMatrix::from_rows(&rows).unwrap();
            let t = tokens(rows.len());
            let s = page_similarity_matrix(&t, &t, &m).unwrap();
            for i in 0..rows.len() {
                prop_assert_eq!(s.values[i][i], 1.0);
                for j in 0..rows.len() {
                    prop_assert_eq!(s.values[i][j], s.values[j][i]);
                    prop_assert!((-1.0..=1.0).contains(&s.values[i][j]));
                }
            }
            prop_assert_eq!(page_similarity_matrix(&t, &t, &m).unwrap(), s);
        }
    }
}
