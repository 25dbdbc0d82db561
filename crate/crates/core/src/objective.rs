use crate::embedding::CostMatrix;
use crate::error::{Error, Result};
use crate::ot::Solver;
use crate::text::{document_distribution, summary_distribution, Distribution, ExtractionVector};

/// Everything needed to score a sentence subset against its document.
#[derive(Debug, Clone)]
pub struct SelectionProblem<'a> {
    dists: &'a [Distribution],
    cost: &'a CostMatrix,
    doc_dist: Vec<f64>,
    eligible: Vec<usize>,
}

impl<'a> SelectionProblem<'a> {
    pub fn new(dists: &'a [Distribution], cost: &'a CostMatrix) -> Result<Self> {
        if dists.iter().any(|d| d.dim() != cost.dim()) {
            return Err(Error::Config(
                "sentence distributions and cost matrix disagree on vocabulary size".into(),
            ));
        }
        let doc_dist = match document_distribution(dists) {
            Ok(d) => d.to_dense(),
            Err(Error::AllSentencesEmpty) => return Err(Error::EmptyDocument),
            Err(e) => return Err(e),
        };
        let eligible = (0..dists.len()).filter(|&i| !dists[i].is_zero()).collect();
        Ok(SelectionProblem {
            dists,
            cost,
            doc_dist,
            eligible,
        })
    }

    pub fn sentence_count(&self) -> usize {
        self.dists.len()
    }

    pub fn dists(&self) -> &[Distribution] {
        self.dists
    }

    pub fn cost(&self) -> &CostMatrix {
        self.cost
    }

    pub fn doc_dist(&self) -> &[f64] {
        &self.doc_dist
    }

    /// Sentences with a non-zero distribution; the only selectable ones.
    pub fn eligible(&self) -> &[usize] {
        &self.eligible
    }

    pub fn summary_dist(&self, selected: &[usize]) -> Result<Vec<f64>> {
        let m = ExtractionVector::from_indices(self.dists.len(), selected);
        summary_distribution(self.dists, &m).map(|d| d.to_dense())
    }

    pub fn coverage(&self, selected: &[usize], solver: &Solver) -> Result<f64> {
        let summary = self.summary_dist(selected)?;
        solver.coverage(&self.doc_dist, &summary, self.cost)
    }
}
