use std::io::Write;

/// The five terms of the joint log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    /// `-(λu/2) Σ‖u_i‖²`
    pub user_prior: f64,
    /// `-(λw/2) Σ (‖W_l‖² + ‖b_l‖²)`
    pub weight_prior: f64,
    /// `-(λv/2) Σ‖v_j − f_e(x_j)‖²`
    pub item_offset: f64,
    /// `-(λn/2) Σ‖f_r(x_j) − x_c,j‖²`
    pub reconstruction: f64,
    /// `-Σ (C_ij/2)(R_ij − u_iᵀv_j)²`
    pub rating: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.user_prior + self.weight_prior + self.item_offset + self.reconstruction + self.rating
    }

    pub(crate) fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("user_prior", self.user_prior),
            ("weight_prior", self.weight_prior),
            ("item_offset", self.item_offset),
            ("reconstruction", self.reconstruction),
            ("rating", self.rating),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    /// 0 is the initial state.
    pub sweep: usize,
    pub terms: ObjectiveTerms,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub records: Vec<SweepRecord>,
    pub lr_halvings: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub const TSV_HEADER: &'static str =
        "sweep\ttotal\tuser_prior\tweight_prior\titem_offset\treconstruction\trating\tseconds";

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.terms.total()).collect()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.terms.total())
    }

    /// One TSV line per record, without header.
    pub fn tsv_row(r: &SweepRecord) -> String {
        let t = &r.terms;
        format!(
            "{}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:.6}",
            r.sweep,
            t.total(),
            t.user_prior,
            t.weight_prior,
            t.item_offset,
            t.reconstruction,
            t.rating,
            r.seconds
        )
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::TSV_HEADER)?;
        for r in &self.records {
            writeln!(out, "{}", Self::tsv_row(r))?;
        }
        Ok(())
    }
}
