use std::io::{self, Write};

pub const METRICS_HEADER: &str = "round,site,split,auc,loss,kept_frac,skipped_batches";

/// One line of the metrics file. `site == None` is the across-site mean.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub site: Option<u32>,
    pub split: &'static str,
    pub auc: f64,
    pub loss: f64,
    pub kept_frac: f64,
    pub skipped_batches: usize,
}

// Shortest round-trip decimal, so the file is exact and byte-stable.
fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        let site = r.site.map_or_else(|| "mean".to_string(), |s| s.to_string());
        writeln!(out, "{},{site},{},{},{},{},{}", r.round, r.split, num(r.auc), num(r.loss), num(r.kept_frac), r.skipped_batches)?;
    }
    Ok(())
}

/// End-of-run report: the round picked by mean validation AUC and its test
/// scores.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub selected_round: usize,
    pub mean_val_auc: f64,
    pub mean_test_auc: f64,
    pub site_test_auc: Vec<(u32, f64)>,
    pub unseen_auc: Vec<(u32, f64)>,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "selected_round = {}\nmean_val_auc = {}\nmean_test_auc = {}\n",
            self.selected_round,
            num(self.mean_val_auc),
            num(self.mean_test_auc)
        );
        for (id, auc) in &self.site_test_auc {
            s.push_str(&format!("test_auc.site{id} = {}\n", num(*auc)));
        }
        for (id, auc) in &self.unseen_auc {
            s.push_str(&format!("unseen_auc.site{id} = {}\n", num(*auc)));
        }
        s
    }
}
