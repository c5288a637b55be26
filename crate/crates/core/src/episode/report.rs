use std::fmt::Write;

use super::eval::{RunMetrics, ScenarioRow};

/// `method,N,K,mean_acc,ci95`, one row per run.
pub fn results_csv(runs: &[RunMetrics]) -> String {
    let mut out = String::from("method,N,K,mean_acc,ci95\n");
    for r in runs {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{:.3}",
            r.method, r.protocol.n_way, r.protocol.k_shot, r.mean_accuracy, r.ci95
        );
    }
    out
}

/// Confusion matrices of every run, stacked:
/// `method,N,K,true_label,pred_0,...`.
pub fn confusion_csv(runs: &[RunMetrics]) -> String {
    let width = runs.iter().map(|r| r.protocol.n_way).max().unwrap_or(0);
    let mut out = String::from("method,N,K,true_label");
    for c in 0..width {
        let _ = write!(out, ",pred_{c}");
    }
    out.push('\n');
    for r in runs {
        for (l, row) in r.confusion.iter().enumerate() {
            let _ = write!(out, "{},{},{},{l}", r.method, r.protocol.n_way, r.protocol.k_shot);
            for c in 0..width {
                let _ = write!(out, ",{}", row.get(c).map(u64::to_string).unwrap_or_default());
            }
            out.push('\n');
        }
    }
    out
}

/// `scenario,method,N,K,mean_acc,ci95`.
pub fn scenario_csv(rows: &[ScenarioRow]) -> String {
    let mut out = String::from("scenario,method,N,K,mean_acc,ci95\n");
    for row in rows {
        let r = &row.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3},{:.3}",
            row.label, r.method, r.protocol.n_way, r.protocol.k_shot, r.mean_accuracy, r.ci95
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::Protocol;

    fn run() -> RunMetrics {
        RunMetrics {
            method: "dn4".into(),
            split: "test".into(),
            protocol: Protocol::new(2, 5, 4),
            episodes: 1,
            episode_accuracy: vec![75.0],
            mean_accuracy: 75.0,
            ci95: 0.0,
            confusion: vec![vec![2, 0], vec![1, 1]],
            loss_curve: vec![],
        }
    }

    #[test]
    fn tables_have_expected_rows() {
        assert_eq!(results_csv(&[run()]), "method,N,K,mean_acc,ci95\ndn4,2,5,75.000,0.000\n");
        assert_eq!(
            confusion_csv(&[run()]),
            "method,N,K,true_label,pred_0,pred_1\ndn4,2,5,0,2,0\ndn4,2,5,1,1,1\n"
        );
    }
}
