//! CSV rendering for every exported table. All floats go through
//! [`fmt_f64`] (9 significant digits) so reruns are byte-identical.

use crate::eval::{AttentionReport, FeatureRow, MemoryReport, SourceMatrix};
use crate::generalize::GenStats;
use crate::mixer::AttentionRecord;
use crate::util::fmt_f64;

/// `target,accuracy` rows, one per LODO split, then an `Avg.` row.
pub fn target_accuracy_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from("target,accuracy\n");
    for (name, acc) in rows {
        out.push_str(&format!("{name},{}\n", fmt_f64(*acc)));
    }
    let avg = rows.iter().map(|(_, a)| *a).sum::<f64>() / rows.len().max(1) as f64;
    out.push_str(&format!("Avg.,{}\n", fmt_f64(avg)));
    out
}

/// Table-style source matrix: rows are per-target models, columns the
/// evaluated domains, `-` on the diagonal, `Avg.` row and column.
pub fn source_matrix_csv(m: &SourceMatrix) -> String {
    let mut out = String::from("source");
    for name in &m.domain_names {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",Avg.\n");
    for (i, row) in m.cells.iter().enumerate() {
        out.push_str(&m.domain_names[i]);
        for cell in row {
            out.push(',');
            match cell {
                Some(v) => out.push_str(&fmt_f64(*v)),
                None => out.push('-'),
            }
        }
        out.push(',');
        out.push_str(&fmt_f64(m.row_avg(i)));
        out.push('\n');
    }
    out.push_str("Avg.");
    for j in 0..m.domain_names.len() {
        out.push(',');
        out.push_str(&fmt_f64(m.col_avg(j)));
    }
    let all: Vec<f64> = m.cells.iter().flatten().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / all.len().max(1) as f64;
    out.push(',');
    out.push_str(&fmt_f64(grand));
    out.push('\n');
    out
}

/// `step,loss,lr` with one row per optimizer step.
pub fn curve_csv(stats: &GenStats) -> String {
    let mut out = String::from("step,loss,lr\n");
    for (i, (loss, lr)) in stats.losses.iter().zip(&stats.lrs).enumerate() {
        out.push_str(&format!("{i},{},{}\n", fmt_f64(*loss), fmt_f64(*lr)));
    }
    out
}

/// Raw attention records: sample_id, domain, target_domain, per-expert
/// weights, per-expert raw scores, correct flag.
pub fn attention_records_csv(records_by_target: &[(String, Vec<AttentionRecord>)]) -> String {
    let n_experts = records_by_target
        .iter()
        .flat_map(|(_, r)| r.iter())
        .map(|r| r.weights.len())
        .next()
        .unwrap_or(0);
    let mut out = String::from("sample_id,domain,target_domain");
    for i in 1..=n_experts {
        out.push_str(&format!(",expert_{i}"));
    }
    for i in 1..=n_experts {
        out.push_str(&format!(",raw_{i}"));
    }
    out.push_str(",correct\n");
    for (target, records) in records_by_target {
        for rec in records {
            out.push_str(&format!("{},{},{target}", rec.sample_id, rec.domain_name));
            for w in &rec.weights {
                out.push(',');
                out.push_str(&fmt_f64(*w));
            }
            for r in &rec.raw_scores {
                out.push(',');
                out.push_str(&fmt_f64(*r));
            }
            let correct = match rec.is_correct() {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            out.push(',');
            out.push_str(correct);
            out.push('\n');
        }
    }
    out
}

/// Distribution summaries per (target, evaluated domain, expert), with the
/// normalization interpretation in a leading comment line.
pub fn attention_report_csv(report: &AttentionReport) -> String {
    let mut out = format!("# normalization: {}\n", report.normalization);
    out.push_str("target_domain,eval_domain,n_samples,expert,mean,sd,q25,q50,q75,p_value,degenerate\n");
    for cell in &report.cells {
        for (i, s) in cell.per_expert.iter().enumerate() {
            let p = cell
                .p_value
                .map(fmt_f64)
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                cell.target_domain,
                cell.eval_domain,
                cell.n_samples,
                i + 1,
                fmt_f64(s.mean),
                fmt_f64(s.sd),
                fmt_f64(s.q25),
                fmt_f64(s.q50),
                fmt_f64(s.q75),
                p,
                if cell.degenerate { "1" } else { "0" },
            ));
        }
    }
    out
}

/// Square grid of p-values: rows = target domain, columns = evaluated
/// domain; empty cells where no p-value exists.
pub fn pvalue_grid_csv(domains: &[String], grid: &[Vec<Option<f64>>]) -> String {
    let mut out = String::from("target\\eval");
    for d in domains {
        out.push(',');
        out.push_str(d);
    }
    out.push('\n');
    for (i, row) in grid.iter().enumerate() {
        out.push_str(&domains[i]);
        for cell in row {
            out.push(',');
            if let Some(p) = cell {
                out.push_str(&fmt_f64(*p));
            }
        }
        out.push('\n');
    }
    out
}

/// Quantity/value pairs covering both exact totals and the symbolic forms.
pub fn memory_report_csv(r: &MemoryReport) -> String {
    let mut out = String::from("quantity,value\n");
    out.push_str(&format!("S_N,{}\n", r.s_n));
    out.push_str(&format!("S_p,{}\n", r.s_p));
    out.push_str(&format!("S_E,{}\n", r.s_e));
    out.push_str(&format!("N_experts,{}\n", r.n_experts));
    out.push_str(&format!("M_presets,{}\n", r.m_presets));
    out.push_str(&format!("a2xp_total,{}\n", r.a2xp_total));
    out.push_str(&format!("dart_total,{}\n", r.dart_total));
    out.push_str(&format!("a2xp_marginal_per_unit,{}\n", r.a2xp_marginal_per_unit));
    out.push_str(&format!("dart_marginal_per_unit,{}\n", r.dart_marginal_per_unit));
    out.push_str(&format!("a2xp_total_form,{}\n", r.a2xp_total_form));
    out.push_str(&format!("a2xp_marginal_form,{}\n", r.a2xp_marginal_form));
    out.push_str(&format!("dart_form,{}\n", r.dart_form));
    out.push_str(&format!("total_ratio,{}\n", fmt_f64(r.total_ratio)));
    out.push_str(&format!("marginal_ratio,{}\n", fmt_f64(r.marginal_ratio)));
    out
}

/// Per-sample feature vectors with metadata; `target_domain` identifies
/// the LODO model that produced the features.
pub fn features_csv(rows: &[(String, Vec<FeatureRow>)]) -> String {
    let dim = rows
        .iter()
        .flat_map(|(_, r)| r.iter())
        .map(|r| r.features.len())
        .next()
        .unwrap_or(0);
    let mut out = String::from("sample_id,target_domain,domain,label");
    for i in 0..dim {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for (target, feats) in rows {
        for row in feats {
            out.push_str(&format!(
                "{},{target},{},{}",
                row.sample_id, row.domain, row.label
            ));
            for f in &row.features {
                out.push(',');
                out.push_str(&fmt_f64(*f));
            }
            out.push('\n');
        }
    }
    out
}

/// Ablation results: one row per grid variant with per-domain accuracy and
/// the average.
pub fn ablation_csv(domains: &[String], rows: &[(String, String, Vec<f64>)]) -> String {
    let mut out = String::from("grid,variant");
    for d in domains {
        out.push(',');
        out.push_str(d);
    }
    out.push_str(",avg\n");
    for (grid, variant, accs) in rows {
        out.push_str(&format!("{grid},{variant}"));
        for a in accs {
            out.push(',');
            out.push_str(&fmt_f64(*a));
        }
        let avg = accs.iter().sum::<f64>() / accs.len().max(1) as f64;
        out.push(',');
        out.push_str(&fmt_f64(avg));
        out.push('\n');
    }
    out
}
