//! Plot-ready tables built from search logs and evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write;

use compound3d::search::CandidateRecord;

/// Linear interpolation between closest ranks of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Five-number summary plus mean of validation MRR per operator count.
pub fn operator_distribution(records: &[CandidateRecord]) -> String {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(m) = r.mrr {
            groups.entry(r.operators).or_default().push(m);
        }
    }
    let mut out = String::from("operators,count,min,q1,median,q3,max,mean\n");
    for (ops, mut v) in groups {
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let _ = writeln!(
            out,
            "{ops},{},{:.6},{:.6},{:.6},{:.6},{:.6},{mean:.6}",
            v.len(),
            v[0],
            quantile(&v, 0.25),
            quantile(&v, 0.5),
            quantile(&v, 0.75),
            v[v.len() - 1],
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn candidate_table(logs: &[(String, Vec<CandidateRecord>)]) -> String {
    let mut out =
        String::from("log,stage,variant,parent,operators,params,mrr,delta_mrr,delta_param,best_so_far,error\n");
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for (name, records) in logs {
        for r in records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{:.6},{}",
                csv_field(name),
                r.stage,
                r.variant,
                r.parent.as_ref().map(|p| p.to_string()).unwrap_or_default(),
                r.operators,
                r.params,
                opt(r.mrr),
                opt(r.delta_mrr),
                r.delta_param,
                r.best_so_far,
                csv_field(r.error.as_deref().unwrap_or("")),
            );
        }
    }
    out
}

/// The fields of an evaluation report needed for MRR-vs-dimension plots.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub variant: String,
    pub dim: usize,
    pub split: String,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

/// Reads `# key=value` header lines and the overall `key=value` metrics.
pub fn parse_eval_report(text: &str) -> Result<EvalSummary, String> {
    let mut kv = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim_start_matches('#').trim();
        if let Some((k, v)) = line.split_once('=') {
            kv.entry(k.trim().to_owned()).or_insert_with(|| v.trim().to_owned());
        }
    }
    let get = |k: &str| kv.get(k).cloned().ok_or_else(|| format!("missing {k:?}"));
    let num = |k: &str| get(k)?.parse::<f64>().map_err(|e| format!("{k}: {e}"));
    Ok(EvalSummary {
        variant: get("variant")?,
        dim: get("dim")?.parse().map_err(|e| format!("dim: {e}"))?,
        split: get("split")?,
        mrr: num("mrr")?,
        hits1: num("hits@1")?,
        hits3: num("hits@3")?,
        hits10: num("hits@10")?,
    })
}

pub fn dimension_table(rows: &[EvalSummary]) -> String {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| {
        a.variant
            .cmp(&b.variant)
            .then(a.dim.cmp(&b.dim))
            .then(a.split.cmp(&b.split))
    });
    let mut out = String::from("variant,dim,split,mrr,hits1,hits3,hits10\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            r.variant, r.dim, r.split, r.mrr, r.hits1, r.hits3, r.hits10
        );
    }
    out
}
