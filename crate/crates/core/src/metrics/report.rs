//! Cross-fold summaries and the text/CSV renderings of reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eval::EvalReport;
use crate::topics::{Topic, NUM_TOPICS};

/// Mean with sample (n - 1) standard deviation; `std` is `None` below two values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n >= 2).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Some(MeanStd { mean, std, n })
    }

    /// `0.913 ± 0.008`
    pub fn display(&self) -> String {
        match self.std {
            Some(s) => format!("{:.3} ± {:.3}", self.mean, s),
            None => format!("{:.3}", self.mean),
        }
    }
}

fn opt_display(m: Option<MeanStd>) -> String {
    m.map(|m| m.display()).unwrap_or_else(|| "-".into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub topic: Topic,
    pub f1: MeanStd,
    pub aupr: Option<MeanStd>,
    pub support: MeanStd,
    /// Folds where the label had no positives, so AUPR was left out.
    pub aupr_absent_folds: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedSummary {
    pub micro_f1: MeanStd,
    pub macro_f1: MeanStd,
    pub weighted_f1: MeanStd,
    pub macro_aupr: Option<MeanStd>,
    pub weighted_aupr: Option<MeanStd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<EvalReport>,
    pub per_label: Vec<LabelSummary>,
    pub averaged: AveragedSummary,
    pub flags: Vec<String>,
}

impl CvReport {
    /// Folds must be in fold order; the result does not depend on how they
    /// were computed.
    pub fn summarize(k: usize, seed: u64, folds: Vec<EvalReport>) -> CvReport {
        let col = |f: &dyn Fn(&EvalReport) -> f64| -> MeanStd {
            MeanStd::of(&folds.iter().map(f).collect::<Vec<_>>()).expect("at least one fold")
        };
        let opt_col = |f: &dyn Fn(&EvalReport) -> Option<f64>| -> Option<MeanStd> {
            MeanStd::of(&folds.iter().filter_map(f).collect::<Vec<_>>())
        };
        let mut flags = Vec::new();
        let per_label = Topic::ALL
            .iter()
            .map(|&t| {
                let absent: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.label(t).aupr.is_none())
                    .map(|(i, r)| r.fold_id.unwrap_or(i))
                    .collect();
                if !absent.is_empty() {
                    flags.push(format!(
                        "{t}: no positives in fold(s) {absent:?}; AUPR excluded there"
                    ));
                }
                LabelSummary {
                    topic: t,
                    f1: col(&|r| r.label(t).f1),
                    aupr: opt_col(&|r| r.label(t).aupr),
                    support: col(&|r| r.label(t).support as f64),
                    aupr_absent_folds: absent,
                }
            })
            .collect();
        let averaged = AveragedSummary {
            micro_f1: col(&|r| r.averaged.micro_f1),
            macro_f1: col(&|r| r.averaged.macro_f1),
            weighted_f1: col(&|r| r.averaged.weighted_f1),
            macro_aupr: opt_col(&|r| r.averaged.macro_aupr),
            weighted_aupr: opt_col(&|r| r.averaged.weighted_aupr),
        };
        CvReport {
            k,
            seed,
            folds,
            per_label,
            averaged,
            flags,
        }
    }

    /// Human-readable table: one row per topic, then Micro/Macro/Weighted.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<[String; 3]> = self
            .per_label
            .iter()
            .map(|l| [l.topic.to_string(), l.f1.display(), opt_display(l.aupr)])
            .collect();
        let a = &self.averaged;
        rows.push(["Micro".into(), a.micro_f1.display(), "-".into()]);
        rows.push(["Macro".into(), a.macro_f1.display(), opt_display(a.macro_aupr)]);
        rows.push(["Weighted".into(), a.weighted_f1.display(), opt_display(a.weighted_aupr)]);
        let mut out = render_rows(&rows);
        let _ = writeln!(
            out,
            "\n{}-fold cross-validation, seed {}; ± is the sample standard deviation (n-1) across folds",
            self.k, self.seed
        );
        for f in &self.flags {
            let _ = writeln!(out, "note: {f}");
        }
        out
    }

    /// `row,f1_mean,f1_std,aupr_mean,aupr_std,aupr_folds`; std columns are
    /// sample standard deviations.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,f1_mean,f1_std,aupr_mean,aupr_std,aupr_folds\n");
        let line = |out: &mut String, name: &str, f1: &MeanStd, ap: Option<&MeanStd>| {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(name),
                num(f1.mean),
                opt_num(f1.std),
                ap.map(|m| num(m.mean)).unwrap_or_default(),
                ap.and_then(|m| m.std).map(num).unwrap_or_default(),
                ap.map(|m| m.n).unwrap_or(0),
            );
        };
        for l in &self.per_label {
            line(&mut out, l.topic.name(), &l.f1, l.aupr.as_ref());
        }
        let a = &self.averaged;
        line(&mut out, "Micro", &a.micro_f1, None);
        line(&mut out, "Macro", &a.macro_f1, a.macro_aupr.as_ref());
        line(&mut out, "Weighted", &a.weighted_f1, a.weighted_aupr.as_ref());
        out
    }
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let f = |v: f64| format!("{v:.3}");
        let o = |v: Option<f64>| v.map(f).unwrap_or_else(|| "-".into());
        let mut rows: Vec<[String; 3]> = self
            .per_label
            .iter()
            .map(|l| [l.topic.to_string(), f(l.f1), o(l.aupr)])
            .collect();
        let a = &self.averaged;
        rows.push(["Micro".into(), f(a.micro_f1), "-".into()]);
        rows.push(["Macro".into(), f(a.macro_f1), o(a.macro_aupr)]);
        rows.push(["Weighted".into(), f(a.weighted_f1), o(a.weighted_aupr)]);
        render_rows(&rows)
    }

    /// `row,precision,recall,f1,aupr,support`; empty cells mark absent values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,precision,recall,f1,aupr,support\n");
        for l in &self.per_label {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(l.topic.name()),
                num(l.precision),
                num(l.recall),
                num(l.f1),
                opt_num(l.aupr),
                l.support
            );
        }
        let a = &self.averaged;
        let _ = writeln!(out, "Micro,,,{},,", num(a.micro_f1));
        let _ = writeln!(out, "Macro,,,{},{},", num(a.macro_f1), opt_num(a.macro_aupr));
        let _ = writeln!(out, "Weighted,,,{},{},", num(a.weighted_f1), opt_num(a.weighted_aupr));
        out
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_rows(rows: &[[String; 3]]) -> String {
    let header = ["Category".to_string(), "F1".into(), "AUPR".into()];
    let mut w = [0usize; 3];
    for r in rows.iter().chain([&header]) {
        for c in 0..3 {
            w[c] = w[c].max(r[c].chars().count());
        }
    }
    let line = |r: &[String; 3]| {
        let pad = |c: usize| " ".repeat(w[c] - r[c].chars().count());
        format!("{}{}  {}{}  {}", r[0], pad(0), r[1], pad(1), r[2])
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(&header)];
    out.extend(rows.iter().take(NUM_TOPICS).map(line));
    out.push("-".repeat(w[0] + w[1] + w[2] + 4));
    out.extend(rows.iter().skip(NUM_TOPICS).map(line));
    out.join("\n") + "\n"
}
