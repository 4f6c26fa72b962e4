//! CSV reports over run records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::matrix::RunRecord;
use super::stats::{gap_percent, wilcoxon_paired};
use super::HarnessError;
use crate::genetic::Mode;
use crate::instance::InstanceAttributes;

pub const CONVERGENCE_BUCKETS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: String,
    pub records: usize,
    pub errors: usize,
    /// Records with a reference cost; the denominator of `opt_count`.
    pub with_reference: usize,
    pub opt_count: usize,
    pub mean_gap: Option<f64>,
    pub mean_solve_seconds: f64,
    pub mean_inference_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub variant: String,
    pub bucket: usize,
    /// End of the bucket as a fraction of each record's budget.
    pub fraction: f64,
    pub records: usize,
    pub mean_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupedGapRow {
    pub variant: String,
    pub instance: String,
    pub seed: u64,
    pub gamma: usize,
    pub depot: Option<String>,
    pub customers: Option<String>,
    pub demand: Option<String>,
    pub route_size: Option<f64>,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub variant_a: String,
    pub variant_b: String,
    pub pairs: usize,
    pub mean_gap_a: Option<f64>,
    pub mean_gap_b: Option<f64>,
    pub abs_diff: Option<f64>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub exact: Option<bool>,
    pub note: String,
}

fn variants_in_order(records: &[RunRecord]) -> Vec<Mode> {
    let mut out: Vec<Mode> = Vec::new();
    for r in records {
        if !out.contains(&r.variant) {
            out.push(r.variant);
        }
    }
    out
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, k) = xs.into_iter().fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    (k > 0).then(|| s / k as f64)
}

pub fn summary_rows(records: &[RunRecord]) -> Vec<SummaryRow> {
    variants_in_order(records)
        .into_iter()
        .map(|v| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.variant == v).collect();
            SummaryRow {
                variant: v.to_string(),
                records: rs.len(),
                errors: rs.iter().filter(|r| r.error.is_some()).count(),
                with_reference: rs.iter().filter(|r| r.reference.is_some()).count(),
                opt_count: rs.iter().filter(|r| r.hit_bks).count(),
                mean_gap: mean(rs.iter().filter_map(|r| r.gap)),
                mean_solve_seconds: mean(rs.iter().map(|r| r.solve_seconds)).unwrap_or(0.0),
                mean_inference_seconds: mean(rs.iter().map(|r| r.inference_seconds)).unwrap_or(0.0),
            }
        })
        .collect()
}

/// Best cost in `trace` reached by time `t`.
fn best_by(trace: &[(f64, f64)], t: f64) -> Option<f64> {
    trace.iter().take_while(|p| p.0 <= t).map(|p| p.1).reduce(f64::min)
}

pub fn convergence_rows(records: &[RunRecord]) -> Vec<ConvergenceRow> {
    let mut out = Vec::new();
    for v in variants_in_order(records) {
        let rs: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.variant == v && r.reference.is_some())
            .collect();
        for b in 1..=CONVERGENCE_BUCKETS {
            let fraction = b as f64 / CONVERGENCE_BUCKETS as f64;
            let gaps: Vec<f64> = rs
                .iter()
                .filter_map(|r| {
                    let z = best_by(&r.trace, fraction * r.budget)?;
                    gap_percent(z, r.reference?).ok()
                })
                .collect();
            out.push(ConvergenceRow {
                variant: v.to_string(),
                bucket: b,
                fraction,
                records: gaps.len(),
                mean_gap: mean(gaps),
            });
        }
    }
    out
}

pub fn grouped_gap_rows(records: &[RunRecord]) -> Vec<GroupedGapRow> {
    records
        .iter()
        .filter_map(|r| {
            let gap = r.gap?;
            let a = InstanceAttributes::from_name(&r.instance);
            Some(GroupedGapRow {
                variant: r.variant.to_string(),
                instance: r.instance.clone(),
                seed: r.seed,
                gamma: r.gamma,
                depot: a.as_ref().map(|a| a.depot.to_string()),
                customers: a.as_ref().map(|a| a.customers.to_string()),
                demand: a.as_ref().map(|a| a.demand.to_string()),
                route_size: a.as_ref().map(|a| a.route_size),
                gap,
            })
        })
        .collect()
}

/// Paired gaps of two variants, matched on (instance, seed, Γ).
pub fn paired_gaps(records: &[RunRecord], a: Mode, b: Mode) -> (Vec<f64>, Vec<f64>) {
    let key = |r: &RunRecord| (r.instance.clone(), r.seed, r.gamma);
    let rb: BTreeMap<_, f64> = records
        .iter()
        .filter(|r| r.variant == b)
        .filter_map(|r| Some((key(r), r.gap?)))
        .collect();
    records
        .iter()
        .filter(|r| r.variant == a)
        .filter_map(|r| Some((r.gap?, *rb.get(&key(r))?)))
        .unzip()
}

pub fn compare_variants(records: &[RunRecord], a: Mode, b: Mode) -> ComparisonRow {
    let (ga, gb) = paired_gaps(records, a, b);
    let (ma, mb) = (mean(ga.iter().copied()), mean(gb.iter().copied()));
    let mut row = ComparisonRow {
        variant_a: a.to_string(),
        variant_b: b.to_string(),
        pairs: ga.len(),
        mean_gap_a: ma,
        mean_gap_b: mb,
        abs_diff: ma.zip(mb).map(|(x, y)| (x - y).abs()),
        statistic: None,
        p_value: None,
        exact: None,
        note: String::new(),
    };
    match wilcoxon_paired(&ga, &gb) {
        Ok(w) => {
            row.statistic = Some(w.statistic);
            row.p_value = Some(w.p_value);
            row.exact = Some(w.exact);
        }
        Err(e) => row.note = e.to_string(),
    }
    row
}

pub fn comparison_rows(records: &[RunRecord]) -> Vec<ComparisonRow> {
    let vs = variants_in_order(records);
    let mut out = Vec::new();
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            out.push(compare_variants(records, vs[i], vs[j]));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
struct FlatRecord<'a> {
    instance: &'a str,
    n: usize,
    variant: String,
    seed: u64,
    gamma: usize,
    budget: f64,
    cost: Option<f64>,
    reference: Option<f64>,
    gap: Option<f64>,
    hit_bks: bool,
    solve_seconds: f64,
    inference_seconds: f64,
    time_to_best: Option<f64>,
    iterations: u64,
    error: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub convergence: PathBuf,
    pub grouped_gaps: PathBuf,
    pub comparisons: PathBuf,
    pub records_csv: PathBuf,
    pub records_json: PathBuf,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        w.write_record(header)
            .map_err(|e| HarnessError::Report(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Report(e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Writes summary, convergence, grouped-gap, comparison and record files into `dir`.
pub fn emit_reports(records: &[RunRecord], dir: &Path) -> Result<ReportFiles, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Report("no records to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let files = ReportFiles {
        summary: dir.join("summary.csv"),
        convergence: dir.join("convergence.csv"),
        grouped_gaps: dir.join("grouped_gaps.csv"),
        comparisons: dir.join("comparisons.csv"),
        records_csv: dir.join("records.csv"),
        records_json: dir.join("records.json"),
    };
    write_csv(&files.summary, &summary_rows(records), &[])?;
    write_csv(&files.convergence, &convergence_rows(records), &[])?;
    write_csv(
        &files.grouped_gaps,
        &grouped_gap_rows(records),
        &[
            "variant",
            "instance",
            "seed",
            "gamma",
            "depot",
            "customers",
            "demand",
            "route_size",
            "gap",
        ],
    )?;
    write_csv(
        &files.comparisons,
        &comparison_rows(records),
        &[
            "variant_a",
            "variant_b",
            "pairs",
            "mean_gap_a",
            "mean_gap_b",
            "abs_diff",
            "statistic",
            "p_value",
            "exact",
            "note",
        ],
    )?;
    let flat: Vec<FlatRecord> = records
        .iter()
        .map(|r| FlatRecord {
            instance: &r.instance,
            n: r.n,
            variant: r.variant.to_string(),
            seed: r.seed,
            gamma: r.gamma,
            budget: r.budget,
            cost: r.cost,
            reference: r.reference,
            gap: r.gap,
            hit_bks: r.hit_bks,
            solve_seconds: r.solve_seconds,
            inference_seconds: r.inference_seconds,
            time_to_best: r.time_to_best,
            iterations: r.iterations,
            error: r.error.as_deref(),
        })
        .collect();
    write_csv(&files.records_csv, &flat, &[])?;
    let json = serde_json::to_string_pretty(records).map_err(|e| HarnessError::Report(e.to_string()))?;
    std::fs::write(&files.records_json, json).map_err(|e| HarnessError::io(&files.records_json, e))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(variant: &str, instance: &str, seed: u64, cost: f64, reference: f64) -> RunRecord {
        RunRecord {
            instance: instance.to_string(),
            n: 10,
            variant: variant.parse().unwrap(),
            seed,
            gamma: 15,
            budget: 10.0,
            cost: Some(cost),
            reference: Some(reference),
            gap: Some(gap_percent(cost, reference).unwrap()),
            hit_bks: cost == reference,
            solve_seconds: 10.0,
            wall_seconds: 0.0,
            inference_seconds: 0.0,
            time_to_best: Some(4.0),
            iterations: 5,
            trace: vec![(1.0, cost + 10.0), (4.0, cost)],
            routes: vec![],
            error: None,
        }
    }

    #[test]
    fn all_hits_give_full_opt_count() {
        let rs: Vec<RunRecord> = (0..4).map(|k| rec("D-O", &format!("i{k}"), 1, 100.0, 100.0)).collect();
        let s = summary_rows(&rs);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].opt_count, 4);
        assert_eq!(s[0].with_reference, 4);
        assert_eq!(s[0].mean_gap, Some(0.0));
    }

    #[test]
    fn identical_variants_identical_rows() {
        let mut rs: Vec<RunRecord> = (0..3)
            .map(|k| rec("D-O", &format!("i{k}"), 1, 100.0 + k as f64, 100.0))
            .collect();
        rs.extend((0..3).map(|k| rec("D-D", &format!("i{k}"), 1, 100.0 + k as f64, 100.0)));
        let s = summary_rows(&rs);
        let strip = |r: &SummaryRow| SummaryRow {
            variant: String::new(),
            ..r.clone()
        };
        assert_eq!(strip(&s[0]), strip(&s[1]));
        let c = comparison_rows(&rs);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].pairs, 3);
        assert_eq!(c[0].abs_diff, Some(0.0));
        assert!(!c[0].note.is_empty());
    }

    #[test]
    fn convergence_shape_and_carry_forward() {
        let mut rs = vec![rec("D-O", "a", 1, 100.0, 100.0)];
        rs.push(rec("D-D", "a", 1, 100.0, 100.0));
        let c = convergence_rows(&rs);
        assert_eq!(c.len(), 2 * CONVERGENCE_BUCKETS);
        // bucket ends at 0.05 * 10 s = 0.5 s: nothing yet
        assert_eq!(c[9].records, 0);
        assert_eq!(c[19].mean_gap, Some(10.0));
        assert_eq!(c[79].mean_gap, Some(0.0));
        assert_eq!(c[199].mean_gap, Some(0.0));
    }

    #[test]
    fn grouped_rows_use_name_attributes() {
        let r = rec("D-O", "XMLS-n100-random-clustered-small-r6-s3", 1, 101.0, 100.0);
        let g = grouped_gap_rows(&[r]);
        assert_eq!(g[0].customers.as_deref(), Some("clustered"));
        assert_eq!(g[0].route_size, Some(6.0));
        let r = rec("D-O", "E-n22-k4", 1, 101.0, 100.0);
        assert_eq!(grouped_gap_rows(&[r])[0].depot, None);
    }

    #[test]
    fn files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let rs: Vec<RunRecord> = (0..7)
            .map(|k| rec("D-O", &format!("i{k}"), 1, 100.0 + k as f64, 100.0))
            .collect();
        let f = emit_reports(&rs, dir.path()).unwrap();
        let summary = std::fs::read_to_string(&f.summary).unwrap();
        assert!(summary.starts_with("variant,records,errors,with_reference,opt_count,mean_gap"));
        assert!(!summary.contains('\r'));
        let conv = std::fs::read_to_string(&f.convergence).unwrap();
        assert_eq!(conv.lines().count(), 1 + CONVERGENCE_BUCKETS);
        let cmp = std::fs::read_to_string(&f.comparisons).unwrap();
        assert_eq!(cmp.lines().count(), 1);
        assert!(emit_reports(&[], dir.path()).is_err());
    }
}
