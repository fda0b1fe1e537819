//! Summary tables over a bench CSV.
//!
//! Only rows flagged `ok` enter the statistics; other rows are counted per
//! cell so a degraded cell is visible rather than silently averaged in.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use super::stats::{mean_ci, ratio_bounds, MeanCi};
use super::{BenchError, BenchRecord, ExecMode, FLAG_OK};

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub workload: String,
    pub n: usize,
    pub mode: ExecMode,
    /// Rows flagged `ok`.
    pub ok: usize,
    /// Rows with any other flag.
    pub degraded: usize,
    pub t_total: MeanCi,
    pub e_total: MeanCi,
    pub t_compute: f64,
    pub t_ckpt: f64,
    pub t_up: f64,
    pub t_remote: f64,
    pub t_down: f64,
    pub t_restart: f64,
    pub bytes_up: f64,
    pub bytes_down: f64,
}

impl CellSummary {
    fn from_rows(rows: &[&BenchRecord], degraded: usize) -> Self {
        let first = rows[0];
        let col = |f: fn(&BenchRecord) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
        let mean = |f: fn(&BenchRecord) -> f64| mean_ci(&col(f)).mean;
        Self {
            workload: first.workload.clone(),
            n: first.n,
            mode: first.mode,
            ok: rows.len(),
            degraded,
            t_total: mean_ci(&col(|r| r.t_total_s)),
            e_total: mean_ci(&col(|r| r.e_total_j)),
            t_compute: mean(|r| r.t_compute_s),
            t_ckpt: mean(|r| r.t_ckpt_s),
            t_up: mean(|r| r.t_up_s),
            t_remote: mean(|r| r.t_remote_s),
            t_down: mean(|r| r.t_down_s),
            t_restart: mean(|r| r.t_restart_s),
            bytes_up: mean(|r| r.bytes_up as f64),
            bytes_down: mean(|r| r.bytes_down as f64),
        }
    }
}

/// A value with an optional interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounded {
    pub value: f64,
    pub bounds: Option<(f64, f64)>,
}

/// Per-workload comparison of the three modes. Fields are `None` when a
/// mode needed for them has no `ok` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub workload: String,
    pub n: usize,
    /// local time / pmco time.
    pub speedup: Option<Bounded>,
    /// Energy saved by pmco relative to local, in percent.
    pub savings_pct: Option<f64>,
    /// Extra time of local-pmco over local, in percent.
    pub overhead_pct: Option<f64>,
    /// local energy / pmco energy.
    pub energy_ratio: Option<Bounded>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub cells: Vec<CellSummary>,
    pub comparisons: Vec<Comparison>,
}

impl Report {
    pub fn cell(&self, workload: &str, mode: ExecMode) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.workload == workload && c.mode == mode)
    }

    pub fn comparison(&self, workload: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.workload == workload)
    }

    pub fn from_records(records: &[BenchRecord]) -> Self {
        // keyed by (n, workload) so tables come out in size order
        let mut groups: BTreeMap<(usize, String), BTreeMap<ExecMode, Vec<&BenchRecord>>> =
            BTreeMap::new();
        for r in records {
            groups
                .entry((r.n, r.workload.clone()))
                .or_default()
                .entry(r.mode)
                .or_default()
                .push(r);
        }
        let mut report = Report::default();
        for ((n, workload), modes) in groups {
            let mut by_mode = BTreeMap::new();
            for (mode, rows) in modes {
                let ok: Vec<&BenchRecord> = rows.iter().copied().filter(|r| r.flag == FLAG_OK).collect();
                let degraded = rows.len() - ok.len();
                if ok.is_empty() {
                    report.cells.push(CellSummary {
                        workload: workload.clone(),
                        n,
                        mode,
                        ok: 0,
                        degraded,
                        t_total: mean_ci(&[]),
                        e_total: mean_ci(&[]),
                        t_compute: f64::NAN,
                        t_ckpt: f64::NAN,
                        t_up: f64::NAN,
                        t_remote: f64::NAN,
                        t_down: f64::NAN,
                        t_restart: f64::NAN,
                        bytes_up: f64::NAN,
                        bytes_down: f64::NAN,
                    });
                    continue;
                }
                let cell = CellSummary::from_rows(&ok, degraded);
                by_mode.insert(mode, cell.clone());
                report.cells.push(cell);
            }
            report.comparisons.push(compare(&workload, n, &by_mode));
        }
        report
    }
}

fn ratio(num: &MeanCi, den: &MeanCi) -> Option<Bounded> {
    (den.mean > 0.0).then(|| Bounded {
        value: num.mean / den.mean,
        bounds: ratio_bounds(num, den),
    })
}

fn compare(workload: &str, n: usize, cells: &BTreeMap<ExecMode, CellSummary>) -> Comparison {
    let local = cells.get(&ExecMode::Local);
    let local_pmco = cells.get(&ExecMode::LocalPmco);
    let pmco = cells.get(&ExecMode::Pmco);
    let speedup = local.zip(pmco).and_then(|(l, p)| ratio(&l.t_total, &p.t_total));
    let energy_ratio = local.zip(pmco).and_then(|(l, p)| ratio(&l.e_total, &p.e_total));
    let savings_pct = local.zip(pmco).and_then(|(l, p)| {
        (l.e_total.mean > 0.0).then(|| 100.0 * (l.e_total.mean - p.e_total.mean) / l.e_total.mean)
    });
    let overhead_pct = local.zip(local_pmco).and_then(|(l, lp)| {
        (l.t_total.mean > 0.0).then(|| 100.0 * (lp.t_total.mean - l.t_total.mean) / l.t_total.mean)
    });
    Comparison {
        workload: workload.to_string(),
        n,
        speedup,
        savings_pct,
        overhead_pct,
        energy_ratio,
    }
}

/// Reads a bench CSV (with header) and summarizes it.
pub fn report<R: Read>(input: R) -> Result<Report, BenchError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut records = Vec::new();
    for row in rdr.deserialize() {
        records.push(row?);
    }
    Ok(Report::from_records(&records))
}

struct Opt<T>(Option<T>);

impl fmt::Display for Opt<f64> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) if v.is_finite() => write!(f, "{v:.2}"),
            _ => f.write_str("n/a"),
        }
    }
}

impl fmt::Display for Opt<Bounded> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(Bounded {
                value,
                bounds: Some((lo, hi)),
            }) => write!(f, "{value:.2} [{lo:.2}, {hi:.2}]"),
            Some(Bounded { value, bounds: None }) => write!(f, "{value:.2}"),
            None => f.write_str("n/a"),
        }
    }
}

fn ci(c: &MeanCi) -> String {
    match (c.n, c.half_width) {
        (0, _) => "n/a".into(),
        (_, Some(h)) => format!("{:.3} ± {:.3}", c.mean, h),
        (_, None) => format!("{:.3}", c.mean),
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Time and energy per run (mean ± 95% CI)")?;
        writeln!(
            f,
            "{:<12} {:>5} {:<10} {:>4} {:>4} {:>18} {:>18}",
            "workload", "n", "mode", "ok", "bad", "t_total_s", "e_total_j"
        )?;
        for c in &self.cells {
            writeln!(
                f,
                "{:<12} {:>5} {:<10} {:>4} {:>4} {:>18} {:>18}",
                c.workload,
                c.n,
                c.mode.as_str(),
                c.ok,
                c.degraded,
                ci(&c.t_total),
                ci(&c.e_total)
            )?;
        }
        writeln!(f)?;
        writeln!(f, "Time breakdown (mean seconds)")?;
        writeln!(
            f,
            "{:<12} {:<10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>12} {:>12}",
            "workload", "mode", "compute", "ckpt", "up", "remote", "down", "restart", "bytes_up", "bytes_down"
        )?;
        for c in self.cells.iter().filter(|c| c.ok > 0) {
            writeln!(
                f,
                "{:<12} {:<10} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>12.0} {:>12.0}",
                c.workload,
                c.mode.as_str(),
                c.t_compute,
                c.t_ckpt,
                c.t_up,
                c.t_remote,
                c.t_down,
                c.t_restart,
                c.bytes_up,
                c.bytes_down
            )?;
        }
        writeln!(f)?;
        writeln!(f, "Comparison")?;
        writeln!(
            f,
            "{:<12} {:>5} {:>24} {:>10} {:>10} {:>24}",
            "workload", "n", "speedup", "saving_%", "overhead_%", "energy_ratio"
        )?;
        for c in &self.comparisons {
            writeln!(
                f,
                "{:<12} {:>5} {:>24} {:>10} {:>10} {:>24}",
                c.workload,
                c.n,
                Opt(c.speedup).to_string(),
                Opt(c.savings_pct).to_string(),
                Opt(c.overhead_pct).to_string(),
                Opt(c.energy_ratio).to_string()
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::CSV_HEADER;

    #[test]
    fn empty_csv_gives_empty_tables() {
        let r = report(format!("{CSV_HEADER}\n").as_bytes()).unwrap();
        assert!(r.cells.is_empty() && r.comparisons.is_empty());
        let text = r.to_string();
        assert!(text.contains("Comparison"));
        assert!(report("".as_bytes()).unwrap().cells.is_empty());
    }

    #[test]
    fn missing_mode_shows_na() {
        let csv = format!(
            "{CSV_HEADER}\nm,local,0,3,2,2,0,0,0,0,0,0,0,1.2,0,0,0,0,-1,ab,ok\n"
        );
        let r = report(csv.as_bytes()).unwrap();
        let c = r.comparison("m").unwrap();
        assert_eq!(c.speedup, None);
        assert!(r.to_string().contains("n/a"));
    }
}
