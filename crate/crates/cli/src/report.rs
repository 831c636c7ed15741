//! Class-accuracy tables and the derived statistics written to `metrics.json`.

use crate::error::{CliError, CliResult};
use serde::Serialize;
use std::path::Path;
use trixlab::metrics::{
    disparity, nonrobust_drop, present, rho_fairness, worst_avg, Disparity,
    FairnessScore, WorstAvg,
};

pub const PER_CLASS_HEADER: [&str; 3] = ["class", "clean_acc", "robust_acc"];
pub const SUMMARY_HEADER: [&str; 5] = ["name", "clean_avg", "clean_worst", "robust_avg", "robust_worst"];

#[derive(Clone, Debug, PartialEq)]
pub struct ClassTable {
    pub classes: Vec<String>,
    pub clean: Vec<Option<f64>>,
    pub robust: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub clean: WorstAvg,
    pub robust: WorstAvg,
}

pub enum Table {
    PerClass(ClassTable),
    Summary(Vec<SummaryRow>),
}

fn parse_cell(raw: &str, path: &Path, line: usize) -> CliResult<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>()
        .map(Some)
        .map_err(|_| CliError::Input(format!("{}:{line}: {raw:?} is not a number", path.display())))
}

/// Reads a per-class or summary CSV, telling them apart by header. A
/// directory is read as a run directory's `report.csv`.
pub fn read_table(path: &Path) -> CliResult<Table> {
    let file = if path.is_dir() { path.join("report.csv") } else { path.to_path_buf() };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&file)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", file.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows: Vec<csv::StringRecord> = reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
    if header == PER_CLASS_HEADER {
        let mut t = ClassTable { classes: vec![], clean: vec![], robust: vec![] };
        for (i, r) in rows.iter().enumerate() {
            t.classes.push(r[0].to_string());
            t.clean.push(parse_cell(&r[1], &file, i + 2)?);
            t.robust.push(parse_cell(&r[2], &file, i + 2)?);
        }
        if t.classes.is_empty() {
            return Err(CliError::Input(format!("{} has no class rows", file.display())));
        }
        Ok(Table::PerClass(t))
    } else if header == SUMMARY_HEADER {
        let mut out = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let num = |k: usize| -> CliResult<f64> {
                parse_cell(&r[k], &file, i + 2)?
                    .ok_or_else(|| CliError::Input(format!("{}:{}: empty cell", file.display(), i + 2)))
            };
            out.push(SummaryRow {
                name: r[0].to_string(),
                clean: WorstAvg { avg: num(1)?, worst: num(2)? },
                robust: WorstAvg { avg: num(3)?, worst: num(4)? },
            });
        }
        Ok(Table::Summary(out))
    } else {
        Err(CliError::Input(format!(
            "{}: unrecognized header {header:?}; expected {PER_CLASS_HEADER:?} or {SUMMARY_HEADER:?}",
            file.display()
        )))
    }
}

#[derive(Debug, Serialize)]
pub struct SideStats {
    pub per_class: Vec<Option<f64>>,
    pub worst: f64,
    pub avg: f64,
    pub disparity: Option<Disparity>,
}

fn side(per_class: &[Option<f64>]) -> CliResult<SideStats> {
    let p = present(per_class);
    let WorstAvg { worst, avg } = worst_avg(&p)?;
    Ok(SideStats { per_class: per_class.to_vec(), worst, avg, disparity: disparity(&p).ok() })
}

/// `None` where the baseline's worst or average accuracy is zero.
#[derive(Debug, Serialize)]
pub struct RhoPair {
    pub clean: Option<FairnessScore>,
    pub robust: Option<FairnessScore>,
}

#[derive(Debug, Serialize)]
pub struct ClassReport {
    pub classes: Vec<String>,
    pub clean: SideStats,
    pub robust: SideStats,
    pub attack_success_rate: Vec<Option<f64>>,
    pub nonrobust_drop: Vec<Option<f64>>,
    pub rho: Option<RhoPair>,
}

pub fn class_report(table: &ClassTable, baseline: Option<&ClassTable>) -> CliResult<ClassReport> {
    let clean = side(&table.clean)?;
    let robust = side(&table.robust)?;
    let rho = match baseline {
        Some(b) => {
            if b.clean.len() != table.clean.len() {
                return Err(CliError::Input(format!(
                    "baseline has {} classes but input has {}",
                    b.clean.len(),
                    table.clean.len()
                )));
            }
            let (bc, br) = (side(&b.clean)?, side(&b.robust)?);
            Some(RhoPair {
                clean: rho_fairness(WorstAvg { worst: bc.worst, avg: bc.avg }, WorstAvg { worst: clean.worst, avg: clean.avg })
                    .ok(),
                robust: rho_fairness(WorstAvg { worst: br.worst, avg: br.avg }, WorstAvg { worst: robust.worst, avg: robust.avg })
                    .ok(),
            })
        }
        None => None,
    };
    Ok(ClassReport {
        classes: table.classes.clone(),
        attack_success_rate: table.robust.iter().map(|r| r.map(|r| 1.0 - r)).collect(),
        nonrobust_drop: nonrobust_drop(&table.clean, &table.robust)?,
        clean,
        robust,
        rho,
    })
}

#[derive(Debug, Serialize)]
pub struct SummaryEntry {
    pub name: String,
    pub clean: WorstAvg,
    pub robust: WorstAvg,
    pub rho_clean: FairnessScore,
    pub rho_robust: FairnessScore,
}

#[derive(Debug, Serialize)]
pub struct SummaryReport {
    pub baseline: String,
    pub rows: Vec<SummaryEntry>,
}

pub fn summary_report(rows: &[SummaryRow], baseline: &str) -> CliResult<SummaryReport> {
    let base = rows
        .iter()
        .find(|r| r.name == baseline)
        .ok_or_else(|| CliError::Input(format!("baseline row {baseline:?} not found")))?;
    let rows = rows
        .iter()
        .map(|r| {
            Ok(SummaryEntry {
                name: r.name.clone(),
                clean: r.clean,
                robust: r.robust,
                rho_clean: rho_fairness(base.clean, r.clean)?,
                rho_robust: rho_fairness(base.robust, r.robust)?,
            })
        })
        .collect::<CliResult<_>>()?;
    Ok(SummaryReport { baseline: baseline.to_string(), rows })
}
