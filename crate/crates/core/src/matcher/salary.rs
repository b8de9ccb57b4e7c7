use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{distance_matrix_threaded, match_nearest, welch_t, MatchAssignment, WelchTest};
use crate::corpus::{Document, Gender, INDUSTRY_NAMES, N_INDUSTRIES};
use crate::embedding::DocMatrix;
use crate::error::{Error, Result};

/// 40 hours a week, 52 weeks a year.
pub const HOURS_PER_YEAR: f64 = 2080.0;

/// Matched hourly salaries of one gender group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single value.
    pub sd: f64,
    pub median: f64,
}

impl GroupStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("empty salary group"));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        Ok(GroupStats { n, mean, sd, median })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub female: GroupStats,
    pub male: GroupStats,
    /// Male mean − female mean, per hour.
    pub gap: f64,
    pub annual_gap: f64,
    pub p_value: f64,
    pub welch: WelchTest,
}

impl GapStats {
    pub fn compute(female: &[f64], male: &[f64], hours_per_year: f64) -> Result<Self> {
        let f = GroupStats::of(female)?;
        let m = GroupStats::of(male)?;
        let welch = welch_t(male, female)?;
        let gap = m.mean - f.mean;
        Ok(GapStats { female: f, male: m, gap, annual_gap: gap * hours_per_year, p_value: welch.p_value, welch })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustrySalary {
    pub industry: usize,
    /// `None` when either group has fewer than two resumes with this label.
    pub stats: Option<GapStats>,
    pub n_female: usize,
    pub n_male: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalaryReport {
    pub overall: GapStats,
    pub per_industry: Vec<IndustrySalary>,
    pub hours_per_year: f64,
    pub n_resumes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SalaryAnalysis {
    pub assignment: MatchAssignment,
    pub report: SalaryReport,
}

/// Builds the report from matched salaries aligned with `resumes`.
pub fn report_from_matches(resumes: &[&Document], salaries: &[f64], hours_per_year: f64) -> Result<SalaryReport> {
    if resumes.len() != salaries.len() {
        return Err(Error::data("resumes and matched salaries are misaligned"));
    }
    let split = |keep: &dyn Fn(&Document) -> bool| {
        let mut f = Vec::new();
        let mut m = Vec::new();
        for (d, &s) in resumes.iter().zip(salaries) {
            if keep(d) {
                match d.gender {
                    Some(Gender::Female) => f.push(s),
                    Some(Gender::Male) => m.push(s),
                    None => {}
                }
            }
        }
        (f, m)
    };
    if let Some(d) = resumes.iter().find(|d| d.gender.is_none()) {
        return Err(Error::data(format!("resume {} has no gender", d.id)));
    }
    let (f, m) = split(&|_| true);
    if f.is_empty() || m.is_empty() {
        return Err(Error::data(format!("empty gender group ({} female, {} male)", f.len(), m.len())));
    }
    let overall = GapStats::compute(&f, &m, hours_per_year)?;
    let per_industry = (0..N_INDUSTRIES)
        .map(|c| {
            let (f, m) = split(&|d| d.industries.contains(&c));
            let stats =
                if f.len() >= 2 && m.len() >= 2 { Some(GapStats::compute(&f, &m, hours_per_year)?) } else { None };
            Ok(IndustrySalary { industry: c, stats, n_female: f.len(), n_male: m.len() })
        })
        .collect::<Result<_>>()?;
    Ok(SalaryReport { overall, per_industry, hours_per_year, n_resumes: resumes.len() })
}

/// Matches every resume row to its nearest salaried vacancy and compares the
/// matched salaries of female and male resumes.
pub fn salary_association(
    resume_vectors: &DocMatrix,
    vacancy_vectors: &DocMatrix,
    resumes: &[Document],
    vacancies: &[Document],
    hours_per_year: f64,
) -> Result<SalaryAnalysis> {
    salary_association_threaded(resume_vectors, vacancy_vectors, resumes, vacancies, hours_per_year, 1)
}

pub fn salary_association_threaded(
    resume_vectors: &DocMatrix,
    vacancy_vectors: &DocMatrix,
    resumes: &[Document],
    vacancies: &[Document],
    hours_per_year: f64,
    threads: usize,
) -> Result<SalaryAnalysis> {
    if !(hours_per_year > 0.0 && hours_per_year.is_finite()) {
        return Err(Error::config(format!("hours_per_year must be positive, got {hours_per_year}")));
    }
    fn by_id(docs: &[Document]) -> HashMap<&str, &Document> {
        docs.iter().map(|d| (d.id.as_str(), d)).collect()
    }
    let (rmap, vmap) = (by_id(resumes), by_id(vacancies));
    let rdocs = resume_vectors
        .ids
        .iter()
        .map(|id| rmap.get(id.as_str()).copied().ok_or_else(|| Error::data(format!("no resume with id {id}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut keep = Vec::new();
    let mut salary = Vec::new();
    for (i, id) in vacancy_vectors.ids.iter().enumerate() {
        let doc = vmap.get(id.as_str()).ok_or_else(|| Error::data(format!("no vacancy with id {id}")))?;
        if let Some(s) = doc.salary_hourly {
            keep.push(i);
            salary.push(s);
        }
    }
    if keep.is_empty() {
        return Err(Error::data("no vacancy carries a salary"));
    }
    let vsel = vacancy_vectors.select(&keep);
    let d = distance_matrix_threaded(resume_vectors.rows.view(), vsel.rows.view(), threads)?;
    let assignment = match_nearest(d.view(), &resume_vectors.ids, &vsel.ids)?;
    let pos: HashMap<&str, usize> = vsel.ids.iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
    let matched: Vec<f64> = assignment.pairs.iter().map(|p| salary[pos[p.vacancy_id.as_str()]]).collect();
    let report = report_from_matches(&rdocs, &matched, hours_per_year)?;
    Ok(SalaryAnalysis { assignment, report })
}

impl SalaryReport {
    /// Element-wise mean over reports of the same resume population (for
    /// example repeated training runs). Industry rows missing in any report
    /// are missing in the result.
    pub fn mean_of(reports: &[SalaryReport]) -> Result<SalaryReport> {
        let first = reports.first().ok_or_else(|| Error::data("no salary reports to average"))?;
        for r in reports {
            check_population(first, r)?;
        }
        let k = reports.len() as f64;
        let group = |gs: &[&GroupStats]| GroupStats {
            n: gs[0].n,
            mean: gs.iter().map(|g| g.mean).sum::<f64>() / k,
            sd: gs.iter().map(|g| g.sd).sum::<f64>() / k,
            median: gs.iter().map(|g| g.median).sum::<f64>() / k,
        };
        let gap = |all: &[&GapStats]| {
            let mean = |f: &dyn Fn(&GapStats) -> f64| all.iter().map(|g| f(g)).sum::<f64>() / k;
            GapStats {
                female: group(&all.iter().map(|g| &g.female).collect::<Vec<_>>()),
                male: group(&all.iter().map(|g| &g.male).collect::<Vec<_>>()),
                gap: mean(&|g| g.gap),
                annual_gap: mean(&|g| g.annual_gap),
                p_value: mean(&|g| g.p_value),
                welch: WelchTest {
                    t: mean(&|g| g.welch.t),
                    df: mean(&|g| g.welch.df),
                    p_value: mean(&|g| g.welch.p_value),
                    degenerate: all.iter().any(|g| g.welch.degenerate),
                },
            }
        };
        let overall = gap(&reports.iter().map(|r| &r.overall).collect::<Vec<_>>());
        let per_industry = (0..first.per_industry.len())
            .map(|c| {
                let rows: Option<Vec<&GapStats>> = reports.iter().map(|r| r.per_industry[c].stats.as_ref()).collect();
                IndustrySalary { stats: rows.map(|r| gap(&r)), ..first.per_industry[c].clone() }
            })
            .collect();
        Ok(SalaryReport { overall, per_industry, hours_per_year: first.hours_per_year, n_resumes: first.n_resumes })
    }
}

fn check_population(a: &SalaryReport, b: &SalaryReport) -> Result<()> {
    let sizes = |r: &SalaryReport| {
        let mut v = vec![r.n_resumes, r.overall.female.n, r.overall.male.n];
        v.extend(r.per_industry.iter().flat_map(|i| [i.n_female, i.n_male]));
        v
    };
    if sizes(a) != sizes(b) || a.hours_per_year != b.hours_per_year {
        return Err(Error::data("salary reports cover different resume populations"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub female: f64,
    pub male: f64,
    /// male − female.
    pub gap: f64,
    /// This variant's gap minus the first variant's gap.
    pub gap_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub cells: Vec<Option<ComparisonCell>>,
    /// The last variant's |gap| is strictly below the first variant's.
    pub gap_reduced: bool,
}

/// Female/male salaries and the gap for each variant, per industry and for
/// the mean, standard deviation and median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantComparison {
    pub variants: Vec<String>,
    pub industries: Vec<ComparisonRow>,
    pub summary: Vec<ComparisonRow>,
    pub annual_gaps: Vec<f64>,
    pub p_values: Vec<f64>,
    pub hours_per_year: f64,
}

fn comparison_row(label: &str, pairs: Vec<Option<(f64, f64)>>) -> ComparisonRow {
    let base = pairs.first().copied().flatten().map(|(f, m)| m - f);
    let cells: Vec<Option<ComparisonCell>> = pairs
        .into_iter()
        .map(|p| {
            p.map(|(female, male)| ComparisonCell {
                female,
                male,
                gap: male - female,
                gap_delta: base.map_or(0.0, |b| (male - female) - b),
            })
        })
        .collect();
    let gap_reduced = match (cells.first(), cells.last()) {
        (Some(Some(a)), Some(Some(z))) if cells.len() > 1 => z.gap.abs() < a.gap.abs(),
        _ => false,
    };
    ComparisonRow { label: label.to_string(), cells, gap_reduced }
}

pub fn report_variants(variants: &[(&str, &SalaryReport)]) -> Result<VariantComparison> {
    let (_, first) = variants.first().ok_or_else(|| Error::data("no variants to compare"))?;
    for (_, r) in variants {
        check_population(first, r)?;
    }
    let industries = (0..first.per_industry.len())
        .map(|c| {
            let pairs = variants
                .iter()
                .map(|(_, r)| r.per_industry[c].stats.as_ref().map(|g| (g.female.mean, g.male.mean)))
                .collect();
            comparison_row(INDUSTRY_NAMES.get(c).copied().unwrap_or("?"), pairs)
        })
        .collect();
    let stat = |f: fn(&GroupStats) -> f64| {
        variants.iter().map(|(_, r)| Some((f(&r.overall.female), f(&r.overall.male)))).collect::<Vec<_>>()
    };
    let summary = vec![
        comparison_row("Mean", stat(|g| g.mean)),
        comparison_row("Std", stat(|g| g.sd)),
        comparison_row("Median", stat(|g| g.median)),
    ];
    Ok(VariantComparison {
        variants: variants.iter().map(|(n, _)| n.to_string()).collect(),
        industries,
        summary,
        annual_gaps: variants.iter().map(|(_, r)| r.overall.annual_gap).collect(),
        p_values: variants.iter().map(|(_, r)| r.overall.p_value).collect(),
        hours_per_year: first.hours_per_year,
    })
}

impl VariantComparison {
    /// Plain-text table: Female, Male and Wage gap for each variant. Rows whose
    /// gap shrank from the first to the last variant carry a `*`.
    pub fn render(&self) -> String {
        let name_w = INDUSTRY_NAMES.iter().map(|n| n.len()).max().unwrap_or(8) + 2;
        let mut out = String::new();
        write!(out, "{:name_w$}", "").unwrap();
        for v in &self.variants {
            write!(out, " | {:^26}", v).unwrap();
        }
        out.push('\n');
        write!(out, "{:name_w$}", "").unwrap();
        for _ in &self.variants {
            write!(out, " | {:>8} {:>8} {:>8}", "Female", "Male", "Wage gap").unwrap();
        }
        out.push('\n');
        let row = |out: &mut String, r: &ComparisonRow| {
            let label = if r.gap_reduced { format!("{}*", r.label) } else { r.label.clone() };
            write!(out, "{label:name_w$}").unwrap();
            for c in &r.cells {
                match c {
                    Some(c) => write!(out, " | {:>8.2} {:>8.2} {:>8.2}", c.female, c.male, c.gap).unwrap(),
                    None => write!(out, " | {:>8} {:>8} {:>8}", "n/a", "n/a", "n/a").unwrap(),
                }
            }
            out.push('\n');
        };
        for r in &self.industries {
            row(&mut out, r);
        }
        for r in &self.summary {
            row(&mut out, r);
        }
        write!(out, "{:name_w$}", "Annual gap").unwrap();
        for g in &self.annual_gaps {
            write!(out, " | {:>26.2}", g).unwrap();
        }
        out.push('\n');
        write!(out, "{:name_w$}", "p-value").unwrap();
        for p in &self.p_values {
            write!(out, " | {:>26.3e}", p).unwrap();
        }
        out.push('\n');
        out
    }
}
