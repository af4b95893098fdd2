//! Change markers and CSV / Markdown rendering of metrics rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::rates::{check_row, MetricsRow};
use super::MetricsError;
use crate::corpus::{Scenario, Stratum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Inc,
    Dec,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magnitude {
    Small,
    Large,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeMarker {
    pub direction: Direction,
    /// |base − obf| / base, as a fraction.
    pub ratio: BigRational,
    pub marker: Magnitude,
}

impl ChangeMarker {
    /// One of `sinc`, `sdec`, `inc`, `dec`, `eq`.
    pub fn code(&self) -> &'static str {
        match (self.direction, self.marker) {
            (Direction::Eq, _) | (_, Magnitude::Eq) => "eq",
            (Direction::Inc, Magnitude::Small) => "sinc",
            (Direction::Dec, Magnitude::Small) => "sdec",
            (Direction::Inc, Magnitude::Large) => "inc",
            (Direction::Dec, Magnitude::Large) => "dec",
        }
    }
}

fn large_threshold() -> BigRational {
    BigRational::new(3.into(), 10.into())
}

pub fn decrease_ratio(base: &BigRational, obf: &BigRational) -> Result<ChangeMarker, MetricsError> {
    if base.is_zero() {
        if obf.is_zero() {
            return Ok(ChangeMarker { direction: Direction::Eq, ratio: BigRational::zero(), marker: Magnitude::Eq });
        }
        return Err(MetricsError::UndefinedBase { obf: fmt1(obf) });
    }
    let ratio = ((base - obf) / base).abs();
    let direction = if obf > base {
        Direction::Inc
    } else if obf < base {
        Direction::Dec
    } else {
        Direction::Eq
    };
    let marker = if ratio.is_zero() {
        Magnitude::Eq
    } else if ratio > large_threshold() {
        Magnitude::Large
    } else {
        Magnitude::Small
    };
    Ok(ChangeMarker { direction, ratio, marker })
}

/// Round half up to one decimal place.
pub fn round1(x: &BigRational) -> BigRational {
    let ten = BigRational::from_integer(10.into());
    let half = BigRational::new(1.into(), 2.into());
    ((x * &ten) + half).floor() / ten
}

pub fn fmt1(x: &BigRational) -> String {
    let tenths: BigInt = (round1(x) * BigRational::from_integer(10.into())).to_integer();
    let sign = if tenths.is_negative() { "-" } else { "" };
    let t = tenths.abs();
    let ten = BigInt::from(10);
    format!("{sign}{}.{}", &t / &ten, &t % &ten)
}

/// Parse a plain decimal such as `7.87` exactly.
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let num: BigInt = format!("{int}{frac}").parse().ok()?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    let v = BigRational::new(num, den);
    Some(if neg { -v } else { v })
}

/// The row an obfuscated stratum is compared against.
pub fn base_stratum(stratum: Stratum) -> Option<Stratum> {
    match stratum {
        Stratum::Original | Stratum::OriginalRestricted => None,
        Stratum::Symbol => Some(Stratum::Original),
        _ => Some(Stratum::OriginalRestricted),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    Marker(ChangeMarker),
    /// Base rate was zero while the obfuscated rate was not.
    Undefined,
}

impl Change {
    fn of(base: &BigRational, obf: &BigRational) -> Change {
        // Ratios are taken on the displayed values.
        match decrease_ratio(&round1(base), &round1(obf)) {
            Ok(m) => Change::Marker(m),
            Err(_) => Change::Undefined,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Change::Marker(m) => m.code(),
            Change::Undefined => "inc",
        }
    }

    fn markdown(&self) -> String {
        match self {
            Change::Marker(m) => {
                let pct = fmt1(&(&m.ratio * BigRational::from_integer(100.into())));
                let cell = match m.direction {
                    Direction::Eq => "=".to_string(),
                    Direction::Inc => format!("↑{pct}%"),
                    Direction::Dec => format!("↓{pct}%"),
                };
                if m.marker == Magnitude::Large {
                    format!("**{cell}**")
                } else {
                    cell
                }
            }
            Change::Undefined => "↑(undefined)".into(),
        }
    }
}

type RowKey<'a> = (&'a str, &'a str, Scenario, Stratum);

fn index(rows: &[MetricsRow]) -> BTreeMap<RowKey<'_>, &MetricsRow> {
    rows.iter().map(|r| ((r.project.as_str(), r.model.as_str(), r.scenario, r.stratum), r)).collect()
}

/// CPR and TPR changes of `row` against its base row, when one exists.
pub fn changes(row: &MetricsRow, rows: &[MetricsRow]) -> Option<(Change, Change)> {
    let base = base_stratum(row.stratum)?;
    let idx = index(rows);
    let b = idx.get(&(row.project.as_str(), row.model.as_str(), row.scenario, base))?;
    Some((Change::of(&b.cpr, &row.cpr), Change::of(&b.tpr, &row.tpr)))
}

/// Mean CPR/TPR over models, per project (`per_project`) or over all rows.
/// The model column of the result reads `Average`; the project column reads
/// `all` for the overall mean.
pub fn average_rows(rows: &[MetricsRow], per_project: bool) -> Result<Vec<MetricsRow>, MetricsError> {
    struct Acc {
        cpr: BigRational,
        tpr: BigRational,
        n: u64,
        cases: BTreeMap<String, u64>,
    }
    let mut acc: BTreeMap<(String, Scenario, Stratum), Acc> = BTreeMap::new();
    for r in rows {
        let project = if per_project { r.project.clone() } else { "all".into() };
        let a = acc.entry((project, r.scenario, r.stratum)).or_insert_with(|| Acc {
            cpr: BigRational::zero(),
            tpr: BigRational::zero(),
            n: 0,
            cases: BTreeMap::new(),
        });
        a.cpr += &r.cpr;
        a.tpr += &r.tpr;
        a.n += 1;
        let c = a.cases.entry(r.project.clone()).or_default();
        *c = (*c).max(r.cases);
    }
    acc.into_iter()
        .map(|((project, scenario, stratum), a)| {
            let n = BigRational::from_integer(a.n.into());
            let row = MetricsRow {
                project,
                model: "Average".into(),
                scenario,
                stratum,
                cpr: a.cpr / &n,
                tpr: a.tpr / &n,
                cases: a.cases.values().sum(),
            };
            check_row(&row)?;
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

pub const CSV_HEADER: &str = "project,model,scenario,stratum,cpr,tpr,cases,marker";

/// Render rows. The CSV marker column carries the TPR change against the
/// row's base stratum; Markdown shows both changes.
pub fn emit_report(rows: &[MetricsRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = format!("{CSV_HEADER}\n");
            for r in rows {
                let marker = changes(r, rows).map(|(_, t)| t.code()).unwrap_or("");
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.project,
                    r.model,
                    r.scenario,
                    r.stratum,
                    fmt1(&r.cpr),
                    fmt1(&r.tpr),
                    r.cases,
                    marker
                );
            }
            out
        }
        ReportFormat::Markdown => markdown(rows),
    }
}

fn column_order(scenario: Scenario) -> [Stratum; 5] {
    match scenario {
        Scenario::Generation => [Stratum::Original, Stratum::Symbol, Stratum::OriginalRestricted, Stratum::Structure, Stratum::SymbolStructure],
        Scenario::Completion => [Stratum::Original, Stratum::Symbol, Stratum::OriginalRestricted, Stratum::Semantic, Stratum::SymbolSemantic],
    }
}

fn column_title(stratum: Stratum, scenario: Scenario) -> String {
    match stratum {
        Stratum::OriginalRestricted => match scenario {
            Scenario::Generation => "Original (Structure)".into(),
            Scenario::Completion => "Original (Semantic)".into(),
        },
        Stratum::Original => "Original".into(),
        Stratum::Symbol => "Symbol".into(),
        Stratum::Structure => "Structure".into(),
        Stratum::Semantic => "Semantic".into(),
        Stratum::SymbolStructure => "Symbol+Structure".into(),
        Stratum::SymbolSemantic => "Symbol+Semantic".into(),
    }
}

fn markdown(rows: &[MetricsRow]) -> String {
    let idx = index(rows);
    let mut out = String::new();
    for scenario in [Scenario::Generation, Scenario::Completion] {
        let mut lines: Vec<(&str, &str)> = Vec::new();
        for r in rows.iter().filter(|r| r.scenario == scenario) {
            if !lines.contains(&(r.project.as_str(), r.model.as_str())) {
                lines.push((r.project.as_str(), r.model.as_str()));
            }
        }
        if lines.is_empty() {
            continue;
        }
        let cols = column_order(scenario);
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "### {scenario}\n");
        out += "| Software | Model |";
        for c in cols {
            let t = column_title(c, scenario);
            let _ = write!(out, " {t} CPR | {t} TPR |");
        }
        out += "\n|---|---|";
        out += &"---|---|".repeat(cols.len());
        out.push('\n');
        for (project, model) in lines {
            let shown_model = if model == "Average" { "**Average**" } else { model };
            let _ = write!(out, "| {project} | {shown_model} |");
            for c in cols {
                match idx.get(&(project, model, scenario, c)) {
                    Some(r) => {
                        let (cc, tc) = match changes(r, rows) {
                            Some((a, b)) => (format!(" {}", a.markdown()), format!(" {}", b.markdown())),
                            None => (String::new(), String::new()),
                        };
                        let _ = write!(out, " {}{cc} | {}{tc} |", fmt1(&r.cpr), fmt1(&r.tpr));
                    }
                    None => out += " - | - |",
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Read rows back from the CSV layout written by [`emit_report`]. Rate
/// columns are parsed as exact decimals; the marker column is ignored.
pub fn parse_rows_csv(text: &str) -> Result<Vec<MetricsRow>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| MetricsError::Input { line, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |j: usize| rec.get(j).ok_or_else(|| bad(format!("missing column {}", j + 1)));
        let rate = |j: usize| -> Result<BigRational, MetricsError> {
            let s = field(j)?;
            parse_decimal(s).ok_or_else(|| bad(format!("invalid rate `{s}`")))
        };
        let row = MetricsRow {
            project: field(0)?.to_string(),
            model: field(1)?.to_string(),
            scenario: field(2)?.parse().map_err(bad)?,
            stratum: field(3)?.parse().map_err(bad)?,
            cpr: rate(4)?,
            tpr: rate(5)?,
            cases: field(6)?.trim().parse().map_err(|_| bad("invalid case count".into()))?,
        };
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> BigRational {
        parse_decimal(s).unwrap()
    }

    #[test]
    fn markers() {
        let m = decrease_ratio(&d("21.1"), &d("15.8")).unwrap();
        assert_eq!((m.direction, m.marker, fmt1(&(m.ratio.clone() * d("100")))), (Direction::Dec, Magnitude::Small, "25.1".into()));
        assert_eq!(m.code(), "sdec");
        let m = decrease_ratio(&d("18.4"), &d("6.9")).unwrap();
        assert_eq!((m.code(), fmt1(&(m.ratio * d("100")))), ("dec", "62.5".into()));
        let m = decrease_ratio(&d("10"), &d("10")).unwrap();
        assert_eq!((m.code(), m.ratio), ("eq", BigRational::zero()));
        assert!(matches!(decrease_ratio(&d("0"), &d("9.1")), Err(MetricsError::UndefinedBase { .. })));
        assert_eq!(decrease_ratio(&d("0"), &d("0")).unwrap().code(), "eq");
        // Exactly 30% stays small.
        assert_eq!(decrease_ratio(&d("10"), &d("7")).unwrap().code(), "sdec");
        assert_eq!(decrease_ratio(&d("10"), &d("13.5")).unwrap().code(), "inc");
    }

    #[test]
    fn rounding() {
        assert_eq!(fmt1(&d("28.575")), "28.6");
        assert_eq!(fmt1(&d("19.9835")), "20.0");
        assert_eq!(fmt1(&d("0")), "0.0");
        assert_eq!(fmt1(&d("6.855")), "6.9");
        assert_eq!(parse_decimal("7.87"), Some(BigRational::new(787.into(), 100.into())));
        assert_eq!(parse_decimal("30"), Some(BigRational::from_integer(30.into())));
        assert_eq!(parse_decimal("x"), None);
        assert_eq!(parse_decimal("."), None);
    }

    fn row(stratum: Stratum, cpr: &str, tpr: &str) -> MetricsRow {
        MetricsRow { project: "p".into(), model: "m".into(), scenario: Scenario::Generation, stratum, cpr: d(cpr), tpr: d(tpr), cases: 3 }
    }

    #[test]
    fn csv_layout() {
        let one = emit_report(&[row(Stratum::Original, "50", "25")], ReportFormat::Csv);
        assert_eq!(one, format!("{CSV_HEADER}\np,m,generation,original,50.0,25.0,3,\n"));
        let rows = vec![row(Stratum::Original, "36.9", "21.1"), row(Stratum::Symbol, "27.5", "15.8")];
        let csv = emit_report(&rows, ReportFormat::Csv);
        assert!(csv.ends_with("p,m,generation,symbol,27.5,15.8,3,sdec\n"));
        assert_eq!(parse_rows_csv(&csv).unwrap(), rows);
    }

    #[test]
    fn markdown_arrows() {
        let rows = vec![
            row(Stratum::Original, "36.9", "21.1"),
            row(Stratum::Symbol, "27.5", "15.8"),
            row(Stratum::OriginalRestricted, "36.3", "18.4"),
            row(Stratum::SymbolStructure, "20.4", "6.9"),
        ];
        let md = emit_report(&rows, ReportFormat::Markdown);
        assert!(md.contains("| 27.5 ↓25.5% | 15.8 ↓25.1% |"), "{md}");
        assert!(md.contains("| 20.4 **↓43.8%** | 6.9 **↓62.5%** |"), "{md}");
        assert!(md.contains("Original (Structure) CPR"));
    }

    #[test]
    fn averages() {
        let mut a = row(Stratum::Original, "10", "5");
        let mut b = row(Stratum::Original, "20", "10");
        b.model = "n".into();
        a.cases = 4;
        let avg = average_rows(&[a, b], true).unwrap();
        assert_eq!(avg.len(), 1);
        assert_eq!((avg[0].cpr.clone(), avg[0].tpr.clone(), avg[0].cases), (d("15"), d("7.5"), 4));
    }

    proptest! {
        #[test]
        fn ratio_zero_on_equal(b in 1u32..100_000) {
            let b = BigRational::new(b.into(), 100.into());
            prop_assert!(decrease_ratio(&b, &b).unwrap().ratio.is_zero());
        }

        #[test]
        fn ratio_scale_invariant(b in 1u32..10_000, o in 0u32..10_000, alpha in 1u32..1000) {
            let b = BigRational::from_integer(b.into());
            let o = BigRational::from_integer(o.into());
            let a = BigRational::new(alpha.into(), 7.into());
            let r1 = decrease_ratio(&b, &o).unwrap();
            let r2 = decrease_ratio(&(&b * &a), &(&o * &a)).unwrap();
            prop_assert_eq!(r1, r2);
        }
    }
}
