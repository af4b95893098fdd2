//! Compiler log parsing and syntax-error classification.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use num_rational::BigRational;
use num_traits::Zero;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Major {
    #[serde(rename = "Function and Type Declaration Errors")]
    FunctionAndTypeDeclaration,
    #[serde(rename = "Data Structure and Member Access Errors")]
    DataStructureAndMemberAccess,
    #[serde(rename = "Type Conversion and Assignment Errors")]
    TypeConversionAndAssignment,
    #[serde(rename = "Scope and Definition Errors")]
    ScopeAndDefinition,
    #[serde(rename = "Other Syntax Errors")]
    OtherSyntax,
}

impl Major {
    pub const ALL: [Major; 5] = [
        Major::FunctionAndTypeDeclaration,
        Major::DataStructureAndMemberAccess,
        Major::TypeConversionAndAssignment,
        Major::ScopeAndDefinition,
        Major::OtherSyntax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Major::FunctionAndTypeDeclaration => "Function and Type Declaration Errors",
            Major::DataStructureAndMemberAccess => "Data Structure and Member Access Errors",
            Major::TypeConversionAndAssignment => "Type Conversion and Assignment Errors",
            Major::ScopeAndDefinition => "Scope and Definition Errors",
            Major::OtherSyntax => "Other Syntax Errors",
        }
    }
}

impl fmt::Display for Major {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Subcategories in table order, with their major category. The last entry
/// is the catch-all.
const SUBCATEGORIES: [(&str, Major); 22] = [
    ("Implicit declaration of function", Major::FunctionAndTypeDeclaration),
    ("Type conflict", Major::FunctionAndTypeDeclaration),
    ("API parameter count mismatch", Major::FunctionAndTypeDeclaration),
    ("Undeclared type", Major::FunctionAndTypeDeclaration),
    ("Non-existent structure member", Major::DataStructureAndMemberAccess),
    ("Misuse of structure pointer", Major::DataStructureAndMemberAccess),
    ("Use → operator to access an integer member", Major::DataStructureAndMemberAccess),
    ("Making a pointer from an integer without a cast", Major::TypeConversionAndAssignment),
    ("Incompatible pointer type", Major::TypeConversionAndAssignment),
    ("Incompatible type assignment", Major::TypeConversionAndAssignment),
    ("Redefinition", Major::TypeConversionAndAssignment),
    ("Conflict between static and non-static declarations", Major::ScopeAndDefinition),
    ("Incorrect access to structure or union member", Major::ScopeAndDefinition),
    ("Lvalue required as the left operand of assignment", Major::OtherSyntax),
    ("Incorrect use of array, pointer, or vector", Major::OtherSyntax),
    ("Assignment to expression with array type", Major::OtherSyntax),
    ("Incorrect use of parentheses", Major::OtherSyntax),
    ("Invalid binary operands", Major::OtherSyntax),
    ("Expected expression error", Major::OtherSyntax),
    ("Array subscript is not an integer", Major::OtherSyntax),
    ("Subscripted value is pointer to function", Major::OtherSyntax),
    ("Others", Major::OtherSyntax),
];

/// A subcategory, identified by its position in the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ErrorCategory(u8);

impl ErrorCategory {
    pub const OTHERS: ErrorCategory = ErrorCategory(21);

    pub fn all() -> impl Iterator<Item = ErrorCategory> {
        (0..SUBCATEGORIES.len() as u8).map(ErrorCategory)
    }

    pub fn named(sub: &str) -> Option<ErrorCategory> {
        SUBCATEGORIES.iter().position(|(s, _)| *s == sub).map(|i| ErrorCategory(i as u8))
    }

    pub fn sub(self) -> &'static str {
        SUBCATEGORIES[self.0 as usize].0
    }

    pub fn major(self) -> Major {
        SUBCATEGORIES[self.0 as usize].1
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {}", self.major(), self.sub())
    }
}

impl Serialize for ErrorCategory {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.sub())
    }
}

impl<'de> Deserialize<'de> for ErrorCategory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ErrorCategory::named(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown subcategory `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Note,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub line: u32,
    pub column: Option<u32>,
    pub severity: Severity,
    pub message: String,
    /// Snippet, caret and note lines that follow the header line.
    pub attached: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedLog {
    pub diagnostics: Vec<Diagnostic>,
    /// Lines before the first diagnostic.
    pub preamble: Vec<String>,
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?P<path>[^:\s][^:]*):(?P<line>\d+):(?:(?P<col>\d+):)? (?P<sev>fatal error|error|warning|note): (?P<msg>.*)$")
            .expect("valid header regex")
    })
}

/// Split a gcc/clang log into diagnostics. `note:` lines are attached to the
/// diagnostic they follow rather than starting a record of their own.
pub fn parse_diagnostics(log: &str) -> ParsedLog {
    let mut out = ParsedLog::default();
    for line in log.lines() {
        if let Some(c) = header_re().captures(line) {
            let severity = match &c["sev"] {
                "warning" => Severity::Warning,
                "note" => Severity::Note,
                _ => Severity::Error,
            };
            if severity != Severity::Note || out.diagnostics.is_empty() {
                out.diagnostics.push(Diagnostic {
                    path: c["path"].to_string(),
                    line: c["line"].parse().unwrap_or(0),
                    column: c.name("col").and_then(|m| m.as_str().parse().ok()),
                    severity,
                    message: c["msg"].to_string(),
                    attached: Vec::new(),
                });
                continue;
            }
        }
        match out.diagnostics.last_mut() {
            Some(d) => d.attached.push(line.to_string()),
            None => out.preamble.push(line.to_string()),
        }
    }
    out
}

/// Replace typographic quotes so rules can use ASCII quotes.
pub fn normalize_message(msg: &str) -> String {
    msg.chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' | '`' => '\'',
            '\u{201c}' | '\u{201d}' => '"',
            c => c,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DiagnosticRule {
    pub priority: i64,
    pub pattern: Regex,
    pub category: ErrorCategory,
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule file: {0}")]
    Parse(String),
    #[error("rule {priority}: unknown subcategory `{sub}`")]
    UnknownCategory { priority: i64, sub: String },
    #[error("rule {priority}: {source}")]
    Pattern { priority: i64, source: regex::Error },
    #[error("two rules share priority {0}")]
    DuplicatePriority(i64),
}

#[derive(Deserialize)]
struct RuleFile {
    rule: Vec<RuleEntry>,
}

#[derive(Deserialize)]
struct RuleEntry {
    priority: i64,
    sub: String,
    pattern: String,
}

pub const BUILTIN_RULES: &str = include_str!("../../data/diagnostic-rules.toml");

#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<DiagnosticRule>,
}

impl RuleSet {
    pub fn parse(text: &str) -> Result<RuleSet, RuleError> {
        let file: RuleFile = toml::from_str(text).map_err(|e| RuleError::Parse(e.to_string()))?;
        let mut rules = Vec::with_capacity(file.rule.len());
        for r in file.rule {
            let category = ErrorCategory::named(&r.sub)
                .ok_or_else(|| RuleError::UnknownCategory { priority: r.priority, sub: r.sub.clone() })?;
            let pattern =
                Regex::new(&format!("(?i){}", r.pattern)).map_err(|source| RuleError::Pattern { priority: r.priority, source })?;
            rules.push(DiagnosticRule { priority: r.priority, pattern, category });
        }
        rules.sort_by_key(|r| r.priority);
        if let Some(w) = rules.windows(2).find(|w| w[0].priority == w[1].priority) {
            return Err(RuleError::DuplicatePriority(w[0].priority));
        }
        Ok(RuleSet { rules })
    }

    pub fn builtin() -> RuleSet {
        RuleSet::parse(BUILTIN_RULES).expect("built-in rules are valid")
    }

    pub fn rules(&self) -> &[DiagnosticRule] {
        &self.rules
    }

    pub fn classify_message(&self, message: &str) -> ErrorCategory {
        let msg = normalize_message(message);
        self.rules.iter().find(|r| r.pattern.is_match(&msg)).map_or(ErrorCategory::OTHERS, |r| r.category)
    }

    pub fn classify(&self, d: &Diagnostic) -> Classification {
        match d.severity {
            Severity::Error => Classification::Error(self.classify_message(&d.message)),
            _ => Classification::Ignored,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Error(ErrorCategory),
    /// Warnings and notes.
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagnosticsError {
    #[error("no classified errors")]
    NoErrors,
}

/// Error counts and shares per subcategory and per major category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distribution {
    pub total: u64,
    pub subs: BTreeMap<ErrorCategory, u64>,
}

impl Distribution {
    fn percent(&self, n: u64) -> BigRational {
        BigRational::new((n * 100).into(), self.total.into())
    }

    /// Percent of all classified errors.
    pub fn sub_share(&self, c: ErrorCategory) -> BigRational {
        self.percent(self.subs.get(&c).copied().unwrap_or(0))
    }

    pub fn major_count(&self, m: Major) -> u64 {
        self.subs.iter().filter(|(c, _)| c.major() == m).map(|(_, n)| n).sum()
    }

    /// Sum of the subcategory shares under `m`.
    pub fn major_share(&self, m: Major) -> BigRational {
        self.subs.keys().filter(|c| c.major() == m).fold(BigRational::zero(), |a, c| a + self.sub_share(*c))
    }

    /// `major,sub,count,proportion`, every subcategory in table order,
    /// proportions in percent to two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("major,sub,count,proportion\n");
        for c in ErrorCategory::all() {
            let n = self.subs.get(&c).copied().unwrap_or(0);
            out += &format!("{},{},{},{}\n", csv_field(c.major().name()), csv_field(c.sub()), n, fmt2(&self.sub_share(c)));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fmt2(x: &BigRational) -> String {
    let hundred = BigRational::from_integer(100.into());
    let half = BigRational::new(1.into(), 2.into());
    let v: num_bigint::BigInt = ((x * &hundred) + half).floor().to_integer();
    let h = num_bigint::BigInt::from(100);
    format!("{}.{:02}", &v / &h, u8::try_from(&v % &h).unwrap_or(0))
}

/// Distribution over every error diagnostic; warnings and notes are skipped.
pub fn taxonomy_proportions(rules: &RuleSet, diagnostics: &[Diagnostic]) -> Result<Distribution, DiagnosticsError> {
    let mut subs = BTreeMap::new();
    let mut total = 0;
    for d in diagnostics {
        if let Classification::Error(c) = rules.classify(d) {
            *subs.entry(c).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(DiagnosticsError::NoErrors);
    }
    Ok(Distribution { total, subs })
}

/// Category of the first error in a compile log, if any.
pub fn first_error_category(rules: &RuleSet, log: &str) -> Option<ErrorCategory> {
    parse_diagnostics(log).diagnostics.iter().find_map(|d| match rules.classify(d) {
        Classification::Error(c) => Some(c),
        Classification::Ignored => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shape() {
        assert_eq!(ErrorCategory::all().count(), 22);
        let per_major: Vec<usize> = Major::ALL.iter().map(|m| ErrorCategory::all().filter(|c| c.major() == *m).count()).collect();
        assert_eq!(per_major, vec![4, 3, 4, 2, 9]);
        assert_eq!(ErrorCategory::OTHERS.sub(), "Others");
        let rules = RuleSet::builtin();
        assert_eq!(rules.rules().len(), 21);
    }

    #[test]
    fn splitting() {
        assert!(parse_diagnostics("").diagnostics.is_empty());
        let log = "make: cc ...\nsrc/a.c: In function 'f':\nsrc/a.c:3:5: error: first\nsrc/a.c:9:1: error: second\n";
        let p = parse_diagnostics(log);
        assert_eq!(p.diagnostics.len(), 2);
        assert_eq!(p.preamble.len(), 2);
        let log = "a.c:3:12: error: 'struct s' has no member named 'x'\n    3 |     return p->x;\n      |             ^~\na.c:1:8: note: defined here\n";
        let p = parse_diagnostics(log);
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].attached.len(), 3);
        assert_eq!(p.diagnostics[0].column, Some(12));
    }

    #[test]
    fn classification_examples() {
        let rules = RuleSet::builtin();
        let c = rules.classify_message("implicit declaration of function \u{2018}foo\u{2019}");
        assert_eq!((c.major(), c.sub()), (Major::FunctionAndTypeDeclaration, "Implicit declaration of function"));
        let c = rules.classify_message("\u{2018}struct robj\u{2019} has no member named \u{2018}lastAccessTime\u{2019}");
        assert_eq!((c.major(), c.sub()), (Major::DataStructureAndMemberAccess, "Non-existent structure member"));
        let warn = parse_diagnostics("a.c:2:9: warning: unused variable 'x' [-Wunused-variable]\n");
        assert_eq!(rules.classify(&warn.diagnostics[0]), Classification::Ignored);
        assert_eq!(rules.classify_message("something new"), ErrorCategory::OTHERS);
    }

    /// Messages as emitted by gcc 11 and clang for small programs exhibiting
    /// each error.
    #[test]
    fn both_compilers() {
        let rules = RuleSet::builtin();
        let cases = [
            ("implicit declaration of function \u{2018}g\u{2019} [-Werror=implicit-function-declaration]", "Implicit declaration of function"),
            ("call to undeclared function 'g'; ISO C99 and later do not support implicit function declarations", "Implicit declaration of function"),
            ("conflicting types for \u{2018}f\u{2019}; have \u{2018}double(int)\u{2019}", "Type conflict"),
            ("too few arguments to function \u{2018}h\u{2019}", "API parameter count mismatch"),
            ("too few arguments to function call, expected 2, have 1", "API parameter count mismatch"),
            ("unknown type name \u{2018}foo_t\u{2019}", "Undeclared type"),
            ("no member named 'lastAccessTime' in 'struct robj'", "Non-existent structure member"),
            ("\u{2018}p\u{2019} is a pointer; did you mean to use \u{2018}->\u{2019}?", "Misuse of structure pointer"),
            ("member reference type 'struct s *' is a pointer; did you mean to use '->'?", "Misuse of structure pointer"),
            ("invalid type argument of \u{2018}->\u{2019} (have \u{2018}struct s\u{2019})", "Misuse of structure pointer"),
            ("invalid type argument of \u{2018}->\u{2019} (have \u{2018}int\u{2019})", "Use → operator to access an integer member"),
            ("member reference type 'int' is not a pointer", "Use → operator to access an integer member"),
            ("initialization of \u{2018}int *\u{2019} from \u{2018}int\u{2019} makes pointer from integer without a cast [-Wint-conversion]", "Making a pointer from an integer without a cast"),
            ("incompatible integer to pointer conversion initializing 'int *' with an expression of type 'int'", "Making a pointer from an integer without a cast"),
            ("initialization of \u{2018}int *\u{2019} from incompatible pointer type \u{2018}long int *\u{2019}", "Incompatible pointer type"),
            ("incompatible pointer types initializing 'int *' with an expression of type 'long *'", "Incompatible pointer type"),
            ("incompatible types when assigning to type \u{2018}int\u{2019} from type \u{2018}struct s\u{2019}", "Incompatible type assignment"),
            ("assigning to 'int' from incompatible type 'struct s'", "Incompatible type assignment"),
            ("redefinition of \u{2018}f\u{2019}", "Redefinition"),
            ("static declaration of 'f' follows non-static declaration", "Conflict between static and non-static declarations"),
            ("request for member \u{2018}a\u{2019} in something not a structure or union", "Incorrect access to structure or union member"),
            ("member reference base type 'int' is not a structure or union", "Incorrect access to structure or union member"),
            ("lvalue required as left operand of assignment", "Lvalue required as the left operand of assignment"),
            ("expression is not assignable", "Lvalue required as the left operand of assignment"),
            ("subscripted value is neither array nor pointer nor vector", "Incorrect use of array, pointer, or vector"),
            ("subscripted value is not an array, pointer, or vector", "Incorrect use of array, pointer, or vector"),
            ("assignment to expression with array type", "Assignment to expression with array type"),
            ("array type 'char[4]' is not assignable", "Assignment to expression with array type"),
            ("expected expression before \u{2018})\u{2019} token", "Incorrect use of parentheses"),
            ("extraneous ')' before ';'", "Incorrect use of parentheses"),
            ("expected expression before \u{2018};\u{2019} token", "Expected expression error"),
            ("expected expression", "Expected expression error"),
            ("invalid operands to binary + (have \u{2018}struct s\u{2019} and \u{2018}int\u{2019})", "Invalid binary operands"),
            ("invalid operands to binary expression ('struct s' and 'int')", "Invalid binary operands"),
            ("array subscript is not an integer", "Array subscript is not an integer"),
            ("subscript of pointer to function type 'int (void)'", "Subscripted value is pointer to function"),
        ];
        for (msg, sub) in cases {
            assert_eq!(rules.classify_message(msg).sub(), sub, "{msg}");
        }
    }

    #[test]
    fn proportions() {
        let rules = RuleSet::builtin();
        let log = "a.c:1:1: error: implicit declaration of function 'a'\n\
                   a.c:2:1: error: implicit declaration of function 'b'\n\
                   a.c:3:1: warning: unused variable 'x'\n\
                   a.c:4:1: error: conflicting types for 'c'\n\
                   a.c:5:1: error: conflicting types for 'd'\n";
        let d = taxonomy_proportions(&rules, &parse_diagnostics(log).diagnostics).unwrap();
        let half = BigRational::from_integer(50.into());
        assert_eq!(d.sub_share(ErrorCategory::named("Type conflict").unwrap()), half);
        assert_eq!(d.major_share(Major::FunctionAndTypeDeclaration), BigRational::from_integer(100.into()));
        assert!(d.to_csv().contains("Function and Type Declaration Errors,Implicit declaration of function,2,50.00\n"));
        assert!(d.to_csv().contains("\"Incorrect use of array, pointer, or vector\",0,0.00"));
        assert_eq!(taxonomy_proportions(&rules, &[]), Err(DiagnosticsError::NoErrors));
        assert_eq!(
            first_error_category(&rules, log).map(|c| c.sub()),
            Some("Implicit declaration of function")
        );
    }

    #[test]
    fn rule_file_errors() {
        assert!(matches!(RuleSet::parse("[[rule]]\npriority=1\nsub=\"Nope\"\npattern=\"x\"\n"), Err(RuleError::UnknownCategory { .. })));
        let dup = "[[rule]]\npriority=1\nsub=\"Redefinition\"\npattern=\"x\"\n[[rule]]\npriority=1\nsub=\"Redefinition\"\npattern=\"y\"\n";
        assert!(matches!(RuleSet::parse(dup), Err(RuleError::DuplicatePriority(1))));
        assert!(matches!(RuleSet::parse("[[rule]]\npriority=1\nsub=\"Redefinition\"\npattern=\"(\"\n"), Err(RuleError::Pattern { .. })));
    }
}
