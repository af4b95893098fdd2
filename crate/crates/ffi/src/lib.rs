//! C ABI over the obfusbench library.
//!
//! Every fallible function returns an [`ObfbStatus`] and writes its result
//! through an out-pointer. On failure the message is available from
//! [`obfb_last_error`] on the same thread. Strings returned to the caller are
//! owned by the caller and released with [`obfb_string_free`]; handles are
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::OnceLock;

use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive};

use obfusbench::cfront::{Project, TestMatcher};
use obfusbench::corpus::{BenchmarkCase, Stratum};
use obfusbench::diagnostics::{ErrorCategory, RuleSet};
use obfusbench::harness::build_prompt;
use obfusbench::metrics::{decrease_ratio, pass_at_k, sample_size, PassStats, SampleSizeParams};
use obfusbench::obfuscate::{builtin_wordlist, obfuscate_case, ObfuscateError, SymbolEnv};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObfbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    NotApplicable = 5,
    Io = 6,
    Internal = 7,
}

/// Change of an obfuscated rate against its base.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObfbChange {
    Equal = 0,
    SmallIncrease = 1,
    SmallDecrease = 2,
    LargeIncrease = 3,
    LargeDecrease = 4,
}

/// A loaded C project plus the renaming facts derived from it.
pub struct ObfbProject {
    project: Project,
    env: SymbolEnv,
}

/// A benchmark case.
pub struct ObfbCase {
    case: BenchmarkCase,
}

/// A compiler-diagnostic rule set.
pub struct ObfbRuleSet {
    rules: RuleSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ObfbStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ObfbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ObfbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ObfbStatus::Internal
        }
    }
}

fn invalid(msg: impl ToString) -> Failure {
    Failure(ObfbStatus::InvalidArgument, msg.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(ObfbStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(ObfbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(ObfbStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(ObfbStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior nul").into_raw()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn obfb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn obfb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Sample size for a population of `population` items with finite
/// population correction.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_sample_size(population: u64, confidence: f64, margin: f64, p: f64, out: *mut u64) -> ObfbStatus {
    guard(|| {
        let n = sample_size(SampleSizeParams { population, confidence, margin, p }).map_err(invalid)?;
        write_out(out, n)
    })
}

/// Unbiased pass@k for `c` correct samples out of `n`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_pass_at_k(n: u64, c: u64, k: u64, out: *mut f64) -> ObfbStatus {
    guard(|| {
        let stats = PassStats::new(n, c, k).map_err(invalid)?;
        write_out(out, pass_at_k(stats))
    })
}

/// |base − obf| / base and its marker. Inputs are percentages.
///
/// # Safety
/// `ratio` and `change` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_decrease_ratio(base: f64, obf: f64, ratio: *mut f64, change: *mut ObfbChange) -> ObfbStatus {
    guard(|| {
        let to_q = |x: f64| BigRational::from_f64(x).ok_or_else(|| invalid(format!("{x} is not finite")));
        let m = decrease_ratio(&to_q(base)?, &to_q(obf)?).map_err(invalid)?;
        let code = match m.code() {
            "sinc" => ObfbChange::SmallIncrease,
            "sdec" => ObfbChange::SmallDecrease,
            "inc" => ObfbChange::LargeIncrease,
            "dec" => ObfbChange::LargeDecrease,
            _ => ObfbChange::Equal,
        };
        write_out(ratio, m.ratio.to_f64().unwrap_or(f64::NAN))?;
        write_out(change, code)
    })
}

/// The built-in diagnostic rules.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_ruleset_builtin(out: *mut *mut ObfbRuleSet) -> ObfbStatus {
    guard(|| write_out(out, Box::into_raw(Box::new(ObfbRuleSet { rules: RuleSet::builtin() }))))
}

/// Rules from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_ruleset_parse(toml: *const c_char, out: *mut *mut ObfbRuleSet) -> ObfbStatus {
    guard(|| {
        let rules = RuleSet::parse(str_arg(toml, "toml")?).map_err(|e| Failure(ObfbStatus::Parse, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(ObfbRuleSet { rules })))
    })
}

/// # Safety
/// `rules` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn obfb_ruleset_free(rules: *mut ObfbRuleSet) {
    if !rules.is_null() {
        drop(Box::from_raw(rules));
    }
}

/// Category index (0..=21, 21 is "Others") of one diagnostic message.
///
/// # Safety
/// `rules` must be a live handle, `message` a NUL-terminated string and
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_classify_message(rules: *const ObfbRuleSet, message: *const c_char, out: *mut u32) -> ObfbStatus {
    guard(|| {
        let rules = ref_arg(rules, "rules")?;
        let c = rules.rules.classify_message(str_arg(message, "message")?);
        let idx = ErrorCategory::all().position(|x| x == c).expect("known category");
        write_out(out, idx as u32)
    })
}

fn category_names() -> &'static [(CString, CString)] {
    static NAMES: OnceLock<Vec<(CString, CString)>> = OnceLock::new();
    NAMES.get_or_init(|| {
        ErrorCategory::all()
            .map(|c| (CString::new(c.major().name()).unwrap(), CString::new(c.sub()).unwrap()))
            .collect()
    })
}

/// Number of error categories, "Others" included.
#[no_mangle]
pub extern "C" fn obfb_category_count() -> u32 {
    category_names().len() as u32
}

/// Subcategory name of a category index, or null when out of range. The
/// string is static.
#[no_mangle]
pub extern "C" fn obfb_category_sub(index: u32) -> *const c_char {
    category_names().get(index as usize).map_or(ptr::null(), |(_, s)| s.as_ptr())
}

/// Major category name of a category index, or null when out of range.
#[no_mangle]
pub extern "C" fn obfb_category_major(index: u32) -> *const c_char {
    category_names().get(index as usize).map_or(ptr::null(), |(m, _)| m.as_ptr())
}

/// Parse one case from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_case_from_json(json: *const c_char, out: *mut *mut ObfbCase) -> ObfbStatus {
    guard(|| {
        let case: BenchmarkCase =
            serde_json::from_str(str_arg(json, "json")?).map_err(|e| Failure(ObfbStatus::Parse, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(ObfbCase { case })))
    })
}

/// # Safety
/// `case` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_case_to_json(case: *const ObfbCase, out: *mut *mut c_char) -> ObfbStatus {
    guard(|| {
        let case = ref_arg(case, "case")?;
        let json = serde_json::to_string(&case.case).map_err(|e| Failure(ObfbStatus::Internal, e.to_string()))?;
        write_out(out, owned_string(json))
    })
}

/// The prompt text for a case.
///
/// # Safety
/// `case` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_case_prompt(case: *const ObfbCase, out: *mut *mut c_char) -> ObfbStatus {
    guard(|| write_out(out, owned_string(build_prompt(&ref_arg(case, "case")?.case))))
}

/// # Safety
/// `case` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn obfb_case_free(case: *mut ObfbCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// Load a project checkout. Files under `tests` or `test` directories, or
/// with `test` anywhere in their path, are treated as tests.
///
/// # Safety
/// `root` must be a NUL-terminated path; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_project_load(root: *const c_char, out: *mut *mut ObfbProject) -> ObfbStatus {
    guard(|| {
        let root = str_arg(root, "root")?;
        if !Path::new(root).is_dir() {
            return Err(Failure(ObfbStatus::Io, format!("{root} is not a directory")));
        }
        let project = Project::load(Path::new(root), &TestMatcher::default()).map_err(|e| Failure(ObfbStatus::Parse, e.to_string()))?;
        let env = SymbolEnv::from_project(&project, builtin_wordlist());
        write_out(out, Box::into_raw(Box::new(ObfbProject { project, env })))
    })
}

/// # Safety
/// `project` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn obfb_project_free(project: *mut ObfbProject) {
    if !project.is_null() {
        drop(Box::from_raw(project));
    }
}

/// Obfuscate an original case into `stratum` (`symbol`, `structure`,
/// `semantic`, `symbol+structure` or `symbol+semantic`). Returns
/// `NotApplicable` when the strategy has nothing to transform.
///
/// # Safety
/// `project` and `case` must be live handles, `stratum` a NUL-terminated
/// string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn obfb_obfuscate(
    project: *const ObfbProject,
    case: *const ObfbCase,
    stratum: *const c_char,
    seed: u64,
    out: *mut *mut ObfbCase,
) -> ObfbStatus {
    guard(|| {
        let project = ref_arg(project, "project")?;
        let case = ref_arg(case, "case")?;
        let stratum: Stratum = str_arg(stratum, "stratum")?.parse().map_err(invalid)?;
        if matches!(stratum, Stratum::Original | Stratum::OriginalRestricted) {
            return Err(invalid(format!("{stratum} is not an obfuscation")));
        }
        let variant = obfuscate_case(&case.case, stratum, seed, &project.project, &project.env).map_err(|e| match e {
            ObfuscateError::NotApplicable { .. } | ObfuscateError::Unsupported { .. } => Failure(ObfbStatus::NotApplicable, e.to_string()),
            _ => Failure(ObfbStatus::Parse, e.to_string()),
        })?;
        write_out(out, Box::into_raw(Box::new(ObfbCase { case: variant })))
    })
}
