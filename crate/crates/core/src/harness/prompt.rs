//! Prompt construction and code extraction from model responses.

use thiserror::Error;

use crate::corpus::{BenchmarkCase, Scenario};

pub const GENERATION_INSTRUCTION: &str = "Implement the C function described below. \
The context lists declarations from the same project; not all of them are needed. \
Reply with the complete function definition in a single C code block.";

pub const COMPLETION_INSTRUCTION: &str = "Complete the C function below, continuing from the last line shown. \
The context lists declarations from the same project; not all of them are needed. \
Reply with the complete function definition in a single C code block.";

/// The four sections of a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub instruction: String,
    pub context_block: String,
    pub description: String,
    /// Signature followed by `;`, or the open partial body.
    pub tail: String,
}

impl PromptSpec {
    pub fn for_case(case: &BenchmarkCase) -> PromptSpec {
        let mut context_block = String::new();
        for d in &case.context.deps {
            context_block.push_str(&format!("// [{}] from {}\n{}\n", d.kind.as_str(), d.origin, d.text));
        }
        let (instruction, tail) = match (case.scenario, &case.partial_body) {
            (Scenario::Completion, Some(p)) => (COMPLETION_INSTRUCTION, p.clone()),
            _ => (GENERATION_INSTRUCTION, format!("{};", case.signature.trim())),
        };
        PromptSpec { instruction: instruction.to_string(), context_block, description: case.description.clone(), tail }
    }

    pub fn render(&self) -> String {
        format!(
            "### Instruction\n{}\n### Context\n{}### Function Description\n{}\n### Target\n{}",
            self.instruction, self.context_block, self.description, self.tail
        )
    }
}

pub fn build_prompt(case: &BenchmarkCase) -> String {
    PromptSpec::for_case(case).render()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("model response is empty")]
    EmptyResponse,
}

/// Pull the code out of a model response.
///
/// The first fenced block wins. Without fences, the response is cut at the
/// first line that mentions `function(`; failing that, the whole text is used.
pub fn extract_code(raw: &str, function: Option<&str>) -> Result<String, ExtractError> {
    if raw.trim().is_empty() {
        return Err(ExtractError::EmptyResponse);
    }
    let lines: Vec<&str> = raw.lines().collect();
    if let Some(open) = lines.iter().position(|l| l.trim_start().starts_with("```")) {
        let rest = &lines[open + 1..];
        let close = rest.iter().position(|l| l.trim_start().starts_with("```")).unwrap_or(rest.len());
        let code = rest[..close].join("\n");
        return if code.trim().is_empty() { Err(ExtractError::EmptyResponse) } else { Ok(code + "\n") };
    }
    if let Some(name) = function {
        let needle = regex::Regex::new(&format!(r"\b{}\s*\(", regex::escape(name))).expect("escaped name");
        if let Some(start) = lines.iter().position(|l| needle.is_match(l)) {
            return Ok(lines[start..].join("\n") + "\n");
        }
    }
    Ok(raw.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ContextBundle, DepKind, Dependency};

    fn case(scenario: Scenario) -> BenchmarkCase {
        BenchmarkCase {
            id: "c1".into(),
            project: "p".into(),
            commit: "abc".into(),
            file: "src/a.c".into(),
            function: "add".into(),
            signature: "int add(int a, int b)".into(),
            description: "Add two integers.".into(),
            reference_body: "int add(int a, int b)\n{\n    int s = a;\n    s += b;\n    return s;\n}".into(),
            partial_body: (scenario == Scenario::Completion).then(|| "int add(int a, int b)\n{\n    int s = a;\n".into()),
            scenario,
            context: ContextBundle {
                deps: vec![
                    Dependency { kind: DepKind::Macro, name: "M".into(), text: "#define M 1".into(), origin: "a.h".into(), relevant: true },
                    Dependency { kind: DepKind::GlobalVar, name: "g".into(), text: "int g;".into(), origin: "b.c".into(), relevant: false },
                ],
                order_seed: 0,
            },
            test_cmd: "make test".into(),
            lineage: vec![],
        }
    }

    #[test]
    fn generation_layout() {
        let p = build_prompt(&case(Scenario::Generation));
        let expected = format!(
            "### Instruction\n{GENERATION_INSTRUCTION}\n### Context\n// [macro] from a.h\n#define M 1\n// [global-var] from b.c\nint g;\n\
             ### Function Description\nAdd two integers.\n### Target\nint add(int a, int b);"
        );
        assert_eq!(p, expected);
        assert!(!p.contains("relevant"));
    }

    #[test]
    fn completion_ends_open() {
        let p = build_prompt(&case(Scenario::Completion));
        assert!(p.ends_with("{\n    int s = a;\n"));
        assert!(p.starts_with(&format!("### Instruction\n{COMPLETION_INSTRUCTION}")));
        let target = p.split("### Target\n").nth(1).unwrap();
        assert_eq!(target.matches('{').count(), target.matches('}').count() + 1);
    }

    #[test]
    fn extraction_rules() {
        assert_eq!(extract_code("Here:\n```c\nint f(void){return 1;}\n```\n", None).unwrap(), "int f(void){return 1;}\n");
        assert_eq!(extract_code("int f(void){return 1;}", Some("f")).unwrap(), "int f(void){return 1;}\n");
        let two = "Sure.\n```\nint a;\n```\nand\n```\nint b;\n```";
        assert_eq!(extract_code(two, None).unwrap(), "int a;\n");
        let prose = "The answer is below.\nint add(int a, int b)\n{ return a + b; }";
        assert_eq!(extract_code(prose, Some("add")).unwrap(), "int add(int a, int b)\n{ return a + b; }\n");
        assert_eq!(extract_code("  \n", None), Err(ExtractError::EmptyResponse));
    }
}
