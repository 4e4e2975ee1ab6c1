//! Text format for programs.
//!
//! One function per line:
//!
//! ```text
//! fn <name> kind=<arith|dsp|graphics|string|io|system> cost=<int>
//!     [prio=<int>] [static] [size=<int>] [iowait=<int>] [yield=<int>]
//!     [after=<name>[,<name>...]]
//! ```
//!
//! `#` starts a comment, blank lines are ignored, key order after the name
//! is free. Forward references in `after` are fine; the whole file is
//! resolved as one graph.

use super::{FunctionKind, FunctionSpec, ParseError, PrioritySpec, ProgramGraph};

pub fn parse_program(text: &str) -> Result<ProgramGraph, ParseError> {
    let mut specs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        specs.push(parse_line(content, line)?);
    }
    ProgramGraph::from_specs(specs)
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_line(content: &str, line: usize) -> Result<FunctionSpec, ParseError> {
    let mut tokens = content.split_whitespace();
    match tokens.next() {
        Some("fn") => {}
        Some(other) => return Err(syntax(line, format!("expected `fn`, found `{other}`"))),
        None => unreachable!("blank lines are skipped"),
    }
    let name = tokens
        .next()
        .ok_or_else(|| syntax(line, "missing function name after `fn`"))?;
    check_name(name, line)?;

    let mut kind = None;
    let mut cost = None;
    let mut prio = None;
    let mut is_static = false;
    let mut size = None;
    let mut iowait = None;
    let mut yield_after = None;
    let mut deps: Option<Vec<String>> = None;

    for token in tokens {
        if token == "static" {
            if is_static {
                return Err(syntax(line, "duplicate `static`"));
            }
            is_static = true;
            continue;
        }
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| syntax(line, format!("expected `key=value`, found `{token}`")))?;
        match key {
            "kind" => {
                if kind.is_some() {
                    return Err(syntax(line, "duplicate `kind`"));
                }
                kind = Some(
                    FunctionKind::from_token(value)
                        .ok_or_else(|| ParseError::UnknownKind(value.to_string()))?,
                );
            }
            "cost" => {
                if cost.is_some() {
                    return Err(syntax(line, "duplicate `cost`"));
                }
                let c = parse_int(value, "cost", line)?;
                if c == 0 {
                    return Err(syntax(line, "cost must be at least 1"));
                }
                cost = Some(c);
            }
            "prio" => {
                if prio.is_some() {
                    return Err(syntax(line, "duplicate `prio`"));
                }
                prio = Some(parse_int(value, "prio", line)? as u32);
            }
            "size" => {
                if size.is_some() {
                    return Err(syntax(line, "duplicate `size`"));
                }
                size = Some(parse_int(value, "size", line)?);
            }
            "iowait" => {
                if iowait.is_some() {
                    return Err(syntax(line, "duplicate `iowait`"));
                }
                iowait = Some(parse_int(value, "iowait", line)?);
            }
            "yield" => {
                if yield_after.is_some() {
                    return Err(syntax(line, "duplicate `yield`"));
                }
                let y = parse_int(value, "yield", line)?;
                if y == 0 {
                    return Err(syntax(line, "yield must be at least 1"));
                }
                yield_after = Some(y);
            }
            "after" => {
                if deps.is_some() {
                    return Err(syntax(line, "duplicate `after`"));
                }
                let mut list = Vec::new();
                for dep in value.split(',') {
                    if dep.is_empty() {
                        return Err(syntax(line, "empty name in `after` list"));
                    }
                    check_name(dep, line)?;
                    list.push(dep.to_string());
                }
                deps = Some(list);
            }
            other => return Err(syntax(line, format!("unknown key `{other}`"))),
        }
    }

    let kind = kind.ok_or_else(|| syntax(line, format!("function `{name}` has no kind")))?;
    let cost = cost.ok_or_else(|| syntax(line, format!("function `{name}` has no cost")))?;

    Ok(FunctionSpec {
        name: name.to_string(),
        kind,
        cost,
        priority: PrioritySpec {
            level: prio,
            is_static,
        },
        code_size: size.unwrap_or(1),
        deps: deps.unwrap_or_default(),
        io_wait: iowait.unwrap_or(0),
        yield_after,
    })
}

fn parse_int(value: &str, key: &str, line: usize) -> Result<u64, ParseError> {
    value.parse::<u64>().map_err(|_| {
        syntax(
            line,
            format!("`{key}` wants an unsigned integer, got `{value}`"),
        )
    })
}

fn check_name(name: &str, line: usize) -> Result<(), ParseError> {
    // Names appear bare in `after` lists and in CSV traces, so the
    // separators those formats use are off limits.
    if let Some(bad) = name
        .chars()
        .find(|c| "=,#".contains(*c) || c.is_whitespace())
    {
        return Err(syntax(
            line,
            format!("name `{name}` contains forbidden character `{bad}`"),
        ));
    }
    Ok(())
}

/// Render a graph back to source text.
///
/// Output is canonical: one line per function in program order, keys in a
/// fixed order, defaulted keys omitted. Parsing the result reproduces the
/// graph exactly.
pub fn serialize_program(graph: &ProgramGraph) -> String {
    let mut out = String::new();
    for spec in graph.nodes() {
        out.push_str(&format!(
            "fn {} kind={} cost={}",
            spec.name, spec.kind, spec.cost
        ));
        if let Some(level) = spec.priority.level {
            out.push_str(&format!(" prio={level}"));
        }
        if spec.priority.is_static {
            out.push_str(" static");
        }
        if spec.code_size != 1 {
            out.push_str(&format!(" size={}", spec.code_size));
        }
        if spec.io_wait != 0 {
            out.push_str(&format!(" iowait={}", spec.io_wait));
        }
        if let Some(y) = spec.yield_after {
            out.push_str(&format!(" yield={y}"));
        }
        if !spec.deps.is_empty() {
            out.push_str(&format!(" after={}", spec.deps.join(",")));
        }
        out.push('\n');
    }
    out
}
