//! Resolving ambiguous conditional densities: interactively, from an
//! answers file, or by blanket policy.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use fwdppl::pipeline::{PipelineError, Policy};
use fwdppl::transform::Prompt;

/// Parse an answers file: `var=<option>` lines, `#` starts a comment.
pub fn parse_answers(text: &str) -> Result<BTreeMap<String, usize>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let bad = || format!("answers file line {}: expected `var=<option>`, found `{line}`", n + 1);
        let (var, opt) = line.split_once('=').ok_or_else(bad)?;
        let opt: usize = opt.trim().parse().map_err(|_| bad())?;
        if out.insert(var.trim().to_string(), opt).is_some() {
            return Err(format!(
                "answers file line {}: second answer for `{}`",
                n + 1,
                var.trim()
            ));
        }
    }
    Ok(out)
}

pub fn from_answers(answers: BTreeMap<String, usize>) -> Policy<'static> {
    Policy::Ask(Box::new(move |p: &Prompt| {
        answers
            .get(&p.var)
            .copied()
            .ok_or_else(|| PipelineError::Answer(format!("answers file has no answer for variable `{}`", p.var)))
    }))
}

/// Prompts go to stderr; answers are read line by line from `input`.
pub fn interactive<'a, R: BufRead + 'a>(mut input: R) -> Policy<'a> {
    Policy::Ask(Box::new(move |p: &Prompt| {
        let mut err = io::stderr().lock();
        write!(err, "{}", p.render()).ok();
        err.flush().ok();
        loop {
            let mut line = String::new();
            let read = input
                .read_line(&mut line)
                .map_err(|e| PipelineError::Answer(e.to_string()))?;
            if read == 0 {
                return Err(PipelineError::Answer(format!(
                    "input ended before variable `{}` was answered",
                    p.var
                )));
            }
            match line.trim().parse::<usize>() {
                Ok(k) if k <= p.options.len() => return Ok(k),
                _ => {
                    write!(err, "enter a number from 0 to {}\n> ", p.options.len()).ok();
                    err.flush().ok();
                }
            }
        }
    }))
}
