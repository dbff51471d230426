//! Line-based MDP text format.
//!
//! ```text
//! mdp <n_states> <n_actions> <gamma>
//! initial <s> <p>
//! terminal <s>
//! t <s> <a> <s'> <p> <r>
//! ```
//!
//! `#` starts a comment. Emission is canonical: initial entries and terminals
//! sorted by state, transitions in `(s, a)` order, numbers with 17
//! significant digits so that loading the output reproduces every value.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{MdpBuilder, TabularMdp};
use crate::error::{Error, Result};

/// `%.17g`-style rendering: 17 significant digits, trailing zeros removed.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), sign, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} '{tok}'"),
    })
}

/// Parses and validates an MDP in the text format.
pub fn load_mdp(text: &str) -> Result<TabularMdp> {
    let mut builder: Option<MdpBuilder> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let keyword = toks.next().expect("non-empty line");
        match (keyword, builder.as_mut()) {
            ("mdp", None) => {
                let n_states: usize = field(toks.next(), line, "state count")?;
                let n_actions: usize = field(toks.next(), line, "action count")?;
                let gamma: f64 = field(toks.next(), line, "discount")?;
                builder = Some(MdpBuilder::new(n_states, n_actions, gamma));
            }
            ("mdp", Some(_)) => {
                return Err(Error::Parse {
                    line,
                    message: "duplicate header".into(),
                })
            }
            (_, None) => {
                return Err(Error::Parse {
                    line,
                    message: "expected header 'mdp <n_states> <n_actions> <gamma>'".into(),
                })
            }
            ("initial", Some(b)) => {
                let s = field(toks.next(), line, "state")?;
                let p = field(toks.next(), line, "probability")?;
                b.initial(s, p);
            }
            ("terminal", Some(b)) => {
                let s = field(toks.next(), line, "state")?;
                b.terminal(s);
            }
            ("t", Some(b)) => {
                let s = field(toks.next(), line, "state")?;
                let a = field(toks.next(), line, "action")?;
                let next = field(toks.next(), line, "next state")?;
                let p = field(toks.next(), line, "probability")?;
                let r = field(toks.next(), line, "reward")?;
                b.transition(s, a, next, p, r);
            }
            (other, Some(_)) => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown keyword '{other}'"),
                })
            }
        }
        if toks.next().is_some() {
            return Err(Error::Parse {
                line,
                message: "trailing tokens".into(),
            });
        }
    }
    builder
        .ok_or(Error::Parse {
            line: 0,
            message: "empty input".into(),
        })?
        .build()
}

/// Canonical text form of `mdp`.
pub fn emit_mdp(mdp: &TabularMdp) -> String {
    emit_mdp_with_comment(mdp, None)
}

/// Canonical text form preceded by a `# comment` line.
pub fn emit_mdp_with_comment(mdp: &TabularMdp, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(
        out,
        "mdp {} {} {}",
        mdp.n_states(),
        mdp.n_actions(),
        format_g17(mdp.gamma())
    );
    for &(s, p) in mdp.initial() {
        let _ = writeln!(out, "initial {s} {}", format_g17(p));
    }
    for s in mdp.terminals() {
        let _ = writeln!(out, "terminal {s}");
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            for t in mdp.transitions(s, a) {
                let _ = writeln!(
                    out,
                    "t {s} {a} {} {} {}",
                    t.next,
                    format_g17(t.prob),
                    format_g17(t.reward)
                );
            }
        }
    }
    out
}
