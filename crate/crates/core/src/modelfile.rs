//! Model definition files and named presets.
//!
//! The format is line-based text: `key = value` pairs plus one line per
//! transfer rate. Example (the bundled two-site preset):
//!
//! ```text
//! n_sites = 2
//! eps = 0.1
//! sigma_p 2 1 = cos_offset 1 2
//! sigma_p 1 2 = sin_offset 1 2
//! sigma_q 2 1 = sin_offset 1 2
//! sigma_q 1 2 = cos_offset 1 2
//! a_p = 0.4 0.3
//! b_p = 0.2 0.1
//! a_q = 0.1 0.2
//! b_q = 0.5 0.3
//! ```
//!
//! Rate expressions: `const c`, `cos_offset a b` (= `a cos(theta) + b`),
//! `sin_offset a b`, `table v0 v1 ...` (uniform samples over one period).
//! Site indices are 1-based, ordered destination then origin.

use crate::error::{Error, Result};
use crate::model::{FullModel, LvParams, MigrationRates, RateFn};
use std::path::Path;

pub const PRESET_PAPER_N2: &str = "paper-n2";
pub const PRESET_PAPER_SIGMA: &str = "paper-sigma";

/// Names of the bundled presets.
pub fn preset_names() -> Vec<&'static str> {
    vec![PRESET_PAPER_N2, PRESET_PAPER_SIGMA]
}

/// Transfer rates of the two-site example: `K_p(0) = [[-3, 2], [3, -2]]`.
pub fn paper_n2_rates() -> Result<MigrationRates> {
    let mut rates = MigrationRates::new(2)?;
    rates.set_p(1, 0, RateFn::CosOffset { amp: 1.0, offset: 2.0 })?;
    rates.set_p(0, 1, RateFn::SinOffset { amp: 1.0, offset: 2.0 })?;
    rates.set_q(1, 0, RateFn::SinOffset { amp: 1.0, offset: 2.0 })?;
    rates.set_q(0, 1, RateFn::CosOffset { amp: 1.0, offset: 2.0 })?;
    Ok(rates)
}

pub fn paper_n2_params() -> Result<LvParams> {
    LvParams::new(
        vec![0.4, 0.3],
        vec![0.2, 0.1],
        vec![0.1, 0.2],
        vec![0.5, 0.3],
    )
}

/// The two-site example as a full model at the given scale separation.
pub fn paper_n2_model(eps: f64) -> Result<FullModel> {
    FullModel::new(paper_n2_rates()?, paper_n2_params()?, eps)
}

/// Parses a model definition file.
pub fn load_model_file(path: &Path) -> Result<FullModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<FullModel> {
    let mut n_sites: Option<usize> = None;
    let mut eps: Option<f64> = None;
    let mut rates: Option<MigrationRates> = None;
    let mut a_p = None;
    let mut b_p = None;
    let mut a_q = None;
    let mut b_q = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let err = |msg: String| Error::Parse { line: lineno, msg };

        if key == "n_sites" {
            let n = value
                .parse::<usize>()
                .map_err(|e| err(format!("bad n_sites: {e}")))?;
            n_sites = Some(n);
            rates = Some(MigrationRates::new(n)?);
        } else if key == "eps" {
            eps = Some(
                value
                    .parse::<f64>()
                    .map_err(|e| err(format!("bad eps: {e}")))?,
            );
        } else if let Some(rest) = key.strip_prefix("sigma_") {
            let mut parts = rest.split_whitespace();
            let species = parts.next().ok_or_else(|| err("missing species".into()))?;
            let to: usize = parts
                .next()
                .ok_or_else(|| err("missing destination site".into()))?
                .parse()
                .map_err(|e| err(format!("bad site index: {e}")))?;
            let from: usize = parts
                .next()
                .ok_or_else(|| err("missing origin site".into()))?
                .parse()
                .map_err(|e| err(format!("bad site index: {e}")))?;
            if to == 0 || from == 0 {
                return Err(err("site indices are 1-based".into()));
            }
            let rate = parse_rate(value).map_err(|msg| err(msg))?;
            let r = rates
                .as_mut()
                .ok_or_else(|| err("n_sites must come before rates".into()))?;
            match species {
                "p" => r.set_p(to - 1, from - 1, rate)?,
                "q" => r.set_q(to - 1, from - 1, rate)?,
                other => return Err(err(format!("unknown species '{other}'"))),
            }
        } else if ["a_p", "b_p", "a_q", "b_q"].contains(&key) {
            let v: std::result::Result<Vec<f64>, _> =
                value.split_whitespace().map(str::parse::<f64>).collect();
            let v = v.map_err(|e| err(format!("bad vector: {e}")))?;
            match key {
                "a_p" => a_p = Some(v),
                "b_p" => b_p = Some(v),
                "a_q" => a_q = Some(v),
                "b_q" => b_q = Some(v),
                _ => unreachable!(),
            }
        } else {
            return Err(err(format!("unknown key '{key}'")));
        }
    }

    let n = n_sites.ok_or_else(|| Error::InvalidModel("missing n_sites".into()))?;
    let missing = |what: &str| Error::InvalidModel(format!("missing {what}"));
    let params = LvParams::new(
        a_p.ok_or_else(|| missing("a_p"))?,
        b_p.ok_or_else(|| missing("b_p"))?,
        a_q.ok_or_else(|| missing("a_q"))?,
        b_q.ok_or_else(|| missing("b_q"))?,
    )?;
    if params.n_sites() != n {
        return Err(Error::InvalidModel(format!(
            "LV vectors have length {} but n_sites = {n}",
            params.n_sites()
        )));
    }
    FullModel::new(
        rates.ok_or_else(|| missing("rates"))?,
        params,
        eps.ok_or_else(|| missing("eps"))?,
    )
}

fn parse_rate(expr: &str) -> std::result::Result<RateFn, String> {
    let mut parts = expr.split_whitespace();
    let kind = parts.next().ok_or("empty rate expression")?;
    let nums: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
    let nums = nums.map_err(|e| format!("bad number in rate expression: {e}"))?;
    match kind {
        "const" => match nums[..] {
            [c] => Ok(RateFn::Const(c)),
            _ => Err("const takes one value".into()),
        },
        "cos_offset" => match nums[..] {
            [amp, offset] => Ok(RateFn::CosOffset { amp, offset }),
            _ => Err("cos_offset takes two values".into()),
        },
        "sin_offset" => match nums[..] {
            [amp, offset] => Ok(RateFn::SinOffset { amp, offset }),
            _ => Err("sin_offset takes two values".into()),
        },
        "table" => {
            if nums.len() < 3 {
                Err("table needs at least 3 samples".into())
            } else {
                Ok(RateFn::Tabulated(nums))
            }
        }
        other => Err(format!("unknown rate expression '{other}'")),
    }
}

/// The two-site model file shipped as text (mirrors [`paper_n2_model`]).
pub fn paper_n2_model_text() -> &'static str {
    "# two-site prey-predator model with oscillating migration\n\
     n_sites = 2\n\
     eps = 0.1\n\
     sigma_p 2 1 = cos_offset 1 2\n\
     sigma_p 1 2 = sin_offset 1 2\n\
     sigma_q 2 1 = sin_offset 1 2\n\
     sigma_q 1 2 = cos_offset 1 2\n\
     a_p = 0.4 0.3\n\
     b_p = 0.2 0.1\n\
     a_q = 0.1 0.2\n\
     b_q = 0.5 0.3\n"
}
