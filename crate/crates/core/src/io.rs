//! Problem files.
//!
//! CSV: a header row `n,p`, then `n` rows of `p + 1` values, the response
//! followed by the design row. JSON: `{"problem": .., "truth": .., "seed": ..}`
//! with the last two optional.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrexError};
use crate::model::{GroundTruth, RegressionProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub problem: RegressionProblem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<GroundTruth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> TrexError {
    TrexError::Parse { line, msg: msg.into() }
}

pub fn parse_problem_csv(text: &str) -> Result<RegressionProblem> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let mut next = |expect: &str| -> Result<Option<(usize, csv::StringRecord)>> {
        match records.next() {
            None => Ok(None),
            Some(Ok(rec)) => {
                let line = rec.position().map_or(0, |p| p.line() as usize);
                Ok(Some((line, rec)))
            }
            Some(Err(e)) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Err(parse_err(line, format!("{expect}: {e}")))
            }
        }
    };

    let (line, header) = next("header")?.ok_or_else(|| parse_err(1, "empty file; expected header `n,p`"))?;
    if header.len() != 2 {
        return Err(parse_err(line, format!("header must be `n,p`, found {} fields", header.len())));
    }
    let count = |field: &str, name: &str| -> Result<usize> {
        field.parse::<usize>().map_err(|_| parse_err(line, format!("{name} must be a positive integer, got {field:?}")))
    };
    let n = count(&header[0], "n")?;
    let p = count(&header[1], "p")?;
    if n == 0 || p == 0 {
        return Err(parse_err(line, "n and p must be at least 1"));
    }

    let mut y = DVector::zeros(n);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let (line, rec) = next("row")?
            .ok_or_else(|| parse_err(line + i + 1, format!("expected {n} data rows, found {i}")))?;
        if rec.len() != p + 1 {
            return Err(parse_err(line, format!("expected {} values (y then {p} predictors), found {}", p + 1, rec.len())));
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| parse_err(line, format!("field {} is not a number: {field:?}", k + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("field {} is not finite", k + 1)));
            }
            if k == 0 {
                y[i] = v;
            } else {
                x[(i, k - 1)] = v;
            }
        }
    }
    if let Some((line, _)) = next("trailing row")? {
        return Err(parse_err(line, format!("unexpected data after {n} rows")));
    }
    RegressionProblem::new(x, y)
}

pub fn problem_to_csv(problem: &RegressionProblem) -> String {
    let mut out = format!("{},{}\n", problem.n(), problem.p());
    for i in 0..problem.n() {
        out.push_str(&problem.y()[i].to_string());
        for j in 0..problem.p() {
            out.push(',');
            out.push_str(&problem.x()[(i, j)].to_string());
        }
        out.push('\n');
    }
    out
}

/// Reads a problem file; JSON when the first non-blank character is `{`, CSV otherwise.
pub fn read_problem_file(path: &Path) -> Result<ProblemFile> {
    let text = fs::read_to_string(path)?;
    parse_problem_text(&text)
}

pub fn parse_problem_text(text: &str) -> Result<ProblemFile> {
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))
    } else {
        Ok(ProblemFile { problem: parse_problem_csv(text)?, truth: None, seed: None })
    }
}

pub fn write_problem_json(path: &Path, file: &ProblemFile) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(file)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, -0.5, 2.25, 0.0, 1e-3, 7.0]);
        let y = DVector::from_vec(vec![0.1, -2.0, 3.5]);
        let problem = RegressionProblem::new(x, y).unwrap();
        let text = problem_to_csv(&problem);
        assert!(text.starts_with("3,2\n0.1,1,-0.5\n"));
        assert_eq!(parse_problem_csv(&text).unwrap(), problem);
    }

    #[test]
    fn csv_errors_name_lines() {
        let cases = [
            ("", 1),
            ("2\n1,2\n", 1),
            ("2,1\n1,2\n1,x\n", 3),
            ("2,1\n1,2\n", 3),
            ("2,1\n1,2\n1,2,3\n", 3),
            ("1,1\n1,2\n5,5\n", 3),
            ("1,1\n1,inf\n", 2),
        ];
        for (text, line) in cases {
            match parse_problem_csv(text) {
                Err(TrexError::Parse { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
                other => panic!("{text:?}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn json_container() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let problem = RegressionProblem::new(x, DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let file = ProblemFile { problem, truth: None, seed: Some(4) };
        let text = serde_json::to_string(&file).unwrap();
        assert_eq!(parse_problem_text(&text).unwrap(), file);
        assert!(matches!(parse_problem_text("{\"problem\": 3}"), Err(TrexError::Parse { line: 1, .. })));
    }
}
