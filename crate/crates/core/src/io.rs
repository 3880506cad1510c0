//! Text file formats: history files, chain and summary CSVs, truth and
//! study-score CSVs, and scenario configs.
//!
//! Every format round-trips: writing then reading reproduces the in-memory
//! value. Floats are written with the shortest representation that parses
//! back to the same bits, which also makes repeated runs byte-comparable.
//! Lines whose first non-blank character is `#` are comments.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::{ParamSummary, PosteriorSummary, ReplicateTruth, StudyScore};
use crate::error::{Error, Result};
use crate::histories::{parse_history, EncounterHistory, ObservedData};
use crate::sampler::Chain;
use crate::scalar::Real;
use crate::simulator::SimScenario;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Lines of a text file with 1-based numbers, comments and blanks skipped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

/// Read a history file: one `<history>[,<count>]` record per line, count
/// defaulting to 1, occasion count inferred from the first record.
pub fn read_history_file(path: impl AsRef<Path>) -> Result<ObservedData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut records: Vec<(EncounterHistory, u64)> = Vec::new();
    let mut t = None;
    for (line_no, line) in content_lines(&text) {
        let (hist_text, count_text) = match line.split_once(',') {
            Some((h, c)) => (h.trim(), Some(c.trim())),
            None => (line, None),
        };
        let t = *t.get_or_insert(hist_text.chars().count());
        let history = parse_history(hist_text, t)
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let count = match count_text {
            Some(c) => c
                .parse::<u64>()
                .map_err(|_| parse_err(path, line_no, format!("invalid count {c:?}")))?,
            None => 1,
        };
        if count == 0 {
            return Err(parse_err(path, line_no, "count must be positive"));
        }
        records.push((history, count));
    }
    if records.is_empty() {
        return Err(Error::EmptyData);
    }
    ObservedData::from_records(records)
}

/// Write a history file, one `<history>,<count>` record per line.
pub fn write_history_file(path: impl AsRef<Path>, data: &ObservedData) -> Result<()> {
    let mut out = String::new();
    for (h, c) in data.histories().iter().zip(data.counts()) {
        writeln!(out, "{h},{c}").unwrap();
    }
    write_atomic(path.as_ref(), &out)
}

fn fmt_float<F: Real>(v: F) -> String {
    format!("{}", v.as_f64())
}

fn parse_float<F: Real>(path: &Path, line: usize, text: &str) -> Result<F> {
    text.parse::<f64>()
        .map(F::of)
        .map_err(|_| parse_err(path, line, format!("invalid number {text:?}")))
}

/// Write a chain CSV: header `sweep,<param names>`, one row per retained
/// sweep.
pub fn write_chain_csv<F: Real>(path: impl AsRef<Path>, chain: &Chain<F>) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "sweep,{}", chain.names().join(",")).unwrap();
    for (i, sweep) in chain.sweeps().iter().enumerate() {
        write!(out, "{sweep}").unwrap();
        for j in 0..chain.names().len() {
            write!(out, ",{}", fmt_float(chain.col_at(j)[i])).unwrap();
        }
        out.push('\n');
    }
    write_atomic(path.as_ref(), &out)
}

/// Read a chain CSV written by [`write_chain_csv`].
pub fn read_chain_csv<F: Real>(path: impl AsRef<Path>) -> Result<Chain<F>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut lines = content_lines(&text);
    let (line_no, header) = lines.next().ok_or(Error::EmptyData)?;
    let mut fields = header.split(',');
    if fields.next() != Some("sweep") {
        return Err(parse_err(path, line_no, "header must start with sweep"));
    }
    let names: Vec<String> = fields.map(str::to_string).collect();
    if names.is_empty() {
        return Err(parse_err(path, line_no, "no parameter columns"));
    }
    let mut sweeps = Vec::new();
    let mut cols: Vec<Vec<F>> = vec![Vec::new(); names.len()];
    for (line_no, line) in lines {
        let mut fields = line.split(',');
        let sweep_text = fields.next().unwrap();
        let sweep = sweep_text
            .parse::<u64>()
            .map_err(|_| parse_err(path, line_no, format!("invalid sweep {sweep_text:?}")))?;
        sweeps.push(sweep);
        let mut got = 0;
        for (j, field) in fields.enumerate() {
            if j >= cols.len() {
                return Err(parse_err(path, line_no, "too many fields"));
            }
            cols[j].push(parse_float(path, line_no, field)?);
            got += 1;
        }
        if got != cols.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} values, got {got}", cols.len()),
            ));
        }
    }
    Chain::from_columns(names, sweeps, cols)
}

const SUMMARY_HEADER: &str = "parameter,mean,sd,lower,upper,psrf,psrf_degenerate,mcse,ess";

/// Write a posterior summary CSV, one row per parameter.
pub fn write_summary_csv<F: Real>(
    path: impl AsRef<Path>,
    summary: &PosteriorSummary<F>,
) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{SUMMARY_HEADER}").unwrap();
    for p in summary.params() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.name,
            fmt_float(p.mean),
            fmt_float(p.sd),
            fmt_float(p.lower),
            fmt_float(p.upper),
            fmt_float(p.psrf),
            p.psrf_degenerate,
            fmt_float(p.mcse),
            fmt_float(p.ess),
        )
        .unwrap();
    }
    write_atomic(path.as_ref(), &out)
}

/// Read a posterior summary CSV written by [`write_summary_csv`].
pub fn read_summary_csv<F: Real>(path: impl AsRef<Path>) -> Result<PosteriorSummary<F>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut lines = content_lines(&text);
    let (line_no, header) = lines.next().ok_or(Error::EmptyData)?;
    if header != SUMMARY_HEADER {
        return Err(parse_err(path, line_no, "unexpected summary header"));
    }
    let mut params = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 9 fields, got {}", fields.len()),
            ));
        }
        let degenerate = match fields[6] {
            "true" => true,
            "false" => false,
            other => {
                return Err(parse_err(path, line_no, format!("invalid flag {other:?}")))
            }
        };
        params.push(ParamSummary {
            name: fields[0].to_string(),
            mean: parse_float(path, line_no, fields[1])?,
            sd: parse_float(path, line_no, fields[2])?,
            lower: parse_float(path, line_no, fields[3])?,
            upper: parse_float(path, line_no, fields[4])?,
            psrf: parse_float(path, line_no, fields[5])?,
            psrf_degenerate: degenerate,
            mcse: parse_float(path, line_no, fields[7])?,
            ess: parse_float(path, line_no, fields[8])?,
        });
    }
    PosteriorSummary::new(params)
}

/// Write replicate truth values, one `name,value` row per parameter using
/// the chain column names.
pub fn write_truth_csv<F: Real>(path: impl AsRef<Path>, truth: &ReplicateTruth<F>) -> Result<()> {
    let mut out = String::from("parameter,value\n");
    let mut family = |prefix: &str, values: &[F]| {
        for (i, v) in values.iter().enumerate() {
            writeln!(out, "{prefix}_{},{}", i + 1, fmt_float(*v)).unwrap();
        }
    };
    family("phi", &truth.phi);
    family("gamma", &truth.recruitment);
    family("lambda", &truth.growth);
    write_atomic(path.as_ref(), &out)
}

/// Read a truth CSV written by [`write_truth_csv`].
pub fn read_truth_csv<F: Real>(path: impl AsRef<Path>) -> Result<ReplicateTruth<F>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut lines = content_lines(&text);
    let (line_no, header) = lines.next().ok_or(Error::EmptyData)?;
    if header != "parameter,value" {
        return Err(parse_err(path, line_no, "unexpected truth header"));
    }
    let mut phi = Vec::new();
    let mut gamma = Vec::new();
    let mut lambda = Vec::new();
    for (line_no, line) in lines {
        let (name, value) = line
            .split_once(',')
            .ok_or_else(|| parse_err(path, line_no, "expected name,value"))?;
        let v: F = parse_float(path, line_no, value.trim())?;
        let (prefix, index) = name
            .rsplit_once('_')
            .ok_or_else(|| parse_err(path, line_no, format!("invalid name {name:?}")))?;
        let idx: usize = index
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid index {index:?}")))?;
        let family = match prefix {
            "phi" => &mut phi,
            "gamma" => &mut gamma,
            "lambda" => &mut lambda,
            other => {
                return Err(parse_err(path, line_no, format!("unknown family {other:?}")))
            }
        };
        if idx != family.len() + 1 {
            return Err(parse_err(path, line_no, format!("out-of-order index {idx}")));
        }
        family.push(v);
    }
    if phi.is_empty() && gamma.is_empty() && lambda.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(ReplicateTruth {
        phi,
        recruitment: gamma,
        growth: lambda,
    })
}

const SCORE_HEADER: &str = "family,mse,relative_mse,median_width,coverage,n";

/// Write a study-score CSV, one row per parameter family; the relative MSE
/// column is blank when no reference model was scored.
pub fn write_score_csv<F: Real>(
    path: impl AsRef<Path>,
    score: &StudyScore<F>,
    relative: Option<[F; 3]>,
) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{SCORE_HEADER}").unwrap();
    let rows = [
        ("phi", &score.phi),
        ("recruitment", &score.recruitment),
        ("growth", &score.growth),
    ];
    for (i, (name, fam)) in rows.iter().enumerate() {
        let rel = relative.map_or(String::new(), |r| fmt_float(r[i]));
        writeln!(
            out,
            "{name},{},{rel},{},{},{}",
            fmt_float(fam.mse),
            fmt_float(fam.median_width),
            fmt_float(fam.coverage),
            fam.n,
        )
        .unwrap();
    }
    write_atomic(path.as_ref(), &out)
}

/// Read a study-score CSV written by [`write_score_csv`].
pub fn read_score_csv<F: Real>(
    path: impl AsRef<Path>,
) -> Result<(StudyScore<F>, Option<[F; 3]>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut lines = content_lines(&text);
    let (line_no, header) = lines.next().ok_or(Error::EmptyData)?;
    if header != SCORE_HEADER {
        return Err(parse_err(path, line_no, "unexpected score header"));
    }
    let mut families = Vec::new();
    let mut relative = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 6 fields, got {}", fields.len()),
            ));
        }
        if !fields[2].is_empty() {
            relative.push(parse_float::<F>(path, line_no, fields[2])?);
        }
        families.push((
            fields[0].to_string(),
            crate::diagnostics::FamilyScore {
                mse: parse_float(path, line_no, fields[1])?,
                median_width: parse_float(path, line_no, fields[3])?,
                coverage: parse_float(path, line_no, fields[4])?,
                n: fields[5]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("invalid n {:?}", fields[5])))?,
            },
        ));
    }
    let names: Vec<&str> = families.iter().map(|(n, _)| n.as_str()).collect();
    if names != ["phi", "recruitment", "growth"] {
        return Err(parse_err(path, 0, "score rows must cover the three families"));
    }
    if !relative.is_empty() && relative.len() != 3 {
        return Err(parse_err(path, 0, "relative MSE must be present for all rows or none"));
    }
    let mut it = families.into_iter().map(|(_, f)| f);
    let score = StudyScore {
        phi: it.next().unwrap(),
        recruitment: it.next().unwrap(),
        growth: it.next().unwrap(),
    };
    let relative = if relative.is_empty() {
        None
    } else {
        Some([relative[0], relative[1], relative[2]])
    };
    Ok((score, relative))
}

/// Parse a scenario config: `key = value` lines over the keys `t`,
/// `target_observed`, `rho_l`, `rho_r`, `rho_s`, `rho_b`, and per family
/// `phi_loc`/`phi_scale` etc.; `phi_center` and `p_center` give the
/// transformed location as a probability, `gamma_center` as a rate.
/// Unset keys keep the first simulation study's defaults.
pub fn parse_scenario_config<F: Real>(path: impl AsRef<Path>) -> Result<SimScenario<F>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut s = SimScenario::study_one();
    for (line_no, line) in content_lines(&text) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, line_no, "expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        let float = || -> Result<F> { parse_float(path, line_no, value) };
        let prob_loc = |v: F| (v / (F::one() - v)).ln();
        match key {
            "t" => {
                s.t = value
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("invalid t {value:?}")))?
            }
            "target_observed" => {
                s.target_observed = value.parse().map_err(|_| {
                    parse_err(path, line_no, format!("invalid target {value:?}"))
                })?
            }
            "rho_l" => s.rho[0] = float()?,
            "rho_r" => s.rho[1] = float()?,
            "rho_s" => s.rho[2] = float()?,
            "rho_b" => s.rho[3] = float()?,
            "phi_loc" => s.phi.0 = float()?,
            "phi_center" => s.phi.0 = prob_loc(float()?),
            "phi_scale" => s.phi.1 = float()?,
            "p_loc" => s.p.0 = float()?,
            "p_center" => s.p.0 = prob_loc(float()?),
            "p_scale" => s.p.1 = float()?,
            "gamma_loc" => s.gamma.0 = float()?,
            "gamma_center" => s.gamma.0 = float()?.ln(),
            "gamma_scale" => s.gamma.1 = float()?,
            other => return Err(parse_err(path, line_no, format!("unknown key {other:?}"))),
        }
    }
    s.validate()?;
    Ok(s)
}

/// Write a scenario config with every key explicit, on the transformed
/// location scale.
pub fn write_scenario_config<F: Real>(
    path: impl AsRef<Path>,
    scenario: &SimScenario<F>,
) -> Result<()> {
    let s = scenario;
    let mut out = String::new();
    writeln!(out, "t = {}", s.t).unwrap();
    writeln!(out, "target_observed = {}", s.target_observed).unwrap();
    writeln!(out, "rho_l = {}", fmt_float(s.rho[0])).unwrap();
    writeln!(out, "rho_r = {}", fmt_float(s.rho[1])).unwrap();
    writeln!(out, "rho_s = {}", fmt_float(s.rho[2])).unwrap();
    writeln!(out, "rho_b = {}", fmt_float(s.rho[3])).unwrap();
    writeln!(out, "phi_loc = {}", fmt_float(s.phi.0)).unwrap();
    writeln!(out, "phi_scale = {}", fmt_float(s.phi.1)).unwrap();
    writeln!(out, "p_loc = {}", fmt_float(s.p.0)).unwrap();
    writeln!(out, "p_scale = {}", fmt_float(s.p.1)).unwrap();
    writeln!(out, "gamma_loc = {}", fmt_float(s.gamma.0)).unwrap();
    writeln!(out, "gamma_scale = {}", fmt_float(s.gamma.1)).unwrap();
    write_atomic(path.as_ref(), &out)
}
