//! JSON specifications for distributions and distortions, and CSV sample ingestion.
//!
//! Distribution specs are objects tagged by `kind`:
//!
//! ```json
//! {"kind": "empirical", "values": [1, 2, 3, 4]}
//! {"kind": "atoms", "atoms": [[-1.25, 0.5], [0, 0.5]]}
//! {"kind": "point", "value": 7}
//! {"kind": "pareto_negative", "scale": 1, "index": 2}
//! {"kind": "pareto_positive", "tail_index": 3, "scale": 1}
//! {"kind": "transformed", "base": {...}, "op": {"scale": 2}}
//! {"kind": "comonotone_sum", "left": {...}, "right": {...}}
//! ```
//!
//! `op` is one of `{"scale": a}`, `{"shift": c}`, `"pos_part"`, `"neg_part"`, `"abs"`.
//!
//! Distortion specs use the same convention: `{"kind": "es", "alpha": 0.5}`,
//! `{"kind": "es_n", "n": 2, "alpha": 0.25}`, `{"kind": "var", "alpha": 0.5}`,
//! `{"kind": "threshold", "delta": 0.5}`, `{"kind": "expectation"}`,
//! `{"kind": "sqrt_example"}`, `{"kind": "piecewise", "pieces": [...]}` and
//! `{"kind": "spectral", "pieces": [...]}` where the latter lists the pieces of a spectral
//! density. A piece is `{"start", "end", "offset", "slope", "coefficient", "origin",
//! "width", "exponent"}` with value `offset + slope (u - origin) + coefficient ((u -
//! origin) / width)^exponent`; omitted fields default to zero, except `width` and
//! `exponent` which default to one.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distortions::{Distortion, Family, Piece, SpectralDensity};
use crate::distributions::{Atoms, Distribution, Kind, Transform};
use crate::error::{Error, Result};

fn default_index() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Empirical {
        values: Vec<f64>,
    },
    Atoms {
        atoms: Vec<(f64, f64)>,
    },
    Point {
        value: f64,
    },
    ParetoNegative {
        scale: f64,
        #[serde(default = "default_index")]
        index: f64,
    },
    ParetoPositive {
        tail_index: f64,
        scale: f64,
    },
    Transformed {
        base: Box<DistributionSpec>,
        op: TransformSpec,
    },
    ComonotoneSum {
        left: Box<DistributionSpec>,
        right: Box<DistributionSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformSpec {
    Scale(f64),
    Shift(f64),
    PosPart,
    NegPart,
    Abs,
}

impl From<TransformSpec> for Transform {
    fn from(t: TransformSpec) -> Self {
        match t {
            TransformSpec::Scale(a) => Transform::Scale(a),
            TransformSpec::Shift(c) => Transform::Shift(c),
            TransformSpec::PosPart => Transform::PosPart,
            TransformSpec::NegPart => Transform::NegPart,
            TransformSpec::Abs => Transform::Abs,
        }
    }
}

impl From<Transform> for TransformSpec {
    fn from(t: Transform) -> Self {
        match t {
            Transform::Scale(a) => TransformSpec::Scale(a),
            Transform::Shift(c) => TransformSpec::Shift(c),
            Transform::PosPart => TransformSpec::PosPart,
            Transform::NegPart => TransformSpec::NegPart,
            Transform::Abs => TransformSpec::Abs,
        }
    }
}

impl DistributionSpec {
    pub fn build(&self) -> Result<Distribution> {
        match self {
            DistributionSpec::Empirical { values } => Distribution::empirical(values),
            DistributionSpec::Atoms { atoms } => Atoms::from_unsorted(atoms.clone()).map(Into::into),
            DistributionSpec::Point { value } => Distribution::point_mass(*value),
            DistributionSpec::ParetoNegative { scale, index } => {
                Distribution::pareto_negative_with_index(*scale, *index)
            }
            DistributionSpec::ParetoPositive { tail_index, scale } => {
                Distribution::pareto_positive(*tail_index, *scale)
            }
            DistributionSpec::Transformed { base, op } => base.build()?.transform((*op).into()),
            DistributionSpec::ComonotoneSum { left, right } => {
                Ok(left.build()?.comonotone_sum(&right.build()?))
            }
        }
    }

    /// The JSON description of an existing distribution. Discrete laws come back as atoms.
    pub fn of(dist: &Distribution) -> Self {
        match dist.kind() {
            Kind::Atoms(a) if a.len() == 1 => DistributionSpec::Point { value: a.values()[0] },
            Kind::Atoms(a) => DistributionSpec::Atoms {
                atoms: a.iter().collect(),
            },
            Kind::ParetoNegative { scale, index } => DistributionSpec::ParetoNegative {
                scale: *scale,
                index: *index,
            },
            Kind::ParetoPositive { tail_index, scale } => DistributionSpec::ParetoPositive {
                tail_index: *tail_index,
                scale: *scale,
            },
            Kind::Transformed { base, op } => DistributionSpec::Transformed {
                base: Box::new(Self::of(base)),
                op: (*op).into(),
            },
            Kind::ComonotoneSum(a, b) => DistributionSpec::ComonotoneSum {
                left: Box::new(Self::of(a)),
                right: Box::new(Self::of(b)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistortionSpec {
    Expectation,
    Var { alpha: f64 },
    Es { alpha: f64 },
    EsN { n: u32, alpha: f64 },
    Threshold { delta: f64 },
    SqrtExample,
    Piecewise { pieces: Vec<Piece> },
    Spectral { pieces: Vec<Piece> },
}

impl DistortionSpec {
    pub fn build(&self) -> Result<Distortion> {
        match self {
            DistortionSpec::Expectation => Ok(Distortion::expectation()),
            DistortionSpec::Var { alpha } => Distortion::value_at_risk(*alpha),
            DistortionSpec::Es { alpha } => Distortion::expected_shortfall(*alpha),
            DistortionSpec::EsN { n, alpha } => Distortion::expected_shortfall_order(*n, *alpha),
            DistortionSpec::Threshold { delta } => Distortion::threshold(*delta),
            DistortionSpec::SqrtExample => Ok(Distortion::sqrt_example()),
            DistortionSpec::Piecewise { pieces } => Distortion::from_pieces(pieces.clone()),
            DistortionSpec::Spectral { pieces } => SpectralDensity::new(pieces.clone())?.distortion(),
        }
    }

    /// The JSON description of an existing distortion; named families keep their tag.
    pub fn of(d: &Distortion) -> Self {
        match d.family() {
            Family::Expectation => DistortionSpec::Expectation,
            Family::ValueAtRisk { alpha } => DistortionSpec::Var { alpha },
            Family::ExpectedShortfall { alpha } => DistortionSpec::Es { alpha },
            Family::ExpectedShortfallOrder { n, alpha } => DistortionSpec::EsN { n, alpha },
            Family::Threshold { delta } => DistortionSpec::Threshold { delta },
            Family::SqrtExample => DistortionSpec::SqrtExample,
            Family::Piecewise | Family::Spectral => DistortionSpec::Piecewise {
                pieces: d.pieces().to_vec(),
            },
        }
    }
}

fn json_error(e: serde_json::Error) -> Error {
    let line = (e.line() > 0).then_some(e.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn parse_distribution_json(text: &str) -> Result<Distribution> {
    serde_json::from_str::<DistributionSpec>(text)
        .map_err(json_error)?
        .build()
}

pub fn parse_distortion_json(text: &str) -> Result<Distortion> {
    serde_json::from_str::<DistortionSpec>(text).map_err(json_error)?.build()
}

pub fn distribution_to_json(dist: &Distribution) -> String {
    serde_json::to_string(&DistributionSpec::of(dist)).expect("specs serialize")
}

pub fn distortion_to_json(d: &Distortion) -> String {
    serde_json::to_string(&DistortionSpec::of(d)).expect("specs serialize")
}

/// Reads a sample from CSV.
///
/// Each record is `value` or `value,weight`; all records must have the same shape. Lines
/// starting with `#` are comments, a non-numeric first record is taken as a header, and
/// repeated values are merged into one atom. Weights are normalized to sum to one.
pub fn read_csv<R: Read>(reader: R) -> Result<Distribution> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<(f64, Option<f64>)> = Vec::new();
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        let fields: Vec<&str> = record.iter().filter(|f| !f.is_empty()).collect();
        if fields.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: Some(line),
            message,
        };
        if fields.len() > 2 {
            return Err(parse_err(format!("expected 'value' or 'value,weight', found {} fields", fields.len())));
        }
        let parsed: Vec<std::result::Result<f64, _>> = fields.iter().map(|f| f.parse::<f64>()).collect();
        if rows.is_empty() && width.is_none() && parsed.iter().any(|p| p.is_err()) {
            // header
            width = Some(fields.len());
            continue;
        }
        let mut nums = Vec::with_capacity(2);
        for (f, p) in fields.iter().zip(parsed) {
            let v = p.map_err(|_| parse_err(format!("'{f}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value '{f}'")));
            }
            nums.push(v);
        }
        match width {
            Some(w) if w != nums.len() => {
                return Err(parse_err(format!("expected {w} fields, found {}", nums.len())));
            }
            _ => width = Some(nums.len()),
        }
        if let Some(&w) = nums.get(1) {
            if w < 0.0 {
                return Err(parse_err(format!("negative weight {w}")));
            }
        }
        rows.push((nums[0], nums.get(1).copied()));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: None,
            message: "no data rows".into(),
        });
    }
    if rows[0].1.is_none() {
        let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
        return Distribution::empirical(&values);
    }
    let total: f64 = rows.iter().map(|r| r.1.unwrap()).sum();
    if total <= 0.0 {
        return Err(Error::Parse {
            line: None,
            message: "weights sum to zero".into(),
        });
    }
    let pairs = rows.iter().map(|&(v, w)| (v, w.unwrap() / total)).collect();
    Atoms::from_unsorted(pairs).map(Into::into)
}

pub fn read_csv_file(path: &Path) -> Result<Distribution> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(file)
}

/// A distribution from inline JSON, a `.json` file or a CSV file.
pub fn load_distribution(arg: &str) -> Result<Distribution> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') {
        return parse_distribution_json(trimmed);
    }
    let path = Path::new(arg);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        parse_distribution_json(&text)
    } else {
        read_csv_file(path)
    }
}

/// A distortion from inline JSON or a `.json` file.
pub fn load_distortion(arg: &str) -> Result<Distortion> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') {
        return parse_distortion_json(trimmed);
    }
    let text = std::fs::read_to_string(arg).map_err(|e| Error::Io(format!("{arg}: {e}")))?;
    parse_distortion_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_single_column_with_header_and_comments() {
        let text = "# losses\nvalue\n1\n2\n\n3\n4\n";
        let d = read_csv(text.as_bytes()).unwrap();
        assert_eq!(d, Distribution::empirical(&[1.0, 2.0, 3.0, 4.0]).unwrap());
    }

    #[test]
    fn csv_weights_are_normalized_and_merged() {
        let d = read_csv("1,1\n2,2\n1,1\n".as_bytes()).unwrap();
        let a = d.as_atoms().unwrap();
        assert_eq!(a.values(), &[1.0, 2.0]);
        assert_eq!(a.probabilities(), &[0.5, 0.5]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let err = read_csv("1\n2\nNaN\n".as_bytes()).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: Some(3),
                message: "non-finite value 'NaN'".into()
            }
        );
        let err = read_csv("1\ninf\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(2), .. }));
        let err = read_csv("1\nabc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(2), .. }));
        let err = read_csv("1,1\n2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(2), .. }));
        assert!(read_csv("# nothing\n".as_bytes()).is_err());
    }

    #[test]
    fn distribution_specs_round_trip() {
        let specs = [
            r#"{"kind":"empirical","values":[1,2,2,5]}"#,
            r#"{"kind":"pareto_negative","scale":1}"#,
            r#"{"kind":"pareto_positive","tail_index":3,"scale":1}"#,
            r#"{"kind":"transformed","base":{"kind":"pareto_negative","scale":2,"index":1},"op":{"shift":3}}"#,
            r#"{"kind":"transformed","base":{"kind":"pareto_negative","scale":1},"op":"abs"}"#,
            r#"{"kind":"comonotone_sum","left":{"kind":"pareto_negative","scale":1},"right":{"kind":"pareto_positive","tail_index":3,"scale":1}}"#,
        ];
        for s in specs {
            let d = parse_distribution_json(s).unwrap();
            let back = parse_distribution_json(&distribution_to_json(&d)).unwrap();
            assert_eq!(d, back, "{s}");
        }
    }

    #[test]
    fn distortion_specs_round_trip() {
        let specs = [
            r#"{"kind":"expectation"}"#,
            r#"{"kind":"var","alpha":0.5}"#,
            r#"{"kind":"es","alpha":0.5}"#,
            r#"{"kind":"es_n","n":3,"alpha":0.2}"#,
            r#"{"kind":"threshold","delta":0.5}"#,
            r#"{"kind":"sqrt_example"}"#,
            r#"{"kind":"piecewise","pieces":[{"start":0,"end":0.5,"slope":0.5},{"start":0.5,"end":1,"offset":0.25,"slope":1.5,"origin":0.5}]}"#,
            r#"{"kind":"spectral","pieces":[{"start":0,"end":1,"coefficient":2}]}"#,
        ];
        for s in specs {
            let d = parse_distortion_json(s).unwrap();
            let back = parse_distortion_json(&distortion_to_json(&d)).unwrap();
            assert_eq!(d.pieces(), back.pieces(), "{s}");
        }
    }

    #[test]
    fn bad_specs() {
        assert!(matches!(parse_distortion_json(r#"{"kind":"es","alpha":1.5}"#), Err(Error::Domain(_))));
        assert!(matches!(parse_distortion_json(r#"{"kind":"nope"}"#), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_distortion_json(r#"{"kind":"es","alpha":0.5,"extra":1}"#),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_distribution_json("{\n\"kind\": \"atoms\",\n\"atoms\": [[1, 0.5], [2, 0.6]]\n}"),
            Err(Error::InvalidDistribution(_))
        ));
        let err = parse_distribution_json("{\n\"kind\": \"point\",\n\"value\": x\n}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(3), .. }));
    }
}
