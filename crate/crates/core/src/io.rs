//! JSON problem documents and atomic file output.
//!
//! Numbers are written as decimal strings (`"-0.5"`, `"0.25"`) so that data
//! survives editing by hand and round-trips exactly; on input both strings
//! and plain JSON numbers are accepted. Matrices are the row-major upper
//! triangle, i.e. the packed storage of [`SymMat`].

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{build_family, Centers, ConstraintFamily, ConstraintSet, GeoCop, ParabolaSpec};
use crate::symmat::{packed_len, SymMat};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSpec {
    Matrix(SymMat),
    Family(ConstraintFamily),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DocOptions {
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemDocument {
    pub schema_version: u64,
    pub n: usize,
    pub q: SymMat,
    pub h: SymMat,
    pub constraints: Vec<ConstraintSpec>,
    /// Rows of `L` for the restriction `x = L y`.
    pub congruence: Option<Vec<Vec<f64>>>,
    pub options: DocOptions,
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_num(x: f64) -> String {
    format!("{x}")
}

fn num(v: &Value, path: &str) -> Result<f64> {
    let x = match v {
        Value::String(s) => s
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::schema(path, format!("`{s}` is not a decimal number")))?,
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::schema(path, "number out of range"))?,
        _ => return Err(Error::schema(path, "expected a decimal string or number")),
    };
    if !x.is_finite() {
        return Err(Error::schema(path, "number must be finite"));
    }
    Ok(x)
}

fn uint(v: &Value, path: &str) -> Result<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .ok_or_else(|| Error::schema(path, "expected a non-negative integer"))
}

fn array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::schema(path, "expected an array"))
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a serde_json::Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::schema(path, "expected an object"))
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::schema(format!("{path}.{key}"), "missing field"))
}

fn nums(v: &Value, path: &str) -> Result<Vec<f64>> {
    array(v, path)?
        .iter()
        .enumerate()
        .map(|(k, x)| num(x, &format!("{path}[{k}]")))
        .collect()
}

fn rows(v: &Value, path: &str) -> Result<Vec<Vec<f64>>> {
    array(v, path)?
        .iter()
        .enumerate()
        .map(|(k, r)| nums(r, &format!("{path}[{k}]")))
        .collect()
}

fn matrix(v: &Value, n: usize, path: &str) -> Result<SymMat> {
    let data = nums(v, path)?;
    if data.len() != packed_len(n) {
        return Err(Error::schema(
            path,
            format!(
                "expected {} upper-triangle entries for n = {n}, found {}",
                packed_len(n),
                data.len()
            ),
        ));
    }
    SymMat::from_packed(n, data)
}

fn family(v: &Value, path: &str) -> Result<ConstraintFamily> {
    let obj = object(v, path)?;
    let kind = field(obj, "kind", path)?
        .as_str()
        .ok_or_else(|| Error::schema(format!("{path}.kind"), "expected a string"))?;
    let f = |k: &str| field(obj, k, path);
    let p = |k: &str| format!("{path}.{k}");
    Ok(match kind {
        "ball_grid" => {
            let cv = object(f("centers")?, &p("centers"))?;
            let centers = match (cv.get("list"), cv.get("lattice")) {
                (Some(l), None) => Centers::List(rows(l, &p("centers.list"))?),
                (None, Some(l)) => {
                    let lp = p("centers.lattice");
                    let lo = object(l, &lp)?;
                    Centers::Lattice {
                        dim: uint(field(lo, "dim", &lp)?, &format!("{lp}.dim"))? as usize,
                        step: num(field(lo, "step", &lp)?, &format!("{lp}.step"))?,
                        bound: num(field(lo, "bound", &lp)?, &format!("{lp}.bound"))?,
                    }
                }
                _ => {
                    return Err(Error::schema(
                        p("centers"),
                        "expected exactly one of `list` or `lattice`",
                    ))
                }
            };
            ConstraintFamily::BallGrid {
                centers,
                radius: num(f("radius")?, &p("radius"))?,
            }
        }
        "hyperbola" => ConstraintFamily::Hyperbola {
            breakpoints: nums(f("breakpoints")?, &p("breakpoints"))?,
            r2: num(f("r2")?, &p("r2"))?,
            limit: match obj.get("limit") {
                None | Some(Value::Null) => None,
                Some(x) => Some(num(x, &p("limit"))?),
            },
        },
        "parabola" => {
            let members = array(f("members")?, &p("members"))?
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let mp = format!("{path}.members[{k}]");
                    let mo = object(m, &mp)?;
                    Ok(ParabolaSpec {
                        lambdas: nums(field(mo, "lambdas", &mp)?, &format!("{mp}.lambdas"))?,
                        orientation: match mo.get("orientation") {
                            None => 1.0,
                            Some(x) => num(x, &format!("{mp}.orientation"))?,
                        },
                        transform: match mo.get("transform") {
                            None | Some(Value::Null) => None,
                            Some(x) => Some(rows(x, &format!("{mp}.transform"))?),
                        },
                    })
                })
                .collect::<Result<_>>()?;
            ConstraintFamily::Parabola { members }
        }
        "generalized_hyperbola" => ConstraintFamily::GeneralizedHyperbola {
            lambda: nums(f("lambda")?, &p("lambda"))?,
            ell: uint(f("ell")?, &p("ell"))? as usize,
            sigmas: nums(f("sigmas")?, &p("sigmas"))?,
        },
        other => {
            return Err(Error::schema(
                p("kind"),
                format!("unknown family kind `{other}`"),
            ))
        }
    })
}

impl ProblemDocument {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::schema("$", "input is not UTF-8"))?;
        let v: Value = serde_json::from_str(text)
            .map_err(|e| Error::schema("$", format!("invalid JSON: {e}")))?;
        let root = object(&v, "$")?;
        let schema_version = uint(field(root, "schema_version", "$")?, "$.schema_version")?;
        if schema_version != SCHEMA_VERSION {
            return Err(Error::schema(
                "$.schema_version",
                format!("unsupported version {schema_version}"),
            ));
        }
        let n = uint(field(root, "n", "$")?, "$.n")? as usize;
        if n == 0 {
            return Err(Error::schema("$.n", "n must be positive"));
        }
        let q = matrix(field(root, "Q", "$")?, n, "$.Q")?;
        let h = matrix(field(root, "H", "$")?, n, "$.H")?;
        let mut constraints = Vec::new();
        if let Some(cs) = root.get("constraints") {
            for (k, c) in array(cs, "$.constraints")?.iter().enumerate() {
                let cp = format!("$.constraints[{k}]");
                let co = object(c, &cp)?;
                constraints.push(match (co.get("matrix"), co.get("family")) {
                    (Some(m), None) => ConstraintSpec::Matrix(matrix(m, n, &format!("{cp}.matrix"))?),
                    (None, Some(f)) => ConstraintSpec::Family(family(f, &format!("{cp}.family"))?),
                    _ => {
                        return Err(Error::schema(cp, "expected exactly one of `matrix` or `family`"))
                    }
                });
            }
        }
        let congruence = match root.get("congruence") {
            None | Some(Value::Null) => None,
            Some(l) => {
                let l = rows(l, "$.congruence")?;
                let cols = l.first().map_or(0, |r| r.len());
                if l.len() != n || cols == 0 || l.iter().any(|r| r.len() != cols) {
                    return Err(Error::schema(
                        "$.congruence",
                        format!("expected {n} rows of equal positive length"),
                    ));
                }
                Some(l)
            }
        };
        let mut options = DocOptions::default();
        if let Some(o) = root.get("options") {
            let o = object(o, "$.options")?;
            if let Some(t) = o.get("tol") {
                let t = num(t, "$.options.tol")?;
                if !(t > 0.0) {
                    return Err(Error::schema("$.options.tol", "tolerance must be positive"));
                }
                options.tol = Some(t);
            }
            if let Some(s) = o.get("seed") {
                options.seed = Some(uint(s, "$.options.seed")?);
            }
        }
        let doc = ProblemDocument {
            schema_version,
            n,
            q,
            h,
            constraints,
            congruence,
            options,
        };
        // Surface family errors at parse time, with their path.
        for (k, c) in doc.constraints.iter().enumerate() {
            if let ConstraintSpec::Family(f) = c {
                build_family(f, n).map_err(|e| {
                    Error::schema(format!("$.constraints[{k}].family"), e.to_string())
                })?;
            }
        }
        Ok(doc)
    }

    /// Realizes every constraint into a [`GeoCop`].
    pub fn to_geocop(&self) -> Result<GeoCop> {
        let mut members = Vec::new();
        let mut names = Vec::new();
        for c in &self.constraints {
            match c {
                ConstraintSpec::Matrix(m) => {
                    members.push(m.clone());
                    names.push("explicit".to_string());
                }
                ConstraintSpec::Family(f) => {
                    let s = build_family(f, self.n)?;
                    names.push(s.provenance.clone().unwrap_or_default());
                    members.extend(s.members);
                }
            }
        }
        names.dedup();
        let mut set = ConstraintSet::new(self.n, members)?;
        if !names.is_empty() {
            set = set.with_provenance(names.join("+"));
        }
        let p = GeoCop::new(self.q.clone(), self.h.clone(), set)?;
        Ok(match &self.congruence {
            Some(l) => p.with_congruence(l.clone()),
            None => p,
        })
    }

    /// Document with every member written out explicitly.
    pub fn from_geocop(p: &GeoCop) -> Self {
        ProblemDocument {
            schema_version: SCHEMA_VERSION,
            n: p.n,
            q: p.q.clone(),
            h: p.h.clone(),
            constraints: p
                .bset
                .members
                .iter()
                .cloned()
                .map(ConstraintSpec::Matrix)
                .collect(),
            congruence: p.congruence.clone(),
            options: DocOptions::default(),
        }
    }

    pub fn to_value(&self) -> Value {
        let mut root = BTreeMap::new();
        root.insert("schema_version", Value::from(self.schema_version));
        root.insert("n", Value::from(self.n as u64));
        root.insert("Q", mat_value(&self.q));
        root.insert("H", mat_value(&self.h));
        root.insert(
            "constraints",
            Value::Array(
                self.constraints
                    .iter()
                    .map(|c| match c {
                        ConstraintSpec::Matrix(m) => obj([("matrix", mat_value(m))]),
                        ConstraintSpec::Family(f) => obj([("family", family_value(f))]),
                    })
                    .collect(),
            ),
        );
        if let Some(l) = &self.congruence {
            root.insert("congruence", rows_value(l));
        }
        let mut o = BTreeMap::new();
        if let Some(t) = self.options.tol {
            o.insert("tol", Value::String(fmt_num(t)));
        }
        if let Some(s) = self.options.seed {
            o.insert("seed", Value::from(s));
        }
        if !o.is_empty() {
            root.insert("options", obj(o));
        }
        obj(root)
    }

    /// Canonical text: sorted keys, two-space indent, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("values serialize");
        s.push('\n');
        s
    }
}

fn obj<'a>(entries: impl IntoIterator<Item = (&'a str, Value)>) -> Value {
    Value::Object(
        entries
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    )
}

fn nums_value(x: &[f64]) -> Value {
    Value::Array(x.iter().map(|v| Value::String(fmt_num(*v))).collect())
}

fn rows_value(r: &[Vec<f64>]) -> Value {
    Value::Array(r.iter().map(|row| nums_value(row)).collect())
}

fn mat_value(m: &SymMat) -> Value {
    nums_value(m.packed())
}

fn family_value(f: &ConstraintFamily) -> Value {
    let s = |x: f64| Value::String(fmt_num(x));
    match f {
        ConstraintFamily::Explicit { members } => obj([
            ("kind", Value::from("explicit")),
            ("members", Value::Array(members.iter().map(mat_value).collect())),
        ]),
        ConstraintFamily::BallGrid { centers, radius } => {
            let c = match centers {
                Centers::List(p) => obj([("list", rows_value(p))]),
                Centers::Lattice { dim, step, bound } => obj([(
                    "lattice",
                    obj([
                        ("dim", Value::from(*dim as u64)),
                        ("step", s(*step)),
                        ("bound", s(*bound)),
                    ]),
                )]),
            };
            obj([
                ("kind", Value::from("ball_grid")),
                ("centers", c),
                ("radius", s(*radius)),
            ])
        }
        ConstraintFamily::Hyperbola {
            breakpoints,
            r2,
            limit,
        } => {
            let mut m = vec![
                ("kind", Value::from("hyperbola")),
                ("breakpoints", nums_value(breakpoints)),
                ("r2", s(*r2)),
            ];
            if let Some(l) = limit {
                m.push(("limit", s(*l)));
            }
            obj(m)
        }
        ConstraintFamily::Parabola { members } => obj([
            ("kind", Value::from("parabola")),
            (
                "members",
                Value::Array(
                    members
                        .iter()
                        .map(|p| {
                            let mut m = vec![
                                ("lambdas", nums_value(&p.lambdas)),
                                ("orientation", s(p.orientation)),
                            ];
                            if let Some(t) = &p.transform {
                                m.push(("transform", rows_value(t)));
                            }
                            obj(m)
                        })
                        .collect(),
                ),
            ),
        ]),
        ConstraintFamily::GeneralizedHyperbola { lambda, ell, sigmas } => obj([
            ("kind", Value::from("generalized_hyperbola")),
            ("lambda", nums_value(lambda)),
            ("ell", Value::from(*ell as u64)),
            ("sigmas", nums_value(sigmas)),
        ]),
    }
}

pub fn parse_problem(bytes: &[u8]) -> Result<GeoCop> {
    ProblemDocument::parse(bytes)?.to_geocop()
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "n": 2,
        "Q": ["1", "0", "-1"],
        "H": ["1", "0", "1"],
        "constraints": [{"matrix": ["2", "1", "1"]}]
    }"#;

    #[test]
    fn minimal_document_parses() {
        let p = parse_problem(MINIMAL.as_bytes()).unwrap();
        assert_eq!(p.q, SymMat::diag(&[1.0, -1.0]));
        assert_eq!(p.h, SymMat::identity(2));
        assert_eq!(p.bset.len(), 1);
        assert_eq!(p.bset.members[0].get(0, 1), 1.0);
    }

    #[test]
    fn ball_family_document_realizes_lattice() {
        let doc = r#"{
            "schema_version": 1, "n": 3,
            "Q": ["1","0","0","-1","0","0"], "H": ["1","0","0","1","0","1"],
            "constraints": [{"family": {"kind": "ball_grid", "radius": "0.5",
                "centers": {"lattice": {"dim": 2, "step": "1", "bound": "2"}}}}]
        }"#;
        let p = parse_problem(doc.as_bytes()).unwrap();
        assert_eq!(p.bset.len(), 25);
    }

    #[test]
    fn missing_h_is_reported_at_its_path() {
        let doc = r#"{"schema_version": 1, "n": 1, "Q": ["1"]}"#;
        match parse_problem(doc.as_bytes()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.H"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nested_errors_carry_paths() {
        let doc = r#"{"schema_version": 1, "n": 2, "Q": ["1","0","1"], "H": ["1","0","1"],
            "constraints": [{"matrix": ["1","x","1"]}]}"#;
        match parse_problem(doc.as_bytes()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.constraints[0].matrix[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn canonical_form_round_trips() {
        let doc = ProblemDocument::parse(MINIMAL.as_bytes()).unwrap();
        let text = doc.to_canonical_json();
        let again = ProblemDocument::parse(text.as_bytes()).unwrap();
        assert_eq!(again, doc);
        assert_eq!(again.to_canonical_json(), text);
        assert!(text.contains("\"-1\""));
    }

    #[test]
    fn decimal_strings_are_exact() {
        assert_eq!(fmt_num(0.25), "0.25");
        assert_eq!(fmt_num(-0.5), "-0.5");
        assert_eq!(fmt_num(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
