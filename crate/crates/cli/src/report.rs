//! Report envelopes and their JSON/CSV encodings.

use chrono::{DateTime, SecondsFormat, Utc};
use normform_core::linear_core::{to_rows, LinearNormalForm};
use normform_core::moduli::{StratificationReport, ZeroSet};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub problem: String,
    pub timestamp: String,
    /// `ok` or `verification_failed`.
    pub status: String,
    pub payload: Value,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn verified(&self) -> bool {
        self.status == "ok"
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// `SOURCE_DATE_EPOCH` when set, the Unix epoch when a seed is given, else now.
pub fn timestamp(seed: Option<u64>) -> String {
    let at = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::from_timestamp(secs, 0))
        .or_else(|| seed.map(|_| DateTime::UNIX_EPOCH))
        .unwrap_or_else(Utc::now);
    at.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Paths of floating values that did not survive serialization.
///
/// serde_json writes NaN and infinities as `null`; this finds nulls inside
/// numeric arrays so they can be reported as warnings.
pub fn non_finite_paths(v: &Value) -> Vec<String> {
    fn walk(v: &Value, path: &str, out: &mut Vec<String>) {
        match v {
            Value::Array(a) => {
                let numeric = a.iter().any(Value::is_number);
                for (i, x) in a.iter().enumerate() {
                    if numeric && x.is_null() {
                        out.push(format!("{path}/{i}"));
                    }
                    walk(x, &format!("{path}/{i}"), out);
                }
            }
            Value::Object(m) => {
                for (k, x) in m {
                    walk(x, &format!("{path}/{k}"), out);
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(v, "", &mut out);
    out
}

pub fn linear_normal_form_json(nf: &LinearNormalForm, t: &normform_core::Matrix) -> Value {
    json!({
        "dims": [nf.domain_dim(), nf.target_dim()],
        "rank": nf.rank(),
        "index": nf.index(),
        "kernel": nf.kernel.vectors(),
        "coimage": nf.coimage.vectors(),
        "image": nf.image.vectors(),
        "cokernel": nf.cokernel.vectors(),
        "core": to_rows(&nf.core),
        "singular_values": nf.singular_values,
        "rank_tol": nf.tol,
        "reconstruction_residual": nf.reconstruction_residual(t),
        "orthogonality_residual": nf.orthogonality_residual(),
    })
}

/// Header `x0,…,x{d−1},stratum`, one zero point per row.
pub fn stratification_csv(zero_set: &ZeroSet, report: &StratificationReport) -> String {
    let d = zero_set.dim();
    let mut out: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    out.push("stratum".into());
    let mut s = out.join(",");
    s.push('\n');
    for (p, &k) in zero_set.points.iter().zip(&report.assignments) {
        for x in p {
            s.push_str(&format!("{x},"));
        }
        s.push_str(&csv_field(&report.strata[k].label));
        s.push('\n');
    }
    s
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}
