//! CSV and JSON emission. Every artifact carries the config hash and tolerance.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub tol: f64,
}

/// Comment header, column line, then one line per row; LF endings.
pub fn csv(meta: &Meta, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!(
        "# {} {} command={} config_hash={} tol={:e}\n",
        meta.tool, meta.version, meta.command, meta.config_hash, meta.tol
    );
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a Meta,
    result: &'a T,
}

pub fn json<T: Serialize>(meta: &Meta, result: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope { meta, result }).expect("result serializes");
    s.push('\n');
    s
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Meta {
        Meta {
            tool: "semicov",
            version: "0.1.0",
            command: "semiconj1d",
            config_hash: "ab".into(),
            tol: 1e-8,
        }
    }

    #[test]
    fn csv_layout() {
        let s = csv(&meta(), &["x", "value"], &[vec![num(0.5), num(-1.25)]]);
        assert_eq!(s, "# semicov 0.1.0 command=semiconj1d config_hash=ab tol=1e-8\nx,value\n0.5,-1.25\n");
        assert!(!s.contains('\r'));
    }

    #[test]
    fn json_keys_in_declared_order() {
        let s = json(&meta(), &vec![1, 2]);
        let m = s.find("\"meta\"").unwrap();
        let r = s.find("\"result\"").unwrap();
        assert!(m < r);
        assert!(s.find("\"config_hash\"").unwrap() < s.find("\"tol\"").unwrap());
    }
}
