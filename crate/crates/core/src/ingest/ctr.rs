//! Position and depth normalized click-through rates per identifier.
//!
//! Every `(position, depth)` slot gets a normalizer equal to its observed CTR
//! divided by the global CTR. An identifier's impressions are weighted by the
//! normalizer of the slot they were shown in, so an ad that only ever appeared
//! in a strong slot is not credited for the slot itself:
//!
//! ```text
//! ctr(id) = (clicks + alpha) / (sum imps * posnorm + beta)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::ingest::hashing::validate_namespace;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickRecord {
    pub namespace: String,
    pub token: String,
    pub position: u32,
    pub depth: u32,
    pub clicks: u64,
    pub impressions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtrSmoothing {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for CtrSmoothing {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 75.0,
        }
    }
}

/// Largest value a table entry may take; entries live in the open unit interval.
pub const CTR_CEILING: f64 = 1.0 - 1e-9;

/// `namespace:token` to smoothed normalized CTR, in lexicographic key order.
pub type CtrTable = BTreeMap<String, f64>;

pub fn aggregate_ctr(records: &[ClickRecord], smoothing: CtrSmoothing) -> Result<CtrTable> {
    if !(smoothing.alpha > 0.0 && smoothing.beta > 0.0) {
        return Err(Error::InvalidConfig("CTR smoothing constants must be positive".into()));
    }
    let mut slots: HashMap<(u32, u32), (u64, u64)> = HashMap::new();
    let (mut clicks_all, mut imps_all) = (0u64, 0u64);
    for r in records {
        validate_namespace(&r.namespace)?;
        if r.clicks > r.impressions {
            return Err(Error::InvalidInput(format!(
                "{}:{} has more clicks ({}) than impressions ({})",
                r.namespace, r.token, r.clicks, r.impressions
            )));
        }
        let slot = slots.entry((r.position, r.depth)).or_default();
        slot.0 += r.clicks;
        slot.1 += r.impressions;
        clicks_all += r.clicks;
        imps_all += r.impressions;
    }
    if imps_all == 0 {
        return Err(Error::Empty("CTR table"));
    }
    let global = clicks_all as f64 / imps_all as f64;
    let posnorm = |slot: &(u32, u32)| -> f64 {
        if global == 0.0 {
            return 1.0;
        }
        match slots.get(slot) {
            Some(&(c, i)) if i > 0 => (c as f64 / i as f64) / global,
            _ => 1.0,
        }
    };
    let mut per_id: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for r in records {
        let acc = per_id.entry(format!("{}:{}", r.namespace, r.token)).or_default();
        acc.0 += r.clicks as f64;
        acc.1 += r.impressions as f64 * posnorm(&(r.position, r.depth));
    }
    Ok(per_id
        .into_iter()
        .map(|(k, (c, e))| {
            let v = (c + smoothing.alpha) / (e + smoothing.beta);
            (k, v.min(CTR_CEILING))
        })
        .collect())
}

/// Writes `<namespace>:<token> <ctr>` lines in key order.
pub fn write_ctr_table<W: Write>(mut out: W, table: &CtrTable) -> std::io::Result<()> {
    for (k, v) in table {
        writeln!(out, "{k} {v}")?;
    }
    out.flush()
}

pub fn read_ctr_table<R: BufRead>(input: R) -> Result<CtrTable> {
    let mut table = CtrTable::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        let bad = |m: &str| Error::Parse {
            line: n + 1,
            message: m.to_string(),
        };
        let (key, value) = line.split_once(' ').ok_or_else(|| bad("expected `<ns>:<token> <ctr>`"))?;
        let (ns, _) = key.split_once(':').ok_or_else(|| bad("key must be `<ns>:<token>`"))?;
        validate_namespace(ns).map_err(|e| bad(&e.to_string()))?;
        let v: f64 = value.parse().map_err(|_| bad("malformed CTR value"))?;
        if !(v > 0.0 && v < 1.0) {
            return Err(bad("CTR must lie in (0, 1)"));
        }
        if let Some((prev, _)) = table.last_key_value() {
            if key <= prev.as_str() {
                return Err(bad("keys must be strictly increasing"));
            }
        }
        table.insert(key.to_string(), v);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(tok: &str, position: u32, clicks: u64, impressions: u64) -> ClickRecord {
        ClickRecord {
            namespace: "ad".into(),
            token: tok.into(),
            position,
            depth: 2,
            clicks,
            impressions,
        }
    }

    #[test]
    fn all_clicked_single_slot() {
        let n = 400u64;
        let table = aggregate_ctr(&[rec("1", 1, n, n)], CtrSmoothing::default()).unwrap();
        let expected = (n as f64 + 0.05) / (n as f64 + 75.0);
        assert!((table["ad:1"] - expected).abs() < 1e-15);
    }

    #[test]
    fn never_clicked_tends_to_zero() {
        let records = [rec("1", 1, 0, 1_000_000), rec("2", 1, 50, 100)];
        let table = aggregate_ctr(&records, CtrSmoothing::default()).unwrap();
        assert!(table["ad:1"] < 1e-6);
        assert!(table["ad:1"] > 0.0);
    }

    #[test]
    fn slot_normalization_equalizes_placement() {
        // slot 1 has twice the baseline CTR of slot 2
        let records = [
            rec("bg1", 1, 20_000, 100_000),
            rec("bg2", 2, 10_000, 100_000),
            rec("strong", 1, 2000, 10_000),
            rec("weak", 2, 1000, 10_000),
        ];
        let table = aggregate_ctr(&records, CtrSmoothing::default()).unwrap();
        let ratio = table["ad:strong"] / table["ad:weak"];
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn errors() {
        assert!(matches!(aggregate_ctr(&[rec("1", 1, 0, 0)], CtrSmoothing::default()), Err(Error::Empty(_))));
        assert!(aggregate_ctr(&[rec("1", 1, 3, 2)], CtrSmoothing::default()).is_err());
    }

    #[test]
    fn table_text_round_trip() {
        let records = [rec("b", 1, 3, 90), rec("a", 2, 1, 50)];
        let table = aggregate_ctr(&records, CtrSmoothing::default()).unwrap();
        let mut buf = Vec::new();
        write_ctr_table(&mut buf, &table).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ad:a "));
        assert_eq!(read_ctr_table(&buf[..]).unwrap(), table);
        assert!(read_ctr_table(&b"ad:b 0.1\nad:a 0.2\n"[..]).is_err());
    }
}
