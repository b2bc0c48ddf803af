//! Plain-text CSV formats.
//!
//! Numbers are written with Rust's shortest round-trip representation, so a
//! write followed by a read reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{FlowPath, PenaltyPath};
use crate::grid::TimeGrid;

/// In-memory CSV: one header and rows of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn parse_row(line: &str, lineno: usize, width: usize) -> Result<Vec<f64>> {
    let row = line
        .split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {lineno}: cannot parse {c:?} as a number")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if row.len() != width {
        return Err(Error::Parse(format!("line {lineno}: expected {width} columns, found {}", row.len())));
    }
    Ok(row)
}

/// Serialize a flow/penalty pair as `# A=<value>` followed by `t,a,b,phi` rows.
pub fn flow_to_csv(flow: &FlowPath, penalty: &PenaltyPath) -> Result<String> {
    penalty.check_aligned(flow.grid())?;
    let mut s = format!("# A={}\nt,a,b,phi\n", penalty.terminal());
    for (i, t) in flow.times().into_iter().enumerate() {
        let _ = writeln!(s, "{t},{},{},{}", flow.ask()[i], flow.bid()[i], penalty.phi()[i]);
    }
    Ok(s)
}

pub fn flow_from_csv(text: &str) -> Result<(FlowPath, PenaltyPath)> {
    let mut terminal = None;
    let mut header_seen = false;
    let mut rows = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(v) = meta.trim().strip_prefix("A=") {
                let a = v
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad terminal penalty {v:?}", k + 1)))?;
                terminal = Some(a);
            }
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["t", "a", "b", "phi"] {
                return Err(Error::Parse(format!("expected header t,a,b,phi, found {line:?}")));
            }
            header_seen = true;
            continue;
        }
        rows.push(parse_row(line, k + 1, 4)?);
    }
    let terminal = terminal.ok_or_else(|| Error::Parse("missing '# A=<value>' metadata line".into()))?;
    if rows.len() < 2 {
        return Err(Error::Parse("a flow needs at least two rows".into()));
    }
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    if times[0] != 0.0 {
        return Err(Error::Parse(format!("first time must be 0, found {}", times[0])));
    }
    if let Some(w) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Parse(format!("time column is not increasing at row {}", w + 2)));
    }
    let grid = TimeGrid::new(times[times.len() - 1], times.len())?;
    let tol = 1e-9 * grid.horizon();
    if let Some(i) = times.iter().enumerate().position(|(i, &t)| (t - grid.time(i)).abs() > tol) {
        return Err(Error::Parse(format!("time grid is not uniform at row {}", i + 1)));
    }
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let flow = FlowPath::new(grid, col(1), col(2))?;
    let penalty = PenaltyPath::new(col(3), terminal)?;
    Ok((flow, penalty))
}

pub fn write_flow(path: &Path, flow: &FlowPath, penalty: &PenaltyPath) -> Result<()> {
    fs::write(path, flow_to_csv(flow, penalty)?)?;
    Ok(())
}

pub fn read_flow(path: &Path) -> Result<(FlowPath, PenaltyPath)> {
    flow_from_csv(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::iid_flow;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_monotone_time() {
        let text = "# A=0.1\nt,a,b,phi\n0,1,1,0\n0.5,1,1,0\n0.4,1,1,0\n";
        assert!(matches!(flow_from_csv(text), Err(Error::Parse(_))));
    }

    #[test]
    fn rejects_missing_metadata_and_bad_header() {
        assert!(flow_from_csv("t,a,b,phi\n0,1,1,0\n1,1,1,0\n").is_err());
        assert!(flow_from_csv("# A=1\nt,b,a,phi\n0,1,1,0\n1,1,1,0\n").is_err());
    }

    #[test]
    fn table_roundtrip_text() {
        let mut t = Table::new(&["x", "y"]);
        t.push(vec![0.1, -2.5e-17]);
        assert_eq!(t.to_csv(), "x,y\n0.1,-0.000000000000000025\n");
        assert_eq!(t.column("y"), Some(vec![-2.5e-17]));
    }

    proptest! {
        #[test]
        fn flow_csv_roundtrip_is_bit_exact(seed in 0u64..500, phi in 0.0f64..1.0, a_term in 0.0f64..1.0) {
            let flow = iid_flow(seed, 7.3, 3.1, 17, 1.0).unwrap();
            let pen = PenaltyPath::constant(phi, a_term, 17).unwrap();
            let (f2, p2) = flow_from_csv(&flow_to_csv(&flow, &pen).unwrap()).unwrap();
            prop_assert_eq!(f2, flow);
            prop_assert_eq!(p2, pen);
        }
    }
}
