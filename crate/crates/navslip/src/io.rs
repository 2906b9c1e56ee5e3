//! CSV tables and field dumps.
//!
//! Numbers are written with 17 significant digits, which round-trips every
//! `f64` exactly. A field dump is a header line `nx ny hx hy kind` followed by
//! one line per grid row (bottom row first):
//!
//! * `rho`: `ny` rows of `nx` cell values,
//! * `u`: `ny` rows of `nx + 1` vertical-face values,
//! * `v`: `ny + 1` rows of `nx` horizontal-face values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use navslip_core::{Grid, Params, ScalarField, State, VectorField};

use crate::error::HarnessError;

pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header");
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, self.to_text()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| HarnessError::format(path, 1, "empty file"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(HarnessError::format(path, n + 2, format!("expected {} columns, got {}", header.len(), row.len())));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric column by name.
    pub fn numbers(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column(name)?;
        Some(self.rows.iter().map(|r| r[c].parse().unwrap_or(f64::NAN)).collect())
    }
}

fn write_rows(path: &Path, g: &Grid, kind: &str, values: &[f64], width: usize) -> Result<(), HarnessError> {
    let mut s = String::with_capacity(values.len() * 25);
    let _ = writeln!(s, "{} {} {} {} {kind}", g.nx, g.ny, num(g.hx), num(g.hy));
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(|&x| num(x)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| HarnessError::io(path, e))
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<(), HarnessError> {
    write_rows(path, &f.grid, "rho", &f.values, f.grid.nx)
}

pub fn write_velocity(u_path: &Path, v_path: &Path, v: &VectorField) -> Result<(), HarnessError> {
    write_rows(u_path, &v.grid, "u", &v.u, v.grid.nx + 1)?;
    write_rows(v_path, &v.grid, "v", &v.v, v.grid.nx)
}

/// Reads one dump; returns the header grid, the kind and the values.
pub fn read_dump(path: &Path, params: &Params) -> Result<(Grid, String, Vec<f64>), HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    if head.len() != 5 {
        return Err(HarnessError::format(path, 1, "header must be 'nx ny hx hy kind'"));
    }
    let bad = |m: &str| HarnessError::format(path, 1, m.to_string());
    let nx: usize = head[0].parse().map_err(|_| bad("bad nx"))?;
    let ny: usize = head[1].parse().map_err(|_| bad("bad ny"))?;
    let hx: f64 = head[2].parse().map_err(|_| bad("bad hx"))?;
    let hy: f64 = head[3].parse().map_err(|_| bad("bad hy"))?;
    let kind = head[4].to_string();
    Grid::new(nx, ny, nx as f64 * hx, ny as f64 * hy)?;
    let pg = Grid::from_params(params)?;
    if (nx, ny) != (pg.nx, pg.ny) {
        return Err(bad("grid does not match the run configuration"));
    }
    let (rows, width) = match kind.as_str() {
        "rho" => (ny, nx),
        "u" => (ny, nx + 1),
        "v" => (ny + 1, nx),
        _ => return Err(bad("kind must be rho, u or v")),
    };
    let mut values = Vec::with_capacity(rows * width);
    let mut count = 0;
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        count += 1;
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| HarnessError::format(path, n + 2, format!("bad number '{tok}'")))?);
        }
        if values.len() - before != width {
            return Err(HarnessError::format(path, n + 2, format!("expected {width} values")));
        }
    }
    if count != rows {
        return Err(HarnessError::format(path, 1, format!("expected {rows} rows, found {count}")));
    }
    Ok((pg, kind, values))
}

/// File names of the dumps of one step under `dir`.
pub fn dump_paths(dir: &Path, step: usize) -> [PathBuf; 3] {
    [
        dir.join(format!("rho_{step:05}.txt")),
        dir.join(format!("u_{step:05}.txt")),
        dir.join(format!("v_{step:05}.txt")),
    ]
}

pub fn write_state(dir: &Path, s: &State) -> Result<(), HarnessError> {
    let [r, u, v] = dump_paths(dir, s.step_index);
    write_scalar(&r, &s.rho)?;
    write_velocity(&u, &v, &s.v)
}

pub fn read_state(dir: &Path, step: usize, params: &Params) -> Result<State, HarnessError> {
    let [rp, up, vp] = dump_paths(dir, step);
    let (g, _, r) = read_dump(&rp, params)?;
    let (_, _, u) = read_dump(&up, params)?;
    let (_, _, v) = read_dump(&vp, params)?;
    Ok(State {
        rho: ScalarField::from_values(g, r)?,
        v: VectorField::from_values(g, u, v)?,
        step_index: step,
        eps_used: params.eps,
        report: Default::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use navslip_core::testfn::{random_scalar, random_vector, SeededRng};

    #[test]
    fn numbers_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let digits: String = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect();
            assert_eq!(digits.len(), 17);
        }
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn state_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = Params { nx: 6, ny: 5, ..Params::default() };
        let g = Grid::from_params(&p).unwrap();
        let mut rng = SeededRng::new(3);
        let s = State {
            rho: random_scalar(g, &mut rng),
            v: random_vector(g, &mut rng),
            step_index: 7,
            eps_used: p.eps,
            report: Default::default(),
        };
        write_state(dir.path(), &s).unwrap();
        let back = read_state(dir.path(), 7, &p).unwrap();
        assert_eq!(back.rho, s.rho);
        assert_eq!(back.v, s.v);
        let text = fs::read_to_string(dir.path().join("u_00007.txt")).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().ends_with(" u"));
        assert_eq!(lines.count(), 5);
    }

    #[test]
    fn malformed_dump_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let p = Params { nx: 4, ny: 4, ..Params::default() };
        let path = dir.path().join("rho_00000.txt");
        fs::write(&path, "4 4 0.25 0.25 rho\n1 2 3 4\n1 2 x 4\n").unwrap();
        match read_dump(&path, &p) {
            Err(HarnessError::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![num(1.5), flag(true)]);
        let path = dir.path().join("t.csv");
        t.write(&path).unwrap();
        let back = Table::read(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.numbers("a").unwrap(), vec![1.5]);
    }
}
