//! Electromagnet force and current dynamics.
//!
//! The current obeys `İ = α(s, ṡ, I) + β(s, I)·U`. The analytic backend
//! uses the single-coil model with inductance `L(s) = 2·km/s`, giving
//!
//! ```text
//! F(s, I) = km·(I/s)²
//! α(s, ṡ, I) = -rc·s·I/(2·km) + I·ṡ/s
//! β(s, I)    = s/(2·km)
//! ```
//!
//! The table backend replaces F, α and β by bilinear interpolation over a
//! rectangular (s, I) grid loaded from a text file, with α split as
//! `α = α0(s, I) + αv(s, I)·ṡ` (the ṡ-dependence of the underlying physics
//! is linear in ṡ). The file layout is:
//!
//! ```text
//! s_count i_count
//! <s grid, strictly increasing, s_count values>
//! <i grid, strictly increasing, i_count values>
//! <F    values, row-major over (s, i), s_count·i_count values>
//! <α0   values, same layout>
//! <αv   values, same layout>
//! <β    values, same layout>
//! ```
//!
//! Whitespace (spaces or newlines) separates values; `#` starts a comment
//! that runs to end of line.

use std::path::Path;

use crate::error::{Error, Result};

use super::params::{MagnetBackendKind, MagnetParams};

/// Value and partial derivatives of the current ODE right-hand side.
#[derive(Debug, Clone, Copy)]
pub struct CurrentDerivative {
    pub value: f64,
    pub d_ds: f64,
    pub d_dsdot: f64,
    pub d_di: f64,
    pub d_du: f64,
}

/// Electromagnetic backend: analytic surrogate or interpolated tables.
#[derive(Debug, Clone)]
pub enum MagnetModel {
    Analytic(MagnetParams),
    Table {
        params: MagnetParams,
        table: MagnetTable,
    },
}

impl MagnetModel {
    pub fn analytic(params: MagnetParams) -> Result<Self> {
        params.validate()?;
        Ok(Self::Analytic(params))
    }

    pub fn from_table_file(params: MagnetParams, path: &Path) -> Result<Self> {
        params.validate()?;
        let table = MagnetTable::load(path)?;
        Ok(Self::Table { params, table })
    }

    pub fn with_table(params: MagnetParams, table: MagnetTable) -> Result<Self> {
        params.validate()?;
        Ok(Self::Table { params, table })
    }

    pub fn params(&self) -> &MagnetParams {
        match self {
            Self::Analytic(p) => p,
            Self::Table { params, .. } => params,
        }
    }

    pub fn kind(&self) -> MagnetBackendKind {
        match self {
            Self::Analytic(_) => MagnetBackendKind::Analytic,
            Self::Table { .. } => MagnetBackendKind::Table,
        }
    }

    /// Magnetic force F(s, I) [N].
    pub fn force(&self, gap: f64, current: f64) -> Result<f64> {
        self.force_with_grad(gap, current).map(|f| f.0)
    }

    /// Force with partials: (F, ∂F/∂s, ∂F/∂I).
    pub fn force_with_grad(&self, gap: f64, current: f64) -> Result<(f64, f64, f64)> {
        if gap <= 0.0 {
            return Err(Error::NonPositiveAirGap { gap });
        }
        match self {
            Self::Analytic(p) => {
                let ratio = current / gap;
                let f = p.km * ratio * ratio;
                let d_ds = -2.0 * f / gap;
                let d_di = 2.0 * p.km * current / (gap * gap);
                Ok((f, d_ds, d_di))
            }
            Self::Table { table, .. } => table.force.eval_with_grad(gap, current),
        }
    }

    /// Current derivative dI/dt for gap `s`, gap rate `s_dot`, current `i`
    /// and applied voltage `u` (absolute, not deviation).
    pub fn current_derivative(&self, gap: f64, gap_rate: f64, current: f64, voltage: f64) -> Result<f64> {
        self.current_derivative_with_grad(gap, gap_rate, current, voltage)
            .map(|d| d.value)
    }

    pub fn current_derivative_with_grad(
        &self,
        gap: f64,
        gap_rate: f64,
        current: f64,
        voltage: f64,
    ) -> Result<CurrentDerivative> {
        if gap <= 0.0 {
            return Err(Error::NonPositiveAirGap { gap });
        }
        match self {
            Self::Analytic(p) => {
                let beta = gap / (2.0 * p.km);
                // α = -rc·s·I/(2km) + I·ṡ/s
                let alpha = -p.rc * gap * current / (2.0 * p.km) + current * gap_rate / gap;
                let value = alpha + beta * voltage;
                Ok(CurrentDerivative {
                    value,
                    d_ds: -p.rc * current / (2.0 * p.km) - current * gap_rate / (gap * gap)
                        + voltage / (2.0 * p.km),
                    d_dsdot: current / gap,
                    d_di: -p.rc * gap / (2.0 * p.km) + gap_rate / gap,
                    d_du: beta,
                })
            }
            Self::Table { table, .. } => {
                let (a0, a0_s, a0_i) = table.alpha0.eval_with_grad(gap, current)?;
                let (av, av_s, av_i) = table.alpha_v.eval_with_grad(gap, current)?;
                let (b, b_s, b_i) = table.beta.eval_with_grad(gap, current)?;
                Ok(CurrentDerivative {
                    value: a0 + av * gap_rate + b * voltage,
                    d_ds: a0_s + av_s * gap_rate + b_s * voltage,
                    d_dsdot: av,
                    d_di: a0_i + av_i * gap_rate + b_i * voltage,
                    d_du: b,
                })
            }
        }
    }
}

/// One bilinear grid over (s, i).
#[derive(Debug, Clone)]
struct BilinearGrid {
    s_grid: Vec<f64>,
    i_grid: Vec<f64>,
    /// Row-major: values[si * i_count + ii].
    values: Vec<f64>,
}

impl BilinearGrid {
    fn locate(grid: &[f64], axis: &'static str, x: f64) -> Result<usize> {
        let (min, max) = (grid[0], grid[grid.len() - 1]);
        if x < min || x > max {
            return Err(Error::TableOutOfRange {
                axis,
                value: x,
                min,
                max,
            });
        }
        // partition_point returns the first index with grid[k] > x.
        let k = grid.partition_point(|&g| g <= x);
        Ok(k.clamp(1, grid.len() - 1) - 1)
    }

    fn eval_with_grad(&self, s: f64, i: f64) -> Result<(f64, f64, f64)> {
        let si = Self::locate(&self.s_grid, "s", s)?;
        let ii = Self::locate(&self.i_grid, "i", i)?;
        let (s0, s1) = (self.s_grid[si], self.s_grid[si + 1]);
        let (i0, i1) = (self.i_grid[ii], self.i_grid[ii + 1]);
        let nc = self.i_grid.len();
        let f00 = self.values[si * nc + ii];
        let f01 = self.values[si * nc + ii + 1];
        let f10 = self.values[(si + 1) * nc + ii];
        let f11 = self.values[(si + 1) * nc + ii + 1];
        let ts = (s - s0) / (s1 - s0);
        let ti = (i - i0) / (i1 - i0);
        let value = f00 * (1.0 - ts) * (1.0 - ti)
            + f10 * ts * (1.0 - ti)
            + f01 * (1.0 - ts) * ti
            + f11 * ts * ti;
        let d_ds = ((f10 - f00) * (1.0 - ti) + (f11 - f01) * ti) / (s1 - s0);
        let d_di = ((f01 - f00) * (1.0 - ts) + (f11 - f10) * ts) / (i1 - i0);
        Ok((value, d_ds, d_di))
    }
}

/// Loaded magnet table set: F, α0, αv, β over a shared (s, I) grid.
#[derive(Debug, Clone)]
pub struct MagnetTable {
    force: BilinearGrid,
    alpha0: BilinearGrid,
    alpha_v: BilinearGrid,
    beta: BilinearGrid,
}

impl MagnetTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut numbers = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split_whitespace() {
                numbers.push(tok.parse::<f64>().map_err(|_| {
                    Error::TableFormat(format!("cannot parse `{tok}` as a number"))
                })?);
            }
        }
        let mut cursor = numbers.into_iter();
        let mut take = |n: usize, what: &str| -> Result<Vec<f64>> {
            let out: Vec<f64> = cursor.by_ref().take(n).collect();
            if out.len() != n {
                return Err(Error::TableFormat(format!(
                    "truncated file: expected {n} values for {what}, got {}",
                    out.len()
                )));
            }
            Ok(out)
        };

        let header = take(2, "header")?;
        let s_count = header[0] as usize;
        let i_count = header[1] as usize;
        if s_count < 2 || i_count < 2 {
            return Err(Error::TableFormat(
                "grid needs at least 2 points per axis".into(),
            ));
        }
        let s_grid = take(s_count, "s grid")?;
        let i_grid = take(i_count, "i grid")?;
        for (name, grid) in [("s", &s_grid), ("i", &i_grid)] {
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::TableFormat(format!(
                    "{name} grid must be strictly increasing"
                )));
            }
        }
        if s_grid[0] <= 0.0 {
            return Err(Error::TableFormat("s grid must be positive".into()));
        }

        let cells = s_count * i_count;
        let force = take(cells, "F")?;
        let alpha0 = take(cells, "alpha0")?;
        let alpha_v = take(cells, "alpha_v")?;
        let beta = take(cells, "beta")?;
        if cursor.next().is_some() {
            return Err(Error::TableFormat("trailing values after β grid".into()));
        }
        if force.iter().any(|&f| f < 0.0) {
            return Err(Error::TableFormat("F grid has negative entries".into()));
        }
        if beta.iter().any(|&b| b <= 0.0) {
            return Err(Error::TableFormat("β grid must be positive".into()));
        }

        let grid = |values: Vec<f64>| BilinearGrid {
            s_grid: s_grid.clone(),
            i_grid: i_grid.clone(),
            values,
        };
        Ok(Self {
            force: grid(force),
            alpha0: grid(alpha0),
            alpha_v: grid(alpha_v),
            beta: grid(beta),
        })
    }

    /// Tabulate the analytic model over the given grids. Used to round-trip
    /// the file format and to ship a drop-in stand-in until measured tables
    /// are available.
    pub fn from_analytic(params: &MagnetParams, s_grid: &[f64], i_grid: &[f64]) -> Result<Self> {
        let model = MagnetModel::analytic(*params)?;
        let mut force = Vec::with_capacity(s_grid.len() * i_grid.len());
        let mut alpha0 = Vec::with_capacity(force.capacity());
        let mut alpha_v = Vec::with_capacity(force.capacity());
        let mut beta = Vec::with_capacity(force.capacity());
        for &s in s_grid {
            for &i in i_grid {
                force.push(model.force(s, i)?);
                // α(s, 0, I) and the ṡ coefficient I/s.
                alpha0.push(-params.rc * s * i / (2.0 * params.km));
                alpha_v.push(i / s);
                beta.push(s / (2.0 * params.km));
            }
        }
        let grid = |values: Vec<f64>| BilinearGrid {
            s_grid: s_grid.to_vec(),
            i_grid: i_grid.to_vec(),
            values,
        };
        Ok(Self {
            force: grid(force),
            alpha0: grid(alpha0),
            alpha_v: grid(alpha_v),
            beta: grid(beta),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# maglev magnet table: header, s grid, i grid, F, alpha0, alpha_v, beta\n");
        out.push_str(&format!(
            "{} {}\n",
            self.force.s_grid.len(),
            self.force.i_grid.len()
        ));
        let dump = |out: &mut String, values: &[f64]| {
            for (k, v) in values.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                out.push_str(&format!("{v:?}"));
            }
            out.push('\n');
        };
        dump(&mut out, &self.force.s_grid);
        dump(&mut out, &self.force.i_grid);
        dump(&mut out, &self.force.values);
        dump(&mut out, &self.alpha0.values);
        dump(&mut out, &self.alpha_v.values);
        dump(&mut out, &self.beta.values);
        out
    }

    pub fn s_range(&self) -> (f64, f64) {
        (
            self.force.s_grid[0],
            self.force.s_grid[self.force.s_grid.len() - 1],
        )
    }

    pub fn i_range(&self) -> (f64, f64) {
        (
            self.force.i_grid[0],
            self.force.i_grid[self.force.i_grid.len() - 1],
        )
    }
}
