//! Absolute and relative embedding kernels and mode-string parsing.
//!
//! Absolute kernels (`p`, `b`, `t`) produce one `d_h`-wide row per token.
//! Relative kernels (`s`, `e`, `l`) produce an `N×N×d_h` tensor over token
//! pairs, and `r` produces an `N×N` Gaussian reweighting of attention logits.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Tensor3};

/// Mode alphabet in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Letter {
    /// positional embedding
    P,
    /// Bochner (projection) time embedding
    B,
    /// calendar-decomposed absolute time embedding
    T,
    /// sinusoid time-difference kernel
    S,
    /// log1p time-difference kernel
    L,
    /// exponential time-difference kernel
    E,
    /// Gaussian relative distance weights
    R,
    /// noise regularizer switch
    O,
}

impl Letter {
    pub const ALL: [Letter; 8] = [Letter::P, Letter::B, Letter::T, Letter::S, Letter::L, Letter::E, Letter::R, Letter::O];

    pub fn as_char(self) -> char {
        match self {
            Letter::P => 'p',
            Letter::B => 'b',
            Letter::T => 't',
            Letter::S => 's',
            Letter::L => 'l',
            Letter::E => 'e',
            Letter::R => 'r',
            Letter::O => 'o',
        }
    }

    fn from_token(tok: &str) -> Option<Letter> {
        Letter::ALL.into_iter().find(|l| tok.len() == 1 && tok.starts_with(l.as_char()))
    }

    pub fn is_absolute(self) -> bool {
        matches!(self, Letter::P | Letter::B | Letter::T)
    }

    pub fn is_relative(self) -> bool {
        matches!(self, Letter::S | Letter::L | Letter::E | Letter::R)
    }
}

/// Attention head kinds derived from the mode letters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Absolute(Letter),
    Relative(Letter),
    Distance,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddingMode {
    letters: Vec<Letter>,
}

impl EmbeddingMode {
    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn absolute_kernels(&self) -> impl Iterator<Item = Letter> + '_ {
        self.letters.iter().copied().filter(|l| l.is_absolute())
    }

    pub fn relative_kernels(&self) -> impl Iterator<Item = Letter> + '_ {
        self.letters.iter().copied().filter(|l| l.is_relative())
    }

    pub fn noise_enabled(&self) -> bool {
        self.letters.contains(&Letter::O)
    }

    pub fn has(&self, l: Letter) -> bool {
        self.letters.contains(&l)
    }

    /// One head per kernel letter, in canonical order.
    pub fn heads(&self) -> Vec<HeadKind> {
        self.letters
            .iter()
            .filter_map(|&l| match l {
                Letter::O => None,
                Letter::R => Some(HeadKind::Distance),
                l if l.is_absolute() => Some(HeadKind::Absolute(l)),
                l => Some(HeadKind::Relative(l)),
            })
            .collect()
    }

    pub fn head_count(&self) -> usize {
        self.letters.iter().filter(|l| **l != Letter::O).count()
    }

    /// Head width: `d_model / H` unless given explicitly.
    pub fn head_width(&self, d_model: usize, explicit: Option<usize>) -> Result<usize> {
        let h = self.head_count();
        match explicit {
            Some(0) => Err(Error::Config("head_dim must be positive".into())),
            Some(w) => Ok(w),
            None if d_model % h == 0 => Ok(d_model / h),
            None => Err(Error::Config(format!("{h} heads do not divide d_model = {d_model}"))),
        }
    }
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, l) in self.letters.iter().enumerate() {
            if k > 0 {
                f.write_str("-")?;
            }
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for EmbeddingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_mode(s)
    }
}

/// Parses a dash-separated mode such as `"p-b-s-l-r-o"`; letter order is free.
pub fn parse_mode(mode: &str) -> Result<EmbeddingMode> {
    let mut letters = Vec::new();
    for tok in mode.trim().split('-') {
        let letter = Letter::from_token(tok.trim()).ok_or_else(|| Error::Config(format!("unknown mode letter {tok:?} in {mode:?}")))?;
        if letters.contains(&letter) {
            return Err(Error::Config(format!("duplicate mode letter {tok:?} in {mode:?}")));
        }
        letters.push(letter);
    }
    letters.sort();
    if letters.iter().all(|l| *l == Letter::O) {
        return Err(Error::Config(format!("mode {mode:?} selects no kernel")));
    }
    Ok(EmbeddingMode { letters })
}

/// `parse_mode` followed by the head-width check against `d_model`.
pub fn parse_mode_for(mode: &str, d_model: usize, head_dim: Option<usize>) -> Result<EmbeddingMode> {
    let m = parse_mode(mode)?;
    m.head_width(d_model, head_dim)?;
    Ok(m)
}

// ---------------------------------------------------------------------------
// absolute kernels

/// Transformer sinusoid table: row `p` holds `[sin(p ω_0), cos(p ω_0), sin(p ω_1), …]`
/// with `ω_i = 10000^(-2i/d)`.
pub fn fixed_positional(n: usize, d: usize) -> Matrix {
    Matrix::from_fn(n, d, |p, c| {
        let i = c / 2;
        let omega = libm::pow(10000.0, -(2.0 * i as f64) / d as f64);
        let arg = p as f64 * omega;
        if c % 2 == 0 {
            libm::sin(arg)
        } else {
            libm::cos(arg)
        }
    })
}

/// Row lookup into a learnable positional table.
pub fn positional_lookup(table: &Matrix, positions: &[usize]) -> Result<Matrix> {
    let mut out = Matrix::zeros(positions.len(), table.cols());
    for (r, &p) in positions.iter().enumerate() {
        if p >= table.rows() {
            return Err(Error::Bounds(format!("position {p} beyond table of {} rows", table.rows())));
        }
        out.row_mut(r).copy_from_slice(table.row(p));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalendarUnit {
    Year,
    Month,
    DayOfMonth,
    Weekday,
    Hour,
    Minute,
}

/// Calendar decomposition used by the `t` kernel (UTC, proleptic Gregorian).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalendarSpec {
    pub units: Vec<CalendarUnit>,
    pub year_epoch: i64,
    pub n_years: usize,
}

impl Default for CalendarSpec {
    fn default() -> Self {
        Self {
            units: alloc::vec![CalendarUnit::Year, CalendarUnit::Month, CalendarUnit::Weekday, CalendarUnit::Hour],
            year_epoch: 1990,
            n_years: 40,
        }
    }
}

/// `(year, month 1..=12, day 1..=31)` for days since 1970-01-01.
pub fn civil_from_days(days: i64) -> (i64, u32, u32) {
    let z = days + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let month = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let year = yoe as i64 + era * 400 + i64::from(month <= 2);
    (year, month, day)
}

impl CalendarSpec {
    pub fn table_rows(&self, unit: CalendarUnit) -> usize {
        match unit {
            CalendarUnit::Year => self.n_years,
            CalendarUnit::Month => 12,
            CalendarUnit::DayOfMonth => 31,
            CalendarUnit::Weekday => 7,
            CalendarUnit::Hour => 24,
            CalendarUnit::Minute => 60,
        }
    }

    /// Zero-based table row of `timestamp` for `unit`.
    pub fn unit_index(&self, unit: CalendarUnit, timestamp: i64) -> Result<usize> {
        let days = timestamp.div_euclid(86_400);
        let secs = timestamp.rem_euclid(86_400);
        let (year, month, day) = civil_from_days(days);
        let idx = match unit {
            CalendarUnit::Year => {
                let off = year - self.year_epoch;
                if off < 0 || off as usize >= self.n_years {
                    return Err(Error::Bounds(format!(
                        "year {year} outside [{}, {})",
                        self.year_epoch,
                        self.year_epoch + self.n_years as i64
                    )));
                }
                off as usize
            }
            CalendarUnit::Month => month as usize - 1,
            CalendarUnit::DayOfMonth => day as usize - 1,
            // 1970-01-01 was a Thursday; 0 = Sunday
            CalendarUnit::Weekday => (days + 4).rem_euclid(7) as usize,
            CalendarUnit::Hour => (secs / 3600) as usize,
            CalendarUnit::Minute => ((secs / 60) % 60) as usize,
        };
        Ok(idx)
    }

    /// Per-unit table rows for every timestamp: `out[unit][n]`.
    pub fn indices(&self, timestamps: &[i64]) -> Result<Vec<Vec<usize>>> {
        self.units.iter().map(|&u| timestamps.iter().map(|&t| self.unit_index(u, t)).collect()).collect()
    }
}

/// Splits `d_h` across `n_units` as evenly as possible, remainder to the first unit.
pub fn unit_widths(d_h: usize, n_units: usize) -> Vec<usize> {
    let base = d_h / n_units;
    let mut w = alloc::vec![base; n_units];
    w[0] += d_h - base * n_units;
    w
}

/// `Concat[w_i · E_i[unit_i(t)] + b_i]` over the configured calendar units.
pub fn absolute_time_embed(timestamps: &[i64], spec: &CalendarSpec, tables: &[Matrix], scales: &[f64], biases: &[Matrix]) -> Result<Matrix> {
    let idx = spec.indices(timestamps)?;
    let width: usize = tables.iter().map(Matrix::cols).sum();
    let mut out = Matrix::zeros(timestamps.len(), width);
    let mut offset = 0;
    for (u, table) in tables.iter().enumerate() {
        for (n, &row) in idx[u].iter().enumerate() {
            if row >= table.rows() {
                return Err(Error::Bounds(format!("calendar row {row} beyond table of {} rows", table.rows())));
            }
            for c in 0..table.cols() {
                out.set(n, offset + c, scales[u] * table.get(row, c) + biases[u].data()[c]);
            }
        }
        offset += table.cols();
    }
    Ok(out)
}

/// `[cos(w_i t' + b_i), sin(w_i t' + b_i)]` pairs with `t' = t - t_min`.
pub fn bochner_time_embed(timestamps: &[i64], freq: &[f64], phase: &[f64], t_min: i64) -> Matrix {
    Matrix::from_fn(timestamps.len(), 2 * freq.len(), |n, c| {
        let arg = freq[c / 2] * (timestamps[n] - t_min) as f64 + phase[c / 2];
        if c % 2 == 0 {
            libm::cos(arg)
        } else {
            libm::sin(arg)
        }
    })
}

// ---------------------------------------------------------------------------
// relative kernels

/// `D[i][j] = (t_i - t_j) / tau`.
pub fn time_diff_matrix(timestamps: &[i64], tau: f64) -> Matrix {
    Matrix::from_fn(timestamps.len(), timestamps.len(), |i, j| (timestamps[i] - timestamps[j]) as f64 / tau)
}

/// Per-channel frequency ladder `base^(h/d)`, `h = 0..d`: starts at 1, strictly increasing.
pub fn freq_ladder(d: usize, base: f64) -> Vec<f64> {
    (0..d).map(|h| libm::pow(base, h as f64 / d as f64)).collect()
}

pub fn sinusoid_diff_kernel(diffs: &Matrix, freq: &[f64], phase: &[f64]) -> Tensor3 {
    let n = diffs.rows();
    let mut out = Tensor3::zeros(n, diffs.cols(), 2 * freq.len());
    for i in 0..n {
        for j in 0..diffs.cols() {
            let d = diffs.get(i, j);
            let cell = out.at_mut(i, j);
            for h in 0..freq.len() {
                let arg = freq[h] * d + phase[h];
                cell[2 * h] = libm::cos(arg);
                cell[2 * h + 1] = libm::sin(arg);
            }
        }
    }
    out
}

/// `exp(-|d| / freq_h)`: 1 at zero distance, decaying with `|d|`.
pub fn exp_diff_kernel(diffs: &Matrix, freqs: &[f64]) -> Tensor3 {
    pairwise_map(diffs, freqs, |d, f| libm::exp(-libm::fabs(d) / f))
}

/// `log(1 + |d| / freq_h)`: 0 at zero distance, slowly increasing with `|d|`.
pub fn log1p_diff_kernel(diffs: &Matrix, freqs: &[f64]) -> Tensor3 {
    pairwise_map(diffs, freqs, |d, f| libm::log1p(libm::fabs(d) / f))
}

fn pairwise_map(diffs: &Matrix, freqs: &[f64], f: impl Fn(f64, f64) -> f64) -> Tensor3 {
    let mut out = Tensor3::zeros(diffs.rows(), diffs.cols(), freqs.len());
    for i in 0..diffs.rows() {
        for j in 0..diffs.cols() {
            let d = diffs.get(i, j);
            for (o, fr) in out.at_mut(i, j).iter_mut().zip(freqs) {
                *o = f(d, *fr);
            }
        }
    }
    out
}

/// `G[i][j] = exp(-((i - j) - mu)^2 / (2 sigma^2))`.
pub fn gaussian_weights(n: usize, mu: f64, sigma: f64) -> Matrix {
    Matrix::from_fn(n, n, |i, j| {
        let e = (i as f64 - j as f64) - mu;
        libm::exp(-e * e / (2.0 * sigma * sigma))
    })
}

pub fn mode_string(letters: &[Letter]) -> String {
    let mut s = String::new();
    for (k, l) in letters.iter().enumerate() {
        if k > 0 {
            s.push('-');
        }
        s.push(l.as_char());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::string::ToString;
    use core::f64::consts::{E, PI};
    use proptest::prelude::*;

    #[test]
    fn mode_examples() {
        let m = parse_mode("p-b-s-l-r-o").unwrap();
        assert_eq!(m.absolute_kernels().collect::<Vec<_>>(), [Letter::P, Letter::B]);
        assert_eq!(m.relative_kernels().collect::<Vec<_>>(), [Letter::S, Letter::L, Letter::R]);
        assert!(m.noise_enabled());
        assert_eq!(m.head_count(), 5);

        let m = parse_mode("p-s-l-e").unwrap();
        assert_eq!(m.absolute_kernels().collect::<Vec<_>>(), [Letter::P]);
        assert_eq!(m.relative_kernels().collect::<Vec<_>>(), [Letter::S, Letter::L, Letter::E]);
        assert!(!m.noise_enabled());
        assert_eq!(m.head_count(), 4);

        let m = parse_mode("p").unwrap();
        assert_eq!(m.heads(), [HeadKind::Absolute(Letter::P)]);
        assert!(!m.noise_enabled());
    }

    #[test]
    fn mode_errors() {
        for bad in ["x-y", "p-p", "", "o", "p--b", "pb"] {
            assert!(matches!(parse_mode(bad), Err(Error::Config(_))), "{bad}");
        }
        assert!(parse_mode_for("p-b-s-l-r-o", 64, None).is_err());
        assert!(parse_mode_for("p-b-s-l-r-o", 60, None).is_ok());
        assert_eq!(parse_mode("p-b-s-l-r-o").unwrap().head_width(8, Some(2)).unwrap(), 2);
    }

    #[test]
    fn mode_is_order_insensitive_and_canonical() {
        let a = parse_mode("o-r-l-s-b-p").unwrap();
        assert_eq!(a, parse_mode("p-b-s-l-r-o").unwrap());
        assert_eq!(a.to_string(), "p-b-s-l-r-o");
        assert_eq!(parse_mode("e-l-s-p").unwrap().to_string(), "p-s-l-e");
    }

    proptest! {
        #[test]
        fn mode_bijection(mask in 1u8..=255) {
            let letters: Vec<Letter> = Letter::ALL.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, l)| *l).collect();
            let s = mode_string(&letters);
            match parse_mode(&s) {
                Ok(m) => {
                    prop_assert_eq!(m.to_string(), s);
                    prop_assert_eq!(m.letters(), &letters[..]);
                }
                Err(_) => prop_assert_eq!(letters, vec![Letter::O]),
            }
        }
    }

    #[test]
    fn positional_examples() {
        let t = fixed_positional(2, 6);
        assert_eq!(t.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let t = fixed_positional(2, 2);
        assert!((t.get(1, 0) - 0.8415).abs() < 1e-4);
        assert!((t.get(1, 1) - 0.5403).abs() < 1e-4);
        let table = Matrix::from_fn(5, 3, |r, c| (r * 3 + c) as f64);
        let rows = positional_lookup(&table, &[2, 2]).unwrap();
        assert_eq!(rows.row(0), rows.row(1));
        assert!(matches!(positional_lookup(&table, &[5]), Err(Error::Bounds(_))));
    }

    #[test]
    fn calendar_decomposition() {
        // 2000-03-15 12:34:00 UTC, a Wednesday
        let ts = 953_123_640;
        let spec = CalendarSpec::default();
        assert_eq!(civil_from_days(ts / 86_400), (2000, 3, 15));
        assert_eq!(spec.unit_index(CalendarUnit::Month, ts).unwrap(), 2);
        assert_eq!(spec.unit_index(CalendarUnit::Weekday, ts).unwrap(), 3);
        assert_eq!(spec.unit_index(CalendarUnit::Hour, ts).unwrap(), 12);
        assert_eq!(spec.unit_index(CalendarUnit::Minute, ts).unwrap(), 34);
        assert_eq!(spec.unit_index(CalendarUnit::Year, ts).unwrap(), 10);
        assert_eq!(civil_from_days(0), (1970, 1, 1));
        assert_eq!(civil_from_days(-1), (1969, 12, 31));
        assert!(matches!(spec.unit_index(CalendarUnit::Year, 0), Err(Error::Bounds(_))));
    }

    #[test]
    fn absolute_time_examples() {
        let spec = CalendarSpec { units: vec![CalendarUnit::Month, CalendarUnit::Weekday], ..Default::default() };
        let tables = [Matrix::from_fn(12, 3, |r, c| (r + c) as f64), Matrix::from_fn(7, 2, |r, c| (r * c) as f64)];
        let biases = [Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]), Matrix::from_vec(1, 2, vec![4.0, 5.0])];
        let out = absolute_time_embed(&[953_123_640, 0, 86_400 * 400], &spec, &tables, &[0.0, 0.0], &biases).unwrap();
        for n in 0..3 {
            assert_eq!(out.row(n), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        }
        // 2000-03-15 and 2000-03-22 share (month, weekday)
        let out = absolute_time_embed(&[953_123_640, 953_123_640 + 7 * 86_400], &spec, &tables, &[1.0, 0.5], &biases).unwrap();
        assert_eq!(out.row(0), out.row(1));

        // one-hot month rows; March is the third calendar month
        let spec = CalendarSpec { units: vec![CalendarUnit::Month], ..Default::default() };
        let out = absolute_time_embed(&[953_123_640], &spec, &[Matrix::identity(12)], &[1.0], &[Matrix::zeros(1, 12)]).unwrap();
        let hot: Vec<usize> = (0..12).filter(|c| out.get(0, *c) == 1.0).collect();
        assert_eq!(hot, [3 - 1]);
        assert_eq!(out.data().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn unit_width_split() {
        assert_eq!(unit_widths(8, 4), [2, 2, 2, 2]);
        assert_eq!(unit_widths(10, 4), [4, 2, 2, 2]);
    }

    #[test]
    fn bochner_examples() {
        let out = bochner_time_embed(&[100, 101], &[0.3, PI / 2.0], &[0.0, 0.0], 100);
        assert_eq!(out.row(0), &[1.0, 0.0, 1.0, 0.0]);
        assert!(out.get(1, 2).abs() < 1e-12);
        assert!((out.get(1, 3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bochner_translation_invariance() {
        let freq: Vec<f64> = (0..8).map(|i| 0.37 * (i as f64 + 1.0)).collect();
        let phase = vec![0.0; 8];
        let pairs = [(3i64, 10i64), (20, 27), (1000, 1007), (5, 12)];
        let ts: Vec<i64> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
        let emb = bochner_time_embed(&ts, &freq, &phase, 0);
        let dots: Vec<f64> = (0..pairs.len()).map(|k| emb.row(2 * k).iter().zip(emb.row(2 * k + 1)).map(|(a, b)| a * b).sum()).collect();
        let closed: f64 = freq.iter().map(|w| libm::cos(w * -7.0)).sum();
        for d in dots {
            assert!((d - closed).abs() < 1e-6);
        }
    }

    #[test]
    fn time_diff_examples() {
        let d = time_diff_matrix(&[0, 60, 180], 60.0);
        assert_eq!(d, Matrix::from_vec(3, 3, vec![0.0, -1.0, -3.0, 1.0, 0.0, -2.0, 3.0, 2.0, 0.0]));
        assert_eq!(time_diff_matrix(&[5, 5, 5], 2.0), Matrix::zeros(3, 3));
    }

    #[test]
    fn relative_kernel_examples() {
        let zero = Matrix::zeros(1, 1);
        let s = sinusoid_diff_kernel(&zero, &[1.0, 2.0], &[0.0, 0.0]);
        assert_eq!(s.at(0, 0), &[1.0, 0.0, 1.0, 0.0]);
        let s = sinusoid_diff_kernel(&Matrix::scalar(1.0), &[PI], &[0.0]);
        assert!((s.at(0, 0)[0] + 1.0).abs() < 1e-12 && s.at(0, 0)[1].abs() < 1e-12);

        let e = exp_diff_kernel(&zero, &[1.0, 10.0]);
        assert_eq!(e.at(0, 0), &[1.0, 1.0]);
        let e = exp_diff_kernel(&Matrix::scalar(-1.0), &[1.0]);
        assert!((e.at(0, 0)[0] - 0.3679).abs() < 1e-4);

        let l = log1p_diff_kernel(&zero, &[1.0, 3.0]);
        assert_eq!(l.at(0, 0), &[0.0, 0.0]);
        let l = log1p_diff_kernel(&Matrix::scalar(E - 1.0), &[1.0]);
        assert!((l.at(0, 0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn freq_ladder_is_increasing_from_one() {
        let f = freq_ladder(8, 10000.0);
        assert_eq!(f[0], 1.0);
        assert!(f.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gaussian_examples() {
        let g = gaussian_weights(5, 0.0, 1.0);
        for i in 0..5 {
            assert_eq!(g.get(i, i), 1.0);
        }
        assert!((g.get(2, 1) - 0.6065).abs() < 1e-4);
        assert_eq!(g, g.transpose());
    }

    proptest! {
        #[test]
        fn diff_matrix_antisymmetric(ts in proptest::collection::vec(0i64..2_000_000_000, 1..12), tau in 1.0f64..1e5) {
            let d = time_diff_matrix(&ts, tau);
            for i in 0..ts.len() {
                prop_assert_eq!(d.get(i, i), 0.0);
                for j in 0..ts.len() {
                    prop_assert_eq!(d.get(i, j) + d.get(j, i), 0.0);
                }
            }
        }

        #[test]
        fn kernels_finite_and_in_range(ds in proptest::collection::vec(-1e12f64..1e12, 1..16), w in -5.0f64..5.0, b in -5.0f64..5.0) {
            let n = ds.len();
            let d = Matrix::from_vec(1, n, ds.clone());
            let freqs = freq_ladder(4, 10000.0);
            let s = sinusoid_diff_kernel(&d, &[w, 2.0 * w], &[b, -b]);
            prop_assert!(s.data.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
            let e = exp_diff_kernel(&d, &freqs);
            prop_assert!(e.data.iter().all(|v| v.is_finite() && *v >= 0.0 && *v <= 1.0));
            let l = log1p_diff_kernel(&d, &freqs);
            prop_assert!(l.data.iter().all(|v| v.is_finite() && *v >= 0.0));
        }

        #[test]
        fn exp_and_log1p_monotone(a in 0.0f64..100.0, delta in 1e-3f64..100.0) {
            let freqs = freq_ladder(6, 10000.0);
            let d = Matrix::from_vec(1, 2, vec![a, -(a + delta)]);
            let e = exp_diff_kernel(&d, &freqs);
            let l = log1p_diff_kernel(&d, &freqs);
            for h in 0..freqs.len() {
                prop_assert!(e.at(0, 1)[h] < e.at(0, 0)[h]);
                prop_assert!(l.at(0, 1)[h] > l.at(0, 0)[h]);
            }
        }

        #[test]
        fn log1p_concave(a in 0.0f64..1e3, step in 1e-2f64..10.0) {
            let d = Matrix::from_vec(1, 3, vec![a, a + step, a + 2.0 * step]);
            let l = log1p_diff_kernel(&d, &[1.0]);
            let (x, y, z) = (l.at(0, 0)[0], l.at(0, 1)[0], l.at(0, 2)[0]);
            prop_assert!(y - x >= z - y - 1e-12);
        }

        #[test]
        fn gaussian_in_unit_interval(n in 1usize..12, mu in -3.0f64..3.0, sigma in 0.5f64..10.0) {
            let g = gaussian_weights(n, mu, sigma);
            prop_assert!(g.data().iter().all(|v| *v > 0.0 && *v <= 1.0));
        }
    }
}
