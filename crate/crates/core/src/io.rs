//! CSV and JSON encodings of kernels, profiles, curves and fit reports.
//!
//! Numbers are written with 12 significant digits (C's `%.12g`), so output
//! files are byte-stable across platforms.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{CalibrationSet, IntensityProfile, Observations};
use crate::process::{LRange, TransitionKernel};
use crate::reconstruct::FitReport;
use crate::stats::{UncertaintyBand, WorkDistribution};

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `%.12g`-style formatting.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIGNIFICANT_DIGITS as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to the value [`fmt_num`] prints.
pub fn round_sig(x: f64) -> f64 {
    fmt_num(x).parse().unwrap_or(x)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

fn parse_i64(s: &str) -> Result<i64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("not an integer: {s:?}")))
}

/// Header `ell,<ℓ′...>`, then one row per input ℓ.
pub fn write_kernel_csv<W: Write>(kernel: &TransitionKernel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["ell".to_string()];
    header.extend(kernel.output_range().iter().map(|l| l.to_string()));
    w.write_record(&header)?;
    for (ell, row) in kernel.rows() {
        let mut rec = vec![ell.to_string()];
        rec.extend(row.iter().map(|v| fmt_num(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn contiguous(labels: &[i64], what: &str) -> Result<LRange> {
    let (Some(lo), Some(hi)) = (labels.first(), labels.last()) else {
        return Err(Error::Parse(format!("no {what}")));
    };
    let range = LRange::new(*lo, *hi)?;
    if labels.iter().zip(range.iter()).any(|(a, b)| *a != b) || labels.len() != range.len() {
        return Err(Error::Parse(format!("{what} are not consecutive ascending ℓ values")));
    }
    Ok(range)
}

pub fn read_kernel_csv<R: Read>(input: R) -> Result<TransitionKernel> {
    let mut r = csv::Reader::from_reader(input);
    let outputs: Vec<i64> = r.headers()?.iter().skip(1).map(parse_i64).collect::<Result<_>>()?;
    let output_range = contiguous(&outputs, "output columns")?;
    let mut inputs = Vec::new();
    let mut entries = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        inputs.push(parse_i64(&rec[0])?);
        if rec.len() != outputs.len() + 1 {
            return Err(Error::Parse(format!("row ℓ = {} has {} columns", &rec[0], rec.len() - 1)));
        }
        for v in rec.iter().skip(1) {
            entries.push(parse_f64(v)?);
        }
    }
    let input_range = contiguous(&inputs, "input rows")?;
    TransitionKernel::new(input_range, output_range, entries)
}

/// Header `ell,0,1,...`, then one row of bins per ℓ.
pub fn write_profiles_csv<'a, W: Write>(
    profiles: impl IntoIterator<Item = (i64, &'a IntensityProfile)>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header_written = false;
    for (ell, p) in profiles {
        if !header_written {
            let mut header = vec!["ell".to_string()];
            header.extend((0..p.len()).map(|k| k.to_string()));
            w.write_record(&header)?;
            header_written = true;
        }
        let mut rec = vec![ell.to_string()];
        rec.extend(p.bins().iter().map(|v| fmt_num(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_calibration_csv<W: Write>(calib: &CalibrationSet, out: W) -> Result<()> {
    write_profiles_csv(calib.ell_range().iter().zip(calib.profiles()), out)
}

pub fn write_observations_csv<W: Write>(obs: &Observations, out: W) -> Result<()> {
    write_profiles_csv(obs.iter().map(|(l, p)| (*l, p)), out)
}

pub fn read_profiles_csv<R: Read>(input: R) -> Result<Observations> {
    let mut r = csv::Reader::from_reader(input);
    let bins = r.headers()?.len().saturating_sub(1);
    let mut obs = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != bins + 1 {
            return Err(Error::Parse(format!("row ℓ = {} has {} bins, expected {bins}", &rec[0], rec.len() - 1)));
        }
        let ell = parse_i64(&rec[0])?;
        let values: Vec<f64> = rec.iter().skip(1).map(parse_f64).collect::<Result<_>>()?;
        obs.insert(ell, IntensityProfile::new(values)?);
    }
    Ok(obs)
}

/// Columns `beta_hw,value,std,ci_lo,ci_hi`.
pub fn write_band_csv<W: Write>(band: &UncertaintyBand, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["beta_hw", "value", "std", "ci_lo", "ci_hi"])?;
    for i in 0..band.beta_grid.len() {
        w.write_record([
            fmt_num(band.beta_grid[i]),
            fmt_num(band.mean[i]),
            fmt_num(band.std[i]),
            fmt_num(band.ci95_lo[i]),
            fmt_num(band.ci95_hi[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of `(beta_hw, value, std, ci_lo, ci_hi)`.
pub fn read_band_csv<R: Read>(input: R) -> Result<Vec<[f64; 5]>> {
    let mut r = csv::Reader::from_reader(input);
    r.records()
        .map(|rec| {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Parse(format!("band row has {} columns", rec.len())));
            }
            Ok([parse_f64(&rec[0])?, parse_f64(&rec[1])?, parse_f64(&rec[2])?, parse_f64(&rec[3])?, parse_f64(&rec[4])?])
        })
        .collect()
}

/// Columns `work,probability`.
pub fn write_work_csv<W: Write>(dist: &WorkDistribution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["work", "probability"])?;
    for (wv, p) in dist.atoms() {
        w.write_record([wv.to_string(), fmt_num(*p)])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON form of a [`FitReport`]; the kernel is a nested row-major array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReportJson {
    pub input_range: LRange,
    pub output_range: LRange,
    pub kernel: Vec<Vec<f64>>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&FitReport> for FitReportJson {
    fn from(rep: &FitReport) -> Self {
        Self {
            input_range: rep.kernel.input_range(),
            output_range: rep.kernel.output_range(),
            kernel: rep.kernel.rows().map(|(_, r)| r.iter().map(|v| round_sig(*v)).collect()).collect(),
            residual: round_sig(rep.residual),
            iterations: rep.iterations,
            converged: rep.converged,
        }
    }
}

impl FitReportJson {
    pub fn to_kernel(&self) -> Result<TransitionKernel> {
        TransitionKernel::from_rows(self.input_range, self.output_range, &self.kernel)
    }
}

pub fn write_fit_report_json<W: Write>(report: &FitReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &FitReportJson::from(report))?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::shift_superposition_kernel;
    use proptest::prelude::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.0 / 3.0 * 1e-7), "6.66666666667e-08");
        assert_eq!(fmt_num(123456789012345.0), "1.23456789012e+14");
        assert_eq!(fmt_num(-42.125), "-42.125");
        assert_eq!(fmt_num(0.0001), "0.0001");
    }

    proptest! {
        #[test]
        fn formatted_numbers_keep_twelve_digits(x in -1e6f64..1e6) {
            let y: f64 = fmt_num(x).parse().unwrap();
            prop_assert!((x - y).abs() <= 1e-11 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn kernel_csv_layout() {
        let k = shift_superposition_kernel(&[(1, 0.5), (-1, 0.5)], LRange::symmetric(1)).unwrap();
        let mut buf = Vec::new();
        write_kernel_csv(&k, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "ell,-2,-1,0,1,2\n-1,0.5,0,0.5,0,0\n0,0,0.5,0,0.5,0\n1,0,0,0.5,0,0.5\n");
        assert_eq!(read_kernel_csv(buf.as_slice()).unwrap(), k);
    }

    #[test]
    fn malformed_kernel_csv() {
        assert!(read_kernel_csv("ell,0,2\n0,1,0\n".as_bytes()).is_err());
        assert!(read_kernel_csv("ell,0,1\n0,1\n".as_bytes()).is_err());
        assert!(read_kernel_csv("ell,0,1\n0,x,0\n".as_bytes()).is_err());
        assert!(read_kernel_csv("ell,0,1\n0,0.5,0.4\n".as_bytes()).is_err());
    }
}
