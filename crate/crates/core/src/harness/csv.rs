use std::io::Write;

use crate::agents::RunRecord;
use crate::error::Result;

pub const BASE_COLUMNS: &str = "t,episode,stopped,delta,alpha,state_norm,pi_error,u_norm";
pub const FILTER_COLUMNS: &str = "est_error_norm,sigma_trace";

/// Writes every `stride`-th record as one CSV row. Floats use the shortest
/// representation that round-trips, so equal values give equal bytes.
pub struct CsvSink<W: Write> {
    out: W,
    stride: u64,
    filter_columns: bool,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W, stride: u64, filter_columns: bool) -> Result<Self> {
        if filter_columns {
            writeln!(out, "{BASE_COLUMNS},{FILTER_COLUMNS}")?;
        } else {
            writeln!(out, "{BASE_COLUMNS}")?;
        }
        Ok(CsvSink {
            out,
            stride: stride.max(1),
            filter_columns,
        })
    }

    pub fn write(&mut self, r: &RunRecord) -> Result<()> {
        if r.t % self.stride != 0 {
            return Ok(());
        }
        let pi_error = r.pi_error.map(|e| e.to_string()).unwrap_or_default();
        write!(
            self.out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.episode,
            u8::from(r.stopped),
            r.delta,
            r.alpha,
            r.state_norm,
            pi_error,
            r.u_norm()
        )?;
        if self.filter_columns {
            match &r.filter {
                Some(f) => write!(self.out, ",{},{}", f.est_error_norm, f.sigma_trace)?,
                None => write!(self.out, ",,")?,
            }
        }
        writeln!(self.out)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
