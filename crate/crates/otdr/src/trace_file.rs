//! Trace files: a JSON header line followed by the samples, either as a
//! little-endian `f64` block or as CSV rows.
//!
//! Binary: `{header}\n` then `n_samples * 8` bytes.
//! CSV: `# {header}` then `index,distance_m,power` and one row per sample.

use std::path::Path;

use otdr_core::trace_sim::{AcquisitionConfig, EventTruth, OtdrTrace};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

pub const TRACE_FORMAT: &str = "otdr-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TraceEncoding {
    #[default]
    Binary,
    Csv,
}

impl TraceEncoding {
    pub fn extension(self) -> &'static str {
        match self {
            TraceEncoding::Binary => "otdr",
            TraceEncoding::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub config: AcquisitionConfig,
    pub events: Vec<EventTruth>,
    /// Ground-truth SNR per event; `null` for a noiseless trace.
    pub snr_db: Vec<Option<f64>>,
    pub n_samples: usize,
}

impl TraceHeader {
    fn of(trace: &OtdrTrace) -> Self {
        TraceHeader {
            format: TRACE_FORMAT.into(),
            version: TRACE_VERSION,
            config: trace.config.clone(),
            events: trace.events.clone(),
            snr_db: trace.snr_db.iter().map(|&s| s.is_finite().then_some(s)).collect(),
            n_samples: trace.samples.len(),
        }
    }

    fn into_trace(self, samples: Vec<f64>) -> OtdrTrace {
        OtdrTrace {
            samples,
            config: self.config,
            events: self.events,
            snr_db: self.snr_db.into_iter().map(|s| s.unwrap_or(f64::INFINITY)).collect(),
        }
    }
}

pub fn encode_trace(trace: &OtdrTrace, encoding: TraceEncoding) -> Vec<u8> {
    let header = serde_json::to_string(&TraceHeader::of(trace)).expect("trace header serializes");
    match encoding {
        TraceEncoding::Binary => {
            let mut out = Vec::with_capacity(header.len() + 1 + 8 * trace.samples.len());
            out.extend_from_slice(header.as_bytes());
            out.push(b'\n');
            for s in &trace.samples {
                out.extend_from_slice(&s.to_le_bytes());
            }
            out
        }
        TraceEncoding::Csv => {
            let dx = trace.config.sampling_interval_m;
            let mut out = format!("# {header}\nindex,distance_m,power\n");
            for (i, s) in trace.samples.iter().enumerate() {
                out.push_str(&format!("{i},{},{s}\n", i as f64 * dx));
            }
            out.into_bytes()
        }
    }
}

/// Parses either encoding; the first byte tells them apart.
pub fn decode_trace(bytes: &[u8]) -> Result<OtdrTrace> {
    let bad = |msg: String| Error::Data(format!("trace file: {msg}"));
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let first = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8".into()))?;
    let (csv, json) = match first.strip_prefix('#') {
        Some(rest) => (true, rest.trim()),
        None => (false, first),
    };
    let header: TraceHeader =
        serde_json::from_str(json).map_err(|e| bad(format!("invalid header: {e}")))?;
    if header.format != TRACE_FORMAT {
        return Err(bad(format!("unknown format `{}`", header.format)));
    }
    if header.version != TRACE_VERSION {
        return Err(bad(format!(
            "version {} is not supported (expected {TRACE_VERSION})",
            header.version
        )));
    }
    let body = &bytes[nl + 1..];
    let samples = if csv {
        let text = std::str::from_utf8(body).map_err(|_| bad("body is not UTF-8".into()))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "index,distance_m,power" => {}
            other => return Err(bad(format!("unexpected column header {other:?}"))),
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                line.rsplit(',')
                    .next()
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| bad(format!("row {} is not `index,distance_m,power`", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        if body.len() != 8 * header.n_samples {
            return Err(bad(format!(
                "expected {} sample bytes, found {}",
                8 * header.n_samples,
                body.len()
            )));
        }
        body.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    if samples.len() != header.n_samples {
        return Err(bad(format!(
            "header announces {} samples, found {}",
            header.n_samples,
            samples.len()
        )));
    }
    Ok(header.into_trace(samples))
}

pub fn write_trace(path: &Path, trace: &OtdrTrace, encoding: TraceEncoding) -> Result<()> {
    fsio::write_atomic(path, &encode_trace(trace, encoding))
}

pub fn read_trace(path: &Path) -> Result<OtdrTrace> {
    decode_trace(&fsio::read(path)?).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use otdr_core::trace_sim::synthesize_trace;

    fn small() -> OtdrTrace {
        let cfg = AcquisitionConfig {
            fiber_length_m: 80.0,
            seed: 4,
            ..Default::default()
        };
        synthesize_trace(&cfg, &[(40.0, -30.0)]).unwrap()
    }

    #[test]
    fn both_encodings_round_trip_exactly() {
        let t = small();
        for enc in [TraceEncoding::Binary, TraceEncoding::Csv] {
            assert_eq!(decode_trace(&encode_trace(&t, enc)).unwrap(), t, "{enc:?}");
        }
    }

    #[test]
    fn noiseless_snr_survives_as_infinity() {
        let cfg = AcquisitionConfig {
            fiber_length_m: 80.0,
            base_noise_sigma: 0.0,
            ..Default::default()
        };
        let t = synthesize_trace(&cfg, &[(40.0, -30.0)]).unwrap();
        let back = decode_trace(&encode_trace(&t, TraceEncoding::Binary)).unwrap();
        assert_eq!(back.snr_db, vec![f64::INFINITY]);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let bytes = encode_trace(&small(), TraceEncoding::Binary);
        let err = decode_trace(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("sample bytes"), "{err}");
    }
}
