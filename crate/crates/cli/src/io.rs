//! Signal and matrix files: CSV (`ch0,ch1,...`) and 16-bit PCM mono WAV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ccs_ica::eval::fmt_sig9;
use ccs_ica::{SampleMatrix, SquareMatrix};

use crate::error::CliError;

/// Sample rate written when nothing else is known.
pub const DEFAULT_SAMPLE_RATE: u32 = 8000;

const PCM_SCALE: f64 = 32768.0;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a CSV with a header row and one column per channel.
pub fn read_signals_csv(path: &Path) -> Result<SampleMatrix, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let channels = reader.headers().map_err(csv_err(path))?.len();
    if channels == 0 {
        return Err(format_err(path, "no columns"));
    }
    let mut rows = vec![Vec::new(); channels];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        for (m, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format_err(path, format!("row {}: '{field}' is not a number", line + 2)))?;
            rows[m].push(v);
        }
    }
    if rows[0].is_empty() {
        return Err(format_err(path, "no samples"));
    }
    SampleMatrix::from_rows(&rows).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_signals_csv(path: &Path, x: &SampleMatrix) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let header: Vec<String> = (0..x.channels()).map(|m| format!("ch{m}")).collect();
    w.write_record(&header).map_err(csv_err(path))?;
    for t in 0..x.samples() {
        w.write_record((0..x.channels()).map(|m| fmt_sig9(x.get(m, t))))
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Square matrix as CSV, header `c0,c1,...`, one row per matrix row.
pub fn write_matrix_csv(path: &Path, a: &SquareMatrix) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let header: Vec<String> = (0..a.dim()).map(|j| format!("c{j}")).collect();
    w.write_record(&header).map_err(csv_err(path))?;
    for i in 0..a.dim() {
        w.write_record(a.row(i).iter().map(|&v| fmt_sig9(v)))
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["iter", "divergence"]).map_err(csv_err(path))?;
    for (k, d) in trace.iter().enumerate() {
        w.write_record([k.to_string(), fmt_sig9(*d)]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads one mono 16-bit PCM file per channel, scaled to `[-1, 1)`.
/// Returns the signals and the sample rate of the first file.
pub fn read_signals_wav(paths: &[PathBuf]) -> Result<(SampleMatrix, u32), CliError> {
    let mut rows = Vec::with_capacity(paths.len());
    let mut rate = None;
    for path in paths {
        let reader = hound::WavReader::open(path).map_err(|e| match e {
            hound::Error::IoError(source) => CliError::Io {
                path: path.clone(),
                source,
            },
            other => format_err(path, other.to_string()),
        })?;
        let spec = reader.spec();
        if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
            return Err(format_err(
                path,
                format!(
                    "unsupported WAV format ({} channels, {}-bit {:?}); need 16-bit PCM mono",
                    spec.channels, spec.bits_per_sample, spec.sample_format
                ),
            ));
        }
        rate.get_or_insert(spec.sample_rate);
        let samples: Vec<f64> = reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM_SCALE))
            .collect::<Result<_, _>>()
            .map_err(|e| format_err(path, e.to_string()))?;
        rows.push(samples);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(CliError::Usage("no WAV samples to read".into()));
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(CliError::Usage("WAV inputs have different lengths".into()));
    }
    let x = SampleMatrix::from_rows(&rows).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((x, rate.unwrap_or(DEFAULT_SAMPLE_RATE)))
}

/// Writes `samples / max|samples|` as 16-bit PCM mono.
pub fn write_wav(path: &Path, samples: &[f64], rate: u32) -> Result<(), CliError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let peak = samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let gain = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => format_err(path, other.to_string()),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &v in samples {
        let q = (v * gain * PCM_SCALE).round().clamp(-PCM_SCALE, PCM_SCALE - 1.0);
        w.write_sample(q as i16).map_err(wrap)?;
    }
    w.finalize().map_err(wrap)
}

/// Writes `<stem>_ch<m>.wav` for every channel and returns the paths.
pub fn write_signals_wav(dir: &Path, stem: &str, x: &SampleMatrix, rate: u32) -> Result<Vec<PathBuf>, CliError> {
    (0..x.channels())
        .map(|m| {
            let path = dir.join(format!("{stem}_ch{m}.wav"));
            write_wav(&path, x.row(m), rate)?;
            Ok(path)
        })
        .collect()
}

/// Loads signals from a single CSV or from one WAV file per channel.
pub fn read_signals(paths: &[PathBuf]) -> Result<(SampleMatrix, Option<u32>), CliError> {
    let is_wav = |p: &PathBuf| {
        p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
    };
    match paths {
        [] => Err(CliError::Usage("no input given".into())),
        [single] if !is_wav(single) => Ok((read_signals_csv(single)?, None)),
        many if many.iter().all(is_wav) => {
            let (x, rate) = read_signals_wav(many)?;
            Ok((x, Some(rate)))
        }
        _ => Err(CliError::Usage(
            "give either one CSV file or one WAV file per channel".into(),
        )),
    }
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| format_err(path, e.to_string()))?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Fails unless `dir` exists and is a directory.
pub fn require_dir(dir: &Path) -> Result<(), CliError> {
    match std::fs::metadata(dir) {
        Ok(m) if m.is_dir() => Ok(()),
        Ok(_) => Err(CliError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        }),
        Err(source) => Err(CliError::Io {
            path: dir.to_path_buf(),
            source,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_nine_digits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let x = SampleMatrix::from_rows(&[vec![1.0 / 3.0, -2.5e-7, 12345.678912], vec![0.0, 1e10, -7.0]]).unwrap();
        write_signals_csv(&path, &x).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("ch0,ch1\n"));
        let back = read_signals_csv(&path).unwrap();
        for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 5e-9 * a.abs(), "{a} {b}");
        }
    }

    #[test]
    fn wav_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let v: Vec<f64> = (0..500).map(|i| (i as f64 * 0.1).sin() * 3.0 - 0.2).collect();
        write_wav(&path, &v, 8000).unwrap();
        let (back, rate) = read_signals_wav(&[path]).unwrap();
        assert_eq!(rate, 8000);
        let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for (a, b) in v.iter().zip(back.row(0)) {
            assert!((a / peak - b).abs() <= 2f64.powi(-15), "{a} {b}");
        }
    }

    #[test]
    fn rejects_stereo_wav() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_signals_wav(&[path]), Err(CliError::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_signals_csv(Path::new("/nonexistent/x.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
