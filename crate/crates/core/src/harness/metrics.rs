//! Per-episode metrics rows and their CSV encoding.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::Mode;

pub const CSV_HEADER: &str =
    "mode,seed,episode,agent_id,episode_reward,avg_user_reward,joint_reward";

/// One agent's outcome in one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub mode: Mode,
    pub seed: u64,
    pub episode: usize,
    pub agent_id: usize,
    /// Sum of the agent's per-step normalized rewards.
    pub episode_reward: f64,
    /// Mean of `episode_reward` over agents in this episode.
    pub avg_user_reward: f64,
    /// Sum of `episode_reward` over agents in this episode.
    pub joint_reward: f64,
}

/// Formats `v` with 9 significant digits, `%.9g` style.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        return format!("{}e{exp}", trim_fraction(mantissa));
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_fraction(&format!("{v:.decimals$}")).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn format_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.mode,
        r.seed,
        r.episode,
        r.agent_id,
        format_sig9(r.episode_reward),
        format_sig9(r.avg_user_reward),
        format_sig9(r.joint_reward)
    )
}

/// Streaming CSV writer; the header is written on creation.
pub struct MetricsWriter<W: Write> {
    out: W,
    path: PathBuf,
}

impl MetricsWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Self::new(BufWriter::new(file), path)
    }
}

impl<W: Write> MetricsWriter<W> {
    /// `path` is only used to label errors.
    pub fn new(mut out: W, path: PathBuf) -> Result<Self> {
        writeln!(out, "{CSV_HEADER}").map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok(Self { out, path })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        writeln!(self.out, "{}", format_row(record)).map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(self.out)
    }
}

/// Writes all records to `path`.
pub fn write_csv<'a, I>(records: I, path: impl AsRef<Path>) -> Result<()>
where
    I: IntoIterator<Item = &'a MetricsRecord>,
{
    let mut writer = MetricsWriter::create(path)?;
    for r in records {
        writer.write(r)?;
    }
    writer.finish().map(drop)
}

/// Reads a metrics CSV back.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(Error::input(format!(
            "{} has header `{header}`, expected `{CSV_HEADER}`",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}
