//! File exchange formats: trajectory CSVs, the scenario manifest, and loss
//! history records. All writes are atomic (temp file, then rename).

use std::path::{Path, PathBuf};

use crate::error::{Result, TnfsError};
use crate::plant::{ChannelEffect, FaultId, FaultMode, FaultSpec, Trajectory};
use crate::train::LossReport;

/// 17 significant digits: enough to reproduce any f64 bit-exactly on read.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes via a temp file in the same directory, then renames into place.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = PathBuf::from(dir);
    let base = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    tmp.push(format!(".{base}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, content).map_err(|e| TnfsError::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| TnfsError::io(path.display().to_string(), e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| TnfsError::io(path.display().to_string(), e))
}

fn format_err(path: &Path, detail: impl Into<String>) -> TnfsError {
    TnfsError::Format {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

/// Trajectory CSV: header `minute,<channel>...`, one row per timestep,
/// decimal point, no thousands separators.
pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let mut out = String::new();
    out.push_str("minute");
    for name in &trajectory.channel_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, &t) in trajectory.timestamps.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for channel in &trajectory.channels {
            out.push(',');
            out.push_str(&fmt_float(channel[i]));
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

/// Reads a trajectory CSV back into (timestamps, channel names, per-channel
/// series). Fault metadata lives in the manifest, not the CSV.
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<f64>, Vec<String>, Vec<Vec<f64>>)> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err(path, "empty trajectory file"))?;
    let mut cols = header.split(',');
    if cols.next() != Some("minute") {
        return Err(format_err(path, "header must start with `minute`"));
    }
    let names: Vec<String> = cols.map(str::to_string).collect();
    if names.is_empty() {
        return Err(format_err(path, "no channels in header"));
    }
    let mut timestamps = Vec::new();
    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let t: f64 = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| format_err(path, format!("bad minute on data row {}", lineno + 1)))?;
        timestamps.push(t);
        for (ch, slot) in channels.iter_mut().enumerate() {
            let token = parts.next().ok_or_else(|| {
                format_err(path, format!("row {} missing channel {}", lineno + 1, names[ch]))
            })?;
            slot.push(token.parse().map_err(|_| {
                format_err(path, format!("bad value {token:?} on row {}", lineno + 1))
            })?);
        }
        if parts.next().is_some() {
            return Err(format_err(path, format!("row {} has extra columns", lineno + 1)));
        }
    }
    if timestamps.is_empty() {
        return Err(format_err(path, "no data rows"));
    }
    Ok((timestamps, names, channels))
}

/// One manifest record per written scenario file.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub fault: FaultSpec,
    pub seed: u64,
    pub duration_minutes: f64,
    pub step_minutes: f64,
}

fn effects_to_text(effects: &[ChannelEffect]) -> String {
    if effects.is_empty() {
        return "-".to_string();
    }
    effects
        .iter()
        .map(|e| format!("{}:{}", e.channel, e.sign))
        .collect::<Vec<_>>()
        .join(";")
}

fn effects_from_text(text: &str) -> Result<Vec<ChannelEffect>> {
    if text == "-" {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|pair| {
            let (name, sign) = pair.split_once(':').ok_or_else(|| {
                TnfsError::invalid(format!("bad channel effect {pair:?} in manifest"))
            })?;
            let sign: f64 = sign
                .parse()
                .map_err(|_| TnfsError::invalid(format!("bad sign in {pair:?}")))?;
            Ok(ChannelEffect {
                channel: name.to_string(),
                sign,
            })
        })
        .collect()
}

/// Manifest: blank-line separated records of `key value` lines.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&format!("file {}\n", entry.file));
        out.push_str(&format!("fault {}\n", entry.fault.fault_id));
        out.push_str(&format!(
            "mode {}\n",
            if entry.fault.is_normal() {
                "-".to_string()
            } else {
                entry.fault.mode.to_string()
            }
        ));
        out.push_str(&format!("onset_minute {}\n", entry.fault.onset_minute));
        out.push_str(&format!("magnitude {}\n", entry.fault.magnitude));
        out.push_str(&format!(
            "channels {}\n",
            effects_to_text(&entry.fault.affected_channels)
        ));
        out.push_str(&format!("seed {}\n", entry.seed));
        out.push_str(&format!("duration_minutes {}\n", entry.duration_minutes));
        out.push_str(&format!("step_minutes {}\n", entry.step_minutes));
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = read_file(path)?;
    let mut entries = Vec::new();
    for block in text.split("\n\n") {
        let block = block.trim();
        if block.is_empty() {
            continue;
        }
        let mut file = None;
        let mut fault_id = None;
        let mut mode = None;
        let mut onset = 0.0;
        let mut magnitude = 0.0;
        let mut channels = Vec::new();
        let mut seed = 0u64;
        let mut duration = 0.0;
        let mut step = 0.0;
        for line in block.lines() {
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| format_err(path, format!("bad manifest line {line:?}")))?;
            let value = value.trim();
            match key {
                "file" => file = Some(value.to_string()),
                "fault" => fault_id = Some(value.parse::<FaultId>()?),
                "mode" => {
                    mode = if value == "-" {
                        None
                    } else {
                        Some(value.parse::<FaultMode>()?)
                    }
                }
                "onset_minute" => {
                    onset = value
                        .parse()
                        .map_err(|_| format_err(path, "bad onset_minute"))?
                }
                "magnitude" => {
                    magnitude = value
                        .parse()
                        .map_err(|_| format_err(path, "bad magnitude"))?
                }
                "channels" => channels = effects_from_text(value)?,
                "seed" => seed = value.parse().map_err(|_| format_err(path, "bad seed"))?,
                "duration_minutes" => {
                    duration = value
                        .parse()
                        .map_err(|_| format_err(path, "bad duration_minutes"))?
                }
                "step_minutes" => {
                    step = value
                        .parse()
                        .map_err(|_| format_err(path, "bad step_minutes"))?
                }
                other => return Err(format_err(path, format!("unknown manifest key {other:?}"))),
            }
        }
        let fault_id = fault_id.ok_or_else(|| format_err(path, "record missing fault"))?;
        let fault = if fault_id == FaultId::Normal {
            FaultSpec::normal()
        } else {
            FaultSpec {
                fault_id,
                mode: mode.ok_or_else(|| format_err(path, "faulty record missing mode"))?,
                onset_minute: onset,
                magnitude,
                affected_channels: channels,
            }
        };
        entries.push(ManifestEntry {
            file: file.ok_or_else(|| format_err(path, "record missing file"))?,
            fault,
            seed,
            duration_minutes: duration,
            step_minutes: step,
        });
    }
    Ok(entries)
}

/// Loads every trajectory a manifest points at, reattaching fault metadata.
pub fn load_scenario_dir(dir: &Path) -> Result<Vec<Trajectory>> {
    let manifest = read_manifest(&dir.join("manifest.txt"))?;
    if manifest.is_empty() {
        return Err(format_err(&dir.join("manifest.txt"), "empty manifest"));
    }
    let mut trajectories = Vec::with_capacity(manifest.len());
    for entry in &manifest {
        let (timestamps, channel_names, channels) = read_trajectory_csv(&dir.join(&entry.file))?;
        trajectories.push(Trajectory {
            timestamps,
            channel_names,
            channels,
            fault: entry.fault.clone(),
        });
    }
    Ok(trajectories)
}

/// Loss history: line-oriented `epoch,train_mse,validation_mse` records.
pub fn write_loss_history(path: &Path, history: &[LossReport]) -> Result<()> {
    let mut out = String::from("epoch,train_mse,validation_mse\n");
    for report in history {
        let val = report
            .validation_mse
            .map(fmt_float)
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{}\n",
            report.epoch,
            fmt_float(report.train_mse),
            val
        ));
    }
    write_atomic(path, &out)
}
