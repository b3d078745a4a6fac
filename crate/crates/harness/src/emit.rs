//! Record emission and loading.
//!
//! CSV files start with one `#`-prefixed line carrying the full resolved
//! config as JSON, followed by a fixed, documented column schema per
//! scenario. JSON files carry `{config, records, summary}`. Loading either
//! format reproduces the records exactly.
//!
//! CSV schemas:
//! - count:  `trial,m,estimate,in_range,slots`
//! - cseek / ckseek: `trial,n,c,k,k_max,delta,diam,success,sound,slot_budget,discovery_slots`
//! - cgcast: `trial,n,delta,diam,colored,phases_used,flagged_edges,informed_count,all_informed,last_informed_slots,dissem_slots,total_slots`
//! - games:  `game,c,k,player,trial,rounds,won` (the reduction scenario adds
//!   `oracle_slot,matches_oracle`)
//!
//! Empty cells encode `None`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Scenario};
use crate::runner::{
    CgcastRecord, CountRecord, GameRecord, HarnessError, RecordSet, RunOutput, SeekRecord, Summary,
};

#[derive(Serialize, Deserialize)]
struct JsonEnvelope {
    config: ExperimentConfig,
    summary: Summary,
    records: RecordSet,
}

fn opt_u64(s: &str) -> Result<Option<u64>, HarnessError> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|e| HarnessError::Other(format!("bad integer {s:?}: {e}")))
    }
}

fn opt_bool(s: &str) -> Result<Option<bool>, HarnessError> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|e| HarnessError::Other(format!("bad bool {s:?}: {e}")))
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| HarnessError::Other(format!("bad field {s:?}: {e}")))
}

fn csv_bytes(output: &RunOutput) -> Result<Vec<u8>, HarnessError> {
    let mut buf = Vec::new();
    let config_json = serde_json::to_string(&output.config)
        .map_err(|e| HarnessError::Other(e.to_string()))?;
    writeln!(buf, "# {config_json}")?;
    let summary_json = serde_json::to_string(&output.summary)
        .map_err(|e| HarnessError::Other(e.to_string()))?;
    writeln!(buf, "# {summary_json}")?;

    let mut w = csv::Writer::from_writer(buf);
    match &output.records {
        RecordSet::Count(rows) => {
            w.write_record(["trial", "m", "estimate", "in_range", "slots"])
                .map_err(csv_err)?;
            for r in rows {
                w.write_record([
                    r.trial.to_string(),
                    r.m.to_string(),
                    r.estimate.to_string(),
                    r.in_range.to_string(),
                    r.slots.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        RecordSet::Seek(rows) => {
            w.write_record([
                "trial",
                "n",
                "c",
                "k",
                "k_max",
                "delta",
                "diam",
                "success",
                "sound",
                "slot_budget",
                "discovery_slots",
            ])
            .map_err(csv_err)?;
            for r in rows {
                w.write_record([
                    r.trial.to_string(),
                    r.n.to_string(),
                    r.c.to_string(),
                    r.k.to_string(),
                    r.k_max.to_string(),
                    r.delta.to_string(),
                    r.diam.to_string(),
                    r.success.to_string(),
                    r.sound.to_string(),
                    r.slot_budget.to_string(),
                    r.discovery_slots.map(|v| v.to_string()).unwrap_or_default(),
                ])
                .map_err(csv_err)?;
            }
        }
        RecordSet::Cgcast(rows) => {
            w.write_record([
                "trial",
                "n",
                "delta",
                "diam",
                "colored",
                "phases_used",
                "flagged_edges",
                "informed_count",
                "all_informed",
                "last_informed_slots",
                "dissem_slots",
                "total_slots",
            ])
            .map_err(csv_err)?;
            for r in rows {
                w.write_record([
                    r.trial.to_string(),
                    r.n.to_string(),
                    r.delta.to_string(),
                    r.diam.to_string(),
                    r.colored.to_string(),
                    r.phases_used.to_string(),
                    r.flagged_edges.to_string(),
                    r.informed_count.to_string(),
                    r.all_informed.to_string(),
                    r.last_informed_slots
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                    r.dissem_slots.to_string(),
                    r.total_slots.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        RecordSet::Game(rows) => {
            let reduction = matches!(output.config.scenario, Scenario::GameReduction { .. });
            let mut header = vec!["game", "c", "k", "player", "trial", "rounds", "won"];
            if reduction {
                header.extend(["oracle_slot", "matches_oracle"]);
            }
            w.write_record(&header).map_err(csv_err)?;
            for r in rows {
                let mut row = vec![
                    r.game.clone(),
                    r.c.to_string(),
                    r.k.to_string(),
                    r.player.clone(),
                    r.trial.to_string(),
                    r.rounds.to_string(),
                    r.won.to_string(),
                ];
                if reduction {
                    row.push(r.oracle_slot.map(|v| v.to_string()).unwrap_or_default());
                    row.push(
                        r.matches_oracle
                            .map(|v| v.to_string())
                            .unwrap_or_default(),
                    );
                }
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.into_inner().map_err(|e| HarnessError::Other(e.to_string()))
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Other(format!("csv error: {e}"))
}

/// Serializes the run in the configured format.
pub fn to_bytes(output: &RunOutput) -> Result<Vec<u8>, HarnessError> {
    match output.config.format {
        crate::config::OutputFormat::Csv => csv_bytes(output),
        crate::config::OutputFormat::Json => {
            let envelope = JsonEnvelope {
                config: output.config.clone(),
                summary: output.summary.clone(),
                records: output.records.clone(),
            };
            let mut bytes = serde_json::to_vec_pretty(&envelope)
                .map_err(|e| HarnessError::Other(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

pub fn write_output(output: &RunOutput, path: &Path) -> Result<(), HarnessError> {
    let bytes = to_bytes(output)?;
    std::fs::write(path, bytes)
        .map_err(|e| HarnessError::Other(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// Loads a CSV produced by [`write_output`] back into records.
pub fn load_csv(path: &Path) -> Result<(ExperimentConfig, RecordSet), HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Other(format!("reading {}: {e}", path.display())))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<(ExperimentConfig, RecordSet), HarnessError> {
    let mut lines = text.lines();
    let config_line = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| HarnessError::Other("missing config header line".into()))?;
    let config: ExperimentConfig =
        serde_json::from_str(config_line).map_err(|e| HarnessError::Other(e.to_string()))?;
    let body: String = lines
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let records = match &config.scenario {
        Scenario::Count { .. } => {
            let mut rows = Vec::new();
            for rec in reader.records() {
                let rec = rec.map_err(csv_err)?;
                rows.push(CountRecord {
                    trial: parse(&rec[0])?,
                    m: parse(&rec[1])?,
                    estimate: parse(&rec[2])?,
                    in_range: parse(&rec[3])?,
                    slots: parse(&rec[4])?,
                });
            }
            RecordSet::Count(rows)
        }
        Scenario::Cseek | Scenario::Ckseek { .. } => {
            let mut rows = Vec::new();
            for rec in reader.records() {
                let rec = rec.map_err(csv_err)?;
                rows.push(SeekRecord {
                    trial: parse(&rec[0])?,
                    n: parse(&rec[1])?,
                    c: parse(&rec[2])?,
                    k: parse(&rec[3])?,
                    k_max: parse(&rec[4])?,
                    delta: parse(&rec[5])?,
                    diam: parse(&rec[6])?,
                    success: parse(&rec[7])?,
                    sound: parse(&rec[8])?,
                    slot_budget: parse(&rec[9])?,
                    discovery_slots: opt_u64(&rec[10])?,
                    per_node: None,
                });
            }
            RecordSet::Seek(rows)
        }
        Scenario::Cgcast { .. } => {
            let mut rows = Vec::new();
            for rec in reader.records() {
                let rec = rec.map_err(csv_err)?;
                rows.push(CgcastRecord {
                    trial: parse(&rec[0])?,
                    n: parse(&rec[1])?,
                    delta: parse(&rec[2])?,
                    diam: parse(&rec[3])?,
                    colored: parse(&rec[4])?,
                    phases_used: parse(&rec[5])?,
                    flagged_edges: parse(&rec[6])?,
                    informed_count: parse(&rec[7])?,
                    all_informed: parse(&rec[8])?,
                    last_informed_slots: opt_u64(&rec[9])?,
                    dissem_slots: parse(&rec[10])?,
                    total_slots: parse(&rec[11])?,
                    informed_at: None,
                    flagged: None,
                });
            }
            RecordSet::Cgcast(rows)
        }
        Scenario::GameBipartite { .. }
        | Scenario::GameComplete { .. }
        | Scenario::GameReduction { .. } => {
            let mut rows = Vec::new();
            for rec in reader.records() {
                let rec = rec.map_err(csv_err)?;
                rows.push(GameRecord {
                    game: rec[0].to_string(),
                    c: parse(&rec[1])?,
                    k: parse(&rec[2])?,
                    player: rec[3].to_string(),
                    trial: parse(&rec[4])?,
                    rounds: parse(&rec[5])?,
                    won: parse(&rec[6])?,
                    oracle_slot: rec.get(7).map(opt_u64).transpose()?.flatten(),
                    matches_oracle: rec.get(8).map(opt_bool).transpose()?.flatten(),
                });
            }
            RecordSet::Game(rows)
        }
    };
    Ok((config, records))
}

/// Loads a JSON envelope back into records.
pub fn load_json(path: &Path) -> Result<(ExperimentConfig, RecordSet, Summary), HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Other(format!("reading {}: {e}", path.display())))?;
    let envelope: JsonEnvelope =
        serde_json::from_str(&text).map_err(|e| HarnessError::Other(e.to_string()))?;
    Ok((envelope.config, envelope.records, envelope.summary))
}
