//! Artifact writing and post-run schema validation. Every file a command
//! writes is tracked and re-read before exit; a file that fails to reparse
//! under its schema is a runtime failure.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hl_core::sim::{
    CompareSummary, EpisodeLog, PolicyCheckpoint, SimConfig, TrainingCurve,
};
use hl_core::topology::DistanceMatrix;

use crate::CliError;

/// Run header: written before the run starts so a crashed run still leaves
/// its provenance. The timestamp is the only non-reproducible field any
/// artifact contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub timestamp: String,
    pub out_dir: String,
    pub config: SimConfig,
}

/// Schema of a tracked artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Manifest,
    EpisodeLogs,
    EpisodeLog,
    Policy,
    Curve,
    Summary,
    RoundsCsv,
    EpisodesCsv,
    CurveCsv,
    SummaryCsv,
    EmbeddingCsv { rows: usize },
    DistanceCsv,
}

/// Typed column of a CSV schema.
#[derive(Debug, Clone, Copy)]
enum Col {
    Int,
    Float,
    OptInt,
    OptFloat,
    Bool,
}

impl Col {
    fn check(self, field: &str) -> Result<(), String> {
        let finite = |f: &str| match f.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(()),
            _ => Err(format!("{f:?} is not a finite number")),
        };
        match self {
            Col::Int => field
                .parse::<u64>()
                .map(|_| ())
                .map_err(|_| format!("{field:?} is not an integer")),
            Col::Float => finite(field),
            Col::OptInt if field.is_empty() => Ok(()),
            Col::OptInt => Col::Int.check(field),
            Col::OptFloat if field.is_empty() => Ok(()),
            Col::OptFloat => finite(field),
            Col::Bool => match field {
                "true" | "false" => Ok(()),
                _ => Err(format!("{field:?} is not a boolean")),
            },
        }
    }
}

fn check_csv(text: &str, header: &str, cols: &[Col], expect_rows: Option<usize>) -> Result<(), String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        Some(h) => return Err(format!("header {h:?}, expected {header:?}")),
        None => return Err("empty file".into()),
    }
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(format!(
                "line {}: {} fields, expected {}",
                i + 2,
                fields.len(),
                cols.len()
            ));
        }
        for (col, field) in cols.iter().zip(&fields) {
            col.check(field).map_err(|e| format!("line {}: {e}", i + 2))?;
        }
        rows += 1;
    }
    if let Some(n) = expect_rows {
        if rows != n {
            return Err(format!("{rows} data rows, expected {n}"));
        }
    }
    Ok(())
}

fn validate_text(kind: Kind, text: &str) -> Result<(), String> {
    let json_err = |e: serde_json::Error| e.to_string();
    match kind {
        Kind::Manifest => serde_json::from_str::<RunManifest>(text)
            .map(|_| ())
            .map_err(json_err),
        Kind::EpisodeLogs => serde_json::from_str::<Vec<EpisodeLog>>(text)
            .map(|_| ())
            .map_err(json_err),
        Kind::EpisodeLog => serde_json::from_str::<EpisodeLog>(text)
            .map(|_| ())
            .map_err(json_err),
        Kind::Policy => serde_json::from_str::<PolicyCheckpoint>(text)
            .map(|_| ())
            .map_err(json_err),
        Kind::Curve => serde_json::from_str::<TrainingCurve>(text)
            .map(|_| ())
            .map_err(json_err),
        Kind::Summary => serde_json::from_str::<CompareSummary>(text)
            .map(|_| ())
            .map_err(json_err),
        Kind::RoundsCsv => check_csv(
            text,
            "episode,step,node,next_node,val_acc,reward,distance",
            &[
                Col::Int,
                Col::Int,
                Col::Int,
                Col::OptInt,
                Col::Float,
                Col::OptFloat,
                Col::OptFloat,
            ],
            None,
        ),
        Kind::EpisodesCsv => check_csv(
            text,
            "episode,epsilon,total_rounds,episode_return,total_comm_cost,reached_goal",
            &[Col::Int, Col::Float, Col::Int, Col::Float, Col::Float, Col::Bool],
            None,
        ),
        Kind::CurveCsv => check_csv(
            text,
            "epoch,val_acc,val_loss",
            &[Col::Int, Col::Float, Col::Float],
            None,
        ),
        Kind::SummaryCsv => summary_csv_check(text),
        Kind::EmbeddingCsv { rows } => check_csv(
            text,
            "node_id,main_class,x,y",
            &[Col::Int, Col::Int, Col::Float, Col::Float],
            Some(rows),
        ),
        Kind::DistanceCsv => DistanceMatrix::from_csv(text, "distance.csv")
            .map(|_| ())
            .map_err(|e| e.to_string()),
    }
}

/// The summary CSV has two string columns; [`check_csv`] handles only typed
/// scalars, so it gets a dedicated check.
fn summary_csv_check(text: &str) -> Result<(), String> {
    let mut lines = text.lines();
    let header = "method,metric,p25,p50,p75";
    match lines.next() {
        Some(h) if h == header => {}
        other => return Err(format!("header {other:?}, expected {header:?}")),
    }
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(format!("line {}: {} fields, expected 5", i + 2, f.len()));
        }
        if !matches!(f[0], "hl" | "random") || !matches!(f[1], "rounds" | "cost") {
            return Err(format!("line {}: unknown method/metric {:?}/{:?}", i + 2, f[0], f[1]));
        }
        for field in &f[2..] {
            Col::Float.check(field).map_err(|e| format!("line {}: {e}", i + 2))?;
        }
        rows += 1;
    }
    if rows != 4 {
        return Err(format!("{rows} data rows, expected 4"));
    }
    Ok(())
}

/// Tracks written artifacts for the pre-exit validation pass.
pub struct OutputTracker {
    written: Vec<(PathBuf, Kind)>,
}

impl OutputTracker {
    pub fn new() -> Self {
        Self { written: Vec::new() }
    }

    /// Writes one artifact and remembers it for validation.
    pub fn write(&mut self, path: PathBuf, contents: String, kind: Kind) -> Result<(), CliError> {
        std::fs::write(&path, contents)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        self.written.push((path, kind));
        Ok(())
    }

    /// Writes the run manifest (first artifact of every command).
    pub fn write_manifest(
        &mut self,
        command: &str,
        config: &SimConfig,
        out_dir: &Path,
    ) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            out_dir: out_dir.display().to_string(),
            config: config.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::runtime(format!("cannot encode manifest: {e}")))?;
        self.write(out_dir.join("manifest.json"), json, Kind::Manifest)
    }

    /// Re-reads every tracked artifact and checks it against its schema.
    pub fn validate_all(&self) -> Result<(), CliError> {
        for (path, kind) in &self.written {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::runtime(format!("cannot re-read {}: {e}", path.display()))
            })?;
            validate_text(*kind, &text).map_err(|e| {
                CliError::runtime(format!("schema check failed for {}: {e}", path.display()))
            })?;
        }
        Ok(())
    }
}

/// Plot-ready per-round table: `episode,step,node,next_node,val_acc,reward,
/// distance`. Terminal rounds leave the selection columns empty.
pub fn rounds_csv(logs: &[EpisodeLog]) -> String {
    let mut out = String::from("episode,step,node,next_node,val_acc,reward,distance\n");
    let opt_int = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for log in logs {
        for r in &log.rounds {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                log.episode,
                r.step,
                r.node,
                opt_int(r.next_node),
                r.val_acc,
                opt_f(r.reward),
                opt_f(r.distance),
            ));
        }
    }
    out
}

/// Plot-ready per-episode table: `episode,epsilon,total_rounds,
/// episode_return,total_comm_cost,reached_goal`.
pub fn episodes_csv(logs: &[EpisodeLog]) -> String {
    let mut out =
        String::from("episode,epsilon,total_rounds,episode_return,total_comm_cost,reached_goal\n");
    for log in logs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            log.episode,
            log.epsilon,
            log.total_rounds,
            log.episode_return,
            log.total_comm_cost,
            log.reached_goal,
        ));
    }
    out
}

/// Plot-ready training curve: `epoch,val_acc,val_loss`.
pub fn curve_csv(curve: &TrainingCurve) -> String {
    let mut out = String::from("epoch,val_acc,val_loss\n");
    for r in &curve.records {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.val_acc, r.val_loss));
    }
    out
}

/// Percentile table: `method,metric,p25,p50,p75`, one row per method/metric.
pub fn summary_csv(summary: &CompareSummary) -> String {
    let mut out = String::from("method,metric,p25,p50,p75\n");
    let mut row = |method: &str, metric: &str, p25: f64, p50: f64, p75: f64| {
        out.push_str(&format!("{method},{metric},{p25},{p50},{p75}\n"));
    };
    row("hl", "rounds", summary.hl.rounds_p25, summary.hl.rounds_p50, summary.hl.rounds_p75);
    row("hl", "cost", summary.hl.cost_p25, summary.hl.cost_p50, summary.hl.cost_p75);
    row(
        "random",
        "rounds",
        summary.random.rounds_p25,
        summary.random.rounds_p50,
        summary.random.rounds_p75,
    );
    row(
        "random",
        "cost",
        summary.random.cost_p25,
        summary.random.cost_p50,
        summary.random.cost_p75,
    );
    out
}
