//! `report`: consolidates metric output files into one CSV + JSON bundle,
//! one table per figure family (score-vs-step series, tau tables, PRR
//! scatter pairs, cost-vs-n), plus a summary with the merged-vs-raw tau
//! win rate when multi-seed tau tables are present.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use map_core::error::{Error, Result};
use map_core::noise_lab::{PROTOCOL_MERGED_PASSK, PROTOCOL_RAW_GREEDY};
use map_core::stability::average_ranks_desc;

use crate::util::{csv_string, fmt_f64, parse_f64_field, read_csv_records, write_file};

#[derive(Args)]
pub struct ReportArgs {
    /// Output directory for the consolidated report
    #[arg(long)]
    out: PathBuf,
    /// Series CSVs (`protocol,step,score`), e.g. from `simulate run`
    #[arg(long = "series")]
    series: Vec<PathBuf>,
    /// Tau CSVs (`seed,protocol,tau` or `benchmark,protocol,tau`)
    #[arg(long = "tau")]
    tau: Vec<PathBuf>,
    /// PRR input tables (`model,score_pt,score_sft`)
    #[arg(long = "prr")]
    prr: Vec<PathBuf>,
    /// Cost CSVs (`n,cost`)
    #[arg(long = "cost")]
    cost: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SeriesRow {
    protocol: String,
    step: u64,
    score: f64,
}

#[derive(Serialize)]
struct TauRow {
    label: String,
    protocol: String,
    tau: f64,
}

#[derive(Serialize)]
struct PrrEntry {
    model: String,
    score_pt: f64,
    score_sft: f64,
    rank_pt: f64,
    rank_sft: f64,
}

#[derive(Serialize)]
struct PrrTable {
    table: String,
    models: usize,
    pairs: u64,
    reversals: u64,
    prr: f64,
    entries: Vec<PrrEntry>,
}

#[derive(Serialize)]
struct CostRow {
    n: u64,
    cost: f64,
}

#[derive(Serialize)]
struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_wins: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_comparisons: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_win_rate: Option<f64>,
}

#[derive(Serialize)]
struct Report {
    series: Vec<SeriesRow>,
    tau: Vec<TauRow>,
    prr: Vec<PrrTable>,
    cost: Vec<CostRow>,
    summary: Summary,
}

fn parse_u64(path: &PathBuf, field: &str) -> Result<u64> {
    field
        .parse::<u64>()
        .map_err(|_| Error::Domain(format!("{}: not an integer: {field:?}", path.display())))
}

pub fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut series = Vec::new();
    for path in &args.series {
        for row in read_csv_records(path, &["protocol", "step", "score"])? {
            series.push(SeriesRow {
                protocol: row[0].clone(),
                step: parse_u64(path, &row[1])?,
                score: parse_f64_field(path, &row[2])?,
            });
        }
    }

    let mut tau = Vec::new();
    for path in &args.tau {
        // Per-seed tables come from `simulate run`, per-benchmark tables
        // from `trajectory`; both normalize to (label, protocol, tau).
        let rows = match read_csv_records(path, &["seed", "protocol", "tau"]) {
            Ok(rows) => rows,
            Err(Error::SchemaMismatch { .. }) => {
                read_csv_records(path, &["benchmark", "protocol", "tau"]).map_err(|e| match e {
                    Error::SchemaMismatch { path, got, .. } => Error::SchemaMismatch {
                        path,
                        expected: "seed,protocol,tau or benchmark,protocol,tau".into(),
                        got,
                    },
                    other => other,
                })?
            }
            Err(other) => return Err(other),
        };
        for row in rows {
            tau.push(TauRow {
                label: row[0].clone(),
                protocol: row[1].clone(),
                tau: parse_f64_field(path, &row[2])?,
            });
        }
    }

    let mut prr_tables = Vec::new();
    for path in &args.prr {
        let rows = read_csv_records(path, &["model", "score_pt", "score_sft"])?;
        let entries: Vec<map_core::stability::RankEntry> = rows
            .iter()
            .map(|row| {
                Ok(map_core::stability::RankEntry {
                    model_id: row[0].clone(),
                    score_pt: parse_f64_field(path, &row[1])?,
                    score_sft: parse_f64_field(path, &row[2])?,
                })
            })
            .collect::<Result<_>>()?;
        let table = map_core::stability::RankTable::new(entries)?;
        let breakdown = map_core::stability::prr_breakdown(&table);
        let pt_ranks = average_ranks_desc(
            &table.entries().iter().map(|e| e.score_pt).collect::<Vec<_>>(),
        );
        let sft_ranks = average_ranks_desc(
            &table.entries().iter().map(|e| e.score_sft).collect::<Vec<_>>(),
        );
        prr_tables.push(PrrTable {
            table: path.display().to_string(),
            models: breakdown.models,
            pairs: breakdown.pairs,
            reversals: breakdown.reversals,
            prr: breakdown.rate,
            entries: table
                .entries()
                .iter()
                .zip(pt_ranks.iter().zip(&sft_ranks))
                .map(|(e, (&rank_pt, &rank_sft))| PrrEntry {
                    model: e.model_id.clone(),
                    score_pt: e.score_pt,
                    score_sft: e.score_sft,
                    rank_pt,
                    rank_sft,
                })
                .collect(),
        });
    }

    let mut cost = Vec::new();
    for path in &args.cost {
        for row in read_csv_records(path, &["n", "cost"])? {
            cost.push(CostRow {
                n: parse_u64(path, &row[0])?,
                cost: parse_f64_field(path, &row[1])?,
            });
        }
    }

    // Win rate of the merged+pass@k tau over the raw single-sample tau,
    // across labels (seeds) that carry both protocols.
    let mut labels: Vec<&str> = tau.iter().map(|r| r.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut wins = 0u64;
    let mut comparisons = 0u64;
    for label in labels {
        let find = |protocol: &str| {
            tau.iter()
                .find(|r| r.label == label && r.protocol == protocol)
                .map(|r| r.tau)
        };
        if let (Some(merged), Some(raw)) = (find(PROTOCOL_MERGED_PASSK), find(PROTOCOL_RAW_GREEDY))
        {
            comparisons += 1;
            if merged > raw {
                wins += 1;
            }
        }
    }
    let summary = if comparisons > 0 {
        Summary {
            tau_wins: Some(wins),
            tau_comparisons: Some(comparisons),
            tau_win_rate: Some(wins as f64 / comparisons as f64),
        }
    } else {
        Summary {
            tau_wins: None,
            tau_comparisons: None,
            tau_win_rate: None,
        }
    };

    write_file(
        &args.out.join("series.csv"),
        &csv_string(
            &["protocol", "step", "score"],
            &series
                .iter()
                .map(|r| vec![r.protocol.clone(), r.step.to_string(), fmt_f64(r.score)])
                .collect::<Vec<_>>(),
        ),
    )?;
    write_file(
        &args.out.join("tau.csv"),
        &csv_string(
            &["label", "protocol", "tau"],
            &tau.iter()
                .map(|r| vec![r.label.clone(), r.protocol.clone(), fmt_f64(r.tau)])
                .collect::<Vec<_>>(),
        ),
    )?;
    let mut prr_rows = Vec::new();
    for table in &prr_tables {
        for e in &table.entries {
            prr_rows.push(vec![
                table.table.clone(),
                e.model.clone(),
                fmt_f64(e.score_pt),
                fmt_f64(e.score_sft),
                fmt_f64(e.rank_pt),
                fmt_f64(e.rank_sft),
            ]);
        }
    }
    write_file(
        &args.out.join("prr.csv"),
        &csv_string(
            &["table", "model", "score_pt", "score_sft", "rank_pt", "rank_sft"],
            &prr_rows,
        ),
    )?;
    write_file(
        &args.out.join("cost.csv"),
        &csv_string(
            &["n", "cost"],
            &cost
                .iter()
                .map(|r| vec![r.n.to_string(), fmt_f64(r.cost)])
                .collect::<Vec<_>>(),
        ),
    )?;

    let mut summary_rows: Vec<Vec<String>> = Vec::new();
    if let (Some(w), Some(c), Some(rate)) =
        (summary.tau_wins, summary.tau_comparisons, summary.tau_win_rate)
    {
        summary_rows.push(vec!["tau_wins".into(), w.to_string()]);
        summary_rows.push(vec!["tau_comparisons".into(), c.to_string()]);
        summary_rows.push(vec!["tau_win_rate".into(), fmt_f64(rate)]);
    }
    for table in &prr_tables {
        summary_rows.push(vec![format!("prr[{}]", table.table), fmt_f64(table.prr)]);
    }
    write_file(
        &args.out.join("summary.csv"),
        &csv_string(&["metric", "value"], &summary_rows),
    )?;

    let report = Report {
        series,
        tau,
        prr: prr_tables,
        cost,
        summary,
    };
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| Error::Domain(format!("report: {e}")))?;
    write_file(&args.out.join("report.json"), &format!("{json}\n"))?;
    Ok(())
}
