//! Command-line front end and annotation service for `steval`.

pub mod args;
pub mod commands;
pub mod server;


use anyhow::Result;
use args::{CampaignCommand, Cli, Command};
use steval::campaign::Campaign;

/// Exit status for validation failures (bad input, failed checks).
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status for I/O failures (missing files, unwritable paths, ports).
pub const EXIT_IO: i32 = 2;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<steval::Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_VALIDATION };
        }
    }
    EXIT_VALIDATION
}

/// Runs one command, writing human-readable results to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<()> {
    match cli.command {
        Command::Reseg(a) => {
            let res = commands::reseg(&a)?;
            writeln!(out, "doc_id\tedit_distance\tref_tokens\twer")?;
            for d in &res.documents {
                let wer = d.wer().map_or("n/a".to_owned(), |w| format!("{w:.4}"));
                let flag = if d.approximate { "\t(banded)" } else { "" };
                writeln!(out, "{}\t{}\t{}\t{wer}{flag}", d.doc_id, d.distance, d.ref_len)?;
            }
        }
        Command::Score(a) => {
            let t = commands::score(&a)?;
            for (sys, v) in t.system_scores() {
                writeln!(out, "{sys}\t{v:.4}")?;
            }
        }
        Command::Campaign { command } => run_campaign(command, out)?,
        Command::Correlate(a) => {
            let report = commands::correlate_report(&a)?;
            if a.out.is_none() {
                out.write_all(report.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn run_campaign(cmd: CampaignCommand, out: &mut dyn std::io::Write) -> Result<()> {
    match cmd {
        CampaignCommand::Build { dir, args } => {
            let c = commands::campaign_build(&dir.dir, &args)?;
            writeln!(
                out,
                "{} tasks ({} systems x {} segments) for {} annotators in {}",
                c.tasks().len(),
                c.settings().systems.len(),
                c.plan().segment_ids.len(),
                c.settings().annotators.len(),
                dir.dir.display()
            )?;
        }
        CampaignCommand::Serve { dir, addr } => {
            let campaign = Campaign::open(&dir.dir)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(campaign, addr))?;
        }
        CampaignCommand::Ingest { dir, scores } => {
            let res = commands::campaign_ingest(&dir.dir, &scores)?;
            writeln!(out, "accepted {} records, rejected {}", res.records.len(), res.rejected.len())?;
            for r in &res.rejected {
                writeln!(out, "  line {}: {}", r.line, r.reason)?;
            }
            if !res.rejected.is_empty() {
                anyhow::bail!(
                    "{} rows rejected (valid rows were recorded)",
                    res.rejected.len()
                );
            }
        }
        CampaignCommand::Export { dir, out: path } => {
            commands::campaign_export(&dir.dir, &path)?;
        }
        CampaignCommand::Aggregate { dir, mode, out: path } => {
            let t = commands::campaign_aggregate(&dir.dir, mode, &path)?;
            for (sys, v) in t.system_scores() {
                writeln!(out, "{sys}\t{v:.4}")?;
            }
        }
        CampaignCommand::Progress { dir } => {
            let p = commands::campaign_progress(&dir.dir)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&p)?)?;
        }
    }
    Ok(())
}
