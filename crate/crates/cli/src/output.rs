//! Output files. Every file starts with the resolved config and seed so a
//! result can be reproduced from the file alone.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use gcimb::simnet::{MonteCarloSummary, Table1Row};
use gcimb::ScenarioConfig;
use plotters::prelude::*;

/// The resolved config as TOML with `seed` set to the seed actually used.
fn provenance(config: &ScenarioConfig, seed: u64) -> Vec<String> {
    let mut resolved = config.clone();
    resolved.seed = seed;
    resolved.to_toml().lines().map(str::to_owned).collect()
}

/// CSV text with the config and seed as leading `#` comment lines.
fn csv_with_header(config: &ScenarioConfig, seed: u64, header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut text = String::new();
    for line in provenance(config, seed) {
        text.push_str("# ");
        text.push_str(&line);
        text.push('\n');
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    text.push_str(&String::from_utf8(w.into_inner()?)?);
    Ok(text)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_ospa_by_step(dir: &Path, config: &ScenarioConfig, summary: &MonteCarloSummary) -> Result<()> {
    let rows = summary
        .by_step
        .iter()
        .map(|s| {
            vec![
                s.step.to_string(),
                (s.node + 1).to_string(),
                summary.mode.to_string(),
                num(s.local_ospa),
                num(s.fused_ospa),
                num(s.card_local),
                num(s.card_fused),
            ]
        })
        .collect();
    let header = ["step", "node", "mode", "local_ospa", "fused_ospa", "card_local", "card_fused"];
    write(&dir.join("ospa_by_step.csv"), &csv_with_header(config, config.seed, &header, rows)?)
}

pub fn write_summary(dir: &Path, config: &ScenarioConfig, summary: &MonteCarloSummary) -> Result<()> {
    let mut rows: Vec<Vec<String>> = summary
        .by_node
        .iter()
        .map(|n| {
            vec![
                (n.node + 1).to_string(),
                summary.mode.to_string(),
                summary.seeds.len().to_string(),
                num(n.local_ospa),
                num(n.fused_ospa),
                num(n.local_efficiency),
                num(n.fused_efficiency),
                format!("{:.6e}", n.approximation_error),
                format!("{:.6e}", n.approximation_relative_error),
            ]
        })
        .collect();
    rows.push(vec![
        "all".into(),
        summary.mode.to_string(),
        summary.seeds.len().to_string(),
        num(summary.network_local_ospa),
        num(summary.network_fused_ospa),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ]);
    let header = [
        "node",
        "mode",
        "runs",
        "local_ospa",
        "fused_ospa",
        "local_efficiency",
        "fused_efficiency",
        "approximation_error",
        "approximation_relative_error",
    ];
    write(&dir.join("summary.csv"), &csv_with_header(config, config.seed, &header, rows)?)
}

pub fn write_table1(dir: &Path, config: &ScenarioConfig, seed: u64, rows: &[Table1Row]) -> Result<()> {
    let body = rows
        .iter()
        .map(|r| vec![r.sensors.to_string(), r.mode.to_string(), num(r.ospa), num(r.network_ospa)])
        .collect();
    let header = ["sensors", "mode", "ospa", "network_ospa"];
    write(&dir.join("table1.csv"), &csv_with_header(config, seed, &header, body)?)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line plot of node-averaged local and fused OSPA per scan.
pub fn write_ospa_plot(dir: &Path, config: &ScenarioConfig, summary: &MonteCarloSummary) -> Result<()> {
    let nodes = summary.by_node.len().max(1) as f64;
    let mut local = vec![0.0; config.steps];
    let mut fused = vec![0.0; config.steps];
    for s in &summary.by_step {
        local[s.step - 1] += s.local_ospa / nodes;
        fused[s.step - 1] += s.fused_ospa / nodes;
    }
    let path = dir.join("ospa_by_step.svg");
    let y_max = local.iter().chain(&fused).copied().fold(0.0, f64::max).max(1e-3) * 1.1;
    {
        let root = SVGBackend::new(&path, (720, 420)).into_drawing_area();
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("{} ({}, {} runs)", config.name, summary.mode, summary.seeds.len()), ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d(1usize..config.steps.max(2), 0.0..y_max)?;
        chart.configure_mesh().x_desc("scan").y_desc("mean OSPA").draw()?;
        for (series, color, label) in [(&local, RED, "local"), (&fused, BLUE, "fused")] {
            chart
                .draw_series(LineSeries::new(series.iter().enumerate().map(|(k, &v)| (k + 1, v)), color))?
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        chart.configure_series_labels().border_style(BLACK).draw()?;
        root.present()?;
    }
    let svg = fs::read_to_string(&path)?;
    let meta = format!("\n<metadata>\n{}\n</metadata>", xml_escape(&provenance(config, config.seed).join("\n")));
    let open = svg.find("<svg").context("plot output has no <svg> element")?;
    let at = open + svg[open..].find('>').context("unterminated <svg> tag")? + 1;
    let mut out = String::with_capacity(svg.len() + meta.len());
    out.push_str(&svg[..at]);
    out.push_str(&meta);
    out.push_str(&svg[at..]);
    write(&path, &out)
}
