use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use uavfl::channel;
use uavfl::fl::clients_per_round;
use uavfl::telemetry::{self, fmt_f64, Format};
use uavfl::{run_config, Error, Execution, Result, RunResult, ScenarioConfig};

use crate::ConfigArgs;

pub const SUMMARY_HEADER: &str = "value,rounds,final_accuracy,final_loss,flight_j,dissem_j,total_j,digest";

fn resolve(args: &ConfigArgs) -> Result<ScenarioConfig> {
    let base = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let mut cfg = base.with_overrides(&args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execution(threads: usize) -> Execution {
    if threads <= 1 {
        Execution::Sequential
    } else {
        Execution::Parallel { threads }
    }
}

pub fn run(args: &ConfigArgs, out: Option<&Path>, format: Format, threads: usize) -> Result<()> {
    let cfg = resolve(args)?;
    let result = run_config(&cfg, execution(threads))?;
    match out {
        Some(path) => telemetry::emit(&result, format, path),
        None => {
            let stdout = std::io::stdout();
            stdout
                .lock()
                .write_all(telemetry::render(&result, format).as_bytes())
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}

pub fn sweep(args: &ConfigArgs, key: &str, values: &[String], out_dir: &Path, format: Format) -> Result<()> {
    let base = resolve(args)?;
    if !base.has_key(key) {
        return Err(Error::Config(format!("unknown sweep key `{key}`")));
    }
    let values: Vec<&str> = values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut seen = HashSet::new();
    for v in &values {
        if !seen.insert(*v) {
            return Err(Error::Config(format!("duplicate sweep value `{v}`")));
        }
    }
    let configs = values
        .iter()
        .map(|v| {
            let cfg = base.with_overrides(&[format!("{key}={v}")])?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<RunResult> = configs
        .par_iter()
        .map(|cfg| run_config(cfg, Execution::Sequential))
        .collect::<Result<_>>()?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for (v, result) in values.iter().zip(&results) {
        telemetry::emit(result, format, &out_dir.join(format!("{key}={v}.{ext}")))?;
        let e = result.final_energy();
        let (acc, loss) = result
            .records
            .last()
            .map_or((f64::NAN, f64::NAN), |r| (r.test_accuracy, r.test_loss));
        writeln!(
            summary,
            "{v},{},{},{},{},{},{},{}",
            result.records.len(),
            fmt_f64(acc),
            fmt_f64(loss),
            fmt_f64(e.flight_j),
            fmt_f64(e.dissemination_j),
            fmt_f64(e.total_j),
            result.final_model_digest
        )
        .unwrap();
    }
    telemetry::write_atomic(&out_dir.join("summary.csv"), summary.as_bytes())
}

pub fn validate(args: &ConfigArgs) -> Result<()> {
    resolve(args)?;
    println!("ok");
    Ok(())
}

pub fn rate_table(args: &ConfigArgs, r_values: &[String]) -> Result<()> {
    let cfg = resolve(args)?;
    let link = cfg.link_params();
    let k = clients_per_round(cfg.network.num_ues, cfg.training.alpha);
    let mut rs = Vec::new();
    let mut bad = Vec::new();
    for raw in r_values.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        match raw.parse::<f64>() {
            Ok(r) if r >= 0.0 && r.is_finite() => rs.push(r),
            _ => bad.push(format!("horizontal distance must be a finite number >= 0, got `{raw}`")),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let mut out = String::from("r_m,uplink_snr,uplink_bps,downlink_snr,downlink_bps\n");
    for r in rs {
        let up_snr = channel::a2g_snr(link.ue_tx_power_w, &link, r)?;
        let down_snr = channel::a2g_snr(link.uav_tx_power_w, &link, r)?;
        writeln!(
            out,
            "{r},{},{},{},{}",
            fmt_f64(up_snr),
            fmt_f64(channel::uplink_rate(&link, r, k)?),
            fmt_f64(down_snr),
            fmt_f64(channel::downlink_rate(&link, r)?)
        )
        .unwrap();
    }
    print!("{out}");
    Ok(())
}
