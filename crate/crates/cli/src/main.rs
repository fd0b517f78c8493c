mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use framemap::builtin;
use framemap::experiment::{
    run_experiment_suite, run_with, write_outputs, RunError, RunInputs, RunMode, SuiteConfig,
};
use framemap::frames::parse_frame_library;
use framemap::planner::TerminalStatus;
use framemap::render::{render_snapshot, save_png};
use framemap::trace::{read_trace, TraceError};
use framemap::world::parse_scenario;
use serde_json::json;

use args::{Cli, Command, RenderArgs, RunArgs, SuiteArgs, ValidateArgs};

const TASK_FAILURE: u8 = 1;
const CONFIG_ERROR: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(&a),
        Command::Suite(a) => suite(&a),
        Command::Render(a) => render(&a),
        Command::Validate(a) => validate(&a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("{}", error_record(&e));
        ExitCode::from(CONFIG_ERROR)
    })
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(r) = e.downcast_ref::<RunError>() {
        r.kind()
    } else if e.downcast_ref::<TraceError>().is_some() {
        "trace"
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "config"
    }
}

fn error_record(e: &anyhow::Error) -> serde_json::Value {
    json!({ "error": { "kind": error_kind(e), "message": format!("{e:#}") } })
}

fn run(a: &RunArgs) -> anyhow::Result<ExitCode> {
    let config = a.to_config()?;
    config.validate()?;
    let given = |p: &Path| !p.as_os_str().is_empty();
    let inputs = match (given(&config.scenario), given(&config.library)) {
        (true, true) => RunInputs::load(&config.scenario, &config.library)?,
        (false, false) => RunInputs::parse(builtin::APARTMENT, builtin::FRAMES)?,
        (true, false) => RunInputs::parse(&read(&config.scenario)?, builtin::FRAMES)?,
        (false, true) => RunInputs::parse(builtin::APARTMENT, &read(&config.library)?)?,
    };
    let out = run_with(&inputs, &config)?;
    if let Some(dir) = &config.out_dir {
        write_outputs(dir, &out, config.render)?;
    }
    print!("{}", out.metrics_text);
    // fixed and tour runs only observe; finishing the script is success
    let ok = match config.mode {
        RunMode::Task => out.metrics.success,
        RunMode::Fixed | RunMode::Tour => out.metrics.status == TerminalStatus::Success,
    };
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(TASK_FAILURE)
    })
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn suite(a: &SuiteArgs) -> anyhow::Result<ExitCode> {
    let (config, base) = match &a.suite {
        Some(path) => (
            SuiteConfig::parse(&read(path)?)?,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (SuiteConfig::parse(builtin::SUITE)?, PathBuf::from(".")),
    };
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        bail!("workers must be at least 1");
    }
    let report = run_experiment_suite(&config, &base, workers)?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        fs::write(dir.join("report.json"), report.to_json())?;
    }
    if a.json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.table());
    }
    Ok(ExitCode::SUCCESS)
}

fn render(a: &RenderArgs) -> anyhow::Result<ExitCode> {
    let text = read(&a.trace)?;
    let trace = read_trace(&text)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let header = &trace.header;
    let mut written = Vec::new();
    for snap in &trace.snapshots {
        let path = a.out_dir.join(format!("snapshot_{:04}.png", snap.timestep));
        save_png(&render_snapshot(&header.map, &header.objects, &snap.sets), &path)?;
        written.push(path);
    }
    if written.is_empty() {
        log::warn!("trace has no snapshots; drawing the map alone");
        let path = a.out_dir.join("map.png");
        save_png(&render_snapshot(&header.map, &header.objects, &[]), &path)?;
        written.push(path);
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn check_file(path: &Path) -> Result<(), (&'static str, String)> {
    let text = fs::read_to_string(path).map_err(|e| ("io", e.to_string()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("lib") => parse_frame_library(&text)
            .map(drop)
            .map_err(|e| (e.kind(), e.to_string())),
        Some("scn") => parse_scenario(&text)
            .map(drop)
            .map_err(|e| (e.kind(), e.to_string())),
        Some("toml") => SuiteConfig::parse(&text)
            .map(drop)
            .map_err(|e| (e.kind(), e.to_string())),
        _ => Err((
            "config",
            "unknown file type (expected .lib, .scn or .toml)".into(),
        )),
    }
}

fn validate(a: &ValidateArgs) -> anyhow::Result<ExitCode> {
    let mut ok = true;
    for path in &a.files {
        let line = match check_file(path) {
            Ok(()) => json!({ "path": path, "ok": true }),
            Err((kind, message)) => {
                ok = false;
                json!({ "path": path, "ok": false, "kind": kind, "message": message })
            }
        };
        println!("{line}");
    }
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(CONFIG_ERROR)
    })
}
