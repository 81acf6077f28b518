use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use padst::bench::{bench_reindex, BenchConfig};
use padst::experiment::{ExperimentConfig, StructureSpec};
use padst::expressivity::{nlr_lower_bound, preset, NetworkSpec};
use padst::netcore::Checkpoint;
use padst::permutation::{identity_distance, perm_penalty};
use serde_json::{json, Value};

use crate::manifest::{sidecar, RunManifest};
use crate::{BenchFamily, CliError, Format};

fn core_err(e: padst::Error) -> CliError {
    use padst::Error as E;
    match e {
        E::Diverged { step } => CliError::Diverged(step),
        E::Config(_) | E::Version(_) | E::Json(_) | E::Io(_) | E::Dimension(_) | E::Structure(_) | E::Domain(_) => {
            CliError::Input(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

fn read_input(path: &Path) -> Result<(String, Value), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let value = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((text, value))
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Prints `text`, or writes it with a sidecar manifest when `out` is given.
fn emit(text: &str, out: Option<&Path>, mut manifest: RunManifest) -> Result<(), CliError> {
    match out {
        Some(path) => {
            write_output(path, text)?;
            manifest.outputs.push(path.to_path_buf());
            manifest.write(&sidecar(path)).map_err(|e| CliError::Runtime(e.to_string()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn train(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let (text, value) = read_input(config_path)?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(core_err)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let mut manifest = RunManifest::new("train", &value, Some(cfg.train.seed));
    let base = config_path.parent().unwrap_or(Path::new("."));

    let result = cfg.run::<f64>(base);
    let (net, report) = match result {
        Ok(r) => r,
        Err(e) => {
            let err = core_err(e);
            if matches!(err, CliError::Diverged(_)) {
                manifest.status = "diverged".into();
                let _ = manifest.write(&out.join("manifest.json"));
            }
            return Err(err);
        }
    };
    let files = [
        ("checkpoint.json", Checkpoint::from_net(&net).to_json() + "\n"),
        ("report.csv", report.to_csv()),
        ("report.json", report.to_json() + "\n"),
    ];
    for (name, body) in files {
        let path = out.join(name);
        write_output(&path, &body)?;
        manifest.outputs.push(path);
    }
    manifest.write(&out.join("manifest.json")).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn bounds(
    spec: Option<&str>,
    preset_name: Option<&str>,
    format: Format,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (net, value) = match (preset_name, spec) {
        (Some(name), variant) => {
            (preset(name, variant).map_err(core_err)?, json!({ "preset": name, "variant": variant }))
        }
        (None, Some(path)) => {
            let (text, value) = read_input(Path::new(path))?;
            (NetworkSpec::from_json(&text).map_err(core_err)?, value)
        }
        (None, None) => return Err(CliError::Input("give a spec path or --preset".into())),
    };
    let report = nlr_lower_bound(&net).map_err(core_err)?;
    for w in &report.warnings {
        eprintln!("padst: warning: {w}");
    }
    let text = match format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => report.to_csv(),
    };
    emit(&text, out, RunManifest::new("bounds", &value, None))
}

pub fn bench_structure(family: BenchFamily, block_size: usize, nm: &str) -> Result<StructureSpec, CliError> {
    Ok(match family {
        BenchFamily::Diagonal => StructureSpec::Diagonal,
        BenchFamily::Block => StructureSpec::Block { block_size },
        BenchFamily::Unstructured => StructureSpec::Unstructured,
        BenchFamily::Nm => {
            let parsed = nm.split_once(':').and_then(|(n, m)| Some((n.trim().parse().ok()?, m.trim().parse().ok()?)));
            let (n_keep, m_group) = parsed.ok_or_else(|| CliError::Input(format!("--nm expects N:M, got '{nm}'")))?;
            StructureSpec::Nm { n_keep, m_group }
        }
    })
}

pub fn bench(cfg: &BenchConfig, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let report = bench_reindex(cfg).map_err(|e| match e {
        padst::Error::Domain(m) => CliError::Runtime(m),
        other => core_err(other),
    })?;
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        Format::Csv => report.to_csv(),
    };
    let value = serde_json::to_value(cfg).expect("config serializes");
    emit(&text, out, RunManifest::new("bench-reindex", &value, Some(cfg.seed)))
}

pub fn inspect_perm(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let (text, value) = read_input(path)?;
    let net =
        Checkpoint::from_json(&text).and_then(|c| c.to_net::<f64>()).map_err(|e| CliError::Input(e.to_string()))?;
    let mut csv = String::from("layer,hardened,penalty,identity_distance\n");
    for (i, layer) in net.layers().iter().enumerate() {
        let p = layer.perm();
        let delta = identity_distance(p).map(|d| d.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "layer{},{},{},{}", i + 1, p.is_hardened(), perm_penalty(p).value, delta);
    }
    emit(&csv, out, RunManifest::new("inspect-perm", &value, None))
}
