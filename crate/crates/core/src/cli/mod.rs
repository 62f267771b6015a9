//! Command-line front end.
//!
//! Every subcommand computes all of its outputs in memory first and only then
//! writes them, so a failed run leaves nothing behind. Errors print a JSON
//! document on stderr and exit with status 1.

mod args;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{load_table_path, write_table, ColumnMapping, Group, ObservationTable};
use crate::decompose::DflWeights;
use crate::fmt::fmt_f64;
use crate::pipeline::{run_analysis, AnalysisConfig, AnalysisOutput};
use crate::support::{estimate_partition, SupportPartition, SupportStrategy};
use crate::synth::{generate, oracle_decompose, outcome_atoms, population_table, DgpSpec};
use crate::Error;

pub use args::{Cli, Command, DecomposeArgs, InputArgs, InspectArgs, SimulateArgs};

/// Full, validated configuration of a `decompose` run. Echoed into
/// `manifest.json`; feeding that echo back through `--config` reproduces the
/// run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    pub mapping: ColumnMapping,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Worker threads for threshold fits; `None` uses the rayon default.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Recorded for replication; no current analysis draws random numbers.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Same shape as [`RunConfig`] for `inspect-support`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InspectConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    pub mapping: ColumnMapping,
    #[serde(default)]
    pub support: SupportStrategy,
}

const TAG_KEYS: [&str; 5] = ["rule", "policy", "model", "kind", "law"];

/// Recursive object merge; an overlay object carrying an enum tag replaces
/// the base value wholesale so fields of different variants never mix.
fn overlay(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) if !TAG_KEYS.iter().any(|k| o.contains_key(*k)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn read_file(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Builds a config from the flag-derived value, overlaying `--config` and
/// rejecting unknown keys.
fn resolve_config<T: serde::de::DeserializeOwned>(flags: Value, config: Option<&Path>) -> Result<T, Error> {
    let mut v = flags;
    if let Some(path) = config {
        let over: Value =
            serde_json::from_str(&read_file(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if !over.is_object() {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
        }
        overlay(&mut v, over);
    }
    for key in ["input", "out"] {
        if v.get(key).is_none_or(Value::is_null) {
            return Err(Error::Config(format!("`{key}` is required (flag or config)")));
        }
    }
    serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
}

/// Files produced by a run, written only once everything succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    fn add_json(&mut self, name: &str, value: &impl Serialize) {
        let mut s = serde_json::to_string_pretty(value).expect("serializable");
        s.push('\n');
        self.add(name, s);
    }

    fn names(&self) -> Vec<String> {
        self.files.iter().map(|f| f.0.clone()).collect()
    }

    /// Writes every file, removing those already written if one fails.
    fn commit(self) -> Result<Vec<PathBuf>, Error> {
        let io = |path: &Path, source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        fs::create_dir_all(&self.dir).map_err(|e| io(&self.dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            if let Err(e) = fs::write(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(&path);
                return Err(io(&path, e));
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn masses_json(p: &SupportPartition) -> Value {
    let (w_only, b_only) = p.pooled_unmatched();
    json!({
        "masses": p.masses(),
        "counts": p.counts(),
        "pooled_unmatched": { "w_only": w_only, "b_only": b_only },
        "strategy": p.strategy(),
    })
}

fn dfl_csv(table: &ObservationTable, w: &DflWeights) -> String {
    let mut s = String::from("row,y,weight,psi,capped\n");
    for (&i, &psi) in w.rows.iter().zip(&w.psi) {
        let r = &table.rows()[i];
        let capped = u8::from(w.capped.binary_search(&i).is_ok());
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            fmt_f64(r.outcome),
            fmt_f64(r.weight),
            fmt_f64(psi),
            capped
        ));
    }
    s
}

fn version() -> Value {
    json!({ "gapdecomp": env!("CARGO_PKG_VERSION") })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn cmd_decompose(config: &RunConfig) -> Result<Vec<PathBuf>, Error> {
    let start = Instant::now();
    config.analysis.validate()?;
    let table = load_table_path(&config.input, &config.mapping)?;
    let loaded = ms(start);
    let fit_start = Instant::now();
    let result: AnalysisOutput = with_threads(config.threads, || run_analysis(&table, &config.analysis))??;
    let analysis_ms = ms(fit_start);

    let mut out = Outputs::new(&config.out);
    out.add("curves.csv", result.curves_csv());
    if let Some(s) = &result.shares {
        out.add("shares.csv", s.to_long_csv());
    }
    let curves: Vec<_> = [&result.relaxed, &result.conventional].into_iter().flatten().collect();
    out.add_json("decomposition.json", &curves);
    out.add_json("masses.json", &masses_json(&result.partition));
    out.add_json("model_W.json", &result.model_w);
    out.add_json("model_B.json", &result.model_b);
    if let Some((tw, tb)) = &result.trimmed_models {
        out.add_json("model_W_trimmed.json", tw);
        out.add_json("model_B_trimmed.json", tb);
    }
    if let Some(d) = &result.dfl {
        out.add("dfl_weights.csv", dfl_csv(&table, &d.weights));
        out.add_json(
            "dfl_propensity.json",
            &json!({ "propensity": d.weights.propensity, "share_b": d.weights.share_b,
                     "out_of_support_share": d.weights.out_of_support_share }),
        );
    }
    let mut files = out.names();
    files.push("manifest.json".into());
    let manifest = json!({
        "command": "decompose",
        "config": config,
        "versions": version(),
        "input": { "rows": table.len(), "w_rows": table.group_rows(Group::W).count(),
                   "b_rows": table.group_rows(Group::B).count() },
        "grid_points": result.grid.len(),
        "outputs": files,
        "warnings": result.warnings,
        "timings": { "load_ms": loaded, "analysis_ms": analysis_ms, "total_ms": ms(start) },
    });
    out.add_json("manifest.json", &manifest);
    out.commit()
}

pub fn cmd_simulate(spec_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let start = Instant::now();
    let spec = DgpSpec::from_json(&read_file(spec_path)?)?;
    let table = generate(&spec)?;
    let mut out = Outputs::new(out_dir);
    let mut data = Vec::new();
    write_table(&table, &mut data)?;
    out.add("data.csv", data);
    let note = if spec.is_discrete() {
        let grid = crate::data::EvaluationGrid::new(outcome_atoms(&spec)?)?;
        out.add("oracle_curves.csv", oracle_decompose(&spec, &grid)?.to_long_csv());
        let mut pop = Vec::new();
        write_table(&population_table(&spec)?, &mut pop)?;
        out.add("population.csv", pop);
        "oracle curves evaluated at every outcome atom; population.csv holds the population as weighted rows"
    } else {
        "no oracle: exact enumeration needs a discrete_cells spec"
    };
    let mut files = out.names();
    files.push("manifest.json".into());
    out.add_json(
        "manifest.json",
        &json!({
            "command": "simulate",
            "spec": spec,
            "versions": version(),
            "rows": table.len(),
            "outputs": files,
            "oracle": note,
            "rng": "ChaCha8, seed_from_u64(seed)",
            "timings": { "total_ms": ms(start) },
        }),
    );
    out.commit()
}

pub fn cmd_inspect_support(config: &InspectConfig) -> Result<Vec<PathBuf>, Error> {
    let table = load_table_path(&config.input, &config.mapping)?;
    let partition = estimate_partition(&table, &config.support)?;
    let mut regions = String::from("row,group,region\n");
    for (i, (r, region)) in table.rows().iter().zip(partition.region_of()).enumerate() {
        regions.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            table.labels().label(r.group),
            region.as_str()
        ));
    }
    let mut out = Outputs::new(&config.out);
    out.add("regions.csv", regions);
    out.add_json("masses.json", &masses_json(&partition));
    out.commit()
}

/// Parses `args` and runs the subcommand.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>, Error> {
    match cli.command {
        Command::Decompose(a) => {
            let config: RunConfig = resolve_config(a.to_value(), a.input.config.as_deref())?;
            cmd_decompose(&config)
        }
        Command::Simulate(a) => cmd_simulate(&a.spec, &a.out),
        Command::InspectSupport(a) => {
            let config: InspectConfig = resolve_config(a.to_value(), a.input.config.as_deref())?;
            cmd_inspect_support(&config)
        }
    }
}

/// Process entry point: returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_merges_objects_and_replaces_tagged_enums() {
        let mut base = json!({"analysis": {"grid": {"policy": "quantiles", "count": 5}, "share_models": false}});
        overlay(
            &mut base,
            json!({"analysis": {"grid": {"policy": "auto"}, "share_models": true}}),
        );
        assert_eq!(
            base,
            json!({"analysis": {"grid": {"policy": "auto"}, "share_models": true}})
        );
    }

    #[test]
    fn missing_paths_are_config_errors() {
        let r: Result<RunConfig, _> = resolve_config(json!({"input": null, "out": "x"}), None);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
