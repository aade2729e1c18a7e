//! Named experiment presets and the output pipeline behind the CLI.
//!
//! Configuration layers apply in this order, later ones winning: built-in
//! defaults, the preset, the config file, command-line flags. The preset's
//! parameter grid (reliabilities, and base rates for the isolated-agent
//! landscapes) is applied per cell on top; `--p-obj` replaces the
//! reliability grid with a single value.
//!
//! Output directory layout:
//!
//! | file | preset(s) | content |
//! |------|-----------|---------|
//! | `agents.csv` | fig3, fig4, fig5, custom | per agent per step |
//! | `p_obj_<p>/agents.csv` | fig5 when sweeping | per agent per step, one file per reliability |
//! | `runs.csv` | fig3-fig6, custom | per run per step population stats |
//! | `summary.csv` | fig3-fig6, custom | grand means across runs |
//! | `accuracy.csv` | fig1, fig2 | final-step Brier and absolute error per cell |
//! | `graphs/run_<r>.edges` | fig3, fig4 | communication graph of each run |
//! | `metadata.json` | all | resolved configs, grid, seed, version, timing |

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;
use thiserror::Error;

use crate::config::{Condition, ConfigError, ConfigLayer, PriorBelief, SimConfig, TruthMode};
use crate::engine::{EngineError, RunOutput, Simulator};
use crate::metrics::{trajectory_stats, AccuracyTally, AggregateSeries, Aggregator};
use crate::output::{emit_csv, format_real, AccuracyRow, AgentRow, RunRow, SummaryRow};
use crate::prob::Probability;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Whether the failure is the user's configuration rather than the run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_) | ExperimentError::Engine(EngineError::Config(_))
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentPreset {
    /// Isolated agents, ten data each, Brier landscape over reliability and base rate.
    Fig1Isolated,
    /// As fig1 with the prior belief set to the base rate.
    Fig2PriorKnowledge,
    /// Belief traces of two agents in one run.
    Fig3PairTrace,
    /// All agents of a few runs.
    Fig4RunPanels,
    /// Per-run mean beliefs of 100 runs for four reliabilities.
    Fig5RunMeans,
    /// Grand means for four reliabilities.
    Fig6GrandMeans,
}

impl ExperimentPreset {
    pub const ALL: [ExperimentPreset; 6] = [
        ExperimentPreset::Fig1Isolated,
        ExperimentPreset::Fig2PriorKnowledge,
        ExperimentPreset::Fig3PairTrace,
        ExperimentPreset::Fig4RunPanels,
        ExperimentPreset::Fig5RunMeans,
        ExperimentPreset::Fig6GrandMeans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentPreset::Fig1Isolated => "fig1-isolated",
            ExperimentPreset::Fig2PriorKnowledge => "fig2-prior-knowledge",
            ExperimentPreset::Fig3PairTrace => "fig3-pair-trace",
            ExperimentPreset::Fig4RunPanels => "fig4-run-panels",
            ExperimentPreset::Fig5RunMeans => "fig5-run-means",
            ExperimentPreset::Fig6GrandMeans => "fig6-grand-means",
        }
    }
}

impl fmt::Display for ExperimentPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentPreset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError::Invalid {
                key: "preset",
                reason: format!("unknown preset {s:?}"),
            })
    }
}

/// Reliabilities of the dynamics panels.
pub const DYNAMICS_P_OBJ: [f64; 4] = [0.33, 0.66, 0.80, 0.90];
/// Default grid for the isolated-agent landscapes; a stand-in, not a
/// published grid.
pub const LANDSCAPE_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Clone, Debug, PartialEq)]
enum AgentExport {
    None,
    All,
    Only(Vec<usize>),
}

#[derive(Clone, Debug)]
struct Outputs {
    agents: AgentExport,
    runs: bool,
    summary: bool,
    accuracy: bool,
    graphs: bool,
}

#[derive(Clone, Debug)]
struct Cell {
    config: SimConfig,
    base_rate: Option<f64>,
}

fn preset_layer(preset: Option<ExperimentPreset>) -> ConfigLayer {
    use ExperimentPreset::*;
    let isolated = ConfigLayer {
        n_agents: Some(1),
        steps: Some(10),
        runs: Some(1000),
        inquiry_prob: Some(1.0),
        conditions: Some(vec![
            Condition::ShadowUpdater,
            Condition::ShadowFixed,
            Condition::Optimal,
        ]),
        ..Default::default()
    };
    match preset {
        Some(Fig1Isolated) => ConfigLayer {
            prior_belief: Some(PriorBelief::Value(Probability::HALF)),
            ..isolated
        },
        Some(Fig2PriorKnowledge) => ConfigLayer {
            prior_belief: Some(PriorBelief::BaseRate),
            ..isolated
        },
        Some(Fig3PairTrace) => ConfigLayer {
            runs: Some(1),
            ..Default::default()
        },
        Some(Fig4RunPanels) => ConfigLayer {
            runs: Some(3),
            ..Default::default()
        },
        Some(Fig5RunMeans) | Some(Fig6GrandMeans) => ConfigLayer {
            runs: Some(100),
            steps: Some(50),
            ..Default::default()
        },
        None => ConfigLayer::default(),
    }
}

fn outputs_for(preset: Option<ExperimentPreset>) -> Outputs {
    use ExperimentPreset::*;
    let dynamics = |agents, graphs| Outputs {
        agents,
        runs: true,
        summary: true,
        accuracy: false,
        graphs,
    };
    match preset {
        Some(Fig1Isolated) | Some(Fig2PriorKnowledge) => Outputs {
            agents: AgentExport::None,
            runs: false,
            summary: false,
            accuracy: true,
            graphs: false,
        },
        Some(Fig3PairTrace) => dynamics(AgentExport::Only(vec![0, 1]), true),
        Some(Fig4RunPanels) => dynamics(AgentExport::All, true),
        Some(Fig5RunMeans) => dynamics(AgentExport::All, false),
        Some(Fig6GrandMeans) => dynamics(AgentExport::None, false),
        None => dynamics(AgentExport::All, false),
    }
}

/// What to run and where its knobs come from.
#[derive(Clone, Debug, Default)]
pub struct ExperimentRequest {
    pub preset: Option<ExperimentPreset>,
    /// Layer read from `--config`.
    pub file: ConfigLayer,
    /// Layer built from command-line flags.
    pub cli: ConfigLayer,
    /// Worker threads; 0 = all cores, 1 = sequential.
    pub threads: usize,
}

/// In-memory results of a completed experiment.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub files: Vec<PathBuf>,
    /// Aggregated series per reliability, in grid order.
    pub summaries: Vec<(f64, BTreeMap<Condition, AggregateSeries>)>,
    pub accuracy: Vec<AccuracyRow>,
    pub configs: Vec<SimConfig>,
}

/// Cells to run, the reliability grid, and the base-rate grid if any.
type Plan = (Vec<Cell>, Vec<f64>, Option<Vec<f64>>);

fn plan(req: &ExperimentRequest) -> Result<Plan, ConfigError> {
    let merged = preset_layer(req.preset).merge(&req.file).merge(&req.cli);
    let landscape = matches!(
        req.preset,
        Some(ExperimentPreset::Fig1Isolated) | Some(ExperimentPreset::Fig2PriorKnowledge)
    );
    let p_grid: Vec<f64> = match (req.cli.p_obj, req.preset) {
        (Some(p), _) => vec![p],
        (None, Some(ExperimentPreset::Fig3PairTrace | ExperimentPreset::Fig4RunPanels)) => vec![0.66],
        (None, Some(ExperimentPreset::Fig5RunMeans | ExperimentPreset::Fig6GrandMeans)) => DYNAMICS_P_OBJ.to_vec(),
        (None, Some(_)) => LANDSCAPE_GRID.to_vec(),
        (None, None) => vec![merged.p_obj.ok_or(ConfigError::Missing("p_obj"))?],
    };
    let base_grid = landscape.then(|| LANDSCAPE_GRID.to_vec());
    let mut cells = Vec::new();
    for &p in &p_grid {
        let mut layer = merged.clone();
        layer.p_obj = Some(p);
        match &base_grid {
            Some(bases) => {
                for &b in bases {
                    let base_rate = Probability::new(b).map_err(|e| ConfigError::Invalid {
                        key: "base_rate",
                        reason: e.to_string(),
                    })?;
                    layer.truth = Some(TruthMode::Sampled { base_rate });
                    cells.push(Cell {
                        config: layer.resolve()?,
                        base_rate: Some(b),
                    });
                }
            }
            None => cells.push(Cell {
                config: layer.resolve()?,
                base_rate: None,
            }),
        }
    }
    Ok((cells, p_grid, base_grid))
}

/// Removes everything it tracked unless committed.
struct OutputGuard {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    fn new() -> Self {
        OutputGuard {
            files: Vec::new(),
            dirs: Vec::new(),
            committed: false,
        }
    }

    fn dir(&mut self, path: PathBuf) -> Result<PathBuf, ExperimentError> {
        if !path.exists() {
            fs::create_dir_all(&path).map_err(io_err(&path))?;
            self.dirs.push(path.clone());
        }
        Ok(path)
    }

    fn file(&mut self, path: PathBuf) -> PathBuf {
        self.files.push(path.clone());
        path
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

fn agent_rows(out: &RunOutput, export: &AgentExport, rows: &mut Vec<AgentRow>) {
    for t in &out.trajectories {
        for step in 1..=t.steps() {
            for (agent, r) in t.at_step(step).iter().enumerate() {
                let keep = match export {
                    AgentExport::None => false,
                    AgentExport::All => true,
                    AgentExport::Only(ids) => ids.contains(&agent),
                };
                if keep {
                    rows.push(AgentRow {
                        condition: t.condition,
                        run: t.run,
                        step,
                        agent,
                        belief: r.belief,
                        world_trust: r.world_trust,
                    });
                }
            }
        }
    }
}

/// Runs the request and writes its files into `out_dir`. On failure, files
/// written so far are removed.
pub fn run_experiment(req: &ExperimentRequest, out_dir: &Path) -> Result<ExperimentOutcome, ExperimentError> {
    let started = Instant::now();
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis());
    let (cells, p_grid, base_grid) = plan(req)?;
    let outputs = outputs_for(req.preset);

    let mut guard = OutputGuard::new();
    let out_dir = guard.dir(out_dir.to_path_buf())?;

    let mut run_rows = Vec::new();
    let mut summary_rows = Vec::new();
    let mut accuracy = Vec::new();
    let mut summaries = Vec::new();
    let mut graphs_written = false;

    for &p in &p_grid {
        let mut agg = Aggregator::new();
        let mut agents = Vec::new();
        for cell in cells.iter().filter(|c| c.config.p_obj.value() == p) {
            let sim = Simulator::new(&cell.config)?;
            let mut tallies: BTreeMap<Condition, AccuracyTally> = BTreeMap::new();
            let mut graphs = Vec::new();
            sim.run_batch(
                req.threads,
                |out: RunOutput| -> Result<(), crate::metrics::MetricsError> {
                    for t in &out.trajectories {
                        if outputs.runs || outputs.summary {
                            agg.push(t)?;
                        }
                        if outputs.runs {
                            run_rows.extend(trajectory_stats(t).into_iter().map(|s| RunRow {
                                condition: t.condition,
                                p_obj: p,
                                run: t.run,
                                step: s.step,
                                mean_belief: s.mean_belief,
                                belief_variance: s.belief_variance,
                                mean_world_trust: s.mean_world_trust,
                            }));
                        }
                        if outputs.accuracy {
                            tallies.entry(t.condition).or_default().push(t);
                        }
                    }
                    agent_rows(&out, &outputs.agents, &mut agents);
                    if outputs.graphs && !graphs_written {
                        graphs.push((out.run, out.graph.to_edge_list()));
                    }
                    Ok(())
                },
            )?;
            for (condition, tally) in tallies {
                accuracy.push(AccuracyRow {
                    condition,
                    p_obj: p,
                    base_rate: cell.base_rate.unwrap_or(f64::NAN),
                    runs: cell.config.runs,
                    mean_brier: tally.mean_brier(),
                    mean_absolute_error: tally.mean_absolute_error(),
                });
            }
            if !graphs.is_empty() {
                let dir = guard.dir(out_dir.join("graphs"))?;
                for (run, edges) in graphs {
                    let path = guard.file(dir.join(format!("run_{run}.edges")));
                    fs::write(&path, edges).map_err(io_err(&path))?;
                }
                graphs_written = true;
            }
        }
        if outputs.agents != AgentExport::None {
            let dir = if p_grid.len() > 1 {
                guard.dir(out_dir.join(format!("p_obj_{}", format_real(p))))?
            } else {
                out_dir.clone()
            };
            let path = guard.file(dir.join("agents.csv"));
            emit_csv(&mut agents, &path).map_err(io_err(&path))?;
        }
        if outputs.runs || outputs.summary {
            let series = agg.finish();
            for s in series.values() {
                summary_rows.extend((0..s.grand_mean.len()).map(|i| SummaryRow {
                    condition: s.condition,
                    p_obj: p,
                    step: i + 1,
                    grand_mean_belief: s.grand_mean[i],
                    between_run_variance: s.between_run_variance[i],
                }));
            }
            summaries.push((p, series));
        }
    }

    if outputs.runs {
        let path = guard.file(out_dir.join("runs.csv"));
        emit_csv(&mut run_rows, &path).map_err(io_err(&path))?;
    }
    if outputs.summary {
        let path = guard.file(out_dir.join("summary.csv"));
        emit_csv(&mut summary_rows, &path).map_err(io_err(&path))?;
    }
    if outputs.accuracy {
        let path = guard.file(out_dir.join("accuracy.csv"));
        emit_csv(&mut accuracy, &path).map_err(io_err(&path))?;
    }

    let meta_path = guard.file(out_dir.join("metadata.json"));
    let files: Vec<String> = guard
        .files
        .iter()
        .map(|f| f.strip_prefix(&out_dir).unwrap_or(f).display().to_string())
        .collect();
    let metadata = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "preset": req.preset.map_or("custom", ExperimentPreset::name),
        "master_seed": cells.first().map(|c| c.config.master_seed),
        "threads": req.threads,
        "grid": {
            "p_obj": p_grid,
            "base_rate": base_grid,
            "source": if req.cli.p_obj.is_some() { "command line" } else { "preset default" },
            "note": base_grid.as_ref().map(|_| "base-rate and reliability grid is a default stand-in"),
        },
        "cells": cells.iter().map(|c| json!({
            "p_obj": c.config.p_obj,
            "base_rate": c.base_rate,
            "config": c.config,
        })).collect::<Vec<_>>(),
        "files": files,
        "wall_clock": {
            "started_unix_ms": started_unix_ms as u64,
            "elapsed_ms": started.elapsed().as_millis() as u64,
        },
    });
    let text = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    fs::write(&meta_path, text + "\n").map_err(io_err(&meta_path))?;

    guard.committed = true;
    Ok(ExperimentOutcome {
        files: guard.files.clone(),
        summaries,
        accuracy,
        configs: cells.into_iter().map(|c| c.config).collect(),
    })
}

/// Runs a preset at its defaults with the given master seed.
pub fn run_preset(
    preset: ExperimentPreset,
    master_seed: u64,
    out_dir: &Path,
) -> Result<ExperimentOutcome, ExperimentError> {
    run_experiment(
        &ExperimentRequest {
            preset: Some(preset),
            cli: ConfigLayer {
                master_seed: Some(master_seed),
                ..Default::default()
            },
            threads: 0,
            ..Default::default()
        },
        out_dir,
    )
}
