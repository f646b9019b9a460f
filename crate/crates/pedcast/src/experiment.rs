//! Experiment orchestration: the (strategy x sequence x seed) grid, result
//! persistence, the run manifest, and the summary tables (forgetting /
//! sequence-end metrics plus pairwise significance).

use crate::config::ExperimentConfig;
use crate::continual::{pretrain, run_scl, RunOutput, Strategy};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learn::{save_anchors, write_epoch_csv};
use crate::metrics::{mann_whitney_u, mean_std};
use crate::model::checkpoint::{load_checkpoint, save_checkpoint};
use crate::model::ParamVector;
use crate::rng::{self, Stream};
use crate::sim::EnvKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Held-out seed for the frozen validation sets; independent of the
/// experiment seeds so that changing them never perturbs evaluation data.
pub const VALIDATION_SEED: u64 = 0x5EED_BA5E;

pub fn sequence_label(seq: &[EnvKind]) -> String {
    seq.iter().map(|e| e.name()).collect::<Vec<_>>().join("-")
}

pub fn parse_sequence(text: &str) -> Result<Vec<EnvKind>> {
    text.split([',', '-'])
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse())
        .collect()
}

/// One row of a cell's `metrics.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub strategy: String,
    pub sequence: String,
    pub seed: u64,
    pub phase: usize,
    pub env: String,
    pub ade_mean: f64,
    pub ade_std: f64,
    pub fde_mean: f64,
    pub fde_std: f64,
    pub n: usize,
}

/// One row of a cell's `samples.csv`: a single validation sequence's scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRow {
    pub strategy: String,
    pub sequence: String,
    pub seed: u64,
    pub phase: usize,
    pub env: String,
    pub example: usize,
    pub ade: f64,
    pub fde: f64,
}

fn csv_write<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::format("csv", e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_read<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::format("csv", e.to_string()))
}

pub fn cell_dir_name(strategy: Strategy, sequence: &[EnvKind], seed: u64) -> String {
    format!("{}_{}_s{}", strategy.name(), sequence_label(sequence), seed)
}

/// Write everything a cell produced: per-phase checkpoints, anchors, the
/// coreset snapshot, metric records, per-example samples and training logs.
pub fn persist_run(dir: &Path, seed: u64, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let seq_label = sequence_label(&out.sequence);

    for (k, theta) in out.checkpoints.iter().enumerate() {
        save_checkpoint(&dir.join(format!("checkpoint_phase{}.bin", k + 1)), theta)?;
    }
    if !out.anchors.is_empty() {
        save_anchors(&dir.join("anchors.bin"), &out.anchors)?;
    }
    out.coreset.as_dataset().save(&dir.join("coreset.bin"))?;

    let metric_rows: Vec<MetricRow> = out
        .records
        .iter()
        .map(|r| MetricRow {
            strategy: r.strategy.clone(),
            sequence: seq_label.clone(),
            seed,
            phase: r.phase,
            env: r.env.clone(),
            ade_mean: r.ade_mean,
            ade_std: r.ade_std,
            fde_mean: r.fde_mean,
            fde_std: r.fde_std,
            n: r.n,
        })
        .collect();
    csv_write(&dir.join("metrics.csv"), &metric_rows)?;

    let mut sample_rows = Vec::new();
    for s in &out.samples {
        for (i, (a, f)) in s.ade.iter().zip(&s.fde).enumerate() {
            sample_rows.push(SampleRow {
                strategy: s.strategy.clone(),
                sequence: seq_label.clone(),
                seed,
                phase: s.phase,
                env: s.env.clone(),
                example: i,
                ade: *a,
                fde: *f,
            });
        }
    }
    csv_write(&dir.join("samples.csv"), &sample_rows)?;

    let log_path = dir.join("train_log.csv");
    if log_path.exists() {
        std::fs::remove_file(&log_path)?;
    }
    for (task, stats) in &out.train_logs {
        write_epoch_csv(&log_path, task, stats, true)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCell {
    pub strategy: String,
    pub sequence: String,
    pub seed: u64,
    pub dir: String,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub code_version: String,
    pub validation_seed: u64,
    pub seeds: Vec<u64>,
    /// Full configuration of the run, including any hyperparameter
    /// deviations from the tabulated defaults.
    pub config: ExperimentConfig,
    pub cells: Vec<ManifestCell>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format("manifest", e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))
    }
}

/// Environments appearing anywhere in the configured sequences.
pub fn config_envs(cfg: &ExperimentConfig) -> Result<Vec<EnvKind>> {
    let mut envs = Vec::new();
    for seq in &cfg.sequences {
        for name in seq {
            let env: EnvKind = name.parse()?;
            if !envs.contains(&env) {
                envs.push(env);
            }
        }
    }
    Ok(envs)
}

/// Run the full (strategy x sequence x seed) grid: one shared pre-training
/// per seed, shared frozen validation sets, one directory per cell. A failing
/// cell is recorded and skipped; the caller decides the exit code.
pub fn run_grid(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let envs = config_envs(cfg)?;
    let validation = crate::continual::build_validation_sets(&envs, cfg, VALIDATION_SEED)?;

    let strategies: Vec<Strategy> = cfg
        .strategies
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let sequences: Vec<Vec<EnvKind>> = cfg
        .sequences
        .iter()
        .map(|seq| seq.iter().map(|e| e.parse()).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        let theta0 = shared_pretrained(cfg, seed, out_dir)?;
        for sequence in &sequences {
            for &strategy in &strategies {
                let dir_name = cell_dir_name(strategy, sequence, seed);
                let dir = out_dir.join(&dir_name);
                let status = run_scl(sequence, &theta0, strategy, cfg, seed, &validation)
                    .and_then(|out| persist_run(&dir, seed, &out));
                let status_text = match status {
                    Ok(()) => "ok".to_string(),
                    Err(e) => {
                        log::error!("cell {dir_name} failed: {e}");
                        format!("error: {e}")
                    }
                };
                cells.push(ManifestCell {
                    strategy: strategy.name().into(),
                    sequence: sequence_label(sequence),
                    seed,
                    dir: dir_name,
                    status: status_text,
                });
            }
        }
    }

    let manifest = Manifest {
        config_digest: cfg.digest(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        validation_seed: VALIDATION_SEED,
        seeds: cfg.seeds.clone(),
        config: cfg.clone(),
        cells,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Pre-train once per seed and cache the checkpoint in the results root.
pub fn shared_pretrained(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<ParamVector> {
    let path = out_dir.join(format!("pretrained_s{seed}.bin"));
    if path.exists() {
        return load_checkpoint(&path);
    }
    let mut init_rng = rng::stream_rng(seed, Stream::Init, 0);
    let theta_random = ParamVector::random(cfg.model_config(), &mut init_rng);
    let (theta0, stats) = pretrain(&theta_random, cfg, seed)?;
    save_checkpoint(&path, &theta0)?;
    write_epoch_csv(&out_dir.join(format!("pretrain_log_s{seed}.csv")), "open", &stats, true)?;
    Ok(theta0)
}

/// Grouped per-example samples of one cell: `(phase, env) -> (ade, fde)` per
/// validation sequence.
type CellSamples = BTreeMap<(usize, String), Vec<(f64, f64)>>;

fn load_cell_samples(dir: &Path) -> Result<CellSamples> {
    let rows: Vec<SampleRow> = csv_read(&dir.join("samples.csv"))?;
    let mut out: CellSamples = BTreeMap::new();
    for row in rows {
        out.entry((row.phase, row.env.clone()))
            .or_default()
            .push((row.ade, row.fde));
    }
    Ok(out)
}

/// One row of the sequence-level summary table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub sequence: String,
    pub forgotten_ade_mean: f64,
    pub forgotten_ade_std: f64,
    pub forgotten_fde_mean: f64,
    pub forgotten_fde_std: f64,
    pub seqend_ade_mean: f64,
    pub seqend_ade_std: f64,
    pub seqend_fde_mean: f64,
    pub seqend_fde_std: f64,
}

/// One row of the pairwise significance table: the combined strategy against
/// a baseline on one environment of one sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub sequence: String,
    pub env: String,
    pub baseline: String,
    pub ade_u: f64,
    pub ade_p: f64,
    pub fde_u: f64,
    pub fde_p: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub summary: Vec<SummaryRow>,
    pub significance: Vec<SignificanceRow>,
}

/// Per-example forgetting and sequence-end values pooled over seeds and
/// environments for one (strategy, sequence) group of cells.
fn summarize_group(
    sequence: &[EnvKind],
    cells: &[CellSamples],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let k = sequence.len();
    let mut forgotten_ade = Vec::new();
    let mut forgotten_fde = Vec::new();
    let mut seqend_ade = Vec::new();
    let mut seqend_fde = Vec::new();
    for samples in cells {
        for (pos, env) in sequence.iter().enumerate() {
            let own_phase = pos + 1;
            let find = |phase: usize| -> Result<&Vec<(f64, f64)>> {
                samples.get(&(phase, env.name().to_string())).ok_or_else(|| {
                    Error::MissingRecords(format!("({}, phase {phase})", env.name()))
                })
            };
            let base = find(own_phase)?;
            let end = find(k)?;
            for (a, f) in end {
                seqend_ade.push(*a);
                seqend_fde.push(*f);
            }
            if own_phase == k {
                continue;
            }
            let later: Vec<&Vec<(f64, f64)>> =
                (own_phase + 1..=k).map(find).collect::<Result<_>>()?;
            for i in 0..base.len() {
                let mut d_ade = 0.0;
                let mut d_fde = 0.0;
                for phase_samples in &later {
                    d_ade += phase_samples[i].0 - base[i].0;
                    d_fde += phase_samples[i].1 - base[i].1;
                }
                forgotten_ade.push(d_ade / later.len() as f64);
                forgotten_fde.push(d_fde / later.len() as f64);
            }
        }
    }
    Ok((forgotten_ade, forgotten_fde, seqend_ade, seqend_fde))
}

/// Aggregate a results directory into the two summary tables and write them
/// as `table_sequences.csv` and `table_significance.csv`.
pub fn report(results_dir: &Path) -> Result<Report> {
    let manifest = Manifest::load(&results_dir.join("manifest.json"))?;

    // (strategy, sequence) -> loaded per-seed samples.
    let mut groups: BTreeMap<(String, String), Vec<CellSamples>> = BTreeMap::new();
    for cell in &manifest.cells {
        if cell.status != "ok" {
            return Err(Error::MissingCell {
                strategy: cell.strategy.clone(),
                sequence: cell.sequence.clone(),
            });
        }
        let samples = load_cell_samples(&results_dir.join(&cell.dir)).map_err(|_| {
            Error::MissingCell {
                strategy: cell.strategy.clone(),
                sequence: cell.sequence.clone(),
            }
        })?;
        groups
            .entry((cell.strategy.clone(), cell.sequence.clone()))
            .or_default()
            .push(samples);
    }

    let mut summary = Vec::new();
    let mut pooled_end: BTreeMap<(String, String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((strategy, seq_label), cells) in &groups {
        let sequence = parse_sequence(seq_label)?;
        let (f_ade, f_fde, e_ade, e_fde) = summarize_group(&sequence, cells)?;
        let (fam, fas) = mean_std(&f_ade);
        let (ffm, ffs) = mean_std(&f_fde);
        let (eam, eas) = mean_std(&e_ade);
        let (efm, efs) = mean_std(&e_fde);
        summary.push(SummaryRow {
            strategy: strategy.clone(),
            sequence: seq_label.clone(),
            forgotten_ade_mean: fam,
            forgotten_ade_std: fas,
            forgotten_fde_mean: ffm,
            forgotten_fde_std: ffs,
            seqend_ade_mean: eam,
            seqend_ade_std: eas,
            seqend_fde_mean: efm,
            seqend_fde_std: efs,
        });

        // Pool sequence-end per-example values per environment for the
        // significance table.
        let k = sequence.len();
        for env in &sequence {
            let mut ades = Vec::new();
            let mut fdes = Vec::new();
            for cell in cells {
                if let Some(samples) = cell.get(&(k, env.name().to_string())) {
                    ades.extend(samples.iter().map(|s| s.0));
                    fdes.extend(samples.iter().map(|s| s.1));
                }
            }
            pooled_end.insert(
                (strategy.clone(), seq_label.clone(), env.name().to_string()),
                (ades, fdes),
            );
        }
    }

    // Pairwise significance: the combined strategy against every other
    // strategy present, per sequence and environment.
    let mut significance = Vec::new();
    let strategies: Vec<String> = groups.keys().map(|(s, _)| s.clone()).collect();
    let sequences: Vec<String> = groups.keys().map(|(_, s)| s.clone()).collect();
    for seq_label in unique(&sequences) {
        let scl_key = ("scl".to_string(), seq_label.clone());
        if !groups.contains_key(&scl_key) {
            continue;
        }
        for baseline in unique(&strategies) {
            if baseline == "scl" || !groups.contains_key(&(baseline.clone(), seq_label.clone())) {
                continue;
            }
            for env in parse_sequence(&seq_label)? {
                let scl = &pooled_end[&("scl".to_string(), seq_label.clone(), env.name().to_string())];
                let other = &pooled_end[&(baseline.clone(), seq_label.clone(), env.name().to_string())];
                let (ade_u, ade_p) = mann_whitney_u(&scl.0, &other.0)?;
                let (fde_u, fde_p) = mann_whitney_u(&scl.1, &other.1)?;
                significance.push(SignificanceRow {
                    sequence: seq_label.clone(),
                    env: env.name().to_string(),
                    baseline: baseline.clone(),
                    ade_u,
                    ade_p,
                    fde_u,
                    fde_p,
                });
            }
        }
    }

    csv_write(&results_dir.join("table_sequences.csv"), &summary)?;
    csv_write(&results_dir.join("table_significance.csv"), &significance)?;
    Ok(Report {
        summary,
        significance,
    })
}

fn unique(values: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for v in values {
        if !out.contains(v) {
            out.push(v.clone());
        }
    }
    out
}

/// Evaluate a checkpoint (or the constant-velocity baseline) against a
/// frozen validation set of one environment.
pub fn evaluate_checkpoint(
    checkpoint: Option<&Path>,
    env: EnvKind,
    cfg: &ExperimentConfig,
) -> Result<MetricRow> {
    let val: Dataset = crate::continual::build_validation(env, cfg, VALIDATION_SEED)?;
    let theta = match checkpoint {
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };
    let (ades, fdes) = crate::continual::evaluate(theta.as_ref(), &val, cfg)?;
    let (ade_mean, ade_std) = mean_std(&ades);
    let (fde_mean, fde_std) = mean_std(&fdes);
    Ok(MetricRow {
        strategy: theta.map(|_| "checkpoint").unwrap_or("cv").to_string(),
        sequence: env.name().to_string(),
        seed: 0,
        phase: 0,
        env: env.name().to_string(),
        ade_mean,
        ade_std,
        fde_mean,
        fde_std,
        n: ades.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_labels_round_trip() {
        let seq = vec![EnvKind::Square, EnvKind::Obstacle, EnvKind::Hall];
        let label = sequence_label(&seq);
        assert_eq!(label, "square-obstacle-hall");
        assert_eq!(parse_sequence(&label).unwrap(), seq);
        assert_eq!(parse_sequence("square,obstacle,hall").unwrap(), seq);
        assert!(parse_sequence("square,bogus").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            config_digest: "abc".into(),
            code_version: "0.1.0".into(),
            validation_seed: VALIDATION_SEED,
            seeds: vec![1, 2],
            config: ExperimentConfig::reduced(),
            cells: vec![ManifestCell {
                strategy: "scl".into(),
                sequence: "square-obstacle".into(),
                seed: 1,
                dir: "scl_square-obstacle_s1".into(),
                status: "ok".into(),
            }],
        };
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(back.config_digest, "abc");
        assert_eq!(back.cells.len(), 1);
    }
}
