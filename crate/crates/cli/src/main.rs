use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segplan::dataset::{load_cases, manifest_groups, prediction_pairs};
use segplan::reports::{
    read_candidate_scores, read_score_matrix, AugmentPreview, CandidateScore, EvaluationReport, PostprocessReport,
    PreviewPatch, RankReport, SelectionReport,
};
use segplan::run::{run_pipeline, RunConfig, RunOutcome};
use segplan::splits::{make_cv_splits, DEFAULT_FOLDS};
use segplan::steps::{fingerprint_dataset, plan_dataset, preprocess_cases, BudgetArgs};
use segplan::{error_report, exit_code, SEED_ENV};
use segplan_core::augment::{
    augment_patch, crop_with_zero_fill, oversized_patch_size, sample_params, sample_patch_origins, PatchGeometry,
};
use segplan_core::evalselect::{
    apply_postprocessing, bootstrap_ranking, case_dice, decide_postprocessing, evaluate, mean_foreground_dice,
    select_configuration, Candidate, DEFAULT_REPLICATES,
};
use segplan_core::planner::{PipelineFingerprint, PlanKind};
use segplan_core::preprocess::preprocess_case;
use segplan_core::rng::RngStream;
use segplan_core::tiling::{argmax_labels, compute_tile_origins, ensemble_average, ProbabilityVolume};
use segplan_core::volume_io::{
    read_case, read_document, read_native, write_native, LabelVolume, NativeData, Versioned, Volume,
};
use segplan_core::{Error, Grid, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "segplan", version, about = "Dataset fingerprinting and rule-based U-Net pipeline planning")]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct BudgetOpts {
    /// Named budget preset.
    #[arg(long)]
    preset: Option<String>,
    /// 3D budget in cost units (overrides the preset).
    #[arg(long)]
    budget_3d: Option<f64>,
    /// 2D budget in cost units (overrides the preset).
    #[arg(long)]
    budget_2d: Option<f64>,
}

impl From<BudgetOpts> for BudgetArgs {
    fn from(o: BudgetOpts) -> Self {
        BudgetArgs { preset: o.preset, budget_3d: o.budget_3d, budget_2d: o.budget_2d }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract the dataset fingerprint.
    Fingerprint {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan every configuration from a fingerprint.
    Plan {
        #[arg(long)]
        fingerprint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        budget: BudgetOpts,
        /// Comma-separated subset, e.g. `3d_fullres,2d`.
        #[arg(long, value_delimiter = ',')]
        configs: Vec<PlanKind>,
    },
    /// Crop, resample and normalize a dataset for each planned configuration.
    Preprocess {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        configs: Vec<PlanKind>,
    },
    /// Sample and augment training patches from one case.
    AugmentPreview {
        /// Case manifest.
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        config: PlanKind,
        #[arg(long)]
        out: PathBuf,
        /// Number of patches (default: the plan's batch size).
        #[arg(long)]
        count: Option<usize>,
    },
    /// List sliding-window origins for a volume shape and patch size.
    Tile {
        #[arg(long, value_delimiter = ',', required = true)]
        shape: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        patch: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average probability volumes.
    Ensemble {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the argmax label map here.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Dice of predictions (`<id>.json|.nii|.nii.gz`) against dataset labels.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        num_classes: Option<u16>,
        /// Candidate name to record in the report.
        #[arg(long)]
        candidate: Option<Candidate>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick the best configuration or ensemble.
    Select {
        /// CSV with `candidate,score` rows.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Evaluation report, as `candidate=path` or a path to a report that names its candidate.
        #[arg(long)]
        report: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide largest-component postprocessing from cross-validation predictions.
    PostprocessDecide {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        num_classes: Option<u16>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the postprocessed predictions into this directory.
        #[arg(long)]
        apply_to: Option<PathBuf>,
    },
    /// Bootstrap rank distribution of algorithms from a per-case score table.
    Rank {
        /// CSV: header `case,<alg>,…`, one row per case.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = DEFAULT_REPLICATES)]
        replicates: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validation folds.
    Splits {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        /// JSON object mapping case id to group; defaults to manifest groups.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fingerprint, plan, preprocess and split in one step.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        budget: BudgetOpts,
        #[arg(long, value_delimiter = ',')]
        configs: Vec<PlanKind>,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        /// Explicit split document instead of generated folds.
        #[arg(long)]
        split_file: Option<PathBuf>,
    },
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Pretty JSON to `out`, or to stdout.
fn emit<T: Serialize>(doc: &T, out: Option<&Path>) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(doc).map_err(|e| Error::json(out.unwrap_or(Path::new("<stdout>")), e))?;
    text.push('\n');
    match out {
        Some(p) => {
            ensure_parent(p)?;
            std::fs::write(p, text).map_err(|e| Error::io(p, e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn num_classes_of(pairs: &[(String, LabelVolume, LabelVolume)], given: Option<u16>) -> u16 {
    given.unwrap_or_else(|| pairs.iter().map(|(_, _, r)| r.num_classes()).max().unwrap_or(0))
}

fn cmd_plan(fingerprint: &Path, out: Option<&Path>, budget: BudgetOpts, configs: &[PlanKind]) -> Result<()> {
    let fp = read_document(fingerprint)?;
    let plan = plan_dataset(&fp, &budget.into(), configs)?;
    for kind in configs {
        if plan.plan(*kind).is_none() {
            eprintln!("note: {kind} is not part of this dataset's plan");
        }
    }
    emit(&plan, out)
}

fn cmd_preprocess(dataset: &Path, plan: &Path, out: &Path, configs: &[PlanKind]) -> Result<()> {
    let mut plan: PipelineFingerprint = read_document(plan)?;
    if !configs.is_empty() {
        plan.retain_kinds(configs);
    }
    let cases = load_cases(dataset)?;
    let written = preprocess_cases(&cases, &plan, out)?;
    println!("preprocessed {} cases for {} configurations ({} files)", cases.len(), plan.plans.len(), written.len());
    Ok(())
}

fn squeeze<T: Copy>(grid: Grid<T>, shape: &[usize]) -> Result<Grid<T>> {
    Grid::new(shape.to_vec(), grid.data().to_vec())
}

fn cmd_augment_preview(
    case: &Path,
    plan: &Path,
    kind: PlanKind,
    out: &Path,
    count: Option<usize>,
    seed: u64,
) -> Result<()> {
    let plan: PipelineFingerprint = read_document(plan)?;
    let unet = plan.plan(kind).ok_or_else(|| Error::Invalid(format!("plan has no {kind} configuration")))?;
    let (pre, _) = preprocess_case(&read_case(case)?, unet)?;
    let label = pre.label().ok_or_else(|| Error::NoLabel(pre.id.clone()))?;
    let geom = PatchGeometry::new(unet.patch_size.clone())?;
    let over = oversized_patch_size(&geom);
    let (mut patch3, mut over3) = ([1usize; 3], [1usize; 3]);
    for (i, &a) in unet.spatial_axes.iter().enumerate() {
        patch3[a] = unet.patch_size[i];
        over3[a] = over[i];
    }

    let mut rng = RngStream::new(seed);
    let samples = sample_patch_origins(label, patch3, count.unwrap_or(unet.batch_size), &mut rng)?;
    ensure_dir(out)?;
    let mut patches = Vec::new();
    for (i, sample) in samples.samples.iter().enumerate() {
        let origin: Vec<i64> = (0..3).map(|a| sample.origin[a] - ((over3[a] - patch3[a]) / 2) as i64).collect();
        let channels = pre
            .channels()
            .iter()
            .map(|c| squeeze(crop_with_zero_fill(c.grid(), &origin, &over3, 0.0), &over))
            .collect::<Result<Vec<_>>>()?;
        let lab = squeeze(crop_with_zero_fill(label.grid(), &origin, &over3, 0u16), &over)?;
        let params = sample_params(&mut rng, &geom, channels.len());
        let (aug, aug_label) = augment_patch(&channels, Some(&lab), &params, &geom, &mut rng)?;

        let mut names = Vec::new();
        for (c, (grid, src)) in aug.into_iter().zip(pre.channels()).enumerate() {
            let name = format!("patch_{i:03}_{c:04}.json");
            let vol = Volume::from_grid(squeeze(grid, &patch3)?, pre.spacing(), src.modality())?;
            write_native(&out.join(&name), &NativeData::Image(vol))?;
            names.push(name);
        }
        let label_name = match aug_label {
            Some(l) => {
                let name = format!("patch_{i:03}_label.json");
                let lv = LabelVolume::from_grid(squeeze(l, &patch3)?, pre.spacing(), label.num_classes())?;
                write_native(&out.join(&name), &NativeData::Label(lv))?;
                Some(name)
            }
            None => None,
        };
        patches.push(PreviewPatch { sample: sample.clone(), params, channels: names, label: label_name });
    }
    let preview = AugmentPreview {
        schema_version: AugmentPreview::SCHEMA_VERSION,
        case_id: pre.id.clone(),
        plan_kind: kind,
        seed,
        patch_size: unet.patch_size.clone(),
        no_foreground: samples.no_foreground,
        patches,
    };
    emit(&preview, Some(&out.join("augmentation.json")))
}

fn cmd_tile(shape: &[usize], patch: &[usize], out: Option<&Path>) -> Result<()> {
    let plan = compute_tile_origins(shape, patch)?;
    let doc = serde_json::json!({
        "shape": plan.shape,
        "patch": plan.patch,
        "n_windows": plan.len(),
        "origins": plan.origins,
    });
    emit(&doc, out)
}

fn cmd_ensemble(inputs: &[PathBuf], out: &Path, labels: Option<&Path>) -> Result<()> {
    let volumes = inputs.iter().map(|p| ProbabilityVolume::from_native(read_native(p)?)).collect::<Result<Vec<_>>>()?;
    let avg = ensemble_average(&volumes)?;
    ensure_parent(out)?;
    write_native(out, &avg.to_native())?;
    if let Some(path) = labels {
        ensure_parent(path)?;
        write_native(path, &NativeData::Label(argmax_labels(&avg)?))?;
    }
    Ok(())
}

fn cmd_evaluate(
    pred: &Path,
    dataset: &Path,
    num_classes: Option<u16>,
    candidate: Option<Candidate>,
    out: Option<&Path>,
) -> Result<()> {
    let pairs = prediction_pairs(pred, dataset)?;
    let result = evaluate(&pairs, num_classes_of(&pairs, num_classes))?;
    emit(&EvaluationReport { schema_version: EvaluationReport::SCHEMA_VERSION, candidate, result }, out)
}

fn report_score(spec: &str) -> Result<(Candidate, f64)> {
    let (named, path) = match spec.split_once('=') {
        Some((c, p)) => (Some(c.parse::<Candidate>()?), p),
        None => (None, spec),
    };
    let report: EvaluationReport = read_document(Path::new(path))?;
    let candidate = named
        .or(report.candidate)
        .ok_or_else(|| Error::Invalid(format!("{path} does not name its candidate; pass candidate=path")))?;
    Ok((candidate, report.result.mean_foreground_dice))
}

fn cmd_select(scores: Option<&Path>, reports: &[String], out: Option<&Path>) -> Result<()> {
    let mut all = match scores {
        Some(p) => read_candidate_scores(p)?,
        None => Vec::new(),
    };
    for spec in reports {
        all.push(report_score(spec)?);
    }
    let (selected, score) = select_configuration(&all)?;
    let candidates = all.into_iter().map(|(candidate, score)| CandidateScore { candidate, score }).collect();
    emit(&SelectionReport { schema_version: SelectionReport::SCHEMA_VERSION, selected, score, candidates }, out)
}

fn mean_dice(preds: &[LabelVolume], refs: &[LabelVolume], c: u16) -> Result<f64> {
    let per_case = preds.iter().zip(refs).map(|(p, r)| case_dice(p, r, c)).collect::<Result<Vec<_>>>()?;
    mean_foreground_dice(&per_case)
}

fn cmd_postprocess(
    pred: &Path,
    dataset: &Path,
    num_classes: Option<u16>,
    out: Option<&Path>,
    apply_to: Option<&Path>,
) -> Result<()> {
    let pairs = prediction_pairs(pred, dataset)?;
    let c = num_classes_of(&pairs, num_classes);
    let (ids, (preds, refs)): (Vec<String>, (Vec<_>, Vec<_>)) = pairs.into_iter().map(|(i, p, r)| (i, (p, r))).unzip();
    let decision = decide_postprocessing(&preds, &refs, c)?;
    let processed: Vec<_> = preds.iter().map(|p| apply_postprocessing(p, &decision)).collect();
    let report = PostprocessReport {
        schema_version: PostprocessReport::SCHEMA_VERSION,
        mean_dice_before: mean_dice(&preds, &refs, c)?,
        mean_dice_after: mean_dice(&processed, &refs, c)?,
        decision,
    };
    if let Some(dir) = apply_to {
        ensure_dir(dir)?;
        for (id, labels) in ids.iter().zip(processed) {
            write_native(&dir.join(format!("{id}.json")), &NativeData::Label(labels))?;
        }
    }
    emit(&report, out)
}

fn cmd_rank(scores: &Path, replicates: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let (algorithms, matrix) = read_score_matrix(scores)?;
    let distribution = bootstrap_ranking(&matrix, replicates, &RngStream::new(seed))?;
    let first_place_frequency = (0..algorithms.len()).map(|a| distribution.first_place_frequency(a)).collect();
    let report = RankReport {
        schema_version: RankReport::SCHEMA_VERSION,
        algorithms,
        seed,
        distribution,
        first_place_frequency,
    };
    emit(&report, out)
}

fn cmd_splits(dataset: &Path, folds: usize, groups: Option<&Path>, seed: u64, out: Option<&Path>) -> Result<()> {
    let declared = manifest_groups(dataset)?;
    let ids: Vec<String> = declared.iter().map(|(id, _)| id.clone()).collect();
    let map: BTreeMap<String, String> = match groups {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::json(p, e))?
        }
        None => declared.into_iter().filter_map(|(id, g)| g.map(|g| (id, g))).collect(),
    };
    let split = make_cv_splits(&ids, folds, (!map.is_empty()).then_some(&map), &mut RngStream::new(seed))?;
    emit(&split, out)
}

fn cmd_run(cfg: RunConfig) -> Result<()> {
    match run_pipeline(&cfg)? {
        RunOutcome::UpToDate(_) => println!("up to date: {}", cfg.output.display()),
        RunOutcome::Completed(m) => println!("wrote {} files to {}", m.outputs.len() + 1, cfg.output.display()),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Fingerprint { dataset, out } => emit(&fingerprint_dataset(&dataset, seed)?, out.as_deref()),
        Command::Plan { fingerprint, out, budget, configs } => cmd_plan(&fingerprint, out.as_deref(), budget, &configs),
        Command::Preprocess { dataset, plan, out, configs } => cmd_preprocess(&dataset, &plan, &out, &configs),
        Command::AugmentPreview { case, plan, config, out, count } => {
            cmd_augment_preview(&case, &plan, config, &out, count, seed)
        }
        Command::Tile { shape, patch, out } => cmd_tile(&shape, &patch, out.as_deref()),
        Command::Ensemble { inputs, out, labels } => cmd_ensemble(&inputs, &out, labels.as_deref()),
        Command::Evaluate { pred, dataset, num_classes, candidate, out } => {
            cmd_evaluate(&pred, &dataset, num_classes, candidate, out.as_deref())
        }
        Command::Select { scores, report, out } => cmd_select(scores.as_deref(), &report, out.as_deref()),
        Command::PostprocessDecide { pred, dataset, num_classes, out, apply_to } => {
            cmd_postprocess(&pred, &dataset, num_classes, out.as_deref(), apply_to.as_deref())
        }
        Command::Rank { scores, replicates, out } => cmd_rank(&scores, replicates, seed, out.as_deref()),
        Command::Splits { dataset, folds, groups, out } => {
            cmd_splits(&dataset, folds, groups.as_deref(), seed, out.as_deref())
        }
        Command::Run { dataset, out, budget, configs, folds, split_file } => {
            cmd_run(RunConfig { dataset, output: out, budget: budget.into(), seed, configs, folds, split_file })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", error_report(&Error::Invalid(format!("--jobs {n}: {e}"))));
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_report(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
