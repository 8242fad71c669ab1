//! Pipeline stages shared by the CLI subcommands. Each stage reads only the
//! declared artifacts of earlier stages, so runs can restart anywhere.

use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use fresyn_core::evaluation::{
    closed_loop_frf, column_energy_sweep, h2_norm_squared, hinf_norm, percent_reduction,
    spatial_regret_value, time_domain_experiment, write_sweep_csv, ClosedLoopFrf, DisturbanceSpec,
    EnergyTrace,
};
use fresyn_core::frf::{
    assemble_generalized_plant, estimate_frf, read_experiment_batch, read_frf_csv,
    simulate_impulse_experiments, simulate_multisine_experiments, write_experiment_csv,
    write_frf_csv, ExperimentBatch, FrequencyGrid, GeneralizedPlantFrf, PerformanceBlocks,
};
use fresyn_core::lti::{
    read_state_space, realize_controller, write_state_space, PartitionedPlant, StateSpaceModel,
};
use fresyn_core::structure::{ControllerFactors, DecisionVector, SparsityPattern};
use fresyn_core::synthesis::{
    iterate_synthesis, synthesize_oracle, NormObjective, Objective, OracleData, StabilityCheck,
    SynthesisConfig, SynthesisReport,
};
use fresyn_core::textio::fmt_f64;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct Dirs {
    pub root: PathBuf,
}

impl Dirs {
    pub fn new(cfg: &RunConfig) -> Self {
        let root = std::env::var_os("FRESYN_OUTPUT_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| cfg.output_dir.clone());
        Self { root }
    }

    pub fn experiments(&self) -> PathBuf {
        self.root.join("experiments")
    }

    pub fn frf(&self) -> PathBuf {
        self.root.join("frf")
    }

    pub fn controllers(&self) -> PathBuf {
        self.root.join("controllers")
    }

    pub fn evaluation(&self) -> PathBuf {
        self.root.join("evaluation")
    }

    pub fn prepare(&self, force: bool) -> Result<()> {
        if self.root.exists()
            && self.root.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false)
            && !force
        {
            bail!(
                "output directory {} exists and is not empty (use --force to overwrite)",
                self.root.display()
            );
        }
        fs::create_dir_all(&self.root)?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Stage 1: simulate excitation experiments against the design model and
/// write one CSV per experiment.
pub fn run_experiments(cfg: &RunConfig, dirs: &Dirs) -> Result<ExperimentBatch> {
    let model = cfg
        .build_model()?
        .context("experiment simulation needs a model-backed plant source")?;
    let batch = match cfg.experiments.excitation.as_str() {
        "impulse" => simulate_impulse_experiments(&model, cfg.experiments.samples)?,
        "multisine" => simulate_multisine_experiments(
            &model,
            cfg.experiments.samples,
            cfg.experiments.multisine_tones,
            cfg.grid.w_min,
            cfg.seed,
        )?,
        other => bail!("unknown excitation '{other}'"),
    };
    for e in 0..batch.n_inputs() {
        let path = dirs.experiments().join(format!("experiment_{:02}.csv", e + 1));
        let mut out = create(&path)?;
        write_experiment_csv(&mut out, &batch, e)?;
    }
    Ok(batch)
}

/// Stage 2: estimate `G22` from the experiment CSVs and write the FRF CSV.
pub fn run_estimate(cfg: &RunConfig, dirs: &Dirs) -> Result<(FrequencyGrid, GeneralizedPlantFrf)> {
    let model = cfg.build_model()?;
    let ts = cfg.plant_ts()?;
    let grid = cfg.build_grid(ts)?;
    let plant = if cfg.plant.source == "frf" {
        let path = cfg
            .plant
            .frf_file
            .as_ref()
            .context("plant.frf_file required for source 'frf'")?;
        load_frf_plant(path, &grid)?
    } else {
        let model = model.as_ref().expect("model-backed source");
        let (m, p) = (model.n_controls(), model.n_measurements());
        let mut readers = Vec::new();
        for e in 0..m {
            let path = dirs.experiments().join(format!("experiment_{:02}.csv", e + 1));
            let file = fs::File::open(&path)
                .with_context(|| format!("opening {} (run simulate-experiments first)", path.display()))?;
            readers.push(std::io::BufReader::new(file));
        }
        let batch = read_experiment_batch(readers, m, p)?;
        let g22 = estimate_frf(&batch, &grid)?;
        assemble_generalized_plant(g22, PerformanceBlocks::FromModel(model), &grid)?
    };
    let mut out = create(&dirs.frf().join("plant.csv"))?;
    write_frf_csv(
        &mut out,
        &grid,
        &[
            ("G11", plant.g11()),
            ("G12", plant.g12()),
            ("G21", plant.g21()),
            ("G22", plant.g22()),
        ],
    )?;
    Ok((grid, plant))
}

pub fn load_frf_plant(path: &Path, grid: &FrequencyGrid) -> Result<GeneralizedPlantFrf> {
    let open = || -> Result<std::io::BufReader<fs::File>> {
        Ok(std::io::BufReader::new(
            fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
        ))
    };
    let (g_grid, g11) = read_frf_csv(open()?, "G11", grid.ts())?;
    let (_, g12) = read_frf_csv(open()?, "G12", grid.ts())?;
    let (_, g21) = read_frf_csv(open()?, "G21", grid.ts())?;
    let (_, g22) = read_frf_csv(open()?, "G22", grid.ts())?;
    Ok(GeneralizedPlantFrf::new(g_grid, g11, g12, g21, g22)?)
}

/// Reads the FRF plant written by [`run_estimate`].
pub fn load_plant(cfg: &RunConfig, dirs: &Dirs) -> Result<(FrequencyGrid, GeneralizedPlantFrf)> {
    let ts = cfg.plant_ts()?;
    let grid = cfg.build_grid(ts)?;
    let path = dirs.frf().join("plant.csv");
    if path.exists() {
        let plant = load_frf_plant(&path, &grid)?;
        Ok((plant.grid().clone(), plant))
    } else {
        run_estimate(cfg, dirs)
    }
}

pub fn synthesis_config(cfg: &RunConfig) -> Result<SynthesisConfig> {
    let stability = match cfg.build_model()? {
        Some(model) => StabilityCheck::Model(model),
        None => StabilityCheck::Winding,
    };
    let mut sc = SynthesisConfig::new(stability);
    sc.max_iter = cfg.solver.max_iter;
    sc.rel_tol = cfg.solver.rel_tol;
    sc.solver.gap_abs = cfg.solver.gap_abs;
    sc.solver.gap_rel = cfg.solver.gap_rel;
    sc.solver.max_newton_total = cfg.solver.max_newton;
    Ok(sc)
}

pub struct SynthesizedController {
    pub name: String,
    pub report: SynthesisReport,
    pub factors: ControllerFactors,
    pub state_space: StateSpaceModel,
}

/// Writes theta, realized state-space, gamma history and the text report.
pub fn write_controller(
    dirs: &Dirs,
    ctl: &SynthesizedController,
    record_timing: bool,
) -> Result<()> {
    let base = dirs.controllers();
    let mut out = create(&base.join(format!("{}_theta.csv", ctl.name)))?;
    ctl.factors.theta().write_csv(&mut out)?;
    let mut out = create(&base.join(format!("{}_ss.txt", ctl.name)))?;
    write_state_space(&mut out, &ctl.state_space)?;
    let mut out = create(&base.join(format!("{}_report.csv", ctl.name)))?;
    ctl.report.write_csv(&mut out, record_timing)?;
    let mut out = create(&base.join(format!("{}_report.txt", ctl.name)))?;
    ctl.report.write_text(&mut out)?;
    Ok(())
}

/// Synthesizes the oracle named in the config over its superset pattern.
pub fn run_oracle(
    cfg: &RunConfig,
    dirs: &Dirs,
    plant: &GeneralizedPlantFrf,
) -> Result<OracleData> {
    let channels = plant.n_controls();
    let target = cfg.target_pattern(channels)?;
    let superset = cfg.oracle_pattern(channels)?;
    let objective = parse_norm_objective(&cfg.oracle.objective)?;
    let sc = synthesis_config(cfg)?;
    let oracle = synthesize_oracle(
        plant,
        &superset,
        &target,
        objective,
        cfg.controller.order,
        cfg.controller.basis_pole,
        None,
        &sc,
    )?;
    let ctl = SynthesizedController {
        name: "oracle".into(),
        report: SynthesisReport {
            objective: format!("oracle-{}", cfg.oracle.objective),
            iterations: Vec::new(),
            theta: oracle.factors.theta().clone(),
            parameterization: oracle.factors.parameterization().clone(),
            converged: true,
        },
        factors: oracle.factors.clone(),
        state_space: realize_controller(&oracle.factors)?,
    };
    write_controller(dirs, &ctl, cfg.output.record_timing)?;
    Ok(oracle)
}

pub fn parse_norm_objective(s: &str) -> Result<NormObjective> {
    match s {
        "h2" => Ok(NormObjective::H2),
        "hinf" => Ok(NormObjective::Hinf),
        other => bail!("unknown norm objective '{other}'"),
    }
}

/// Stage 3: synthesize the configured controller (plus the oracle when the
/// objective is spatial regret).
pub fn run_synthesize(
    cfg: &RunConfig,
    dirs: &Dirs,
    plant: &GeneralizedPlantFrf,
    name: &str,
    objective: &str,
    oracle: Option<&OracleData>,
) -> Result<SynthesizedController> {
    let channels = plant.n_controls();
    let target = cfg.target_pattern(channels)?;
    let param = fresyn_core::structure::build_factor_parameterization(
        &target,
        cfg.controller.order,
        cfg.controller.basis_pole,
        plant.grid().ts(),
    )?;
    let obj = match objective {
        "h2" => Objective::H2,
        "hinf" => Objective::Hinf,
        "spatial-regret" => {
            let oracle = oracle.context("spatial-regret synthesis needs an oracle")?;
            Objective::SpatialRegret(oracle.clone())
        }
        other => bail!("unknown objective '{other}'"),
    };
    let sc = synthesis_config(cfg)?;
    let report = iterate_synthesis(plant, &param, &param.zero_controller_theta(), &obj, &sc)?;
    let factors = report.final_factors();
    let state_space = realize_controller(&factors)?;
    let ctl = SynthesizedController { name: name.to_string(), report, factors, state_space };
    write_controller(dirs, &ctl, cfg.output.record_timing)?;
    Ok(ctl)
}

pub struct EvaluatedController {
    pub name: String,
    pub closed_loop: ClosedLoopFrf,
    pub hinf_sq: f64,
    pub h2_sq: f64,
    pub regret: Option<f64>,
    pub energy: EnergyTrace,
}

/// Stage 4: frequency sweeps and the time-domain disturbance experiment for
/// a set of controllers; regret columns appear when an oracle loop is given.
pub fn run_evaluate(
    cfg: &RunConfig,
    dirs: &Dirs,
    plant: &GeneralizedPlantFrf,
    controllers: &[(String, ControllerFactors, StateSpaceModel)],
    oracle_loop: Option<&ClosedLoopFrf>,
) -> Result<Vec<EvaluatedController>> {
    let model = cfg
        .build_model()?
        .context("time-domain evaluation needs a model-backed plant source")?;
    let grid = plant.grid();
    let mut results = Vec::new();
    for (name, factors, k_ss) in controllers {
        let samples = factors.controller_samples(grid)?;
        let t = closed_loop_frf(plant, &samples)?;
        let spec = DisturbanceSpec {
            channel: cfg.evaluation.disturbance_channel,
            tones: cfg.evaluation.tones.clone(),
            horizon: cfg.evaluation.horizon,
            ts: model.model().ts(),
        };
        let energy = time_domain_experiment(&model, k_ss, &spec)?;
        let regret = match oracle_loop {
            Some(t_hat) => Some(spatial_regret_value(&t, t_hat)?.regret),
            None => None,
        };
        let mut out = create(&dirs.evaluation().join(format!("sweep_worst_case_{name}.csv")))?;
        write_sweep_csv(&mut out, grid, &fresyn_core::evaluation::worst_case_sweep(&t))?;
        let mut out = create(&dirs.evaluation().join(format!(
            "sweep_column_{}_{name}.csv",
            cfg.evaluation.disturbance_channel + 1
        )))?;
        write_sweep_csv(
            &mut out,
            grid,
            &column_energy_sweep(&t, cfg.evaluation.disturbance_channel)?,
        )?;
        let mut out = create(&dirs.evaluation().join(format!("energy_{name}.csv")))?;
        energy.write_csv(&mut out)?;
        results.push(EvaluatedController {
            name: name.clone(),
            hinf_sq: hinf_norm(&t).powi(2),
            h2_sq: h2_norm_squared(&t),
            regret,
            energy,
            closed_loop: t,
        });
    }
    write_summary(cfg, dirs, &results)?;
    Ok(results)
}

fn write_summary(cfg: &RunConfig, dirs: &Dirs, results: &[EvaluatedController]) -> Result<()> {
    let mut out = create(&dirs.evaluation().join("summary.csv"))?;
    writeln!(out, "name,hinf_sq,h2_sq,regret,steady_mean_z_sq,post_transient_l2")?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.name,
            fmt_f64(r.hinf_sq),
            fmt_f64(r.h2_sq),
            r.regret.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.energy.steady_mean),
            fmt_f64(r.energy.post_transient_l2)
        )?;
    }
    let mut out = create(&dirs.evaluation().join("summary.txt"))?;
    writeln!(out, "closed-loop evaluation summary")?;
    writeln!(
        out,
        "H2 convention: squared norm equals the two-sided impulse-response energy (one-sided integral doubled)"
    )?;
    writeln!(
        out,
        "disturbance: channel {} tones {:?} horizon {}",
        cfg.evaluation.disturbance_channel + 1,
        cfg.evaluation.tones,
        cfg.evaluation.horizon
    )?;
    for r in results {
        writeln!(
            out,
            "{:<10} hinf^2 {:>12.6} h2^2 {:>12.6} regret {:>12} steady |z|^2 {:>14.8e} post-transient l2 {:>12.6}",
            r.name,
            r.hinf_sq,
            r.h2_sq,
            r.regret.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
            r.energy.steady_mean,
            r.energy.post_transient_l2
        )?;
    }
    if results.len() >= 2 {
        let base = &results[0];
        for r in &results[1..] {
            writeln!(
                out,
                "reduction of post-transient |z|_2, {} vs {}: {:.2}%",
                r.name,
                base.name,
                percent_reduction(&r.energy, &base.energy)
            )?;
        }
    }
    Ok(())
}

/// Loads a controller saved by [`write_controller`]: theta + the
/// parameterization implied by the config pattern.
pub fn load_controller(
    cfg: &RunConfig,
    dirs: &Dirs,
    name: &str,
    channels: usize,
    ts: f64,
    oracle: bool,
) -> Result<(ControllerFactors, StateSpaceModel)> {
    let base = dirs.controllers();
    let theta_path = base.join(format!("{name}_theta.csv"));
    let theta_file = fs::File::open(&theta_path)
        .with_context(|| format!("opening {}", theta_path.display()))?;
    let theta = DecisionVector::read_csv(std::io::BufReader::new(theta_file))?;
    let pattern: SparsityPattern = if oracle {
        cfg.oracle_pattern(channels)?
    } else {
        cfg.target_pattern(channels)?
    };
    let param = fresyn_core::structure::build_factor_parameterization(
        &pattern,
        cfg.controller.order,
        cfg.controller.basis_pole,
        ts,
    )?;
    let factors = ControllerFactors::new(param, theta)?;
    let ss_path = base.join(format!("{name}_ss.txt"));
    let ss_file = fs::File::open(&ss_path)
        .with_context(|| format!("opening {}", ss_path.display()))?;
    let state_space = read_state_space(std::io::BufReader::new(ss_file))?;
    Ok((factors, state_space))
}
