use crate::config::{PoseSet, ScenarioFile, SimScenario};
use crate::Common;
use bikebot::bem::{self, CapabilityLimits, Strategy};
use bikebot::control::{ArmGains, BalanceGains};
use bikebot::dynamics::{gravity_rate, gravity_roll_torque, inverse_dynamics};
use bikebot::files::{self, Metadata, SimSummary, StatsOut};
use bikebot::planner::dp::{dp_reference, planar_toy_model, DpGrid};
use bikebot::planner::{
    bezier_eval, plan_mission, plan_segment, MissionTiming, MotionLimits, PlanResult, PlannerSettings,
    PlannerWeights,
};
use bikebot::sim::{self, ControllerGains, Disturbance, Integrator, SimConfig, SimLog, ThetaAccelSource};
use bikebot::{scenario, steering, Error, Pose, RobotModel};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
    BlowUp(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::BlowUp(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Solver(_) => "solver",
            CliError::BlowUp(_) => "simulation",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Solver(m) | CliError::BlowUp(m) | CliError::Io(m) => m,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.message(), "exit_code": self.exit_code() }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } | Error::InvalidParameter(_) => {
                CliError::Config(msg)
            }
            Error::BlowUp { .. } => CliError::BlowUp(msg),
            Error::Io(_) => CliError::Io(msg),
            _ => CliError::Solver(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

pub struct Ctx {
    pub file: ScenarioFile,
    bytes: Vec<u8>,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub quantized_imu: bool,
}

impl Ctx {
    fn model(&self) -> RobotModel {
        RobotModel::prototype().with_arm_mass_scale(self.file.robot.arm_mass_scale)
    }

    fn meta(&self, w2_padded: bool) -> Metadata {
        Metadata::new(&self.bytes, self.seed, w2_padded)
    }

    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(self.out.join(name), text + "\n")?;
        Ok(())
    }
}

pub fn run(common: &Common, command: fn(&Ctx) -> CliResult<()>) -> CliResult<()> {
    fs::create_dir_all(&common.out)?;
    let result = load(common).and_then(|ctx| command(&ctx));
    if let Err(e) = &result {
        let _ = fs::write(common.out.join("error.json"), e.to_json() + "\n");
    }
    result
}

fn load(common: &Common) -> CliResult<Ctx> {
    let bytes = match &common.config {
        Some(p) => fs::read(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => br#"{"version": 1}"#.to_vec(),
    };
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Config(e.to_string()))?;
    let file = ScenarioFile::parse(text).map_err(CliError::Config)?;
    if common.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    Ok(Ctx {
        file,
        bytes,
        out: common.out.clone(),
        seed: common.seed,
        jobs: common.jobs,
        quantized_imu: common.quantized_imu,
    })
}

/// Inclusive grid from `lo` to `hi`; empty when `hi < lo`.
fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi < lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

fn num(x: f64) -> String {
    x.to_string()
}

pub fn steer_sweep(ctx: &Ctx) -> CliResult<()> {
    let s = &ctx.file.steer_sweep;
    let model = ctx.model();
    let bike = &model.bike;
    let meta = ctx.meta(false);
    let mut peak: Option<(f64, f64)> = None;
    let mut rows = Vec::new();
    for phi0 in grid(s.phi0_min_deg, s.phi0_max_deg, s.phi0_step_deg) {
        let r = steering::contact_radius(phi0.to_radians(), 0.0, bike);
        let sens = steering::steering_sensitivity_per_deg(phi0.to_radians(), bike);
        if peak.is_none_or(|(_, v)| sens > v) {
            peak = Some((phi0, sens));
        }
        rows.push(vec![num(phi0), num(r), num(sens)]);
    }
    let header = ["phi0_deg", "radius_m", "s_tau_nm_per_deg"].map(String::from);
    files::write_table(ctx.create("steer_sweep.csv")?, &meta, &header, rows)?;

    let mass = model.total_mass();
    let mut rows = Vec::new();
    for delta in grid(s.delta_min_deg, s.delta_max_deg, s.delta_step_deg) {
        for roll in grid(s.roll_min_deg, s.roll_max_deg, s.roll_step_deg) {
            let tau = steering::balance_torque_with_mass(
                delta.to_radians(),
                std::f64::consts::FRAC_PI_2,
                roll.to_radians(),
                mass,
                bike,
            )?;
            rows.push(vec![num(delta), num(roll), num(tau)]);
        }
    }
    let header = ["delta_deg", "phi_b_deg", "tau_b_nm"].map(String::from);
    files::write_table(ctx.create("balance_surface.csv")?, &meta, &header, rows)?;
    match peak {
        Some((phi0, v)) => println!("peak steering sensitivity {v:.4} N m/deg at phi0 = {phi0:.1} deg"),
        None => println!("empty phi0 range: header-only output"),
    }
    Ok(())
}

#[derive(Serialize)]
struct CapabilityOut {
    strategy: &'static str,
    phi_b_max_deg: f64,
    sides_deg: [f64; 2],
    tau_b_max_nm: f64,
    achieving_delta_deg: f64,
    achieving_theta_deg: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct CapabilityFile {
    metadata: Metadata,
    delta_range_deg: f64,
    estimates: Vec<CapabilityOut>,
}

pub fn capability(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.file.capability;
    let model = ctx.model();
    let limits = CapabilityLimits {
        delta_range: c.delta_range_deg.to_radians(),
        arm_joints: c.arm_joints.clone(),
        roll_scan_max: c.roll_scan_max_deg.to_radians(),
    };
    let estimates: Vec<CapabilityOut> = [Strategy::OneWheel, Strategy::TwoWheel, Strategy::TwoWheelArm]
        .into_iter()
        .map(|s| {
            let e = bem::max_roll_capability(&model, s, &limits);
            CapabilityOut {
                strategy: s.name(),
                phi_b_max_deg: e.phi_b_max.to_degrees(),
                sides_deg: [e.sides.0.to_degrees(), e.sides.1.to_degrees()],
                tau_b_max_nm: e.tau_b_max,
                achieving_delta_deg: e.achieving_delta.to_degrees(),
                achieving_theta_deg: e.achieving_theta.map(|t| t.iter().map(|x| x.to_degrees()).collect()),
            }
        })
        .collect();
    for e in &estimates {
        println!("{:>14}: +-{:.2} deg (torque {:.3} N m)", e.strategy, e.phi_b_max_deg, e.tau_b_max_nm);
    }
    ctx.write_json(
        "capability.json",
        &CapabilityFile { metadata: ctx.meta(false), delta_range_deg: c.delta_range_deg, estimates },
    )
}

struct Planned {
    model: RobotModel,
    weights: PlannerWeights,
    limits: MotionLimits,
    plan: PlanResult,
}

fn settings_from(ctx: &Ctx) -> PlannerSettings {
    let p = &ctx.file.plan;
    PlannerSettings {
        seed: ctx.seed,
        degree: p.degree,
        samples: p.samples,
        ik_starts: p.ik_starts,
        segment_starts: p.segment_starts,
        balance_priority: p.balance_priority,
        ..PlannerSettings::default()
    }
}

fn build_plan(ctx: &Ctx) -> CliResult<Planned> {
    let p = &ctx.file.plan;
    let model = ctx.model();
    let poses: Vec<Pose> = match &p.poses {
        Some(v) => v.iter().map(files::pose_from_table).collect(),
        None => match p.pose_set {
            PoseSet::Mission => scenario::mission_poses(&model)?,
            PoseSet::Ablation => scenario::ablation_poses(&model)?,
        },
    };
    let weights = PlannerWeights::prototype(model.dof());
    let limits = MotionLimits::prototype(&model);
    let timing = MissionTiming {
        t_start: 0.0,
        hold: p.hold_s,
        transition: p.transition_s,
        initial: p.initial_deg.as_ref().map(|v| DVector::from_iterator(v.len(), v.iter().map(|d| d.to_radians()))),
    };
    let plan = plan_mission(&model, &poses, &timing, &weights, &limits, &settings_from(ctx))?;
    Ok(Planned { model, weights, limits, plan })
}

fn degrees(v: &DVector<f64>) -> Vec<f64> {
    v.iter().map(|x| x.to_degrees()).collect()
}

#[derive(Serialize)]
struct PoseOut {
    desired: [f64; 6],
    planned: [f64; 6],
    q_star_deg: Vec<f64>,
    residual_cm_deg: f64,
    g_b_nm: f64,
    reached: bool,
    global_resolve: bool,
}

#[derive(Serialize)]
struct SegmentOut {
    t0_s: f64,
    tf_s: f64,
    cost: f64,
    max_constraint: f64,
    audit_constraint: f64,
    wall_time_s: f64,
    control_points_deg: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct PlanFile {
    metadata: Metadata,
    balance_priority: bool,
    poses: Vec<PoseOut>,
    segments: Vec<SegmentOut>,
}

pub fn plan(ctx: &Ctx) -> CliResult<()> {
    let Planned { model, weights, limits, plan } = build_plan(ctx)?;
    let meta = ctx.meta(weights.w2_padded);
    let poses = (0..plan.q_star.len())
        .map(|k| PoseOut {
            desired: files::pose_to_table(&plan.poses[k]),
            planned: files::pose_to_table(&plan.ik[k].pose),
            q_star_deg: degrees(&plan.q_star[k]),
            residual_cm_deg: plan.ik[k].residual,
            g_b_nm: plan.ik[k].g_b,
            reached: plan.ik[k].reached,
            global_resolve: plan.global_resolve[k],
        })
        .collect();
    let segments = plan
        .segments
        .iter()
        .map(|s| SegmentOut {
            t0_s: s.trajectory.t0,
            tf_s: s.trajectory.tf,
            cost: s.cost,
            max_constraint: s.max_constraint,
            audit_constraint: s.audit_constraint,
            wall_time_s: s.wall_time,
            control_points_deg: s
                .trajectory
                .control_points
                .row_iter()
                .map(|r| r.iter().map(|x| x.to_degrees()).collect())
                .collect(),
        })
        .collect();
    ctx.write_json(
        "plan.json",
        &PlanFile { metadata: meta.clone(), balance_priority: ctx.file.plan.balance_priority, poses, segments },
    )?;

    let n = model.n_joints();
    let bound = limits.gravity_rate_bound(&model);
    let cap = limits.tau_b_max / weights.lambda[3];
    let mut header: Vec<String> = ["segment", "t_s"].map(String::from).to_vec();
    header.extend((0..=n).map(|i| format!("q{i}_deg")));
    header.extend(
        [
            "g_b_nm",
            "g_b_cap_nm",
            "gravity_rate_nm_s",
            "gravity_rate_bound_nm_s",
            "max_rate_deg_s",
            "max_acc_deg_s2",
            "max_torque_ratio",
        ]
        .map(String::from),
    );
    let mut rows = Vec::new();
    for (idx, seg) in plan.segments.iter().enumerate() {
        let tr = &seg.trajectory;
        let samples = ctx.file.plan.samples;
        for i in 0..samples {
            let t = tr.t0 + (tr.tf - tr.t0) * i as f64 / (samples - 1) as f64;
            let (q, qd, qdd) = bezier_eval(tr, t)?;
            let tau = inverse_dynamics(&model, &q, &qd, &qdd)?;
            let torque_ratio = (0..n).map(|j| tau[j + 1].abs() / limits.tau_theta_max[j]).fold(0.0, f64::max);
            let mut row = vec![(idx + 1).to_string(), num(t)];
            row.extend(q.iter().map(|x| num(x.to_degrees())));
            row.extend([
                num(gravity_roll_torque(&model, &q)),
                num(cap),
                num(gravity_rate(&model, &q, &qd)),
                num(bound),
                num(qd.amax().to_degrees()),
                num(qdd.amax().to_degrees()),
                num(torque_ratio),
            ]);
            rows.push(row);
        }
    }
    files::write_table(ctx.create("constraints.csv")?, &meta, &header, rows)?;
    for (k, s) in plan.ik.iter().enumerate() {
        println!(
            "pose {}: residual {:.4} (cm/deg), G_b {:.3} N m, {}",
            k + 1,
            s.residual,
            s.g_b,
            if plan.global_resolve[k] { "global re-solve" } else { "local" }
        );
    }
    println!("{} segments, total {:.2} s", plan.segments.len(), plan.t_end() - plan.t_start());
    Ok(())
}

struct SimSetup {
    model: RobotModel,
    plan: PlanResult,
    config: SimConfig,
    gains: ControllerGains,
    disturbances: Vec<Disturbance>,
    w2_padded: bool,
}

fn sim_setup(ctx: &Ctx) -> CliResult<SimSetup> {
    let m = &ctx.file.simulate;
    let (model, plan, mut config, w2_padded) = match m.scenario {
        SimScenario::Plan => {
            let p = build_plan(ctx)?;
            let config = SimConfig::for_plan(&p.plan);
            (p.model, p.plan, config, p.weights.w2_padded)
        }
        SimScenario::Regulation => {
            let model = scenario::arm_removed(&ctx.model());
            let q = model.home_configuration();
            let (plan, config) = sim::balance_regulation(&model, &q, m.initial_roll_deg.to_radians(), m.duration_s)?;
            (model, plan, config, false)
        }
    };
    if let Some(d) = m.delta_max_deg {
        config.steering.delta_max = d.to_radians();
    }
    if let Some(r) = m.delta_rate_max_deg_s {
        config.steering.delta_rate_max = r.to_radians();
    }
    config.dt = m.dt_s;
    config.control_period = m.control_period_s;
    config.integrator = if m.semi_implicit { Integrator::SemiImplicitEuler } else { Integrator::Rk4 };
    config.correction_enabled = m.correction;
    config.sensor_noise = m.noise_deg.to_radians();
    config.sensor_quantization = match (m.quantized_imu_deg, ctx.quantized_imu) {
        (Some(r), _) => Some(r.to_radians()),
        (None, true) => Some(0.1f64.to_radians()),
        (None, false) => None,
    };
    config.theta_accel = if m.servo_theta_accel { ThetaAccelSource::Servo } else { ThetaAccelSource::Reference };
    config.seed = ctx.seed;
    let n = model.n_joints();
    let mut arm = ArmGains::prototype(n);
    arm.k_p = DVector::from_element(n, m.arm_k_p);
    arm.kappa = m.kappa;
    arm.epsilon_b = m.epsilon_b_deg.to_radians();
    let gains = ControllerGains { balance: BalanceGains::new(m.k_p, m.k_d)?, arm };
    let t0 = plan.t_start();
    let mut disturbances = Vec::new();
    for d in &m.disturbances {
        let d = Disturbance { t_start: d.t_start_s, duration: d.duration_s, torque: d.torque_nm };
        disturbances = sim::inject(&disturbances, d, t0, config.duration)?;
    }
    Ok(SimSetup { model, plan, config, gains, disturbances, w2_padded })
}

fn run_trial(setup: &SimSetup, seed: u64) -> CliResult<SimLog> {
    let config = SimConfig { seed, ..setup.config.clone() };
    Ok(sim::run_scenario(&setup.model, &setup.plan, &setup.gains, &setup.disturbances, &config)?)
}

fn write_trial(ctx: &Ctx, setup: &SimSetup, dir: &Path, log: &SimLog) -> CliResult<SimSummary> {
    let meta = Metadata { seed: log.seed, ..ctx.meta(setup.w2_padded) };
    files::write_sim_csv(BufWriter::new(File::create(dir.join("log.csv"))?), log, &meta)?;
    let (pos, ori) = sim::hold_errors(log, &setup.plan, ctx.file.simulate.hold_window_s);
    let summary = SimSummary::new(log, &meta, &pos, &ori)?;
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(summary)
}

#[derive(Serialize)]
struct Aggregate {
    metadata: Metadata,
    trials: usize,
    balance_lost: usize,
    position_error_mean_mm: StatsOut,
    orientation_error_mean_deg: StatsOut,
}

fn spread(x: &[f64]) -> StatsOut {
    let s = sim::ErrorStats::from_samples(x);
    StatsOut::scaled(&s, 1.0)
}

pub fn simulate(ctx: &Ctx) -> CliResult<()> {
    let setup = sim_setup(ctx)?;
    let trials = ctx.file.simulate.trials;
    if trials == 1 {
        let log = run_trial(&setup, ctx.seed)?;
        let s = write_trial(ctx, &setup, &ctx.out, &log)?;
        report(&s);
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let summaries: Vec<SimSummary> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let dir = ctx.out.join(format!("trial_{:03}", i + 1));
                fs::create_dir_all(&dir)?;
                let log = run_trial(&setup, ctx.seed.wrapping_add(i as u64))?;
                write_trial(ctx, &setup, &dir, &log)
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    let pos: Vec<f64> = summaries.iter().map(|s| s.position_error_mm.mean).collect();
    let ori: Vec<f64> = summaries.iter().map(|s| s.orientation_error_deg.mean).collect();
    let agg = Aggregate {
        metadata: ctx.meta(setup.w2_padded),
        trials,
        balance_lost: summaries.iter().filter(|s| s.balance_lost_at_s.is_some()).count(),
        position_error_mean_mm: spread(&pos),
        orientation_error_mean_deg: spread(&ori),
    };
    println!(
        "{trials} trials: position {:.3} +- {:.3} mm, orientation {:.4} +- {:.4} deg, {} lost balance",
        agg.position_error_mean_mm.mean,
        agg.position_error_mean_mm.std,
        agg.orientation_error_mean_deg.mean,
        agg.orientation_error_mean_deg.std,
        agg.balance_lost
    );
    ctx.write_json("aggregate.json", &agg)
}

fn report(s: &SimSummary) {
    println!(
        "hold errors: position {:.3} +- {:.3} mm (max {:.3} mm), orientation {:.4} +- {:.4} deg (max {:.4} deg)",
        s.position_error_mm.mean,
        s.position_error_mm.std,
        s.position_error_mm.max,
        s.orientation_error_deg.mean,
        s.orientation_error_deg.std,
        s.orientation_error_deg.max
    );
    println!("max roll error {:.4} deg, envelope {:.3} deg", s.max_abs_roll_error_deg, s.envelope_deg);
    match s.balance_lost_at_s {
        Some(t) => println!("balance lost at t = {t:.2} s"),
        None => println!("balance kept"),
    }
}

pub fn compare_dp(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.file.compare_dp;
    let model = planar_toy_model();
    let weights = PlannerWeights::prototype(model.dof());
    let limits = MotionLimits::prototype(&model);
    let a = DVector::from_vec(vec![0.0, c.start_deg.to_radians()]);
    let b = DVector::from_vec(vec![0.0, (c.start_deg + c.move_deg).to_radians()]);
    let t_min = 2.0 * (c.move_deg.to_radians() / limits.q_acc_max).sqrt();
    let duration = c.duration_factor * t_min;
    let header = [
        "n_s",
        "bezier_cost",
        "dp_cost",
        "cost_ratio",
        "bezier_time_s",
        "dp_time_s",
        "time_ratio",
        "dp_levels",
        "dp_cells",
    ]
    .map(String::from);
    let mut rows = Vec::new();
    println!("segment {:.3} s, move {:.2} deg", duration, c.move_deg);
    for &ns in &c.samples {
        let settings = PlannerSettings { samples: ns, degree: c.degree, seed: ctx.seed, ..PlannerSettings::default() };
        let bz = plan_segment(&model, &a, &b, 0.0, duration, &weights, &limits, &settings)?;
        let grid = DpGrid { steps: ns, accel_levels: c.accel_levels, max_cells: c.max_cells };
        let dp = dp_reference(&model, &a, &b, 0.0, duration, &weights, &limits, &settings, &grid)?;
        println!(
            "N_s {ns:>4}: Bezier cost {:.6} in {:.4} s, DP cost {:.6} in {:.4} s, time ratio {:.4}",
            bz.cost,
            bz.wall_time,
            dp.cost,
            dp.wall_time,
            bz.wall_time / dp.wall_time
        );
        rows.push(vec![
            ns.to_string(),
            num(bz.cost),
            num(dp.cost),
            num(bz.cost / dp.cost),
            num(bz.wall_time),
            num(dp.wall_time),
            num(bz.wall_time / dp.wall_time),
            dp.levels.to_string(),
            dp.cells.to_string(),
        ]);
    }
    files::write_table(ctx.create("compare_dp.csv")?, &ctx.meta(weights.w2_padded), &header, rows)?;
    Ok(())
}
