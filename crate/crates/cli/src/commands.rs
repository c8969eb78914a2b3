//! Subcommand implementations. Each writes one output file and returns its
//! path; `verify` also prints one line per check.

use std::path::{Path, PathBuf};

use mtsearch_core::bounds::{
    achievability_bound, converse_bound, default_eta_grid, default_q_grid, gaussian_tail, max_chernoff_exponent,
    optimize_eta, phase_curve, second_order_rates, AchievabilityMode, BoundQuery, ConverseOptions, ZEROED_TERMS_NOTE,
};
use mtsearch_core::infodensity::{capacity, exp_neg_info_density_mean, CapacityReport, DEFAULT_REFINE_TOL};
use mtsearch_core::kinematics::SlotSchedule;
use mtsearch_core::montecarlo::{sweep, SweepConfig};
use mtsearch_core::numeric::derive_key;
use mtsearch_core::querying::generate_codebook;
use mtsearch_core::search::{mi_decode, nn_decode};
use mtsearch_core::trajectories::{
    enumerate_first_slot, enumerate_later_slot, first_slot_size_bound, later_slot_size_bound,
    verify_intersection_bound_for, TrajectorySet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{AutoOr, RunConfig, TOOL_VERSION};
use crate::error::CliError;

/// Number of random instances in the decoder check of `verify`.
const VERIFY_DECODES: usize = 200;
/// Largest number of truth entries scanned by the intersection check.
const VERIFY_TRUTHS: usize = 256;

pub struct Context {
    pub cfg: RunConfig,
    pub sched: SlotSchedule,
    pub out_dir: PathBuf,
    pub hash: String,
    capacity: Option<CapacityReport>,
}

impl Context {
    pub fn new(cfg: RunConfig, out_dir: PathBuf) -> Result<Self, CliError> {
        let sched = cfg.schedule()?;
        let hash = cfg.hash();
        Ok(Self {
            cfg,
            sched,
            out_dir,
            hash,
            capacity: None,
        })
    }

    fn capacity(&mut self) -> Result<&CapacityReport, CliError> {
        if self.capacity.is_none() {
            self.capacity = Some(capacity(
                &self.cfg.channel,
                self.cfg.bounds.capacity_grid,
                DEFAULT_REFINE_TOL,
            )?);
        }
        Ok(self.capacity.as_ref().expect("just computed"))
    }

    /// Design bias: the configured value or the smallest capacity maximizer.
    fn design_p(&mut self) -> Result<f64, CliError> {
        match self.cfg.design.p {
            AutoOr::Value(p) => Ok(p),
            AutoOr::Auto => Ok(self.capacity()?.smallest_maximizer().p),
        }
    }

    fn json_path(&self, default: &str) -> PathBuf {
        match &self.cfg.output.json_path {
            Some(p) => PathBuf::from(p),
            None => self.out_dir.join(default),
        }
    }

    fn csv_path(&self, default: &str) -> PathBuf {
        match &self.cfg.output.csv_path {
            Some(p) => PathBuf::from(p),
            None => self.out_dir.join(default),
        }
    }

    fn write_json<T: Serialize>(&self, path: &Path, body: &T) -> Result<(), CliError> {
        let doc = json!({
            "config_hash": self.hash,
            "tool_version": TOOL_VERSION,
            "config": self.cfg,
            "result": body,
        });
        ensure_parent(path)?;
        std::fs::write(path, serde_json::to_string_pretty(&doc).expect("serializable") + "\n")?;
        Ok(())
    }

    fn csv_writer(&self, path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
        ensure_parent(path)?;
        Ok(csv::Writer::from_path(path)?)
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

pub fn run_capacity(ctx: &mut Context) -> Result<PathBuf, CliError> {
    let report = ctx.capacity()?.clone();
    let path = ctx.json_path("capacity.json");
    ctx.write_json(&path, &report)?;
    println!(
        "capacity {:.12} at p = {:.9}",
        report.capacity,
        report.smallest_maximizer().p
    );
    Ok(path)
}

pub fn run_bounds(ctx: &mut Context) -> Result<PathBuf, CliError> {
    let p = ctx.design_p()?;
    let cap = ctx.capacity()?.clone();
    let cfg = &ctx.cfg;
    let mode = cfg.bounds.mode.unwrap_or(if cfg.channel.is_discrete() {
        AchievabilityMode::RcuExact
    } else {
        AchievabilityMode::GaussianApprox
    });
    let bq = BoundQuery::new(ctx.sched.clone(), cfg.design.m, p, 0.0, cfg.channel, mode);
    let (eta, achievability) = match cfg.design.eta {
        AutoOr::Value(eta) => (eta, achievability_bound(&BoundQuery { eta, ..bq })?),
        AutoOr::Auto => optimize_eta(&bq, &default_eta_grid())?,
    };
    let opts = ConverseOptions {
        statement_form: cfg.bounds.statement_form,
        ..Default::default()
    };
    let converse = match converse_bound(
        &ctx.sched,
        cfg.bounds.eps,
        &cfg.channel,
        &default_q_grid(cfg.bounds.q_grid),
        opts,
    ) {
        Ok(r) => json!(r),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let rates = second_order_rates(&ctx.sched, cfg.bounds.eps, &cfg.channel, &cap)?;
    let tail = match cfg.channel {
        mtsearch_core::channels::ChannelModel::Awgn { sigma, .. } => {
            let (bound, theta) = gaussian_tail(ctx.sched.horizon(), sigma);
            json!({ "n": ctx.sched.horizon(), "bound": bound, "optimal_theta": theta })
        }
        _ => serde_json::Value::Null,
    };
    for w in &achievability.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "achievability ({mode:?}, eta = {eta}): {} | rates: achievable {:.6}, converse {:.6}, first order {:.6}",
        achievability.probability_bound, rates.achievable_rate, rates.converse_rate, rates.first_order_rate
    );
    let body = json!({
        "mode": mode,
        "p": p,
        "eta": eta,
        "capacity": cap.capacity,
        "achievability": achievability,
        "converse": converse,
        "second_order": rates,
        "gaussian_tail": tail,
        "notes": [ZEROED_TERMS_NOTE],
    });
    let path = ctx.json_path("bounds.json");
    ctx.write_json(&path, &body)?;
    Ok(path)
}

pub fn run_simulate(ctx: &mut Context) -> Result<PathBuf, CliError> {
    let p = ctx.design_p()?;
    let cfg = &ctx.cfg;
    let sim = &cfg.simulation;
    let mut sc = SweepConfig::new(
        ctx.sched.clone(),
        cfg.design.m,
        p,
        cfg.channel,
        sim.axis.clone(),
        sim.trials,
        sim.base_seed,
    );
    sc.rule = cfg.design.rule;
    sc.states = sim.states.clone();
    sc.resolution_factor = cfg.design.resolution_factor;
    sc.cap = cfg.design.cap;
    sc.eta = match cfg.design.eta {
        AutoOr::Value(v) => Some(v),
        AutoOr::Auto => None,
    };
    let rows = sweep(&sc)?;
    let path = ctx.csv_path("simulate.csv");
    let mut w = ctx.csv_writer(&path)?;
    w.write_record([
        "point_id",
        "axis",
        "axis_value",
        "n_b",
        "m",
        "resolution",
        "trials",
        "excess_count",
        "p_hat",
        "ci_lo",
        "ci_hi",
        "bound_rcu",
        "bound_gaussian",
        "config_hash",
        "tool_version",
    ])?;
    for r in &rows {
        let e = &r.estimate;
        w.write_record([
            r.point_id.to_string(),
            sim.axis.name().to_string(),
            r.axis_value.to_string(),
            r.horizon.to_string(),
            r.m.to_string(),
            r.resolution.to_string(),
            e.trials.to_string(),
            e.excess_count.to_string(),
            e.p_hat.to_string(),
            e.ci_lo.to_string(),
            e.ci_hi.to_string(),
            r.bound_rcu.map(|b| b.to_string()).unwrap_or_default(),
            r.bound_gaussian.to_string(),
            ctx.hash.clone(),
            TOOL_VERSION.to_string(),
        ])?;
        println!(
            "point {} ({} = {}): p_hat = {} [{}, {}]",
            r.point_id,
            sim.axis.name(),
            r.axis_value,
            e.p_hat,
            e.ci_lo,
            e.ci_hi
        );
    }
    w.flush()?;
    Ok(path)
}

pub fn run_phase(ctx: &mut Context) -> Result<PathBuf, CliError> {
    let cap = ctx.capacity()?.clone();
    let ph = &ctx.cfg.phase;
    let d = ctx.sched.dimension();
    let factor = if ph.printed_form { d as f64 } else { 2.0 * d as f64 };
    let threshold = cap.capacity / factor;
    let rates = ph
        .rates
        .clone()
        .unwrap_or_else(|| (0..61).map(|i| 2.0 * threshold * i as f64 / 60.0).collect());
    let curve = phase_curve(&ph.n, d, &cap, ph.eps_for_veps, &rates, ph.printed_form)?;
    let path = ctx.csv_path("phase.csv");
    let mut w = ctx.csv_writer(&path)?;
    w.write_record(["n", "rate", "epsilon_star", "threshold", "config_hash", "tool_version"])?;
    for s in &curve.samples {
        w.write_record([
            s.n.to_string(),
            s.rate.to_string(),
            s.epsilon_star.to_string(),
            curve.threshold.to_string(),
            ctx.hash.clone(),
            TOOL_VERSION.to_string(),
        ])?;
    }
    w.write_record([
        "threshold".to_string(),
        curve.threshold.to_string(),
        "0.5".to_string(),
        curve.threshold.to_string(),
        ctx.hash.clone(),
        TOOL_VERSION.to_string(),
    ])?;
    w.flush()?;
    println!("{} curves, threshold rate {}", ph.n.len(), curve.threshold);
    Ok(path)
}

pub fn run_trajectories(ctx: &mut Context) -> Result<PathBuf, CliError> {
    let cfg = &ctx.cfg;
    let set = enumerate_first_slot(&ctx.sched, cfg.design.m, cfg.design.resolution_factor, cfg.design.cap)?;
    let path = ctx.csv_path("trajectories.csv");
    let mut w = ctx.csv_writer(&path)?;
    let d = set.dim;
    let mut header = vec!["index".to_string()];
    for t in 1..=set.slot_len {
        for i in 1..=d {
            header.push(format!("cell_t{t}_x{i}"));
        }
    }
    header.extend((1..=d).map(|i| format!("s_x{i}")));
    header.extend((1..=d).map(|i| format!("v_x{i}")));
    header.push("config_hash".into());
    header.push("tool_version".into());
    w.write_record(&header)?;
    for (k, (e, wit)) in set.entries.iter().zip(&set.witnesses).enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(e.cells.iter().map(|c| c.to_string()));
        row.extend(wit.s.iter().map(|x| x.to_string()));
        row.extend(wit.v.iter().map(|x| x.to_string()));
        row.push(ctx.hash.clone());
        row.push(TOOL_VERSION.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    println!("{} first-slot trajectories", set.len());
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check_decoders(ctx: &Context, set: &TrajectorySet, p: f64) -> Result<Check, CliError> {
    let ch = ctx.cfg.channel;
    let m = ctx.cfg.design.m;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_key(ctx.cfg.simulation.base_seed, 101));
    let mut agree = 0;
    for i in 0..VERIFY_DECODES {
        let cb = generate_codebook(
            &ctx.sched,
            m,
            p,
            derive_key(ctx.cfg.simulation.base_seed, 200 + i as u64),
        )?;
        let truth = &set.entries[rng.random_range(0..set.len())];
        let ys: Vec<f64> = cb
            .codeword(0, truth)
            .into_iter()
            .enumerate()
            .map(|(k, x)| ch.sample_output(cb.query_measure(0, k), x, &mut rng))
            .collect();
        if mi_decode(&ch, p, set, &cb, 0, &ys)?.index == nn_decode(set, &cb, 0, &ys)?.index {
            agree += 1;
        }
    }
    Ok(Check {
        name: "decoder_equivalence",
        passed: agree == VERIFY_DECODES,
        detail: format!("{agree}/{VERIFY_DECODES} random instances agree"),
    })
}

fn check_size_bounds(ctx: &Context, set: &TrajectorySet) -> Result<Check, CliError> {
    let (m, d, vp) = (ctx.cfg.design.m, ctx.sched.dimension(), ctx.sched.max_speed());
    let first_bound = first_slot_size_bound(set.slot_len, m, vp, d);
    let mut passed = (set.len() as f64) <= first_bound;
    let witnesses_ok = set
        .entries
        .iter()
        .zip(&set.witnesses)
        .all(|(e, w)| &set.cells_of(w) == e);
    passed &= witnesses_ok;
    let mut detail = format!(
        "first slot {} <= {first_bound:.3e}, witnesses reproduce entries: {witnesses_ok}",
        set.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derive_key(ctx.cfg.simulation.base_seed, 102));
    for j in 1..ctx.sched.num_slots() {
        let bound = later_slot_size_bound(ctx.sched.len(j), m, vp, d);
        let mut largest = 0;
        for _ in 0..5 {
            let start: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            let later = enumerate_later_slot(
                &start,
                &ctx.sched,
                j,
                m,
                ctx.cfg.design.resolution_factor,
                ctx.cfg.design.cap,
            )?;
            largest = largest.max(later.len());
        }
        passed &= (largest as f64) <= bound;
        detail.push_str(&format!("; slot {} max {largest} <= {bound:.3e}", j + 1));
    }
    Ok(Check {
        name: "trajectory_size_bounds",
        passed,
        detail,
    })
}

fn check_intersections(ctx: &Context, set: &TrajectorySet) -> Check {
    let stride = set.len().div_ceil(VERIFY_TRUTHS).max(1);
    let truths: Vec<usize> = (0..set.len()).step_by(stride).collect();
    let rep = verify_intersection_bound_for(set, ctx.sched.max_speed(), &truths);
    let mut detail = format!(
        "{} truths, {} confusable pairs, max coincidences {} vs limit {}, {} violations",
        truths.len(),
        rep.pairs_checked,
        rep.max_coincidences,
        rep.limit,
        rep.violations
    );
    if let Some(ex) = &rep.example {
        detail.push_str(&format!(
            "; e.g. truth (s={:?}, v={:?}) vs (s={:?}, v={:?}) share {} cells",
            ex.truth.s, ex.truth.v, ex.other.s, ex.other.v, ex.coincidences
        ));
    }
    Check {
        name: "intersection_limit",
        passed: rep.passed(),
        detail,
    }
}

fn check_identity(ctx: &Context, p: f64) -> Result<Check, CliError> {
    let ch = ctx.cfg.channel;
    let tol = if ch.is_discrete() { 1e-12 } else { 1e-6 };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_key(ctx.cfg.simulation.base_seed, 103));
    let mut worst: f64 = 0.0;
    for q in std::iter::once(p).chain((0..20).map(|_| rng.random_range(0.01..0.99))) {
        worst = worst.max((exp_neg_info_density_mean(&ch, q)? - 1.0).abs());
    }
    Ok(Check {
        name: "exp_neg_density_identity",
        passed: worst <= tol,
        detail: format!("max |E[exp(-iota)] - 1| = {worst:.3e} (tolerance {tol:.0e}) over 21 biases"),
    })
}

fn check_chernoff() -> Check {
    let target = (1.0 - 2f64.ln()) / 2.0;
    let worst = [0.5, 1.0, 2.0]
        .iter()
        .map(|&s| (max_chernoff_exponent(s).1 - target).abs())
        .fold(0.0, f64::max);
    Check {
        name: "gaussian_tail_exponent",
        passed: worst <= 1e-10,
        detail: format!("max |max_theta I - (1 - log 2)/2| = {worst:.3e} over sigma in {{0.5, 1, 2}}"),
    }
}

/// Runs the property checks; returns the report path and the number of
/// failed checks.
pub fn run_verify(ctx: &mut Context) -> Result<(PathBuf, usize), CliError> {
    let p = ctx.design_p()?;
    let set = enumerate_first_slot(
        &ctx.sched,
        ctx.cfg.design.m,
        ctx.cfg.design.resolution_factor,
        ctx.cfg.design.cap,
    )?;
    let checks = vec![
        check_decoders(ctx, &set, p)?,
        check_size_bounds(ctx, &set)?,
        check_intersections(ctx, &set),
        check_identity(ctx, p)?,
        check_chernoff(),
    ];
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let path = ctx.json_path("verify.json");
    ctx.write_json(&path, &json!({ "checks": checks, "failed": failed }))?;
    Ok((path, failed))
}
