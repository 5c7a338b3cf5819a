//! One function per subcommand. Each writes its CSV tables and returns a JSON
//! summary.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use fracsmooth::chaos::{
    besov_criterion, d12_divergence, d12_norm, decay_from_chaos, unit_interval_grid, BesovConfig,
    ChaosExpansion, CoefficientSource, Indicator, Projected, ProjectionRule,
};
use fracsmooth::hedging::{isometry_integral, z_regularity, ZRegConfig};
use fracsmooth::ratefit::sweep;
use fracsmooth::report::{fmt_f64, write_table};
use fracsmooth::rng::derive_seed;
use fracsmooth::smoothness::{
    b22_integral, default_t_grid, estimate_theta_sup, smoothness_curves, SmoothnessConfig, SupExponents,
};
use fracsmooth::weaklimit::{
    clock_a, ks_distance, lp_bound_curve, mixed_normal_sample, rescaled_terminal_errors, write_samples_csv,
    ClockConfig,
};
use fracsmooth::{Error, MarketModel, Payoff, TimeNet};
use serde_json::{json, Value};

use crate::config::{field_error, ConfigError, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Run(Error::Io(_)) => "io",
            CliError::Run(e) if e.is_numerical() => "numerical",
            CliError::Run(_) => "parameter",
        }
    }
}

type CmdResult = Result<Value, CliError>;

/// Where a command writes: the main table at `path`, side tables next to it.
pub struct Output {
    pub path: PathBuf,
}

impl Output {
    fn side(&self, part: &str) -> PathBuf {
        let stem = self.path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        let ext = self.path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
        self.path.with_file_name(format!("{stem}.{part}.{ext}"))
    }

    fn create(path: &Path) -> Result<BufWriter<File>, Error> {
        Ok(BufWriter::new(File::create(path)?))
    }
}

fn usize_key(cfg: &ExperimentConfig, key: &str) -> Result<usize, ConfigError> {
    cfg.get::<usize>(key)
}

pub fn price(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let model = cfg.model()?;
    let p = cfg.payoff()?;
    let ts: Vec<f64> = cfg.list("t_list")?;
    let ss: Vec<f64> = cfg.list("s_list")?;
    let mut rows = Vec::with_capacity(ts.len() * ss.len());
    for &t in &ts {
        for &s in &ss {
            let g = p.greeks(&model, t, s).map_err(|e| match e {
                Error::InvalidParameter { .. } => CliError::Config(field_error(&e)),
                other => CliError::Run(other),
            })?;
            rows.push(vec![fmt_f64(t), fmt_f64(s), fmt_f64(g.price), fmt_f64(g.delta), fmt_f64(g.gamma)]);
        }
    }
    write_table(
        Output::create(&out.path)?,
        &cfg.preamble("price"),
        &["t", "s", "price", "delta", "gamma"],
        &rows,
    )?;
    Ok(json!({ "rows": rows.len() }))
}

pub fn hedge_sweep(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let model = cfg.model()?;
    let p = cfg.payoff()?;
    let s = sweep(
        &p,
        &model,
        cfg.real("theta")?,
        &cfg.list::<usize>("n_list")?,
        usize_key(cfg, "m")?,
        cfg.get("seed")?,
        cfg.measure()?,
    )?;
    s.write_csv(Output::create(&out.path)?, &cfg.preamble("hedge-sweep"))?;
    let summary = s.fit.summary_json();
    std::fs::write(out.side("summary").with_extension("json"), &summary).map_err(Error::from)?;
    Ok(serde_json::from_str(&summary).expect("summary is JSON"))
}

pub fn smoothness(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let model = cfg.model()?;
    let p = cfg.payoff()?;
    let grid = default_t_grid(model.maturity, usize_key(cfg, "depth")?);
    let curves = smoothness_curves(&p, &model, &grid, &SmoothnessConfig::default())?;
    curves.write_csv(Output::create(&out.path)?, &cfg.preamble("smoothness"))?;
    let theta_hat = match estimate_theta_sup(&curves.decay_curve()) {
        Ok(t) => json!(t.theta),
        Err(Error::InfiniteSmoothness) => Value::Null,
        Err(e) => return Err(e.into()),
    };
    let sup = match SupExponents::from_curves(&curves) {
        Ok(s) => json!({ "from_decay": s.from_decay, "from_grad": s.from_grad, "from_hess": s.from_hess }),
        Err(Error::InfiniteSmoothness) => Value::Null,
        Err(e) => return Err(e.into()),
    };
    let theta = cfg.real("theta")?;
    let b22 = if theta > 0.0 && theta < 1.0 {
        let delta = model.maturity * 0.5f64.powi(usize_key(cfg, "depth")?.max(9) as i32);
        let b = b22_integral(&p, &model, theta, delta)?;
        json!({ "theta": theta, "value": b.value, "ratio": b.ratio, "finite": b.finite })
    } else {
        Value::Null
    };
    Ok(json!({ "theta_hat": theta_hat, "sup_exponents": sup, "b22": b22 }))
}

/// Standard-normal coordinate of the strike: `S_T ≥ K` iff `x ≥ x_K`.
fn strike_coordinate(p: &Payoff, model: &MarketModel) -> Option<f64> {
    let vol = model.sigma * model.maturity.sqrt();
    p.strike().map(|k| ((k / model.s0).ln() + 0.5 * vol * vol) / vol)
}

pub fn chaos(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let model = cfg.model()?;
    let p = cfg.payoff()?;
    let order = usize_key(cfg, "order")?;
    let vol = model.sigma * model.maturity.sqrt();
    let kink = strike_coordinate(&p, &model);
    let (s0, half) = (model.s0, 0.5 * vol * vol);
    let g = move |x: f64| p.eval(s0 * (vol * x - half).exp()).unwrap_or(f64::NAN);
    let breaks: Vec<f64> = kink.into_iter().collect();
    let binary = cfg.raw("payoff") == "binary";
    let source: Box<dyn CoefficientSource> = if binary {
        Box::new(Indicator {
            threshold: kink.expect("binary has a strike"),
        })
    } else {
        Box::new(Projected {
            g,
            rule: ProjectionRule::split_at(&breaks),
        })
    };
    let e: ChaosExpansion = source.expansion(order)?;
    let rows: Vec<Vec<String>> = e
        .alpha
        .iter()
        .enumerate()
        .map(|(k, a)| vec![k.to_string(), fmt_f64(*a)])
        .collect();
    let preamble = cfg.preamble("chaos");
    write_table(Output::create(&out.path)?, &preamble, &["k", "alpha"], &rows)?;

    let grid = unit_interval_grid(usize_key(cfg, "depth")?);
    let decay: Vec<Vec<String>> = grid
        .iter()
        .map(|&t| decay_from_chaos(&e, t).map(|d| vec![fmt_f64(t), fmt_f64(d.value), fmt_f64(d.lower)]))
        .collect::<Result<_, _>>()?;
    write_table(Output::create(&out.side("decay"))?, &preamble, &["t", "decay", "decay_lower"], &decay)?;

    let besov_theta = cfg.real("besov_theta")?;
    let mut besov_cfg = BesovConfig::default();
    if !binary {
        // projections get expensive long before the closed form does
        besov_cfg.max_order = besov_cfg.max_order.min(order.saturating_mul(64));
    }
    let curve = besov_criterion(source.as_ref(), besov_theta, &grid, &besov_cfg)?;
    let besov_rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| vec![fmt_f64(p.t), fmt_f64(p.phi), p.order.to_string()])
        .collect();
    write_table(Output::create(&out.side("besov"))?, &preamble, &["t", "phi", "order"], &besov_rows)?;

    let orders: Vec<usize> = (5..).map(|j| 1usize << j).take_while(|&k| k <= order).collect();
    let divergence = if orders.len() >= 3 {
        json!(d12_divergence(&e, &orders)?.divergent)
    } else {
        Value::Null
    };
    let d12 = d12_norm(&e);
    Ok(json!({
        "order": e.order(),
        "tail_l2": e.tail_l2,
        "d12_norm": d12.value,
        "d12_tail_warning": d12.tail_warning,
        "d12_divergent": divergence,
        "besov_theta": besov_theta,
        "besov_bounded": curve.bounded,
        "besov_last_decade_growth": curve.last_decade_growth,
    }))
}

pub fn weaklimit(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let model = cfg.model()?;
    let p = cfg.payoff()?;
    let theta = cfg.real("theta")?;
    let m = usize_key(cfg, "m")?;
    let seed: u64 = cfg.get("seed")?;
    let clock_cfg = ClockConfig {
        steps_per_octave: usize_key(cfg, "steps_per_octave")?,
        octaves: usize_key(cfg, "octaves")?,
    };
    let clock = clock_a(&p, &model, theta, m, seed, &clock_cfg)?;
    let mixed = mixed_normal_sample(&clock, seed);
    let n = usize_key(cfg, "n")?;
    let errors = rescaled_terminal_errors(&p, &model, n, theta, m, derive_seed(seed, 1))?;
    let ks = ks_distance(&errors, &mixed)?;
    let preamble = cfg.preamble("weaklimit");
    write_samples_csv(
        Output::create(&out.path)?,
        &preamble,
        &[("sqrt_n_C1", &errors), ("mixed_normal", &mixed)],
    )?;
    clock.write_csv(Output::create(&out.side("clock"))?, &preamble)?;

    let t_grid = unit_interval_grid(usize_key(cfg, "depth")?);
    let lp = lp_bound_curve(
        &p,
        &model,
        theta,
        cfg.real("p_norm")?,
        &t_grid,
        usize_key(cfg, "lp_paths")?,
        derive_seed(seed, 2),
        clock_cfg.steps_per_octave,
    )?;
    lp.write_csv(Output::create(&out.side("lp"))?, &preamble)?;
    let tail = clock.tail_verdict();
    let mean_sq = mixed.iter().map(|x| x * x).sum::<f64>() / mixed.len() as f64;
    Ok(json!({
        "ks": ks,
        "mean_A": clock.mean(),
        "mixed_normal_mean_square": mean_sq,
        "flagged_fraction": clock.flagged_fraction(),
        "clock_tail_ratio": tail.ratio,
        "clock_mean_finite": tail.finite,
        "lp_bounded": lp.bounded,
        "lp_heavy_tail_warning": lp.heavy_tail_warning,
    }))
}

pub fn zreg(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let model = cfg.model()?;
    let p = cfg.payoff()?;
    let theta = cfg.real("theta")?;
    let measure = cfg.measure()?;
    let zc = ZRegConfig::default();
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for n in cfg.list::<usize>("n_list")? {
        let net = TimeNet::theta_net(n, theta, model.maturity).map_err(|e| field_error(&e))?;
        let e = z_regularity(&p, &model, &net, measure, &zc)?;
        let iso = isometry_integral(&p, &model, &net, &zc)?;
        rows.push(vec![n.to_string(), fmt_f64(e), fmt_f64(n as f64 * e), fmt_f64(iso)]);
        table.push(json!({ "n": n, "zreg": e, "n_zreg": n as f64 * e }));
    }
    write_table(
        Output::create(&out.path)?,
        &cfg.preamble("zreg"),
        &["n", "zreg", "n_times_zreg", "isometry"],
        &rows,
    )?;
    Ok(json!({ "points": table }))
}
