use std::fmt::Write as _;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;

use randcover::covering::{estimate_dim_limsup, generate_cover, window_table_csv, CoverConfig, LimsupEstimate, WindowFamily};
use randcover::frostman::{certify_lower_bound, grow_tree};
use randcover::geometry::{Point, DEFAULT_CELL_BUDGET};
use randcover::measures::{
    analytic_profile, classify_point, fattened_cantor_masses, isolation_level, EmpiricalOracle, ExactOracle,
    MassOracle, MeasureModel, PointClass,
};
use randcover::spectra::{bound_curves, coarse_counts, coarse_spectrum, resolved_local_dim, Grid, SpectrumCurve};

use crate::config::{Command, Config};

pub type Meta = Vec<(String, String)>;

/// Fewest levels a local-dimension fit may use.
const MIN_LOCAL_LEVELS: u32 = 6;

/// Files produced by a command, in emission order, plus a console summary.
#[derive(Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub summary: Vec<String>,
}

pub fn run(cmd: Command, cfg: &Config, model: &MeasureModel, meta: &Meta) -> Result<Artifacts> {
    match cmd {
        Command::SimulateCover => simulate_cover(cfg, model, meta),
        Command::EstimateDim => estimate_dim(cfg, model, meta),
        Command::Spectrum => spectrum(cfg, model, meta),
        Command::Hull => hull(cfg, model, meta),
        Command::TreeCertify => tree_certify(cfg, model, meta),
        Command::ExampleVerify => example_verify(cfg, model, meta),
    }
}

fn with(meta: &Meta, extra: &[(&str, String)]) -> Meta {
    let mut m = meta.clone();
    m.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    m
}

fn header(meta: &Meta) -> String {
    meta.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
}

fn cover_estimate(cfg: &Config, model: &MeasureModel, alpha: f64, j: (u32, u32), seed: u64) -> Result<LimsupEstimate> {
    let cover = generate_cover(CoverConfig {
        model: model.clone(),
        schedule: cfg.schedule(alpha),
        n_max: cfg.n_max(j.1),
        seed,
    })?;
    let windows = WindowFamily::new(&cover, j.0, j.1)?;
    Ok(estimate_dim_limsup(&cover, &windows)?)
}

fn replicate(cfg: &Config, model: &MeasureModel, alpha: f64, j: (u32, u32)) -> Result<Vec<(u64, LimsupEstimate)>> {
    // par_iter keeps input order, so rows come out sorted by seed
    cfg.seed_list()
        .par_iter()
        .map(|&seed| {
            cover_estimate(cfg, model, alpha, j, seed)
                .map(|e| (seed, e))
                .with_context(|| format!("alpha = {alpha}, seed {seed}"))
        })
        .collect()
}

/// Mean and standard error of the mean; the error is NaN for one value.
fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn dims_csv(meta: &Meta, runs: &[(u64, LimsupEstimate)], aggregate: bool) -> String {
    let mut out = header(meta);
    out.push_str("seed,slope,intercept,rms\n");
    for (seed, e) in runs {
        let d = &e.estimate;
        let _ = writeln!(out, "{seed},{},{},{}", d.slope, d.intercept, d.residual);
    }
    if aggregate {
        let col = |f: fn(&LimsupEstimate) -> f64| mean_stderr(&runs.iter().map(|(_, e)| f(e)).collect::<Vec<_>>());
        let cols = [col(|e| e.estimate.slope), col(|e| e.estimate.intercept), col(|e| e.estimate.residual)];
        let _ = writeln!(out, "mean,{},{},{}", cols[0].0, cols[1].0, cols[2].0);
        let _ = writeln!(out, "stderr,{},{},{}", cols[0].1, cols[1].1, cols[2].1);
    }
    out
}

fn simulate_cover(cfg: &Config, model: &MeasureModel, meta: &Meta) -> Result<Artifacts> {
    let c = &cfg.cover;
    let e = cover_estimate(cfg, model, c.alpha, (c.j_min, c.j_max), cfg.seed)
        .with_context(|| format!("seed {}", cfg.seed))?;
    let last = e.last_nonempty_j.map_or("none".to_string(), |j| j.to_string());
    let cover_meta = with(meta, &[("slope", e.estimate.slope.to_string()), ("last_nonempty_j", last.clone())]);
    let summary = vec![format!(
        "seed {}: dim estimate {} (1/alpha = {}), rms {}, intersection nonempty through j = {last}",
        cfg.seed,
        e.estimate.slope,
        1.0 / c.alpha,
        e.estimate.residual
    )];
    let dims = dims_csv(meta, &[(cfg.seed, e.clone())], false);
    Ok(Artifacts {
        files: vec![("cover.csv".into(), window_table_csv(&e.rows, &cover_meta)), ("dims.csv".into(), dims)],
        summary,
    })
}

fn estimate_dim(cfg: &Config, model: &MeasureModel, meta: &Meta) -> Result<Artifacts> {
    let c = &cfg.cover;
    let runs = replicate(cfg, model, c.alpha, (c.j_min, c.j_max))?;
    let (mean, se) = mean_stderr(&runs.iter().map(|(_, e)| e.estimate.slope).collect::<Vec<_>>());
    let summary = vec![format!("{} seeds: slope mean {mean} +- {se} (1/alpha = {})", runs.len(), 1.0 / c.alpha)];
    Ok(Artifacts { files: vec![("dims.csv".into(), dims_csv(meta, &runs, true))], summary })
}

fn oracle_for(model: &MeasureModel, seed: u64, samples: usize) -> Result<(Box<dyn MassOracle>, String)> {
    match ExactOracle::new(model) {
        Ok(o) => Ok((Box::new(o), "exact".into())),
        Err(_) => Ok((Box::new(EmpiricalOracle::new(model, seed, samples)?), format!("empirical({samples})"))),
    }
}

fn spectrum(cfg: &Config, model: &MeasureModel, meta: &Meta) -> Result<Artifacts> {
    let s = &cfg.spectrum;
    let (oracle, source) = oracle_for(model, cfg.seed, s.samples)?;
    let grid = Grid::span(s.s_min, s.s_max, s.s_step)?;
    let levels: Vec<u32> = (s.level_min..=s.level_max).collect();
    let report = coarse_counts(oracle.as_ref(), &levels, grid, DEFAULT_CELL_BUDGET).context("coarse counts")?;
    let g = coarse_spectrum(&report, s.eps)?;
    let meta = with(meta, &[("mass_source", source)]);
    let mut files = vec![
        ("spectrum.csv".to_string(), g.to_csv(&meta)),
        ("counts.csv".to_string(), report.to_csv(&meta)),
    ];
    let mut summary = vec![format!("G estimated on {} grid points over levels {:?}", grid.count, (s.level_min, s.level_max))];
    match analytic_profile(model) {
        Ok(p) => {
            let b = bound_curves(&p, &g, s.delta);
            files.push(("bounds.csv".into(), b.to_csv(&with(&meta, &[("delta", s.delta.to_string())]))));
        }
        Err(_) => summary.push(format!("no analytic profile for {}; bounds.csv skipped", model.name())),
    }
    Ok(Artifacts { files, summary })
}

fn hull(cfg: &Config, model: &MeasureModel, meta: &Meta) -> Result<Artifacts> {
    let h = &cfg.hull;
    // rows of (s, value, hull, tilde)
    let (rows, source): (Vec<[f64; 4]>, String) = match &h.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let c = SpectrumCurve::from_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
            let (hull, tilde) = (c.lipschitz_hull(), c.tilde_transform());
            let rows = (0..c.len()).map(|i| [c.x(i), c.get(i), hull.get(i), tilde.get(i)]).collect();
            (rows, path.display().to_string())
        }
        None => {
            // the analytic step curve is transformed exactly at each grid point
            let f = analytic_profile(model).context("no input curve given")?.f;
            let grid = Grid::span(h.s_min, h.s_max, h.s_step)?;
            let rows = grid.xs().map(|x| [x, f.eval(x), f.hull_at(x), f.tilde_at(x)]).collect();
            (rows, format!("analytic F of {}", model.name()))
        }
    };
    let mut out = header(&with(meta, &[("input", source)]));
    out.push_str("s,value,hull,tilde\n");
    for r in &rows {
        let _ = writeln!(out, "{},{},{},{}", r[0], r[1], r[2], r[3]);
    }
    let summary = vec![format!("hull and tilde of {} grid values", rows.len())];
    Ok(Artifacts { files: vec![("hull.csv".into(), out)], summary })
}

fn tree_certify(cfg: &Config, model: &MeasureModel, meta: &Meta) -> Result<Artifacts> {
    let t = &cfg.tree;
    let (tc, s) = cfg.tree_config(model)?;
    let tree = grow_tree(&tc).with_context(|| format!("growing tree, seed {}", cfg.seed))?;
    let cert = certify_lower_bound(&tree, t.t, s).context("certifying")?;
    let verdict = format!("{:?}", cert.verdict);
    let mut tree_text = header(meta);
    tree_text.push_str(&tree.to_text());
    let energy_meta = with(meta, &[("verdict", verdict.clone()), ("reason", cert.reason.clone())]);
    let summary = vec![
        format!("tree: {} nodes, depth {}", tree.nodes().len(), tree.depth()),
        format!(
            "energy I_{}: direct {} <= bound {}",
            t.t, cert.report.direct_energy, cert.report.bound_energy
        ),
        format!("verdict: {verdict} ({})", cert.reason),
    ];
    Ok(Artifacts {
        files: vec![("tree.txt".into(), tree_text), ("energy.csv".into(), cert.report.to_csv(&energy_meta))],
        summary,
    })
}

struct Check {
    check: &'static str,
    param: String,
    estimate: f64,
    lower: f64,
    upper: f64,
    reference: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.estimate >= self.lower && self.estimate <= self.upper
    }
}

fn example_verify(cfg: &Config, model: &MeasureModel, meta: &Meta) -> Result<Artifacts> {
    let MeasureModel::Example(ex) = model else {
        return Err(anyhow!("example-verify needs the example model"));
    };
    let e = &cfg.example;
    let profile = analytic_profile(model)?;
    let mut checks = Vec::new();

    for &x in &e.inv_alphas {
        let runs = replicate(cfg, model, 1.0 / x, (e.j_min, e.j_max))?;
        let (mean, _) = mean_stderr(&runs.iter().map(|(_, r)| r.estimate.slope).collect::<Vec<_>>());
        let target = profile.f.hull_at(x);
        checks.push(Check {
            check: "covering_dim",
            param: format!("1/alpha={x}"),
            estimate: mean,
            lower: target - e.tol,
            upper: target + e.tol,
            reference: target,
        });
        checks.push(Check {
            check: "covering_dim_bracket",
            param: format!("1/alpha={x}"),
            estimate: mean,
            lower: profile.f.left_limit(x),
            upper: target,
            reference: target,
        });
    }

    let radii: Vec<f64> = (1..=e.mass_j_max).map(|j| 3f64.powi(-(j as i32))).collect();
    let masses = fattened_cantor_masses(ex, &radii, e.mass_samples, cfg.seed)?;
    for (j, m) in (1..=e.mass_j_max).zip(&masses) {
        let (lo, hi) = ex.fattening_bounds(m.r);
        let se = m.estimate.std_err;
        checks.push(Check {
            check: "fattened_mass",
            param: format!("r=3^-{j}"),
            estimate: m.estimate.mass,
            lower: lo - 3.0 * se,
            upper: hi + 3.0 * se,
            reference: lo,
        });
    }

    let oracle = EmpiricalOracle::new(model, cfg.seed, e.samples)?;
    let quarter = Point::scalar(0.25);
    if let Some(est) = resolved_local_dim(&oracle, &quarter, e.level_min, e.level_max, e.min_hits, MIN_LOCAL_LEVELS)? {
        checks.push(Check {
            check: "local_dim",
            param: format!("x=0.25 levels {}..{}", est.scale_range.0, est.scale_range.1),
            estimate: est.slope,
            lower: ex.s1() - e.local_tol,
            upper: ex.s1() + e.local_tol,
            reference: ex.s1(),
        });
    }
    // probe points come from a stream independent of the reservoir
    let probe_seed = cfg.seed ^ 0x9e37_79b9_7f4a_7c15;
    let probes: Vec<Point> = (0..e.local_points as u64).map(|k| model.sample(probe_seed, k)).collect();
    let slopes = probes
        .par_iter()
        .map(|x| {
            let PointClass::Component(k) = classify_point(ex, x)? else {
                return Ok(None);
            };
            let first = isolation_level(k).max(e.level_min);
            Ok(resolved_local_dim(&oracle, x, first, e.level_max, e.min_hits, MIN_LOCAL_LEVELS)?.map(|est| est.slope))
        })
        .collect::<Result<Vec<_>>>()?;
    let sampled: Vec<f64> = slopes.iter().flatten().copied().collect();
    let skipped = slopes.len() - sampled.len();
    if !sampled.is_empty() {
        let (mean, _) = mean_stderr(&sampled);
        checks.push(Check {
            check: "local_dim_sampled",
            param: format!("{} of {} points", sampled.len(), slopes.len()),
            estimate: mean,
            lower: ex.s0() - e.local_tol,
            upper: ex.s0() + e.local_tol,
            reference: ex.s0(),
        });
    }

    let mut out = header(&with(meta, &[("unresolved_points", skipped.to_string())]));
    out.push_str("check,parameter,estimate,lower,upper,reference,pass\n");
    let mut summary = Vec::new();
    for c in &checks {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.check,
            c.param,
            c.estimate,
            c.lower,
            c.upper,
            c.reference,
            c.pass()
        );
        summary.push(format!(
            "{} {} {}: {} in [{}, {}]",
            if c.pass() { "PASS" } else { "FAIL" },
            c.check,
            c.param,
            c.estimate,
            c.lower,
            c.upper
        ));
    }
    Ok(Artifacts { files: vec![("example.csv".into(), out)], summary })
}
