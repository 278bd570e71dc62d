use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use longevity::hjb::{
    benefit_numeric, solve_finite_given_alone, solve_infinite, solve_one_fund, PdeSolution, Readout,
};
use longevity::mortality::{McSettings, MortalityModel};
use longevity::pricing::{clearing_check, optimal_controls, price_field, write_control_csv};
use longevity::report::{fan_svg, header_comment};
use longevity::sim::{self, annuity_rate, consumption_shape_report, PathEnsemble};
use longevity::stylized::figure1_grid;
use longevity::Preferences;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ModelConfig};
use crate::CliError;

/// Demand of the infinite fund per unit wealth above which prices are
/// reported as not clearing.
const CLEARING_TOL: f64 = 1e-8;

/// Benefit targets in percent, keyed by `(α₁, α₂)`, with their relative
/// tolerance.
const TABLE_TARGETS: [((f64, f64), f64); 4] = [((-5.0, -10.0), 7.76), ((-2.0, -3.0), 0.62), ((-3.0, -2.0), 0.5), ((0.25, 0.15), 0.065)];
const TABLE_TOL: f64 = 0.15;
/// Largest benefit on the diagonal, in percentage points.
const DIAGONAL_TOL: f64 = 0.01;

pub struct Context {
    command: &'static str,
    cfg: ExperimentConfig,
    out: PathBuf,
    check: bool,
    header: String,
}

impl Context {
    pub fn new(command: &'static str, cfg: ExperimentConfig, out: PathBuf, check: bool) -> Self {
        let header = header_comment(command, &cfg.hash());
        Self { command, cfg, out, check, header }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_csv(&self, name: &str, body: &str) -> Result<(), CliError> {
        std::fs::write(self.path(name), format!("{}{body}", self.header))?;
        Ok(())
    }

    fn write_svg(&self, name: &str, body: &str) -> Result<(), CliError> {
        if !self.cfg.output.svg {
            return Ok(());
        }
        let mut text = String::new();
        for line in self.header.lines() {
            writeln!(text, "<!-- {} -->", line.trim_start_matches("# ")).unwrap();
        }
        text.push_str(body);
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    fn model(&self) -> Result<MortalityModel, CliError> {
        self.cfg.model.build()
    }
}

pub fn figure1(ctx: &Context) -> Result<(), CliError> {
    let ModelConfig::Stylized { a, b } = ctx.cfg.model else {
        return Err(CliError::Config("figure1 needs the stylized model".into()));
    };
    let f = &ctx.cfg.figure1;
    let grid = figure1_grid(a, b, f.lo, f.hi, f.resolution)?;
    ctx.write_csv("figure1.csv", &grid.to_csv())?;
    ctx.write_svg("figure1.svg", &grid.to_svg())?;

    let n = grid.alphas.len();
    let ill = grid.cells.iter().filter(|c| c.benefit_pct.is_none()).count();
    let off_diagonal: Vec<f64> = (0..n)
        .filter(|&i| !grid.cell(i, i).benefit_pct.is_some_and(|v| v.abs() < 1e-9))
        .map(|i| grid.alphas[i])
        .collect();
    println!("{}: {} cells, {ill} without a benefit", ctx.command, grid.cells.len());
    if !off_diagonal.is_empty() {
        println!(
            "diagonal cells without a zero benefit: {} (α from {} to {})",
            off_diagonal.len(),
            off_diagonal[0],
            off_diagonal[off_diagonal.len() - 1]
        );
    }
    if ctx.check && (ill == 0 || !off_diagonal.is_empty()) {
        return Err(CliError::Check(format!(
            "{ill} ill-posed cells, {} diagonal cells ill-posed or non-zero",
            off_diagonal.len()
        )));
    }
    Ok(())
}

/// Parse `a1:a2,a1:a2` into index pairs of `alphas`.
fn parse_cells(spec: &str, alphas: &[f64]) -> Result<Vec<(usize, usize)>, CliError> {
    let find = |s: &str| -> Result<usize, CliError> {
        let v: f64 = s.trim().parse().map_err(|_| CliError::Config(format!("bad α '{s}' in --cells")))?;
        alphas
            .iter()
            .position(|&a| (a - v).abs() < 1e-9)
            .ok_or_else(|| CliError::Config(format!("α = {v} is not in the table")))
    };
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (a1, a2) = pair
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("cell '{pair}' is not of the form alpha1:alpha2")))?;
            Ok((find(a1)?, find(a2)?))
        })
        .collect()
}

struct CellResult {
    i1: usize,
    i2: usize,
    benefit: Option<f64>,
    benefit_other: Option<f64>,
    qc_per_wealth: Option<f64>,
    iterations: Option<(usize, usize, usize)>,
    status: String,
}

pub fn table2(ctx: &Context, cells: Option<&str>) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let t2 = &cfg.table2;
    let prefs: Vec<Preferences> = t2.prefs.iter().map(|&[a, r]| Preferences::new(a, r, 0.0)).collect::<Result<_, _>>()?;
    let alphas: Vec<f64> = prefs.iter().map(|p| p.alpha).collect();
    let cells = match cells {
        Some(spec) => parse_cells(spec, &alphas)?,
        None => (0..prefs.len()).flat_map(|i1| (0..prefs.len()).map(move |i2| (i1, i2))).collect(),
    };
    let m = ctx.model()?;
    let mkt = cfg.market;
    let fcfg = cfg.solver.finite_config();

    let mut need_inf: Vec<usize> = cells.iter().map(|c| c.1).collect();
    let mut need_alone: Vec<usize> = cells.iter().map(|c| c.0).collect();
    need_inf.sort_unstable();
    need_inf.dedup();
    need_alone.sort_unstable();
    need_alone.dedup();
    let infinite: BTreeMap<usize, Result<PdeSolution, String>> = need_inf
        .par_iter()
        .map(|&i| (i, solve_infinite(&m, &mkt, &prefs[i], &cfg.solver).map_err(|e| e.to_string())))
        .collect();
    let alone: BTreeMap<usize, Result<PdeSolution, String>> = need_alone
        .par_iter()
        .map(|&i| (i, solve_one_fund(&m, &mkt, &prefs[i], &fcfg).map_err(|e| e.to_string())))
        .collect();

    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|&(i1, i2)| {
            let mut r = CellResult {
                i1,
                i2,
                benefit: None,
                benefit_other: None,
                qc_per_wealth: None,
                iterations: None,
                status: "ok".into(),
            };
            let mut run = || -> Result<(), String> {
                let g2 = infinite[&i2].as_ref().map_err(|e| format!("infinite fund: {e}"))?;
                let g0 = alone[&i1].as_ref().map_err(|e| format!("uninsured: {e}"))?;
                let p1 = &prefs[i1];
                let g1 = solve_finite_given_alone(&m, &mkt, p1, g2, g0, &fcfg).map_err(|e| e.to_string())?;
                let d = g1.diagnostics;
                r.iterations = Some((d.steps, d.iterations_total, d.iterations_max));
                r.benefit = Some(benefit_numeric(&g1, g0, p1, t2.lambda0, t2.t0, t2.readout).map_err(|e| e.to_string())?);
                let other = match t2.readout {
                    Readout::Lattice => Readout::PowerLaw,
                    Readout::PowerLaw => Readout::Lattice,
                };
                r.benefit_other = benefit_numeric(&g1, g0, p1, t2.lambda0, t2.t0, other).ok();
                r.qc_per_wealth =
                    optimal_controls(p1, &mkt, &m, &g1, g2, 1.0, t2.lambda0, t2.t0).map(|c| c.q_c).ok();
                Ok(())
            };
            if let Err(e) = run() {
                r.status = e.replace(',', ";");
            }
            r
        })
        .collect();

    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "nan".into());
    let other_name = match t2.readout {
        Readout::Lattice => "benefit_otherlaw_pct",
        Readout::PowerLaw => "benefit_lattice_pct",
    };
    let mut csv = format!(
        "alpha1,rho1,alpha2,rho2,benefit_pct,{other_name},qc_per_wealth,steps,iterations_total,iterations_max,status\n"
    );
    for r in &results {
        let (p1, p2) = (prefs[r.i1], prefs[r.i2]);
        let (s, it, im) = r.iterations.map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string())).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{s},{it},{im},{}",
            p1.alpha,
            p1.rho,
            p2.alpha,
            p2.rho,
            fmt(r.benefit),
            fmt(r.benefit_other),
            r.qc_per_wealth.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "nan".into()),
            r.status
        )
        .unwrap();
    }
    ctx.write_csv("table2.csv", &csv)?;

    // the paper's layout: finite fund across, infinite fund down
    let mut matrix = String::from("alpha2\\alpha1");
    for p in &prefs {
        write!(matrix, ",{}", p.alpha).unwrap();
    }
    matrix.push('\n');
    for (i2, p2) in prefs.iter().enumerate() {
        write!(matrix, "{}", p2.alpha).unwrap();
        for i1 in 0..prefs.len() {
            let v = results.iter().find(|r| r.i1 == i1 && r.i2 == i2).and_then(|r| r.benefit);
            matrix.push(',');
            matrix.push_str(&v.map(|x| format!("{x:.4}")).unwrap_or_default());
        }
        matrix.push('\n');
    }
    ctx.write_csv("table2_matrix.csv", &matrix)?;

    for r in &results {
        println!(
            "α₁ = {:>6}, α₂ = {:>6}: {:>12} %  {}",
            prefs[r.i1].alpha,
            prefs[r.i2].alpha,
            fmt(r.benefit),
            if r.status == "ok" { "" } else { &r.status }
        );
    }

    if ctx.check {
        let mut missed = Vec::new();
        for r in &results {
            let (a1, a2) = (prefs[r.i1].alpha, prefs[r.i2].alpha);
            let want = if r.i1 == r.i2 {
                Some((0.0, None))
            } else {
                TABLE_TARGETS
                    .iter()
                    .find(|((x, y), _)| (x - a1).abs() < 1e-9 && (y - a2).abs() < 1e-9)
                    .map(|(_, v)| (*v, Some(TABLE_TOL)))
            };
            let Some((target, rel)) = want else { continue };
            let ok = match (r.benefit, rel) {
                (Some(b), Some(rel)) => (b / target - 1.0).abs() <= rel,
                (Some(b), None) => (b - target).abs() <= DIAGONAL_TOL,
                (None, _) => false,
            };
            if !ok {
                missed.push(format!("({a1}, {a2}) gave {} against {target}", fmt(r.benefit)));
            }
        }
        if !missed.is_empty() {
            return Err(CliError::Check(missed.join("; ")));
        }
    }
    Ok(())
}

/// Finite fund with insurance, finite fund alone, infinite fund.
struct Solutions {
    g1: PdeSolution,
    alone: PdeSolution,
    g2: PdeSolution,
}

const CACHE_MAGIC: &[u8; 8] = b"LGCACHE1";

fn cache_path(ctx: &Context) -> PathBuf {
    ctx.out.join("cache").join(format!("{}.bin", ctx.cfg.solve_key()))
}

fn solve_fresh(ctx: &Context) -> Result<Solutions, CliError> {
    let (p1, p2) = (ctx.cfg.finite_prefs()?, ctx.cfg.infinite_prefs()?);
    let m = ctx.model()?;
    let mkt = ctx.cfg.market;
    let fcfg = ctx.cfg.solver.finite_config();
    let (g2, alone) = rayon::join(
        || solve_infinite(&m, &mkt, &p2, &ctx.cfg.solver),
        || solve_one_fund(&m, &mkt, &p1, &fcfg),
    );
    let (g2, alone) = (g2?, alone?);
    let g1 = solve_finite_given_alone(&m, &mkt, &p1, &g2, &alone, &fcfg)?;
    let sols = Solutions { g1, alone, g2 };
    write_cache(&cache_path(ctx), &sols)?;
    Ok(sols)
}

fn write_cache(path: &Path, s: &Solutions) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(CACHE_MAGIC)?;
        for g in [&s.g1, &s.alone, &s.g2] {
            g.write_binary(&mut w)?;
        }
        w.flush()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

fn read_cache(path: &Path) -> Result<Option<Solutions>, CliError> {
    let Ok(file) = File::open(path) else { return Ok(None) };
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(CliError::Config(format!("{} is not a solve cache", path.display())));
    }
    let g1 = PdeSolution::read_binary(&mut r)?;
    let alone = PdeSolution::read_binary(&mut r)?;
    let g2 = PdeSolution::read_binary(&mut r)?;
    Ok(Some(Solutions { g1, alone, g2 }))
}

fn cached_or_fresh(ctx: &Context, allow_fresh: bool) -> Result<Solutions, CliError> {
    let path = cache_path(ctx);
    match read_cache(&path)? {
        Some(s) => Ok(s),
        None if allow_fresh => solve_fresh(ctx),
        None => Err(CliError::Config(format!(
            "no cached solve for this configuration at {}; run `longevity solve` with the same config or pass --fresh",
            path.display()
        ))),
    }
}

fn clearing_of(ctx: &Context, s: &Solutions) -> Result<f64, CliError> {
    let (m, p2) = (ctx.model()?, ctx.cfg.infinite_prefs()?);
    Ok(clearing_check(&p2, &m, &s.g2, &price_field(&m, &s.g2))?)
}

pub fn solve(ctx: &Context) -> Result<(), CliError> {
    let s = solve_fresh(ctx)?;
    let stride = ctx.cfg.output.time_stride;
    for (name, g) in [("finite.csv", &s.g1), ("uninsured.csv", &s.alone), ("infinite.csv", &s.g2)] {
        let mut body = Vec::new();
        g.write_csv(&mut body, stride)?;
        ctx.write_csv(name, &String::from_utf8(body).expect("csv is utf-8"))?;
    }
    let mut fits = String::from("fund,t,log_a,a,b,rms_residual\n");
    for (name, g) in [("finite", &s.g1), ("uninsured", &s.alone), ("infinite", &s.g2)] {
        for f in &g.fits {
            writeln!(fits, "{name},{},{:.10e},{:.10e},{:.10e},{:.3e}", f.t, f.log_a, f.a(), f.b, f.rms_residual).unwrap();
        }
    }
    ctx.write_csv("fits.csv", &fits)?;

    let m = ctx.model()?;
    let p1 = ctx.cfg.finite_prefs()?;
    let mut controls = Vec::new();
    write_control_csv(&mut controls, &p1, &ctx.cfg.market, &m, &s.g1, &s.g2, stride)?;
    ctx.write_csv("controls.csv", &String::from_utf8(controls).expect("csv is utf-8"))?;

    let lambda0 = ctx.cfg.sim.initial_lambda;
    for (name, g) in [("finite", &s.g1), ("uninsured", &s.alone), ("infinite", &s.g2)] {
        let f = g.fitted_power;
        let d = g.diagnostics;
        println!(
            "{name}: A = {:.6e}, B = {:.6} (rms {:.2e}), {} steps, {} iterations (max {} per step)",
            f.a(),
            f.b,
            f.rms_residual,
            d.steps,
            d.iterations_total,
            d.iterations_max
        );
    }
    match benefit_numeric(&s.g1, &s.alone, &p1, lambda0, 0.0, Readout::Lattice) {
        Ok(b) => println!("benefit at λ = {lambda0}: {b:.6} %"),
        Err(e) => println!("benefit at λ = {lambda0}: unavailable ({e})"),
    }
    let clearing = clearing_of(ctx, &s)?;
    println!("clearing: largest infinite-fund demand per unit wealth {clearing:.3e}");
    if !(clearing < CLEARING_TOL) {
        return Err(longevity::Error::IllPosed(format!("posted prices do not clear: {clearing:.3e}")).into());
    }
    Ok(())
}

/// `age,p5,p25,...` table of one fan field.
fn fan_table(e: &PathEnsemble, field: &[Vec<f64>]) -> String {
    let mut s = String::from("age");
    for p in &e.percentiles {
        write!(s, ",p{p}").unwrap();
    }
    s.push('\n');
    for (k, row) in field.iter().enumerate() {
        write!(s, "{:.4}", e.ages[k]).unwrap();
        for v in row {
            write!(s, ",{v:.6e}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn bands(field: &[Vec<f64>], levels: usize) -> Vec<Vec<f64>> {
    (0..levels).map(|i| PathEnsemble::series(field, i)).collect()
}

fn run_simulation(ctx: &Context, s: &Solutions) -> Result<PathEnsemble, CliError> {
    let m = ctx.model()?;
    let p1 = ctx.cfg.finite_prefs()?;
    let e = sim::simulate(&m, &ctx.cfg.market, &p1, &s.g1, &s.g2, &ctx.cfg.sim)?;
    ctx.write_csv("fan.csv", &e.to_csv())?;
    Ok(e)
}

fn summary(ctx: &Context, e: &PathEnsemble, extra: &[(&str, String)]) -> Result<(), CliError> {
    let p1 = ctx.cfg.finite_prefs()?;
    let shape = consumption_shape_report(e, &p1);
    let mut rows: Vec<(&str, String)> = vec![
        ("paths", e.n_paths.to_string()),
        ("seed", ctx.cfg.sim.seed.to_string()),
        ("ruined", e.ruined.to_string()),
        ("extinct", e.extinct.to_string()),
        ("aborted", e.aborted.to_string()),
        ("mean_total_consumption", format!("{:.6e}", e.mean_total_consumption())),
        ("consumption_shape", format!("{:?}", shape.shape)),
        ("shape_consistent", shape.consistent.to_string()),
        ("peak_age", format!("{}", shape.peak_age)),
        ("final_over_peak", format!("{:.6}", shape.final_over_peak)),
    ];
    rows.extend(extra.iter().cloned());
    let mut csv = String::from("key,value\n");
    for (k, v) in &rows {
        writeln!(csv, "{k},{v}").unwrap();
        println!("{k}: {v}");
    }
    ctx.write_csv("summary.csv", &csv)?;
    if ctx.check && !shape.consistent {
        return Err(CliError::Check(format!(
            "median consumption is {:?}, not the shape expected for α₁ = {}",
            shape.shape, p1.alpha
        )));
    }
    Ok(())
}

pub fn fans(ctx: &Context) -> Result<(), CliError> {
    let s = cached_or_fresh(ctx, true)?;
    let clearing = clearing_of(ctx, &s)?;
    let e = run_simulation(ctx, &s)?;
    let m = ctx.model()?;
    let sim = &ctx.cfg.sim;
    let mc = McSettings { seed: sim.seed, ..McSettings::default() };
    let annuity = annuity_rate(&m, &ctx.cfg.market, sim.initial_pot, sim.initial_lambda, &mc)?;

    let n = e.percentiles.len();
    ctx.write_csv("consumption.csv", &fan_table(&e, &e.consumption))?;
    ctx.write_csv("insurance.csv", &fan_table(&e, &e.insurance_spend))?;
    ctx.write_csv("insurance_rate.csv", &fan_table(&e, &e.insurance_rate))?;
    ctx.write_csv("pnl.csv", &fan_table(&e, &e.pnl))?;
    ctx.write_csv("pnl_discounted.csv", &fan_table(&e, &e.pnl_discounted))?;
    let svg = |field: &[Vec<f64>], title: &str, y: &str, reference: Option<(f64, &str)>| {
        fan_svg(&e.ages, &bands(field, n), title, "age", y, reference)
    };
    ctx.write_svg("consumption.svg", &svg(&e.consumption, "Consumption", "per year", Some((annuity, "annuity"))))?;
    ctx.write_svg("insurance.svg", &svg(&e.insurance_spend, "Insurance purchase", "per year", None))?;
    ctx.write_svg("pnl.svg", &svg(&e.pnl, "Insurance profit and loss", "cumulative", None))?;
    summary(ctx, &e, &[("annuity", format!("{annuity:.2}")), ("clearing", format!("{clearing:.3e}"))])
}

pub fn simulate(ctx: &Context, fresh: bool) -> Result<(), CliError> {
    let s = cached_or_fresh(ctx, fresh)?;
    let clearing = clearing_of(ctx, &s)?;
    let e = run_simulation(ctx, &s)?;
    summary(ctx, &e, &[("clearing", format!("{clearing:.3e}"))])
}
