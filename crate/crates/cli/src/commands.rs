use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use nugget_core::io::{
    fmt_float, nugget_set_from_parts, read_assignment, read_matrix, read_nuggets, read_weights, write_assignment,
    write_clusters, write_grid, write_labels, write_matrix_to, write_nuggets_to,
};
use nugget_core::refine::RefineParams;
use nugget_core::simgen::{LargePSim, SIGNAL_DIMS};
use nugget_core::wcluster::{choose_k_points, weighted_kmeans_points};
use nugget_core::wstats::{density_grid_in, estimate_quantiles_points, wpca_points};
use nugget_core::*;
use serde_json::json;

use crate::args::*;
use crate::manifest::Recorder;
use crate::Invalid;

/// Column means and standard deviations removed by `--standardize`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

/// Rescales every column to mean 0 and unit sample variance.
pub fn standardize(x: &Matrix) -> Result<(Matrix, Standardization)> {
    let (n, p) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Invalid::new("standardizing needs at least two rows").into());
    }
    let means = x.column_means();
    let mut sds = vec![0.0; p];
    for row in x.rows() {
        for (s, (&v, &m)) in sds.iter_mut().zip(row.iter().zip(&means)) {
            *s += (v - m) * (v - m);
        }
    }
    for (j, s) in sds.iter_mut().enumerate() {
        *s = (*s / (n as f64 - 1.0)).sqrt();
        if *s == 0.0 {
            return Err(Invalid::new(format!("column {j} is constant and cannot be standardized")).into());
        }
    }
    let values = x.rows().flat_map(|row| row.iter().zip(&means).zip(&sds).map(|((&v, &m), &s)| (v - m) / s)).collect();
    Ok((Matrix::new(n, p, values)?, Standardization { means, sds }))
}

pub fn load_input(rec: &mut Recorder, args: &InputArgs, stage: &str) -> Result<Matrix> {
    rec.input(&args.input);
    let x: Matrix = read_matrix(&args.input).with_context(|| format!("stage {stage}: reading {}", args.input.display()))?;
    if !args.standardize {
        return Ok(x);
    }
    let (x, st) = standardize(&x).with_context(|| format!("stage {stage}"))?;
    rec.counter("standardization", &st);
    Ok(x)
}

pub fn load_nuggets(rec: &mut Recorder, path: &Path, stage: &str) -> Result<Vec<Nugget>> {
    rec.input(path);
    read_nuggets(path).with_context(|| format!("stage {stage}: reading {}", path.display()))
}

pub fn load_set(rec: &mut Recorder, nuggets: &Path, assignment: &Path, mode: CenterMode, stage: &str) -> Result<Nuggets> {
    let nuggets = load_nuggets(rec, nuggets, stage)?;
    rec.input(assignment);
    let file = std::fs::File::open(assignment).with_context(|| format!("stage {stage}: reading {}", assignment.display()))?;
    let assignment = read_assignment(file).with_context(|| format!("stage {stage}: reading {}", assignment.display()))?;
    let mut set = nugget_set_from_parts(nuggets, assignment).with_context(|| format!("stage {stage}"))?;
    set.center_mode = mode;
    Ok(set)
}

/// Centers as a matrix plus weights as floats.
pub fn nugget_points(nuggets: &[Nugget]) -> Result<(Matrix, Vec<f64>)> {
    let rows: Vec<&[f64]> = nuggets.iter().map(|n| n.center.as_slice()).collect();
    let points = Matrix::from_rows(&rows)?;
    Ok((points, nuggets.iter().map(|n| n.weight as f64).collect()))
}

pub fn write_set(rec: &mut Recorder, set: &Nuggets, nuggets: &Path, assignment: Option<&Path>) -> Result<()> {
    let mut w = rec.create(nuggets)?;
    write_nuggets_to(&set.nuggets, &mut w)?;
    w.flush()?;
    if let Some(path) = assignment {
        let mut w = rec.create(path)?;
        write_assignment(&set.assignment, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn reduction_params(
    n: usize,
    p: usize,
    r: Option<usize>,
    c: Option<f64>,
    m_init: Option<usize>,
    m: Option<usize>,
    center: CenterMode,
    seed: u64,
) -> Result<ReductionParams> {
    let mut params = ReductionParams::defaults_for(n, p).with_center_mode(center).with_seed(seed);
    if let Some(r) = r {
        params = params.with_subset_size(r);
    }
    if let Some(c) = c {
        params = params.with_deletion_rate(c);
    }
    if let Some(mi) = m_init {
        params = params.with_m_init(mi);
    }
    let m = m.unwrap_or_else(|| nugget_core::nugget::default_nugget_count(n, p, params.m_init));
    params = params.with_m(m);
    params.validate(n)?;
    Ok(params)
}

pub fn record_creation(rec: &mut Recorder, set: &Nuggets) {
    let s = &set.stats;
    rec.counter("subsets", s.subsets);
    rec.counter("psi1_per_subset", &s.psi1_per_subset);
    rec.counter("psi2", s.psi2);
    rec.counter("intermediate_centers", s.intermediate_centers);
    rec.counter("distance_evals", s.distance_evals);
    rec.counter("nuggets", set.len());
}

pub fn record_refinement(rec: &mut Recorder, r: &nugget_core::Refinement<f64>) {
    rec.counter("refine_rounds", r.report.rounds.len());
    rec.counter("refine_splits", r.report.rounds.iter().map(|x| x.splits).collect::<Vec<_>>());
    rec.counter("refine_termination", r.report.termination);
    rec.counter("refined_nuggets", r.set.len());
}

pub fn create(rec: &mut Recorder, a: &CreateArgs) -> Result<()> {
    rec.seed(a.seed);
    let x = load_input(rec, &a.data, "create")?;
    let params = reduction_params(x.nrows(), x.ncols(), a.r, a.c, a.m_init, a.m, a.center, a.seed)?;
    rec.counter("reduction_params", &params);
    let set = rec.time("create", || create_data_nuggets(&x, &params))?;
    record_creation(rec, &set);
    write_set(rec, &set, &a.output, Some(&a.assignment))
}

pub fn refine(rec: &mut Recorder, a: &RefineArgs) -> Result<()> {
    rec.seed(a.seed);
    let x = load_input(rec, &a.data, "refine")?;
    let set = load_set(rec, &a.nuggets, &a.assignment, a.center, "refine")?;
    set.check(&x).context("stage refine: nuggets do not match the input")?;
    let params = RefineParams::new(a.nu).with_n_min(a.n_min).with_max_rounds(a.max_rounds).with_seed(a.seed);
    let r = rec.time("refine", || refine_data_nuggets(&x, &set, &params))?;
    record_refinement(rec, &r);
    write_set(rec, &r.set, &a.output, a.assignment_out.as_deref())
}

pub fn cluster_summary(c: &Clusters, weights: &[f64]) -> serde_json::Value {
    json!({
        "K": c.k(),
        "wwcss": c.wwcss,
        "sweeps": c.sweeps,
        "converged": c.converged,
        "per_cluster_weight": c.cluster_weights(weights),
    })
}

pub fn cluster(rec: &mut Recorder, a: &ClusterArgs) -> Result<()> {
    rec.seed(a.seed);
    let nuggets = load_nuggets(rec, &a.nuggets, "cluster")?;
    let (points, weights) = nugget_points(&nuggets)?;
    let params = WKMeansParams::new(a.k).with_starts(a.starts).with_max_sweeps(a.max_sweeps).with_seed(a.seed);
    let c = rec.time("cluster", || weighted_kmeans_points(&points, &weights, &params))?;
    let mut w = rec.create(&a.output)?;
    write_clusters(&c.assignment, &mut w)?;
    w.flush()?;
    let summary = serde_json::to_string_pretty(&cluster_summary(&c, &weights))?;
    match &a.summary {
        Some(path) => writeln!(rec.create(path)?, "{summary}")?,
        None => println!("{summary}"),
    }
    rec.counter("wwcss", c.wwcss);
    rec.counter("sweeps", c.sweeps);
    Ok(())
}

pub fn choose_k(rec: &mut Recorder, a: &ChooseKArgs) -> Result<()> {
    rec.seed(a.seed);
    let nuggets = load_nuggets(rec, &a.nuggets, "choose-k")?;
    let (points, weights) = nugget_points(&nuggets)?;
    let params = WKMeansParams::new(a.k_min).with_starts(a.starts).with_seed(a.seed);
    let sel = rec.time("choose-k", || choose_k_points(&points, &weights, a.k_min, a.k_max, &params))?;
    let mut w = csv::Writer::from_writer(rec.create(&a.output)?);
    w.write_record(["k", "wwcss", "second_difference"])?;
    for &(k, omega) in &sel.curve {
        let second = sel.second_differences.iter().find(|s| s.0 == k).map(|s| fmt_float(s.1)).unwrap_or_default();
        w.write_record([k.to_string(), fmt_float(omega), second])?;
    }
    w.flush()?;
    println!("{}", json!({ "K": sel.k, "monotone": sel.monotone }));
    rec.counter("chosen_k", sel.k);
    Ok(())
}

pub fn pca(rec: &mut Recorder, a: &PcaArgs) -> Result<()> {
    let nuggets = load_nuggets(rec, &a.nuggets, "pca")?;
    let (points, weights) = nugget_points(&nuggets)?;
    let res = rec.time("pca", || wpca_points(&points, &weights, a.q))?;
    let q = res.scores.cols();
    let mut w = csv::Writer::from_writer(rec.create(&a.output)?);
    let mut header = vec!["nugget_id".to_string()];
    header.extend((1..=q).map(|c| format!("score_{c}")));
    w.write_record(&header)?;
    for i in 0..res.scores.rows() {
        w.write_record(std::iter::once(i.to_string()).chain(res.scores.row(i).iter().map(|&v| fmt_float(v))))?;
    }
    w.flush()?;
    if let Some(path) = &a.loadings {
        let mut w = csv::Writer::from_writer(rec.create(path)?);
        let mut header = vec!["variable".to_string()];
        header.extend((1..=q).map(|c| format!("component_{c}")));
        w.write_record(&header)?;
        for v in 0..res.loadings.rows() {
            w.write_record(std::iter::once(v.to_string()).chain(res.loadings.row(v).iter().map(|&x| fmt_float(x))))?;
        }
        w.flush()?;
    }
    rec.counter("component_variances", &res.component_variances);
    println!("{}", json!({ "component_variances": res.component_variances }));
    Ok(())
}

pub fn parse_fit(s: &str) -> Result<QuantileFit> {
    match s.split_once(':') {
        None if s == "global" => Ok(QuantileFit::Global),
        Some(("tail", from)) => {
            let from: f64 = from.parse().map_err(|_| Invalid::new(format!("bad tail start '{from}'")))?;
            Ok(QuantileFit::Tail { from })
        }
        _ => Err(Invalid::new(format!("unknown fit '{s}', expected 'global' or 'tail:<p>'")).into()),
    }
}

pub fn quantiles(rec: &mut Recorder, a: &QuantilesArgs) -> Result<()> {
    let fit = parse_fit(&a.fit)?;
    let nuggets = load_nuggets(rec, &a.nuggets, "quantiles")?;
    if nuggets.first().is_some_and(|n| n.dim() != 1) {
        return Err(Invalid::new(format!("quantiles need one-dimensional nuggets, got {}", nuggets[0].dim())).into());
    }
    let centers: Vec<f64> = nuggets.iter().map(|n| n.center[0]).collect();
    let weights: Vec<f64> = nuggets.iter().map(|n| n.weight as f64).collect();
    let est = rec.time("quantiles", || estimate_quantiles_points(&centers, &weights, &a.percentiles, fit))?;
    let sink: Box<dyn Write> = match &a.output {
        Some(path) => Box::new(rec.create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["percentile", "estimate", "slope", "intercept"])?;
    for e in &est {
        w.write_record([e.percentile, e.estimate, e.regression_slope, e.regression_intercept].map(fmt_float))?;
    }
    w.flush()?;
    Ok(())
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Weighted 2-D grid over two columns of `points`.
pub fn grid_for(points: &Matrix, weights: &[f64], columns: &[usize], bins: usize, range: Option<&[f64]>) -> Result<DensityGrid<f64>> {
    let [cx, cy] = columns else {
        return Err(Invalid::new("expected exactly two columns").into());
    };
    if *cx >= points.ncols() || *cy >= points.ncols() {
        return Err(Invalid::new(format!("columns {cx},{cy} out of range for {} columns", points.ncols())).into());
    }
    let xy = Matrix::new(points.nrows(), 2, points.rows().flat_map(|r| [r[*cx], r[*cy]]).collect())?;
    let (xr, yr) = match range {
        Some([x0, x1, y0, y1]) => ((*x0, *x1), (*y0, *y1)),
        Some(_) => return Err(Invalid::new("range needs four values").into()),
        None => (bounds(&xy.column(0)), bounds(&xy.column(1))),
    };
    Ok(density_grid_in(&xy, weights, bins, xr, yr)?)
}

pub fn density(rec: &mut Recorder, a: &DensityArgs) -> Result<()> {
    let (points, weights) = match (&a.input, &a.nuggets) {
        (Some(input), _) => {
            rec.input(input);
            let x: Matrix = read_matrix(input).with_context(|| format!("stage density: reading {}", input.display()))?;
            let weights = match &a.weights {
                Some(path) => {
                    rec.input(path);
                    let file = std::fs::File::open(path).with_context(|| format!("stage density: reading {}", path.display()))?;
                    read_weights(file)?
                }
                None => vec![1.0; x.nrows()],
            };
            (x, weights)
        }
        (None, Some(path)) => nugget_points(&load_nuggets(rec, path, "density")?)?,
        (None, None) => return Err(Invalid::new("either --input or --nuggets is required").into()),
    };
    let grid = rec.time("density", || grid_for(&points, &weights, &a.columns, a.bins, a.range.as_deref()))?;
    let mut w = rec.create(&a.output)?;
    write_grid(&grid, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Rows `simulate` would produce, without generating anything.
pub fn simulated_rows(which: Which, scale: f64) -> usize {
    let round = |n: usize| (n as f64 * scale).round() as usize;
    match which {
        Which::Smile => round(SmileSpec::default().n_noise) + round(SmileSpec::default().n_smile),
        Which::Binary => 3 * round(BinarySimSpec::new(0.5).n_per_cluster),
        Which::Gaussian4 => Gaussian4Spec::default().scaled_sizes(scale).iter().sum(),
        Which::Largep => 3 * round(LargePSpec::default().n_per_cluster),
    }
}

pub fn simulated(which: Which, scale: f64, seed: u64, p: f64, dims: usize) -> Result<Simulated<f64>> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Invalid::new(format!("scale must lie in (0, 1], got {scale}")).into());
    }
    let round = |n: usize| (n as f64 * scale).round() as usize;
    Ok(match which {
        Which::Smile => {
            let d = SmileSpec::default();
            gen_smile(&SmileSpec { n_noise: round(d.n_noise), n_smile: round(d.n_smile), seed })?
        }
        Which::Binary => {
            let d = BinarySimSpec::new(p);
            gen_binary_patients(&BinarySimSpec { n_per_cluster: round(d.n_per_cluster), seed, ..d })?
        }
        Which::Gaussian4 => gen_gaussian4(&Gaussian4Spec { seed, ..Gaussian4Spec::default() }, scale)?,
        Which::Largep => {
            if dims <= SIGNAL_DIMS {
                return Err(Invalid::new(format!("largep needs more than {SIGNAL_DIMS} dimensions")).into());
            }
            let spec = LargePSpec { noise_dims: dims - SIGNAL_DIMS, rotation_seed: seed, sample_seed: seed, ..LargePSpec::default() };
            let sim: LargePSim<f64> = gen_largep(&spec, scale)?;
            sim.sim
        }
    })
}

pub fn write_data(rec: &mut Recorder, x: &Matrix, path: &Path) -> Result<()> {
    let mut w = rec.create(path)?;
    write_matrix_to(x, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn simulate(rec: &mut Recorder, a: &SimulateArgs) -> Result<()> {
    rec.seed(a.seed);
    let sim = rec.time("simulate", || simulated(a.which, a.scale, a.seed, a.p, a.dims))?;
    write_data(rec, &sim.data, &a.output)?;
    if let Some(path) = &a.labels {
        let mut w = rec.create(path)?;
        write_labels(&sim.labels, &mut w)?;
        w.flush()?;
    }
    rec.counter("rows", sim.data.nrows());
    rec.counter("columns", sim.data.ncols());
    Ok(())
}

fn mat_rows(m: &nugget_core::Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn decompose(rec: &mut Recorder, a: &DecomposeArgs) -> Result<()> {
    let x = load_input(rec, &a.data, "decompose")?;
    let set = load_set(rec, &a.nuggets, &a.assignment, a.center, "decompose")?;
    let d = rec.time("decompose", || decompose_covariance(&x, &set))?;
    let report = json!({
        "s": mat_rows(&d.s),
        "s_dn": mat_rows(&d.s_dn),
        "within": mat_rows(&d.within),
        "residual_norm": d.residual_norm,
        "s_norm": d.s_norm,
        "relative_residual": d.relative_residual(),
        "within_ratio": d.within.frobenius_norm() / d.s_norm,
    });
    writeln!(rec.create(&a.output)?, "{}", serde_json::to_string_pretty(&report)?)?;
    rec.counter("relative_residual", d.relative_residual());
    Ok(())
}

fn gaussian(n: usize, p: usize, seed: u64) -> Result<Matrix> {
    use rand::Rng;
    let mut rng = SeedStream::new(seed).child("bench").rng();
    Ok(Matrix::new(n, p, (0..n * p).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())?)
}

pub fn bench(rec: &mut Recorder, a: &BenchArgs) -> Result<()> {
    rec.seed(a.seed);
    if a.n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Invalid::new("N values must be strictly ascending").into());
    }
    let smallest = a.n[0];
    let m_init = a.m_init.unwrap_or(ReductionParams::DEFAULT_M_INIT.min(smallest));
    let mut w = csv::Writer::from_writer(rec.create(&a.output)?);
    w.write_record(["n", "rep", "seconds", "reduction_evals", "assignment_evals", "psi2"])?;
    for &n in &a.n {
        let params = reduction_params(n, a.p, a.r, a.c, Some(m_init), Some(a.m), CenterMode::Mean, a.seed)?;
        let x = gaussian(n, a.p, a.seed)?;
        for rep in 0..a.reps {
            let set = create_data_nuggets(&x, &params)?;
            let s = &set.stats;
            w.write_record([
                n.to_string(),
                rep.to_string(),
                fmt_float(s.wall_time),
                s.distance_evals.reduction.to_string(),
                s.distance_evals.assignment.to_string(),
                s.psi2.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
