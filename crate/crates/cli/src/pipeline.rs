//! Config-driven pipeline: `key = value` lines select a data source and the
//! stages to run; every artifact lands in `output_dir`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::ValueEnum;
use nugget_core::io::{read_matrix, write_clusters, write_grid, write_labels};
use nugget_core::refine::RefineParams;
use nugget_core::wcluster::weighted_kmeans_points;
use nugget_core::wstats::{estimate_quantiles_points, wpca_points};
use nugget_core::*;

use crate::args::Which;
use crate::commands::{self, nugget_points};
use crate::manifest::Recorder;
use crate::Invalid;

pub const STAGES: [&str; 6] = ["create", "refine", "cluster", "pca", "quantiles", "density"];

/// Every recognised key with its default; `None` means required or unset.
const KEYS: [(&str, Option<&str>); 24] = [
    ("input", None),
    ("simulate", None),
    ("scale", Some("1")),
    ("sim_p", Some("0.8")),
    ("sim_dims", Some("200")),
    ("standardize", Some("false")),
    ("output_dir", Some(".")),
    ("stages", Some("create,refine")),
    ("seed", Some("0")),
    ("R", None),
    ("C", None),
    ("m_init", None),
    ("M", None),
    ("center", Some("mean")),
    ("nu", Some("0.5")),
    ("n_min", Some("2")),
    ("max_rounds", Some("50")),
    ("K", None),
    ("starts", Some("10")),
    ("q", Some("2")),
    ("percentiles", Some("0.95,0.96,0.97,0.98,0.99")),
    ("fit", Some("global")),
    ("bins", Some("100")),
    ("density_columns", Some("0,1")),
];

/// Parsed configuration: explicit entries over defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Invalid::new(format!("config line {}: expected 'key = value'", i + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if values.insert(k.clone(), v).is_some() {
                return Err(Invalid::new(format!("config line {}: duplicate key '{k}'", i + 1)).into());
            }
        }
        Self::from_map(values)
    }

    pub fn from_map(values: BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = values.keys().find(|k| !KEYS.iter().any(|(name, _)| name == k)) {
            return Err(Invalid::new(format!("unknown config key '{k}'")).into());
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    /// Explicit entries plus defaults, as recorded in the manifest.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut out = self.values.clone();
        for (k, d) in KEYS {
            if let Some(d) = d {
                out.entry(k.to_string()).or_insert_with(|| d.to_string());
            }
        }
        out
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| Invalid::new(format!("config key '{key}': cannot parse '{v}'")).into()))
            .transpose()
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Invalid::new(format!("config key '{key}' is required")).into())
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.raw(key)
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|_| Invalid::new(format!("config key '{key}': cannot parse '{s}'")).into()))
            .collect()
    }
}

enum Source {
    File(PathBuf),
    Sim(Which),
}

struct Plan {
    source: Source,
    stages: Vec<String>,
    dir: PathBuf,
    seed: u64,
}

fn plan(cfg: &Config) -> Result<Plan> {
    let source = match (cfg.raw("input"), cfg.raw("simulate")) {
        (Some(p), None) => Source::File(PathBuf::from(p)),
        (None, Some(w)) => Source::Sim(Which::from_str(w, true).map_err(|_| Invalid::new(format!("unknown simulation '{w}'")))?),
        _ => return Err(Invalid::new("config needs exactly one of 'input' or 'simulate'").into()),
    };
    let stages: Vec<String> = cfg.list("stages")?;
    if let Some(s) = stages.iter().find(|s| !STAGES.contains(&s.as_str())) {
        return Err(Invalid::new(format!("unknown stage '{s}'")).into());
    }
    if stages.first().map(String::as_str) != Some("create") {
        return Err(Invalid::new("the first stage must be 'create'").into());
    }
    let order = |s: &String| STAGES.iter().position(|x| x == s);
    if stages.windows(2).any(|w| order(&w[0]) >= order(&w[1])) {
        return Err(Invalid::new(format!("stages must be distinct and in the order {}", STAGES.join(","))).into());
    }
    Ok(Plan { source, stages, dir: PathBuf::from(cfg.raw("output_dir").unwrap_or(".")), seed: cfg.req("seed")? })
}

fn has(plan: &Plan, stage: &str) -> bool {
    plan.stages.iter().any(|s| s == stage)
}

/// Runs the configured stages. All parameters are checked against the data
/// shape before any stage computes.
pub fn run_pipeline(rec: &mut Recorder, cfg: &Config) -> Result<()> {
    let plan = plan(cfg)?;
    rec.seed(plan.seed);
    let standardize: bool = cfg.req("standardize")?;
    let scale: f64 = cfg.req("scale")?;
    let sim_p: f64 = cfg.req("sim_p")?;
    let sim_dims: usize = cfg.req("sim_dims")?;

    let loaded = match &plan.source {
        Source::File(path) => {
            rec.input(path);
            Some(read_matrix::<f64>(path).with_context(|| format!("stage create: reading {}", path.display()))?)
        }
        Source::Sim(_) => None,
    };
    let (n, p) = match (&loaded, &plan.source) {
        (Some(x), _) => (x.nrows(), x.ncols()),
        (None, Source::Sim(w)) => {
            let p = match w {
                Which::Smile => 2,
                Which::Binary => BinarySimSpec::new(sim_p).n_vars,
                Which::Gaussian4 => 6,
                Which::Largep => sim_dims,
            };
            (commands::simulated_rows(*w, scale), p)
        }
        (None, Source::File(_)) => unreachable!(),
    };

    let center: CenterMode = cfg.req::<String>("center")?.parse()?;
    let create = commands::reduction_params(n, p, cfg.get("R")?, cfg.get("C")?, cfg.get("m_init")?, cfg.get("M")?, center, plan.seed)
        .context("stage create")?;
    let refine = RefineParams::new(cfg.req("nu")?)
        .with_n_min(cfg.req("n_min")?)
        .with_max_rounds(cfg.req("max_rounds")?)
        .with_seed(plan.seed);
    if has(&plan, "refine") {
        refine.validate().context("stage refine")?;
    }
    let k: Option<usize> = cfg.get("K")?;
    let cluster = if has(&plan, "cluster") {
        let k = k.ok_or_else(|| Invalid::new("stage cluster: config key 'K' is required"))?;
        let params = WKMeansParams::new(k).with_starts(cfg.req("starts")?).with_seed(plan.seed);
        params.validate(create.m).context("stage cluster")?;
        Some(params)
    } else {
        None
    };
    let q: usize = cfg.req("q")?;
    if has(&plan, "pca") && !(1..=p).contains(&q) {
        return Err(Invalid::new(format!("stage pca: q = {q} must lie in 1..={p}")).into());
    }
    let percentiles: Vec<f64> = cfg.list("percentiles")?;
    let fit = commands::parse_fit(cfg.raw("fit").unwrap_or("global"))?;
    if has(&plan, "quantiles") && p != 1 {
        return Err(Invalid::new(format!("stage quantiles: data must have one column, found {p}")).into());
    }
    let bins: usize = cfg.req("bins")?;
    let columns: Vec<usize> = cfg.list("density_columns")?;
    if has(&plan, "density") && (bins == 0 || columns.len() != 2 || columns.iter().any(|&c| c >= p)) {
        return Err(Invalid::new(format!("stage density: need bins > 0 and two columns below {p}")).into());
    }

    let out = |name: &str| plan.dir.join(name);
    let x = match (loaded, &plan.source) {
        (Some(x), _) => x,
        (None, Source::Sim(w)) => {
            let sim = rec.time("simulate", || commands::simulated(*w, scale, plan.seed, sim_p, sim_dims))?;
            commands::write_data(rec, &sim.data, &out("data.csv"))?;
            let mut lw = rec.create(&out("labels.csv"))?;
            write_labels(&sim.labels, &mut lw)?;
            lw.flush()?;
            sim.data
        }
        (None, Source::File(_)) => unreachable!(),
    };
    let x = if standardize {
        let (z, st) = commands::standardize(&x).context("stage create")?;
        rec.counter("standardization", &st);
        z
    } else {
        x
    };

    let mut set = rec.time("create", || create_data_nuggets(&x, &create)).context("stage create")?;
    commands::record_creation(rec, &set);
    commands::write_set(rec, &set, &out("nuggets.csv"), Some(&out("assignment.csv")))?;

    if has(&plan, "refine") {
        let r = rec.time("refine", || refine_data_nuggets(&x, &set, &refine)).context("stage refine")?;
        commands::record_refinement(rec, &r);
        commands::write_set(rec, &r.set, &out("refined.csv"), Some(&out("refined_assignment.csv")))?;
        set = r.set;
    }
    let (points, weights) = nugget_points(&set.nuggets)?;

    if let Some(params) = cluster {
        let c = rec.time("cluster", || weighted_kmeans_points(&points, &weights, &params)).context("stage cluster")?;
        let mut w = rec.create(&out("clusters.csv"))?;
        write_clusters(&c.assignment, &mut w)?;
        w.flush()?;
        let summary = serde_json::to_string_pretty(&commands::cluster_summary(&c, &weights))?;
        writeln!(rec.create(&out("cluster_summary.json"))?, "{summary}")?;
    }
    if has(&plan, "pca") {
        let res = rec.time("pca", || wpca_points(&points, &weights, q)).context("stage pca")?;
        let mut w = csv::Writer::from_writer(rec.create(&out("scores.csv"))?);
        let mut header = vec!["nugget_id".to_string()];
        header.extend((1..=q).map(|c| format!("score_{c}")));
        w.write_record(&header)?;
        for i in 0..res.scores.rows() {
            w.write_record(std::iter::once(i.to_string()).chain(res.scores.row(i).iter().map(|&v| nugget_core::io::fmt_float(v))))?;
        }
        w.flush()?;
        rec.counter("component_variances", &res.component_variances);
    }
    if has(&plan, "quantiles") {
        let centers: Vec<f64> = points.column(0);
        let est = rec
            .time("quantiles", || estimate_quantiles_points(&centers, &weights, &percentiles, fit))
            .context("stage quantiles")?;
        let mut w = csv::Writer::from_writer(rec.create(&out("quantiles.csv"))?);
        w.write_record(["percentile", "estimate", "slope", "intercept"])?;
        for e in &est {
            w.write_record([e.percentile, e.estimate, e.regression_slope, e.regression_intercept].map(nugget_core::io::fmt_float))?;
        }
        w.flush()?;
    }
    if has(&plan, "density") {
        let range = |c: usize| {
            let v = x.column(c);
            v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
        };
        let ((x0, x1), (y0, y1)) = (range(columns[0]), range(columns[1]));
        let grid = rec
            .time("density", || commands::grid_for(&points, &weights, &columns, bins, Some(&[x0, x1, y0, y1])))
            .context("stage density")?;
        let mut w = rec.create(&out("grid.csv"))?;
        write_grid(&grid, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Where the pipeline's manifest goes by default.
pub fn manifest_path(cfg: &Config) -> PathBuf {
    PathBuf::from(cfg.raw("output_dir").unwrap_or(".")).join("manifest.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config() {
        let cfg = Config::parse("# comment\nsimulate = smile  # trailing\n\nM = 20\nstages=create, refine\n").unwrap();
        assert_eq!(cfg.req::<usize>("M").unwrap(), 20);
        assert_eq!(cfg.list::<String>("stages").unwrap(), vec!["create", "refine"]);
        assert_eq!(cfg.req::<f64>("nu").unwrap(), 0.5);
        let resolved = cfg.resolved();
        assert_eq!(resolved["simulate"], "smile");
        assert_eq!(resolved["bins"], "100");
        assert!(!resolved.contains_key("K"));
        assert_eq!(Config::from_map(resolved).unwrap().resolved(), cfg.resolved());
    }

    #[test]
    fn rejects_malformed_config() {
        for text in ["M 20", "M = 1\nM = 2", "bogus = 1"] {
            let err = Config::parse(text).unwrap_err();
            assert!(err.is::<Invalid>(), "{text}: {err}");
        }
        let cfg = Config::parse("M = many").unwrap();
        assert!(cfg.req::<usize>("M").is_err());
    }

    #[test]
    fn stage_order_is_enforced() {
        let ok = Config::parse("simulate = smile\nstages = create,cluster,density").unwrap();
        assert!(plan(&ok).is_ok());
        for stages in ["refine", "create,density,cluster", "create,create", "create,plot"] {
            let cfg = Config::parse(&format!("simulate = smile\nstages = {stages}")).unwrap();
            assert!(plan(&cfg).is_err(), "{stages}");
        }
        assert!(plan(&Config::parse("input = a.csv\nsimulate = smile").unwrap()).is_err());
    }
}
