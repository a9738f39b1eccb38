use qbh::correlations::{
    CmBlock, QuadratureSettings, Stencil, composite_correlator, qpv_energy_density, real_space_cm,
};
use qbh::error::{QbhError, Result};
use qbh::gaussian::{entanglement_entropy, finite_cm, log_negativity, symmetric_bisection};
use qbh::geometry::{QmtScanPoint, SpecFamily, qmt_divergence_scan};
use qbh::grid::BzGrid;
use qbh::model::{ModelParams, QBHSpec, build_model};
use qbh::ring;
use qbh::sample;
use qbh::spectral::{band_structure, krein_gap, stability_report};

use crate::output::{append_csv_rows, existing_rows, fmt_f, write_csv, write_manifest};
use crate::{ModelArgs, OutputArgs};

fn config_err(msg: impl Into<String>) -> QbhError {
    QbhError::InvalidInput(msg.into())
}

const BUILTIN_PARAMS: &[(&str, &[&str])] = &[
    ("harmonic", &["Omega", "J"]),
    ("imaghop", &["Omega", "J", "gamma"]),
    ("interpolation", &["Omega", "J", "Delta", "s"]),
    ("double", &["Omega1", "Omega2", "K1", "K2"]),
];

impl ModelArgs {
    fn is_builtin(&self) -> bool {
        BUILTIN_PARAMS.iter().any(|(n, _)| *n == self.model)
    }

    fn params(&self) -> Result<ModelParams> {
        match self.model.as_str() {
            "harmonic" => Ok(ModelParams::Harmonic { omega: self.omega, j: self.j }),
            "imaghop" => {
                Ok(ModelParams::ImagHop { omega: self.omega, j: self.j, gamma: self.gamma })
            }
            "interpolation" => Ok(ModelParams::Interpolation {
                omega: self.omega,
                j: self.j,
                delta: self.delta,
                s: self.s,
            }),
            "double" => Ok(ModelParams::DoubleChain {
                omega1: self.omega1,
                omega2: self.omega2,
                k1: self.k1,
                k2: self.k2,
            }),
            other => Err(config_err(format!(
                "unknown built-in model '{other}' (harmonic, imaghop, interpolation, double) \
                 and no such model file"
            ))),
        }
    }

    pub fn build(&self) -> Result<(QBHSpec, serde_json::Value)> {
        let path = std::path::Path::new(&self.model);
        if !self.is_builtin() && path.exists() {
            let text = std::fs::read_to_string(path)?;
            let spec = QBHSpec::from_json(&text)?;
            let parsed: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| QbhError::ModelFile(e.to_string()))?;
            return Ok((spec, serde_json::json!({ "file": self.model, "content": parsed })));
        }
        let params = self.params()?;
        let spec = build_model(params)?;
        Ok((spec, serde_json::json!({ "builtin": self.model, "params": self.param_map() })))
    }

    fn param_map(&self) -> serde_json::Value {
        let names = BUILTIN_PARAMS
            .iter()
            .find(|(n, _)| *n == self.model)
            .map(|(_, ps)| *ps)
            .unwrap_or(&[]);
        let mut map = serde_json::Map::new();
        for name in names {
            map.insert(name.to_string(), serde_json::json!(self.get_param(name).unwrap()));
        }
        serde_json::Value::Object(map)
    }

    fn get_param(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "Omega" => self.omega,
            "J" => self.j,
            "Delta" => self.delta,
            "s" => self.s,
            "gamma" => self.gamma,
            "Omega1" => self.omega1,
            "Omega2" => self.omega2,
            "K1" => self.k1,
            "K2" => self.k2,
            _ => return Err(config_err(format!("unknown parameter '{name}'"))),
        })
    }

    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "Omega" => self.omega = value,
            "J" => self.j = value,
            "Delta" => self.delta = value,
            "s" => self.s = value,
            "gamma" => self.gamma = value,
            "Omega1" => self.omega1 = value,
            "Omega2" => self.omega2 = value,
            "K1" => self.k1 = value,
            "K2" => self.k2 = value,
            _ => return Err(config_err(format!("unknown parameter '{name}'"))),
        }
        Ok(())
    }

    fn check_param_applies(&self, name: &str) -> Result<()> {
        if !self.is_builtin() {
            return Err(config_err("parameter sweeps need a built-in model"));
        }
        let allowed = BUILTIN_PARAMS
            .iter()
            .find(|(n, _)| *n == self.model)
            .map(|(_, ps)| *ps)
            .unwrap();
        if allowed.contains(&name) {
            Ok(())
        } else {
            Err(config_err(format!(
                "parameter '{name}' does not exist for model '{}' (has {})",
                self.model,
                allowed.join(", ")
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// stability / gap / bands
// ---------------------------------------------------------------------------

fn make_grid(spec: &QBHSpec, n: usize) -> Result<BzGrid> {
    BzGrid::new(vec![n; spec.dim()])
}

pub fn stability(model: &ModelArgs, grid_n: usize, out: &OutputArgs) -> Result<()> {
    let (spec, desc) = model.build()?;
    let grid = make_grid(&spec, grid_n)?;
    let rep = stability_report(&spec, &grid)?;
    let json = serde_json::json!({
        "dynamically_stable": rep.dynamically_stable,
        "energy_bound": format!("{}", rep.thermo),
        "krein_gap_direct": rep.krein_gap_direct,
        "krein_gap_indirect": rep.krein_gap_indirect,
        "gap_argmin_k": rep.gap_argmin_k,
        "singular_momenta": rep.singular_momenta
            .iter()
            .map(|(k, c)| serde_json::json!({ "k": k, "kind": c.name() }))
            .collect::<Vec<_>>(),
    });
    match out.format.as_str() {
        "json" => {
            let text = serde_json::to_string_pretty(&json).unwrap();
            match &out.out {
                Some(path) => {
                    std::fs::write(path, &text)?;
                    write_manifest(path, serde_json::json!({ "command": "stability", "model": desc, "grid": grid_n }))?;
                }
                None => println!("{text}"),
            }
        }
        "text" => {
            println!(
                "dynamically stable: {}",
                if rep.dynamically_stable { "yes" } else { "no" }
            );
            println!("energy bound:       {}", rep.thermo);
            println!("krein gap (direct): {}", fmt_f(rep.krein_gap_direct));
            println!("krein gap (indir.): {}", fmt_f(rep.krein_gap_indirect));
            println!("gap argmin k:       {:?}", rep.gap_argmin_k);
            if rep.singular_momenta.is_empty() {
                println!("singular momenta:   none");
            } else {
                for (k, c) in &rep.singular_momenta {
                    println!("singular momentum:  k = {k:?} ({c})");
                }
            }
        }
        other => return Err(config_err(format!("unknown format '{other}'"))),
    }
    Ok(())
}

pub fn gap(model: &ModelArgs, grid_n: usize, out: &OutputArgs) -> Result<()> {
    let (spec, desc) = model.build()?;
    let grid = make_grid(&spec, grid_n)?;
    let rep = krein_gap(&spec, &grid)?;
    let json = serde_json::json!({
        "direct": rep.direct,
        "indirect": rep.indirect,
        "argmin_k": rep.argmin_k,
        "dynamically_stable": rep.dynamically_stable,
    });
    match &out.out {
        Some(path) => {
            std::fs::write(path, serde_json::to_string_pretty(&json).unwrap())?;
            write_manifest(path, serde_json::json!({ "command": "gap", "model": desc, "grid": grid_n }))?;
        }
        None => {
            if out.format == "json" {
                println!("{}", serde_json::to_string_pretty(&json).unwrap());
            } else {
                println!("direct   {}", fmt_f(rep.direct));
                println!("indirect {}", fmt_f(rep.indirect));
                println!("argmin k {:?}", rep.argmin_k);
            }
        }
    }
    Ok(())
}

pub fn bands(model: &ModelArgs, grid_n: usize, out: &OutputArgs) -> Result<()> {
    let (spec, desc) = model.build()?;
    let grid = make_grid(&spec, grid_n)?;
    let rows = band_structure(&spec, &grid)?;
    let dim = spec.dim();
    let mut header: Vec<String> = (0..dim).map(|a| format!("k{}", a + 1)).collect();
    header.extend(["band", "re_omega", "im_omega", "signature", "kpr"].map(String::from));
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let data: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.k.iter().map(|x| fmt_f(*x)).collect();
            row.push(r.band.to_string());
            row.push(fmt_f(r.re_omega));
            row.push(fmt_f(r.im_omega));
            row.push(r.signature.to_string());
            row.push(fmt_f(r.kpr));
            row
        })
        .collect();
    write_csv(out.out.as_deref(), &header_refs, &data)?;
    if let Some(path) = &out.out {
        write_manifest(
            path,
            serde_json::json!({ "command": "bands", "model": desc, "grid": grid_n, "rows": data.len() }),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// correlations
// ---------------------------------------------------------------------------

pub fn correlations(
    model: &ModelArgs,
    rmax: i64,
    stencil: Option<&str>,
    allow_gapless: bool,
    quad_tol: f64,
    out: &OutputArgs,
) -> Result<()> {
    let (spec, desc) = model.build()?;
    let settings = QuadratureSettings { tol: quad_tol, allow_gapless, ..Default::default() };
    let header = ["r", "block", "value", "quad_error"];
    let mut rows: Vec<Vec<String>> = Vec::new();
    match stencil {
        Some(text) => {
            let st: Stencil = text.parse()?;
            let rs: Vec<i64> = (0..=rmax).collect();
            for (r, v, e) in composite_correlator(&spec, &st, &rs, &settings)? {
                rows.push(vec![r.to_string(), format!("\"{text}\""), fmt_f(v), fmt_f(e)]);
            }
        }
        None => {
            let cm = real_space_cm(&spec, rmax, &settings)?;
            for r in 0..=rmax {
                for block in [CmBlock::Xx, CmBlock::Pp, CmBlock::Xp] {
                    rows.push(vec![
                        r.to_string(),
                        block.label().to_string(),
                        fmt_f(cm.value(block, r)),
                        fmt_f(cm.error(r)),
                    ]);
                }
            }
        }
    }
    write_csv(out.out.as_deref(), &header, &rows)?;
    if let Some(path) = &out.out {
        write_manifest(
            path,
            serde_json::json!({
                "command": "correlations", "model": desc, "rmax": rmax,
                "stencil": stencil, "allow_gapless": allow_gapless,
                "quad_tol": quad_tol, "rows": rows.len(),
            }),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// entanglement
// ---------------------------------------------------------------------------

fn parse_region(text: &str, sites: usize) -> Result<std::ops::Range<usize>> {
    if text == "half" {
        if sites % 2 != 0 {
            eprintln!("warning: odd ring of {sites} sites bisected as {}", sites / 2);
        }
        return Ok(symmetric_bisection(sites));
    }
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.parse().map_err(|_| config_err("bad region start"))?;
        let b: usize = b.parse().map_err(|_| config_err("bad region end"))?;
        return Ok(a..b);
    }
    let sz: usize = text.parse().map_err(|_| config_err("bad region size"))?;
    Ok(0..sz)
}

pub fn entanglement(model: &ModelArgs, sites: usize, region: &str, out: &OutputArgs) -> Result<()> {
    let (spec, desc) = model.build()?;
    let b = parse_region(region, sites)?;
    let cm = finite_cm(&spec, sites)?;
    let grid = make_grid(&spec, 1025)?;
    let gap = krein_gap(&spec, &grid)?;
    let ent = qbh::gaussian::entanglement(&cm, b.clone())?;
    let (s, en) = (ent.entropy, ent.log_negativity);
    let header = ["N", "B_size", "params", "krein_gap", "entropy", "log_negativity"];
    let params = serde_json::to_string(&desc).unwrap().replace(',', ";").replace('"', "'");
    let rows = vec![vec![
        sites.to_string(),
        (b.end - b.start).to_string(),
        format!("\"{params}\""),
        fmt_f(gap.direct),
        fmt_f(s),
        fmt_f(en),
    ]];
    write_csv(out.out.as_deref(), &header, &rows)?;
    if let Some(path) = &out.out {
        write_manifest(
            path,
            serde_json::json!({ "command": "entanglement", "model": desc, "N": sites, "B": region }),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// metric tensor
// ---------------------------------------------------------------------------

struct ArgsFamily {
    base: ModelArgs,
    varying: Vec<String>,
}

impl SpecFamily for ArgsFamily {
    fn param_names(&self) -> Vec<String> {
        self.varying.clone()
    }

    fn build(&self, params: &[f64]) -> Result<QBHSpec> {
        let mut args = self.base.clone();
        for (name, &v) in self.varying.iter().zip(params.iter()) {
            args.set_param(name, v)?;
        }
        Ok(args.build()?.0)
    }
}

fn parse_k(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| config_err("bad momentum component")))
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn qmt(
    model: &ModelArgs,
    vary: &str,
    k_text: &str,
    h_fd: f64,
    band: usize,
    scan: Option<&str>,
    steps_text: &str,
    out: &OutputArgs,
) -> Result<()> {
    let varying: Vec<String> = vary.split(',').map(|s| s.trim().to_string()).collect();
    for name in &varying {
        model.check_param_applies(name)?;
    }
    let k = parse_k(k_text)?;
    let family = ArgsFamily { base: model.clone(), varying: varying.clone() };
    let (_, desc) = model.build()?;

    let pair_headers: Vec<String> = {
        let mut v = Vec::new();
        for i in 0..varying.len() {
            for j in i..varying.len() {
                v.push(format!("g_{}_{}", varying[i], varying[j]));
            }
        }
        v
    };

    match scan {
        None => {
            let center: Vec<f64> =
                varying.iter().map(|n| model.get_param(n)).collect::<Result<_>>()?;
            let res = qbh::geometry::qmt(&family, &center, &k, h_fd, band)?;
            let mut header: Vec<String> = varying.clone();
            header.push("k".into());
            header.extend(pair_headers.iter().cloned());
            header.push("divergent".into());
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let mut row: Vec<String> = center.iter().map(|v| fmt_f(*v)).collect();
            row.push(format!("\"{k_text}\""));
            let mut mag: f64 = 0.0;
            for i in 0..varying.len() {
                for j in i..varying.len() {
                    let g = res.g_lr[(i, j)];
                    mag = mag.max(g.abs());
                    row.push(fmt_f(g));
                }
            }
            row.push((mag > qbh::geometry::DIVERGENCE_THRESHOLD).to_string());
            write_csv(out.out.as_deref(), &header_refs, &[row])?;
            if let Some(path) = &out.out {
                write_manifest(
                    path,
                    serde_json::json!({
                        "command": "qmt", "model": desc, "vary": varying,
                        "k": k, "h_fd": h_fd, "band": band,
                    }),
                )?;
            }
        }
        Some(ranges) => {
            let steps: Vec<usize> = steps_text
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| config_err("bad steps")))
                .collect::<Result<_>>()?;
            let bounds: Vec<(f64, f64)> = ranges
                .split(',')
                .map(|r| {
                    let (a, b) =
                        r.split_once("..").ok_or_else(|| config_err("scan wants from..to"))?;
                    Ok((
                        a.trim().parse::<f64>().map_err(|_| config_err("bad scan bound"))?,
                        b.trim().parse::<f64>().map_err(|_| config_err("bad scan bound"))?,
                    ))
                })
                .collect::<Result<_>>()?;
            if bounds.len() != varying.len() {
                return Err(config_err("one from..to range per varied parameter"));
            }
            let steps_per: Vec<usize> = (0..varying.len())
                .map(|i| steps.get(i).cloned().unwrap_or(steps[0]).max(2))
                .collect();
            let mut grid_points: Vec<Vec<f64>> = vec![Vec::new()];
            for (axis, (lo, hi)) in bounds.iter().enumerate() {
                let n = steps_per[axis];
                let mut next = Vec::new();
                for p in &grid_points {
                    for i in 0..n {
                        let v = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                        let mut q = p.clone();
                        q.push(v);
                        next.push(q);
                    }
                }
                grid_points = next;
            }
            let scan_points: Vec<QmtScanPoint> =
                qmt_divergence_scan(&family, &grid_points, &k, h_fd, band);
            let mut header: Vec<String> = varying.clone();
            header.push("k".to_string());
            header.extend(pair_headers.iter().cloned());
            header.push("divergent".to_string());
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let rows: Vec<Vec<String>> = scan_points
                .iter()
                .map(|p| {
                    let mut row: Vec<String> = p.params.iter().map(|v| fmt_f(*v)).collect();
                    row.push(format!("\"{k_text}\""));
                    match &p.g_lr {
                        Some(g) => {
                            for i in 0..varying.len() {
                                for j in i..varying.len() {
                                    row.push(fmt_f(g[(i, j)]));
                                }
                            }
                        }
                        None => {
                            for _ in 0..pair_headers.len() {
                                row.push("nan".into());
                            }
                        }
                    }
                    row.push(p.divergent.to_string());
                    row
                })
                .collect();
            write_csv(out.out.as_deref(), &header_refs, &rows)?;
            if let Some(path) = &out.out {
                write_manifest(
                    path,
                    serde_json::json!({
                        "command": "qmt-scan", "model": desc, "vary": varying, "k": k,
                        "h_fd": h_fd, "band": band, "scan": ranges, "steps": steps_per,
                        "rows": rows.len(),
                    }),
                )?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub struct SweepAxis {
    pub name: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

pub struct SweepConfig {
    pub model: ModelArgs,
    pub axes: Vec<SweepAxis>,
    pub emit: String,
    pub sites: usize,
    pub threads: Option<usize>,
    pub resume: bool,
    pub out: OutputArgs,
}

const SWEEP_METRICS: &[&str] = &["gap", "indirect", "energy", "ee", "en"];

pub fn sweep(cfg: SweepConfig) -> Result<()> {
    let metrics: Vec<String> = cfg.emit.split(',').map(|s| s.trim().to_string()).collect();
    for m in &metrics {
        if !SWEEP_METRICS.contains(&m.as_str()) {
            return Err(config_err(format!(
                "unknown metric '{m}' (available: {})",
                SWEEP_METRICS.join(", ")
            )));
        }
    }
    for axis in &cfg.axes {
        cfg.model.check_param_applies(&axis.name)?;
        if axis.steps == 0 {
            return Err(config_err("sweep range must be non-empty"));
        }
    }

    // cartesian point list, row-major in axis order
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &cfg.axes {
        let mut next = Vec::new();
        for p in &points {
            for i in 0..axis.steps {
                let v = if axis.steps == 1 {
                    axis.from
                } else {
                    axis.from + (axis.to - axis.from) * i as f64 / (axis.steps - 1) as f64
                };
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        points = next;
    }

    let mut header: Vec<String> = Vec::new();
    for (i, axis) in cfg.axes.iter().enumerate() {
        header.push(format!("param{}", i + 1));
        header.push(format!("value{}", i + 1));
        let _ = axis;
    }
    header.push("metric".into());
    header.push("value".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();

    // resume support: completed points have all their metric rows written
    let rows_per_point = metrics.len();
    let skip_points = match (&cfg.out.out, cfg.resume) {
        (Some(path), true) if path.exists() => existing_rows(path) / rows_per_point,
        _ => 0,
    };

    let threads = cfg
        .threads
        .or_else(|| std::env::var("QBH_THREADS").ok().and_then(|v| v.parse().ok()));
    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            builder = builder.num_threads(t);
        }
        builder.build().map_err(|e| config_err(format!("thread pool: {e}")))?
    };

    let todo: Vec<(usize, Vec<f64>)> =
        points.iter().cloned().enumerate().skip(skip_points).collect();
    let results: Vec<(usize, Vec<Vec<String>>, Option<QbhError>)> = pool.install(|| {
        use rayon::prelude::*;
        todo.par_iter()
            .map(|(idx, pvals)| {
                let mut args = cfg.model.clone();
                for (axis, &v) in cfg.axes.iter().zip(pvals.iter()) {
                    args.set_param(&axis.name, v).expect("validated above");
                }
                let mut rows = Vec::with_capacity(rows_per_point);
                let mut first_err = None;
                for metric in &metrics {
                    let value = point_metric(&args, metric, cfg.sites);
                    let mut row: Vec<String> = Vec::new();
                    for (axis, &v) in cfg.axes.iter().zip(pvals.iter()) {
                        row.push(axis.name.clone());
                        row.push(fmt_f(v));
                    }
                    row.push(metric.clone());
                    match value {
                        Ok(v) => row.push(fmt_f(v)),
                        Err(e) => {
                            row.push("nan".into());
                            if first_err.is_none() {
                                first_err = Some(e);
                            }
                        }
                    }
                    rows.push(row);
                }
                (*idx, rows, first_err)
            })
            .collect()
    });

    // rows are already in input order thanks to the ordered collect
    let mut all_rows: Vec<Vec<String>> = Vec::new();
    let mut first_err: Option<QbhError> = None;
    for (_, rows, err) in results {
        all_rows.extend(rows);
        if first_err.is_none() {
            first_err = err;
        }
    }

    match (&cfg.out.out, skip_points > 0) {
        (Some(path), true) => append_csv_rows(path, &all_rows)?,
        (target, _) => write_csv(target.as_deref(), &header_refs, &all_rows)?,
    }
    if let Some(path) = &cfg.out.out {
        let (_, desc) = cfg.model.build().unwrap_or_else(|_| {
            (build_model(ModelParams::Harmonic { omega: 1.0, j: 0.0 }).unwrap(), serde_json::json!(null))
        });
        write_manifest(
            path,
            serde_json::json!({
                "command": "sweep", "model": desc,
                "axes": cfg.axes.iter().map(|a| serde_json::json!({
                    "param": a.name, "from": a.from, "to": a.to, "steps": a.steps,
                })).collect::<Vec<_>>(),
                "emit": metrics, "N": cfg.sites,
                "points": points.len(), "resumed_at": skip_points,
            }),
        )?;
    }
    if let Some(err) = first_err {
        return Err(err);
    }
    Ok(())
}

fn point_metric(args: &ModelArgs, metric: &str, sites: usize) -> Result<f64> {
    let (spec, _) = args.build()?;
    match metric {
        "gap" | "indirect" => {
            let grid = make_grid(&spec, 1025)?;
            let gap = krein_gap(&spec, &grid)?;
            Ok(if metric == "gap" { gap.direct } else { gap.indirect })
        }
        "energy" => {
            let grid = make_grid(&spec, 1025)?;
            qpv_energy_density(&spec, &grid)
        }
        "ee" | "en" => {
            let cm = finite_cm(&spec, sites)?;
            let b = symmetric_bisection(sites);
            if metric == "ee" {
                entanglement_entropy(&cm, b)
            } else {
                log_negativity(&cm, b)
            }
        }
        _ => unreachable!("validated metric"),
    }
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

pub fn verify(all: bool, seed: u64) -> Result<()> {
    let builtins = [
        ("harmonic", build_model(ModelParams::Harmonic { omega: 1.0, j: 0.375 })?),
        ("imaghop", build_model(ModelParams::ImagHop { omega: 1.0, j: 0.375, gamma: 0.4 })?),
        (
            "interpolation",
            build_model(ModelParams::Interpolation { omega: 1.0, j: 2.0, delta: 1.0, s: 0.4 })?,
        ),
        (
            "double",
            build_model(ModelParams::DoubleChain { omega1: 0.5, omega2: 0.5, k1: 1.0, k2: 2.0 })?,
        ),
    ];
    let sizes: &[usize] = if all { &[8, 16, 64] } else { &[8, 16] };
    let spec_count = if all { 40 } else { 10 };

    let mut failures = 0usize;
    let mut report = |name: String, worst: f64, tol: f64| {
        let ok = worst <= tol;
        if !ok {
            failures += 1;
        }
        println!(
            "{:<58} {:>9.2e} (tol {:>7.1e})  {}",
            name,
            worst,
            tol,
            if ok { "PASS" } else { "FAIL" }
        );
    };

    // dense ring spectra match the union of Bloch spectra
    let mut worst: f64 = 0.0;
    for (_, spec) in &builtins {
        for &n in sizes {
            worst = worst.max(ring::spectral_consistency(spec, n)?);
        }
    }
    report("ring spectra vs momentum-space union".into(), worst, 1e-10);

    // ring covariance equals the momentum-space assembly
    let mut worst: f64 = 0.0;
    for (_, spec) in &builtins {
        for &n in sizes {
            let direct = finite_cm(spec, n)?;
            let oracle = ring::ring_qpv_cm(&ring::build_ring(spec, n)?)?;
            worst = worst.max(direct.gamma.sub(&oracle.gamma).max_abs());
        }
    }
    report("ring covariance vs momentum-space assembly".into(), worst, 1e-10);

    // discrete Fourier block identity of the ring matrix
    let mut worst: f64 = 0.0;
    for (_, spec) in &builtins {
        worst = worst.max(ring::dft_block_residual(spec, 12)?);
    }
    report("ring matrix block-diagonalizes under the DFT".into(), worst, 1e-12);

    // projector identities on random stable models
    let mut rng = sample::rng(seed);
    let mut worst: f64 = 0.0;
    use qbh::linalg::{C64, CMat};
    for case in 0..spec_count {
        let bands = 1 + case % 2;
        let spec = sample::random_stable_spec(&mut rng, bands, 0.2);
        let tol = qbh::spectral::Tolerances::for_spec(&spec);
        let t3 = qbh::spectral::tau3(bands);
        let id = CMat::identity(2 * bands);
        // deterministic low-discrepancy momenta; no extra rng needed here
        let k = std::f64::consts::PI * (2.0 * ((case as f64) * 0.618_033_988_75).fract() - 1.0);
        let sp = qbh::spectral::diagonalize(&qbh::spectral::eval_bloch(&spec, &[k]), &tol)?;
        let p = qbh::correlations::krein_projector(&sp)?.p;
        worst = worst.max(p.mul(&p).sub(&p).max_abs());
        worst = worst.max(t3.mul(&p.adjoint()).mul(&t3).sub(&p).max_abs());
        let c = qbh::correlations::qpv_cm_momentum(&spec, &[k], &tol)?.c_bosonic;
        worst = worst
            .max(c.sub(&p.scale(C64::new(2.0, 0.0)).sub(&id).mul(&t3)).max_abs());
    }
    report(format!("projector identities ({spec_count} random models)"), worst, 1e-11);

    // finite chains are pure physical states
    let mut worst_purity: f64 = 0.0;
    let mut worst_uncert: f64 = 0.0;
    for (_, spec) in &builtins {
        let cm = finite_cm(spec, 32)?;
        worst_purity = worst_purity.max(qbh::gaussian::purity_residual(&cm.gamma));
        worst_uncert = worst_uncert.max(-qbh::gaussian::uncertainty_min_eig(&cm.gamma));
    }
    report("finite covariances: purity residual".into(), worst_purity, 1e-9);
    report("finite covariances: uncertainty violation".into(), worst_uncert.max(0.0), 1e-10);

    // quadrature grid-doubling stability of reported correlators
    let spec = &builtins[0].1;
    let a = real_space_cm(spec, 30, &QuadratureSettings { start_points: 256, ..Default::default() })?;
    let b = real_space_cm(spec, 30, &QuadratureSettings { start_points: 512, ..Default::default() })?;
    let mut worst: f64 = 0.0;
    for r in 0..=30 {
        for block in [CmBlock::Xx, CmBlock::Pp, CmBlock::Xp] {
            worst = worst.max((a.value(block, r) - b.value(block, r)).abs());
        }
    }
    report("correlators stable under grid doubling".into(), worst, 1e-10);

    if failures > 0 {
        eprintln!("{failures} check(s) failed");
        std::process::exit(3);
    }
    Ok(())
}
