use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::*;
use crate::classifier::{classify_with, ClassifyOptions};
use crate::com::{
    escape_exponent, llt_check, recurrence_probe_1d, stable_density, stable_density_com, LltOptions,
};
use crate::lattice::{builtin_lattice, minimal_lattice_1d, minimality_check, support_membership, LatticeFamily, LatticeSpec, MinimalityOptions};
use crate::mc::{estimate_tail_index, occupation_fractions, simulate, SimulationPlan};
use crate::model::{fit_drift_profile, CorrelatedRw, DriftProfile, HalfStripModel, RegularityParams, Tabular};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputEntry {
    pub kind: String,
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// What a run produced. Everything except the timestamps is a function of
/// the scenario hash and the tool version.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario_hash: String,
    pub tool_version: String,
    pub task: Task,
    pub seed: Option<u64>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputEntry>,
    pub summary: Value,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

struct Csv {
    head: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn new(head: Vec<String>) -> Self {
        Self { head, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self, provenance: &str) -> Result<Vec<u8>> {
        let mut out = format!("{provenance}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.head).map_err(csv_err)?;
            for r in &self.rows {
                w.write_record(r).map_err(csv_err)?;
            }
            w.flush()?;
        }
        Ok(out)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn s<T: ToString>(v: T) -> String {
    v.to_string()
}

struct Artifacts {
    report: Value,
    table: Option<Csv>,
    plot: Option<Csv>,
}

fn build_model(spec: &ModelSpec) -> Result<(HalfStripModel, Option<DriftProfile>)> {
    match spec {
        ModelSpec::CorrelatedRw {
            q,
            c_plus,
            c_minus,
            n_steps_memory,
            ..
        } => {
            let crw = CorrelatedRw::new(*q, c_plus.unwrap_or(0.0), c_minus.unwrap_or(0.0), *n_steps_memory)?;
            let profile = crw.drift_profile();
            Ok((HalfStripModel::new(crw), Some(profile)))
        }
        ModelSpec::Tabular { lines, states, defaults } => {
            let rules: Vec<(String, Vec<TabularJump>)> = defaults.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            Ok((HalfStripModel::new(Tabular::new(lines.clone(), states, &rules)?), None))
        }
    }
}

fn resolve_lattice(spec: &LawSpec, law: &IncrementLaw, given: Option<&LatticeInput>) -> Result<LatticeSpec> {
    if let Some(l) = given {
        return LatticeSpec::new(l.h.clone(), l.b.clone());
    }
    match (spec, law) {
        (LawSpec::Ssrw { d }, _) => builtin_lattice(LatticeFamily::Ssrw, *d),
        (LawSpec::LazySsrw { d }, _) => builtin_lattice(LatticeFamily::LazySsrw, *d),
        (LawSpec::HeavyTail { .. }, _) => LatticeSpec::new(vec![vec![1.0]], vec![0.0]),
        (LawSpec::Table { .. }, IncrementLaw::Table(t)) if t.dim() == 1 => minimal_lattice_1d(t),
        _ => Err(Error::schema("lattice", "table laws in d > 1 need an explicit lattice")),
    }
}

fn law_of(sc: &Scenario) -> Result<(&LawSpec, IncrementLaw)> {
    let spec = sc.law.as_ref().ok_or_else(|| Error::schema("law", "missing"))?;
    Ok((spec, build_law(spec)?))
}

fn run_classify(sc: &Scenario, p: &ClassifyParams) -> Result<Artifacts> {
    let spec = sc.model.as_ref().ok_or_else(|| Error::schema("model", "missing"))?;
    let (model, exact) = build_model(spec)?;
    let (mut profile, fit) = match exact {
        Some(prof) => (prof, None),
        None => {
            let f = fit_drift_profile(&model, p.regime, &p.probe_xs)?;
            (f.profile.clone(), Some(f))
        }
    };
    if let Some(order) = p.regularity_p {
        profile = profile.with_regularity(RegularityParams::with_p(order)?)?;
    }
    let opts = ClassifyOptions {
        deadband: p.deadband,
        ..Default::default()
    };
    let report = classify_with(&profile, &opts)?;
    let mut table = Csv::new(
        ["line", "label", "pi", "d", "e_or_c", "var", "a", "c_transformed", "s2_transformed"]
            .map(String::from)
            .to_vec(),
    );
    let labels = model.lines();
    for i in 0..profile.num_lines() {
        let opt = |v: Option<f64>| v.map_or_else(String::new, s);
        table.push(vec![
            s(i),
            labels[i].clone(),
            s(report.pi[i]),
            s(profile.d[i]),
            s(profile.e_or_c[i]),
            s(profile.var[i]),
            opt(report.a.as_ref().map(|a| a[i])),
            opt(report.transformed.as_ref().map(|t| t.c[i])),
            opt(report.transformed.as_ref().map(|t| t.s2[i])),
        ]);
    }
    let fit_json = match &fit {
        Some(f) => json!({ "residuals": f.residuals, "mean_drift": f.mean_drift }),
        None => Value::Null,
    };
    Ok(Artifacts {
        report: json!({ "classification": report, "profile": profile, "fit": fit_json }),
        table: Some(table),
        plot: None,
    })
}

fn run_simulate(sc: &Scenario, p: &SimulateParams) -> Result<Artifacts> {
    let spec = sc.model.as_ref().ok_or_else(|| Error::schema("model", "missing"))?;
    let (model, _) = build_model(spec)?;
    let mut plan = SimulationPlan::new(sc.seed.unwrap_or(0), p.paths, p.steps);
    plan.start = (p.start_x, p.start_line);
    plan.tau_level = p.tau_level;
    plan.checkpoints = p.checkpoints.clone();
    plan.stop_at_tau = p.stop_at_tau;
    let ens = simulate(&model, &plan)?;
    let labels = model.lines();
    let mut head: Vec<String> = ["path_id", "final_x", "final_line", "tau", "max_x"].map(String::from).to_vec();
    head.extend(labels.iter().map(|l| format!("occ_{l}")));
    let mut table = Csv::new(head);
    for path in &ens.paths {
        let mut row = vec![
            s(path.path_id),
            s(path.final_x),
            s(path.final_line),
            path.tau.map_or_else(|| s(-1), s),
            s(path.max_x),
        ];
        row.extend(path.occupation.iter().map(|v| s(*v)));
        table.push(row);
    }
    let means = ens.mean_at_checkpoints();
    let plot = (!p.checkpoints.is_empty()).then(|| {
        let mut c = Csv::new(vec!["n".into(), "mean_x".into()]);
        for (n, m) in p.checkpoints.iter().zip(&means) {
            c.push(vec![s(n), s(m)]);
        }
        c
    });
    let tail = if p.tail_index {
        Some(estimate_tail_index(&ens.tau_samples())?)
    } else {
        None
    };
    Ok(Artifacts {
        report: json!({
            "n_paths": p.paths,
            "n_steps": p.steps,
            "censored_fraction": ens.censored_fraction(),
            "hit_fraction": ens.hit_fraction(p.steps),
            "truncated_mean_tau": ens.truncated_mean_tau(p.steps),
            "occupation": occupation_fractions(&ens),
            "checkpoints": p.checkpoints,
            "mean_at_checkpoints": means,
            "tail": tail,
        }),
        table: Some(table),
        plot,
    })
}

fn run_llt(sc: &Scenario, p: &LltParams) -> Result<Artifacts> {
    let (spec, law) = law_of(sc)?;
    let lattice = resolve_lattice(spec, &law, sc.lattice.as_ref())?;
    let opts = LltOptions {
        chunk: p.chunk,
        ..Default::default()
    };
    let rep = llt_check(&law, &lattice, p.n, p.samples, sc.seed.unwrap_or(0), p.target, &opts)?;
    let d = lattice.dim();
    let mut head: Vec<String> = (1..=d).map(|j| format!("k{j}")).collect();
    head.extend((1..=d).map(|j| format!("x{j}")));
    head.extend(["count", "empirical", "scaled", "density", "discrepancy", "se"].map(String::from));
    let mut table = Csv::new(head);
    let mut plot_head: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    plot_head.extend(["scaled_pmf", "density"].map(String::from));
    let mut plot = Csv::new(plot_head);
    for pt in &rep.points {
        let mut row: Vec<String> = pt.k.iter().map(s).collect();
        row.extend(pt.x.iter().map(s));
        row.extend([s(pt.count), s(pt.empirical), s(pt.scaled), s(pt.density), s(pt.discrepancy), s(pt.se)]);
        table.push(row);
        let mut prow: Vec<String> = pt.x.iter().map(s).collect();
        prow.extend([s(pt.scaled), s(pt.density)]);
        plot.push(prow);
    }
    let mut report = serde_json::to_value(&rep)?;
    if let Some(obj) = report.as_object_mut() {
        obj.remove("points");
        obj.insert("n_points".into(), json!(rep.points.len()));
    }
    Ok(Artifacts {
        report,
        table: Some(table),
        plot: Some(plot),
    })
}

fn run_escape(sc: &Scenario, p: &EscapeParams) -> Result<Artifacts> {
    let (_, law) = law_of(sc)?;
    let fit = escape_exponent(&law, p.n_max, p.checkpoints, p.paths, sc.seed.unwrap_or(0))?;
    let mut table = Csv::new(vec!["path".into(), "slope".into()]);
    for (k, sl) in fit.per_path.iter().enumerate() {
        table.push(vec![s(k), s(sl)]);
    }
    let mut report = serde_json::to_value(&fit)?;
    if let Some(obj) = report.as_object_mut() {
        obj.remove("per_path");
    }
    Ok(Artifacts {
        report,
        table: Some(table),
        plot: None,
    })
}

fn run_recur(sc: &Scenario, p: &RecurParams) -> Result<Artifacts> {
    let (_, law) = law_of(sc)?;
    let seed = sc.seed.unwrap_or(0);
    let probes = (0..p.runs as u64)
        .into_par_iter()
        .map(|k| recurrence_probe_1d(&law, p.x, p.n_max, derive_seed(seed, k)))
        .collect::<Result<Vec<_>>>()?;
    let cps = probes[0].checkpoints.clone();
    let mut table = Csv::new(["run", "n", "running_min", "window_min"].map(String::from).to_vec());
    for (k, pr) in probes.iter().enumerate() {
        for (i, n) in pr.checkpoints.iter().enumerate() {
            table.push(vec![s(k), s(n), s(pr.running_min[i]), s(pr.window_min[i])]);
        }
    }
    let m = probes.len() as f64;
    let mean_run: Vec<f64> = (0..cps.len()).map(|i| probes.iter().map(|p| p.running_min[i]).sum::<f64>() / m).collect();
    let mean_win: Vec<f64> = (0..cps.len()).map(|i| probes.iter().map(|p| p.window_min[i]).sum::<f64>() / m).collect();
    let mut plot = Csv::new(["n", "mean_running_min", "mean_window_min"].map(String::from).to_vec());
    for i in 0..cps.len() {
        plot.push(vec![s(cps[i]), s(mean_run[i]), s(mean_win[i])]);
    }
    Ok(Artifacts {
        report: json!({
            "x": p.x,
            "runs": p.runs,
            "checkpoints": cps,
            "mean_running_min": mean_run,
            "mean_window_min": mean_win,
            "final_running_min": probes.iter().map(|p| *p.running_min.last().unwrap()).collect::<Vec<_>>(),
        }),
        table: Some(table),
        plot: Some(plot),
    })
}

fn run_lattice(sc: &Scenario, p: &LatticeParams) -> Result<Artifacts> {
    let (spec, law) = law_of(sc)?;
    let IncrementLaw::Table(table_law) = &law else {
        return Err(Error::Unsupported("lattice verification needs a finite table law".into()));
    };
    let lattice = resolve_lattice(spec, &law, sc.lattice.as_ref())?;
    let opts = MinimalityOptions {
        grid: p.grid,
        rho: p.rho,
        seed: sc.seed.unwrap_or(0),
        ..Default::default()
    };
    let rep = minimality_check(table_law, &lattice, &opts)?;
    Ok(Artifacts {
        report: json!({
            "lattice": lattice,
            "support_membership": support_membership(table_law, &lattice),
            "minimality": rep,
        }),
        table: None,
        plot: None,
    })
}

fn run_stable(sc: &Scenario, p: &StableParams) -> Result<Artifacts> {
    let heavy = match &sc.law {
        Some(spec @ LawSpec::HeavyTail { .. }) => match build_law(spec)? {
            IncrementLaw::HeavyTail(h) => Some(h),
            _ => None,
        },
        _ => None,
    };
    let alpha = p
        .alpha
        .or(heavy.as_ref().map(|h| h.alpha()))
        .ok_or_else(|| Error::schema("params.alpha", "missing"))?;
    let c = p.c.or(heavy.as_ref().map(|h| h.stable_scale())).unwrap_or(1.0);
    let mut table = Csv::new(["x", "g", "g_com"].map(String::from).to_vec());
    let step = (p.x_max - p.x_min) / (p.points - 1) as f64;
    let mut mass = 0.0;
    for i in 0..p.points {
        let x = p.x_min + step * i as f64;
        let g = stable_density(x, alpha, c)?;
        let gc = stable_density_com(x, alpha, c)?;
        let w = if i == 0 || i + 1 == p.points { 0.5 } else { 1.0 };
        mass += w * g * step;
        table.push(vec![s(x), s(g), s(gc)]);
    }
    Ok(Artifacts {
        report: json!({
            "alpha": alpha,
            "c": c,
            "g0": stable_density(0.0, alpha, c)?,
            "g_com0": stable_density_com(0.0, alpha, c)?,
            "grid_mass": mass,
            "x_range": [p.x_min, p.x_max],
        }),
        table: Some(table),
        plot: None,
    })
}

/// Executes a validated scenario, writing its artifacts under `out_dir`
/// (each atomically) and returning the run record, which is also written
/// as `run.json`.
pub fn run(sc: &Scenario, out_dir: &Path) -> Result<RunRecord> {
    let started = now_ms();
    let hash = scenario_hash(sc)?;
    let wrap = |e: Error| match e {
        e @ Error::Schema { .. } => e,
        e => Error::Task {
            task: sc.task.name().into(),
            source: Box::new(e),
        },
    };
    let arts = match &sc.params {
        TaskParams::Classify(p) => run_classify(sc, p),
        TaskParams::Simulate(p) => run_simulate(sc, p),
        TaskParams::Llt(p) => run_llt(sc, p),
        TaskParams::Escape(p) => run_escape(sc, p),
        TaskParams::Recur(p) => run_recur(sc, p),
        TaskParams::Lattice(p) => run_lattice(sc, p),
        TaskParams::Stable(p) => run_stable(sc, p),
    }
    .map_err(wrap)?;

    let seed_txt = sc.seed.map_or_else(|| "none".to_string(), s);
    let provenance = format!("# seed={seed_txt}, scenario_hash={hash}, tool=halfstrip {TOOL_VERSION}");
    let mut outputs = Vec::new();
    let mut emit = |kind: &str, name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = out_dir.join(name);
        write_atomic(&path, &bytes)?;
        outputs.push(OutputEntry {
            kind: kind.into(),
            path: path.display().to_string(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    };
    let report = json!({
        "task": sc.task,
        "seed": sc.seed,
        "scenario_hash": hash,
        "tool": format!("halfstrip {TOOL_VERSION}"),
        "result": arts.report,
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    emit("report", &sc.outputs.report, text.into_bytes())?;
    if let Some(t) = &arts.table {
        emit("table", &sc.outputs.table, t.render(&provenance)?)?;
    }
    if let Some(p) = &arts.plot {
        emit("plot", &sc.outputs.plot, p.render(&provenance)?)?;
    }
    let record = RunRecord {
        scenario_hash: hash,
        tool_version: TOOL_VERSION.into(),
        task: sc.task,
        seed: sc.seed,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        outputs,
        summary: arts.report,
    };
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    write_atomic(&out_dir.join("run.json"), text.as_bytes())?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_transient_example() {
        let sc = parse_scenario(
            r#"{"task":"classify","model":{"family":"correlated_rw","q":0.7,"c":1.0}}"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let rec = run(&sc, dir.path()).unwrap();
        let c = &rec.summary["classification"];
        assert_eq!(c["verdict"], "Transient");
        assert_eq!(c["theta_star"], 0.0);
        assert!(c["theta_star_raw"].as_f64().unwrap() < 0.0);
        let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
        assert!(csv.starts_with("# seed=none, scenario_hash="));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let sc = parse_scenario(
            r#"{"task":"simulate","seed":5,"model":{"family":"correlated_rw","q":0.7,"c":0.0},
                "params":{"paths":50,"steps":2000,"checkpoints":[100,1000]}}"#,
        )
        .unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run(&sc, a.path()).unwrap();
        run(&sc, b.path()).unwrap();
        for f in ["table.csv", "plot.csv", "report.json"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}
