//! Subcommand implementations. Every command returns one artifact.

use driftlab::lattice::{self, green_1d};
use driftlab::verify::{self, BoxOptions, ConvergenceReport, SourceSpec};
use driftlab::{perturb, qcore, walk, DriftField, Exec, FieldDescriptor, TorusShape};
use serde_json::json;

use crate::config::*;
use crate::error::CliError;
use crate::output::{fmt_f64, fmt_opt, Artifact, Csv};

type Out = Result<Artifact, CliError>;

pub fn run(cmd: &Command, exec: Exec) -> Out {
    match cmd {
        Command::QCompute(a) => q_compute(a, exec),
        Command::QCompare(a) => q_compare(a, exec),
        Command::McEstimate(a) => mc_estimate(a, exec),
        Command::PerturbScan(a) => perturb_scan(a, exec),
        Command::CounterexampleSearch(a) => counterexample_search(a, exec),
        Command::SymbolLimit(a) => symbol_limit(a, exec),
        Command::Convergence(a) => convergence(a, exec),
        Command::GreenTable(a) => green_table(a),
        Command::QvCheck(a) => qv_check(a, exec),
    }
}

fn build_field(field: &Option<FieldArg>, dims: &Option<Vec<usize>>) -> Result<DriftField, CliError> {
    match field {
        Some(FieldArg(desc)) => Ok(desc.build(dims.as_deref())?),
        None => match dims {
            Some(d) => Ok(DriftField::zero(&TorusShape::new(d)?)),
            None => Err(CliError::validation("config", "either field or dims is required")),
        },
    }
}

fn q_compute(a: &QCompute, exec: Exec) -> Out {
    let b = build_field(&a.field, &a.dims)?;
    let report = qcore::q_report(&b, exec)?;
    report.check()?;
    let mut v = serde_json::to_value(report.summary()).expect("summary serializes");
    v["q"] = json!(report.q());
    Ok(Artifact::Json(v))
}

fn q_compare(a: &QCompare, exec: Exec) -> Out {
    let shape = TorusShape::new(&a.dims)?;
    let count = a.count.unwrap_or(10);
    let frac = a.amplitude.unwrap_or(0.9);
    let seed = a.seed.unwrap_or(0);
    let amp = frac * shape.drift_bound();
    let reports = driftlab::par::try_map_indexed(exec, count as usize, |i| {
        let b = DriftField::random(&shape, amp, seed + i as u64)?;
        let r = qcore::q_report(&b, Exec::Sequential)?;
        r.check()?;
        Ok::<_, driftlab::Error>(r)
    })?;
    let mut csv = Csv::new([
        "seed",
        "q_direct",
        "q_boundary",
        "q_chain",
        "q_closed_1d",
        "q_slab2",
        "q_slab4",
        "max_rel_disagreement",
    ]);
    for (i, r) in reports.iter().enumerate() {
        csv.push(vec![
            (seed + i as u64).to_string(),
            fmt_f64(r.q_direct),
            fmt_f64(r.q_boundary),
            fmt_f64(r.q_chain),
            fmt_opt(r.q_closed_1d),
            fmt_opt(r.q_slab2),
            fmt_opt(r.q_slab4),
            fmt_f64(r.max_rel_disagreement),
        ]);
    }
    Ok(Artifact::Csv(csv))
}

fn mc_estimate(a: &McEstimate, exec: Exec) -> Out {
    let b = build_field(&a.field, &a.dims)?;
    let r = walk::estimate_q_mc(
        &b,
        a.steps.unwrap_or(100_000),
        a.paths.unwrap_or(1_000),
        a.seed.unwrap_or(0),
        exec,
    )?;
    Ok(Artifact::json(&r))
}

fn perturb_scan(a: &PerturbScan, exec: Exec) -> Out {
    let shape = TorusShape::new(&a.dims)?;
    let modes = perturb::scan_modes(&shape, exec);
    let mut header = vec!["k".to_string()];
    header.extend((2..=shape.dim()).map(|j| format!("m{j}")));
    header.extend(["xi1".to_string(), "eigenvalue".to_string()]);
    let mut csv = Csv::new(header);
    for m in &modes {
        let mut row = vec![m.k.to_string()];
        row.extend(m.m.iter().map(|v| v.to_string()));
        row.extend([fmt_f64(m.xi1), fmt_f64(m.eigenvalue)]);
        csv.push(row);
    }
    Ok(Artifact::Csv(csv))
}

fn counterexample_search(a: &CounterexampleSearch, exec: Exec) -> Out {
    let shape = TorusShape::new(&a.dims)?;
    let bound = shape.drift_bound();
    let cx = perturb::construct_counterexample(&shape, a.amplitude.unwrap_or(0.9 * bound))?;
    let best = if a.refine.unwrap_or(true) {
        perturb::refine_counterexample(&cx, a.vertex_amplitude.unwrap_or(0.9996 * bound), exec)?
    } else {
        cx.clone()
    };
    Ok(Artifact::Json(json!({
        "dims": shape.dims(),
        "q": best.q,
        "excess": best.q - bound,
        "amplitude": best.amplitude,
        "refined": best != cx,
        "mode": best.mode,
        "mode_q": cx.q,
        "mode_amplitude": cx.amplitude,
        "field": FieldDescriptor::from_field(&best.field),
        "half_values_digest": best.field.digest(),
    })))
}

fn report_csv(r: &ConvergenceReport) -> Artifact {
    let mut csv = Csv::new(["epsilon", "sup_error", "observed_order"]);
    for (i, (&e, &s)) in r.epsilons.iter().zip(&r.sup_errors).enumerate() {
        let order = if i == 0 {
            String::new()
        } else {
            fmt_f64(r.observed_orders[i - 1])
        };
        csv.push(vec![fmt_f64(e), fmt_f64(s), order]);
    }
    Artifact::Csv(csv)
}

fn symbol_limit(a: &SymbolLimit, exec: Exec) -> Out {
    let b = build_field(&a.field, &a.dims)?;
    let eps = a.epsilons.clone().unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]);
    let r = verify::symbol_limit_report(&b, &a.xi, &eps, exec)?;
    Ok(report_csv(&r))
}

fn convergence(a: &Convergence, exec: Exec) -> Out {
    let b = build_field(&a.field, &a.dims)?;
    let center = a.center.clone().unwrap_or_else(|| vec![0.0; b.dim()]);
    let f = SourceSpec::gaussian(a.width.unwrap_or(1.0), &center)?;
    let eps = a.epsilons.clone().unwrap_or_else(|| vec![0.1, 0.05, 0.025]);
    let mut opts = BoxOptions::default();
    if let Some(t) = a.tol {
        opts.tol = t;
    }
    if let Some(m) = a.max_unknowns {
        opts.max_unknowns = m;
    }
    let q = qcore::q_value(&b)? * a.q_scale.unwrap_or(1.0);
    let r = verify::convergence_report_with_q(&b, &f, &eps, q, &opts, exec)?;
    Ok(report_csv(&r))
}

fn green_table(a: &GreenTable) -> Out {
    let ymax = a.ymax.unwrap_or(10);
    if !(1..=1000).contains(&ymax) {
        return Err(CliError::validation("invalid", format!("ymax must lie in 1..=1000, got {ymax}")));
    }
    let cond = lattice::green_conditions(ymax);
    if !cond.holds() {
        return Err(driftlab::Error::Disagreement("Green's function conditions fail".into()).into());
    }
    let mut csv = Csv::new(["y", "green", "green_4dp", "shifted_laplacian"]);
    for y in 0..=ymax {
        let g = green_1d(y);
        let lap = if y == 0 {
            String::new()
        } else {
            fmt_f64(cond.shifted_laplacian[(y - 1) as usize])
        };
        csv.push(vec![y.to_string(), fmt_f64(g), format!("{g:.4}"), lap]);
    }
    Ok(Artifact::Csv(csv))
}

fn qv_check(a: &QvCheck, exec: Exec) -> Out {
    let dims = a.transverse.clone().unwrap_or_else(|| vec![8]);
    let count = a.count.unwrap_or(200);
    let seed = a.seed.unwrap_or(0);
    let rows = driftlab::par::try_map_indexed(exec, count as usize, |i| {
        let (v, phi) = qcore::qv_sample(&dims, seed + i as u64)?;
        let lpm = qcore::lpm_apply(&v, &phi)?;
        let identity = lpm.identity_residual();
        let localized = qcore::qv_form(&v, &lpm.f)?;
        // Unrelated right-hand side for the <w+ w-> positivity check.
        let free = qcore::qv_form(&v, &phi)?;
        let ww = mean_product(free.form.w_plus.values(), free.form.w_minus.values());
        Ok::<_, driftlab::Error>((localized.value, ww, identity))
    })?;
    let min_qv = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let min_ww = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max_identity = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let ok = min_qv >= -1e-12 && min_ww >= -1e-13 && max_identity <= 1e-12;
    let artifact = Artifact::Json(json!({
        "transverse": dims,
        "count": count,
        "seed": seed,
        "min_q_v": min_qv,
        "min_w_plus_w_minus": min_ww,
        "max_identity_residual": max_identity,
        "holds": ok,
    }));
    if !ok {
        return Err(driftlab::Error::Disagreement(format!(
            "quadratic-form checks failed: min Q_V {min_qv:e}, min <w+w-> {min_ww:e}, identity {max_identity:e}"
        ))
        .into());
    }
    Ok(artifact)
}

fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}
