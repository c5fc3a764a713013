//! Task execution: turns a resolved config into in-memory artifacts.

use std::panic::{catch_unwind, AssertUnwindSafe};

use opplab_core::analytic::YModel;
use opplab_core::expansion::expand;
use opplab_core::law::{
    as_convergence_diag, p_hat_column, prob_convergence_diag, run_series, strictly_decreasing, validate_weights,
    ProbTable, SeriesConfig, StatSpec, TheoremId, TriangularArray, Weights,
};
use opplab_core::rational::{format_rational, parse_rational};
use opplab_core::sampler::{sample_trajectory_with, RSeries};
use opplab_core::stats::median;
use opplab_core::verify::{
    verify_cov_bound, verify_dominance, verify_moment_bound, verify_second_moment, verify_tail_sum,
    verify_trunc_moments, LemmaReport, McConfig,
};
use opplab_core::{reconstruct, Error, ModelSpec, RngStreamKey, Verdict};
use serde_json::json;

use crate::config::{
    resolved_horizon, sampler_options, ExpandTask, LawTask, LemmaId, Resolved, SampleTask, TaskConfig, VerifyTask,
};
use crate::output::{fmt_f64, json_bytes, Artifacts, Csv, RESULTS, SUMMARY};

/// Test hook: the sample task panics on this stream id.
pub const PANIC_ENV: &str = "OPPLAB_PANIC_AT_STREAM";

pub fn run_task(r: &Resolved) -> opplab_core::Result<Artifacts> {
    let seed = r.config.seed();
    match &r.config.task {
        TaskConfig::Expand(t) => run_expand(t),
        TaskConfig::Sample(t) => run_sample(&r.model, t, seed),
        TaskConfig::Verify(t) => run_verify(&r.model, t, seed),
        TaskConfig::Law(t) => run_law(&r.model, t, seed),
    }
}

fn run_expand(t: &ExpandTask) -> opplab_core::Result<Artifacts> {
    let x = parse_rational(&t.x)?;
    let seq = expand(&x, t.scheme, t.max_digits)?;
    let mut digits = String::new();
    let mut csv = Csv::new(&["index", "digit"]);
    for (i, d) in seq.digits.iter().enumerate() {
        digits.push_str(&d.to_string());
        digits.push('\n');
        csv.row([(i + 1).to_string(), d.to_string()]);
    }
    let recon = reconstruct(&seq, seq.digits.len())?;
    let summary = json!({
        "task": "expand",
        "scheme": t.scheme,
        "x": format_rational(&x),
        "digits": seq.digits.len(),
        "terminated": seq.terminated,
        "reconstruction": format_rational(&recon),
        "defect": format_rational(&(&x - &recon)),
    });
    let mut art = Artifacts::default();
    art.add("digits.txt", digits.into_bytes());
    art.add(RESULTS, csv.into_bytes());
    art.add(SUMMARY, json_bytes(&summary));
    Ok(art)
}

fn panic_stream() -> Option<u64> {
    std::env::var(PANIC_ENV).ok().and_then(|s| s.parse().ok())
}

fn run_sample(model: &ModelSpec, t: &SampleTask, seed: u64) -> opplab_core::Result<Artifacts> {
    use rayon::prelude::*;
    let opts = sampler_options(t.mode, t.v_bits);
    let hook = panic_stream();
    let outcomes: Vec<_> = (0..t.replications)
        .into_par_iter()
        .map(|s| {
            catch_unwind(AssertUnwindSafe(|| {
                if hook == Some(s) {
                    panic!("injected failure on stream {s}");
                }
                sample_trajectory_with(model, t.n, RngStreamKey::new(seed, s), opts)
            }))
        })
        .collect();
    let mut csv = Csv::new(&["stream_id", "j", "B_j", "R_j"]);
    let mut art = Artifacts::default();
    let mut failed_streams = Vec::new();
    let mut capped = Vec::new();
    let mut log_digits = 0usize;
    for (s, out) in outcomes.into_iter().enumerate() {
        let traj = match out {
            Err(_) => {
                failed_streams.push(s);
                continue;
            }
            Ok(Ok(traj)) => traj,
            Ok(Err(Error::CappedTrajectory { prefix, cap_bits })) => {
                capped.push(json!({"stream_id": s, "digits": prefix.b.len(), "cap_bits": cap_bits}));
                *prefix
            }
            Ok(Err(e)) => return Err(e),
        };
        for (i, b) in traj.b.iter().enumerate() {
            if !b.is_exact() {
                log_digits += 1;
            }
            let r = match &traj.r {
                RSeries::Exact(v) => v.get(i).map(format_rational),
                RSeries::Fast(v) => v.get(i).map(|x| fmt_f64(*x)),
            };
            csv.row([s.to_string(), (i + 1).to_string(), b.to_string(), r.unwrap_or_default()]);
        }
    }
    art.partial = !failed_streams.is_empty();
    let summary = json!({
        "task": "sample",
        "model": model.name,
        "n": t.n,
        "replications": t.replications,
        "mode": t.mode,
        "v_bits": t.v_bits,
        "log_form_digits": log_digits,
        "capped_streams": capped,
        "failed_streams": failed_streams,
    });
    art.add(RESULTS, csv.into_bytes());
    art.add(SUMMARY, json_bytes(&summary));
    Ok(art)
}

fn verify_report(model: &ModelSpec, t: &VerifyTask, seed: u64) -> opplab_core::Result<LemmaReport> {
    let mc = McConfig {
        seed,
        samples: t.samples,
        opts: sampler_options(t.mode, t.v_bits),
    };
    let weights = || t.weights.as_ref().expect("validated").scheme();
    match t.lemma {
        LemmaId::Dominance => verify_dominance(model, &t.x_grid, t.index, &mc),
        LemmaId::TruncMoments => verify_trunc_moments(model, &t.q_grid, &t.t_grid, t.index, &mc),
        LemmaId::TailSum => verify_tail_sum(model, &weights()?, &t.n_grid, &mc),
        LemmaId::MomentBound => verify_moment_bound(
            model,
            &weights()?,
            t.p.expect("validated"),
            t.l_prime.expect("validated"),
            &t.n_grid,
            &mc,
        ),
        LemmaId::SecondMoment => verify_second_moment(model, &weights()?, &t.n_grid, &mc),
        LemmaId::CovBound => verify_cov_bound(model, &t.pairs, t.p.expect("validated"), &mc),
    }
}

/// `k=v;k=v` rendering of row inputs.
pub fn inputs_field(inputs: &std::collections::BTreeMap<String, f64>) -> String {
    inputs
        .iter()
        .map(|(k, v)| format!("{k}={}", fmt_f64(*v)))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn report_csv(rep: &LemmaReport) -> Vec<u8> {
    let mut csv = Csv::new(&["lemma_id", "kind", "inputs", "lhs", "rhs", "margin", "se", "judged", "pass", "note"]);
    for r in &rep.rows {
        csv.row([
            rep.lemma_id.clone(),
            r.kind.clone(),
            inputs_field(&r.inputs),
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.margin),
            fmt_f64(r.se),
            r.judged.to_string(),
            r.passes().to_string(),
            r.note.clone(),
        ]);
    }
    csv.into_bytes()
}

fn run_verify(model: &ModelSpec, t: &VerifyTask, seed: u64) -> opplab_core::Result<Artifacts> {
    let rep = verify_report(model, t, seed)?;
    let failing = rep.failing_rows().count();
    let summary = json!({
        "task": "verify",
        "lemma_id": rep.lemma_id,
        "model": rep.model,
        "grid": rep.grid,
        "verdict": rep.verdict.to_string(),
        "rows": rep.rows.len(),
        "judged_rows": rep.rows.iter().filter(|r| r.judged).count(),
        "failing_rows": failing,
        "parameters": rep.parameters,
        "notes": rep.notes,
        "seed": rep.seed,
        "samples": rep.samples,
    });
    let mut art = Artifacts {
        failed: rep.verdict == Verdict::Fail,
        verdict: Some(rep.verdict.to_string()),
        ..Artifacts::default()
    };
    art.add("report.json", json_bytes(&rep));
    art.add(RESULTS, report_csv(&rep));
    art.add(SUMMARY, json_bytes(&summary));
    Ok(art)
}

fn law_spec(model: &ModelSpec, t: &LawTask) -> opplab_core::Result<StatSpec> {
    let weights = || t.weights.as_ref().expect("validated").scheme();
    Ok(match t.theorem {
        TheoremId::Thm1 => StatSpec::Thm1 { w: weights()? },
        TheoremId::Thm2 => StatSpec::Thm2 { w: weights()? },
        TheoremId::Thm3 => StatSpec::Thm3 { w: weights()? },
        TheoremId::Thm4 => StatSpec::Thm4 { arr: array(t)? },
        TheoremId::Thm5 => StatSpec::Thm5 {
            beta: t.beta.expect("validated"),
            p: t.p.expect("validated"),
            rho: t.rho.expect("validated"),
        },
        TheoremId::Lemma3 => {
            return Err(Error::Config(format!("{} has no statistic for model {}", t.theorem, model.name)));
        }
    })
}

fn array(t: &LawTask) -> opplab_core::Result<TriangularArray> {
    let a = t.array.as_ref().expect("validated");
    let top = resolved_horizon(t).max(t.n_grid.last().copied().unwrap_or(0));
    TriangularArray::new(a.scale, a.n_exp, a.n_log_exp, a.j_exp, a.m_exp, top as usize)
}

fn law_validation(model: &ModelSpec, t: &LawTask) -> opplab_core::Result<opplab_core::law::TrendReport> {
    let horizon = resolved_horizon(t);
    let f = model.f.at(1).clone();
    let alpha = model.alpha_meta.unwrap_or(f.alpha());
    let y = YModel::new(f);
    match t.theorem {
        TheoremId::Thm4 => {
            let arr = array(t)?;
            validate_weights(Weights::Array(&arr), alpha, t.theorem, horizon, None, Some(&y))
        }
        TheoremId::Thm5 => {
            let rho = t.rho.expect("validated");
            let w = Weights::StrongLaw {
                beta: t.beta.expect("validated"),
                p: t.p.expect("validated"),
                rho: &rho,
            };
            validate_weights(w, alpha, t.theorem, horizon, None, None)
        }
        _ => {
            let w = t.weights.as_ref().expect("validated").scheme()?;
            validate_weights(Weights::Scheme(&w), alpha, t.theorem, horizon, None, None)
        }
    }
}

fn prob_csv(table: &ProbTable, diag: &str) -> Vec<u8> {
    let mut csv = Csv::new(&[
        "n",
        "eps",
        "p_hat",
        "ci_lo",
        "ci_hi",
        "exceed",
        "replications",
        "eps_effective",
        "diagnostic",
    ]);
    for r in &table.rows {
        csv.row([
            r.n.to_string(),
            fmt_f64(r.eps),
            fmt_f64(r.p_hat),
            fmt_f64(r.ci_lo),
            fmt_f64(r.ci_hi),
            r.exceed.to_string(),
            r.replications.to_string(),
            fmt_f64(r.eps_effective),
            diag.to_string(),
        ]);
    }
    csv.into_bytes()
}

fn run_law(model: &ModelSpec, t: &LawTask, seed: u64) -> opplab_core::Result<Artifacts> {
    let validation = law_validation(model, t)?;
    let mut art = Artifacts::default();
    if t.theorem == TheoremId::Lemma3 {
        let summary = json!({"task": "law", "theorem": t.theorem, "validation": validation});
        let mut csv = Csv::new(&["condition", "n", "value"]);
        for c in &validation.conditions {
            for (n, v) in c.n.iter().zip(&c.values) {
                csv.row([c.name.clone(), n.to_string(), fmt_f64(*v)]);
            }
        }
        art.add(RESULTS, csv.into_bytes());
        art.add(SUMMARY, json_bytes(&summary));
        return Ok(art);
    }
    let cfg = SeriesConfig {
        spec: law_spec(model, t)?,
        n_grid: t.n_grid.clone(),
        replications: t.replications,
        seed,
        opts: sampler_options(t.mode, t.v_bits),
        epsilons: t.epsilons.clone(),
        centering_replications: t.centering_replications,
    };
    let series = run_series(model, &cfg)?;
    let (table, diag) = if t.theorem == TheoremId::Thm5 {
        (as_convergence_diag(&series, &t.epsilons), "almost-sure")
    } else {
        (prob_convergence_diag(&series, &t.epsilons), "probability")
    };
    let trends: Vec<_> = t
        .epsilons
        .iter()
        .map(|&e| {
            let col = p_hat_column(&table, e);
            json!({"eps": e, "p_hat": col, "strictly_decreasing": strictly_decreasing(&col)})
        })
        .collect();
    let medians: Vec<f64> = (0..series.n_grid.len())
        .map(|g| median(&series.values.iter().map(|v| v[g].abs()).collect::<Vec<_>>()))
        .collect();
    let mut values = Csv::new(&["stream_id", "n", "value"]);
    for (s, row) in series.values.iter().enumerate() {
        for (n, v) in series.n_grid.iter().zip(row) {
            values.row([s.to_string(), n.to_string(), fmt_f64(*v)]);
        }
    }
    let summary = json!({
        "task": "law",
        "theorem": t.theorem,
        "model": model.name,
        "diagnostic": diag,
        "n_grid": series.n_grid,
        "replications": t.replications,
        "centering": series.centering,
        "centering_se": series.centering_se,
        "median_abs_statistic": medians,
        "trends": trends,
        "warning": table.warning,
        "validation": validation,
    });
    art.add(RESULTS, prob_csv(&table, diag));
    art.add("series.csv", values.into_bytes());
    art.add(SUMMARY, json_bytes(&summary));
    Ok(art)
}
