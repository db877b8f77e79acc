//! JSON reports and the trajectory CSV.

use ddae_core::chebyshev::cgl_nodes;
use ddae_core::{
    build_backward_system, build_split, check_index3_uniqueness, check_regularity, classify,
    construct_probe_history, expand_hidden_delays, method_of_steps, spectral_abscissa, splicing_report,
    assess_exponential_stability, ClassificationReport, ConditionCheck, DdaeError, DdaeSystem, Field, FreeValues,
    LegacyClass, ProbeTarget, PropagationKind, RankPolicy, RegularityVerdict, SearchBox, SegmentSolution, Side,
    SolverConfig, SplicingReport, StepsOutcome,
};
use serde_json::{json, Value};

use crate::problem::{matrix_out, pieces_out, vector_in, vector_out, FieldTag, HistoryFragment, Scalar};
use crate::{CliError, InconsistentMode, ProbeSide, SCHEMA};

fn kind_str(k: PropagationKind) -> &'static str {
    match k {
        PropagationKind::Smoothing => "smoothing",
        PropagationKind::DiscontinuityInvariant => "discontinuity_invariant",
        PropagationKind::DeSmoothing => "de_smoothing",
    }
}

fn legacy_str(l: LegacyClass) -> &'static str {
    match l {
        LegacyClass::Retarded => "retarded",
        LegacyClass::Neutral => "neutral",
        LegacyClass::Advanced => "advanced",
    }
}

fn check_json(c: &ConditionCheck) -> Value {
    json!({ "holds": c.holds, "residual": c.residual, "tolerance": c.tolerance })
}

fn splicing_json(r: &SplicingReport) -> Value {
    json!({
        "admissible": check_json(&r.admissible),
        "smooth_c1": check_json(&r.smooth_c1),
        "smooth_c2": check_json(&r.smooth_c2),
        "kappa_observed": r.kappa_observed,
    })
}

fn classification_json(c: &ClassificationReport) -> Value {
    json!({
        "kind": kind_str(c.propagation.kind),
        "nu_D": c.propagation.nu_d,
        "first_violating_k": c.propagation.first_violating_k,
        "horizon_dependent_note": c.propagation.horizon_dependent_note,
        "evidence": {
            "n_pow_ba": c.evidence.n_pow_ba,
            "ba2_pow": c.evidence.ba2_pow,
        },
    })
}

fn header(command: &str, field: FieldTag) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema".into(), json!(SCHEMA));
    m.insert("command".into(), json!(command));
    m.insert("field".into(), json!(field));
    m
}

pub fn analyze<T: Field>(sys: &DdaeSystem<T>) -> Result<Value, CliError> {
    let policy = RankPolicy::default();
    let regularity = match check_regularity(sys.pencil(), &policy) {
        RegularityVerdict::Regular { witness, det_magnitude } => {
            json!({ "regular": true, "witness": witness, "det_magnitude": det_magnitude })
        }
        RegularityVerdict::Singular { .. } => return Err(CliError::Irregular),
    };
    let split = build_split(sys, &policy)?;
    let class = classify(&split, sys.horizon(), &policy);
    let idx3 = check_index3_uniqueness(&split, &policy);
    let backward = build_backward_system(sys, &policy)?;
    let hidden = match expand_hidden_delays(&split, sys.horizon(), &policy) {
        Ok(ex) => json!({ "nu_D": ex.nu_d, "delay_count": ex.d_k.len() }),
        Err(DdaeError::NotSmoothingType) => Value::Null,
        Err(e) => return Err(e.into()),
    };
    let history = splicing_json(&splicing_report(sys, &split)?);

    let mut m = header("analyze", FieldTag::of::<T>());
    m.insert("dimension".into(), json!(sys.dim()));
    m.insert("regularity".into(), regularity);
    m.insert("n_d".into(), json!(split.n_d()));
    m.insert("n_a".into(), json!(split.n_a()));
    m.insert("nu".into(), json!(split.nu()));
    m.insert("rank_ambiguous".into(), json!(split.qwf.rank_ambiguous));
    m.insert("reconstruction_residual".into(), json!(split.qwf.reconstruction_residual));
    m.insert("propagation".into(), classification_json(&class));
    m.insert("legacy".into(), json!(legacy_str(class.legacy)));
    m.insert("cross_check".into(), json!(class.consistent));
    m.insert(
        "index3_uniqueness".into(),
        json!({
            "index_at_most_3": idx3.index_at_most_3,
            "n_ba2": idx3.n_ba2,
            "n_ba2_zero": idx3.n_ba2_zero,
            "n2_ba1_bd2": idx3.n2_ba1_bd2,
            "n2_ba1_bd2_zero": idx3.n2_ba1_bd2_zero,
            "applicable": idx3.applicable,
        }),
    );
    m.insert(
        "backward".into(),
        json!({
            "regular": backward.regular,
            "propagation": backward.classification.as_ref().map(|c| kind_str(c.propagation.kind)),
            "legacy": backward.classification.as_ref().map(|c| legacy_str(c.legacy)),
        }),
    );
    m.insert("hidden_delays".into(), hidden);
    m.insert("history".into(), history);
    Ok(Value::Object(m))
}

pub struct SolveOutput {
    pub csv: String,
    pub ledger: Value,
    pub inconsistent: bool,
}

fn csv_header(n: usize, complex: bool) -> String {
    let mut cols = vec!["t".to_string()];
    for i in 1..=n {
        if complex {
            cols.push(format!("x{i}_re"));
            cols.push(format!("x{i}_im"));
        } else {
            cols.push(format!("x{i}"));
        }
    }
    cols.push("side".into());
    cols.join(",")
}

/// Rows at the collocation nodes of every sub-interval. The start of a
/// segment is written with side `R`, its end with side `L`, so every knot
/// appears twice.
fn segment_rows<T: Field>(seg: &SegmentSolution<T>, degree: usize, out: &mut String) -> Result<(), CliError> {
    let (a, b) = (seg.start(), seg.end());
    let mut ts: Vec<f64> = Vec::new();
    for piece in &seg.x.pieces {
        for t in cgl_nodes(piece.a, piece.b, degree) {
            if ts.last().is_none_or(|&last| t > last) {
                ts.push(t);
            }
        }
    }
    for t in ts {
        let (side, label) = if t == a {
            (Side::Right, "R")
        } else if t == b {
            (Side::Left, "L")
        } else {
            (Side::Right, "")
        };
        let x = seg.evaluate(t, 0, side)?;
        let mut row = format!("{t:e}");
        for v in x.iter() {
            let c = v.to_c64();
            if T::IS_COMPLEX {
                row.push_str(&format!(",{:e},{:e}", c.re, c.im));
            } else {
                row.push_str(&format!(",{:e}", c.re));
            }
        }
        row.push(',');
        row.push_str(label);
        out.push_str(&row);
        out.push('\n');
    }
    Ok(())
}

fn ledger_json<T: Field>(outcome: &StepsOutcome<T>, mode: InconsistentMode) -> Value {
    let entries: Vec<Value> = outcome
        .ledger
        .entries
        .iter()
        .filter(|e| mode == InconsistentMode::Record || !e.inconsistent_restart)
        .map(|e| {
            json!({
                "knot": e.knot,
                "time": e.time,
                "matched_order": e.matched_order,
                "first_jump_order": e.first_jump_order,
                "jump_norm": e.jump_norm,
                "jump_vector": e.jump_vector.as_ref().map(vector_out),
                "transformed_jump": e.transformed_jump.as_ref().map(vector_out),
                "inconsistent": e.inconsistent_restart,
            })
        })
        .collect();
    let breakdown = outcome.breakdown.as_ref().map(|b| {
        json!({
            "segment": b.segment,
            "time": b.time,
            "residual": b.residual,
            "tolerance": b.tolerance,
            "jump_norm": b.jump_vector.norm(),
        })
    });
    let mut m = header("solve", FieldTag::of::<T>());
    m.insert("k_max".into(), json!(outcome.ledger.k_max));
    m.insert("tol_jump".into(), json!(outcome.ledger.tol_jump));
    m.insert("completed".into(), json!(outcome.completed()));
    m.insert("segments".into(), json!(outcome.trajectory.segments.len()));
    m.insert("knots".into(), Value::Array(entries));
    m.insert("breakdown".into(), breakdown.unwrap_or(Value::Null));
    Value::Object(m)
}

pub fn solve<T: Field>(
    sys: &DdaeSystem<T>,
    degree: usize,
    kmax: Option<usize>,
    mode: InconsistentMode,
) -> Result<SolveOutput, CliError> {
    let config = SolverConfig { degree, k_max: kmax, ..SolverConfig::default() };
    let split = build_split(sys, &config.policy)?;
    let outcome = method_of_steps(sys, &split, &config)?;
    let mut csv = csv_header(sys.dim(), T::IS_COMPLEX);
    csv.push('\n');
    for seg in outcome.trajectory.all_segments() {
        segment_rows(seg, degree, &mut csv)?;
    }
    Ok(SolveOutput { csv, ledger: ledger_json(&outcome, mode), inconsistent: !outcome.completed() })
}

fn root_json(l: num_complex::Complex64, residual: f64) -> Value {
    json!({ "re": l.re, "im": l.im, "residual": residual })
}

pub fn stability<T: Field>(
    sys: &DdaeSystem<T>,
    re_min: Option<f64>,
    re_max: Option<f64>,
    im_max: Option<f64>,
    grid: Option<usize>,
) -> Result<Value, CliError> {
    let mut bx = SearchBox::default_for(sys);
    if let Some(x) = re_min {
        bx.re_min = x;
    }
    if let Some(x) = re_max {
        bx.re_max = x;
    }
    if let Some(x) = im_max {
        bx.im_max = x;
        if T::IS_COMPLEX {
            bx.im_min = -x;
        }
    }
    if let Some(g) = grid {
        bx.n_re = g;
        bx.n_im = g;
    }
    let policy = RankPolicy::default();
    let class = classify(&build_split(sys, &policy)?, sys.horizon(), &policy);
    let mut m = header("stability", FieldTag::of::<T>());
    m.insert(
        "search_box".into(),
        json!({
            "re_min": bx.re_min, "re_max": bx.re_max, "im_min": bx.im_min, "im_max": bx.im_max,
            "n_re": bx.n_re, "n_im": bx.n_im,
        }),
    );
    m.insert("propagation".into(), json!(kind_str(class.propagation.kind)));
    match spectral_abscissa(sys, &bx) {
        Ok(report) => {
            let verdict = assess_exponential_stability(&class, &report, 1e-6);
            m.insert("alpha".into(), json!(report.alpha));
            m.insert(
                "rightmost_roots".into(),
                Value::Array(report.rightmost_roots.iter().map(|&(l, r)| root_json(l, r)).collect()),
            );
            m.insert("roots".into(), Value::Array(report.roots.iter().map(|&(l, r)| root_json(l, r)).collect()));
            m.insert("box_limited".into(), json!(report.box_limited));
            m.insert("verdict".into(), json!(verdict.as_str()));
        }
        Err(DdaeError::NoRootsFound) => {
            m.insert("alpha".into(), Value::Null);
            m.insert("rightmost_roots".into(), json!([]));
            m.insert("roots".into(), json!([]));
            m.insert("box_limited".into(), json!(false));
            m.insert("verdict".into(), json!("no_roots_found"));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(Value::Object(m))
}

pub fn hidden_delays<T: Field>(sys: &DdaeSystem<T>) -> Result<Value, CliError> {
    let policy = RankPolicy::default();
    let split = build_split(sys, &policy)?;
    let mut m = header("hidden-delays", FieldTag::of::<T>());
    match expand_hidden_delays(&split, sys.horizon(), &policy) {
        Ok(ex) => {
            let tau = sys.tau();
            m.insert("applicable".into(), json!(true));
            m.insert("nu_D".into(), json!(ex.nu_d));
            m.insert("delays".into(), json!((0..ex.d_k.len()).map(|k| (k + 1) as f64 * tau).collect::<Vec<_>>()));
            m.insert("J".into(), json!(matrix_out(&ex.j)));
            m.insert("D".into(), json!(ex.d_k.iter().map(matrix_out).collect::<Vec<_>>()));
            m.insert("theta".into(), json!(pieces_out(&ex.theta)));
        }
        Err(DdaeError::NotSmoothingType) => {
            let class = classify(&split, sys.horizon(), &policy);
            m.insert("applicable".into(), json!(false));
            m.insert("propagation".into(), json!(kind_str(class.propagation.kind)));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(Value::Object(m))
}

pub fn check_history<T: Field>(sys: &DdaeSystem<T>) -> Result<Value, CliError> {
    let split = build_split(sys, &RankPolicy::default())?;
    let mut m = header("check-history", FieldTag::of::<T>());
    if let Value::Object(h) = splicing_json(&splicing_report(sys, &split)?) {
        m.extend(h);
    }
    Ok(Value::Object(m))
}

pub fn probe<T: Field>(
    sys: &DdaeSystem<T>,
    order: usize,
    side: ProbeSide,
    target: &str,
    seed: Option<u64>,
) -> Result<HistoryFragment, CliError> {
    let entries: Vec<Scalar> =
        serde_json::from_str(target).map_err(|e| CliError::Input(format!("target must be a JSON array: {e}")))?;
    let v = vector_in::<T>(&entries)?;
    let split = build_split(sys, &RankPolicy::default())?;
    let target = match side {
        ProbeSide::Slow => ProbeTarget::Slow(v),
        ProbeSide::Fast => ProbeTarget::Fast(v),
    };
    let free = seed.map_or(FreeValues::Zero, FreeValues::Seeded);
    let phi = construct_probe_history(&split, order, &target, free)?;
    Ok(HistoryFragment { field: FieldTag::of::<T>(), history: pieces_out(&phi) })
}
