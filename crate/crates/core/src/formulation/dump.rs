use std::fmt::Write;

use super::qcqp::QuadForm;
use super::NlpProblem;
use crate::network::NetworkCase;

fn bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:e}")
    }
}

fn poly(form: &QuadForm) -> String {
    let mut s = format!("{:e}", form.constant);
    for &(i, a) in &form.linear {
        let _ = write!(s, " {a:+e}*x{i}");
    }
    for &(i, j, q) in &form.quadratic {
        let _ = write!(s, " {q:+e}*x{i}*x{j}");
    }
    s
}

/// Plain-text dump of an NLP.
///
/// ```text
/// nlp <name> vars <n> rows <m> objective <kind>
/// var <index> <name> <lower> <upper> <initial>
/// row <index> <name> <lower> <upper> : <polynomial>
/// obj : <polynomial>
/// ```
///
/// A polynomial is `c ±a*x<i> … ±q*x<i>*x<j>` with every number in
/// scientific notation; bounds may be `inf`/`-inf`.
pub fn dump_nlp(case: &NetworkCase, problem: &NlpProblem) -> String {
    let q = &problem.qcqp;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "nlp {} vars {} rows {} objective {:?}",
        if case.name.is_empty() { "case" } else { &case.name },
        q.n_vars(),
        q.n_rows(),
        problem.objective
    );
    for i in 0..q.n_vars() {
        let _ = writeln!(
            out,
            "var {i} {} {} {} {:e}",
            problem.layout.describe(case, i),
            bound(q.lower[i]),
            bound(q.upper[i]),
            q.initial[i]
        );
    }
    for (r, (c, info)) in q.constraints.iter().zip(&problem.rows).enumerate() {
        let _ = writeln!(
            out,
            "row {r} {} {} {} : {}",
            info.describe(case),
            bound(c.lower),
            bound(c.upper),
            poly(&c.form)
        );
    }
    let _ = writeln!(out, "obj : {}", poly(&q.objective));
    out
}
