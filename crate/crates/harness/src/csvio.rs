//! CSV emission with fixed schemas.
//!
//! Every file kind has exactly one header, spelled out as a constant so the
//! golden tests can pin it. Floating-point fields use Rust's shortest
//! round-trip formatting: the printed decimal parses back to the identical
//! bit pattern, which is what makes re-runs byte-comparable.

use replaylab_core::estimators::{EstimatorMethod, EstimatorTrace, VarianceCurve};
use replaylab_core::exact::Rational;
use replaylab_core::moments::LagSeries;

/// Header of a single-run estimate trace.
pub const TRACE_HEADER: &str = "t,eta";
/// Header of the across-seed variance table.
pub const VARIANCE_HEADER: &str = "t,variance,method,n,k";
/// Header of the lag-series table.
pub const LAGS_HEADER: &str = "lag,value,stderr,kind";
/// Header of the exact time-difference kernel table.
pub const KERNEL_HEADER: &str = "tau_prime,prob_num,prob_den";
/// Header of the windowed smoothness summary table.
pub const SMOOTHNESS_HEADER: &str = "method,n,k,p_out,smoothness";

/// Shortest round-trip decimal form of `x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// The `method,n,k` column triple for `method`; the online estimator has no
/// buffer, so its `n` and `k` fields are left empty.
fn method_columns(method: EstimatorMethod) -> String {
    match method.params() {
        Some((n, k)) => format!("{},{n},{k}", method.label()),
        None => format!("{},,", method.label()),
    }
}

/// `t,eta` rows of one trace.
pub fn trace_csv(trace: &EstimatorTrace) -> String {
    let mut out = String::with_capacity(16 * trace.horizon() + 8);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for (t, eta) in trace.times().zip(&trace.eta) {
        out.push_str(&format!("{t},{}\n", fmt_f64(*eta)));
    }
    out
}

/// `t,variance,method,n,k` rows of every curve, in the given order.
pub fn variance_csv(curves: &[(EstimatorMethod, VarianceCurve)]) -> String {
    let rows: usize = curves.iter().map(|(_, c)| c.variance.len()).sum();
    let mut out = String::with_capacity(32 * rows + 8);
    out.push_str(VARIANCE_HEADER);
    out.push('\n');
    for (method, curve) in curves {
        let suffix = method_columns(*method);
        for (t, v) in curve.times().zip(&curve.variance) {
            out.push_str(&format!("{t},{},{suffix}\n", fmt_f64(*v)));
        }
    }
    out
}

/// One labelled series of the lag table. Analytic predictions carry a zero
/// standard error.
pub struct LabeledSeries {
    pub kind: String,
    pub series: LagSeries,
}

/// `lag,value,stderr,kind` rows of every series, in the given order.
pub fn lags_csv(series: &[LabeledSeries]) -> String {
    let mut out = String::new();
    out.push_str(LAGS_HEADER);
    out.push('\n');
    for entry in series {
        let lags = entry.series.lags();
        let values = entry.series.values();
        for (i, (&lag, &value)) in lags.iter().zip(values).enumerate() {
            let se = entry.series.standard_errors().map_or(0.0, |s| s[i]);
            out.push_str(&format!(
                "{lag},{},{},{}\n",
                fmt_f64(value),
                fmt_f64(se),
                entry.kind
            ));
        }
    }
    out
}

/// `tau_prime,prob_num,prob_den` rows of one exact kernel, reduced fractions.
pub fn kernel_csv(weights: &[(i64, Rational)]) -> String {
    let mut out = String::new();
    out.push_str(KERNEL_HEADER);
    out.push('\n');
    for (d, w) in weights {
        out.push_str(&format!("{d},{},{}\n", w.numer(), w.denom()));
    }
    out
}

/// One row of the smoothness summary.
pub struct SmoothnessRow {
    pub method: EstimatorMethod,
    pub p_out: f64,
    pub value: f64,
}

/// `method,n,k,p_out,smoothness` rows, in the given order.
pub fn smoothness_csv(rows: &[SmoothnessRow]) -> String {
    let mut out = String::new();
    out.push_str(SMOOTHNESS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            method_columns(row.method),
            fmt_f64(row.p_out),
            fmt_f64(row.value)
        ));
    }
    out
}

/// Header of the actor-critic snapshot table for a `dim`-dimensional critic:
/// `t,eta,w_0,…,w_{dim−1},theta_norm,projection_active`.
pub fn ac_header(dim: usize) -> String {
    let mut out = String::from("t,eta");
    for i in 0..dim {
        out.push_str(&format!(",w_{i}"));
    }
    out.push_str(",theta_norm,projection_active");
    out
}

/// Snapshot rows of one actor-critic run. `projection_active` is `1` when
/// the clamp moved a coordinate at the snapshot's step and `0` otherwise.
pub fn ac_csv(snapshots: &[replaylab_core::actor_critic::AcSnapshot], dim: usize) -> String {
    let mut out = String::new();
    out.push_str(&ac_header(dim));
    out.push('\n');
    for snap in snapshots {
        debug_assert_eq!(snap.w.len(), dim);
        out.push_str(&format!("{},{}", snap.t, fmt_f64(snap.eta)));
        for w in &snap.w {
            out.push_str(&format!(",{}", fmt_f64(*w)));
        }
        out.push_str(&format!(
            ",{},{}\n",
            fmt_f64(snap.theta_inf_norm),
            u8::from(snap.projection_active)
        ));
    }
    out
}
