//! CSV serialization of graphs, percolation samples, point sets and
//! estimator tables. All writers emit a header row and stable column orders
//! so repeated runs produce byte-identical bodies.

use crate::disorder::PercolationSample;
use crate::graph::WeightedGraph;
use crate::sampler::EstimatorResult;
use std::io::{Result, Write};

/// Adjacency CSV with columns `u,v,coupling,class`.
pub fn write_graph_csv<W: Write>(graph: &WeightedGraph, out: &mut W) -> Result<()> {
    writeln!(out, "u,v,coupling,class")?;
    for e in graph.edges() {
        writeln!(out, "{},{},{},{}", e.u, e.v, fmt(e.coupling), e.class.as_str())?;
    }
    Ok(())
}

/// Percolation occupation CSV with columns `index,open`.
pub fn write_percolation_csv<W: Write>(sample: &PercolationSample, out: &mut W) -> Result<()> {
    writeln!(out, "index,open")?;
    for (i, &b) in sample.occupation().iter().enumerate() {
        writeln!(out, "{},{}", i, b as u8)?;
    }
    Ok(())
}

/// Point set CSV with columns `x,y`.
pub fn write_points_csv<W: Write>(points: &[[f64; 2]], out: &mut W) -> Result<()> {
    writeln!(out, "x,y")?;
    for p in points {
        writeln!(out, "{},{}", fmt(p[0]), fmt(p[1]))?;
    }
    Ok(())
}

/// Estimator table CSV with columns
/// `observable,x,y,mean,stderr,tau_int,n,seed`.
pub fn write_estimator_csv<W: Write>(
    rows: &[(String, String, String, EstimatorResult)],
    seed: u64,
    out: &mut W,
) -> Result<()> {
    writeln!(out, "observable,x,y,mean,stderr,tau_int,n,seed")?;
    for (obs, x, y, e) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            obs,
            x,
            y,
            fmt(e.mean),
            fmt(e.stderr),
            fmt(e.tau_int),
            e.n_samples,
            seed
        )?;
    }
    Ok(())
}

/// Deterministic float formatting (shortest round-trip representation).
pub fn fmt(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}
