//! Analytic 2D inverse design at the symmetric-defect parameters: optimal
//! cavity mode, weight search, defect dielectric and hole contours.
//!
//! `cargo run --release --example invert2d -- [n_g] [n_q] [selector] [n_bands] [free]`
//!
//! With `free`, the bulk hole index is scanned over 1.0..=2.2 and the best
//! merit wins.

use std::time::Instant;

use phc_design::inverter::Selector;
use phc_design::pipeline::{invert2d, invert2d_free_index, Invert2dOutcome, Invert2dParams};

fn report(o: &Invert2dOutcome) {
    println!(
        "n_h {:.2}  gap [{:.4}, {:.4}]  ω_m {:.4}  β ({:.3e}, {:.3e})  merit {:.4e}",
        o.hole_index, o.gap[0], o.gap[1], o.omega_m, o.variational.weights.beta_i, o.variational.weights.beta_v, o.merit
    );
    println!(
        "  L {:.3e}  I {:.3e}  V {:.3} a² = {:.3} λ²  rank {}  residual {:.1e}",
        o.q_proxy, o.intensity, o.volume, o.volume_lambda2, o.solve.rank, o.solve.relative_residual
    );
    println!("  r_c {:.3}  recovered hole index {:?}", o.central_radius, o.bulk_hole_index);
    if std::env::var_os("SHOW_ETA").is_some() {
        let g = o.map.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (lo, hi) = o.map.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        println!("  η range [{lo:.3}, {hi:.3}]  level {:.3}", o.map.level);
        for j in (0..ny).rev().step_by(4) {
            let row: String = (0..nx).step_by(2).map(|i| {
                let v = o.map.values[j * nx + i];
                let t = ((v - lo) / (hi - lo) * 9.0).round() as usize;
                char::from(b"0123456789"[t.min(9)])
            }).collect();
            println!("  {row}");
        }
    }
    for h in o.map.holes.iter().filter(|h| !h.touches_edge && h.site[0].abs() + h.site[1].abs() <= 2) {
        println!(
            "    site {:?}  centre ({:+.3}, {:+.3})  axes {:.3}/{:.3}  mean η {:.3}",
            h.site, h.center_x, h.center_y, h.major, h.minor, h.mean_eta
        );
    }
}

fn main() -> phc_design::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_g = args.first().map_or(37, |s| s.parse().unwrap());
    let n_q = args.get(1).map_or(n_g, |s| s.parse().unwrap());
    let mut p = Invert2dParams::symmetric_defect(n_g, n_q)?;
    if let Some(s) = args.get(2) {
        p.selector = s.parse::<Selector>()?;
    }
    if let Some(s) = args.get(3) {
        p.n_bands = s.parse().unwrap();
    }
    let t = Instant::now();
    if args.get(4).is_some_and(|s| s == "free") {
        let candidates: Vec<f64> = (0..=12).map(|i| 1.0 + 0.1 * i as f64).collect();
        let (scan, best) = invert2d_free_index(&p, &candidates)?;
        for (n_h, m) in scan {
            println!("n_h {n_h:.2}  merit {m:.4e}");
        }
        report(&best);
    } else {
        report(&invert2d(&p)?);
    }
    println!("elapsed {:.1} s", t.elapsed().as_secs_f64());
    Ok(())
}
