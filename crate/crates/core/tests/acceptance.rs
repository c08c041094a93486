//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if any fails.
//!
//! The time-dependent criteria share three studies of the cosine benchmark
//! (eps = 0.01, g = sigma = 1, [gamma] = 0, flat wall at -1, M = 4, t_end = 5):
//! the Nx = 128 run, a dt series at Nx = 32 and a joint (dt, Nx) series.

use muskat::diagnostics::{decay_fit, remainder_scan, non_increasing_from, observed_order, Analyzer, DiagnosticsRecord};
use muskat::diffeo::{poisson_extend, transformed_coeffs};
use muskat::dynamics::{evaluate, project_zero_mean, run, DnRefresh, InitialShape, Reference, RunStatus, RunSummary, Scheme, StepperConfig};
use muskat::elliptic::bench::{dn_symbol_error, mixed_manufactured, neumann_manufactured, wedge_angles, wedge_benchmark};
use muskat::elliptic::solve::MixedSystem;
use muskat::remainder::{d2z1_r, d2z2_r, d2z2dz1_r, d3z2_r, dz1_r, dz1dz2_r, dz2_r, r};
use muskat::stationary::{contact_angle, solve_stationary};
use muskat::{GridFn1D, PhysParams, VesselGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

const EPS: f64 = 0.01;
const T_END: f64 = 5.0;
const FIT_WINDOW: [f64; 2] = [2.5, 5.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn benchmark_params() -> PhysParams {
    PhysParams::new(1.0, 1.0, 0.0, 4.0).unwrap()
}

fn benchmark_reference(nx: usize, ny: usize) -> Reference {
    Reference::new(benchmark_params(), &VesselGeometry::flat(-1.0, nx).unwrap(), nx, ny).unwrap()
}

fn benchmark_eta(nx: usize) -> Vec<f64> {
    let mut eta = InitialShape::Cosine { mode: 1 }.sample(nx, EPS);
    project_zero_mean(&mut eta);
    eta.into_values()
}

struct Study {
    nx: usize,
    dt: f64,
    records: Vec<DiagnosticsRecord>,
    summary: RunSummary,
    seconds: f64,
}

fn study(nx: usize, ny: usize, dt: f64) -> Study {
    let start = Instant::now();
    let reference = benchmark_reference(nx, ny);
    let config = StepperConfig { dt, scheme: Scheme::SemiImplicit, dn_refresh: DnRefresh::EveryStep, t_end: T_END, snapshot_stride: 0 };
    let mut analyzer = Analyzer::new(&reference, dt, 0.5);
    let summary = run(&reference, &config, benchmark_eta(nx), &mut |rec| analyzer.push(rec)).unwrap();
    let records = analyzer.finish().unwrap();
    Study { nx, dt, records, summary, seconds: start.elapsed().as_secs_f64() }
}

/// Sup of `|f|` over the complete records of the coarsest study, read off each
/// study at the same times.
fn common_time_sups(series: &[Study], f: impl Fn(&DiagnosticsRecord) -> f64) -> Vec<f64> {
    let coarse = &series[0];
    series
        .iter()
        .map(|s| {
            let ratio = (coarse.dt / s.dt).round() as usize;
            coarse
                .records
                .iter()
                .filter(|r| !r.partial)
                .map(|r| f(&s.records[r.step * ratio]).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

fn fmt_series(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn c1_flat_stationary() -> Outcome {
    let start = Instant::now();
    let st = solve_stationary(&benchmark_params(), &VesselGeometry::flat(-1.0, 256).unwrap(), 256).unwrap();
    let err = st.h_s.values().iter().map(|h| (h - 1.0).abs()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(err <= 1e-8 && st.phi_s == -1.0 && secs < 1.0, format!("|h_s - 1|_inf = {err:.1e}, phi_s = {}, {secs:.3} s", st.phi_s))
}

fn c2_young() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for c in [-0.5, -0.25, 0.25, 0.5] {
        let p = PhysParams::new(1.0, 1.0, c, 4.0).unwrap();
        let st = solve_stationary(&p, &VesselGeometry::flat(-1.0, 256).unwrap(), 256).unwrap();
        worst = worst.max((contact_angle(&st).cos() - c).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-6 && secs < 5.0, format!("max |cos(omega) - [gamma]/sigma| = {worst:.1e}, {secs:.2} s"))
}

fn c3_ode_residual() -> Outcome {
    let p = PhysParams::new(1.0, 1.0, 0.5, 4.0).unwrap();
    let ns = [64, 128, 256, 512];
    let res: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let st = solve_stationary(&p, &VesselGeometry::flat(-1.0, n).unwrap(), n).unwrap();
            st.ode_residual(&p).unwrap().max_abs()
        })
        .collect();
    let orders: Vec<f64> = res.windows(2).map(|w| observed_order(w[0], w[1], 2.0)).collect();
    let pass = orders.iter().all(|o| *o >= 1.9);
    outcome(pass, format!("residuals [{}], orders [{}]", fmt_series(&res), orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", ")))
}

fn c4_coefficients() -> Outcome {
    let reference = benchmark_reference(32, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = [0.0f64; 2];
    for _ in 0..20 {
        let amps: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.02..0.02)).collect();
        let eta = GridFn1D::from_fn(32, |x| amps.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * PI * (x + 1.0) / 2.0).cos()).sum());
        let c = transformed_coeffs(&eta, reference.h_s(), &reference.mesh, &reference.cutoff).unwrap();
        for (a, (s, d)) in c.a_n.iter().zip(c.sigma_n.iter().zip(&c.detj_n)) {
            worst[0] = worst[0].max((a[0] * a[2] - a[1] * a[1] - 1.0).abs());
            let sts = [s[0] * s[0] + s[2] * s[2], s[0] * s[1] + s[2] * s[3], s[1] * s[1] + s[3] * s[3]];
            for k in 0..3 {
                worst[1] = worst[1].max((a[k] - d * sts[k]).abs());
            }
        }
    }
    outcome(worst[0] <= 1e-13 && worst[1] <= 1e-13, format!("max |det A - 1| = {:.1e}, max |A - detJ S^T S| = {:.1e}", worst[0], worst[1]))
}

fn c5_trace() -> Outcome {
    let f = |x: f64| EPS * (PI * (x + 1.0) / 2.0).cos();
    let errs: Vec<f64> = [16, 32, 64, 128]
        .iter()
        .map(|&n| {
            let reference = benchmark_reference(n, 4);
            let eta = GridFn1D::from_fn(n, f);
            let ext = poisson_extend(&eta, reference.h_s(), &reference.mesh).unwrap();
            let h = 2.0 / n as f64;
            (0..n).map(|i| -1.0 + (i as f64 + 0.5) * h).map(|x| (ext.surface_value(x) - f(x)).abs()).fold(0.0, f64::max)
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| observed_order(w[0], w[1], 2.0)).collect();
    outcome(orders.iter().all(|o| *o >= 1.0), format!("midpoint trace errors [{}], orders [{}]", fmt_series(&errs), orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>().join(", ")))
}

fn c6_elliptic() -> Outcome {
    let start = Instant::now();
    let mixed: Vec<(f64, f64)> = [8, 16, 32].iter().map(|&n| mixed_manufactured(n).unwrap()).collect();
    let neu: Vec<f64> = [8, 16, 32].iter().map(|&n| neumann_manufactured(n).unwrap()).collect();
    let mut orders: Vec<f64> = mixed.windows(2).map(|w| (w[0].0 / w[1].0).log2()).collect();
    orders.extend(neu.windows(2).map(|w| (w[0] / w[1]).log2()));
    let smooth = orders.iter().all(|o| (o - 2.0).abs() <= 0.1);
    let wedges: Vec<_> = wedge_angles().iter().map(|&o| wedge_benchmark(o, 64, 64, 1.0).unwrap()).collect();
    let corner = wedges.iter().all(|w| w.relative_error <= 0.05);
    let reference = benchmark_reference(64, 16);
    let mut green = mixed.iter().map(|m| m.1).fold(0.0, f64::max);
    for amp in [0.0, 0.01, 0.05] {
        let mut eta = InitialShape::Cosine { mode: 1 }.sample(64, amp);
        project_zero_mean(&mut eta);
        green = green.max(evaluate(&reference, eta.values()).unwrap().green_defect);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        smooth && corner && green <= 1e-8 && secs < 120.0,
        format!(
            "L2 orders [{}], wedge exponent errors [{}], Green defect {green:.1e}, {secs:.1} s",
            orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", "),
            wedges.iter().map(|w| format!("{:.2}%", 100.0 * w.relative_error)).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c7_dn() -> Outcome {
    let reference = benchmark_reference(64, 16);
    let mut eta = InitialShape::Cosine { mode: 1 }.sample(64, 0.05);
    project_zero_mean(&mut eta);
    let c = reference.coeffs(eta.values()).unwrap();
    let flux = MixedSystem::new(&reference.mesh, &c).unwrap().dn_apply(&vec![1.0; 65]).unwrap();
    let cst = flux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut orders = Vec::new();
    for mode in 1..=4 {
        let e1 = dn_symbol_error(32, 32, mode).unwrap();
        let e2 = dn_symbol_error(64, 64, mode).unwrap();
        orders.push((e1 / e2).log2());
    }
    outcome(
        cst <= 1e-10 && orders.iter().all(|o| *o >= 1.8),
        format!("|DN(1)|_inf = {cst:.1e}, symbol error orders (modes 1-4) [{}]", orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", ")),
    )
}

fn c8_mass(s: &Study) -> Outcome {
    let mass0 = s.records[0].mass;
    let drift = s.records.iter().map(|r| (r.mass - mass0).abs()).fold(0.0, f64::max);
    let done = s.summary.status == RunStatus::Completed;
    outcome(
        done && drift <= 1e-6 * EPS && s.seconds < 120.0,
        format!("Nx = {}, {} records, drift {drift:.1e} (bound {:.0e}), {:.1} s", s.nx, s.records.len(), 1e-6 * EPS, s.seconds),
    )
}

fn c9_energy_identity(series: &[Study]) -> Outcome {
    let sups = common_time_sups(series, |r| r.residual_energy_identity);
    let orders: Vec<f64> = sups.windows(2).map(|w| observed_order(w[0], w[1], 2.0)).collect();
    outcome(
        orders.iter().all(|o| *o >= 0.9),
        format!("sup |r0| at dt = 4e-4, 2e-4, 1e-4: [{}], orders [{}]", fmt_series(&sups), orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", ")),
    )
}

fn c10_higher(series: &[Study]) -> Outcome {
    let r1 = common_time_sups(series, |r| r.residual_higher[0]);
    let r2 = common_time_sups(series, |r| r.residual_higher[1]);
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    outcome(dec(&r1) && dec(&r2), format!("sup |r1| [{}], sup |r2| [{}]", fmt_series(&r1), fmt_series(&r2)))
}

fn c11_decay(series: &[Study]) -> Outcome {
    let mut lambdas = Vec::new();
    let mut ok = true;
    let mut r2min = 1.0f64;
    for s in series {
        let t: Vec<f64> = s.records.iter().map(|r| r.t).collect();
        let e: Vec<f64> = s.records.iter().map(|r| r.e_par).collect();
        let fit = decay_fit(&t, &e, FIT_WINDOW).unwrap();
        ok &= fit.lambda > 0.0 && fit.r_squared >= 0.99;
        r2min = r2min.min(fit.r_squared);
        lambdas.push(fit.lambda);
        let excess: Vec<f64> = s.records.iter().map(|r| r.e_phys_excess).collect();
        ok &= non_increasing_from(&excess, 3, 0.0);
    }
    let stable = lambdas.windows(2).all(|w| (w[1] - w[0]).abs() <= 0.1 * w[0]);
    outcome(
        ok && stable,
        format!("lambda [{}] on t in [2.5, 5], min r^2 = {r2min:.6}, E_phys non-increasing after step 3", lambdas.iter().map(|l| format!("{l:.4}")).collect::<Vec<_>>().join(", ")),
    )
}

fn c12_sandwich(studies: &[&Study]) -> Outcome {
    let (mut lo, mut hi, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for s in studies {
        for r in &s.records {
            let q = (r.frak_e + r.frak_f) / r.frak_e;
            lo = lo.min(q);
            hi = hi.max(q);
            n += 1;
        }
    }
    outcome(lo >= 0.5 && hi <= 1.5, format!("(frakE + frakF)/frakE in [{lo:.6}, {hi:.6}] over {n} records"))
}

fn c13_mean_trace(series: &[Study]) -> Outcome {
    let weak = series.iter().flat_map(|s| s.records.iter().map(|r| r.mean_trace_weak.abs())).fold(0.0, f64::max);
    let strong = common_time_sups(series, |r| r.mean_trace_strong);
    let r0 = common_time_sups(series, |r| r.residual_energy_identity);
    let shrinking = strong.windows(2).all(|w| w[1] < w[0]);
    let below = strong.iter().zip(&r0).all(|(m, e)| m <= e);
    outcome(
        weak <= 1e-12 && shrinking && below,
        format!("weak form {weak:.1e}; strong trace sup [{}] vs energy residual [{}]", fmt_series(&strong), fmt_series(&r0)),
    )
}

fn c14_remainder() -> Outcome {
    let scan = remainder_scan([-5.0, 5.0], 0.05).unwrap();
    let drift = scan.drift.iter().cloned().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (a, b) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let d2 = |f: fn(f64, f64) -> f64| (f(a, b + h) - f(a, b - h)) / (2.0 * h);
        let d1 = |f: fn(f64, f64) -> f64| (f(a + h, b) - f(a - h, b)) / (2.0 * h);
        let pairs = [
            (dz2_r(a, b), d2(r)),
            (d2z2_r(a, b), d2(dz2_r)),
            (d3z2_r(a, b), d2(d2z2_r)),
            (dz1_r(a, b), d1(r)),
            (d2z1_r(a, b), d1(dz1_r)),
            (dz1dz2_r(a, b), d1(dz2_r)),
            (d2z2dz1_r(a, b), d1(d2z2_r)),
        ];
        for (exact, fd) in pairs {
            worst = worst.max((exact - fd).abs() / exact.abs().max(1.0));
        }
    }
    outcome(
        scan.all_finite && drift < 0.01 && worst <= 1e-6,
        format!("nine suprema finite, max drift {drift:.1e}; derivative vs difference {worst:.1e}"),
    )
}

fn main() {
    let mut lines: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |id: usize, name: &'static str, o: Outcome| {
        println!("[{}] {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        lines.push((id, name, o));
    };
    report(1, "flat stationary exactness", c1_flat_stationary());
    report(2, "Young's law at the contact points", c2_young());
    report(3, "stationary ODE residual order", c3_ode_residual());
    report(4, "coefficient identities", c4_coefficients());
    report(5, "trace of the extension", c5_trace());
    report(6, "elliptic benchmarks", c6_elliptic());
    report(7, "DN operator", c7_dn());
    report(14, "remainder scan and derivatives", c14_remainder());

    let fine = study(128, 16, 1e-3);
    report(8, "mass conservation", c8_mass(&fine));
    let dt_series: Vec<Study> = [4e-4, 2e-4, 1e-4].iter().map(|&dt| study(32, 8, dt)).collect();
    report(9, "energy-dissipation identity", c9_energy_identity(&dt_series));
    report(11, "exponential decay", c11_decay(&dt_series));
    let joint: Vec<Study> = [(16, 4, 1.6e-3), (32, 8, 8e-4), (64, 16, 4e-4)].iter().map(|&(n, m, dt)| study(n, m, dt)).collect();
    report(10, "higher-order identities", c10_higher(&joint));
    let all: Vec<&Study> = std::iter::once(&fine).chain(&dt_series).chain(&joint).collect();
    report(12, "comparison sandwich", c12_sandwich(&all));
    report(13, "mean-trace identity", c13_mean_trace(&joint));

    lines.sort_by_key(|l| l.0);
    let failed: Vec<String> = lines.iter().filter(|l| !l.2.pass).map(|l| format!("{} {}", l.0, l.1)).collect();
    println!("{} of {} criteria passed", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        eprintln!("failed: {failed:?}");
        std::process::exit(1);
    }
}
