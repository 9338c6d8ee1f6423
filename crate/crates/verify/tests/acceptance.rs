//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! The corrector sweeps use 24 fine elements per ε-cell; see the README for
//! why 16 is not enough for the second-order variant.

use std::f64::consts::PI;
use std::time::Instant;

use homogbl_core::assembly::assemble_mass;
use homogbl_core::assembly::assemble_stiffness;
use homogbl_core::cell::{solve_cell_problems, CellSolutions, B_AVERAGE_TOL};
use homogbl_core::corrector::FineProblem;
use homogbl_core::corrector::{
    fit_rate, oscillating_dirichlet_study, run_sweep_with, sweep_cells, DataDerivative,
    ExpansionKind, SweepConfig, SweepReport,
};
use homogbl_core::field::{Analytic, Dual, NodalField};
use homogbl_core::grid::{build_cell_grid, CoefficientField, Grid, Mat2};
use homogbl_core::solver::SolverConfig;
use homogbl_core::spectral::{eigen_corrector_study, solve_spectral_pair, spread, SpectralReport};
use homogbl_core::unfolding::{
    averaging_ratios, gradient_rule_check, integrate_unfolded, local_average_ratio, unfold,
};
use homogbl_verify::Outcome;

const EPS: [f64; 4] = [0.25, 0.125, 0.0625, 0.03125];
const SWEEP_K: usize = 24;
const K: usize = 16;

fn solver() -> SolverConfig {
    SolverConfig::default()
}

fn threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn sweep_config(k: usize) -> SweepConfig {
    SweepConfig {
        eps_list: EPS.to_vec(),
        points_per_cell: k,
        cell_n: None,
        solver: solver(),
        threads: threads(),
    }
}

fn max_entry_error(a: Mat2, b: Mat2) -> f64 {
    (0..4)
        .map(|p| (a[p / 2][p % 2] - b[p / 2][p % 2]).abs())
        .fold(0.0, f64::max)
}

fn cells_at(c: &CoefficientField, n: usize) -> CellSolutions {
    let g = build_cell_grid(n, c).unwrap();
    solve_cell_problems(&g, c, &solver()).unwrap()
}

struct Family {
    name: &'static str,
    coeff: CoefficientField,
    sweep: SweepReport,
    cells_k: CellSolutions,
}

fn slope(report: &SweepReport, kind: ExpansionKind, l2: bool) -> f64 {
    let (eps, e_l2, e_h1) = report.series(kind);
    fit_rate(&eps, if l2 { &e_l2 } else { &e_h1 }).map_or(f64::NAN, |f| f.slope)
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let id = cells_at(&CoefficientField::identity(), 64).a_hom().unwrap();
    let e = max_entry_error(id, [[1.0, 0.0], [0.0, 1.0]]);
    o.item("identity n=64 |A^hom - I|", e, Some(e <= 1e-10), "<= 1e-10");
    let lay = cells_at(&CoefficientField::layered(1.0, 4.0).unwrap(), 64)
        .a_hom()
        .unwrap();
    let e = max_entry_error(lay, [[1.6, 0.0], [0.0, 2.5]]);
    o.item(
        "layered(1,4) n=64 |A^hom - diag(8/5,5/2)|",
        e,
        Some(e <= 1e-8),
        "<= 1e-8",
    );
    let cb = cells_at(&CoefficientField::checkerboard(1.0, 4.0).unwrap(), 256)
        .a_hom()
        .unwrap();
    let e = max_entry_error(cb, [[2.0, 0.0], [0.0, 2.0]]);
    o.item(
        "checkerboard(1,4) n=256 |A^hom - 2I|",
        e,
        Some(e <= 2e-2),
        "<= 2e-2",
    );
    o
}

fn criterion_2(fams: &[Family]) -> Outcome {
    let mut o = Outcome::new();
    for f in fams {
        let s = slope(&f.sweep, ExpansionKind::PlainFirst, false);
        o.item(
            &format!("{} H1 slope of u_eps-u0-eps*w1", f.name),
            s,
            Some((0.4..=0.8).contains(&s)),
            "in [0.4, 0.8]",
        );
    }
    o
}

fn criterion_3(fams: &[Family]) -> Outcome {
    let mut o = Outcome::new();
    for f in fams {
        for kind in [ExpansionKind::FirstWithTheta, ExpansionKind::FirstWithBetaQ] {
            let s = slope(&f.sweep, kind, false);
            o.item(
                &format!("{} H1 slope {}", f.name, kind.label()),
                s,
                Some(s >= 0.9),
                ">= 0.9",
            );
        }
    }
    o
}

fn criterion_4(fams: &[Family]) -> Outcome {
    let mut o = Outcome::new();
    for f in fams {
        let s = slope(&f.sweep, ExpansionKind::SecondWithoutPhi, false);
        o.item(
            &format!(
                "{} H1 slope {}",
                f.name,
                ExpansionKind::SecondWithoutPhi.label()
            ),
            s,
            Some(s >= 1.35),
            ">= 1.35",
        );
        let s = slope(&f.sweep, ExpansionKind::SecondWithBoth, false);
        o.item(
            &format!(
                "{} H1 slope {}",
                f.name,
                ExpansionKind::SecondWithBoth.label()
            ),
            s,
            Some(s >= 1.8),
            ">= 1.8",
        );
    }
    o
}

fn criterion_5(fams: &[Family]) -> Outcome {
    let mut o = Outcome::new();
    for f in fams {
        let s = slope(&f.sweep, ExpansionKind::FirstWithTheta, true);
        o.item(
            &format!(
                "{} L2 slope {}",
                f.name,
                ExpansionKind::FirstWithTheta.label()
            ),
            s,
            Some(s >= 1.8),
            ">= 1.8",
        );
    }
    o
}

fn criterion_6(fams: &[Family]) -> Outcome {
    let mut o = Outcome::new();
    for f in fams {
        let (eps, _, h1) = f.sweep.series(ExpansionKind::EpsPhi);
        let ratios: Vec<f64> = h1.iter().zip(&eps).map(|(h, e)| h / e.sqrt()).collect();
        let negligible = h1.iter().all(|&h| h < 1e-12);
        let s = spread(&ratios);
        if negligible {
            o.item(
                &format!("{} spread of |eps*phi|_H1/eps^(1/2)", f.name),
                s,
                None,
                "<= 3, not judged",
            );
            o.note(format!(
                "{}: phi boundary data vanishes identically (max |eps*phi|_H1 = {:.1e})",
                f.name,
                h1.iter().cloned().fold(0.0, f64::max)
            ));
        } else {
            o.item(
                &format!("{} spread of |eps*phi|_H1/eps^(1/2)", f.name),
                s,
                Some(s <= 3.0),
                "<= 3",
            );
        }
    }
    o
}

fn criterion_7(fams: &[Family]) -> Outcome {
    let mut o = Outcome::new();
    for f in fams {
        for (z, label) in [
            (DataDerivative(0, 0), "z=d11 u0"),
            (DataDerivative(0, 1), "z=d12 u0"),
        ] {
            let (records, failures) =
                oscillating_dirichlet_study(&f.coeff, &f.cells_k, (0, 0), z, &sweep_config(K))
                    .unwrap();
            let eps: Vec<f64> = records.iter().map(|r| r.eps).collect();
            let h1: Vec<f64> = records.iter().map(|r| r.h1_error).collect();
            let s = fit_rate(&eps, &h1).map_or(f64::NAN, |r| r.slope);
            o.item(
                &format!("{} oscillating data chi11*{label} H1 slope", f.name),
                s,
                Some(s >= 0.45 && failures.is_empty()),
                ">= 0.45",
            );
        }
    }
    o
}

fn criterion_8(trig_cells: &CellSolutions) -> Outcome {
    let mut o = Outcome::new();
    let u = Analytic::new(|x: [Dual; 2]| (x[0] * 3.0 + x[1]).sin() + x[0] * x[1]);
    let v = Analytic::new(|x: [Dual; 2]| x[1].scale(2.0).cos() * x[0] + 0.5);
    let uv = Analytic::new(|x: [Dual; 2]| {
        ((x[0] * 3.0 + x[1]).sin() + x[0] * x[1]) * (x[1].scale(2.0).cos() * x[0] + 0.5)
    });
    let smooth = Analytic::new(|x: [Dual; 2]| x[0].scale(PI).sin() * x[1].scale(PI).sin());
    let sample = Grid::cell(4).unwrap();
    let (mut prod, mut integ, mut grad) = (0.0f64, 0.0f64, 0.0f64);
    let mut ratios = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for &eps in &EPS {
        let m = (1.0 / eps).round() as usize;
        let tu = unfold(&u, eps, &sample).unwrap();
        let tv = unfold(&v, eps, &sample).unwrap();
        let tuv = unfold(&uv, eps, &sample).unwrap();
        let p = tu.zip_with(&tv, |a, b| a * b).unwrap();
        prod = p
            .values
            .iter()
            .zip(&tuv.values)
            .map(|(a, b)| (a - b).abs())
            .fold(prod, f64::max);

        let nf = 64;
        let fine = Grid::domain(nf).unwrap();
        let vals: Vec<f64> = (0..fine.node_count())
            .map(|i| ((i as f64 + 1.0) * 12.9898).sin())
            .collect();
        let field = NodalField::new(&fine, &vals);
        let sg = Grid::cell(2 * nf / m).unwrap();
        let exact: f64 = assemble_mass(&fine).mul_vec(&vals).iter().sum();
        integ = integ.max((integrate_unfolded(&unfold(&field, eps, &sg).unwrap()) - exact).abs());
        let x1x2 = Analytic::new(|x: [Dual; 2]| x[0] * x[1]);
        integ = integ.max((integrate_unfolded(&unfold(&x1x2, eps, &sample).unwrap()) - 0.25).abs());
        grad = grad
            .max(gradient_rule_check(&field, eps, &sg).unwrap())
            .max(gradient_rule_check(&smooth, eps, &sample).unwrap());

        let r = averaging_ratios(&smooth, eps, &sample).unwrap();
        ratios[0].push(r.mean);
        ratios[1].push(r.unfolding);
        ratios[2].push(r.interpolation);
        ratios[3].push(
            local_average_ratio(&trig_cells.grid(), &trig_cells.chi[0], &smooth, eps).unwrap(),
        );
    }
    o.item(
        "product rule max |T(uv) - T(u)T(v)|",
        prod,
        Some(prod <= 1e-12),
        "<= 1e-12",
    );
    o.item(
        "integration identity max error",
        integ,
        Some(integ <= 1e-12),
        "<= 1e-12",
    );
    o.item(
        "gradient rule max |grad_y T(u) - eps T(grad u)|",
        grad,
        Some(grad <= 1e-12),
        "<= 1e-12",
    );
    let names = [
        "|v - M(v)|/(eps|grad v|)",
        "|v - T(v)|/(eps|grad v|)",
        "|Q(v) - M(v)|/(eps|grad v|)",
        "local average ratio, Phi = chi1 trig",
    ];
    for (name, r) in names.iter().zip(&ratios) {
        let halving = r
            .windows(2)
            .map(|w| (w[1] / w[0]).max(w[0] / w[1]))
            .fold(1.0, f64::max);
        o.item(
            &format!("{name} worst factor under eps-halving"),
            halving,
            Some(halving <= 4.0),
            "<= 4",
        );
    }
    o
}

fn criterion_9(spectral: &[(&str, SpectralReport)]) -> Outcome {
    let mut o = Outcome::new();
    let fine = FineProblem::new(&CoefficientField::identity(), 0.25, 16).unwrap();
    let lam = solve_spectral_pair(&fine, [[1.0, 0.0], [0.0, 1.0]], &solver())
        .unwrap()
        .lambda_hom;
    let rel = (lam / (2.0 * PI * PI) - 1.0).abs();
    o.item(
        "identity n=64 |lambda/(2 pi^2) - 1|",
        rel,
        Some(rel <= 5e-3),
        "<= 0.5%",
    );
    for (name, r) in spectral {
        let ratios: Vec<f64> = r
            .rows
            .iter()
            .map(|row| (row.lambda_eps - row.lambda_hom).abs() / row.eps)
            .collect();
        let growth = ratios.iter().map(|x| x / ratios[0]).fold(0.0, f64::max);
        o.item(
            &format!("{name} growth of |lambda_eps - lambda|/eps over the sweep"),
            growth,
            Some(growth <= 4.0 && r.failures.is_empty()),
            "<= 4",
        );
        o.item(
            &format!("{name} max/min of |lambda_eps - lambda|/eps"),
            r.gap_ratio_spread,
            None,
            "reported",
        );
        let s = r.residual_rate.as_ref().map_or(f64::NAN, |f| f.slope);
        o.item(
            &format!("{name} slope of |lambda_eps - lambda - eps*lambda*int(theta_bar v)|"),
            s,
            Some(s > 1.0),
            "> 1",
        );
        if r.possible_non_uniqueness {
            o.pass = false;
            o.note(format!(
                "{name}: possible non-uniqueness of the boundary-layer limit flagged"
            ));
        }
        if let Some(g) = &r.gap_rate {
            o.item(
                &format!("{name} slope of |lambda_eps - lambda|"),
                g.slope,
                None,
                "reported",
            );
        }
    }
    o
}

fn criterion_10(fams: &[Family]) -> Outcome {
    let mut o = Outcome::new();
    let mut worst_b = 0.0f64;
    let mut worst_mean = 0.0f64;
    let mut worst_asym = 0.0f64;
    let mut diag_ok = true;
    let mut periodic = 0.0f64;
    let coeffs = [
        CoefficientField::trig_isotropic(2.0, 1.0).unwrap(),
        CoefficientField::layered(1.0, 4.0).unwrap(),
        CoefficientField::checkerboard(1.0, 4.0).unwrap(),
    ];
    let mut layered64 = None;
    for c in &coeffs {
        let cells = cells_at(c, 64);
        let t = cells.a_hom.as_ref().unwrap();
        let b = cells.b.as_ref().unwrap();
        worst_b = worst_b.max(max_entry_error(b.mean, t.a_hom.map(|r| r.map(|x| -x))));
        worst_mean = worst_mean.max(cells.max_mean());
        let g = cells.grid();
        let k = assemble_stiffness(&g, c, None).unwrap();
        worst_asym = worst_asym.max(k.asymmetry()).max(t.asymmetry());
        diag_ok &= k.diagonal().iter().all(|&d| d > 0.0) && t.eigenvalues[0] > 0.0;
        // opposite face nodes share one unknown
        for i in 0..=64 {
            let pairs = [
                (g.node_index(i, 0), g.node_index(i, 64)),
                (g.node_index(0, i), g.node_index(64, i)),
            ];
            for (a, b) in pairs {
                periodic = periodic.max((g.dof_of_node(a) as f64 - g.dof_of_node(b) as f64).abs());
            }
        }
        if matches!(
            c.family,
            homogbl_core::grid::CoefficientFamily::Layered { .. }
        ) {
            layered64 = Some((cells, *c));
        }
    }
    o.item(
        "b-average |M_Y(b_ij) + A^hom_ij|",
        worst_b,
        Some(worst_b <= B_AVERAGE_TOL),
        "<= 1e-6",
    );
    o.item(
        "zero means of chi_j and chi_ij",
        worst_mean,
        Some(worst_mean <= 1e-10),
        "<= 1e-10",
    );
    o.item(
        "periodic identification of face nodes",
        periodic,
        Some(periodic == 0.0),
        "== 0",
    );
    o.item(
        "stiffness and A^hom asymmetry",
        worst_asym,
        Some(worst_asym <= 1e-12),
        "<= 1e-12",
    );
    o.item(
        "positive diagonals and A^hom eigenvalues",
        if diag_ok { 1.0 } else { 0.0 },
        Some(diag_ok),
        "all > 0",
    );
    let (cells, c) = layered64.unwrap();
    let a11 = cells.a_hom().unwrap()[0][0];
    let flux = cells
        .flux(&c, 0)
        .iter()
        .map(|f| (f[0] - a11).abs().max(f[1].abs()))
        .fold(0.0, f64::max);
    o.item(
        "layered flux A(grad chi1 + e1) constancy",
        flux,
        Some(flux <= 1e-8),
        "<= 1e-8",
    );
    let g = build_cell_grid(64, &c).unwrap();
    let again = solve_cell_problems(&g, &c, &solver()).unwrap();
    let same_cells = again == cells;
    let f = &fams[0];
    let mut config = sweep_config(8);
    config.eps_list = vec![0.25, 0.125];
    config.threads = 2;
    let cells8 = sweep_cells(&f.coeff, &config).unwrap();
    let r1 = run_sweep_with(&f.coeff, &cells8, &config).unwrap();
    config.threads = 1;
    let r2 = run_sweep_with(&f.coeff, &cells8, &config).unwrap();
    let same = same_cells && r1 == r2;
    o.item(
        "bit-identical reruns (cell solve, sweep)",
        if same { 1.0 } else { 0.0 },
        Some(same),
        "identical",
    );
    for f in fams {
        let gap = f
            .sweep
            .points
            .iter()
            .map(|p| p.energy_gap)
            .fold(0.0, f64::max);
        let trace = f
            .sweep
            .points
            .iter()
            .map(|p| p.trace_error)
            .fold(0.0, f64::max);
        o.item(
            &format!("{} boundary-layer energy gap", f.name),
            gap,
            Some(gap <= 1e-8),
            "<= 1e-8",
        );
        o.item(
            &format!("{} boundary-layer trace mismatch", f.name),
            trace,
            Some(trace <= 1e-12),
            "<= 1e-12",
        );
    }
    o
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |id: usize, title: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} [{}] {title} ({secs:.1}s)",
            if o.pass { "PASS" } else { "FAIL" }
        );
        for d in &o.details {
            println!("    {d}");
        }
        results.push((id, title, o, secs));
    };

    timed(1, "homogenized tensor oracles", &mut criterion_1);

    let t = Instant::now();
    let mut fams = Vec::new();
    for (name, coeff) in [
        (
            "trig-isotropic(2,1)",
            CoefficientField::trig_isotropic(2.0, 1.0).unwrap(),
        ),
        ("layered(1,4)", CoefficientField::layered(1.0, 4.0).unwrap()),
    ] {
        let config = sweep_config(SWEEP_K);
        let cells = sweep_cells(&coeff, &config).unwrap();
        let sweep = run_sweep_with(&coeff, &cells, &config).unwrap();
        assert!(sweep.failures.is_empty(), "{name}: {:?}", sweep.failures);
        let cells_k = cells_at(&coeff, K);
        fams.push(Family {
            name,
            coeff,
            sweep,
            cells_k,
        });
    }
    println!(
        "(corrector sweeps at k={SWEEP_K}: {:.1}s)",
        t.elapsed().as_secs_f64()
    );

    timed(2, "first-order H1 rate", &mut || criterion_2(&fams));
    timed(3, "boundary-layer corrected H1 rates", &mut || {
        criterion_3(&fams)
    });
    timed(4, "second-order H1 rates", &mut || criterion_4(&fams));
    timed(5, "L2 rate with boundary layer", &mut || criterion_5(&fams));
    timed(6, "growth of the second-order boundary layer", &mut || {
        criterion_6(&fams)
    });
    timed(7, "oscillating Dirichlet data rate", &mut || {
        criterion_7(&fams)
    });
    timed(8, "unfolding identities and averaging ratios", &mut || {
        criterion_8(&fams[0].cells_k)
    });
    let spectral: Vec<(&str, SpectralReport)> = fams
        .iter()
        .map(|f| {
            (
                f.name,
                eigen_corrector_study(&f.coeff, &f.cells_k, &sweep_config(K)).unwrap(),
            )
        })
        .collect();
    timed(9, "eigenvalue corrector", &mut || criterion_9(&spectral));
    timed(10, "property suites", &mut || criterion_10(&fams));

    println!();
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    for (id, title, o, _) in &results {
        println!(
            "{} criterion {id:>2}: {title}",
            if o.pass { "PASS" } else { "FAIL" }
        );
    }
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
