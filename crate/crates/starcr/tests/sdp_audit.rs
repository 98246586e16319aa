//! Dual-route audit of the conic stack on physical data: the beamformer
//! subproblem is solved once as a complex QCQP and once through a hand
//! homogenized real SDP lift. Convexity makes the lift tight, so the two
//! interior-point cores must agree; the lifted solution mapped back to
//! complex blocks must satisfy the original constraints.

use nalgebra::DMatrix;
use starcr::conic::{
    solve_qcqp, solve_sdp, QcqpOptions, QcqpProblem, SdpConstraint, SdpOptions, SdpProblem,
};
use starcr::linalg::{norm_sq, quad_form, realify, realify_vec, unrealify_vec, CVec};
use starcr::metrics::{aggregate_channels_all, Beamformers};
use starcr::scene::{generate_channels, Geometry, SystemConfig};
use starcr::star::{PhaseModel, StarCoefficients};
use starcr::transforms::{build_w_subproblem, update_alpha, update_gamma};

/// Homogenize one complex block (P, q, sign) into the real symmetric
/// matrix [[realify(P), sign rq], [sign rq^T, 0]] so that
/// z^T M z = x^H P x + sign 2 Re(q^H x) for z = [realify_vec(x); 1].
fn homogenize(p: Option<&starcr::linalg::CMat>, q: &CVec, sign: f64, m: usize) -> DMatrix<f64> {
    let dim = 2 * m + 1;
    let mut out = DMatrix::zeros(dim, dim);
    if let Some(p) = p {
        let rp = realify(p);
        out.view_mut((0, 0), (2 * m, 2 * m)).copy_from(&rp);
    }
    let rq = realify_vec(q);
    for i in 0..2 * m {
        out[(i, 2 * m)] = sign * rq[i];
        out[(2 * m, i)] = sign * rq[i];
    }
    out
}

/// Lift a block QCQP into an equality-form SDP: one homogenized PSD block
/// per variable block, a unit-corner equality per block, and one slack
/// block per inequality.
fn lift(problem: &QcqpProblem) -> SdpProblem {
    let blocks = problem.block_dims.len();
    let m = problem.block_dims[0];
    let dim = 2 * m + 1;
    let mut block_dims: Vec<usize> = vec![dim; blocks];
    let mut c: Vec<DMatrix<f64>> = (0..blocks)
        .map(|b| homogenize(problem.objective.p[b].as_ref(), &problem.objective.q[b], -1.0, m))
        .collect();
    let mut constraints = Vec::new();
    for b in 0..blocks {
        let mut corner = DMatrix::zeros(dim, dim);
        corner[(dim - 1, dim - 1)] = 1.0;
        constraints.push(SdpConstraint {
            terms: vec![(b, corner)],
            rhs: 1.0,
        });
    }
    for (i, con) in problem.constraints.iter().enumerate() {
        block_dims.push(1);
        c.push(DMatrix::zeros(1, 1));
        let mut terms: Vec<(usize, DMatrix<f64>)> = (0..blocks)
            .map(|b| (b, homogenize(con.p[b].as_ref(), &con.q[b], 1.0, m)))
            .collect();
        terms.push((blocks + i, DMatrix::from_element(1, 1, 1.0)));
        constraints.push(SdpConstraint {
            terms,
            rhs: con.r,
        });
    }
    SdpProblem {
        block_dims,
        c,
        constraints,
    }
}

#[test]
fn beamformer_step_agrees_across_qcqp_and_sdp_lift() {
    let config = SystemConfig {
        n: 6,
        k: 2,
        gamma: vec![1e-11; 2],
        ..SystemConfig::default()
    };
    let geometry = Geometry::generate(&config, 11);
    let channels = generate_channels(&config, &geometry, 12).unwrap();
    let star = StarCoefficients::new(
        vec![0.5; config.n],
        vec![0.5; config.n],
        vec![0.3; config.n],
        vec![1.1; config.n],
        PhaseModel::Independent,
    )
    .unwrap();
    let vectors = star.to_vectors();
    let h = aggregate_channels_all(&channels, &geometry.su_sides, &vectors);

    // Feasible starting beamformers well inside both budgets.
    let m = config.m_s;
    let w: Beamformers = (0..config.l)
        .map(|l| {
            CVec::from_shape_fn(m, |i| {
                num_complex::Complex64::new(((l + i) as f64).cos(), ((l * m + i) as f64).sin())
                    * 1e-3
            })
        })
        .collect();
    let gamma = update_gamma(&h, &w, &channels.sigma_sq).gamma;
    let alpha = update_alpha(&h, &w, &channels.sigma_sq, &gamma);
    let sub = build_w_subproblem(
        &channels,
        &geometry.pu_sides,
        &vectors,
        &h,
        &gamma,
        &alpha,
        config.p_s,
        &config.gamma,
    );
    let qcqp = sub.to_qcqp();

    let direct = solve_qcqp(
        &qcqp,
        &QcqpOptions {
            tol: 1e-12,
            max_iterations: 400,
            ..QcqpOptions::default()
        },
    )
    .unwrap();

    let lifted = lift(&qcqp);
    let relaxed = solve_sdp(
        &lifted,
        &SdpOptions {
            tol: 1e-11,
            max_iterations: 400,
        },
    )
    .unwrap();

    let scale = direct.objective.abs().max(1e-12);
    let gap = (direct.objective - relaxed.primal_objective).abs() / scale;
    assert!(
        gap < 1e-5,
        "QCQP {} vs SDP lift {} (rel {gap:.2e})",
        direct.objective,
        relaxed.primal_objective
    );

    // Recover the complex point from the lift (last column of each block)
    // and check it against the original complex constraints.
    let recovered: Beamformers = (0..config.l)
        .map(|b| {
            let y = &relaxed.x[b];
            let corner = y[(2 * m, 2 * m)];
            let col = nalgebra::DVector::from_fn(2 * m, |i, _| y[(i, 2 * m)] / corner);
            unrealify_vec(&col)
        })
        .collect();
    let power: f64 = recovered.iter().map(norm_sq).sum();
    assert!(power <= config.p_s * (1.0 + 1e-6), "power {power}");
    for (k, (a_k, &g)) in sub.a_k.iter().zip(&sub.gamma_k).enumerate() {
        let it: f64 = recovered.iter().map(|w_l| quad_form(a_k, w_l)).sum();
        assert!(it <= g * (1.0 + 1e-4) + 1e-9 * scale, "IT_{k} {it} vs {g}");
    }
    let value = sub.objective(&recovered);
    assert!(
        (value - direct.objective).abs() / scale < 1e-4,
        "recovered objective {value} vs {}",
        direct.objective
    );
}
