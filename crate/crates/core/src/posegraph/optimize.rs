//! Two-phase pose-graph solve: spectral rotation synchronization, linear
//! translations, then Gauss-Newton on the full Frobenius loss.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::pose::project_to_so3;
use crate::geometry::Pose;
use crate::posegraph::graph::{graph_loss_with, GraphEdge, PoseGraph};

/// Eigen-gaps at or below this are treated as a rank-deficient problem.
pub const MIN_EIGEN_GAP: f64 = 1e-12;

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn check(n: usize, edges: &[GraphEdge]) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("pose graph has no nodes".into()));
    }
    let components = crate::posegraph::graph::component_count(n, edges.iter().map(|e| (e.i, e.j)));
    if components > 1 {
        return Err(Error::DisconnectedGraph { components });
    }
    Ok(())
}

/// Rotations `R_i` (node←world) minimizing `sum ||R_i - R~_ij R_j||^2` over the
/// spectral relaxation, with `R_0 = I`.
pub fn synchronize_rotations(n: usize, edges: &[GraphEdge]) -> Result<Vec<Matrix3<f64>>> {
    check(n, edges)?;
    if n == 1 {
        return Ok(vec![Matrix3::identity()]);
    }
    // connection Laplacian: deg_i I on the diagonal, -R~_ij / -R~_ij^T off it
    let mut l = DMatrix::<f64>::zeros(3 * n, 3 * n);
    for e in edges {
        let r = e.transform.rotation();
        for k in 0..3 {
            l[(3 * e.i + k, 3 * e.i + k)] += 1.0;
            l[(3 * e.j + k, 3 * e.j + k)] += 1.0;
        }
        let mut ij = l.fixed_view_mut::<3, 3>(3 * e.i, 3 * e.j);
        ij -= r;
        let mut ji = l.fixed_view_mut::<3, 3>(3 * e.j, 3 * e.i);
        ji -= r.transpose();
    }
    let eig = l.symmetric_eigen();
    let mut order: Vec<usize> = (0..3 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let gap = eig.eigenvalues[order[3]] - eig.eigenvalues[order[2]];
    if gap <= MIN_EIGEN_GAP {
        return Err(Error::RankDeficient { gap });
    }
    let mut v = DMatrix::<f64>::zeros(3 * n, 3);
    for c in 0..3 {
        v.set_column(c, &eig.eigenvectors.column(order[c]));
    }
    let block = |v: &DMatrix<f64>, i: usize| -> Matrix3<f64> { v.fixed_view::<3, 3>(3 * i, 0).into_owned() };
    let negative = (0..n).filter(|&i| block(&v, i).determinant() < 0.0).count();
    if 2 * negative > n {
        v.column_mut(2).neg_mut();
    }
    let raw: Vec<Matrix3<f64>> = (0..n).map(|i| project_to_so3(&block(&v, i))).collect();
    let r0t = raw[0].transpose();
    Ok(raw.iter().map(|r| r * r0t).collect())
}

/// Translations minimizing `sum ||t~_ij - t_i + R_i R_j^T t_j||^2` with `t_0 = 0`.
pub fn solve_translations(rotations: &[Matrix3<f64>], edges: &[GraphEdge]) -> Result<Vec<Vector3<f64>>> {
    let n = rotations.len();
    check(n, edges)?;
    if n == 1 {
        return Ok(vec![Vector3::zeros()]);
    }
    let dim = 3 * (n - 1);
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    // residual = t~ + J_i t_i + J_j t_j with J_i = -I, J_j = R_i R_j^T
    for e in edges {
        let a = rotations[e.i] * rotations[e.j].transpose();
        let jac = [(e.i, -Matrix3::identity()), (e.j, a)];
        let t = e.transform.translation();
        for (p, jp) in &jac {
            if *p == 0 {
                continue;
            }
            let rp = 3 * (p - 1);
            let rhs = -(jp.transpose() * t);
            for k in 0..3 {
                b[rp + k] += rhs[k];
            }
            for (q, jq) in &jac {
                if *q == 0 {
                    continue;
                }
                let rq = 3 * (q - 1);
                let blk = jp.transpose() * jq;
                let mut dst = h.fixed_view_mut::<3, 3>(rp, rq);
                dst += blk;
            }
        }
    }
    let x = h
        .cholesky()
        .ok_or(Error::RankDeficient { gap: 0.0 })?
        .solve(&b);
    let mut out = vec![Vector3::zeros(); n];
    for i in 1..n {
        out[i] = Vector3::new(x[3 * (i - 1)], x[3 * (i - 1) + 1], x[3 * (i - 1) + 2]);
    }
    Ok(out)
}

/// Graph variables obtained by composing measurements along a breadth-first
/// spanning tree from node 0.
pub fn chained_initialization(n: usize, edges: &[GraphEdge]) -> Result<Vec<Pose>> {
    check(n, edges)?;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, e) in edges.iter().enumerate() {
        adj[e.i].push(k);
        adj[e.j].push(k);
    }
    let mut p: Vec<Option<Pose>> = vec![None; n];
    p[0] = Some(Pose::identity());
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let pu = p[u].expect("visited");
        for &k in &adj[u] {
            let e = &edges[k];
            // T_ij = P_i P_j^-1
            let (v, pv) = if e.i == u {
                (e.j, e.transform.inverse().compose(&pu))
            } else {
                (e.i, e.transform.compose(&pu))
            };
            if p[v].is_none() {
                p[v] = Some(pv);
                queue.push_back(v);
            }
        }
    }
    Ok(p.into_iter().map(|x| x.expect("connected")).collect())
}

/// Stacked residual of one edge: the nine entries of `R~ - R_i R_j^T`
/// (column-major) followed by `t~ - t_i + R_i R_j^T t_j`.
fn residual(e: &GraphEdge, p: &[Pose]) -> [f64; 12] {
    let (ri, rj) = (p[e.i].rotation(), p[e.j].rotation());
    let (ti, tj) = (p[e.i].translation(), p[e.j].translation());
    let a = ri * rj.transpose();
    let er = e.transform.rotation() - a;
    let et = e.transform.translation() - ti + a * tj;
    let mut r = [0.0; 12];
    r[..9].copy_from_slice(er.as_slice());
    r[9..].copy_from_slice(et.as_slice());
    r
}

/// Jacobians of [`residual`] with respect to `(a_i, b_i)` and `(a_j, b_j)`
/// under `R <- exp([a]) R`, `t <- t + b`.
fn jacobians(e: &GraphEdge, p: &[Pose]) -> ([[f64; 6]; 12], [[f64; 6]; 12]) {
    let (ri, rj) = (p[e.i].rotation(), p[e.j].rotation());
    let tj = p[e.j].translation();
    let a = ri * rj.transpose();
    let mut ji = [[0.0; 6]; 12];
    let mut jj = [[0.0; 6]; 12];
    for k in 0..3 {
        let ak: Vector3<f64> = a.column(k).into_owned();
        let di = skew(&ak);
        let dj = -(a * skew(&Vector3::ith(k, 1.0)));
        for row in 0..3 {
            for c in 0..3 {
                ji[3 * k + row][c] = di[(row, c)];
                jj[3 * k + row][c] = dj[(row, c)];
            }
        }
    }
    let ti_rot = -skew(&(a * tj));
    let tj_rot = a * skew(tj);
    for row in 0..3 {
        for c in 0..3 {
            ji[9 + row][c] = ti_rot[(row, c)];
            jj[9 + row][c] = tj_rot[(row, c)];
            ji[9 + row][3 + c] = if row == c { -1.0 } else { 0.0 };
            jj[9 + row][3 + c] = a[(row, c)];
        }
    }
    (ji, jj)
}

fn retract(p: &[Pose], delta: &DVector<f64>) -> Vec<Pose> {
    p.iter()
        .enumerate()
        .map(|(i, pi)| {
            if i == 0 {
                return *pi;
            }
            let o = 6 * (i - 1);
            let w = Vector3::new(delta[o], delta[o + 1], delta[o + 2]);
            let b = Vector3::new(delta[o + 3], delta[o + 4], delta[o + 5]);
            let r = Pose::from_rotation_vector(&w, Vector3::zeros()).rotation() * pi.rotation();
            Pose::new(r, pi.translation() + b)
        })
        .collect()
}

/// Levenberg-Marquardt on the full loss with node 0 held fixed. Only
/// loss-decreasing steps are taken.
pub fn refine_poses(edges: &[GraphEdge], init: Vec<Pose>, max_iterations: usize) -> Vec<Pose> {
    let n = init.len();
    if n < 2 || edges.is_empty() {
        return init;
    }
    let dim = 6 * (n - 1);
    let mut p = init;
    let mut loss = graph_loss_with(edges, &p);
    let mut lambda = 1e-6;
    for _ in 0..max_iterations {
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut g = DVector::<f64>::zeros(dim);
        for e in edges {
            let r = residual(e, &p);
            let (ji, jj) = jacobians(e, &p);
            let blocks = [(e.i, &ji), (e.j, &jj)];
            for (u, ju) in &blocks {
                if *u == 0 {
                    continue;
                }
                let ou = 6 * (u - 1);
                for row in 0..12 {
                    for c in 0..6 {
                        g[ou + c] += ju[row][c] * r[row];
                    }
                }
                for (v, jv) in &blocks {
                    if *v == 0 {
                        continue;
                    }
                    let ov = 6 * (v - 1);
                    for row in 0..12 {
                        for c in 0..6 {
                            let x = ju[row][c];
                            if x == 0.0 {
                                continue;
                            }
                            for d in 0..6 {
                                h[(ou + c, ov + d)] += x * jv[row][d];
                            }
                        }
                    }
                }
            }
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut damped = h.clone();
            for k in 0..dim {
                damped[(k, k)] += lambda * (1.0 + h[(k, k)]);
            }
            let Some(ch) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = -ch.solve(&g);
            let candidate = retract(&p, &step);
            let cand_loss = graph_loss_with(edges, &candidate);
            if cand_loss < loss {
                let gain = loss - cand_loss;
                p = candidate;
                loss = cand_loss;
                lambda = (lambda * 0.1).max(1e-12);
                improved = step.norm() > 1e-12 && gain > 1e-15 * loss.max(1e-300);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

/// Solves for graph variables `P_i` (node←world) with `P_0 = I`, writes the
/// corresponding world←node poses onto the nodes, and returns the variables.
pub fn optimize_pose_graph(g: &mut PoseGraph) -> Result<Vec<Pose>> {
    let p = optimize_edges(g.node_count(), &g.edges)?;
    g.set_variables(&p);
    Ok(p)
}

/// [`optimize_pose_graph`] on a bare edge list.
pub fn optimize_edges(n: usize, edges: &[GraphEdge]) -> Result<Vec<Pose>> {
    check(n, edges)?;
    if n == 1 {
        return Ok(vec![Pose::identity()]);
    }
    let rotations = synchronize_rotations(n, edges)?;
    let translations = solve_translations(&rotations, edges)?;
    let spectral: Vec<Pose> = rotations
        .iter()
        .zip(&translations)
        .map(|(r, t)| Pose::new(*r, *t))
        .collect();
    let chained = chained_initialization(n, edges)?;
    let start = if graph_loss_with(edges, &spectral) <= graph_loss_with(edges, &chained) {
        spectral
    } else {
        chained
    };
    Ok(refine_poses(edges, start, 100))
}
