//! Message-passing detection on the factor graph of `y = H x + v`.
//!
//! Observation nodes send the mean and variance of their Gaussian-
//! approximated interference; variable nodes send damped symbol pmfs.
//! Both half-iterations are synchronous: every update in a sweep reads only
//! values produced by the previous sweep. Likelihood products are
//! accumulated as log sums and normalized with max subtraction.

use num_complex::Complex64;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::sparse::SparseChannelMatrix;

// Lower bound on interference-plus-noise variance, only reached when the
// noise variance is zero and all interferers are already resolved.
const VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Damping factor in (0, 1]; 1 disables damping.
    pub damping: f64,
    pub max_iterations: usize,
    /// Stop when no pmf entry moves by this much in one iteration.
    pub epsilon: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self { damping: 0.5, max_iterations: 30, epsilon: 0.01 }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping {} outside (0, 1]", self.damping)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon {} must be > 0", self.epsilon)));
        }
        Ok(())
    }
}

/// Bipartite graph mirroring the nonzeros of a square channel matrix.
///
/// Edges are numbered in row-major order of the matrix, so the edges of
/// observation `b` are contiguous. Each variable keeps the list of its edge
/// ids.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    dim: usize,
    obs_ptr: Vec<usize>,
    edge_var: Vec<usize>,
    edge_obs: Vec<usize>,
    edge_h: Vec<Complex64>,
    var_ptr: Vec<usize>,
    var_edges: Vec<usize>,
}

impl FactorGraph {
    pub fn new(h: &SparseChannelMatrix) -> Self {
        let dim = h.dim();
        let mut obs_ptr = Vec::with_capacity(dim + 1);
        let mut edge_var = Vec::with_capacity(h.nnz());
        let mut edge_obs = Vec::with_capacity(h.nnz());
        let mut edge_h = Vec::with_capacity(h.nnz());
        obs_ptr.push(0);
        for (b, (cols, vals)) in h.rows().enumerate() {
            edge_var.extend_from_slice(cols);
            edge_h.extend_from_slice(vals);
            edge_obs.extend(std::iter::repeat_n(b, cols.len()));
            obs_ptr.push(edge_var.len());
        }

        let mut var_ptr = vec![0; dim + 1];
        for &a in &edge_var {
            var_ptr[a + 1] += 1;
        }
        for a in 0..dim {
            var_ptr[a + 1] += var_ptr[a];
        }
        let mut fill = var_ptr.clone();
        let mut var_edges = vec![0; edge_var.len()];
        for (e, &a) in edge_var.iter().enumerate() {
            var_edges[fill[a]] = e;
            fill[a] += 1;
        }
        Self { dim, obs_ptr, edge_var, edge_obs, edge_h, var_ptr, var_edges }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_edges(&self) -> usize {
        self.edge_var.len()
    }

    /// Variables connected to observation `b`.
    pub fn obs_neighbors(&self, b: usize) -> &[usize] {
        &self.edge_var[self.obs_ptr[b]..self.obs_ptr[b + 1]]
    }

    /// Observations connected to variable `a`, ascending.
    pub fn var_neighbors(&self, a: usize) -> Vec<usize> {
        self.var_edge_ids(a).iter().map(|&e| self.edge_obs[e]).collect()
    }

    fn var_edge_ids(&self, a: usize) -> &[usize] {
        &self.var_edges[self.var_ptr[a]..self.var_ptr[a + 1]]
    }

    pub fn edge_value(&self, b: usize, a: usize) -> Option<Complex64> {
        let span = self.obs_ptr[b]..self.obs_ptr[b + 1];
        self.edge_var[span.clone()].binary_search(&a).ok().map(|i| self.edge_h[span.start + i])
    }
}

/// Messages on every edge. Edge `e` joins observation `b` and variable `a`
/// and carries the pmf `p_ab` (variable to observation) and the interference
/// statistics `(mu_ba, sigma2_ba)` (observation to variable).
#[derive(Debug, Clone)]
pub struct MessageState {
    n_sym: usize,
    noise_var: f64,
    pmf: Vec<f64>,
    mean: Vec<Complex64>,
    var: Vec<f64>,
    log_post: Vec<f64>,
}

impl MessageState {
    /// Uniform pmfs on every edge.
    pub fn new(graph: &FactorGraph, alphabet: &Alphabet, noise_var: f64) -> Self {
        let q = alphabet.len();
        Self {
            n_sym: q,
            noise_var,
            pmf: vec![1.0 / q as f64; graph.num_edges() * q],
            mean: vec![Complex64::new(0.0, 0.0); graph.num_edges()],
            var: vec![noise_var; graph.num_edges()],
            log_post: vec![0.0; graph.dim() * q],
        }
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn pmf(&self, edge: usize) -> &[f64] {
        &self.pmf[edge * self.n_sym..(edge + 1) * self.n_sym]
    }

    pub fn set_pmf(&mut self, edge: usize, pmf: &[f64]) {
        self.pmf[edge * self.n_sym..(edge + 1) * self.n_sym].copy_from_slice(pmf);
    }

    pub fn interference(&self, edge: usize) -> (Complex64, f64) {
        (self.mean[edge], self.var[edge])
    }

    /// Edge id of `(observation b, variable a)`.
    pub fn edge_id(graph: &FactorGraph, b: usize, a: usize) -> Option<usize> {
        let span = graph.obs_ptr[b]..graph.obs_ptr[b + 1];
        graph.edge_var[span.clone()].binary_search(&a).ok().map(|i| span.start + i)
    }

    /// Observation-to-variable sweep:
    /// `mu_ba = sum_{c != a} E[x_c] H_bc`,
    /// `sigma2_ba = sum_{c != a} Var[x_c H_bc] + sigma2`.
    pub fn observation_update(&mut self, graph: &FactorGraph, alphabet: &Alphabet) {
        let points = alphabet.points();
        let q = self.n_sym;
        let mut contrib_mean: Vec<Complex64> = Vec::new();
        let mut contrib_var: Vec<f64> = Vec::new();
        for b in 0..graph.dim {
            let span = graph.obs_ptr[b]..graph.obs_ptr[b + 1];
            contrib_mean.clear();
            contrib_var.clear();
            let mut total_mean = Complex64::new(0.0, 0.0);
            let mut total_var = 0.0;
            for e in span.clone() {
                let p = &self.pmf[e * q..(e + 1) * q];
                let h = graph.edge_h[e];
                let mut first = Complex64::new(0.0, 0.0);
                let mut second = 0.0;
                for (pj, aj) in p.iter().zip(points) {
                    first += aj * *pj;
                    second += pj * aj.norm_sqr();
                }
                let m = first * h;
                let v = (second * h.norm_sqr() - m.norm_sqr()).max(0.0);
                contrib_mean.push(m);
                contrib_var.push(v);
                total_mean += m;
                total_var += v;
            }
            for (i, e) in span.enumerate() {
                self.mean[e] = total_mean - contrib_mean[i];
                self.var[e] = self.noise_var + (total_var - contrib_var[i]).max(0.0);
            }
        }
    }

    /// Variable-to-observation sweep with damping. Returns the largest
    /// absolute change of any pmf entry.
    pub fn variable_update(
        &mut self,
        graph: &FactorGraph,
        y: &[Complex64],
        alphabet: &Alphabet,
        damping: f64,
    ) -> f64 {
        let points = alphabet.points();
        let q = self.n_sym;
        let mut loglik: Vec<f64> = Vec::new();
        let mut raw = vec![0.0; q];
        let mut max_change: f64 = 0.0;
        for a in 0..graph.dim {
            let edges = graph.var_edge_ids(a);
            loglik.clear();
            let total = &mut self.log_post[a * q..(a + 1) * q];
            total.iter_mut().for_each(|t| *t = 0.0);
            for &e in edges {
                let c = graph.edge_obs[e];
                let h = graph.edge_h[e];
                let resid = y[c] - self.mean[e];
                let var = self.var[e].max(VAR_FLOOR);
                for (j, aj) in points.iter().enumerate() {
                    let l = -(resid - h * aj).norm_sqr() / var;
                    loglik.push(l);
                    total[j] += l;
                }
            }
            for (i, &e) in edges.iter().enumerate() {
                let own = &loglik[i * q..(i + 1) * q];
                let mut peak = f64::NEG_INFINITY;
                for j in 0..q {
                    raw[j] = total[j] - own[j];
                    peak = peak.max(raw[j]);
                }
                let mut norm = 0.0;
                for r in raw.iter_mut() {
                    *r = (*r - peak).exp();
                    norm += *r;
                }
                let old = &mut self.pmf[e * q..(e + 1) * q];
                for (o, r) in old.iter_mut().zip(&raw) {
                    let fresh = damping * (r / norm) + (1.0 - damping) * *o;
                    max_change = max_change.max((fresh - *o).abs());
                    *o = fresh;
                }
            }
        }
        max_change
    }

    /// Symbol decisions from the full-neighbourhood log likelihoods of the
    /// last variable sweep; ties go to the lowest alphabet index.
    pub fn decisions(&self) -> Vec<usize> {
        self.log_post
            .chunks(self.n_sym)
            .map(|lp| {
                let mut best = 0;
                for j in 1..lp.len() {
                    if lp[j] > lp[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpOutput {
    /// Detected alphabet indices, one per variable.
    pub symbols: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs message passing on a prebuilt graph.
pub fn detect_on_graph(
    graph: &FactorGraph,
    y: &[Complex64],
    alphabet: &Alphabet,
    params: &DetectorParams,
    noise_var: f64,
) -> Result<MpOutput> {
    if y.len() != graph.dim() {
        return Err(Error::LengthMismatch { expected: graph.dim(), actual: y.len() });
    }
    params.validate()?;
    let mut state = MessageState::new(graph, alphabet, noise_var);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        state.observation_update(graph, alphabet);
        let change = state.variable_update(graph, y, alphabet, params.damping);
        iterations += 1;
        if change < params.epsilon {
            converged = true;
            break;
        }
    }
    Ok(MpOutput { symbols: state.decisions(), iterations, converged })
}

pub fn detect_mp(
    y: &[Complex64],
    h: &SparseChannelMatrix,
    alphabet: &Alphabet,
    params: &DetectorParams,
    noise_var: f64,
) -> Result<MpOutput> {
    detect_on_graph(&FactorGraph::new(h), y, alphabet, params, noise_var)
}

const MAP_LIMIT: u128 = 1 << 20;

/// Exhaustive minimum-distance (uniform-prior MAP) detection. Candidates are
/// visited in lexicographic order and only a strictly better metric replaces
/// the incumbent.
pub fn detect_map_bruteforce(y: &[Complex64], h: &SparseChannelMatrix, alphabet: &Alphabet) -> Result<Vec<usize>> {
    let dim = h.dim();
    if y.len() != dim {
        return Err(Error::LengthMismatch { expected: dim, actual: y.len() });
    }
    let q = alphabet.len();
    let count = (q as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
    if count > MAP_LIMIT {
        return Err(Error::SearchTooLarge(count));
    }
    let points = alphabet.points();
    let mut idx = vec![0usize; dim];
    let mut x = vec![points[0]; dim];
    let mut best = idx.clone();
    let mut best_metric = f64::INFINITY;
    loop {
        let metric: f64 = h
            .rows()
            .zip(y)
            .map(|((cols, vals), yb)| {
                let hx: Complex64 = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
                (yb - hx).norm_sqr()
            })
            .sum();
        if metric < best_metric {
            best_metric = metric;
            best.copy_from_slice(&idx);
        }
        // odometer, last position fastest
        let mut pos = dim;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < q {
                x[pos] = points[idx[pos]];
                break;
            }
            idx[pos] = 0;
            x[pos] = points[0];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_link_matrix, LinkChannel, PathTap};
    use crate::grid::GridDims;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_graph() {
        let g = FactorGraph::new(&SparseChannelMatrix::identity(4));
        for i in 0..4 {
            assert_eq!(g.obs_neighbors(i), &[i]);
            assert_eq!(g.var_neighbors(i), vec![i]);
        }
    }

    #[test]
    fn permutation_graph_matches_matrix() {
        let d = GridDims::square(2);
        let h = build_link_matrix(&LinkChannel::new(vec![PathTap::new(1, 0, c(1.0, 0.0))]).unwrap(), &d).unwrap();
        let g = FactorGraph::new(&h);
        let perm = [2, 3, 0, 1];
        for b in 0..4 {
            assert_eq!(g.obs_neighbors(b), &[perm[b]]);
            assert_eq!(g.var_neighbors(perm[b]), vec![b]);
            assert_eq!(g.edge_value(b, perm[b]), Some(c(1.0, 0.0)));
        }
    }

    #[test]
    fn uniform_bpsk_has_zero_mean_interference() {
        let h = SparseChannelMatrix::from_rows(
            2,
            vec![vec![(0, c(1.0, 0.0)), (1, c(0.0, 1.0))], vec![(0, c(-1.0, 0.0)), (1, c(1.0, 0.0))]],
        )
        .unwrap();
        let g = FactorGraph::new(&h);
        let alpha = Alphabet::bpsk();
        let mut s = MessageState::new(&g, &alpha, 0.1);
        s.observation_update(&g, &alpha);
        for e in 0..g.num_edges() {
            let (mu, var) = s.interference(e);
            assert!(mu.norm() < 1e-15);
            // one interferer with |H| = 1 and unit-energy uniform symbol
            assert!((var - 1.1).abs() < 1e-12, "var {var}");
        }
    }

    #[test]
    fn deterministic_interferer() {
        let h = SparseChannelMatrix::from_rows(
            2,
            vec![vec![(0, c(1.0, 0.0)), (1, c(0.5, -0.5))], vec![(1, c(1.0, 0.0))]],
        )
        .unwrap();
        let g = FactorGraph::new(&h);
        let alpha = Alphabet::bpsk();
        let mut s = MessageState::new(&g, &alpha, 0.2);
        let e01 = MessageState::edge_id(&g, 0, 1).unwrap();
        s.set_pmf(e01, &[1.0, 0.0]);
        s.observation_update(&g, &alpha);
        let e00 = MessageState::edge_id(&g, 0, 0).unwrap();
        let (mu, var) = s.interference(e00);
        assert_eq!(mu, c(0.5, -0.5));
        assert!((var - 0.2).abs() < 1e-15);
    }

    #[test]
    fn no_damping_gives_raw_pmf_and_damping_mixes() {
        // One variable seen by two observations; the message to obs 0 is the
        // likelihood from obs 1 alone.
        let h = SparseChannelMatrix::from_rows(2, vec![vec![(0, c(1.0, 0.0))], vec![(0, c(1.0, 0.0))]]).unwrap();
        let g = FactorGraph::new(&h);
        let alpha = Alphabet::bpsk();
        let y = [c(0.0, 0.0), c(0.3, 0.0)];
        let mut s = MessageState::new(&g, &alpha, 1.0);
        s.observation_update(&g, &alpha);
        s.variable_update(&g, &y, &alpha, 1.0);
        let e0 = MessageState::edge_id(&g, 0, 0).unwrap();
        let l0 = -(0.3f64 - 1.0).powi(2);
        let l1 = -(0.3f64 + 1.0).powi(2);
        let p0 = l0.exp() / (l0.exp() + l1.exp());
        assert!((s.pmf(e0)[0] - p0).abs() < 1e-12);

        let mut s = MessageState::new(&g, &alpha, 1.0);
        s.observation_update(&g, &alpha);
        s.variable_update(&g, &y, &alpha, 0.5);
        assert!((s.pmf(e0)[0] - (0.5 * p0 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn damping_is_a_convex_combination() {
        // p_raw = (0.8, 0.2), previous = (0.4, 0.6) -> (0.6, 0.4)
        let h = SparseChannelMatrix::from_rows(2, vec![vec![(0, c(1.0, 0.0))], vec![(0, c(1.0, 0.0))]]).unwrap();
        let g = FactorGraph::new(&h);
        let alpha = Alphabet::bpsk();
        // sigma2 = 1 and y = t give a log-likelihood ratio of 4t
        let y = [c(0.0, 0.0), c(4f64.ln() / 4.0, 0.0)];
        let mut s = MessageState::new(&g, &alpha, 1.0);
        let e0 = MessageState::edge_id(&g, 0, 0).unwrap();
        s.set_pmf(e0, &[0.4, 0.6]);
        s.observation_update(&g, &alpha);
        s.variable_update(&g, &y, &alpha, 0.5);
        let p = s.pmf(e0);
        assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.4).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn noiseless_identity_concentrates_in_one_iteration() {
        let h = SparseChannelMatrix::from_rows(
            2,
            vec![vec![(0, c(1.0, 0.0)), (1, c(1.0, 0.0))], vec![(0, c(1.0, 0.0)), (1, c(-1.0, 0.0))]],
        )
        .unwrap();
        let g = FactorGraph::new(&h);
        let alpha = Alphabet::bpsk();
        // x = (+1, -1): y = (0, 2)
        let y = [c(0.0, 0.0), c(2.0, 0.0)];
        let mut s = MessageState::new(&g, &alpha, 1e-9);
        s.observation_update(&g, &alpha);
        s.variable_update(&g, &y, &alpha, 1.0);
        assert_eq!(s.decisions(), vec![0, 1]);
    }

    #[test]
    fn identity_channel_detection() {
        let alpha = Alphabet::new(crate::alphabet::Modulation::Qam16);
        let x: Vec<usize> = (0..64).map(|i| (i * 7) % 16).collect();
        let y: Vec<Complex64> = x.iter().map(|&j| alpha.point(j)).collect();
        let out = detect_mp(&y, &SparseChannelMatrix::identity(64), &alpha, &DetectorParams::default(), 0.0).unwrap();
        assert_eq!(out.symbols, x);
        assert!(out.converged && out.iterations <= 2);
    }

    #[test]
    fn noiseless_permutation_channel() {
        let d = GridDims::square(2);
        let h = build_link_matrix(&LinkChannel::new(vec![PathTap::new(1, 0, c(1.0, 0.0))]).unwrap(), &d).unwrap();
        let alpha = Alphabet::bpsk();
        for bits in 0..16usize {
            let x: Vec<usize> = (0..4).map(|i| (bits >> i) & 1).collect();
            let xs: Vec<Complex64> = x.iter().map(|&j| alpha.point(j)).collect();
            let y = h.mul_vec(&xs).unwrap();
            let out = detect_mp(&y, &h, &alpha, &DetectorParams::default(), 0.0).unwrap();
            assert_eq!(out.symbols, x);
            assert_eq!(detect_map_bruteforce(&y, &h, &alpha).unwrap(), x);
        }
    }

    #[test]
    fn map_finds_global_minimizer() {
        let h = SparseChannelMatrix::from_rows(
            4,
            vec![
                vec![(0, c(1.0, 0.2)), (1, c(0.4, 0.0))],
                vec![(1, c(0.9, 0.0)), (2, c(-0.3, 0.1))],
                vec![(2, c(1.1, 0.0)), (3, c(0.2, 0.5))],
                vec![(3, c(0.8, -0.1)), (0, c(0.3, 0.0))],
            ],
        )
        .unwrap();
        let alpha = Alphabet::bpsk();
        let y = vec![c(0.3, -0.2), c(-1.0, 0.4), c(0.1, 0.9), c(-0.7, 0.0)];
        let got = detect_map_bruteforce(&y, &h, &alpha).unwrap();
        let metric = |bits: usize| -> f64 {
            let x: Vec<Complex64> = (0..4).map(|i| alpha.point((bits >> (3 - i)) & 1)).collect();
            let hx = h.mul_vec(&x).unwrap();
            y.iter().zip(&hx).map(|(a, b)| (a - b).norm_sqr()).sum()
        };
        let best = (0..16).min_by(|&a, &b| metric(a).partial_cmp(&metric(b)).unwrap()).unwrap();
        let want: Vec<usize> = (0..4).map(|i| (best >> (3 - i)) & 1).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn map_ties_go_lexicographically_smallest() {
        let h = SparseChannelMatrix::zeros(3);
        let y = vec![c(0.0, 0.0); 3];
        assert_eq!(detect_map_bruteforce(&y, &h, &Alphabet::bpsk()).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn map_refuses_huge_instances() {
        let h = SparseChannelMatrix::identity(21);
        let y = vec![c(0.0, 0.0); 21];
        assert!(matches!(detect_map_bruteforce(&y, &h, &Alphabet::bpsk()), Err(Error::SearchTooLarge(_))));
        let h = SparseChannelMatrix::identity(20);
        let y = vec![c(1.0, 0.0); 20];
        assert_eq!(detect_map_bruteforce(&y, &h, &Alphabet::bpsk()).unwrap(), vec![0; 20]);
    }

    #[test]
    fn params_validation() {
        assert!(DetectorParams::default().validate().is_ok());
        assert!(DetectorParams { damping: 0.0, ..Default::default() }.validate().is_err());
        assert!(DetectorParams { damping: 1.5, ..Default::default() }.validate().is_err());
        assert!(DetectorParams { max_iterations: 0, ..Default::default() }.validate().is_err());
    }
}
