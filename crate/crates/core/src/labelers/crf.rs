//! Linear-chain CRF computed in log space with f64 accumulation.

use ndarray::{Array1, Array2, ArrayView2};
use crate::{Error, Result};

/// Transition scores are indexed `[from, to]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearChainCrf {
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

/// NLL together with its gradient with respect to every input.
#[derive(Debug, Clone)]
pub struct CrfGradient {
    pub nll: f64,
    pub d_emissions: Array2<f64>,
    pub d_transitions: Array2<f64>,
    pub d_start: Array1<f64>,
    pub d_end: Array1<f64>,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl LinearChainCrf {
    /// All-zero parameters over `k` labels.
    pub fn uniform(k: usize) -> Self {
        Self {
            transitions: Array2::zeros((k, k)),
            start: Array1::zeros(k),
            end: Array1::zeros(k),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.start.len()
    }

    fn check(&self, emissions: ArrayView2<f64>) -> Result<()> {
        let k = self.num_labels();
        if emissions.nrows() == 0 {
            return Err(Error::InvalidInput("CRF needs at least one position".into()));
        }
        if emissions.ncols() != k {
            return Err(Error::DimensionMismatch {
                context: "CRF emissions".into(),
                expected: k,
                actual: emissions.ncols(),
            });
        }
        if !emissions.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("CRF emissions".into()));
        }
        let params_ok = self.transitions.iter().chain(&self.start).chain(&self.end);
        if !params_ok.into_iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("CRF parameters".into()));
        }
        Ok(())
    }

    /// Unnormalised score of one label path.
    pub fn path_score(&self, emissions: ArrayView2<f64>, path: &[usize]) -> f64 {
        let mut s = self.start[path[0]] + self.end[path[path.len() - 1]];
        for (t, &y) in path.iter().enumerate() {
            s += emissions[[t, y]];
            if t > 0 {
                s += self.transitions[[path[t - 1], y]];
            }
        }
        s
    }

    fn alphas(&self, e: ArrayView2<f64>) -> Array2<f64> {
        let (n, k) = e.dim();
        let mut a = Array2::<f64>::zeros((n, k));
        for j in 0..k {
            a[[0, j]] = self.start[j] + e[[0, j]];
        }
        for t in 1..n {
            for j in 0..k {
                let prev = (0..k).map(|i| a[[t - 1, i]] + self.transitions[[i, j]]);
                a[[t, j]] = log_sum_exp(prev) + e[[t, j]];
            }
        }
        a
    }

    fn betas(&self, e: ArrayView2<f64>) -> Array2<f64> {
        let (n, k) = e.dim();
        let mut b = Array2::<f64>::zeros((n, k));
        for i in 0..k {
            b[[n - 1, i]] = self.end[i];
        }
        for t in (0..n - 1).rev() {
            for i in 0..k {
                let next = (0..k).map(|j| self.transitions[[i, j]] + e[[t + 1, j]] + b[[t + 1, j]]);
                b[[t, i]] = log_sum_exp(next);
            }
        }
        b
    }

    /// Log partition function by the forward algorithm.
    pub fn log_partition(&self, emissions: ArrayView2<f64>) -> Result<f64> {
        self.check(emissions)?;
        let a = self.alphas(emissions);
        let last = a.row(a.nrows() - 1);
        Ok(log_sum_exp((0..self.num_labels()).map(|j| last[j] + self.end[j])))
    }

    fn check_gold(&self, emissions: ArrayView2<f64>, gold: &[usize]) -> Result<()> {
        if gold.len() != emissions.nrows() {
            return Err(Error::LengthMismatch {
                left: emissions.nrows(),
                right: gold.len(),
            });
        }
        if let Some(bad) = gold.iter().find(|&&g| g >= self.num_labels()) {
            return Err(Error::LabelOutsideSet(bad.to_string()));
        }
        Ok(())
    }

    /// `log Z - score(gold)`.
    pub fn nll(&self, emissions: ArrayView2<f64>, gold: &[usize]) -> Result<f64> {
        self.check(emissions)?;
        self.check_gold(emissions, gold)?;
        Ok((self.log_partition(emissions)? - self.path_score(emissions, gold)).max(0.0))
    }

    pub fn nll_with_grad(&self, emissions: ArrayView2<f64>, gold: &[usize]) -> Result<CrfGradient> {
        self.check(emissions)?;
        self.check_gold(emissions, gold)?;
        let (n, k) = emissions.dim();
        let a = self.alphas(emissions);
        let b = self.betas(emissions);
        let log_z = log_sum_exp((0..k).map(|j| a[[n - 1, j]] + self.end[j]));
        let mut d_emissions = Array2::<f64>::zeros((n, k));
        let mut d_transitions = Array2::<f64>::zeros((k, k));
        let mut d_start = Array1::<f64>::zeros(k);
        let mut d_end = Array1::<f64>::zeros(k);
        for t in 0..n {
            for j in 0..k {
                d_emissions[[t, j]] = (a[[t, j]] + b[[t, j]] - log_z).exp();
            }
        }
        for j in 0..k {
            d_start[j] = d_emissions[[0, j]];
            d_end[j] = d_emissions[[n - 1, j]];
        }
        for t in 1..n {
            for i in 0..k {
                for j in 0..k {
                    d_transitions[[i, j]] += (a[[t - 1, i]]
                        + self.transitions[[i, j]]
                        + emissions[[t, j]]
                        + b[[t, j]]
                        - log_z)
                        .exp();
                }
            }
        }
        for (t, &y) in gold.iter().enumerate() {
            d_emissions[[t, y]] -= 1.0;
            if t > 0 {
                d_transitions[[gold[t - 1], y]] -= 1.0;
            }
        }
        d_start[gold[0]] -= 1.0;
        d_end[gold[n - 1]] -= 1.0;
        let nll = (log_z - self.path_score(emissions, gold)).max(0.0);
        Ok(CrfGradient {
            nll,
            d_emissions,
            d_transitions,
            d_start,
            d_end,
        })
    }

    /// Per-position posterior label probabilities.
    pub fn marginals(&self, emissions: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(emissions)?;
        let (n, k) = emissions.dim();
        let a = self.alphas(emissions);
        let b = self.betas(emissions);
        let log_z = log_sum_exp((0..k).map(|j| a[[n - 1, j]] + self.end[j]));
        Ok(Array2::from_shape_fn((n, k), |(t, j)| (a[[t, j]] + b[[t, j]] - log_z).exp()))
    }

    /// Viterbi decoding. Among equally scoring paths the lexicographically
    /// smallest one wins, so ties go to the lowest label index position by
    /// position.
    pub fn decode(&self, emissions: ArrayView2<f64>) -> Result<Vec<usize>> {
        self.check(emissions)?;
        let (n, k) = emissions.dim();
        // suffix[t][j]: best score of positions t+1.. given label j at t, plus the end score.
        let mut suffix = Array2::<f64>::zeros((n, k));
        for j in 0..k {
            suffix[[n - 1, j]] = self.end[j];
        }
        for t in (0..n - 1).rev() {
            for i in 0..k {
                suffix[[t, i]] = (0..k)
                    .map(|j| self.transitions[[i, j]] + emissions[[t + 1, j]] + suffix[[t + 1, j]])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        let pick = |scores: &dyn Fn(usize) -> f64| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for j in 0..k {
                let s = scores(j);
                if s > best_score {
                    best_score = s;
                    best = j;
                }
            }
            best
        };
        let mut path = Vec::with_capacity(n);
        path.push(pick(&|j| self.start[j] + emissions[[0, j]] + suffix[[0, j]]));
        for t in 1..n {
            let prev = path[t - 1];
            path.push(pick(&|j| {
                self.transitions[[prev, j]] + emissions[[t, j]] + suffix[[t, j]]
            }));
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
        (0..k.pow(n as u32))
            .map(|mut code| {
                (0..n)
                    .map(|_| {
                        let y = code % k;
                        code /= k;
                        y
                    })
                    .collect()
            })
            .collect()
    }

    fn random_crf(rng: &mut ChaCha8Rng, k: usize) -> LinearChainCrf {
        LinearChainCrf {
            transitions: Array2::from_shape_fn((k, k), |_| rng.random_range(-2.0..2.0)),
            start: Array1::from_shape_fn(k, |_| rng.random_range(-1.0..1.0)),
            end: Array1::from_shape_fn(k, |_| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn single_uniform_position() {
        let crf = LinearChainCrf::uniform(2);
        let nll = crf.nll(array![[0.0, 0.0]].view(), &[1]).unwrap();
        assert!((nll - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_positions_against_enumeration() {
        let crf = LinearChainCrf {
            transitions: array![[0.5, -0.3], [0.2, 0.1]],
            start: array![0.1, -0.2],
            end: array![0.0, 0.4],
        };
        let e = array![[1.0, 0.3], [-0.5, 0.8]];
        let z: f64 = all_paths(2, 2)
            .iter()
            .map(|p| crf.path_score(e.view(), p).exp())
            .sum();
        let gold = [0, 1];
        let expected = -(crf.path_score(e.view(), &gold).exp() / z).ln();
        assert!((crf.nll(e.view(), &gold).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn saturated_gold() {
        let crf = LinearChainCrf::uniform(3);
        let gold = [2, 0, 1];
        let e = Array2::from_shape_fn((3, 3), |(t, j)| if gold[t] == j { 100.0 } else { 0.0 });
        assert!(crf.nll(e.view(), &gold).unwrap() < 1e-6);
    }

    #[test]
    fn zero_transitions_decode_per_position() {
        let crf = LinearChainCrf::uniform(3);
        let e = array![[0.1, 0.5, 0.2], [0.9, 0.0, 0.3], [0.0, 0.0, 0.0]];
        assert_eq!(crf.decode(e.view()).unwrap(), vec![1, 0, 0]);
    }

    #[test]
    fn negative_self_transition_prefers_alternation() {
        let mut crf = LinearChainCrf::uniform(2);
        crf.transitions[[0, 0]] = -5.0;
        crf.transitions[[1, 1]] = -5.0;
        let e = Array2::zeros((4, 2));
        let best = crf.decode(e.view()).unwrap();
        let alt = crf.path_score(e.view(), &[0, 1, 0, 1]);
        let constant = crf.path_score(e.view(), &[0, 0, 0, 0]);
        assert!(alt >= constant);
        assert_eq!(crf.path_score(e.view(), &best), alt);
        assert_eq!(best, vec![0, 1, 0, 1]);
    }

    #[test]
    fn brute_force_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let n = rng.random_range(1..=5);
            let k = rng.random_range(1..=4);
            let crf = random_crf(&mut rng, k);
            let e = Array2::from_shape_fn((n, k), |_| rng.random_range(-3.0..3.0));
            let paths = all_paths(n, k);
            let total: f64 = paths
                .iter()
                .map(|p| (-crf.nll(e.view(), p).unwrap()).exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-9);
            let best = paths
                .iter()
                .max_by(|a, b| {
                    crf.path_score(e.view(), a)
                        .partial_cmp(&crf.path_score(e.view(), b))
                        .unwrap()
                })
                .unwrap();
            assert_eq!(&crf.decode(e.view()).unwrap(), best);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 3;
        let crf = random_crf(&mut rng, k);
        let e = Array2::from_shape_fn((4, k), |_| rng.random_range(-2.0..2.0));
        let gold = [0, 2, 2, 1];
        let g = crf.nll_with_grad(e.view(), &gold).unwrap();
        let h = 1e-6;
        for t in 0..4 {
            for j in 0..k {
                let mut up = e.clone();
                up[[t, j]] += h;
                let mut down = e.clone();
                down[[t, j]] -= h;
                let num = (crf.nll(up.view(), &gold).unwrap() - crf.nll(down.view(), &gold).unwrap())
                    / (2.0 * h);
                assert!((num - g.d_emissions[[t, j]]).abs() < 1e-6);
            }
        }
        for i in 0..k {
            for j in 0..k {
                let mut up = crf.clone();
                up.transitions[[i, j]] += h;
                let mut down = crf.clone();
                down.transitions[[i, j]] -= h;
                let num = (up.nll(e.view(), &gold).unwrap() - down.nll(e.view(), &gold).unwrap())
                    / (2.0 * h);
                assert!((num - g.d_transitions[[i, j]]).abs() < 1e-6);
            }
            let mut up = crf.clone();
            up.start[i] += h;
            let mut down = crf.clone();
            down.start[i] -= h;
            let num = (up.nll(e.view(), &gold).unwrap() - down.nll(e.view(), &gold).unwrap()) / (2.0 * h);
            assert!((num - g.d_start[i]).abs() < 1e-6);
            let mut up = crf.clone();
            up.end[i] += h;
            let mut down = crf.clone();
            down.end[i] -= h;
            let num = (up.nll(e.view(), &gold).unwrap() - down.nll(e.view(), &gold).unwrap()) / (2.0 * h);
            assert!((num - g.d_end[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn marginals_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let crf = random_crf(&mut rng, 4);
        let e = Array2::from_shape_fn((6, 4), |_| rng.random_range(-2.0..2.0));
        let m = crf.marginals(e.view()).unwrap();
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let crf = LinearChainCrf::uniform(2);
        assert!(matches!(
            crf.nll(array![[f64::NAN, 0.0]].view(), &[0]),
            Err(Error::NonFinite(_))
        ));
        assert!(crf.decode(Array2::zeros((0, 2)).view()).is_err());
        assert!(crf.nll(array![[0.0, 0.0]].view(), &[2]).is_err());
        assert!(crf.nll(array![[0.0, 0.0, 0.0]].view(), &[0]).is_err());
    }

    #[test]
    fn long_sequences_do_not_underflow() {
        let crf = LinearChainCrf::uniform(7);
        let e = Array2::from_shape_fn((1000, 7), |(t, j)| ((t * j) % 5) as f64 - 2.0);
        let gold: Vec<usize> = (0..1000).map(|t| t % 7).collect();
        let nll = crf.nll(e.view(), &gold).unwrap();
        assert!(nll.is_finite() && nll > 0.0);
    }
}
