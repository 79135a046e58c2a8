use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use statbench_core::covshift::{pl_select, wang_oracle_select, log_grid};
use statbench_core::evalsuite::{ale, bias_variance, excess_risk, linear_surrogate};
use statbench_core::hte::{self, r_objective, CateEstimate, DEFAULT_CLIP};
use statbench_core::learners::bayes::bayes_classify;
use statbench_core::learners::gbrt::{fit_gbrt_fixed, GbrtGrid, GbrtParams, GbrtPredictor};
use statbench_core::learners::gpr::{fit_gpr, log_marginal_likelihood};
use statbench_core::learners::kernel::Kernel;
use statbench_core::learners::knn::{fit_knn, knn_classify};
use statbench_core::learners::krr::{fit_krr, KrrKernel};
use statbench_core::learners::lasso::{coordinate_descent, fit_lasso_cv, kkt_violation, lambda_grid, lambda_max, KKT_TOL};
use statbench_core::learners::lda::{lda_classify, LdaModel};
use statbench_core::learners::linear::OlsPredictor;
use statbench_core::learners::poly::PolyRidge;
use statbench_core::learners::{FunctionPredictor, PredictiveDistribution, Predictor};
use statbench_core::linalg::Matrix;
use statbench_core::mestim::{erm, gradient, objective, semisup_components, SemiSupStrategy, WorkingModel};
use statbench_core::rng::rng_from_seed;
use statbench_core::synthgen::{
    gen_cate, gen_covshift, gen_labelnoise, gen_semisup, gen_sparse_linear, logistic, BetaType, CateSetup, CovType,
    MeanFunction, NoiseModel, SemiSupSetting, M1_MU1, M1_PRIOR,
};
use statbench_core::Dataset;

fn normal_rows(seed: u64, n: usize, p: usize) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| (0..p).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
}

fn setup() -> impl Strategy<Value = CateSetup> {
    prop::sample::select(CateSetup::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generators_are_deterministic(seed in any::<u64>(), p in 1usize..5) {
        for s in [SemiSupSetting::Linear, SemiSupSetting::Logistic, SemiSupSetting::Quantile] {
            prop_assert_eq!(gen_semisup(s, p, 20, 10, seed).unwrap(), gen_semisup(s, p, 20, 10, seed).unwrap());
        }
        prop_assert_eq!(gen_cate(CateSetup::E, 30, 1.0, seed).unwrap(), gen_cate(CateSetup::E, 30, 1.0, seed).unwrap());
        prop_assert_eq!(gen_covshift(MeanFunction::IV, 20, 10, 5, seed).unwrap(), gen_covshift(MeanFunction::IV, 20, 10, 5, seed).unwrap());
        prop_assert_eq!(gen_labelnoise(NoiseModel::M2, 20, 0.2, 10, seed).unwrap(), gen_labelnoise(NoiseModel::M2, 20, 0.2, 10, seed).unwrap());
    }

    #[test]
    fn erm_local_minimum(seed in any::<u64>(), p in 1usize..4, n in 30usize..80, tau in 0.1f64..0.9) {
        let rows = normal_rows(seed, n, p);
        let mut rng = rng_from_seed(seed ^ 0x5eed);
        let lin: Vec<f64> = rows.iter().map(|r| 1.0 + r.iter().sum::<f64>() + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
        let bin: Vec<f64> = rows.iter().map(|r| if rng.random::<f64>() < logistic(0.3 + 0.5 * r[0]) { 1.0 } else { 0.0 }).collect();
        for (model, y) in [(WorkingModel::LinearReg, lin.clone()), (WorkingModel::QuantileReg(tau), lin), (WorkingModel::LogisticReg, bin)] {
            let data = Dataset::from_rows(&rows, Some(y.clone())).unwrap();
            let fit = match erm(model, &data) {
                Ok(f) => f,
                Err(statbench_core::Error::Separation { .. }) => continue,
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            };
            let design = data.design_with_intercept();
            let at = objective(model, &design, &y, &fit.theta);
            let slack = 1e-12 * (1.0 + at.abs());
            for j in 0..=p {
                for d in [1e-4, -1e-4] {
                    let mut t = fit.theta.clone();
                    t[j] += d;
                    prop_assert!(at <= objective(model, &design, &y, &t) + slack, "{:?} j={} d={}", model, j, d);
                }
            }
            match model {
                WorkingModel::LogisticReg => {
                    let g = gradient(model, &design, &y, &fit.theta);
                    let sum_norm = g.iter().map(|v| (v * n as f64).abs()).fold(0.0, f64::max);
                    prop_assert!(sum_norm < 1e-8 * n as f64);
                }
                WorkingModel::QuantileReg(tau) => {
                    let below = design.row_iter().zip(&y).filter(|(x, yi)| **yi - statbench_core::linalg::dot(x, &fit.theta) < 0.0).count();
                    let frac = below as f64 / n as f64;
                    let slack = (p + 2) as f64 / n as f64;
                    prop_assert!((frac - tau).abs() <= slack, "{} vs {}", frac, tau);
                }
                WorkingModel::LinearReg => {}
            }
        }
    }

    #[test]
    fn debias_identity(seed in any::<u64>(), p in 1usize..4) {
        let d = gen_semisup(SemiSupSetting::Linear, p, 60, 90, seed).unwrap();
        let imputer = FunctionPredictor(|x: &[f64]| 1.0 + 2.0 * x[0]);
        let c = semisup_components(WorkingModel::LinearReg, Some(&imputer), &d.labeled, Some(&d.unlabeled)).unwrap();
        let i = c.estimate(SemiSupStrategy::ImputeI).unwrap();
        let dd = c.estimate(SemiSupStrategy::DebiasD).unwrap();
        let delta = c.delta.as_ref().unwrap();
        for j in 0..=p {
            prop_assert_eq!(dd.theta[j], i.theta[j] - delta[j]);
        }
    }

    #[test]
    fn krr_dual_residual(seed in any::<u64>(), n in 2usize..60, log_lambda in -6.0f64..2.0) {
        let rows = normal_rows(seed, n, 2);
        let y: Vec<f64> = rows.iter().map(|r| (3.0 * r[0]).sin() + r[1]).collect();
        let m = fit_krr(&Dataset::from_rows(&rows, Some(y.clone())).unwrap(), KrrKernel::MedianRbf, 10f64.powf(log_lambda)).unwrap();
        prop_assert!(m.dual_residual(&y) < 1e-8);
    }

    #[test]
    fn lasso_certificate_and_monotone_sweeps(seed in any::<u64>(), p in 2usize..12, n in 20usize..60) {
        let rows = normal_rows(seed, n, p);
        let y: Vec<f64> = rows.iter().enumerate().map(|(i, r)| 2.0 * r[0] - r[1] + 0.3 * ((i * 7 % 5) as f64 - 2.0)).collect();
        let data = Dataset::from_rows(&rows, Some(y.clone())).unwrap();
        let m = fit_lasso_cv(&data, 5, seed).unwrap();
        let cols = m.standardization.columns(data.features());
        let yc = m.standardization.center(&y);
        for (l, beta) in m.lambdas.iter().zip(&m.path) {
            prop_assert!(kkt_violation(&cols, &yc, beta, *l) < KKT_TOL);
        }
        for (k, fold) in m.folds.iter().enumerate() {
            let idx: Vec<usize> = (0..n).filter(|&i| m.fold_assignment[i] != k).collect();
            let sub = data.select_rows(&idx);
            let fc = fold.standardization.columns(sub.features());
            let fy = fold.standardization.center(sub.labels().unwrap());
            for (l, beta) in m.lambdas.iter().zip(&fold.path) {
                prop_assert!(kkt_violation(&fc, &fy, beta, *l) < KKT_TOL);
            }
        }
        let lam = lambda_grid(lambda_max(&cols, &yc), 10, 1e-2)[7];
        let mut beta = vec![0.0; cols.len()];
        let mut trace = Vec::new();
        coordinate_descent(&cols, &yc, lam, &mut beta, Some(&mut trace)).unwrap();
        prop_assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-15 * w[0].abs()));
    }

    #[test]
    fn lda_true_parameters_match_bayes(seed in any::<u64>()) {
        let b = gen_labelnoise(NoiseModel::M1, 5, 0.0, 500, seed).unwrap();
        let mu1 = M1_MU1.to_vec();
        let mu0: Vec<f64> = mu1.iter().map(|v| -v).collect();
        let lda = LdaModel::from_parameters(M1_PRIOR, mu0, mu1, Matrix::identity(5)).unwrap();
        let q = b.test.without_labels();
        prop_assert_eq!(lda_classify(&lda, &q).unwrap(), bayes_classify(NoiseModel::M1, &q).unwrap());
    }

    #[test]
    fn knn_matches_brute_force(seed in any::<u64>(), n in 2usize..50, k_frac in 0.0f64..1.0) {
        let rows = normal_rows(seed, n, 2);
        let y: Vec<f64> = rows.iter().map(|r| if r[0] + 0.3 * r[1] > 0.0 { 1.0 } else { 0.0 }).collect();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let model = fit_knn(&Dataset::from_rows(&rows, Some(y.clone())).unwrap(), k).unwrap();
        let queries = normal_rows(seed.wrapping_add(1), 20, 2);
        let got = knn_classify(&model, &Dataset::from_rows(&queries, None).unwrap()).unwrap();
        for (q, g) in queries.iter().zip(&got) {
            let mut d: Vec<(f64, usize)> = rows.iter().enumerate().map(|(i, r)| ((r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2), i)).collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let ones = d[..k].iter().filter(|(_, i)| y[*i] == 1.0).count();
            let want = if 2 * ones >= k { 1.0 } else { 0.0 };
            prop_assert_eq!(*g, want);
        }
    }

    #[test]
    fn gbrt_integer_weights_equal_replication(seed in any::<u64>(), n in 5usize..25) {
        let rows = normal_rows(seed, n, 2);
        let y: Vec<f64> = rows.iter().map(|r| r[0].abs() - r[1]).collect();
        let mut rng = rng_from_seed(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(1..4) as f64).collect();
        let params = GbrtParams { n_trees: 20, max_depth: 2, learning_rate: 0.1 };
        let weighted = fit_gbrt_fixed(&Dataset::from_rows(&rows, Some(y.clone())).unwrap(), Some(&w), params).unwrap();
        let mut rr = Vec::new();
        let mut yy = Vec::new();
        for i in 0..n {
            for _ in 0..w[i] as usize {
                rr.push(rows[i].clone());
                yy.push(y[i]);
            }
        }
        let replicated = fit_gbrt_fixed(&Dataset::from_rows(&rr, Some(yy)).unwrap(), None, params).unwrap();
        for q in normal_rows(seed ^ 1, 30, 2) {
            prop_assert!((weighted.predict_row(&q) - replicated.predict_row(&q)).abs() < 1e-12, "{} vs {}", weighted.predict_row(&q), replicated.predict_row(&q));
        }
    }

    #[test]
    fn x_learner_reduces_to_t_learner(seed in any::<u64>(), s in setup(), one in any::<bool>()) {
        let data = gen_cate(s, 120, 1.0, seed).unwrap();
        prop_assume!(data.arm_indices(true).len() > 8 && data.arm_indices(false).len() > 8);
        let e = if one { 1.0 } else { 0.0 };
        let x = hte::x_learner(&OlsPredictor, &FunctionPredictor(move |_: &[f64]| e), &data).unwrap();
        let t = hte::t_learner(&OlsPredictor, &data).unwrap();
        let q = gen_cate(s, 40, 1.0, seed ^ 3).unwrap().covariates();
        for (a, b) in x.tau_hat(&q).unwrap().iter().zip(t.tau_hat(&q).unwrap()) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn dr_pseudo_outcomes_exact_with_true_nuisances(seed in any::<u64>(), s in setup()) {
        let data = gen_cate(s, 200, 1.0, seed).unwrap().noiseless();
        let o = data.oracle;
        let rows: Vec<&[f64]> = data.features.row_iter().collect();
        let mu0: Vec<f64> = rows.iter().map(|x| o.mu0(x)).collect();
        let mu1: Vec<f64> = rows.iter().map(|x| o.mu1(x)).collect();
        let e: Vec<f64> = rows.iter().map(|x| o.propensity(x)).collect();
        let y = hte::dr_pseudo_outcomes(&data.treatment, &data.outcome, &mu0, &mu1, &e, DEFAULT_CLIP).unwrap();
        for (yi, x) in y.iter().zip(&rows) {
            prop_assert!((yi - o.effect(x)).abs() < 1e-12);
        }
    }
}

fn r_loss(est: &CateEstimate, data: &statbench_core::synthgen::CausalDataset) -> (f64, f64, f64) {
    let (yt, tt) = est.residuals.clone().unwrap();
    let tau = est.tau_hat(&data.covariates()).unwrap();
    let n = tau.len();
    let best_const = yt.iter().zip(&tt).map(|(a, b)| a * b).sum::<f64>() / tt.iter().map(|b| b * b).sum::<f64>();
    (r_objective(&tau, &yt, &tt), r_objective(&vec![0.0; n], &yt, &tt), r_objective(&vec![best_const; n], &yt, &tt))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn r_learner_dominates_constants(seed in any::<u64>(), s in setup()) {
        let data = gen_cate(s, 150, 1.0, seed).unwrap();
        let gbrt = GbrtPredictor { grid: GbrtGrid::single(GbrtParams { n_trees: 30, max_depth: 2, learning_rate: 0.1 }), folds: 2, seed };
        let ridge = PolyRidge { degree: 2, lambda: 1e-2 };
        for est in [
            hte::r_learner(&gbrt, &OlsPredictor, &FunctionPredictor(|_: &[f64]| 0.5), &data, DEFAULT_CLIP).unwrap(),
            hte::oracle_r_learner(&ridge, &data, DEFAULT_CLIP).unwrap(),
        ] {
            let (ours, zero, constant) = r_loss(&est, &data);
            prop_assert!(ours <= zero + 1e-12 && ours <= constant + 1e-12, "{} {} {}", ours, zero, constant);
        }
    }

    #[test]
    fn gpr_winner_dominates_candidates(seed in any::<u64>(), n in 4usize..9) {
        let rows = normal_rows(seed, n, 1);
        let y: Vec<f64> = rows.iter().map(|r| r[0].sin()).collect();
        let data = Dataset::from_rows(&rows, Some(y)).unwrap();
        let m = fit_gpr(&data, &[0.05, 0.2], seed).unwrap();
        for c in m.candidates() {
            prop_assert!(m.log_marginal_likelihood() >= c.log_marginal_likelihood - 1e-9);
            let k = Kernel::new(c.family, c.log_params.clone()).unwrap();
            let (lml, _) = log_marginal_likelihood(&data, &k, c.noise).unwrap();
            prop_assert!((lml - c.log_marginal_likelihood).abs() < 1e-8 * (1.0 + lml.abs()));
        }
    }

    #[test]
    fn pl_selection_invariances(seed in any::<u64>()) {
        let b = gen_covshift(MeanFunction::II, 60, 10, 40, seed).unwrap();
        let grid = log_grid(1e-4, 1.0, 5);
        let a = pl_select(&b, &grid, KrrKernel::MedianRbf, seed).unwrap();
        let again = pl_select(&b, &grid, KrrKernel::MedianRbf, seed).unwrap();
        prop_assert_eq!(&a.split, &again.split);
        prop_assert_eq!(a.chosen_index, again.chosen_index);
        let mut order: Vec<usize> = (0..b.target_aux.n()).collect();
        order.reverse();
        order.rotate_left((seed % 40) as usize);
        let mut shuffled = b.clone();
        shuffled.target_aux = b.target_aux.select_rows(&order);
        let s = pl_select(&shuffled, &grid, KrrKernel::MedianRbf, seed).unwrap();
        for (x, y) in a.selection_scores.iter().zip(&s.selection_scores) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
        let o = wang_oracle_select(&b, &grid, KrrKernel::MedianRbf, seed).unwrap();
        prop_assert!(o.true_aux_risk.iter().all(|r| o.true_aux_risk[o.chosen_index] <= *r));
    }

    #[test]
    fn evaluation_invariants(seed in any::<u64>(), reps in 2usize..8) {
        let mut rng = rng_from_seed(seed);
        let star = [0.5, -1.0, 2.0];
        let est: Vec<Vec<f64>> = (0..reps).map(|_| star.iter().map(|s| s + rng.random::<f64>() - 0.3).collect()).collect();
        let bv = bias_variance(&est, &star).unwrap();
        let mse = est.iter().map(|e| e.iter().zip(&star).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sum::<f64>() / reps as f64;
        prop_assert!((bv.mse() - mse).abs() < 1e-12);

        let design = gen_sparse_linear(8, 3, BetaType::I, CovType::Banded, 2.0, 80, 200, seed).unwrap();
        let model = GbrtPredictor { grid: GbrtGrid::single(GbrtParams { n_trees: 20, max_depth: 2, learning_rate: 0.1 }), folds: 2, seed }
            .fit(&design.train).unwrap();
        for j in 0..8 {
            let c = ale(model.as_ref(), &design.test, j, 40).unwrap();
            prop_assert!(c.centering_error().abs() < 1e-10);
        }
        let s = linear_surrogate(model.as_ref(), &design.test, &[0, 1]).unwrap();
        prop_assert!(s.r2 <= 1.0 + 1e-12);

        for m in [NoiseModel::M1, NoiseModel::M2] {
            let b = gen_labelnoise(m, 200, 0.2, 1000, seed).unwrap();
            let knn = fit_knn(&b.train, 5).unwrap();
            prop_assert!(excess_risk(&knn, &b).unwrap() >= -1e-12);
        }
    }
}

proptest! {
    #[test]
    fn gaussian_quantiles_are_ordered(mean in prop::collection::vec(-1e3f64..1e3, 1..10), sd in 0.0f64..50.0) {
        let n = mean.len();
        let d = PredictiveDistribution::gaussian(mean, vec![sd; n]);
        for q in &d.quantiles {
            prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
        }
        prop_assert!(PredictiveDistribution::new(d.mean.clone(), d.sd.clone(), d.quantiles.clone()).is_ok());
    }
}
