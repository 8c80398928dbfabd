//! Estimation engine: identification-expression building blocks with
//! plug-in, doubly-robust, and cross-fitted evaluation.
//!
//! Every estimand used by the public measures is assembled from five blocks,
//! each computed as a per-row contribution vector whose mean is the block
//! value (so linear combinations of blocks keep per-row contributions for
//! stderr approximations):
//!
//! - `GroupMean(x)`   E[Y | X = x]
//! - `T1(x)`          E[Y_x]                    (adjusting for Z)
//! - `Cond(b, a)`     E[Y_b | X = a]
//! - `Med(b, a)`      E[Y_{b, W_a}]             (mediated functional)
//! - `MedCond(b,a,c)` E[Y_{b, W_a} | X = c]
//!
//! The doubly-robust forms keep the residual-correction terms; the plug-in
//! forms drop them and evaluate the same nuisances under the identification
//! expression's weighting law.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::dataset::Dataset;
use crate::diagram::SfmRoles;
use crate::error::{Error, Result};
use crate::estimate::nuisance::{
    fit_logistic, fit_regression, predict_linear, predict_logistic,
};
use crate::estimate::EstimatorConfig;

/// Dataset bound to SFM roles with features extracted once.
pub(crate) struct BoundData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// [1, z...] (+ optional pairwise interactions)
    pub z_feats: Vec<Vec<f64>>,
    /// [1, z..., w...] (+ optional pairwise interactions)
    pub zw_feats: Vec<Vec<f64>>,
    /// Raw z and w columns for cell logic.
    pub z_cols: Vec<Vec<f64>>,
    pub w_cols: Vec<Vec<f64>>,
    /// Per-row discrete cell keys, precomputed for the saturated nuisances.
    z_keys: Vec<Vec<u64>>,
    zw_keys: Vec<Vec<u64>>,
    pub y_binary: bool,
    pub n: usize,
}

impl BoundData {
    pub fn bind(ds: &Dataset, roles: &SfmRoles, interactions: bool) -> Result<BoundData> {
        if ds.n_rows() == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        let x = ds.column(&roles.x)?;
        for v in &x {
            if *v != 0.0 && *v != 1.0 {
                return Err(Error::Data(format!(
                    "attribute `{}` must be binary 0/1, found {v}",
                    roles.x
                )));
            }
        }
        let n1 = x.iter().filter(|v| **v == 1.0).count();
        if n1 == 0 || n1 == x.len() {
            return Err(Error::Data("both attribute groups must be non-empty".into()));
        }
        let y = ds.column(&roles.y)?;
        let y_binary = y.iter().all(|v| *v == 0.0 || *v == 1.0);
        let z_cols: Vec<Vec<f64>> = roles
            .z
            .iter()
            .map(|c| ds.column(c))
            .collect::<Result<_>>()?;
        let w_cols: Vec<Vec<f64>> = roles
            .w
            .iter()
            .map(|c| ds.column(c))
            .collect::<Result<_>>()?;
        let n = y.len();
        let feats = |groups: &[&Vec<Vec<f64>>]| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| {
                    let mut row = vec![1.0];
                    for g in groups {
                        for col in g.iter() {
                            row.push(col[i]);
                        }
                    }
                    if interactions {
                        let base: Vec<f64> = row[1..].to_vec();
                        for a in 0..base.len() {
                            for b in (a + 1)..base.len() {
                                row.push(base[a] * base[b]);
                            }
                        }
                    }
                    row
                })
                .collect()
        };
        let z_keys: Vec<Vec<u64>> = (0..n)
            .map(|i| z_cols.iter().map(|c| c[i].to_bits()).collect())
            .collect();
        let zw_keys: Vec<Vec<u64>> = (0..n)
            .map(|i| {
                z_cols
                    .iter()
                    .chain(w_cols.iter())
                    .map(|c| c[i].to_bits())
                    .collect()
            })
            .collect();
        Ok(BoundData {
            z_feats: feats(&[&z_cols]),
            zw_feats: feats(&[&z_cols, &w_cols]),
            x,
            y,
            z_cols,
            w_cols,
            z_keys,
            zw_keys,
            y_binary,
            n,
        })
    }

    pub fn frac_x(&self, x: f64) -> f64 {
        self.x.iter().filter(|v| **v == x).count() as f64 / self.n as f64
    }

    fn z_key(&self, i: usize) -> &[u64] {
        &self.z_keys[i]
    }

    fn zw_key(&self, i: usize) -> &[u64] {
        &self.zw_keys[i]
    }
}

/// Nuisance predictions for row `i`; probabilities are unclipped.
pub(crate) trait NuisanceProvider {
    fn p_x1_z(&self, d: &BoundData, i: usize) -> Result<f64>;
    fn p_x1_zw(&self, d: &BoundData, i: usize) -> Result<f64>;
    fn mu_z(&self, d: &BoundData, x: f64, i: usize) -> Result<f64>;
    fn mu_zw(&self, d: &BoundData, x: f64, i: usize) -> Result<f64>;
    /// E[mu(b, W, Z) | X = a, Z = z_i].
    fn nested(&self, d: &BoundData, b: f64, a: f64, i: usize) -> Result<f64>;
}

/// Parametric nuisances: logistic propensities, per-arm outcome models
/// (logistic for binary outcomes, linear otherwise), and a nested mean fitted
/// on held-out outcome-model predictions.
pub(crate) struct ParametricNuisance {
    prop_z: Vec<f64>,
    prop_zw: Vec<f64>,
    mu_z: BTreeMap<u64, Vec<f64>>,
    mu_zw: BTreeMap<u64, Vec<f64>>,
    nested: BTreeMap<(u64, u64), Vec<f64>>,
    y_binary: bool,
}

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;
const LOGIT_EPS: f64 = 1e-6;

fn logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS);
    (p / (1.0 - p)).ln()
}

impl ParametricNuisance {
    /// Fit on `train`; the nested mean uses a sub-split of `train` so the
    /// outcome model and its regression-on-Z are estimated on disjoint rows.
    pub fn fit(
        d: &BoundData,
        train: &[usize],
        split_nested: bool,
        seed: u64,
    ) -> Result<ParametricNuisance> {
        let take = |idx: &[usize], cols: &[Vec<f64>]| -> Vec<Vec<f64>> {
            idx.iter().map(|&i| cols[i].clone()).collect()
        };
        let labels: Vec<f64> = train.iter().map(|&i| d.x[i]).collect();
        let prop_z = fit_logistic(&take(train, &d.z_feats), &labels, MAX_ITER, TOL)?.coefficients;
        let prop_zw =
            fit_logistic(&take(train, &d.zw_feats), &labels, MAX_ITER, TOL)?.coefficients;

        // Sub-split for the nested mean when cross-fitting.
        let (mu_train, nested_train): (Vec<usize>, Vec<usize>) = if split_nested {
            let mut idx = train.to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0511);
            idx.shuffle(&mut rng);
            let half = idx.len() / 2;
            (idx[..half].to_vec(), idx[half..].to_vec())
        } else {
            (train.to_vec(), train.to_vec())
        };

        let mut this = ParametricNuisance {
            prop_z,
            prop_zw,
            mu_z: BTreeMap::new(),
            mu_zw: BTreeMap::new(),
            nested: BTreeMap::new(),
            y_binary: d.y_binary,
        };
        for arm in [0.0, 1.0] {
            let rows: Vec<usize> = mu_train
                .iter()
                .copied()
                .filter(|&i| d.x[i] == arm)
                .collect();
            if rows.len() < d.zw_feats[0].len() + 2 {
                return Err(Error::Estimation(format!(
                    "too few rows ({}) with X = {arm} to fit outcome models",
                    rows.len()
                )));
            }
            let ys: Vec<f64> = rows.iter().map(|&i| d.y[i]).collect();
            let fit_outcome = |feats: &[Vec<f64>]| -> Result<Vec<f64>> {
                Ok(if d.y_binary {
                    fit_logistic(feats, &ys, MAX_ITER, TOL)?.coefficients
                } else {
                    fit_regression(feats, &ys)?.coefficients
                })
            };
            this.mu_z
                .insert(arm.to_bits(), fit_outcome(&take(&rows, &d.z_feats))?);
            this.mu_zw
                .insert(arm.to_bits(), fit_outcome(&take(&rows, &d.zw_feats))?);
        }
        // Nested means for both (b, a) orientations.
        for (b, a) in [(1.0, 0.0), (0.0, 1.0)] {
            let rows: Vec<usize> = nested_train
                .iter()
                .copied()
                .filter(|&i| d.x[i] == a)
                .collect();
            if rows.len() < d.z_feats[0].len() + 2 {
                return Err(Error::Estimation(format!(
                    "too few rows with X = {a} for the nested mean"
                )));
            }
            // Held-out predictions mu(b, W_i, Z_i), regressed on Z. Binary
            // outcomes are fitted on the logit scale for stable extrapolation.
            let preds: Vec<f64> = rows
                .iter()
                .map(|&i| this.predict_mu(d, &d.zw_feats[i], b))
                .collect();
            let targets: Vec<f64> = if d.y_binary {
                preds.iter().map(|p| logit(*p)).collect()
            } else {
                preds
            };
            let coefs = fit_regression(&take(&rows, &d.z_feats), &targets)?.coefficients;
            this.nested.insert((b.to_bits(), a.to_bits()), coefs);
        }
        Ok(this)
    }

    fn predict_mu(&self, _d: &BoundData, feats: &[f64], arm: f64) -> f64 {
        let coefs = &self.mu_zw[&arm.to_bits()];
        if self.y_binary {
            predict_logistic(coefs, feats)
        } else {
            predict_linear(coefs, feats)
        }
    }
}

impl NuisanceProvider for ParametricNuisance {
    fn p_x1_z(&self, d: &BoundData, i: usize) -> Result<f64> {
        Ok(predict_logistic(&self.prop_z, &d.z_feats[i]))
    }
    fn p_x1_zw(&self, d: &BoundData, i: usize) -> Result<f64> {
        Ok(predict_logistic(&self.prop_zw, &d.zw_feats[i]))
    }
    fn mu_z(&self, d: &BoundData, x: f64, i: usize) -> Result<f64> {
        let coefs = &self.mu_z[&x.to_bits()];
        // Arm-specific model over z features.
        Ok(if self.y_binary {
            predict_logistic(coefs, &d.z_feats[i])
        } else {
            predict_linear(coefs, &d.z_feats[i])
        })
    }
    fn mu_zw(&self, d: &BoundData, x: f64, i: usize) -> Result<f64> {
        Ok(self.predict_mu(d, &d.zw_feats[i], x))
    }
    fn nested(&self, d: &BoundData, b: f64, a: f64, i: usize) -> Result<f64> {
        let coefs = &self.nested[&(b.to_bits(), a.to_bits())];
        let raw = predict_linear(coefs, &d.z_feats[i]);
        Ok(if self.y_binary {
            1.0 / (1.0 + (-raw).exp())
        } else {
            raw
        })
    }
}

/// Saturated (frequency-table) nuisances for fully discrete Z and W.
///
/// Everything, including the nested means for both transition orientations,
/// is tabulated at fit time; lookups are allocation-free.
pub(crate) struct SaturatedNuisance {
    p_x1_z: BTreeMap<Vec<u64>, f64>,
    p_x1_zw: BTreeMap<Vec<u64>, f64>,
    /// Keyed by attribute-arm bits, then cell.
    mu_z: BTreeMap<u64, BTreeMap<Vec<u64>, f64>>,
    mu_zw: BTreeMap<u64, BTreeMap<Vec<u64>, f64>>,
    /// (b, a) -> z-cell -> sum_w P(w | a, z) mu(b, z, w).
    nested_cache: BTreeMap<(u64, u64), BTreeMap<Vec<u64>, Result<f64>>>,
    /// Marginal per-arm outcome means, for misspecification experiments.
    mu_marginal: BTreeMap<u64, f64>,
    /// Ignore Z in the outcome models (deliberate misspecification).
    pub omit_z_from_mu: bool,
}

fn cell_err(what: &str, key: &[u64]) -> Error {
    let vals: Vec<String> = key
        .iter()
        .map(|b| format!("{}", f64::from_bits(*b)))
        .collect();
    Error::Estimation(format!(
        "empty cell: no rows for {what} ({})",
        vals.join(", ")
    ))
}

impl SaturatedNuisance {
    pub fn fit(d: &BoundData, train: &[usize]) -> Result<SaturatedNuisance> {
        let mut count_z: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
        let mut count_zw: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
        let mut sum_mu_z: BTreeMap<u64, BTreeMap<Vec<u64>, (f64, f64)>> = BTreeMap::new();
        let mut sum_mu_zw: BTreeMap<u64, BTreeMap<Vec<u64>, (f64, f64)>> = BTreeMap::new();
        let mut w_counts: BTreeMap<(u64, Vec<u64>), BTreeMap<Vec<u64>, f64>> = BTreeMap::new();
        let mut marg: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
        for &i in train {
            let zk = d.z_key(i);
            let zwk = d.zw_key(i);
            let wk: Vec<u64> = d.w_cols.iter().map(|c| c[i].to_bits()).collect();
            let xb = d.x[i].to_bits();
            let e = count_z.entry(zk.to_vec()).or_insert((0.0, 0.0));
            e.0 += d.x[i];
            e.1 += 1.0;
            let e = count_zw.entry(zwk.to_vec()).or_insert((0.0, 0.0));
            e.0 += d.x[i];
            e.1 += 1.0;
            let e = sum_mu_z
                .entry(xb)
                .or_default()
                .entry(zk.to_vec())
                .or_insert((0.0, 0.0));
            e.0 += d.y[i];
            e.1 += 1.0;
            let e = sum_mu_zw
                .entry(xb)
                .or_default()
                .entry(zwk.to_vec())
                .or_insert((0.0, 0.0));
            e.0 += d.y[i];
            e.1 += 1.0;
            *w_counts
                .entry((xb, zk.to_vec()))
                .or_default()
                .entry(wk)
                .or_insert(0.0) += 1.0;
            let e = marg.entry(xb).or_insert((0.0, 0.0));
            e.0 += d.y[i];
            e.1 += 1.0;
        }
        let ratio =
            |m: BTreeMap<Vec<u64>, (f64, f64)>| -> BTreeMap<Vec<u64>, f64> {
                m.into_iter().map(|(k, (s, n))| (k, s / n)).collect()
            };
        let mu_z: BTreeMap<u64, BTreeMap<Vec<u64>, f64>> =
            sum_mu_z.into_iter().map(|(x, m)| (x, ratio(m))).collect();
        let mu_zw: BTreeMap<u64, BTreeMap<Vec<u64>, f64>> =
            sum_mu_zw.into_iter().map(|(x, m)| (x, ratio(m))).collect();

        // Tabulate the nested means over observed z-cells, both orientations.
        let mut nested_cache: BTreeMap<(u64, u64), BTreeMap<Vec<u64>, Result<f64>>> =
            BTreeMap::new();
        for (b, a) in [(1.0f64, 0.0f64), (0.0, 1.0)] {
            let mut per_cell: BTreeMap<Vec<u64>, Result<f64>> = BTreeMap::new();
            for zk in count_z.keys() {
                let value = (|| -> Result<f64> {
                    let cells = w_counts
                        .get(&(a.to_bits(), zk.clone()))
                        .ok_or_else(|| cell_err(&format!("P(w | x={a}, z)"), zk))?;
                    let total: f64 = cells.values().sum();
                    let mut acc = 0.0;
                    for (wk, c) in cells {
                        let mut zwk = zk.clone();
                        zwk.extend_from_slice(wk);
                        let mu = mu_zw
                            .get(&b.to_bits())
                            .and_then(|m| m.get(&zwk))
                            .copied()
                            .ok_or_else(|| cell_err(&format!("E[y | x={b}, z, w]"), &zwk))?;
                        acc += (c / total) * mu;
                    }
                    Ok(acc)
                })();
                per_cell.insert(zk.clone(), value);
            }
            nested_cache.insert((b.to_bits(), a.to_bits()), per_cell);
        }
        Ok(SaturatedNuisance {
            p_x1_z: ratio(count_z),
            p_x1_zw: ratio(count_zw),
            mu_z,
            mu_zw,
            nested_cache,
            mu_marginal: marg.into_iter().map(|(x, (s, n))| (x, s / n)).collect(),
            omit_z_from_mu: false,
        })
    }
}

impl NuisanceProvider for SaturatedNuisance {
    fn p_x1_z(&self, d: &BoundData, i: usize) -> Result<f64> {
        let k = d.z_key(i);
        self.p_x1_z
            .get(k)
            .copied()
            .ok_or_else(|| cell_err("p(x|z)", k))
    }
    fn p_x1_zw(&self, d: &BoundData, i: usize) -> Result<f64> {
        let k = d.zw_key(i);
        self.p_x1_zw
            .get(k)
            .copied()
            .ok_or_else(|| cell_err("p(x|z,w)", k))
    }
    fn mu_z(&self, d: &BoundData, x: f64, i: usize) -> Result<f64> {
        if self.omit_z_from_mu {
            return self
                .mu_marginal
                .get(&x.to_bits())
                .copied()
                .ok_or_else(|| cell_err(&format!("E[y | x={x}]"), &[]));
        }
        let k = d.z_key(i);
        self.mu_z
            .get(&x.to_bits())
            .and_then(|m| m.get(k))
            .copied()
            .ok_or_else(|| cell_err(&format!("E[y | x={x}, z]"), k))
    }
    fn mu_zw(&self, d: &BoundData, x: f64, i: usize) -> Result<f64> {
        let k = d.zw_key(i);
        self.mu_zw
            .get(&x.to_bits())
            .and_then(|m| m.get(k))
            .copied()
            .ok_or_else(|| cell_err(&format!("E[y | x={x}, z, w]"), k))
    }
    fn nested(&self, d: &BoundData, b: f64, a: f64, i: usize) -> Result<f64> {
        let k = d.z_key(i);
        match self
            .nested_cache
            .get(&(b.to_bits(), a.to_bits()))
            .and_then(|m| m.get(k))
        {
            Some(Ok(v)) => Ok(*v),
            Some(Err(e)) => Err(Error::Estimation(e.to_string())),
            None => Err(cell_err(&format!("P(w | x={a}, z)"), k)),
        }
    }
}

/// Estimand building blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Block {
    GroupMean { x: f64 },
    T1 { x: f64 },
    Cond { b: f64, a: f64 },
    /// Cell means of `T1` and `Med` per-row terms give the z-specific values.
    Med { b: f64, a: f64 },
    MedCond { b: f64, a: f64, c: f64 },
}

pub(crate) struct Engine<'a> {
    pub d: &'a BoundData,
    providers: Vec<(Vec<usize>, Box<dyn NuisanceProvider + 'a>)>,
    clip: f64,
    plugin: bool,
    pub clipped: usize,
    pub clip_used: usize,
}

impl<'a> Engine<'a> {
    /// In-sample engine (plug-in or doubly robust): one provider for all rows.
    pub fn in_sample(
        d: &'a BoundData,
        provider: Box<dyn NuisanceProvider + 'a>,
        cfg: &EstimatorConfig,
        plugin: bool,
    ) -> Engine<'a> {
        Engine {
            d,
            providers: vec![((0..d.n).collect(), provider)],
            clip: cfg.clip,
            plugin,
            clipped: 0,
            clip_used: 0,
        }
    }

    /// Cross-fitted engine: K folds, nuisances fitted on each complement with
    /// the nested mean on a further sub-split.
    pub fn cross_fit(d: &'a BoundData, cfg: &EstimatorConfig) -> Result<Engine<'a>> {
        if cfg.folds < 2 {
            return Err(Error::Estimation("cross-fitting needs K >= 2 folds".into()));
        }
        let mut idx: Vec<usize> = (0..d.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        idx.shuffle(&mut rng);
        let fold_of = |pos: usize| pos % cfg.folds;
        let mut folds: Vec<Vec<usize>> = vec![Vec::new(); cfg.folds];
        for (pos, &row) in idx.iter().enumerate() {
            folds[fold_of(pos)].push(row);
        }
        let mut providers: Vec<(Vec<usize>, Box<dyn NuisanceProvider + 'a>)> = Vec::new();
        for k in 0..cfg.folds {
            let train: Vec<usize> = idx
                .iter()
                .enumerate()
                .filter(|(pos, _)| fold_of(*pos) != k)
                .map(|(_, &row)| row)
                .collect();
            let p = ParametricNuisance::fit(d, &train, true, cfg.seed.wrapping_add(k as u64))?;
            providers.push((folds[k].clone(), Box::new(p)));
        }
        Ok(Engine {
            d,
            providers,
            clip: cfg.clip,
            plugin: false,
            clipped: 0,
            clip_used: 0,
        })
    }

    fn clip_p(&mut self, p: f64) -> f64 {
        self.clip_used += 1;
        if p < self.clip || p > 1.0 - self.clip {
            self.clipped += 1;
            p.clamp(self.clip, 1.0 - self.clip)
        } else {
            p
        }
    }

    /// Propensity for X = x given z.
    fn p_z(&mut self, prov: usize, x: f64, i: usize) -> Result<f64> {
        let p1 = self.providers[prov].1.p_x1_z(self.d, i)?;
        let p = if x == 1.0 { p1 } else { 1.0 - p1 };
        Ok(self.clip_p(p))
    }

    fn p_zw(&mut self, prov: usize, x: f64, i: usize) -> Result<f64> {
        let p1 = self.providers[prov].1.p_x1_zw(self.d, i)?;
        let p = if x == 1.0 { p1 } else { 1.0 - p1 };
        Ok(self.clip_p(p))
    }

    /// Per-row contributions of a block, in dataset row order.
    pub fn per_row(&mut self, block: Block) -> Result<Vec<f64>> {
        let n = self.d.n;
        let mut out = vec![0.0; n];
        let n_prov = self.providers.len();
        for prov in 0..n_prov {
            let rows = self.providers[prov].0.clone();
            for i in rows {
                out[i] = self.term(prov, block, i)?;
            }
        }
        Ok(out)
    }

    fn term(&mut self, prov: usize, block: Block, i: usize) -> Result<f64> {
        let d = self.d;
        let (xi, yi) = (d.x[i], d.y[i]);
        match block {
            Block::GroupMean { x } => {
                let p = d.frac_x(x);
                Ok(if xi == x { yi / p } else { 0.0 })
            }
            Block::T1 { x } => {
                let mu = self.providers[prov].1.mu_z(d, x, i)?;
                if self.plugin {
                    return Ok(mu);
                }
                let p = self.p_z(prov, x, i)?;
                Ok(if xi == x { (yi - mu) / p + mu } else { mu })
            }
            Block::Cond { b, a } => {
                let pa_hat = d.frac_x(a);
                let mu_b = self.providers[prov].1.mu_z(d, b, i)?;
                if self.plugin {
                    return Ok(if xi == a { mu_b / pa_hat } else { 0.0 });
                }
                let mut t = 0.0;
                if xi == b {
                    let pa = self.p_z(prov, a, i)?;
                    let pb = self.p_z(prov, b, i)?;
                    t += (pa / pb) * (yi - mu_b);
                }
                if xi == a {
                    t += mu_b;
                }
                Ok(t / pa_hat)
            }
            Block::Med { b, a } => {
                let nu = self.providers[prov].1.nested(d, b, a, i)?;
                if self.plugin {
                    return Ok(nu);
                }
                let mu_b = self.providers[prov].1.mu_zw(d, b, i)?;
                let mut t = nu;
                if xi == b {
                    let pa_zw = self.p_zw(prov, a, i)?;
                    let pb_zw = self.p_zw(prov, b, i)?;
                    let pa_z = self.p_z(prov, a, i)?;
                    t += pa_zw / (pb_zw * pa_z) * (yi - mu_b);
                }
                if xi == a {
                    let pa_z = self.p_z(prov, a, i)?;
                    t += (mu_b - nu) / pa_z;
                }
                Ok(t)
            }
            Block::MedCond { b, a, c } => {
                let pc_hat = d.frac_x(c);
                let nu = self.providers[prov].1.nested(d, b, a, i)?;
                if self.plugin {
                    return Ok(if xi == c { nu / pc_hat } else { 0.0 });
                }
                let mu_b = self.providers[prov].1.mu_zw(d, b, i)?;
                let mut t = 0.0;
                if xi == b {
                    let pa_zw = self.p_zw(prov, a, i)?;
                    let pb_zw = self.p_zw(prov, b, i)?;
                    let pc_z = self.p_z(prov, c, i)?;
                    let pa_z = self.p_z(prov, a, i)?;
                    t += (pa_zw / pb_zw) * (pc_z / pa_z) * (yi - mu_b);
                }
                if xi == a {
                    let pc_z = self.p_z(prov, c, i)?;
                    let pa_z = self.p_z(prov, a, i)?;
                    t += (pc_z / pa_z) * (mu_b - nu);
                }
                if xi == c {
                    t += nu;
                }
                Ok(t / pc_hat)
            }
        }
    }
}
