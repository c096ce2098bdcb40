use std::fs;
use std::path::{Path, PathBuf};

use fracgcl::encoder::{bank_forward, combine_views, EncoderBank};
use fracgcl::eval::{
    check_theorem_sgi, effective_rank, energy_spectrum, fourier_spread, linear_probe, random_walk_markov,
    random_walk_sim, rc_ratio, stability_harness, tv_distance, walk_oracle, Perturbation, WalkConfig,
};
use fracgcl::graph::{eigendecompose, normalized_laplacian, Graph, Signal, SpectralBasis};
use fracgcl::io::{
    load_dataset, load_matrix_bin, load_matrix_csv, matrix_to_bytes, save_dataset, save_json, save_matrix_csv,
    synth_cycle, synth_grid, synth_path, synth_random_connected, synth_sbm, write_atomic, Dataset, DatasetPaths,
};
use fracgcl::rng::{indexed_stream, Purpose};
use fracgcl::train::{avla, tune_beta};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::json;

use crate::config::{PerturbKind, RunConfig, Topology};
use crate::CliError;

/// Output directory plus the list of files written so far.
pub struct Out {
    dir: PathBuf,
    pub written: Vec<String>,
}

impl Out {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Out { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        save_json(&self.path(name), value)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        write_atomic(&self.path(name), text.as_bytes())?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn matrix(&mut self, stem: &str, m: &DMatrix<f64>) -> Result<(), CliError> {
        save_matrix_csv(&self.path(&format!("{stem}.csv")), m, "y")?;
        write_atomic(&self.path(&format!("{stem}.bin")), &matrix_to_bytes(m))?;
        self.written.push(format!("{stem}.csv"));
        self.written.push(format!("{stem}.bin"));
        Ok(())
    }
}

fn need_dataset(cfg: &RunConfig, what: &str) -> Result<Dataset, CliError> {
    let d = &cfg.data;
    if d.topology.is_some() {
        return Err(CliError::Validation(format!("{what} needs features and labels; `data.topology` gives only a graph")));
    }
    if let Some(dir) = &d.dir {
        let p = DatasetPaths::in_dir(dir);
        return Ok(load_dataset(&p.edges, &p.features, &p.labels, &p.splits)?);
    }
    if let (Some(e), Some(f), Some(l), Some(s)) = (&d.edges, &d.features, &d.labels, &d.splits) {
        return Ok(load_dataset(e, f, l, s)?);
    }
    Ok(synth_sbm(&cfg.synth)?)
}

/// The graph plus, when the source has them, node features.
fn load_graph(cfg: &RunConfig) -> Result<(Graph, Option<DMatrix<f64>>), CliError> {
    let d = &cfg.data;
    let Some(kind) = d.topology else {
        let ds = need_dataset(cfg, "")?;
        return Ok((ds.graph, Some(ds.features)));
    };
    let need = |v: Option<usize>, name: &str| v.ok_or_else(|| CliError::Validation(format!("data.topology needs `data.{name}`")));
    let g = match kind {
        Topology::Cycle => synth_cycle(need(d.n, "n")?)?,
        Topology::Path => synth_path(need(d.n, "n")?)?,
        Topology::Grid => synth_grid(need(d.rows, "rows")?, need(d.cols, "cols")?)?,
        Topology::Random => synth_random_connected(need(d.n, "n")?, d.p.unwrap_or(0.2), cfg.synth.seed)?,
    };
    Ok((g, None))
}

fn basis_of(g: &Graph) -> Result<SpectralBasis, CliError> {
    Ok(eigendecompose(&normalized_laplacian(g))?)
}

fn load_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    Ok(match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => load_matrix_bin(path)?,
        _ => load_matrix_csv(path)?,
    })
}

/// The embedding named in `inputs.embedding`, or the raw features.
fn embedding_or_features(cfg: &RunConfig, ds: &Dataset) -> Result<(DMatrix<f64>, String), CliError> {
    match &cfg.inputs.embedding {
        Some(p) => {
            let m = load_matrix(p)?;
            if m.nrows() != ds.n_nodes() {
                return Err(CliError::Validation(format!(
                    "embedding {} has {} rows for {} nodes",
                    p.display(),
                    m.nrows(),
                    ds.n_nodes()
                )));
            }
            Ok((m, p.display().to_string()))
        }
        None => Ok((ds.features.clone(), "features".into())),
    }
}

fn gaussian_matrix(r: usize, c: usize, seed: u64, index: u64) -> DMatrix<f64> {
    let mut rng = indexed_stream(seed, Purpose::Perturb, index);
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn synth(cfg: &RunConfig, out: &mut Out) -> Result<String, CliError> {
    let ds = synth_sbm(&cfg.synth)?;
    save_dataset(&cfg.out_dir, &ds)?;
    out.written.extend(["edges.txt", "features.csv", "labels.csv", "splits.json"].map(String::from));
    Ok(format!(
        "{} nodes, {} edges, {} classes, connected: {}",
        ds.n_nodes(),
        ds.graph.n_edges(),
        cfg.synth.n_blocks,
        ds.graph.is_connected()
    ))
}

pub fn train(cfg: &RunConfig, out: &mut Out) -> Result<String, CliError> {
    let ds = need_dataset(cfg, "train")?;
    let basis = basis_of(&ds.graph)?;
    let r = avla(&basis, &ds.features, &cfg.train)?;
    out.json("bank.json", &r.bank)?;
    out.json("train_report.json", &r.report)?;
    Ok(format!("K~ = {}, alphas = {:?}", r.k_tilde, r.alphas))
}

pub fn embed(cfg: &RunConfig, out: &mut Out) -> Result<String, CliError> {
    let ds = need_dataset(cfg, "embed")?;
    let bank_path = cfg.inputs.bank.clone().unwrap_or_else(|| out.path("bank.json"));
    let text = fs::read_to_string(&bank_path)
        .map_err(|e| CliError::Validation(format!("cannot read bank {}: {e}", bank_path.display())))?;
    let bank: EncoderBank = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("bank {}: {e}", bank_path.display())))?;
    let bank = EncoderBank::new(bank.encoders().to_vec())?;
    let basis = basis_of(&ds.graph)?;
    let views = bank_forward(&basis, &ds.features, &bank, cfg.train.activation)?;
    let beta = match &cfg.embed.beta {
        Some(b) => b.clone(),
        None => {
            let ys: Vec<DMatrix<f64>> = views.iter().map(|v| v.y.clone()).collect();
            tune_beta(&ys, &ds.labels, &ds.splits, &cfg.probe)?
        }
    };
    let y = combine_views(&views, &beta)?;
    out.matrix("embedding", &y)?;
    out.json("embed.json", &json!({ "alphas": bank.alphas(), "beta": beta, "rows": y.nrows(), "cols": y.ncols() }))?;
    Ok(format!("{}x{} embedding, beta = {beta:?}", y.nrows(), y.ncols()))
}

pub fn probe(cfg: &RunConfig, out: &mut Out) -> Result<String, CliError> {
    let ds = need_dataset(cfg, "probe")?;
    let (y, source) = embedding_or_features(cfg, &ds)?;
    let r = linear_probe(&y, &ds.labels, &ds.splits, &cfg.probe)?;
    out.json("probe.json", &json!({ "source": source, "train_acc": r.train_acc, "val_acc": r.val_acc, "test_acc": r.test_acc }))?;
    Ok(format!("test accuracy {:.4} on {source}", r.test_acc))
}

pub fn avla_trace(cfg: &RunConfig, out: &mut Out) -> Result<String, CliError> {
    let ds = need_dataset(cfg, "avla-trace")?;
    let basis = basis_of(&ds.graph)?;
    let r = avla(&basis, &ds.features, &cfg.train)?;
    let rep = &r.report;
    let width = rep.alpha_traces.iter().map(Vec::len).max().unwrap_or(0);
    let mut csv = String::from("round,epoch,loss");
    for k in 0..width {
        csv.push_str(&format!(",alpha_{k}"));
    }
    csv.push('\n');
    for ((e, loss), alphas) in rep.epochs.iter().zip(&rep.losses).zip(&rep.alpha_traces) {
        csv.push_str(&format!("{},{},{}", e.round, e.epoch, loss));
        for k in 0..width {
            csv.push(',');
            if let Some(a) = alphas.get(k) {
                csv.push_str(&a.to_string());
            }
        }
        csv.push('\n');
    }
    out.text("alpha_trace.csv", &csv)?;
    out.json(
        "merge_events.json",
        &json!({ "merge_events": rep.merge_events, "k_per_round": rep.k_per_round, "final_alphas": rep.final_alphas }),
    )?;
    Ok(format!("{} merge events, K per round {:?}", rep.merge_events.len(), rep.k_per_round))
}

pub fn diagnose(cfg: &RunConfig, which: &str, out: &mut Out) -> Result<String, CliError> {
    let dg = &cfg.diagnose;
    let name = format!("diagnose_{which}.json");
    match which {
        "rc" => {
            let ds = need_dataset(cfg, "diagnose rc")?;
            let (y, source) = embedding_or_features(cfg, &ds)?;
            let entries = rc_ratio(&y, &ds.labels)?;
            out.json(&name, &json!({ "source": source, "classes": entries }))?;
            Ok(format!("{} classes", entries.len()))
        }
        "pca" => {
            let ds = need_dataset(cfg, "diagnose pca")?;
            let (y, source) = embedding_or_features(cfg, &ds)?;
            let spectrum = energy_spectrum(&y)?;
            let rank = effective_rank(&y, dg.theta)?;
            out.json(&name, &json!({ "source": source, "theta": dg.theta, "effective_rank": rank, "spectrum": spectrum }))?;
            Ok(format!("effective rank {rank} at theta {}", dg.theta))
        }
        "fourier" => {
            let ds = need_dataset(cfg, "diagnose fourier")?;
            let (y, source) = embedding_or_features(cfg, &ds)?;
            let basis = basis_of(&ds.graph)?;
            let spread = fourier_spread(&basis, &y)?;
            let total: f64 = spread.iter().sum();
            let smooth = if total > 0.0 { spread[0] / total } else { 0.0 };
            out.json(
                &name,
                &json!({ "source": source, "eigenvalues": basis.eigenvalues(), "spread": spread, "smooth_share": smooth }),
            )?;
            Ok(format!("m_1 / sum m = {smooth:.4}"))
        }
        "theorem" => {
            let (g, features) = load_graph(cfg)?;
            let basis = basis_of(&g)?;
            let n = g.n_nodes();
            let signal: Vec<f64> = match features {
                Some(f) => {
                    if dg.signal_column >= f.ncols() {
                        return Err(CliError::Validation(format!(
                            "diagnose.signal_column {} out of range for {} feature columns",
                            dg.signal_column,
                            f.ncols()
                        )));
                    }
                    f.column(dg.signal_column).iter().copied().collect()
                }
                None => gaussian_matrix(n, 1, cfg.master_seed(), 0).iter().copied().collect(),
            };
            let r = check_theorem_sgi(&basis, &Signal::from_slice(&signal)?, dg.alpha_l, dg.alpha_g, dg.tau, dg.m)?;
            let verdict = |b: bool| if b { "PASS" } else { "FAIL" };
            out.json(
                &name,
                &json!({
                    "verdict": {
                        "positivity": verdict(r.positivity),
                        "decreasing": verdict(r.decreasing),
                        "dominance": verdict(r.dominance),
                        "parts_abc": verdict(r.parts_abc()),
                        "agreement": verdict(r.agreement),
                    },
                    "report": r,
                }),
            )?;
            Ok(format!(
                "parts (a)(b)(c): {}, agreement: {} (max rel err {:.3e} / {:.3e})",
                verdict(r.parts_abc()),
                verdict(r.agreement),
                r.max_rel_err_l,
                r.max_rel_err_g
            ))
        }
        other => Err(CliError::Validation(format!("unknown diagnostic `{other}` (rc, pca, fourier, theorem)"))),
    }
}

pub fn walk(cfg: &RunConfig, out: &mut Out) -> Result<String, CliError> {
    let (g, _) = load_graph(cfg)?;
    let basis = basis_of(&g)?;
    let w = &cfg.walk;
    let (sim, mode) = if w.alpha == 1.0 {
        (random_walk_markov(&g, w.t_end, w.n_walkers, w.seed, w.start)?, "markov")
    } else {
        let wc = WalkConfig { alpha: w.alpha, t_end: w.t_end, delta_tau: w.delta_tau, n_walkers: w.n_walkers, seed: w.seed };
        (random_walk_sim(&g, &wc, w.start)?, "fractional")
    };
    let oracle = walk_oracle(&g, &basis, w.alpha, w.t_end, w.start)?;
    let tv = tv_distance(&sim, &oracle);
    let mut csv = String::from("node,empirical,oracle\n");
    for (i, (a, b)) in sim.iter().zip(&oracle).enumerate() {
        csv.push_str(&format!("{i},{a},{b}\n"));
    }
    out.text("walk.csv", &csv)?;
    out.json("walk.json", &json!({ "mode": mode, "tv_distance": tv, "walk": w }))?;
    Ok(format!("TV distance {tv:.4} ({mode} walk, {} walkers)", w.n_walkers))
}

pub fn stability(cfg: &RunConfig, out: &mut Out) -> Result<String, CliError> {
    let (g, _) = load_graph(cfg)?;
    let basis = basis_of(&g)?;
    let s = &cfg.stability;
    let n = g.n_nodes();
    let y0 = gaussian_matrix(n, s.width, s.seed, 0);
    let mut dir = gaussian_matrix(n, s.width, s.seed, 1);
    // the stationary mode never decays, so it is left out of the direction
    let u1 = DMatrix::from_column_slice(n, 1, basis.eigenvector(0).as_slice());
    dir -= &u1 * (u1.transpose() * &dir);
    let p = match s.perturbation {
        PerturbKind::InitState => Perturbation::init_state(s.epsilon, &dir)?,
        PerturbKind::Forcing => Perturbation::Forcing { delta: &dir * (s.epsilon / dir.norm()) },
        PerturbKind::Topology => Perturbation::topology(&g, s.ratio, s.mode, s.seed)?,
    };
    let curves = stability_harness(&basis, &y0, &s.alphas, &s.t_grid, &p)?;
    let mut csv = String::from("alpha,t,discrepancy,bound\n");
    for c in &curves {
        for ((t, d), b) in c.times.iter().zip(&c.discrepancy).zip(&c.bound) {
            csv.push_str(&format!("{},{t},{d},{b}\n", c.alpha));
        }
    }
    out.text("stability.csv", &csv)?;
    let verdicts: Vec<_> = curves
        .iter()
        .map(|c| json!({ "alpha": c.alpha, "within_bound": c.within_bound, "fitted_c": c.fitted_c }))
        .collect();
    out.json("stability.json", &json!({ "epsilon": p.magnitude(), "verdicts": verdicts, "curves": curves }))?;
    let held = curves.iter().filter(|c| c.within_bound).count();
    Ok(format!("bound holds for {held}/{} orders", curves.len()))
}
