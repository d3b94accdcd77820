//! Mini-batch training of encoder, decoder and prototypes on
//! `L_DC + L_PC + L_IPS + gamma * L_recon`.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::decoder::{Decoder, DecoderVars};
use super::encoder::{Encoder, EncoderVars};
use super::losses::{assignments, loss_dc, loss_ips, loss_pc, loss_recon_graph};
use super::prototypes::PrototypeSet;
use super::EmbedderConfig;
use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{augment, Graph, GraphDataset};
use crate::nn::Adam;
use crate::rng::{derive_seed, stream};

/// Trained encoder, decoder and prototypes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedder {
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub prototypes: PrototypeSet,
}

/// All embedder parameters bound to one tape.
#[derive(Clone, Debug)]
pub struct EmbedderVars {
    pub encoder: EncoderVars,
    pub decoder: DecoderVars,
    pub centers: Var,
}

/// Loss components of one batch, each a 1 x 1 node on the tape.
#[derive(Clone, Copy, Debug)]
pub struct BatchLosses {
    pub dc: Var,
    pub pc: Var,
    pub ips: Var,
    pub recon: Var,
    pub total: Var,
}

/// Mean loss components over the batches of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub dc: f64,
    pub pc: f64,
    pub ips: f64,
    pub recon: f64,
    pub total: f64,
}

/// One batch: originals (reconstruction targets), their two views and the
/// decoder noise used for each original.
pub struct BatchInput<'a> {
    pub graphs: Vec<&'a Graph>,
    pub view1: Vec<Graph>,
    pub view2: Vec<Graph>,
    pub noise: Vec<Mat>,
}

impl Embedder {
    pub fn bind(&self, t: &Tape) -> EmbedderVars {
        EmbedderVars {
            encoder: self.encoder.bind(t),
            decoder: self.decoder.bind(t),
            centers: t.var(self.prototypes.centers.clone()),
        }
    }

    pub fn params(&self) -> Vec<&Mat> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p.push(&self.prototypes.centers);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p.push(&mut self.prototypes.centers);
        p
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

impl EmbedderVars {
    /// Same order as [`Embedder::params`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.encoder.vars();
        v.extend(self.decoder.vars());
        v.push(self.centers);
        v
    }
}

fn encode_all(t: &Tape, enc: &EncoderVars, graphs: &[&Graph]) -> Result<Var> {
    let rows = graphs
        .iter()
        .map(|g| enc.encode(t, g).map(|(_, z)| z))
        .collect::<Result<Vec<_>>>()?;
    Ok(t.concat_rows(&rows))
}

/// Builds the full objective for one batch on `t`.
pub fn batch_objective(t: &Tape, vars: &EmbedderVars, batch: &BatchInput<'_>, cfg: &EmbedderConfig) -> Result<BatchLosses> {
    if batch.graphs.is_empty() {
        return Err(Error::Empty("embedder batch"));
    }
    let v1: Vec<&Graph> = batch.view1.iter().collect();
    let v2: Vec<&Graph> = batch.view2.iter().collect();
    let z1 = encode_all(t, &vars.encoder, &v1)?;
    let z2 = encode_all(t, &vars.encoder, &v2)?;
    let (c1, c2) = {
        let centers = t.value(vars.centers);
        (
            assignments(&t.value(z1), &centers),
            assignments(&t.value(z2), &centers),
        )
    };
    let dc = loss_dc(t, z1, z2, &c1, &c2, cfg.tau);
    let pc = loss_pc(t, z1, z2, vars.centers, cfg.tau);
    let ips = loss_ips(t, vars.centers);

    let mut recon_terms = Vec::with_capacity(batch.graphs.len());
    for (g, noise) in batch.graphs.iter().zip(&batch.noise) {
        let (_, z) = vars.encoder.encode(t, g)?;
        let decoded = vars.decoder.decode(t, z, noise.clone());
        recon_terms.push(loss_recon_graph(t, g, decoded, cfg.lambda).0);
    }
    let stacked = t.concat_rows(&recon_terms);
    let recon = t.sum(stacked);

    let pco = t.add(dc, pc);
    let pco = t.add(pco, ips);
    let weighted = t.scale(recon, cfg.gamma);
    let total = t.add(pco, weighted);
    Ok(BatchLosses { dc, pc, ips, recon, total })
}

/// Initializes the model, picks prototypes by farthest-point selection over
/// an initial encoding pass, then runs `cfg.epochs` epochs of Adam.
pub fn train_embedder(ds: &GraphDataset, cfg: &EmbedderConfig, seed: u64) -> Result<(Embedder, Vec<EpochLoss>)> {
    cfg.validate()?;
    ds.ensure_id_only()?;
    if ds.is_empty() {
        return Err(Error::Empty("embedder training set"));
    }
    let d_in = ds.feature_dim().unwrap_or(0);
    let mut init_rng = stream(seed, "embedder-init", 0);
    let encoder = Encoder::new(d_in, &cfg.hidden, cfg.dim, &mut init_rng);
    let decoder = Decoder::new(cfg.dim, cfg.decoder_hidden, cfg.noise_dim, d_in, &mut init_rng);
    let initial = encoder.embed_dataset(ds)?;
    let mut proto_rng = stream(seed, "prototype-init", 0);
    let prototypes = PrototypeSet::init_farthest_point(&initial, cfg.k, cfg.tau, &mut proto_rng)?;
    let mut model = Embedder {
        encoder,
        decoder,
        prototypes,
    };
    let mut adam = Adam::new(cfg.lr, model.params());

    let n = ds.len();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, "embedder-shuffle", epoch as u64));
        let mut aug_rng = stream(seed, "embedder-augment", epoch as u64);
        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &ds.graphs[i]).collect();
            let view1 = graphs.iter().map(|g| augment(g, &cfg.augmentation, &mut aug_rng)).collect();
            let view2 = graphs.iter().map(|g| augment(g, &cfg.augmentation, &mut aug_rng)).collect();
            let noise = chunk
                .iter()
                .map(|&i| {
                    let s = derive_seed(seed, "embedder-noise", (epoch * n + i) as u64);
                    model.decoder.noise(ds.graphs[i].n(), s)
                })
                .collect();
            let batch = BatchInput {
                graphs,
                view1,
                view2,
                noise,
            };

            let t = Tape::new();
            let vars = model.bind(&t);
            let losses = batch_objective(&t, &vars, &batch, cfg)?;
            let values = [
                ("L_DC", t.scalar_value(losses.dc)),
                ("L_PC", t.scalar_value(losses.pc)),
                ("L_IPS", t.scalar_value(losses.ips)),
                ("L_recon", t.scalar_value(losses.recon)),
                ("L_total", t.scalar_value(losses.total)),
            ];
            for (slot, (name, v)) in sums.iter_mut().zip(values) {
                if !v.is_finite() {
                    return Err(Error::non_finite(format!("embedder {name} (epoch {epoch})")));
                }
                *slot += v;
            }
            let grads = t.backward(losses.total).collect(&vars.vars());
            adam.step(model.params_mut(), &grads);
            model.prototypes.renormalize();
            if !model.is_finite() {
                return Err(Error::non_finite(format!("embedder parameters (epoch {epoch})")));
            }
            batches += 1;
        }
        let b = batches as f64;
        let entry = EpochLoss {
            epoch,
            dc: sums[0] / b,
            pc: sums[1] / b,
            ips: sums[2] / b,
            recon: sums[3] / b,
            total: sums[4] / b,
        };
        debug!("embedder epoch {epoch}: {entry:?}");
        log.push(entry);
    }
    if let Some(last) = log.last() {
        info!("embedder trained: final L_total {:.4}", last.total);
    }
    Ok((model, log))
}

pub fn loss_csv(log: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,L_DC,L_PC,L_IPS,L_recon,L_total\n");
    for e in log {
        writeln!(s, "{},{:?},{:?},{:?},{:?},{:?}", e.epoch, e.dc, e.pc, e.ips, e.recon, e.total).unwrap();
    }
    s
}

pub fn write_loss_csv(log: &[EpochLoss], path: &Path) -> Result<()> {
    std::fs::write(path, loss_csv(log)).map_err(|e| Error::io(path, e))
}
