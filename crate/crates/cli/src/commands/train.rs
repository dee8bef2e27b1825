//! `pcst train`: fit the tracker on a directory of sequences, streaming a
//! per-step loss log and periodic checkpoints into the output directory.
//!
//! The final (or, after an aborted step, the last completed) parameters are
//! always saved as `checkpoint.pckp`.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use anyhow::anyhow;
use pcst_core::nn::ParamStore;
use pcst_core::scalar::Scalar;
use pcst_core::synth::SequenceRecord;
use pcst_core::trainer::{self, Precision};

use super::{
    ensure_out_dir, lift_dataset, load_dataset, store_f32, store_f64, CmdFailure, CmdResult,
    CONFIG_FILE, FINAL_CHECKPOINT_FILE, LOSS_FILE,
};
use crate::cli::TrainArgs;
use crate::config::RunConfig;
use crate::formats;

/// File name for the checkpoint written after `step` steps.
pub fn interim_checkpoint_name(step: usize) -> String {
    format!("ckpt-{step:06}.pckp")
}

pub fn run(cfg: &RunConfig, args: &TrainArgs) -> CmdResult {
    let mut full = cfg.clone();
    if let Some(v) = args.steps {
        full.train.steps = v;
    }
    if let Some(v) = args.lr {
        full.train.lr = v;
    }
    if let Some(v) = args.batch {
        full.train.batch = v;
    }
    if let Some(v) = args.queries {
        full.train.queries = v;
    }
    if let Some(v) = args.checkpoint_every {
        full.train.checkpoint_every = v;
    }
    full.validate().map_err(|e| CmdFailure::config(format!("{e:#}")))?;

    let records = load_dataset(&args.data)?;
    for (path, r) in super::sequence_files(&args.data)?.iter().zip(records.iter()) {
        if r.num_frames() < full.train.tracker.window_length {
            return Err(CmdFailure::Config(format!(
                "{}: {} frames is shorter than the {}-frame window",
                path.display(),
                r.num_frames(),
                full.train.tracker.window_length
            )));
        }
        if full.train.queries > r.num_trajectories() {
            return Err(CmdFailure::Config(format!(
                "{}: cannot draw {} queries from {} trajectories",
                path.display(),
                full.train.queries,
                r.num_trajectories()
            )));
        }
    }

    ensure_out_dir(&args.out)?;
    full.save(&args.out.join(CONFIG_FILE)).map_err(CmdFailure::Runtime)?;

    match full.precision {
        Precision::F32 => {
            let store = store_f32(args.init.as_deref(), full.seed)?;
            train_impl(&records, &full, store, &args.out)
        }
        Precision::F64 => {
            let store = store_f64(args.init.as_deref(), full.seed)?;
            train_impl(&lift_dataset::<f64>(&records), &full, store, &args.out)
        }
    }
}

fn train_impl<S: Scalar>(
    records: &[SequenceRecord<S>],
    cfg: &RunConfig,
    mut store: ParamStore<S>,
    out: &Path,
) -> CmdResult {
    let loss_path = out.join(LOSS_FILE);
    let file = File::create(&loss_path)
        .map_err(|e| CmdFailure::Runtime(anyhow!("cannot create {}: {e}", loss_path.display())))?;
    let mut csv = BufWriter::new(file);
    writeln!(csv, "step,loss,lr").map_err(|e| CmdFailure::Runtime(anyhow!(e)))?;

    let every = cfg.train.checkpoint_every;
    // The training callback cannot return errors; stash the first one and
    // stop doing IO, then surface it after the loop.
    let mut sink_err: Option<anyhow::Error> = None;
    let outcome = trainer::train(records, &cfg.train, &mut store, |log, params| {
        if sink_err.is_some() {
            return;
        }
        if let Err(e) = writeln!(csv, "{},{},{}", log.step, log.loss, log.lr) {
            sink_err = Some(anyhow!(e).context("writing the loss log"));
            return;
        }
        let done = log.step + 1;
        if every > 0 && done % every == 0 && done < cfg.train.steps {
            let path = out.join(interim_checkpoint_name(done));
            if let Err(e) = formats::write_checkpoint(&path, params) {
                sink_err = Some(anyhow!(e).context("writing an interim checkpoint"));
            }
        }
    });
    csv.flush().map_err(|e| CmdFailure::Runtime(anyhow!(e)))?;
    if let Some(e) = sink_err {
        return Err(CmdFailure::Runtime(e));
    }

    // Whatever happened, `store` now holds the best parameters available
    // (final on success, last completed step after an abort); persist them.
    let ckpt_path = out.join(FINAL_CHECKPOINT_FILE);
    formats::write_checkpoint(&ckpt_path, &store)?;

    match outcome {
        Ok(logs) => {
            let first = logs.first().map(|l| l.loss).unwrap_or(f64::NAN);
            let last = logs.last().map(|l| l.loss).unwrap_or(f64::NAN);
            println!(
                "trained {} step(s) on {} sequence(s): loss {first:.6} -> {last:.6}",
                logs.len(),
                records.len()
            );
            println!("checkpoint: {}", ckpt_path.display());
            Ok(())
        }
        Err(e) => Err(CmdFailure::Runtime(
            anyhow!(e).context("training aborted; the last completed parameters were saved"),
        )),
    }
}
