//! `pcst plot`: render a trajectory file to an SVG image plus a raw CSV
//! coordinate table for external tooling.

use std::fmt::Write as _;

use super::{ensure_out_dir, write_text, CmdResult, PLOT_CSV_FILE, PLOT_FILE};
use crate::cli::{AxesArg, PlotArgs};
use crate::config::RunConfig;
use crate::formats;
use crate::svg;

pub fn run(_cfg: &RunConfig, args: &PlotArgs) -> CmdResult {
    let (traj, meta) = formats::read_trajectories(&args.trajectories)?;
    let proj = match args.axes {
        AxesArg::Xy => svg::XY,
        AxesArg::Xz => svg::XZ,
        AxesArg::Yz => svg::YZ,
    };
    let (image, drawn) = svg::render(&traj, proj, args.limit);

    ensure_out_dir(&args.out)?;
    write_text(&args.out.join(PLOT_FILE), &image)?;

    let shape = traj.shape();
    let (t, n) = (shape[0], shape[1]);
    let mut csv = String::from("trajectory,frame,x,y,z\n");
    for i in 0..n {
        for frame in 0..t {
            let base = (frame * n + i) * 3;
            let p = &traj.data()[base..base + 3];
            let _ = writeln!(csv, "{i},{frame},{},{},{}", p[0], p[1], p[2]);
        }
    }
    write_text(&args.out.join(PLOT_CSV_FILE), &csv)?;

    println!(
        "plotted {drawn} of {n} trajectories over {t} frames (query frame {}) -> {}",
        meta.query_frame,
        args.out.join(PLOT_FILE).display()
    );
    Ok(())
}
