"""Command-line entry point: ``radioflow <command> [options]``.

Every command writes its outputs and a ``manifest.json`` into ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from radioflow import __version__
from radioflow import collision as col
from radioflow import control as ctl
from radioflow import flow as fl
from radioflow.io import (RunConfig, TraceRecord, TraceWriter, config_text, load_config, load_heatmaps,
                          read_trace, save_heatmaps, save_npz, write_manifest)
from radioflow.nn import TrainConfig, load_weights, save_weights
from radioflow.preprocess import preprocess
from radioflow.radar import RATE_PRESETS, RadarCube, derive_metrics
from radioflow.scene import SensorState, make_ground_scene, noise_std_for_snr, simulate_cube

log = logging.getLogger("radioflow")


class _Run:
    """Output directory bookkeeping shared by all commands."""

    def __init__(self, args, cfg: RunConfig):
        self.args, self.cfg = args, cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        return p

    def finish(self) -> None:
        write_manifest(self.out, self.args.command, self.cfg, self.args.seed, self.outputs, __version__)


def _records(name: str, rows) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


# ---------------------------------------------------------------------------
# commands

def cmd_metrics(run: _Run) -> None:
    lines = []
    for name in ("radar", "forward_radar"):
        r = getattr(run.cfg, name)
        m = derive_metrics(r.chirp, r.frame)
        lines.append(f"[{name}] v_max={m.v_max_mps:.6g} m/s v_res={m.v_res_mps:.6g} m/s "
                     f"r_max={m.r_max_m:.6g} m r_res={m.r_res_m:.6g} m T_int={m.integration_time_s:.6g} s")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    run.write_text("metrics.txt", text)


def _simulate_corridor(run: _Run) -> None:
    a = run.args
    r = run.cfg.forward_radar
    cor = ctl.make_corridor(frontal_wall_m=a.frontal_wall, seed=a.seed)
    dt = 0.1
    r_max = derive_metrics(r.chirp, r.frame).r_max_m
    with TraceWriter(run.path("trace.rflw"), r.chirp, r.frame, r.layout) as w:
        for i in range(a.frames):
            t = i * dt
            st = SensorState((0.0, 0.0, a.speed * t), (0.0, 0.0, a.speed))
            scene = ctl.in_range_scene(cor.scene, st.position_m, r_max)
            cube = simulate_cube(scene, st, r.chirp, r.frame, r.layout, time_s=t)
            w.append(TraceRecord(t, cube.samples.astype(np.complex64), st))
    print(f"wrote {a.frames} forward-radar frames to {run.out / 'trace.rflw'}")


def cmd_simulate(run: _Run) -> None:
    a = run.args
    if a.scene == "corridor":
        return _simulate_corridor(run)
    r = run.cfg.radar
    scene = make_ground_scene(a.roughness, a.density, a.extent, seed=a.seed)
    ref = simulate_cube(scene, SensorState((0, 0, -a.altitude)), r.chirp, r.frame, r.layout)
    scene = scene.with_noise(noise_std_for_snr(ref, a.snr_db))
    t_int = derive_metrics(r.chirp, r.frame).integration_time_s
    vel = (a.velocity[0], a.velocity[1], 0.0)
    with TraceWriter(run.path("trace.rflw"), r.chirp, r.frame, r.layout) as w:
        for i in range(a.frames):
            t = i * t_int
            st = SensorState((vel[0] * t, vel[1] * t, -a.altitude), vel)
            cube = simulate_cube(scene, st, r.chirp, r.frame, r.layout, time_s=t)
            w.append(TraceRecord(t, cube.samples.astype(np.complex64), st))
    print(f"wrote {a.frames} frames to {run.out / 'trace.rflw'}")


def cmd_preprocess(run: _Run) -> None:
    trace = read_trace(run.args.trace)
    hms, alt, vel, ts = [], [], [], []
    for rec in trace.records:
        cube = RadarCube(rec.samples.astype(np.complex128), trace.chirp, trace.frame)
        hm, a = preprocess(cube, trace.layout, run.cfg.preprocess)
        hms.append(hm)
        alt.append(a.altitude_m)
        vel.append(rec.state.velocity_mps[:2])
        ts.append(rec.timestamp_s)
    save_heatmaps(run.path("heatmaps.npz"), hms, altitude_est=np.array(alt), velocity=np.array(vel),
                  timestamps=np.array(ts))
    print(f"wrote {len(hms)} heatmaps")


def _corpus(run: _Run, n_surfaces: int, frames: int, seed: int):
    r = run.cfg.radar
    cfg = fl.CorpusConfig(n_surfaces=n_surfaces, frames_per_surface=frames, altitude_m=(1.0, 1.0), seed=seed)
    traces = fl.synthesize_corpus(cfg, r.chirp, r.frame, r.layout)
    return fl.build_flow_dataset(traces, r.layout, run.cfg.preprocess, split_seed=seed)


def cmd_flow_train(run: _Run) -> None:
    a = run.args
    ds = _corpus(run, a.surfaces, a.frames, a.seed)
    tc = TrainConfig(batch_size=a.batch_size, learning_rate=a.lr, max_epochs=a.epochs, seed=a.seed)
    res = fl.train_flow_model(ds, a.arch, tc, init_seed=a.seed,
                              on_epoch=lambda e, tr, va: log.info("epoch %d train %.4f val %.4f", e, tr, va))
    save_weights(run.path("flow.rfnn"), res.weights)
    run.outputs.append(run.out / "flow.rfnn.arch.json")
    ang = fl.angular_rmse(res.weights, ds)
    run.write_text("history.csv", "epoch,train_rmse,val_rmse\n" +
                   "".join(f"{e},{t:.6f},{v:.6f}\n" for e, t, v in res.history))
    print(f"best epoch {res.best_epoch} val RMSE {res.best_val_loss:.4f} m/s, angular RMSE {ang:.4f} rad/s")


def _estimator(args):
    if args.model:
        return fl.model_estimator(load_weights(args.model))
    return fl.oracle_estimator


def cmd_flow_eval(run: _Run) -> None:
    hms, extra = load_heatmaps(run.args.heatmaps)
    est = _estimator(run.args)
    pred = np.array([est(h) for h in hms])
    truth = extra["velocity"]
    err = pred - truth
    rmse = float(np.sqrt(np.mean(err ** 2)))
    rows = [{"i": i, "v_x": float(p[0]), "v_y": float(p[1]), "true_v_x": float(t[0]), "true_v_y": float(t[1])}
            for i, (p, t) in enumerate(zip(pred, truth))]
    run.write_text("flow_eval.jsonl", _records("flow", rows))
    name = "model" if run.args.model else "oracle"
    print(f"{name}: RMSE {rmse:.4f} m/s, median |err| per axis {np.median(np.abs(err), axis=0).round(4)}")


def cmd_flow_stream(run: _Run) -> None:
    trace = read_trace(run.args.trace)
    est = _estimator(run.args)
    pipe = fl.FlowPipeline(trace.chirp, trace.frame, trace.layout, run.cfg.preprocess, est,
                           run.args.processing_time)
    batch = run.args.batch_chirps
    tc = trace.chirp.chirp_duration_s
    lines = []
    for rec in trace.records:
        samples = rec.samples.astype(np.complex128)
        for k in range(0, len(samples), batch):
            chunk = samples[k:k + batch]
            e = pipe.push(fl.ChirpBatch(rec.timestamp_s + (k + len(chunk)) * tc, chunk))
            if e is not None:
                lines.append(e.as_row())
                print(e.as_row())
    run.write_text("flow_stream.txt", "# t v_x v_y omega_x omega_y altitude\n" + "\n".join(lines) + "\n")
    log.info("processed %d, dropped %d", pipe.processed, pipe.dropped)


def cmd_collision_train(run: _Run) -> None:
    a = run.args
    r = run.cfg.forward_radar
    ds = col.synthesize_collision_corpus(a.scenes, r.chirp, r.frame, r.layout, seed=a.seed)
    tc = TrainConfig(batch_size=a.batch_size, learning_rate=a.lr, max_epochs=a.epochs, loss="cross-entropy",
                     seed=a.seed)
    res, _, va = col.train_collision(ds, tc, split_seed=a.seed, init_seed=a.seed)
    save_weights(run.path("collision.rfnn"), res.weights)
    run.outputs.append(run.out / "collision.rfnn.arch.json")
    acc = col.accuracy(res.weights, ds.features[va], ds.labels[va])
    print(f"best epoch {res.best_epoch} validation accuracy {acc:.3f}")


def cmd_collision_eval(run: _Run) -> None:
    a = run.args
    r = run.cfg.forward_radar
    w = load_weights(a.weights)
    ds = col.synthesize_collision_corpus(a.scenes, r.chirp, r.frame, r.layout, seed=a.seed)
    acc = col.accuracy(w, ds.features, ds.labels)
    spec = col.obstacle_report(simulate_cube(col.specular_obstacle_scene(seed=a.seed), SensorState((0, 0, 0)),
                                             r.chirp, r.frame, r.layout), r.layout, w, a.threshold)
    text = f"accuracy {acc:.4f} on {len(ds.labels)} crops\nspecular panel: {spec.as_row()}\n"
    print(text, end="")
    run.write_text("collision_eval.txt", text)


def cmd_collision_stream(run: _Run) -> None:
    trace = read_trace(run.args.trace)
    w = load_weights(run.args.weights)
    rows = []
    for rec in trace.records:
        cube = RadarCube(rec.samples.astype(np.complex128), trace.chirp, trace.frame)
        rep = col.obstacle_report(cube, trace.layout, w, run.args.threshold, rec.timestamp_s)
        rows.append(rep.as_row())
        print(rep.as_row())
    run.write_text("collision_stream.txt", "# t p_left p_center p_right decision\n" + "\n".join(rows) + "\n")


def cmd_hover(run: _Run) -> None:
    a = run.args
    feedback = ctl.Feedback.TRUTH if a.estimator == "truth" else ctl.Feedback.RADAR
    est = None
    if a.estimator == "oracle":
        est = fl.oracle_estimator
    elif a.estimator == "model":
        if not a.weights:
            raise SystemExit("--estimator model needs --weights")
        est = fl.model_estimator(load_weights(a.weights))
    drop = a.drop_probability
    if drop is None:
        drop = ctl.OVERLOAD_DROP_PROBABILITY if a.rate == 50 else 0.0
    seeds = range(a.seed, a.seed + a.seeds)
    results = ctl.hover_battery(a.rate, seeds, a.duration, est, feedback, drop)
    rows, table = [], [f"{'seed':>6} {'median_m':>10} {'max_m':>8} {'crash':>6} {'updates':>8} {'dropped':>8}"]
    traces = {}
    for s, r in zip(seeds, results):
        rows.append({"seed": s, "rate_hz": a.rate, "estimator": a.estimator, "median_deviation_m": r.median_deviation_m,
                     "max_deviation_m": r.max_deviation_m, "crashed": r.crashed, "updates": r.updates,
                     "dropped": r.dropped})
        table.append(f"{s:>6} {r.median_deviation_m:>10.4f} {r.max_deviation_m:>8.4f} {str(r.crashed):>6} "
                     f"{r.updates:>8} {r.dropped:>8}")
        traces[f"t_{s}"] = r.times_s
        traces[f"xy_{s}"] = r.positions_m
    table.append(f"median over seeds: {ctl.battery_median(results):.4f} m")
    print("\n".join(table))
    run.write_text("hover.txt", "\n".join(table) + "\n")
    run.write_text("hover.jsonl", _records("hover", rows))
    save_npz(run.path("hover_traces.npz"), **traces)


def cmd_corridor(run: _Run) -> None:
    a = run.args
    r = run.cfg.forward_radar
    detector = ctl.always_clear if a.stub else ctl.model_detector(load_weights(a.weights), r.layout, a.threshold)
    cor = ctl.make_corridor(a.length, a.half_width, a.frontal_wall, seed=a.seed)
    res = ctl.corridor_experiment(cor, detector, r.chirp, r.frame, r.layout, a.speed, a.duration)
    text = (f"outcome {res.outcome.value}\nmin clearance {res.min_clearance_m:.3f} m\n"
            f"frontal clearance {res.frontal_clearance_m:.3f} m\nsteps {len(res.reports)}\n")
    print(text, end="")
    run.write_text("corridor.txt", text)
    run.write_text("corridor_reports.txt", "\n".join(rep.as_row() for rep in res.reports) + "\n")
    save_npz(run.path("corridor_track.npz"), xz=res.positions_m)


COMMANDS = {
    "simulate": cmd_simulate, "preprocess": cmd_preprocess, "flow-train": cmd_flow_train,
    "flow-eval": cmd_flow_eval, "flow-stream": cmd_flow_stream, "collision-train": cmd_collision_train,
    "collision-eval": cmd_collision_eval, "collision-stream": cmd_collision_stream, "hover": cmd_hover,
    "corridor": cmd_corridor, "metrics": cmd_metrics,
}


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # subcommands repeat the flags without defaults so they never mask earlier values
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--config", default=d(None), help="INI file with [radar], [forward_radar], [preprocess]")
        g.add_argument("--seed", type=int, default=d(0))
        g.add_argument("--out", default=d("out"), help="output directory")
        g.add_argument("-v", "--verbose", action="store_true", default=d(False))
        return g

    common = global_flags(True)
    p = argparse.ArgumentParser(prog="radioflow", parents=[global_flags(False)])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    add("metrics", "print velocity/range limits of the configured radars")

    s = add("simulate", "write a constant-velocity trace over a random floor")
    s.add_argument("--frames", type=int, default=20)
    s.add_argument("--velocity", type=float, nargs=2, default=(0.5, 0.0), metavar=("VX", "VY"))
    s.add_argument("--altitude", type=float, default=1.0)
    s.add_argument("--roughness", type=float, default=0.7)
    s.add_argument("--density", type=float, default=30.0)
    s.add_argument("--extent", type=float, default=4.0)
    s.add_argument("--snr-db", type=float, default=20.0)
    s.add_argument("--scene", default="floor", choices=("floor", "corridor"),
                   help="floor: downward radar over the ground; corridor: forward radar flying down a corridor")
    s.add_argument("--frontal-wall", type=float, default=3.0, help="corridor only: wall depth in m")
    s.add_argument("--speed", type=float, default=0.5, help="corridor only: forward speed in m/s")

    s = add("preprocess", "turn a trace into stacked doppler-angle heatmaps")
    s.add_argument("--trace", required=True)

    s = add("flow-train", "train a flow regressor on a simulated corpus")
    s.add_argument("--arch", default="micro", choices=("nano", "micro", "mini", "resnet18"))
    s.add_argument("--surfaces", type=int, default=25)
    s.add_argument("--frames", type=int, default=80)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--lr", type=float, default=1e-3)

    for name, help_ in (("flow-eval", "score an estimator on a heatmap archive"),
                        ("flow-stream", "stream a trace through the chirp FIFO")):
        s = add(name, help_)
        if name == "flow-eval":
            s.add_argument("--heatmaps", required=True)
        else:
            s.add_argument("--trace", required=True)
            s.add_argument("--batch-chirps", type=int, default=8)
            s.add_argument("--processing-time", type=float, default=None,
                           help="modeled compute time in s (default: measured)")
        g = s.add_mutually_exclusive_group()
        g.add_argument("--oracle", action="store_true", help="curve-fit estimator (default)")
        g.add_argument("--model", metavar="WEIGHTS", help="learned estimator weights")

    s = add("collision-train", "train the crop classifier")
    s.add_argument("--scenes", type=int, default=1000)
    s.add_argument("--epochs", type=int, default=col.MAX_COLLISION_EPOCHS)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--lr", type=float, default=3e-3)

    s = add("collision-eval", "accuracy on fresh scenes plus the specular panel")
    s.add_argument("--weights", required=True)
    s.add_argument("--scenes", type=int, default=200)
    s.add_argument("--threshold", type=float, default=0.5)

    s = add("collision-stream", "obstacle reports for each frame of a forward-radar trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--threshold", type=float, default=0.5)

    s = add("hover", "closed-loop position hold over a seed battery")
    s.add_argument("--rate", type=int, default=40, choices=sorted(RATE_PRESETS))
    s.add_argument("--estimator", default="oracle", choices=("oracle", "model", "truth"))
    s.add_argument("--weights")
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--duration", type=float, default=10.0)
    s.add_argument("--drop-probability", type=float, default=None,
                   help="default: calibrated overload value at 50 Hz, else 0")

    s = add("corridor", "fly a corridor with the obstacle detector in the loop")
    s.add_argument("--weights")
    s.add_argument("--stub", action="store_true", help="detector that never reports obstacles")
    s.add_argument("--frontal-wall", type=float, default=None, metavar="Z")
    s.add_argument("--length", type=float, default=5.0)
    s.add_argument("--half-width", type=float, default=1.2)
    s.add_argument("--speed", type=float, default=0.5)
    s.add_argument("--duration", type=float, default=12.0)
    s.add_argument("--threshold", type=float, default=0.5)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "corridor" and not (args.stub or args.weights):
        raise SystemExit("corridor needs --weights or --stub")
    cfg = load_config(args.config)
    run = _Run(args, cfg)
    run.write_text("config.ini", config_text(cfg))
    COMMANDS[args.command](run)
    run.finish()
    return 0


if __name__ == "__main__":
    sys.exit(main())
