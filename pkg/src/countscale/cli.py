"""Command-line entry point: ``countscale <subcommand>``.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
anything that fails at run time.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as cio
from .metrics import game, infer, mae_mse
from .oracle import (Unreachable, bfs_shortest, exact_q_table, greedy_sequence,
                     q_policy_sequence, results_csv)
from .quantizer import (density_map, grid_csv, inverse_quantize, patch_counts, quantize_grid,
                        read_dotmap)
from .rewards import RewardMode
from .trainer import ImitationTrainer, Trainer, evaluate, make_dataset

log = logging.getLogger("countscale")


def _f(x: float) -> str:
    return f"{x:.6f}"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="countscale", description="Sequential weighing counter.")
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument("--out-dir", help="override [run] out_dir")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, metavar="command")

    sub.add_parser("synth", help="write the synthetic dataset")

    t = sub.add_parser("train", help="train a Q-network (or the imitation baseline)")
    t.add_argument("--imitation", action="store_true", help="behaviour-clone the optimal operator")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--stop-at", type=int, help="stop after this many epochs (for split runs)")

    for name, text in (("eval", "MAE/MSE/GAME on the held-out patches"),
                       ("trace", "export per-step Q-values of greedy rollouts")):
        e = sub.add_parser(name, help=text)
        e.add_argument("--checkpoint", help="defaults to <out-dir>/checkpoint.json")
        if name == "trace":
            e.add_argument("--limit", type=int, default=10, help="number of held-out patches")

    sub.add_parser("ablate", help="train every reward mode and compare held-out MAE")

    o = sub.add_parser("oracle", help="shortest/greedy/exact-Q operator sequences")
    o.add_argument("--g", type=int, action="append", help="target interval (repeatable); default 0..80")
    o.add_argument("--method", choices=("bfs", "greedy", "qtable"), default="greedy")

    q = sub.add_parser("quantize", help="dot map -> density -> patch counts -> intervals")
    q.add_argument("dotmap", help="text file: 'width height' then one 'x y' per line")
    return p


def _resolve_config(args) -> cio.RunConfig:
    cfg = cio.load_config(args.config) if args.config else cio.RunConfig()
    if args.seed is not None:
        cfg = cio.with_seed(cfg, args.seed)
    if args.out_dir is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out_dir)
    return cfg


def _out_dir(cfg: cio.RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cio.config_to_text(cfg))
    return out


def _metrics_csv(history: list[dict]) -> str:
    cols = ["epoch", "epsilon", "loss", "updates", "interval_mae", "count_mae"]
    rows = [",".join(cols)]
    for m in history:
        rows.append(",".join(str(m[c]) if c in ("epoch", "updates") else _f(m[c]) for c in cols))
    return "\n".join(rows) + "\n"


def _train_run(cfg: cio.RunConfig, out: Path, imitation=False, resume=None, stop_at=None):
    data = make_dataset(cfg.synth)
    cls = ImitationTrainer if imitation else Trainer
    tr = cls(data, cfg.train, cfg.synth.max_interval)
    if resume:
        cio.restore_trainer(tr, cio.load_checkpoint(resume))

    def progress(t):
        m = t.history[-1]
        log.info("epoch %d eps=%.2f loss=%.4f mae=%.4f", m["epoch"], m["epsilon"], m["loss"],
                 m["interval_mae"])

    tr.fit(stop_at, on_epoch=progress)
    cio.save_checkpoint(cio.trainer_state(tr, cfg), out / "checkpoint.json")
    (out / "metrics.csv").write_text(_metrics_csv(tr.history))
    return tr


def cmd_synth(cfg, args) -> int:
    out = _out_dir(cfg)
    data = make_dataset(cfg.synth)
    (out / "dataset.jsonl").write_text(cio.dataset_jsonl(data))
    print(f"patches={len(data)} train={len(data.train_idx)} test={len(data.test_idx)}")
    return 0


def cmd_train(cfg, args) -> int:
    out = _out_dir(cfg)
    tr = _train_run(cfg, out, args.imitation, args.resume, args.stop_at)
    if tr.history:
        m = tr.history[-1]
        print(f"epoch={m['epoch']} interval_mae={_f(m['interval_mae'])} count_mae={_f(m['count_mae'])}")
    return 0


def _load_params(cfg, args):
    path = Path(args.checkpoint) if args.checkpoint else Path(cfg.out_dir) / "checkpoint.json"
    return cio.load_checkpoint(path)["params_obj"]


def _images(idx: np.ndarray, side: int) -> list[np.ndarray]:
    """Tile consecutive held-out patches into side x side pseudo-images; the remainder is dropped."""
    n = side * side
    return [idx[i:i + n] for i in range(0, len(idx) - n + 1, n)]


def cmd_eval(cfg, args) -> int:
    out = _out_dir(cfg)
    params = _load_params(cfg, args)
    data = make_dataset(cfg.synth)
    idx = data.test_idx
    res = infer(params, data.features[idx], cfg.episode, cfg.quantizer, cfg.synth.max_interval,
                targets=data.targets[idx], patches=idx)
    gt_counts = np.array([inverse_quantize(int(c), cfg.quantizer) for c in data.targets[idx]])
    rows = [("interval_mae", "interval_mse", *mae_mse(res.intervals, data.targets[idx])),
            ("count_mae", "count_mse", *mae_mse(res.counts, gt_counts))]
    lines = [f"{a}={_f(x)}\n{b}={_f(y)}" for a, b, x, y in rows]
    side = cfg.eval.image_side
    pos = {int(p): k for k, p in enumerate(idx)}
    images = _images(idx, side)
    for L in range(cfg.eval.game_levels + 1):
        if not images:
            break
        errs = [game(res.counts[[pos[int(p)] for p in im]].reshape(side, side),
                     gt_counts[[pos[int(p)] for p in im]].reshape(side, side), L)
                for im in images]
        lines.append(f"game{L}={_f(float(np.mean(errs)))}")
    text = "\n".join(lines) + "\n"
    (out / "eval.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_trace(cfg, args) -> int:
    out = _out_dir(cfg)
    params = _load_params(cfg, args)
    data = make_dataset(cfg.synth)
    idx = data.test_idx[:max(args.limit, 0)]
    res = infer(params, data.features[idx], cfg.episode, cfg.quantizer, cfg.synth.max_interval,
                targets=data.targets[idx], patches=idx)
    text = cio.trace_text(res.traces, len(cfg.episode.pool))
    (out / "trace.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_ablate(cfg, args) -> int:
    out = _out_dir(cfg)
    data = make_dataset(cfg.synth)
    rows = ["mode,interval_mae,count_mae"]
    for mode in RewardMode:
        tcfg = dataclasses.replace(cfg.train, mode=mode.value)
        tr = Trainer(data, tcfg, cfg.synth.max_interval)
        tr.fit()
        m = evaluate(tr.params, data, data.test_idx, tcfg.episode, tcfg.reward,
                     cfg.synth.max_interval, cfg.quantizer)
        rows.append(f"{mode.value},{_f(m['interval_mae'])},{_f(m['count_mae'])}")
        log.info("%s done", mode.value)
    text = "\n".join(rows) + "\n"
    (out / "ablation.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_oracle(cfg, args) -> int:
    out = _out_dir(cfg)
    pool, t_m = cfg.episode.pool, cfg.episode.t_m
    Gs = args.g if args.g else list(range(81))
    if args.method == "qtable":
        table = exact_q_table(pool, t_m, cfg.episode.gamma, cfg.reward)
        solve = lambda G: q_policy_sequence(table, G)  # noqa: E731
    elif args.method == "bfs":
        solve = lambda G: bfs_shortest(G, pool, t_m)  # noqa: E731
    else:
        solve = lambda G: greedy_sequence(G, pool, t_m, cfg.reward.eps1)  # noqa: E731
    results = []
    for G in Gs:
        try:
            results.append(solve(G))
        except Unreachable as e:
            print(f"warning: {e}", file=sys.stderr)
    text = results_csv(results)
    (out / f"oracle_{args.method}.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_quantize(cfg, args) -> int:
    out = _out_dir(cfg)
    dm = read_dotmap(args.dotmap)
    counts = patch_counts(density_map(dm, cfg.quantizer), cfg.quantizer)
    intervals = quantize_grid(counts, cfg.quantizer)
    (out / "patch_counts.csv").write_text(grid_csv(counts))
    (out / "patch_intervals.csv").write_text(grid_csv(intervals, "{:d}"))
    sys.stdout.write(f"dots={len(dm.dots)} total={_f(float(counts.sum()))}\n")
    sys.stdout.write(grid_csv(intervals, "{:d}"))
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "trace": cmd_trace,
            "ablate": cmd_ablate, "oracle": cmd_oracle, "quantize": cmd_quantize}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = _resolve_config(args)
        return COMMANDS[args.cmd](cfg, args)
    except cio.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - surface anything else as a runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
