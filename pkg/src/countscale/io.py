"""File formats: run config, checkpoints, dataset snapshots and traces."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import EpisodeConfig, EpisodeState, WeightVector, pool_for_mode
from .dqn import EpsilonSchedule, QNetParams, ReplayBuffer, Transition
from .metrics import TraceRecord
from .quantizer import QuantizerConfig
from .rewards import RewardConfig
from .trainer import Dataset, SynthConfig, TrainConfig, Trainer

CHECKPOINT_FORMAT = "countscale-checkpoint"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    pass


class VersionMismatch(ValueError):
    pass


class CorruptFile(ValueError):
    pass


# -- run configuration -------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    image_side: int = 4
    game_levels: int = 2


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    pool: str = "interval"
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    quantizer: QuantizerConfig = field(default_factory=QuantizerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def episode(self) -> EpisodeConfig:
        return self.train.episode

    @property
    def reward(self) -> RewardConfig:
        return self.train.reward


# section -> (dataclass, keys that live elsewhere)
_SECTIONS = {
    "synth": SynthConfig,
    "train": TrainConfig,
    "episode": EpisodeConfig,
    "reward": RewardConfig,
    "epsilon": EpsilonSchedule,
    "quantizer": QuantizerConfig,
    "eval": EvalConfig,
}
_NESTED = {"seed", "episode", "reward", "epsilon", "pool"}


def _scalar_fields(cls):
    return [f for f in dataclasses.fields(cls) if f.name not in _NESTED]


def _coerce(cls, name: str, raw: str):
    default = getattr(cls(), name)
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as e:
        raise ConfigError(f"{cls.__name__}.{name}: cannot parse {raw!r}") from e
    return raw.strip()


def parse_config(text: str) -> RunConfig:
    """Build a RunConfig from INI text; every key is optional."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from e
    for sec in cp.sections():
        if sec != "run" and sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")

    def section(name):
        cls = _SECTIONS[name]
        known = {f.name for f in _scalar_fields(cls)}
        kw = {}
        if cp.has_section(name):
            for key, raw in cp.items(name):
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                kw[key] = _coerce(cls, key, raw)
        return kw

    run = dict(cp.items("run")) if cp.has_section("run") else {}
    unknown = set(run) - {"seed", "out_dir", "pool"}
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [run]")
    try:
        seed = int(run.get("seed", 0))
        pool_mode = run.get("pool", "interval")
        if pool_mode not in ("interval", "continuous"):
            raise ConfigError(f"unknown pool {pool_mode!r}")
        pool = pool_for_mode(pool_mode)
        reward_kw = section("reward")
        reward = (RewardConfig.continuous(**reward_kw) if pool_mode == "continuous"
                  else RewardConfig(**reward_kw))
        episode = EpisodeConfig(pool=pool, **section("episode"))
        train = TrainConfig(seed=seed, episode=episode, reward=reward,
                            epsilon=EpsilonSchedule(**section("epsilon")), **section("train"))
        return RunConfig(
            seed=seed,
            out_dir=run.get("out_dir", RunConfig.out_dir),
            pool=pool_mode,
            synth=SynthConfig(seed=seed, **section("synth")),
            train=train,
            quantizer=QuantizerConfig(**section("quantizer")),
            eval=EvalConfig(**section("eval")),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return dataclasses.replace(
        cfg, seed=seed,
        synth=dataclasses.replace(cfg.synth, seed=seed),
        train=dataclasses.replace(cfg.train, seed=seed))


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def config_to_text(cfg: RunConfig) -> str:
    """Fully resolved INI text; `parse_config` of the result reproduces `cfg`."""
    parts = ["[run]", f"seed = {cfg.seed}", f"out_dir = {cfg.out_dir}", f"pool = {cfg.pool}", ""]
    objs = {"synth": cfg.synth, "train": cfg.train, "episode": cfg.episode, "reward": cfg.reward,
            "epsilon": cfg.train.epsilon, "quantizer": cfg.quantizer, "eval": cfg.eval}
    for name, obj in objs.items():
        parts.append(f"[{name}]")
        for f in _scalar_fields(type(obj)):
            parts.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
        parts.append("")
    return "\n".join(parts)


def config_echo(cfg: RunConfig) -> dict:
    """Resolved settings as nested strings; the output location is left out."""
    cp = configparser.ConfigParser()
    cp.read_string(config_to_text(cfg))
    echo = {s: dict(cp.items(s)) for s in cp.sections()}
    del echo["run"]["out_dir"]
    return echo


# -- checkpoints -------------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [format(float(x), ".17g") for x in a.ravel()]}


def _decode_array(d: dict) -> np.ndarray:
    return np.array([float(x) for x in d["data"]], dtype=float).reshape(d["shape"])


def _encode_params(p: QNetParams) -> dict:
    out = {k: _encode_array(v) for k, v in p.arrays().items()}
    out["weight_scale"] = format(p.weight_scale, ".17g")
    out["slot_codes"] = None if p.slot_codes is None else [format(v, ".17g") for v in p.slot_codes]
    return out


def _decode_params(d: dict) -> QNetParams:
    codes = d.get("slot_codes")
    return QNetParams(*(_decode_array(d[k]) for k in QNetParams.ARRAYS), float(d["weight_scale"]),
                      None if codes is None else tuple(float(v) for v in codes))


def _encode_transition(t: Transition) -> list:
    w, wn = t.s.weights, t.s_next.weights
    return [t.patch, t.a, t.r, int(t.terminal), w.filled, wn.filled, list(w.slots), list(wn.slots)]


def _decode_transition(row: list, features: np.ndarray) -> Transition:
    patch, a, r, term, f, fn, slots, slots_next = row
    feat = features[patch]
    return Transition(EpisodeState(feat, WeightVector(tuple(slots), f)), a,
                      EpisodeState(feat, WeightVector(tuple(slots_next), fn)), r, bool(term), patch)


def trainer_state(tr: Trainer, cfg: RunConfig | None = None) -> dict:
    """Everything needed to resume `tr` bit-exactly, as JSON-ready data."""
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": "imitation" if type(tr).__name__ == "ImitationTrainer" else "dqn",
        "config": config_echo(cfg) if cfg is not None else {},
        "epoch": tr.epoch,
        "epsilon": tr.epsilon,
        "pending": tr.pending,
        "rng_state": tr.rng.bit_generator.state,
        "params": _encode_params(tr.params),
        "target": _encode_params(tr.target),
        "buffer": {"capacity": tr.buffer.capacity, "pos": tr.buffer.pos,
                   "items": [_encode_transition(t) for t in tr.buffer.storage]},
        "history": tr.history,
    }


def restore_trainer(tr: Trainer, state: dict) -> Trainer:
    """Load a `trainer_state` dict into a freshly constructed trainer over the same dataset."""
    tr.epoch = state["epoch"]
    tr.pending = state["pending"]
    tr.rng.bit_generator.state = state["rng_state"]
    tr.params = _decode_params(state["params"])
    tr.target = _decode_params(state["target"])
    buf = state["buffer"]
    tr.buffer = ReplayBuffer(buf["capacity"],
                             [_decode_transition(row, tr.data.features) for row in buf["items"]],
                             buf["pos"])
    tr.history = list(state["history"])
    return tr


def checkpoint_text(state: dict) -> str:
    return json.dumps(state, indent=None, separators=(",", ":")) + "\n"


def save_checkpoint(state: dict, path):
    Path(path).write_text(checkpoint_text(state))


def load_checkpoint(path) -> dict:
    try:
        state = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise CorruptFile(f"{path}: {e}") from e
    if not isinstance(state, dict) or state.get("format") != CHECKPOINT_FORMAT:
        raise CorruptFile(f"{path}: not a checkpoint file")
    if state.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: version {state.get('version')} != {CHECKPOINT_VERSION}")
    try:
        state["params_obj"] = _decode_params(state["params"])
        state["target_obj"] = _decode_params(state["target"])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"{path}: bad parameter block ({e})") from e
    return state


def params_only_state(params: QNetParams, target: QNetParams | None = None, **extra) -> dict:
    """A minimal checkpoint holding just network parameters."""
    target = target or params
    state = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "kind": "params",
             "config": {}, "epoch": 0, "epsilon": 0.0, "pending": 0, "rng_state": None,
             "params": _encode_params(params), "target": _encode_params(target),
             "buffer": {"capacity": 1, "pos": 0, "items": []}, "history": []}
    state.update(extra)
    return state


# -- dataset snapshot --------------------------------------------------------

def dataset_jsonl(data: Dataset) -> str:
    test = set(data.test_idx.tolist())
    lines = []
    for i in range(len(data)):
        lines.append(json.dumps({
            "id": int(data.ids[i]), "G": int(data.targets[i]),
            "split": "test" if i in test else "train",
            "feature": [format(float(x), ".17g") for x in data.features[i]],
        }, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def read_dataset_jsonl(text: str) -> Dataset:
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    ids = np.array([r["id"] for r in rows], dtype=int)
    targets = np.array([r["G"] for r in rows], dtype=int)
    feats = np.array([[float(x) for x in r["feature"]] for r in rows], dtype=float)
    split = np.array([r["split"] == "test" for r in rows])
    return Dataset(ids, targets, feats, np.flatnonzero(~split), np.flatnonzero(split))


# -- traces ------------------------------------------------------------------

def _trace_header(n_q: int) -> list[str]:
    return ["patch", "t", "action"] + [f"q{i}" for i in range(n_q)] + ["value", "gt"]


def trace_text(records, n_q: int = 9) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_trace_header(n_q))
    for rec in records:
        gt = "" if rec.gt is None else f"{rec.gt:.6f}"
        for t, label, q, value in rec.steps:
            w.writerow([rec.patch, t, label] + [f"{x:.6f}" for x in q] + [f"{value:.6f}", gt])
    return buf.getvalue()


def export_trace(records, path, n_q: int = 9):
    Path(path).write_text(trace_text(records, n_q))


def parse_trace(text: str) -> list[TraceRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise CorruptFile("empty trace file")
    header = rows[0]
    n_q = sum(h.startswith("q") for h in header)
    records: list[TraceRecord] = []
    for row in rows[1:]:
        patch, t, label = int(row[0]), int(row[1]), row[2]
        q = np.array([float(x) for x in row[3:3 + n_q]])
        value = float(row[3 + n_q])
        gt = None if row[4 + n_q] == "" else float(row[4 + n_q])
        if not records or records[-1].patch != patch or t == 0:
            records.append(TraceRecord(patch, gt, []))
        records[-1].steps.append((t, label, q, value))
    return records
