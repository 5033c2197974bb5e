"""Experiment orchestration: configuration files, data, training loops, checkpoints, metrics."""

from __future__ import annotations

import concurrent.futures
import copy
import itertools
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from .dual_trainer import DualConfig, TrainerState, train
from .features import make_features
from .geometry import SPHERE, TORUS, Manifold
from .metrics import MetricsRecord, MetricsWriter, kl_estimate, sm_estimate
from .mmd import MmdConfig, energy_estimate, make_kernel, mmd2, mmd_drift, train_mmd
from .model import FeatureEnsemble, TeacherModel, energy, grad_energy_x, teacher_energy
from .pde1d import PdeConfig, TorusFields, interpolate_conv, pde_run, sample_grid_density, target_g
from .pde1d import build_target as build_target_fields
from .sampler import LangevinConfig, generate_dataset, load_dataset, save_dataset
from .sm_trainer import SmConfig, init_ensemble, train_sm

log = logging.getLogger("dualebm")

MODES = ("teacher-gen", "train-dual", "train-sm", "train-mmd", "pde1d")
CHECKPOINT_VERSION = 1
THREADS_ENV = "DUALEBM_THREADS"


class ConfigError(ValueError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass
class ManifoldSpec:
    kind: str = "sphere"
    dim: int = 2
    base: str = "gaussian"

    def __post_init__(self):
        self.build()

    def build(self) -> Manifold:
        return Manifold(self.kind, self.dim, self.base)


@dataclass
class TeacherSpec:
    """Two neurons at ``angle`` with common weight ``w_star``, or explicit ``theta`` / ``weights``."""

    angle: float = 2.87
    w_star: float = -10.0
    theta: list | None = None
    weights: list | None = None
    activation: str = "relu"

    def __post_init__(self):
        if (self.theta is None) != (self.weights is None):
            raise ValueError("teacher theta and weights must be given together")

    def build(self, d: int) -> TeacherModel:
        if self.theta is not None:
            t = TeacherModel(self.theta, self.weights, self.activation)
            if t.theta.shape[1] != d + 1:
                raise ValueError(f"teacher neurons live in R^{t.theta.shape[1]}, data on S^{d}")
            return t
        return TeacherModel.two_neuron(d, self.angle, self.w_star, self.activation)


@dataclass
class DataSpec:
    """Training and test data. The sampled law is ``exp(-teacher_beta * f*)``.

    The default matches the stock teacher (``|w*| = 10``) to the student's norm
    cap: ``teacher_beta * 10 = 20 = beta * max mean weight``.
    """

    n: int = 10_000
    n_test: int = 10_000
    teacher_beta: float = 2.0
    path: str | None = None
    test_path: str | None = None
    population: bool = False
    langevin: LangevinConfig = field(default_factory=LangevinConfig)

    def __post_init__(self):
        if self.n < 1 or self.n_test < 1:
            raise ValueError("n and n_test must be positive")
        if not self.teacher_beta > 0:
            raise ValueError("teacher_beta must be positive")


_SECTIONS = {
    "manifold": ManifoldSpec,
    "teacher": TeacherSpec,
    "data": DataSpec,
    "dual": DualConfig,
    "sm": SmConfig,
    "mmd": MmdConfig,
    "pde": PdeConfig,
}
_NESTED = {("data", "langevin"): LangevinConfig}
_FREE = ("features", "kernel", "sweep")
_TOP = {"mode": str, "seed": int, "log_every": int, "checkpoint_every": int, "out": str,
        "plot": bool, "density_dumps": list}


@dataclass
class ExperimentConfig:
    mode: str = "train-dual"
    seed: int = 0
    log_every: int = 100
    checkpoint_every: int = 0
    out: str | None = None
    plot: bool = False
    density_dumps: list = field(default_factory=list)
    manifold: ManifoldSpec = field(default_factory=ManifoldSpec)
    teacher: TeacherSpec = field(default_factory=TeacherSpec)
    data: DataSpec = field(default_factory=DataSpec)
    features: dict = field(default_factory=dict)
    dual: DualConfig = field(default_factory=DualConfig)
    sm: SmConfig = field(default_factory=SmConfig)
    mmd: MmdConfig = field(default_factory=MmdConfig)
    kernel: dict = field(default_factory=dict)
    pde: PdeConfig = field(default_factory=PdeConfig)
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.log_every < 0 or self.checkpoint_every < 0:
            raise ValueError("log_every and checkpoint_every must be nonnegative")

    def to_dict(self):
        d = asdict(self)
        for sec in ("dual", "sm", "mmd"):
            d[sec].pop("seed", None)
        return d

    @property
    def feature_spec(self) -> dict:
        spec = dict(self.features)
        if self.manifold.kind == TORUS and spec.get("family", "torus") == "torus":
            spec.setdefault("delta", self.pde.delta)
        if self.mode == "train-sm" and "activation" not in spec and spec.get("family", "ridge") == "ridge":
            spec["activation"] = {"name": "softplus", "sharpness": 20.0}
        return spec


# ---------------------------------------------------------------- parsing


def _key_lines(node, prefix="", out=None):
    """Map dotted key paths to 1-based line numbers."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}{k.value}"
            out[path] = k.start_mark.line + 1
            _key_lines(v, path + ".", out)
    return out


def _where(src, lines, path):
    line = lines.get(path)
    return f"{src}:{line}" if line else src


def _coerce(value, annot: str, path: str):
    kinds = [a.strip() for a in annot.split("|")]
    if value is None:
        if "None" in kinds:
            return None
        raise TypeError(f"'{path}' may not be null")
    if "object" in kinds or "list" in kinds and isinstance(value, list):
        return value
    if "bool" in kinds:
        if isinstance(value, bool):
            return value
        raise TypeError(f"'{path}' must be true or false, got {value!r}")
    if isinstance(value, bool):
        raise TypeError(f"'{path}' must be a number, got {value!r}")
    if isinstance(value, str) and ("float" in kinds or "int" in kinds):
        try:
            value = float(value)
        except ValueError:
            if "str" in kinds:
                return value
            raise TypeError(f"'{path}' must be a number, got {value!r}") from None
    if "int" in kinds and "float" not in kinds:
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, int):
            return value
        raise TypeError(f"'{path}' must be an integer, got {value!r}")
    if "float" in kinds:
        if isinstance(value, (int, float)):
            return float(value)
        raise TypeError(f"'{path}' must be a number, got {value!r}")
    if "str" in kinds:
        if isinstance(value, str):
            return value
        raise TypeError(f"'{path}' must be a string, got {value!r}")
    return value


def _build(cls, raw, path, src, lines):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{_where(src, lines, path)}: '{path}' must be a mapping")
    known = {f.name: f for f in fields(cls)}
    kw = {}
    for key, value in raw.items():
        sub = f"{path}.{key}"
        if key == "seed" and cls is not ExperimentConfig:
            raise ConfigError(f"{_where(src, lines, sub)}: set the seed at the top level, not in '{path}'")
        if key not in known:
            raise ConfigError(f"{_where(src, lines, sub)}: unknown key '{sub}'")
        nested = _NESTED.get((path, key))
        if nested is not None:
            kw[key] = _build(nested, value, sub, src, lines)
            continue
        try:
            kw[key] = _coerce(value, str(known[key].type), sub)
        except TypeError as e:
            raise ConfigError(f"{_where(src, lines, sub)}: {e}") from None
    try:
        return cls(**kw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{_where(src, lines, path)}: invalid '{path}': {e}") from None


def config_from_dict(raw, src="<config>", lines=None) -> ExperimentConfig:
    lines = lines or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{src}: the configuration must be a mapping")
    kw = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            kw[key] = _build(_SECTIONS[key], value, key, src, lines)
        elif key in _FREE:
            if value is not None and not isinstance(value, dict):
                raise ConfigError(f"{_where(src, lines, key)}: '{key}' must be a mapping")
            kw[key] = dict(value or {})
        elif key in _TOP:
            want = _TOP[key]
            if value is not None and not isinstance(value, want) or isinstance(value, bool) and want is int:
                raise ConfigError(f"{_where(src, lines, key)}: '{key}' must be of type {want.__name__}")
            kw[key] = value
        else:
            raise ConfigError(f"{_where(src, lines, key)}: unknown key '{key}'")
    try:
        return ExperimentConfig(**kw)
    except (ValueError, TypeError) as e:
        line = lines.get("mode")
        raise ConfigError(f"{src}:{line}: {e}" if line else f"{src}: {e}") from None


def parse_config(text: str, src="<config>") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{src}:{mark.line + 1}" if mark is not None else src
        raise ConfigError(f"{where}: malformed configuration: {getattr(e, 'problem', e)}") from None
    return config_from_dict(raw or {}, src, _key_lines(node) if node is not None else {})


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read configuration {path}: {e.strerror}") from None
    return parse_config(text, str(path))


def set_param(cfg: ExperimentConfig, dotted: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with one (possibly nested) parameter replaced and revalidated."""
    raw = cfg.to_dict()
    node = raw
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node[k]
    node[keys[-1]] = value
    return config_from_dict(raw, f"<{dotted}>")


def derived_seeds(seed: int):
    """Independent seeds for the training data, test data, trainer and random kernel."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(4)]


# ---------------------------------------------------------------- checkpoints


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def save_checkpoint(path, cfg: ExperimentConfig, iteration: int, state: dict, rows):
    doc = {"version": CHECKPOINT_VERSION, "mode": cfg.mode, "config": cfg.to_dict(),
           "iteration": int(iteration), "rows": list(rows), "state": state}
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, default=_json_default)
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise CheckpointError(f"checkpoint {path} is truncated or corrupt ({e.msg} at char {e.pos})") from None
    if not isinstance(doc, dict) or "version" not in doc:
        raise CheckpointError(f"{path} is not a checkpoint")
    if doc["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint {path} has format version {doc['version']}, "
                              f"this build reads version {CHECKPOINT_VERSION}")
    missing = {"mode", "config", "iteration", "rows", "state"} - set(doc)
    if missing:
        raise CheckpointError(f"checkpoint {path} lacks {', '.join(sorted(missing))}")
    return doc


def _rng_state(rng: np.random.Generator):
    return rng.bit_generator.state


def _rng_from(state) -> np.random.Generator:
    bg = getattr(np.random, state["bit_generator"])()
    bg.state = state
    return np.random.Generator(bg)


def ensemble_state(ens: FeatureEnsemble) -> dict:
    return {"theta": ens.theta, "w": ens.w, "sign": ens.sign}


def ensemble_from(state: dict, features) -> FeatureEnsemble:
    return FeatureEnsemble(np.array(state["theta"], dtype=float), np.array(state["w"], dtype=float),
                           np.array(state["sign"], dtype=float), features)


def checkpoint_roundtrip(path, cfg: ExperimentConfig, trainer_state: TrainerState, rows=()):
    """Save a dual-trainer state, load it back and return the restored state."""
    save_checkpoint(path, cfg, trainer_state.iteration, {
        "ensemble": ensemble_state(trainer_state.ensemble),
        "particles": trainer_state.particles,
        "rng": _rng_state(trainer_state.rng)}, rows)
    doc = load_checkpoint(path)
    st = doc["state"]
    return TrainerState(ensemble_from(st["ensemble"], trainer_state.ensemble.features),
                        np.array(st["particles"], dtype=float), doc["iteration"], _rng_from(st["rng"]))


# ---------------------------------------------------------------- targets


@dataclass
class Target:
    manifold: Manifold
    data: np.ndarray
    test: np.ndarray
    energy: callable
    grad: callable
    population: callable = None
    pde_fields: TorusFields = None

    def __post_init__(self):
        self.test_energy = self.energy(self.test)
        self.test_grad = self.manifold.tangent(self.test, self.grad(self.test))

    def student_metrics(self, f_vals, f_grads):
        """KL and score mismatch of a student given its Gibbs energy and gradient on the test set."""
        kl = kl_estimate(self.test, f_vals, self.test_energy, 1.0)
        sm = sm_estimate(self.test, self.manifold.tangent(self.test, f_grads), self.test_grad)
        return kl, sm


def _dataset(path, fallback, generate):
    if path:
        return load_dataset(path)
    if fallback and os.path.exists(fallback):
        return load_dataset(fallback)
    X = generate()
    if fallback:
        save_dataset(fallback, X)
    return X


def build_target(cfg: ExperimentConfig, out=None, reuse=False) -> Target:
    man = cfg.manifold.build()
    d_seed, t_seed, _, _ = derived_seeds(cfg.seed)
    spec = cfg.data
    data_file = os.path.join(out, "data.csv") if out else None
    test_file = os.path.join(out, "test.csv") if out else None
    if not reuse:
        inputs = {os.path.abspath(p) for p in (spec.path, spec.test_path) if p}
        for f in (data_file, test_file):
            if f and os.path.exists(f) and os.path.abspath(f) not in inputs:
                os.remove(f)
    if man.kind == SPHERE:
        teacher = cfg.teacher.build(man.dim)
        tb = spec.teacher_beta

        def gen(n, seed):
            return lambda: generate_dataset(teacher, tb, n, spec.langevin, seed)

        data = _dataset(spec.path, data_file, gen(spec.n, d_seed))
        test = _dataset(spec.test_path, test_file, gen(spec.n_test, t_seed))
        if out:
            with open(os.path.join(out, "teacher.json"), "w", encoding="utf-8") as fh:
                json.dump(teacher.to_dict(), fh)
        return Target(man, data, test,
                      lambda x: tb * teacher_energy(teacher, x)[0],
                      lambda x: tb * teacher_energy(teacher, x)[1])
    if man.kind == TORUS:
        pc = cfg.pde
        fields_ = build_target_fields(pc)

        def gen(n, seed):
            return lambda: sample_grid_density(fields_.nu_p, n, np.random.default_rng(seed))

        data = _dataset(spec.path, data_file, gen(spec.n, d_seed))
        test = _dataset(spec.test_path, test_file, gen(spec.n_test, t_seed))
        e_fn = interpolate_conv(target_g(fields_.grid, pc), pc)
        pop = interpolate_conv(fields_.nu_p, pc) if spec.population else None
        return Target(man, data, test,
                      lambda x: pc.beta * e_fn(x)[0],
                      lambda x: pc.beta * e_fn(x)[1],
                      pop, fields_)
    raise ConfigError("teacher-student runs need a sphere or torus manifold")


# ---------------------------------------------------------------- runs


class _Metrics:
    def __init__(self, out, cfg, rows=(), extra=()):
        self.rows = list(rows)
        self.path = os.path.join(out, "metrics.csv")
        self.writer = MetricsWriter(self.path, extra=extra)
        for r in self.rows:
            self.writer.write_line(r)
        self.t0 = time.perf_counter()

    def add(self, rec: MetricsRecord, **extra):
        self.rows.append(self.writer.write(rec, **extra))
        log.info("iter %d kl %.4g sm %.4g tv %.4g wall %.1fs", rec.iteration, rec.kl, rec.sm,
                 rec.tv_norm, time.perf_counter() - self.t0)

    def close(self):
        self.writer.close()


def _segments(start, total, every):
    """Segment ends for checkpointing: multiples of ``every`` after ``start``, then ``total``."""
    ends = []
    if every > 0:
        k = start // every + 1
        while k * every < total:
            ends.append(k * every)
            k += 1
    ends.append(total)
    return ends


def _ckpt_path(out, it=None):
    return os.path.join(out, "checkpoint.json" if it is None else f"checkpoint_{it}.json")


def _run_dual(cfg, out, ck):
    target = build_target(cfg, out, reuse=ck is not None)
    features = make_features(target.manifold, cfg.feature_spec)
    dcfg = replace(cfg.dual, seed=derived_seeds(cfg.seed)[2])
    beta = dcfg.beta
    state = None
    if ck is not None:
        st = ck["state"]
        state = TrainerState(ensemble_from(st["ensemble"], features), np.array(st["particles"], dtype=float),
                             ck["iteration"], _rng_from(st["rng"]))
    metrics = _Metrics(out, cfg, ck["rows"] if ck else ())

    def cb(s):
        ens = s.ensemble
        kl, sm = target.student_metrics(beta * energy(ens, target.test),
                                        beta * grad_energy_x(ens, target.test))
        metrics.add(MetricsRecord(s.iteration, dcfg.time(s.iteration), dcfg.rescaled_time(s.iteration),
                                  kl, sm, ens.tv_norm))

    def save(s, path):
        save_checkpoint(path, cfg, s.iteration, {"ensemble": ensemble_state(s.ensemble),
                                                 "particles": s.particles, "rng": _rng_state(s.rng)},
                        metrics.rows)

    start = state.iteration if state else 0
    try:
        for end in _segments(start, dcfg.T, cfg.checkpoint_every):
            state = train(target.data, dcfg, features=features, state=state, callback=cb,
                          log_every=cfg.log_every, data_term=target.population, until=end)
            save(state, _ckpt_path(out, None if end == dcfg.T else end))
    finally:
        metrics.close()
    return metrics.path


def _run_sm(cfg, out, ck):
    target = build_target(cfg, out, reuse=ck is not None)
    features = make_features(target.manifold, cfg.feature_spec)
    scfg = replace(cfg.sm, seed=derived_seeds(cfg.seed)[2])
    beta = scfg.beta
    if ck is not None:
        ens, it = ensemble_from(ck["state"]["ensemble"], features), ck["iteration"]
    else:
        ens, it = init_ensemble(features, scfg)[0], 0
    metrics = _Metrics(out, cfg, ck["rows"] if ck else ())

    def cb(i, e):
        kl, sm = target.student_metrics(beta * energy(e, target.test), beta * grad_energy_x(e, target.test))
        metrics.add(MetricsRecord(i, scfg.time(i), scfg.rescaled_time(i), kl, sm, e.tv_norm))

    try:
        for end in _segments(it, scfg.T, cfg.checkpoint_every):
            ens = train_sm(target.data, scfg, ens=ens, start=it, callback=cb, log_every=cfg.log_every, until=end)
            it = end
            save_checkpoint(_ckpt_path(out, None if end == scfg.T else end), cfg, it,
                            {"ensemble": ensemble_state(ens)}, metrics.rows)
    finally:
        metrics.close()
    return metrics.path


def _run_mmd(cfg, out, ck):
    target = build_target(cfg, out, reuse=ck is not None)
    man = target.manifold
    _, _, train_seed, kernel_seed = derived_seeds(cfg.seed)
    kernel = make_kernel(cfg.kernel, man, np.random.default_rng(kernel_seed))
    mcfg = replace(cfg.mmd, seed=train_seed)
    if ck is not None:
        X, rng, it = np.array(ck["state"]["particles"], dtype=float), _rng_from(ck["state"]["rng"]), ck["iteration"]
    else:
        X, rng, it = None, None, 0
    metrics = _Metrics(out, cfg, ck["rows"] if ck else (), extra=("mmd",))

    def cb(i, P):
        E = energy_estimate(target.test, P, target.data, kernel, mcfg)
        m = math.sqrt(max(mmd2(P, target.data, kernel), 0.0))
        g = mmd_drift(target.test, P, target.data, kernel)
        scale = 2.0 * mcfg.beta if mcfg.variant == "squared" else (mcfg.beta / m if m > 1e-9 else 0.0)
        kl, sm = target.student_metrics(E, scale * g)
        metrics.add(MetricsRecord(i, mcfg.time(i), mcfg.rescaled_time(i), kl, sm, math.nan), mmd=m)

    try:
        for end in _segments(it, mcfg.T, cfg.checkpoint_every):
            X, rng = train_mmd(target.data, mcfg, kernel, man, particles=X, rng=rng, start=it,
                               callback=cb, log_every=cfg.log_every, until=end)
            it = end
            save_checkpoint(_ckpt_path(out, None if end == mcfg.T else end), cfg, it,
                            {"particles": X, "rng": _rng_state(rng)}, metrics.rows)
    finally:
        metrics.close()
    return metrics.path


def _run_pde(cfg, out, ck):
    pc = cfg.pde
    fields_ = None
    it = 0
    if ck is not None:
        base = build_target_fields(pc)
        st = ck["state"]
        fields_ = TorusFields(np.array(st["gamma_minus"], dtype=float), np.array(st["nu"], dtype=float),
                              base.nu_p, base.E_p, float(st["t"]))
        it = ck["iteration"]
    metrics = _Metrics(out, cfg, ck["rows"] if ck else (), extra=("kl_ebm", "kl_nu"))

    def cb(r):
        metrics.add(MetricsRecord(r["iter"], r["time"], r["rescaled_time"], r["kl_ebm"], r["sm"], r["tv_norm"]),
                    kl_ebm=r["kl_ebm"], kl_nu=r["kl_nu"])

    dumps = {}
    try:
        for end in _segments(it, pc.n_steps, cfg.checkpoint_every):
            res = pde_run(pc, log_every=cfg.log_every, callback=cb, fields=fields_, start=it, until=end,
                          snapshot_times=[t for t in cfg.density_dumps if t not in dumps])
            dumps.update(res.snapshots)
            fields_, it = res.fields, end
            save_checkpoint(_ckpt_path(out, None if end == pc.n_steps else end), cfg, it,
                            {"gamma_minus": fields_.gamma_minus, "nu": fields_.nu, "t": fields_.t}, metrics.rows)
    finally:
        metrics.close()
    for t, f in sorted(dumps.items()):
        path = os.path.join(out, f"density_t{t:g}.csv")
        np.savetxt(path, np.column_stack([f.grid, f.nu, f.gamma_minus, f.nu_p]), fmt="%.17g",
                   delimiter=",", header="x,nu,gamma_minus,nu_p", comments="")
    if cfg.plot and dumps:
        from .plotting import plot_density
        ts = sorted(dumps)
        plot_density(fields_.grid, [dumps[t].nu for t in ts] + [fields_.nu_p],
                     os.path.join(out, "densities.svg"), [f"t = {t:g}" for t in ts] + ["target"])
    return metrics.path


def _run_teacher_gen(cfg, out):
    target = build_target(cfg, out, reuse=False)
    log.info("wrote %d training and %d test samples to %s", len(target.data), len(target.test), out)
    return None


_RUNNERS = {"train-dual": _run_dual, "train-sm": _run_sm, "train-mmd": _run_mmd, "pde1d": _run_pde}


def run_experiment(cfg: ExperimentConfig, out=None, resume=None) -> int:
    """Run one experiment and write its artifacts into ``out``; returns 0 on success.

    ``resume`` names a checkpoint written by an earlier run of the same mode.
    """
    out = out or cfg.out
    if not out:
        raise ConfigError("no output directory given")
    os.makedirs(out, exist_ok=True)
    ck = None
    if resume is not None:
        ck = load_checkpoint(resume)
        if ck["mode"] != cfg.mode:
            raise CheckpointError(f"checkpoint was written by mode {ck['mode']!r}, not {cfg.mode!r}")
    with open(os.path.join(out, "config.yaml"), "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
    if cfg.mode == "teacher-gen":
        _run_teacher_gen(cfg, out)
        return 0
    metrics_path = _RUNNERS[cfg.mode](cfg, out, ck)
    if cfg.plot:
        from .plotting import plot_metrics
        plot_metrics(metrics_path, os.path.join(out, "metrics.svg"), labels=[cfg.mode])
    return 0


# ---------------------------------------------------------------- sweeps


def expand_sweep(cfg: ExperimentConfig):
    """``(label, config)`` for each seed and each point of the parameter grid."""
    spec = dict(cfg.sweep)
    seeds = spec.pop("seeds", [cfg.seed])
    grid = spec.pop("grid", {})
    if spec:
        raise ConfigError(f"unknown sweep keys: {', '.join(sorted(spec))}")
    keys = sorted(grid)
    runs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        base = cfg
        parts = []
        for k, v in zip(keys, values):
            base = set_param(base, k, v)
            parts.append(f"{k.split('.')[-1]}={v}")
        for seed in seeds:
            c = replace(copy.deepcopy(base), seed=int(seed), sweep={})
            runs.append(("_".join(parts + [f"seed={seed}"]), c))
    return runs


def _sweep_worker(args):
    label, raw, out = args
    logging.basicConfig(level=logging.WARNING)
    try:
        return label, run_experiment(config_from_dict(raw), out), ""
    except Exception as e:  # reported in the sweep summary
        return label, 1, f"{type(e).__name__}: {e}"


def run_sweep(cfg: ExperimentConfig, out=None, threads=None) -> int:
    """Independent seeded runs, ``threads`` at a time (default from ``DUALEBM_THREADS``)."""
    out = out or cfg.out
    if not out:
        raise ConfigError("no output directory given")
    threads = threads or int(os.environ.get(THREADS_ENV, "1"))
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer")
    os.makedirs(out, exist_ok=True)
    jobs = [(label, c.to_dict(), os.path.join(out, label)) for label, c in expand_sweep(cfg)]
    if threads == 1:
        results = [_sweep_worker(j) for j in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    with open(os.path.join(out, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write("run,status,error\n")
        for label, status, err in results:
            fh.write(f"{label},{status},{err.replace(',', ';')}\n")
    done = [os.path.join(out, label, "metrics.csv") for label, status, _ in results if status == 0]
    if cfg.plot and done and cfg.mode != "teacher-gen":
        from .plotting import plot_metrics
        plot_metrics(done, os.path.join(out, "sweep.svg"),
                     labels=[label for label, status, _ in results if status == 0])
    return 0 if all(status == 0 for _, status, _ in results) else 1
