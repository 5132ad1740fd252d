"""Experiment configuration: strict YAML schema with round-tripping.

The parser is deliberately unforgiving: unknown keys anywhere in the tree
are an error, as are missing required keys and type mismatches. This is
the anti-typo contract for a tool whose runs can take minutes.

Reference grammar (YAML, all keys shown; * marks optional):

    problem:
      kind: toy | quadratics
      tasks: <int>          # quadratics only
      dim: <int>            # quadratics only
      cond_max: <float>     # quadratics only
      seed: <int>           # quadratics only
    aggregators:            # list; entry is a name or a mapping
      - nash
      - kind: cagrad
        cagrad_c: 0.4       # *
        dwa_temperature: 2.0  # *
    optimizer:
      step_rule:
        kind: theorem | fixed | adam
        smoothness: <float> # theorem only; omit to estimate from problem
        rate: <float>       # fixed / adam
        beta1: 0.9          # * adam
        beta2: 0.999        # * adam
        eps: 1.0e-8         # * adam
      max_steps: <int>
      weight_update_every: 1      # *
      stationarity_tol: 1.0e-8    # *
      seed: 0                     # *
    inits: default5 | [[...], ...]
    output_dir: <path>
    emit_plots: true | false      # *
    bench_update_every: [1, 5, 50]  # * (bench verb)
    metrics_baseline: [<float>, ...]  # * (reference losses for the summary table)
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import yaml

from . import optim, problems
from .baselines import AggregatorKind, AggregatorTag
from .errors import ConfigError

__all__ = ["ExperimentConfig", "load_config", "dump_config"]


@dataclass(frozen=True)
class ExperimentConfig:
    problem_kind: str
    aggregators: List[AggregatorKind]
    optimizer: optim.OptimizerConfig
    inits: object  # "default5" or list of vectors
    output_dir: str
    emit_plots: bool = False
    problem_args: dict = field(default_factory=dict)
    bench_update_every: Optional[List[int]] = None
    metrics_baseline: Optional[List[float]] = None
    smoothness_from_problem: bool = False

    def build_problem(self):
        if self.problem_kind == "toy":
            return problems.toy_problem()
        a = self.problem_args
        return problems.random_quadratics(a["tasks"], a["dim"], a["cond_max"], a["seed"])

    def init_points(self, problem):
        if self.inits == "default5":
            if self.problem_kind != "toy":
                raise ConfigError("inits 'default5' is only defined for the toy problem")
            return problems.toy_inits()
        return [np.asarray(p, dtype=np.float64) for p in self.inits]

    def step_rule_for(self, problem):
        rule = self.optimizer.step_rule
        if self.smoothness_from_problem:
            return optim.TheoremSchedule(problems.estimate_smoothness(problem))
        return rule


def _require(mapping, key, context):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key '{key}'")
    return mapping[key]


def _check_keys(mapping, allowed, context):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{context}: expected a mapping, got {type(mapping).__name__}")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")


def _as_int(v, context):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{context}: expected an integer, got {v!r}")
    return v


def _as_float(v, context):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{context}: expected a number, got {v!r}")
    return float(v)


def _parse_aggregator(entry, i):
    ctx = f"aggregators[{i}]"
    if isinstance(entry, str):
        entry = {"kind": entry}
    _check_keys(entry, {"kind", "cagrad_c", "dwa_temperature"}, ctx)
    name = _require(entry, "kind", ctx)
    try:
        tag = AggregatorTag(name)
    except ValueError:
        raise ConfigError(f"{ctx}: unknown aggregator '{name}'") from None
    kwargs = {}
    if "cagrad_c" in entry:
        kwargs["cagrad_c"] = _as_float(entry["cagrad_c"], ctx)
    if "dwa_temperature" in entry:
        kwargs["dwa_temperature"] = _as_float(entry["dwa_temperature"], ctx)
    return AggregatorKind(tag, **kwargs)


def _parse_step_rule(node):
    ctx = "optimizer.step_rule"
    kind = _require(node, "kind", ctx)
    if kind == "theorem":
        _check_keys(node, {"kind", "smoothness"}, ctx)
        if "smoothness" in node:
            return optim.TheoremSchedule(_as_float(node["smoothness"], ctx)), False
        # estimated from the problem when the run starts
        return optim.TheoremSchedule(1.0), True
    if kind == "fixed":
        _check_keys(node, {"kind", "rate"}, ctx)
        return optim.FixedRate(_as_float(_require(node, "rate", ctx), ctx)), False
    if kind == "adam":
        _check_keys(node, {"kind", "rate", "beta1", "beta2", "eps"}, ctx)
        kwargs = {"rate": _as_float(_require(node, "rate", ctx), ctx)}
        for k in ("beta1", "beta2", "eps"):
            if k in node:
                kwargs[k] = _as_float(node[k], ctx)
        return optim.Adam(**kwargs), False
    raise ConfigError(f"{ctx}: unknown kind '{kind}'")


def parse_config(doc):
    """Validate a parsed YAML tree into an ExperimentConfig."""
    _check_keys(
        doc,
        {"problem", "aggregators", "optimizer", "inits", "output_dir",
         "emit_plots", "bench_update_every", "metrics_baseline"},
        "config",
    )
    pnode = _require(doc, "problem", "config")
    pkind = _require(pnode, "kind", "problem")
    if pkind == "toy":
        _check_keys(pnode, {"kind"}, "problem")
        pargs = {}
    elif pkind == "quadratics":
        _check_keys(pnode, {"kind", "tasks", "dim", "cond_max", "seed"}, "problem")
        pargs = {
            "tasks": _as_int(_require(pnode, "tasks", "problem"), "problem.tasks"),
            "dim": _as_int(_require(pnode, "dim", "problem"), "problem.dim"),
            "cond_max": _as_float(_require(pnode, "cond_max", "problem"), "problem.cond_max"),
            "seed": _as_int(_require(pnode, "seed", "problem"), "problem.seed"),
        }
    else:
        raise ConfigError(f"problem.kind: unknown problem '{pkind}'")

    raw_aggs = _require(doc, "aggregators", "config")
    if not isinstance(raw_aggs, list) or not raw_aggs:
        raise ConfigError("aggregators: must be a non-empty list")
    aggregators = [_parse_aggregator(a, i) for i, a in enumerate(raw_aggs)]

    onode = _require(doc, "optimizer", "config")
    _check_keys(
        onode,
        {"step_rule", "max_steps", "weight_update_every", "stationarity_tol", "seed"},
        "optimizer",
    )
    step_rule, estimate_l = _parse_step_rule(_require(onode, "step_rule", "optimizer"))
    okwargs = {
        "step_rule": step_rule,
        "max_steps": _as_int(_require(onode, "max_steps", "optimizer"), "optimizer.max_steps"),
    }
    if "weight_update_every" in onode:
        okwargs["weight_update_every"] = _as_int(
            onode["weight_update_every"], "optimizer.weight_update_every")
    if "stationarity_tol" in onode:
        okwargs["stationarity_tol"] = _as_float(
            onode["stationarity_tol"], "optimizer.stationarity_tol")
    if "seed" in onode:
        okwargs["seed"] = _as_int(onode["seed"], "optimizer.seed")
    optimizer = optim.OptimizerConfig(**okwargs)

    inits = _require(doc, "inits", "config")
    if inits != "default5":
        if not isinstance(inits, list) or not inits:
            raise ConfigError("inits: expected 'default5' or a non-empty list of points")
        inits = [[_as_float(x, "inits") for x in p] for p in inits]

    out_dir = _require(doc, "output_dir", "config")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output_dir: expected a non-empty string")

    emit_plots = doc.get("emit_plots", False)
    if not isinstance(emit_plots, bool):
        raise ConfigError("emit_plots: expected true/false")

    bench = doc.get("bench_update_every")
    if bench is not None:
        if not isinstance(bench, list) or not bench:
            raise ConfigError("bench_update_every: expected a non-empty list of integers")
        bench = [_as_int(t, "bench_update_every") for t in bench]

    baseline = doc.get("metrics_baseline")
    if baseline is not None:
        if not isinstance(baseline, list) or not baseline:
            raise ConfigError("metrics_baseline: expected a non-empty list of numbers")
        baseline = [_as_float(v, "metrics_baseline") for v in baseline]

    return ExperimentConfig(
        problem_kind=pkind,
        aggregators=aggregators,
        optimizer=optimizer,
        inits=inits,
        output_dir=out_dir,
        emit_plots=emit_plots,
        problem_args=pargs,
        bench_update_every=bench,
        metrics_baseline=baseline,
        smoothness_from_problem=estimate_l,
    )


def load_config(path):
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    return parse_config(doc)


def _step_rule_dict(cfg):
    rule = cfg.optimizer.step_rule
    if isinstance(rule, optim.TheoremSchedule):
        node = {"kind": "theorem"}
        if not cfg.smoothness_from_problem:
            node["smoothness"] = rule.smoothness
        return node
    if isinstance(rule, optim.FixedRate):
        return {"kind": "fixed", "rate": rule.rate}
    return {"kind": "adam", "rate": rule.rate, "beta1": rule.beta1,
            "beta2": rule.beta2, "eps": rule.eps}


def config_to_dict(cfg):
    """The exact tree parse_config accepts; load(dump(cfg)) == cfg."""
    doc = {
        "problem": {"kind": cfg.problem_kind, **cfg.problem_args},
        "aggregators": [
            {"kind": a.tag.value, "cagrad_c": a.cagrad_c,
             "dwa_temperature": a.dwa_temperature}
            for a in cfg.aggregators
        ],
        "optimizer": {
            "step_rule": _step_rule_dict(cfg),
            "max_steps": cfg.optimizer.max_steps,
            "weight_update_every": cfg.optimizer.weight_update_every,
            "stationarity_tol": cfg.optimizer.stationarity_tol,
            "seed": cfg.optimizer.seed,
        },
        "inits": cfg.inits,
        "output_dir": cfg.output_dir,
        "emit_plots": cfg.emit_plots,
    }
    if cfg.bench_update_every is not None:
        doc["bench_update_every"] = cfg.bench_update_every
    if cfg.metrics_baseline is not None:
        doc["metrics_baseline"] = cfg.metrics_baseline
    return doc


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)
