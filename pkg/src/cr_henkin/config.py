"""Experiment configuration: one INI schema for every command, fail-closed.

Unknown sections or keys, unparsable values and violated invariants raise
ConfigError carrying the line number and the ``section.key`` field name.
"""
from __future__ import annotations

import ast
import configparser
import math
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import geometry, profiles
from .errors import ConfigError, GeometryError


def _floats(s):
    return tuple(float(x) for x in re.split(r"[,\s]+", s.strip()) if x)


def _ints(s):
    return tuple(int(x) for x in re.split(r"[,\s]+", s.strip()) if x)


def _words(s):
    return tuple(x for x in re.split(r"[,\s]+", s.strip()) if x)


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _p_values(s):
    out = []
    for w in _words(s):
        out.append(math.inf if w.lower() in ("inf", "infinity") else float(w))
    return tuple(out)


# section -> key -> (parser, default)
SCHEMA: dict = {
    "run": {
        "seed": (int, 0),
        "threads": (int, 1),
        "out": (str, "results"),
    },
    "domain": {
        "family": (str, "ball"),
        "alpha": (float, None),
        "alpha1": (float, None),
        "alpha2": (float, None),
        "beta1": (float, None),
        "beta2": (float, None),
        "radius": (float, None),
        "delta": (float, None),
        # custom domains: F(t) + G(|z2|^2) < 1
        "setting": (str, "complex"),
        "profile": (str, "monomial"),
        "m": (float, 1.0),
        "profile_alpha": (float, 0.5),
        "profile_scale": (float, 1.0),
        "table_t": (_floats, None),
        "table_f": (_floats, None),
        "remainder": (str, "quadratic"),
        "diameter": (float, 2.0),
    },
    "grids": {
        "resolutions": (_ints, (8, 12, 16)),
        "volume_resolutions": (_ints, None),
        "volume_radial": (_ints, None),
    },
    "dbar": {
        "forms": (_words, ("dzb1", "dzb1zb2")),
        "points": (int, 200),
        "depth": (float, 0.1),
        "fd_step": (float, 1e-3),
        "tolerance": (float, 5e-2),
        "fraction": (float, 0.95),
    },
    "dbarb": {
        "eps": (_floats, (0.1, 0.05, 0.025)),
        "p": (_p_values, (1.0, 2.0, math.inf)),
        "forms": (int, 20),
        "degree": (int, 3),
        "zero_form": (_bool, False),
        "incompatible": (_bool, False),
        "change": (float, 0.25),
        "lambda_curves": (int, 8),
        "eval_resolution": (int, 8),
        "eval_points": (int, 128),
        "residual_points": (int, 16),
    },
    "lemma": {
        "which": (_ints, (22,)),
        "k": (int, 1),
        "samples": (int, 10000),
        "factor": (float, 2.0),
    },
    "type": {
        "exponential": (_floats, (0.25, 0.5, 0.75, 0.9, 1.0, 1.25)),
        "monomial": (_floats, (1.0, 2.0, 3.0, 5.0)),
        "d": (_floats, (1.0, 0.25)),
        "s": (_floats, (0.1, 0.01)),
    },
    "nevanlinna": {
        "h": (str, "z1 - 0.3"),
        "divisor": (str, ""),
        "epsilon": (float, 0.2),
        "levels": (_floats, (0.2, 0.1, 0.05, 0.025)),
        "threshold": (float, 3.0),
        "blaschke_budget": (float, 1e3),
        "resolution": (int, 12),
        "volume_resolution": (int, 8),
        "level_resolution": (int, 8),
    },
    "grid_export": {
        "resolution": (int, 16),
        "eps": (float, 0.0),
    },
}

POSITIVE = {"dbar.fd_step", "dbar.tolerance", "dbar.fraction", "dbarb.change", "lemma.factor",
            "nevanlinna.epsilon", "nevanlinna.threshold", "nevanlinna.blaschke_budget",
            "run.threads", "dbar.points", "dbarb.forms", "dbarb.eval_points", "lemma.samples"}


@dataclass
class ExperimentConfig:
    values: dict
    path: Optional[Path] = None
    lines: dict = field(default_factory=dict)

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def line_of(self, section, key=None):
        return self.lines.get((section, key))

    def relative(self, p: str) -> Path:
        q = Path(p)
        if not q.is_absolute() and self.path is not None:
            q = self.path.parent / q
        return q


def _scan_lines(text: str) -> dict:
    # (section, key) -> line number, (section, None) -> header line
    out, sec = {}, None
    for n, raw in enumerate(text.splitlines(), 1):
        ln = raw.strip()
        if not ln or ln[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", ln)
        if m:
            sec = m.group(1).strip()
            out.setdefault((sec, None), n)
            continue
        if sec is not None and ("=" in ln or ":" in ln):
            key = re.split(r"[=:]", ln, 1)[0].strip().lower()
            out.setdefault((sec, key), n)
    return out


def parse_config(text: str, path: Optional[Path] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        msg = str(getattr(exc, "message", exc)).splitlines()[0]
        raise ConfigError(f"malformed config: {msg}", getattr(exc, "lineno", None)) from exc
    lines = _scan_lines(text)
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)), sec)
        for key, raw in cp[sec].items():
            fname = f"{sec}.{key}"
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r}", lines.get((sec, key)), fname)
            parser = SCHEMA[sec][key][0]
            try:
                val = parser(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"cannot parse {raw!r}: {exc}", lines.get((sec, key)), fname) from exc
            if fname in POSITIVE and not val > 0:
                raise ConfigError("value must be positive", lines.get((sec, key)), fname)
            values[sec][key] = val
    cfg = ExperimentConfig(values, path, lines)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text, path)


def _validate(cfg: ExperimentConfig) -> None:
    def bad(msg, sec, key):
        raise ConfigError(msg, cfg.line_of(sec, key), f"{sec}.{key}")

    res = cfg["grids"]["resolutions"]
    if not res or any(b <= a for a, b in zip(res, res[1:])):
        bad("resolutions must be strictly increasing", "grids", "resolutions")
    if min(res) < 8:
        bad("resolutions must be at least 8", "grids", "resolutions")
    for key in ("volume_resolutions", "volume_radial"):
        v = cfg["grids"][key]
        if v is not None and len(v) != len(res):
            bad("needs one entry per resolution", "grids", key)
        if v is not None and min(v) < 1:
            bad("entries must be positive", "grids", key)
    vr = cfg["grids"]["volume_resolutions"]
    if vr is not None and min(vr) < 8:
        bad("volume resolutions must be at least 8", "grids", "volume_resolutions")
    if not 0 < cfg["dbar"]["fraction"] <= 1:
        bad("fraction must lie in (0, 1]", "dbar", "fraction")
    if not 0 < cfg["dbar"]["depth"] < 1:
        bad("depth must lie in (0, 1)", "dbar", "depth")
    for f in cfg["dbar"]["forms"]:
        if f not in ("dzb1", "dzb1zb2"):
            bad(f"unknown form {f!r}", "dbar", "forms")
    eps = cfg["dbarb"]["eps"]
    if not eps or any(e <= 0 for e in eps):
        bad("eps values must be positive", "dbarb", "eps")
    if any(p < 1 for p in cfg["dbarb"]["p"]):
        bad("p must be >= 1", "dbarb", "p")
    for w in cfg["lemma"]["which"]:
        if w not in (22, 23):
            bad("lemma must be 22 or 23", "lemma", "which")
    if not cfg["type"]["exponential"] and not cfg["type"]["monomial"]:
        bad("empty family list: give exponential and/or monomial values", "type", "exponential")
    if any(a <= 0 for a in cfg["type"]["exponential"]):
        bad("exponents must be positive", "type", "exponential")
    if any(m <= 0 for m in cfg["type"]["monomial"]):
        bad("powers must be positive", "type", "monomial")
    if cfg["dbarb"]["eval_resolution"] < 8:
        bad("evaluation resolution must be at least 8", "dbarb", "eval_resolution")
    lv = cfg["nevanlinna"]["levels"]
    if not lv or any(e <= 0 for e in lv):
        bad("levels must be positive", "nevanlinna", "levels")
    if cfg["domain"]["family"] not in tuple(geometry.FAMILIES) + ("custom",):
        bad(f"unknown family {cfg['domain']['family']!r}", "domain", "family")
    try:
        compile_h(cfg["nevanlinna"]["h"])
    except ValueError as exc:
        bad(str(exc), "nevanlinna", "h")


# ----------------------------------------------------------------- domains

_FAMILY_KEYS = {
    "ball": ("delta",),
    "dalpha": ("alpha", "delta"),
    "om1": ("alpha1", "alpha2", "delta", "radius"),
    "om2": ("alpha1", "beta1", "alpha2", "beta2", "delta", "radius"),
    "om3": ("alpha1", "beta1", "alpha2", "delta", "radius"),
    "om4": ("alpha1", "delta", "radius"),
}
_CUSTOM_KEYS = ("setting", "profile", "m", "profile_alpha", "profile_scale", "table_t", "table_f",
                "remainder", "diameter", "delta")


def build_domain(cfg: ExperimentConfig) -> geometry.ModelDomain:
    d = cfg["domain"]
    fam = d["family"]
    defaults = SCHEMA["domain"]
    if fam == "custom":
        return _custom_domain(cfg)
    allowed = _FAMILY_KEYS[fam]
    for key, val in d.items():
        if key == "family" or val == defaults[key][1]:
            continue
        if key not in allowed:
            raise ConfigError(f"key not used by family {fam!r}", cfg.line_of("domain", key),
                              f"domain.{key}")
    params = {k: d[k] for k in allowed if d[k] is not None}
    try:
        return geometry.make_domain(fam, **params)
    except GeometryError as exc:
        raise ConfigError(str(exc), cfg.line_of("domain", "family"), "domain.family") from exc


def _custom_profile(cfg):
    d = cfg["domain"]
    kind = d["profile"]
    if kind == "monomial":
        return profiles.monomial(d["m"])
    if kind == "exponential":
        return profiles.exponential(d["profile_alpha"], scale=d["profile_scale"])
    if kind == "table":
        if d["table_t"] is None or d["table_f"] is None or len(d["table_t"]) != len(d["table_f"]):
            raise ConfigError("table needs table_t and table_f of equal length",
                              cfg.line_of("domain", "table_t"), "domain.table_t")
        return profiles.table(d["table_t"], d["table_f"])
    raise ConfigError(f"unknown profile {kind!r}", cfg.line_of("domain", "profile"), "domain.profile")


def _custom_domain(cfg):
    d = cfg["domain"]
    if d["setting"] not in ("complex", "real"):
        raise ConfigError("setting must be complex or real", cfg.line_of("domain", "setting"),
                          "domain.setting")
    f = _custom_profile(cfg)
    if d["remainder"] != "quadratic":
        raise ConfigError("custom domains support remainder = quadratic",
                          cfg.line_of("domain", "remainder"), "domain.remainder")
    rem = geometry.ConvexRemainder((("z2", profiles.monomial(1)),), 1.0, name="quadratic")
    delta = d["delta"] if d["delta"] is not None else 0.5
    return geometry._mk(d["setting"], f, rem, d["diameter"], delta, (0, 1), "custom", {})


# ------------------------------------------------------------------- h spec

_BIN = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow}
_UN = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUN = {"exp": np.exp, "conj": np.conj}


def compile_h(expr: str) -> Callable:
    """Vectorised h(z) from an arithmetic expression in z1, z2 (and exp, numbers, 1j)."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse h = {expr!r}") from exc

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _BIN:
            return check(node.left) and check(node.right)
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UN:
            return check(node.operand)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
            return True
        if isinstance(node, ast.Name) and node.id in ("z1", "z2"):
            return True
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUN and len(node.args) == 1 and not node.keywords):
            return check(node.args[0])
        raise ValueError(f"unsupported element in h: {ast.dump(node)[:40]}")

    check(tree)

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.BinOp):
            return _BIN[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UN[type(node.op)](ev(node.operand, env))
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            return env[node.id]
        return _FUN[node.func.id](ev(node.args[0], env))

    def h(z):
        z = np.asarray(z, dtype=complex)
        val = ev(tree, {"z1": z[..., 0], "z2": z[..., 1]})
        return np.broadcast_to(np.asarray(val, dtype=complex), z.shape[:-1])

    h.expr = expr
    return h
