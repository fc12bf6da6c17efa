"""Experiment configuration: YAML documents checked against a JSON schema.

Validation errors carry the line number of the offending node so that a
bad config can be fixed without guessing. Initial profiles for the PDE
mode are written as arithmetic expressions in ``x`` and are evaluated by a
small whitelisting interpreter (no ``eval``).
"""

import ast
import copy
import hashlib
import json
import math
import operator
import re

import jsonschema
import numpy as np
import yaml

__all__ = ["ConfigError", "SCHEMA", "load_config", "parse_config", "config_hash",
           "compile_profile", "d0_grid"]


class ConfigError(ValueError):
    """Invalid configuration; the message starts with ``line N:`` when known."""


_number = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
# a real number, or a [re, im] pair for complex entries
_scalar = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}]}
_matrix = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": _scalar}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["system", "certification"],
    "properties": {
        "system": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["lti", "reaction_diffusion", "spectral"]}},
            "allOf": [
                {"if": {"properties": {"kind": {"const": "lti"}}},
                 "then": {"required": ["A", "B"],
                          "additionalProperties": False,
                          "properties": {"kind": {}, "A": _matrix, "B": _matrix, "K": _matrix,
                                         "poles": {"type": "array", "items": _scalar}}}},
                {"if": {"properties": {"kind": {"const": "reaction_diffusion"}}},
                 "then": {"additionalProperties": False,
                          "properties": {"kind": {}, "a": _pos, "c": _pos, "L": _pos,
                                         "N0": {"type": "integer", "minimum": 1},
                                         "N_sim": {"type": "integer", "minimum": 1},
                                         "K": _matrix,
                                         "poles": {"type": "array", "items": _scalar}}}},
                {"if": {"properties": {"kind": {"const": "spectral"}}},
                 "then": {"required": ["eigenvalues", "input_coeffs", "N0"],
                          "additionalProperties": False,
                          "properties": {"kind": {}, "eigenvalues": {"type": "array", "minItems": 1,
                                                                     "items": _scalar},
                                         "input_coeffs": _matrix,
                                         "N0": {"type": "integer", "minimum": 1},
                                         "riesz_bounds": {"type": "array", "items": _pos,
                                                          "minItems": 2, "maxItems": 2},
                                         "K": _matrix,
                                         "poles": {"type": "array", "items": _scalar}}}},
            ],
        },
        "certification": {
            "type": "object",
            "additionalProperties": False,
            "required": ["D0"],
            "properties": {
                "D0": _pos,
                "kappa": _nonneg,
                "tol": _pos,
                "eps_pd": _pos,
                "mu_grid": {"type": "array", "items": _pos, "minItems": 1},
            },
        },
        "delay": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "sinusoid", "table"]},
                "amplitude": _number,
                "omega": _number,
                "phase": _number,
                "table": {"type": "array", "minItems": 2,
                          "items": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}},
            },
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t0", "T"],
            "properties": {
                "t0": _pos,
                "T": _pos,
                "h": _pos,
                "x0": {"type": "array", "items": _number, "minItems": 1},
                "X0": {"type": "string"},
                "fit_window": {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2},
                "x_points": {"type": "integer", "minimum": 0},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "D0_grid": {"oneOf": [
                    {"type": "array", "items": _pos},
                    {"type": "object", "additionalProperties": False,
                     "required": ["start", "stop", "num"],
                     "properties": {"start": _pos, "stop": _pos,
                                    "num": {"type": "integer", "minimum": 0}}},
                ]},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "figures": {"type": "boolean"},
                "field_stride": {"type": "integer", "minimum": 1},
            },
        },
    },
}

DEFAULTS = {
    "certification": {"kappa": 0.2, "tol": 1e-4, "eps_pd": 1e-6},
    "output": {"dir": "results", "figures": True, "field_stride": 10},
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-4`` style floats (YAML 1.2 syntax)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                    |[-+]?\.(?:inf|Inf|INF)
                    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def _node_at(node, path):
    """Deepest YAML node reachable along a jsonschema error path."""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
    return node


def _line_of(root, path, key=False):
    if root is None:
        return None
    if key and path:
        parent = _node_at(root, path[:-1])
        if isinstance(parent, yaml.MappingNode):
            for k, _ in parent.value:
                if k.value == path[-1]:
                    return k.start_mark.line + 1
    return _node_at(root, path).start_mark.line + 1


def parse_config(text, source="<config>"):
    """Parse and validate a YAML document; return a dict with defaults filled.

    Raises
    ------
    ConfigError
        With a ``line N:`` prefix pointing at the problem.
    """
    try:
        root = yaml.compose(text, Loader=_Loader)
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{source}: {line}YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        raise ConfigError(f"{source}: line 1: empty configuration")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.path), list(map(str, e.path))))
    if errors:
        err = errors[0]
        # the most specific sub-error usually has the clearest message
        if err.context:
            err = max(err.context, key=lambda e: len(e.path))
        path = list(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            if extra:
                path.append(extra[0])
        line = _line_of(root, path, key=True)
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        raise ConfigError(f"{source}: line {line}: {where}: {err.message}")
    cfg = copy.deepcopy(data)
    for section, values in DEFAULTS.items():
        cfg.setdefault(section, {})
        for k, v in values.items():
            cfg[section].setdefault(k, v)
    _semantic_checks(cfg, root, source)
    return cfg


def _semantic_checks(cfg, root, source):
    sysc = cfg["system"]
    if sysc["kind"] == "reaction_diffusion":
        n0, nsim = sysc.get("N0", 3), sysc.get("N_sim", 10)
        if nsim < n0:
            raise ConfigError(f"{source}: line {_line_of(root, ['system'])}: N_sim must be at least N0")
    if sysc["kind"] == "spectral" and sysc["N0"] > len(sysc["eigenvalues"]):
        raise ConfigError(f"{source}: line {_line_of(root, ['system', 'N0'])}: N0 exceeds the number of modes")
    sim = cfg.get("simulation")
    if sim and "X0" in sim:
        try:
            compile_profile(sim["X0"])
        except ValueError as exc:
            raise ConfigError(f"{source}: line {_line_of(root, ['simulation', 'X0'])}: {exc}") from None


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def config_hash(cfg, overrides=None):
    """SHA-256 of the canonical JSON form of the config and any overrides."""
    payload = {"config": cfg, "overrides": overrides or {}}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def to_array(values, ndim=2):
    """Array from nested lists whose scalar entries may be ``[re, im]`` pairs.

    `ndim` is the depth of the result (1 for vectors, 2 for matrices).
    """
    def conv(v, depth):
        if depth == 0:
            return complex(v[0], v[1]) if isinstance(v, list) else v
        return [conv(w, depth - 1) for w in v]
    arr = np.array(conv(values, ndim))
    if np.iscomplexobj(arr):
        return arr.real.astype(float) if np.all(arr.imag == 0) else arr
    return arr.astype(float)


def d0_grid(cfg):
    """D0 values of the sweep section (may be empty)."""
    spec = cfg.get("sweep", {}).get("D0_grid")
    if spec is None:
        return []
    if isinstance(spec, dict):
        return list(np.linspace(spec["start"], spec["stop"], spec["num"]))
    return [float(v) for v in spec]


# --------------------------------------------------------------------------
# safe profile expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "tanh": np.tanh,
          "abs": np.abs}


def compile_profile(expr, constants=None):
    """Compile an expression in ``x`` into a vectorized function.

    Allowed: numbers, ``+ - * / **``, unary signs, the names ``x``, ``pi``
    and any keys of `constants`, and the functions sin, cos, exp, sqrt,
    tanh, abs.
    """
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {expr!r}: {exc.msg}") from None
    names = {"pi": math.pi, **(constants or {})}

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name):
            if node.id != "x" and node.id not in names and node.id not in ("L", "a", "c"):
                raise ValueError(f"unknown name {node.id!r} in expression")
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return check(node.operand)
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return check(node.args[0])
        raise ValueError(f"unsupported construct {type(node).__name__} in expression")

    check(tree)

    def run(node, env):
        if isinstance(node, ast.Expression):
            return run(node.body, env)
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise ValueError(f"name {node.id!r} has no value")
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](run(node.left, env), run(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](run(node.operand, env))
        return _FUNCS[node.func.id](run(node.args[0], env))

    def profile(x, **extra):
        env = dict(names)
        env.update(extra)
        env["x"] = np.asarray(x, dtype=float)
        return run(tree, env)

    return profile
