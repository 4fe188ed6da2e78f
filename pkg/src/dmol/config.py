"""TOML run configurations.

A configuration names a domain, its materials, the boundary data and body
force, and then optional ``[mesh]``, ``[convergence]``, ``[measurement]`` and
``[inverse]`` tables. Angles may be written as numbers or as short
expressions in ``pi`` such as ``"3*pi/4"``.

Example::

    [problem]
    shape = "star5"
    interfaces = [0, "pi/2", "pi", "3*pi/2"]
    tensors = [[40, 30, 10, 20, 2, 1], [20, 15, 5, 10, 1, 0.5],
               [4, 3, 1, 2, 0.2, 0.1], [20, 15, 5, 10, 1, 0.5]]
    dirichlet = {kind = "constant", value = [1, 1]}
    body_force = {kind = "constant", value = [1, 1]}

    [mesh]
    M = 128
    order = 1
"""

from __future__ import annotations

import ast
import copy
import math
import operator
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigurationError
from .forward import ForwardProblem, constant_vector, exact_crack_solution, radial_unit_field
from .geometry import DomainSpec, preset_shapes, tabulated_shape
from .material import AnisoTensor, PiecewiseMaterial

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def parse_angle(value) -> float:
    """Number or arithmetic expression in ``pi``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigurationError(f"cannot read an angle from {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ConfigurationError(f"unsupported angle expression {value!r}")

    try:
        return ev(ast.parse(value, mode="eval"))
    except SyntaxError as exc:
        raise ConfigurationError(f"unsupported angle expression {value!r}") from exc


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as TOML scalars or arrays."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        node = cfg
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return cfg


def _section(cfg: dict, name: str, required: bool = False) -> dict:
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigurationError(f"missing [{name}] table")
        return {}
    if not isinstance(sec, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    return sec


def _shape(spec):
    if isinstance(spec, str):
        return preset_shapes(spec)
    if isinstance(spec, dict) and "pieces" in spec:
        return tabulated_shape(spec["pieces"], periodic=spec.get("periodic", True), name=spec.get("name", "tabulated"))
    raise ConfigurationError(f"cannot build a boundary shape from {spec!r}")


def _tensor(v) -> AnisoTensor:
    if not isinstance(v, (list, tuple)) or len(v) != 6:
        raise ConfigurationError(f"a tensor needs six coefficients (a11, a22, a33, a12, a13, a23), got {v!r}")
    return AnisoTensor(*map(float, v))


def _vector_field(spec, what: str, tensor: AnisoTensor | None = None, shape=None):
    if spec is None:
        return None
    kind = spec.get("kind", "constant")
    if kind == "none":
        return None
    if kind == "constant":
        c = spec.get("value", [1.0, 1.0])
        if len(c) != 2:
            raise ConfigurationError(f"{what}: constant value needs two components")
        return constant_vector(float(c[0]), float(c[1]))
    if kind == "radial":
        return radial_unit_field
    if kind == "crack_exact":
        if tensor is None or shape is None:
            raise ConfigurationError(f"{what}: crack_exact needs a single material")
        return exact_crack_solution(tensor).boundary_data(shape)
    raise ConfigurationError(f"{what}: unknown kind {kind!r}")


@dataclass
class ProblemBundle:
    """A forward problem plus the exact field when one is known."""

    problem: ForwardProblem
    exact: Any = None


def build_problem(cfg: dict) -> ProblemBundle:
    """Forward problem described by ``[problem]`` and ``[mesh]``."""
    p = _section(cfg, "problem", required=True)
    mesh = _section(cfg, "mesh")
    shape = _shape(p.get("shape", "circle"))
    interfaces = tuple(parse_angle(a) for a in p.get("interfaces", [shape.phi_min]))
    domain = DomainSpec(shape, interfaces)
    tensors = [_tensor(t) for t in p.get("tensors", [])]
    if not tensors:
        raise ConfigurationError("[problem] needs a 'tensors' list")
    material = PiecewiseMaterial.from_domain(domain, tensors)
    single = tensors[0] if len(tensors) == 1 else None
    dirichlet = _vector_field(p.get("dirichlet", {"kind": "constant"}), "dirichlet", single, shape)
    body = _vector_field(p.get("body_force"), "body_force")
    M = int(mesh.get("M", 64))
    order = int(mesh.get("order", 1))
    pb = ForwardProblem(domain, material, dirichlet, body, M, order, p.get("name", shape.name))
    exact = None
    if p.get("dirichlet", {}).get("kind") == "crack_exact":
        exact = exact_crack_solution(single).field(shape)
    return ProblemBundle(pb, exact)


def uniform_init(pb: ForwardProblem, m: int, tensor: AnisoTensor) -> PiecewiseMaterial:
    shape = pb.shape
    return PiecewiseMaterial.uniform_sectors(shape.phi_min, shape.span, [tensor] * m)


def build_inverse_config(cfg: dict, pb: ForwardProblem):
    from .inverse import InverseConfig

    inv = _section(cfg, "inverse", required=True)
    m = int(inv.get("m", 16))
    if "init" not in inv:
        raise ConfigurationError("[inverse] needs an 'init' tensor")
    init = uniform_init(pb, m, _tensor(inv["init"]))
    known = {"eta", "beta1", "beta2", "eps", "tau0", "decay", "tol", "max_iter", "spd_floor", "M_forward", "order_forward", "relative_steps"}
    extra = set(inv) - known - {"m", "init"}
    if extra:
        raise ConfigurationError(f"unknown [inverse] keys: {sorted(extra)}")
    kw = {k: inv[k] for k in known if k in inv}
    for k in ("max_iter", "M_forward", "order_forward"):
        if k in kw:
            kw[k] = int(kw[k])
    return InverseConfig(m=m, init=init, **kw)


def measurement_settings(cfg: dict) -> dict:
    meas = _section(cfg, "measurement")
    return {
        "delta": float(meas.get("delta", 0.0)),
        "seed": meas.get("seed", 0),
        "M_ref": int(meas.get("M_ref", 512)),
        "order_ref": int(meas.get("order_ref", 2)),
        "n_panels": int(meas.get("n_rho_panels", 64)),
        "n_rho_gauss": int(meas.get("n_rho_gauss", 4)),
        "rho_min": float(meas.get("rho_min", -12.0)),
        "n_ang": int(meas.get("n_ang", 512)),
        "n_ang_gauss": int(meas.get("n_ang_gauss", 3)),
    }


def output_dir(cfg: dict, override=None) -> Path:
    d = Path(override or _section(cfg, "output").get("dir", "results"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def angles_array(values) -> np.ndarray:
    return np.array([parse_angle(v) for v in values], dtype=float)
