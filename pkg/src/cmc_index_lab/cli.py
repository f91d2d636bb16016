"""Command-line frontend: ``cmcix mesh|spectrum|verify|threshold``.

Exit codes: 0 pass, 2 fail, 3 only not-applicable verdicts, 4 input error.
Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import os

# BLAS pools are sized at import time, so the cap must be set first
if os.environ.get("CMCIX_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["CMCIX_THREADS"])

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version

import numpy as np
import scipy

from . import ambient, io, verify
from .errors import LabError, ParseError
from .jacobi import assemble, twisted_spectrum
from .mesh import genus_and_boundary
from .surfaces import generate_surface

EXIT_PASS, EXIT_FAIL, EXIT_NA, EXIT_INPUT = 0, 2, 3, 4

SPACE_KEYS = {"r": float, "r1": float, "r2": float, "alpha": float, "beta": float, "kappa": float, "tau": float}
FREQ_KEYS = ("k1", "l1", "k2", "l2")
FAMILY_KEYS = {"radius": float, "height": float, "H": float, "inner": float, "outer": float, "jitter": float}


@dataclass
class RunConfig:
    """Everything needed to reproduce a run."""

    command: str
    space: dict = field(default_factory=dict)
    surface: dict = field(default_factory=dict)
    mesh_file: str | None = None
    resolution: int | None = None
    k: int | None = None
    checks: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    output: str | None = None
    seed: int = 0

    def to_dict(self):
        return asdict(self)


def _versions():
    try:
        pkg = version("cmc-index-lab")
    except PackageNotFoundError:  # pragma: no cover - running from a checkout
        pkg = "unknown"
    return {"cmc_index_lab": pkg, "numpy": np.__version__, "scipy": scipy.__version__}


def _dump(obj) -> str:
    return json.dumps(verify.to_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _emit(payload: dict, path: str | None, started: float | None):
    if started is not None:
        payload["timestamp"] = {"started_unix": started, "elapsed_s": time.time() - started}
    text = _dump(payload)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _error(exc: BaseException, code: str | None = None) -> int:
    err = {"error": code or getattr(exc, "code", "error"), "message": str(exc), "type": type(exc).__name__}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return EXIT_INPUT


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _key_values(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ParseError(f"expected key=value, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = _parse_value(val)
    return out


def _space_params(args) -> dict:
    p = {k: getattr(args, k) for k in SPACE_KEYS if getattr(args, k, None) is not None}
    p.update({k: getattr(args, k) for k in FREQ_KEYS if getattr(args, k, None) is not None})
    if getattr(args, "ball_radius", None) is not None:
        p["radius"] = args.ball_radius
    p.update(_key_values(getattr(args, "space_param", None)))
    return p


def _add_space_args(p, with_freq=True):
    p.add_argument("--space", required=True, help="catalog space: " + ", ".join(ambient.SPACE_NAMES))
    for key, typ in SPACE_KEYS.items():
        p.add_argument(f"--{key}", type=typ, default=None)
    if with_freq:
        for key in FREQ_KEYS:
            p.add_argument(f"--{key}", type=int, default=None, help="torus frequency")
    p.add_argument("--ball-radius", type=float, default=None, help="radius of the ambient ball")
    p.add_argument("--space-param", action="append", metavar="KEY=VALUE")


def _provenance(config: RunConfig, mesh=None):
    prov = {"run_config": config.to_dict(), "versions": _versions()}
    if mesh is not None:
        prov["mesh"] = mesh.header()
    return prov


def _geometry_section(mesh, geom):
    g, r = genus_and_boundary(mesh)
    return {
        "genus": g,
        "r": r,
        "H_stats": geom.H_stats(),
        "vertices": mesh.n_vertices,
        "faces": mesh.n_faces,
        "area": mesh.area,
        "decomposition_residual": geom.decomposition_residual,
        "normal_convention": geom.normal_convention,
    }


# ---------------------------------------------------------------------------
# commands


def cmd_mesh(args) -> int:
    space_params = _space_params(args)
    fam = {k: getattr(args, k) for k in FAMILY_KEYS if getattr(args, k, None) is not None}
    fam.update(_key_values(args.param))
    config = RunConfig(
        "mesh",
        space={"name": args.space, **space_params},
        surface={"family": args.family, **fam},
        resolution=args.res,
        output=args.output,
        seed=args.seed,
    )
    space = ambient.catalog_space(args.space, **space_params)
    mesh = generate_surface(space, args.family, fam, resolution=args.res, seed=args.seed)
    if args.potential_shift:
        mesh.extra["potential_shift"] = args.potential_shift
    if args.output:
        io.save(mesh, args.output)
    else:
        sys.stdout.write(io.dumps(mesh))
    g, r = genus_and_boundary(mesh)
    summary = {"genus": g, "r": r, "vertices": mesh.n_vertices, "faces": mesh.n_faces, "run_config": config.to_dict()}
    if args.output:
        sys.stderr.write(json.dumps(summary, sort_keys=True) + "\n")
    return EXIT_PASS


def cmd_spectrum(args) -> int:
    mesh = io.load(args.mesh)
    config = RunConfig("spectrum", mesh_file=os.path.basename(args.mesh), k=args.k, output=args.output, seed=args.seed)
    twisted = twisted_spectrum(assemble(mesh), k=args.k, seed=args.seed)
    payload = {"provenance": _provenance(config, mesh), "spectrum": twisted.to_dict()}
    _emit(payload, args.output, time.time() if args.timestamp else None)
    return EXIT_PASS


def cmd_verify(args) -> int:
    mesh = io.load(args.mesh)
    checks = [c.strip() for c in args.checks.split(",") if c.strip()] if args.checks else list(verify.CHECKS)
    etas = args.eta if args.eta else [0.0]
    config = RunConfig(
        "verify",
        mesh_file=os.path.basename(args.mesh),
        k=args.k,
        checks=checks,
        etas=etas,
        tolerances={
            "admissibility": verify.ADMISSIBILITY_TOL,
            "pointwise": verify.POINTWISE_TOL,
            "coordinate_identity": verify.COORDINATE_TOL,
            "subspace": verify.SUBSPACE_TOL,
        },
        output=args.output,
        seed=args.seed,
    )
    started = time.time() if args.timestamp else None
    suite = verify.run_suite(mesh, checks=checks, etas=etas, k=args.k, seed=args.seed)
    report = suite.report
    twisted = suite.spectrum
    spectrum = None
    if twisted is not None:
        spectrum = {**twisted.to_dict(), "eps": twisted.epsilon}
    H = float(np.mean(suite.geometry.H))
    thresholds = verify.threshold_report(mesh.space, H).to_dict()
    payload = {
        "provenance": _provenance(config, mesh),
        "geometry": _geometry_section(mesh, suite.geometry),
        "spectrum": spectrum,
        "checks": [it.to_dict() for it in report.items],
        "thresholds": thresholds,
        "verdict": report.verdict,
    }
    _emit(payload, args.output, started)
    if args.table:
        sys.stderr.write(report.table() + "\n")
    return {verify.PASS: EXIT_PASS, verify.FAIL: EXIT_FAIL}.get(report.verdict, EXIT_NA)


def cmd_threshold(args) -> int:
    config = RunConfig("threshold", space={"name": args.space})
    if args.space in ("pinched", "scalar-pinched", "convex-hypersurface"):
        pinch = {"C": args.C}
        if args.space == "convex-hypersurface":
            pinch["k1"] = args.min_curvature
        else:
            pinch["mean_vec_norm_sq"] = args.mean_vec_norm_sq
        config.space.update(pinch)
        item = verify.threshold_report(args.space, args.H, **pinch)
    else:
        params = _space_params(args)
        config.space.update(params)
        item = verify.threshold_report(ambient.catalog_space(args.space, **params), args.H)
    payload = {"provenance": _provenance(config), "thresholds": item.to_dict()}
    _emit(payload, args.output, time.time() if args.timestamp else None)
    return EXIT_PASS if item.verdict == verify.PASS else EXIT_NA


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="cmcix", description="Spectral geometry checks for CMC surfaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate a surface and write an IMESH file")
    _add_space_args(p)
    p.add_argument("--family", required=True)
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    for key, typ in FAMILY_KEYS.items():
        p.add_argument(f"--{key}", type=typ, default=None)
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="extra family parameter (JSON value)")
    p.add_argument("--potential-shift", type=float, default=None, help="perturb the Jacobi potential (negative tests)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("spectrum", help="twisted Jacobi spectrum of an IMESH file")
    p.add_argument("mesh")
    p.add_argument("-k", "--k", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timestamp", action="store_true", help="add a timestamp field (breaks byte determinism)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("verify", help="run the verification suite on an IMESH file")
    p.add_argument("mesh")
    p.add_argument("--checks", help="comma list from: " + ",".join(verify.CHECKS))
    p.add_argument("--eta", type=float, action="append", help="concentration level (repeatable)")
    p.add_argument("-k", "--k", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--table", action="store_true", help="also print a table to stderr")
    p.add_argument("--timestamp", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("threshold", help="H^2 threshold of a catalog or pinched space")
    p.add_argument("--space", required=True, help="catalog space, 'pinched' or 'convex-hypersurface'")
    for key, typ in SPACE_KEYS.items():
        p.add_argument(f"--{key}", type=typ, default=None)
    for key in FREQ_KEYS:
        p.add_argument(f"--{key}", type=int, default=None)
    p.add_argument("--ball-radius", type=float, default=None)
    p.add_argument("--space-param", action="append", metavar="KEY=VALUE")
    p.add_argument("--H", type=float, default=None)
    p.add_argument("--C", type=float, default=None, help="pinching constant")
    p.add_argument("--mean-vec-norm-sq", type=float, default=1.0, help="sup |H_M|^2 for the scalar-pinched case")
    p.add_argument("--min-curvature", type=float, default=1.0, help="k1 for the convex-hypersurface case")
    p.add_argument("--timestamp", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_threshold)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_PASS
        return _error(ValueError("invalid command line"), "usage")
    try:
        return args.func(args)
    except LabError as exc:
        return _error(exc)
    except OSError as exc:
        return _error(exc, "io-error")
    except (ValueError, KeyError) as exc:
        return _error(exc, "invalid-input")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
