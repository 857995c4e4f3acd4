"""Command line driver: factorize, perturb, cross-check, write tables.

Configuration is a single JSON file::

    {
      "functional": {...} or "path/to/functional.json",
      "perturbation": {...} or "path/to/perturbation.json",
      "reduction": {"reduction": "toeplitz_zero_order", "xi": [0.1, 0.1]},   (optional)
      "l_max": 10,
      "tolerances": {"pivot": 1e-10, "residual": 1e-7, "cluster": 1e-7},
      "samples": {"count": 16, "radii": [0.7, 1.4]},
      "variant": "conjugate"
    }

Relative paths resolve against the directory of the config file.  With a
``reduction`` block only ``L_gamma`` and ``L_c`` are read from the
perturbation; masses come from ``xi``.

Exit codes: 0 all residuals below tolerance, 1 some residual above it,
2 configuration error, 3 Gram matrix not quasidefinite, 4 tau vanishes,
5 quadrature did not converge.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .biorth import QuasidefiniteError
from .functionals import Functional, chi
from .gu_transform import (
    ChristoffelRoute,
    FormulaInapplicable,
    GUPerturbation,
    connection_residual_cauchy,
    connection_residual_kernels,
    connection_residual_laurent,
    direct_family,
    jet_identity_residual,
    report,
    sample_points,
    u_family,
)
from .laurent_core import DomainError, LaurentPoly, NumericError
from .toeplitz_reduction import (
    PreconditionError,
    _mass_matrix_rows,
    build_diagonal_masses,
    dual_formula_residual,
    plain_prefactor_ratios,
)

EXIT_OK, EXIT_RESIDUAL, EXIT_CONFIG, EXIT_QUASIDEFINITE, EXIT_TAU, EXIT_NUMERIC = range(6)
ROUTES = ("direct", "christoffel_12", "christoffel_21", "dual_toeplitz")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    functional: Functional
    perturbation: GUPerturbation
    l_max: int
    pivot_tol: float = 1e-10
    residual_tol: float = 1e-7
    cluster_tol: float = 1e-7
    sample_count: int = 16
    sample_radii: tuple = (0.7, 1.4)
    variant: str = "conjugate"
    reduction: dict | None = None
    diag: object = None
    out: Path = field(default_factory=lambda: Path("cmvlab_out"))

    @property
    def l_min(self) -> int:
        return 2 * max(self.perturbation.N_gamma, self.perturbation.N_c)


def _load_part(value, base: Path, name: str):
    if isinstance(value, str):
        p = (base / value) if not Path(value).is_absolute() else Path(value)
        try:
            return json.loads(p.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {name} file {p}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{name} file {p} is not valid JSON: {exc}") from exc
    if isinstance(value, dict):
        return value
    raise ConfigError(f"{name} must be an object or a path")


def load_config(path, l_max: int | None = None, tol: float | None = None,
                out: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    base = path.parent
    for key in ("functional", "perturbation"):
        if key not in data:
            raise ConfigError(f"config lacks '{key}'")
    tols = data.get("tolerances", {})
    samples = data.get("samples", {})
    try:
        u = Functional.from_json(_load_part(data["functional"], base, "functional"))
        pdata = _load_part(data["perturbation"], base, "perturbation")
        cluster = float(tols.get("cluster", 1e-7))
        reduction = data.get("reduction")
        diag = None
        if reduction is not None:
            if reduction.get("reduction") != "toeplitz_zero_order":
                raise ConfigError(f"unknown reduction {reduction.get('reduction')!r}")
            xi = reduction.get("xi")
            if not isinstance(xi, list):
                raise ConfigError("reduction needs an 'xi' list")
            xi = [complex(v[0], v[1]) if isinstance(v, list) else float(v) for v in xi]
            diag = build_diagonal_masses(LaurentPoly.from_json(pdata["L_gamma"]),
                                         LaurentPoly.from_json(pdata["L_c"]), xi, cluster)
            P = diag.P21
        else:
            P = GUPerturbation.from_json(pdata)
            if cluster != P.cluster_tol:
                P = GUPerturbation(P.kind, P.L_gamma, P.L_c, dict(P.masses), cluster)
        cfg = RunConfig(
            functional=u, perturbation=P,
            l_max=int(l_max if l_max is not None else data.get("l_max", 0)),
            pivot_tol=float(tols.get("pivot", 1e-10)),
            residual_tol=float(tol if tol is not None else tols.get("residual", 1e-7)),
            cluster_tol=cluster,
            sample_count=int(samples.get("count", 16)),
            sample_radii=tuple(float(r) for r in samples.get("radii", (0.7, 1.4))),
            variant=str(data.get("variant", "conjugate")),
            reduction=reduction, diag=diag,
            out=Path(out) if out is not None else Path(data.get("out", "cmvlab_out")),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, PreconditionError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    if cfg.l_max < cfg.l_min + 2:
        raise ConfigError(f"l_max must be at least {cfg.l_min + 2} for this perturbation")
    for name in ("pivot_tol", "residual_tol", "cluster_tol"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.variant not in ("conjugate", "plain"):
        raise ConfigError("variant must be 'conjugate' or 'plain'")
    if cfg.sample_count < 2 or not cfg.sample_radii:
        raise ConfigError("sample policy needs at least two points")
    return cfg


def _threads() -> int:
    raw = os.environ.get("CMVLAB_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# run

def _families(cfg: RunConfig):
    P = cfg.perturbation
    n = cfg.l_max + 2 * (P.N_gamma + P.N_c) + 6
    from .biorth import factorize
    u = cfg.functional
    fam = factorize(u.gram(n), cfg.pivot_tol, u)
    ut_fam = direct_family(u, P, n)
    return fam, ut_fam


def _suites(cfg: RunConfig, fam, fam_t, zs) -> dict:
    P = cfg.perturbation
    lvals = list(range(cfg.l_min, cfg.l_max + 1))
    rep = report(cfg.functional, P, lvals, zs, cfg.variant, fam, fam_t)
    suites = {"determinantal": rep["rows"], "connectors": rep["connectors"]}
    suites["connection_laurent"] = connection_residual_laurent(fam, fam_t, P, zs)
    suites["connection_cauchy"] = connection_residual_cauchy(fam, fam_t, P, zs[:8])
    pairs = [(zs[i], zs[(i + 3) % len(zs)]) for i in range(min(8, len(zs)))]
    m = max(P.N_gamma, P.N_c)
    v = fam.l - 2 * (P.N_gamma + P.N_c)
    kls = [l for l in range(2 * m + 2, 2 * m + 7) if l + 2 * m <= v]
    kres = _pmap(lambda l: connection_residual_kernels(fam, fam_t, P, pairs, l), kls)
    kern = {}
    for r in kres:
        for k, x in r.items():
            kern[k] = max(kern.get(k, 0.0), x)
    suites["connection_kernels"] = kern
    suites["jet_identity"] = jet_identity_residual(fam_t, P, min(fam_t.l, cfg.l_max + 2))
    suites["factorization"] = {"base": fam.reconstruction_residual(),
                               "perturbed": fam_t.reconstruction_residual()}
    if cfg.diag is not None:
        d = dual_formula_residual(cfg.functional, cfg.diag, lvals, zs, variant="plain", fam=fam)
        suites["toeplitz_dual"] = d
    return suites


def _collect(obj, prefix=""):
    """Flatten residual entries into (name, value); bookkeeping fields are skipped."""
    skip = {"l", "H_direct", "H_formula", "tau", "gram_gap_ref", "min_real", "max_real",
            "real", "positive", "phi_closed_form_C"}
    out = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            if k in skip:
                continue
            out += _collect(obj[k], f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        for item in obj:
            tag = f"[l={item['l']}]" if isinstance(item, dict) and "l" in item else ""
            out += _collect(item, prefix + tag)
    elif isinstance(obj, (int, float, np.floating)) and not isinstance(obj, bool):
        out.append((prefix, float(obj)))
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _g(x: float) -> str:
    return format(float(x), ".17g")


def write_family_csv(path: Path, families: dict):
    lines = ["family,side,k,H_re,H_im,exponent,coef_re,coef_im"]
    for name, fam in families.items():
        for side, S in ((1, fam.S1), (2, fam.S2)):
            for k in range(fam.l):
                h = fam.H[k]
                for j in range(k + 1):
                    c = S[k, j]
                    lines.append(",".join([name, str(side), str(k), _g(h.real), _g(h.imag),
                                           str(chi(j)), _g(c.real), _g(c.imag)]))
    path.write_text("\n".join(lines) + "\n")


def run(cfg: RunConfig) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    P = cfg.perturbation
    zs = sample_points(P, cfg.sample_count, cfg.sample_radii)
    fam, fam_t = _families(cfg)
    suites = _suites(cfg, fam, fam_t, zs)
    flat = _collect(suites)
    worst = max(flat, key=lambda t: t[1]) if flat else ("none", 0.0)
    failing = [(k, v) for k, v in flat if not v < cfg.residual_tol]
    rep = {
        "config": {"l_max": cfg.l_max, "l_min": cfg.l_min, "tolerance": cfg.residual_tol,
                   "pivot_tol": cfg.pivot_tol, "cluster_tol": cfg.cluster_tol,
                   "variant": cfg.variant, "perturbation": P.to_json(),
                   "functional": cfg.functional.to_json(), "reduction": cfg.reduction},
        "samples": [[z.real, z.imag] for z in zs],
        "suites": suites,
        "max_residual": {"name": worst[0], "value": worst[1]},
        "failing": [{"name": k, "value": v} for k, v in failing],
        "passed": not failing,
    }
    (cfg.out / "report.json").write_text(json.dumps(_clean(rep), sort_keys=True, indent=2) + "\n")
    write_family_csv(cfg.out / "family.csv", {"base": fam, "perturbed": fam_t})
    summary = [f"transform type ({P.kind[0]},{P.kind[1]}), N_gamma={P.N_gamma}, N_c={P.N_c}",
               f"l in [{cfg.l_min}, {cfg.l_max}], families of size {fam.l}",
               f"max residual {worst[1]:.3e} ({worst[0]})",
               f"tolerance {cfg.residual_tol:.1e}: {'PASS' if not failing else 'FAIL'}"]
    for k, v in failing[:20]:
        summary.append(f"  above tolerance: {k} = {v:.3e}")
    if "toeplitz_dual" in suites:
        pos = suites["toeplitz_dual"]["positivity"]
        summary.append(f"perturbed norms real: {pos['real']}, positive: {pos['positive']}")
    (cfg.out / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return EXIT_OK if not failing else EXIT_RESIDUAL


# ---------------------------------------------------------------------------
# compare

def _route_values(cfg: RunConfig, route: str, fam, zs, lvals, fam_cache: dict):
    """{l: (phi1 values, phi2 values, H)} for one route."""
    P, diag, u = cfg.perturbation, cfg.diag, cfg.functional
    n = fam.l
    if route == "direct":
        if "direct" not in fam_cache:
            fam_cache["direct"] = direct_family(u, P, n)
        ft = fam_cache["direct"]
        return {l: (np.array([ft.phi(1, l, z) for z in zs]), np.array([ft.phi(2, l, z) for z in zs]),
                    complex(ft.H[l])) for l in lvals}
    if route in ("christoffel_12", "christoffel_21"):
        kind = route[-2:]
        if diag is not None:
            Pk = diag.P12 if kind == "12" else diag.P21
        elif P.kind == kind:
            Pk = P
        else:
            raise ConfigError(f"route {route} needs a ({kind[0]},{kind[1]}) perturbation or a reduction block")
        r = ChristoffelRoute(fam, Pk)

        def one(l):
            same = np.array([r.phi(l, z) for z in zs])
            other = np.array([r.dual(l, z, cfg.variant) for z in zs])
            p1, p2 = (same, other) if Pk.side == 1 else (other, same)
            return p1, p2, complex(r.H(l))
        return dict(zip(lvals, _pmap(one, lvals)))
    if route == "dual_toeplitz":
        if diag is None:
            raise ConfigError("route dual_toeplitz needs a reduction block")
        r12 = ChristoffelRoute(fam, diag.P12, _mass_matrix_rows(fam, diag, "12"))
        r21 = ChristoffelRoute(fam, diag.P21, _mass_matrix_rows(fam, diag, "21"))

        def one(l):
            ratios = plain_prefactor_ratios(diag, l)
            p1 = np.array([r12.dual(l, z, "plain") for z in zs])
            p2 = np.array([r21.dual(l, z, "plain") for z in zs]) * ratios["phi2_kernel"]
            return p1, p2, complex(r12.H(l) * ratios["H_12"])
        return dict(zip(lvals, _pmap(one, lvals)))
    raise ConfigError(f"unknown route {route!r}; choose from {', '.join(ROUTES)}")


def _reldiff(a, b) -> float:
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    d = float(np.max(np.abs(a - b)))
    return 0.0 if d == 0 else d / max(float(np.max(np.abs(b))), 1e-300)


def compare(cfg: RunConfig, route_a: str, route_b: str) -> int:
    for r in (route_a, route_b):
        if r not in ROUTES:
            raise ConfigError(f"unknown route {r!r}; choose from {', '.join(ROUTES)}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    P = cfg.perturbation
    zs = sample_points(P, cfg.sample_count, cfg.sample_radii)
    lvals = list(range(cfg.l_min, cfg.l_max + 1))
    from .biorth import factorize
    n = cfg.l_max + 2 * (P.N_gamma + P.N_c) + 6
    fam = factorize(cfg.functional.gram(n), cfg.pivot_tol, cfg.functional)
    cache: dict = {}
    A = _route_values(cfg, route_a, fam, zs, lvals, cache)
    B = _route_values(cfg, route_b, fam, zs, lvals, cache)
    lines = ["l,quantity,rel_diff"]
    worst = 0.0
    for l in lvals:
        for q, i in (("phi1", 0), ("phi2", 1), ("H", 2)):
            d = _reldiff(A[l][i], B[l][i])
            worst = max(worst, d)
            lines.append(f"{l},{q},{_g(d)}")
    (cfg.out / "compare.csv").write_text("\n".join(lines) + "\n")
    ok = worst < cfg.residual_tol
    msg = f"{route_a} vs {route_b}: max relative difference {worst:.3e} ({'PASS' if ok else 'FAIL'})"
    (cfg.out / "summary.txt").write_text(msg + "\n")
    print(msg)
    return EXIT_OK if ok else EXIT_RESIDUAL


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmvlab", description=__doc__.split("\n")[0])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--l-max", type=int, default=None, help="override l_max")
    ap.add_argument("--tol", type=float, default=None, help="override the residual tolerance")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--compare", default=None, metavar="A,B",
                    help=f"compare two routes ({', '.join(ROUTES)})")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config, args.l_max, args.tol, args.out)
        if args.compare:
            parts = [p.strip() for p in args.compare.split(",")]
            if len(parts) != 2:
                raise ConfigError("--compare expects two routes separated by a comma")
            return compare(cfg, *parts)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuasidefiniteError as exc:
        print(f"not quasidefinite: leading minor {exc.minor} vanishes", file=sys.stderr)
        return EXIT_QUASIDEFINITE
    except FormulaInapplicable as exc:
        print(f"determinantal formulas inapplicable: {exc}", file=sys.stderr)
        return EXIT_TAU
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, PreconditionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
