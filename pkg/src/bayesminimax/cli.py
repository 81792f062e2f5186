"""Command-line surface: construct | verify | risk | transform.

All runs are batch, config-driven and reproducible: a JSON config selects
the prior family and parameters, every run writes a manifest with the fully
resolved configuration next to its outputs, and Monte Carlo outputs are
bit-identical for a fixed seed.  Output files are written atomically
(temp file + rename).

Exit codes:
    0  success (for verify: every checker HOLDS)
    2  configuration error
    3  construction failure or transform divergence
    4  a condition checker returned FAILS
    5  verify only: no failures but at least one INCONCLUSIVE verdict
    6  risk only: some point exceeded k + 3 stderr

Environment overrides: TOOL_QUAD_RELTOL (quadrature relative tolerance) and
TOOL_MAX_THREADS (recorded in the manifest; evaluation is single-process).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, conditions, estimators, marginals, priors, transforms
from .errors import ConstructionError, DomainError, EvaluationError, TransformDivergenceError
from .transforms import QuadSpec, ScalarFn

COMMANDS = ("construct", "verify", "risk", "transform")

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_CONSTRUCTION = 3
_EXIT_FAILS = 4
_EXIT_INCONCLUSIVE = 5
_EXIT_RISK_EXCEEDED = 6


@dataclass
class RunConfig:
    command: str
    prior_spec: dict
    k: int
    grid_lo: float = 1e-2
    grid_hi: float = 30.0
    grid_n: int = 200
    grid_spacing: str = "log"
    n_samples: int = 10000
    seed: int = 20240704
    theta_norms: List[float] = field(default_factory=lambda: [0.0, 1.0, 3.0, 6.0, 10.0])
    quad: QuadSpec = field(default_factory=QuadSpec)
    out_dir: str = "out"
    out_format: str = "json"
    transform_block: Dict = field(default_factory=dict)
    env_overrides: Dict = field(default_factory=dict)

    def grid(self) -> np.ndarray:
        return conditions.default_grid(self.grid_lo, self.grid_hi, self.grid_n,
                                       self.grid_spacing)

    def resolved(self) -> dict:
        return {
            "command": self.command,
            "prior_spec": self.prior_spec,
            "k": self.k,
            "grid_spec": {"lo": self.grid_lo, "hi": self.grid_hi,
                          "n_points": self.grid_n, "spacing": self.grid_spacing},
            "mc": {"n_samples": self.n_samples, "seed": self.seed,
                   "theta_norms": self.theta_norms},
            "quad": {"rel_tol": self.quad.rel_tol, "abs_tol": self.quad.abs_tol,
                     "max_depth": self.quad.max_depth, "tail_cut": self.quad.tail_cut},
            "output": {"path": self.out_dir, "format": self.out_format},
            "transform": self.transform_block,
            "env_overrides": self.env_overrides,
        }


def _atomic_write(path: str, text: str):
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_config(path: str, args) -> RunConfig:
    """Parse and validate the JSON config, applying CLI/env overrides."""
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise DomainError("config must be a JSON object")
    command = doc.get("command") or getattr(args, "command", None)
    if command not in COMMANDS:
        raise DomainError(f"command must be one of {COMMANDS}, got {command!r}")
    if args.command and doc.get("command") and args.command != doc["command"]:
        raise DomainError(f"config command {doc['command']!r} contradicts CLI "
                          f"subcommand {args.command!r}")
    prior_spec = doc.get("prior_spec")
    if not isinstance(prior_spec, dict):
        raise DomainError("prior_spec (object) is required")
    k = doc.get("k", prior_spec.get("k"))
    if not isinstance(k, int) or k < 3:
        raise DomainError(f"k must be an integer >= 3, got {k!r}")
    prior_spec.setdefault("k", k)
    if prior_spec["k"] != k:
        raise DomainError("k in prior_spec contradicts top-level k")

    grid = dict(doc.get("grid_spec") or {})
    if args.grid:
        parts = args.grid.split(",")
        if len(parts) != 4:
            raise DomainError("--grid expects lo,hi,n,log|lin")
        grid = {"lo": float(parts[0]), "hi": float(parts[1]),
                "n_points": int(parts[2]),
                "spacing": {"log": "log", "lin": "linear"}.get(parts[3], parts[3])}
    lo = float(grid.get("lo", 1e-2))
    hi = float(grid.get("hi", 30.0))
    n_points = int(grid.get("n_points", 200))
    spacing = grid.get("spacing", "log")
    if not (lo < hi):
        raise DomainError(f"grid requires lo < hi, got lo={lo}, hi={hi}")
    if n_points < 2:
        raise DomainError(f"n_points >= 2 required, got {n_points}")
    if spacing not in ("log", "linear"):
        raise DomainError(f"spacing must be log or linear, got {spacing!r}")

    mc = dict(doc.get("mc") or {})
    n_samples = int(mc.get("n_samples", 10000))
    seed = int(args.seed if args.seed is not None else mc.get("seed", 20240704))
    theta_norms = [float(x) for x in mc.get("theta_norms", [0.0, 1.0, 3.0, 6.0, 10.0])]
    if command == "risk" and n_samples < 1000:
        raise DomainError("risk runs require n_samples >= 1000")

    quad_doc = dict(doc.get("quad") or {})
    env = {}
    if os.environ.get("TOOL_QUAD_RELTOL"):
        quad_doc["rel_tol"] = float(os.environ["TOOL_QUAD_RELTOL"])
        env["TOOL_QUAD_RELTOL"] = os.environ["TOOL_QUAD_RELTOL"]
    if os.environ.get("TOOL_MAX_THREADS"):
        env["TOOL_MAX_THREADS"] = os.environ["TOOL_MAX_THREADS"]
    quad = QuadSpec(rel_tol=float(quad_doc.get("rel_tol", 1e-8)),
                    abs_tol=float(quad_doc.get("abs_tol", 1e-14)),
                    max_depth=int(quad_doc.get("max_depth", 40)),
                    tail_cut=float(quad_doc.get("tail_cut", 1e-14)))

    out = dict(doc.get("output") or {})
    out_dir = args.out or out.get("path", "out")
    out_format = out.get("format", "json")
    if out_format not in ("json", "csv"):
        raise DomainError(f"output format must be json or csv, got {out_format!r}")

    return RunConfig(command=command, prior_spec=prior_spec, k=k,
                     grid_lo=lo, grid_hi=hi, grid_n=n_points,
                     grid_spacing=spacing, n_samples=n_samples, seed=seed,
                     theta_norms=theta_norms, quad=quad, out_dir=out_dir,
                     out_format=out_format,
                     transform_block=dict(doc.get("transform") or {}),
                     env_overrides=env)


# ---------------------------------------------------------------------------
# phi token grammar
# ---------------------------------------------------------------------------

_TOKEN_KINDS = ("inv_sq", "inv", "const", "lin")


def parse_phi_tokens(tokens) -> tuple:
    """Parse [{"kind": "inv_sq"|"inv"|"const"|"lin", "c": float}, ...] into a
    ScalarFn phi(x) = b0/x^2 + b1/x + b2 + b3 x and its coefficient list."""
    if not isinstance(tokens, list) or not tokens:
        raise DomainError("phi must be a nonempty token list")
    b = [0.0, 0.0, 0.0, 0.0]
    for tok in tokens:
        if not isinstance(tok, dict) or "kind" not in tok or "c" not in tok:
            raise DomainError(f"malformed phi token {tok!r}: needs kind and c")
        kind = tok["kind"]
        if kind not in _TOKEN_KINDS:
            raise DomainError(f"unknown phi token kind {kind!r}; "
                              f"supported: {_TOKEN_KINDS}")
        b[_TOKEN_KINDS.index(kind)] += float(tok["c"])

    def phi(x):
        x = np.asarray(x, dtype=float)
        return b[0] / (x * x) + b[1] / x + b[2] + b[3] * x

    return ScalarFn(eval=phi, support=(0.0, math.inf), label="phi_tokens"), b


# ---------------------------------------------------------------------------
# family wiring
# ---------------------------------------------------------------------------

def profile_for(spec: priors.FamilySpec, quad: QuadSpec) -> marginals.MarginalProfile:
    """Marginal profile used for risk simulation and the radial checkers."""
    fam, k, p = spec.family, spec.k, spec.params
    if fam == "strawderman":
        return marginals.marginal_strawderman(p["a"], k)
    if fam == "example1":
        return marginals.monomial_mixture_profile(p["n"], k)
    if fam == "example2":
        md = priors.gen_beta_mixing(p["alpha"], p["beta"], p["gamma"],
                                    p["sigma"], k, quad)
        return marginals.marginal_mixture(md, quad)
    if fam == "whittaker":
        # formal transform identity: l proportional to u^{gamma + (1-k)/2}
        return marginals.power_law_profile(k, p["gamma"] + (1.0 - k) / 2.0)
    if fam == "bessel_F":
        return _squared_combination_profile(k, p["b"], p["A1"], p["A2"])
    if fam == "flat":
        return marginals.flat_profile(k)
    raise DomainError(f"family {fam!r} has no direct marginal profile; "
                      "use the construct command")


def _squared_combination_profile(k: int, b: float, A1: float, A2: float
                                 ) -> marginals.MarginalProfile:
    """Formal marginal l(u) = const * (A1 u^{rho1} + A2 u^{rho2})^2.

    This is h(u) F(u) for the inverse-square family; the Gaussian factors
    cancel exactly, leaving the squared monomial combination.
    """
    disc = (k - 2.0) ** 2 - 4.0 * b
    sq = math.sqrt(disc)
    r1 = 0.5 * (2.0 - k - sq)
    r2 = 0.5 * (2.0 - k + sq)

    def S(u):
        u = np.asarray(u, dtype=float)
        return A1 * u ** r1 + A2 * u ** r2

    def S1(u):
        u = np.asarray(u, dtype=float)
        return A1 * r1 * u ** (r1 - 1.0) + A2 * r2 * u ** (r2 - 1.0)

    def S2(u):
        u = np.asarray(u, dtype=float)
        return (A1 * r1 * (r1 - 1.0) * u ** (r1 - 2.0)
                + A2 * r2 * (r2 - 1.0) * u ** (r2 - 2.0))

    fn = ScalarFn(
        eval=lambda u: S(u) ** 2,
        deriv1=lambda u: 2.0 * S(u) * S1(u),
        deriv2=lambda u: 2.0 * (S1(u) ** 2 + S(u) * S2(u)),
        support=(0.0, math.inf), label="squared_monomials", nonneg=True)
    return marginals.MarginalProfile(k=k, ell=fn, route="formal_power_law",
                                     extra={"formal": True})


def _g_profile(G: ScalarFn, k: int, route: str) -> marginals.MarginalProfile:
    """Profile from the mixture identification l(u) = G(u^2/2) (up to scale)."""

    def ev(u):
        return np.asarray(G.eval(0.5 * np.square(np.asarray(u, dtype=float))), dtype=float)

    def d1(u):
        u = np.asarray(u, dtype=float)
        return u * np.asarray(G.deriv1(0.5 * np.square(u)), dtype=float)

    def d2(u):
        u = np.asarray(u, dtype=float)
        s = 0.5 * np.square(u)
        return (np.square(u) * np.asarray(G.deriv2(s), dtype=float)
                + np.asarray(G.deriv1(s), dtype=float))

    fn = ScalarFn(eval=ev, deriv1=d1, deriv2=d2, support=(0.0, math.inf),
                  label="G(u^2/2)", nonneg=True)
    return marginals.MarginalProfile(k=k, ell=fn, route=route)


def checkers_for(spec: priors.FamilySpec, cfg: RunConfig) -> List[conditions.ConditionReport]:
    """All applicable condition checkers for a family."""
    fam, k, p = spec.family, spec.k, spec.params
    u_grid = cfg.grid()
    s_grid = 0.5 * u_grid ** 2
    quad = cfg.quad
    reports = []
    if fam == "example1":
        reports.append(conditions.check_monomial_mixture(p["n"], k, s_grid))
        reports.append(conditions.check_laplace_mixture_bound(
            priors.monomial_laplace_G(p["n"]), k, s_grid))
        reports.append(conditions.check_sqrt_superharmonic(
            marginals.monomial_mixture_profile(p["n"], k), u_grid))
    elif fam == "example2":
        reports.append(conditions.check_gen_beta_mixture(
            p["alpha"], p["beta"], p["gamma"], p["sigma"], k, s_grid, quad))
        md = priors.gen_beta_mixing(p["alpha"], p["beta"], p["gamma"],
                                    p["sigma"], k, quad)
        reports.append(conditions.check_sqrt_superharmonic(
            marginals.marginal_mixture(md, quad), u_grid))
    elif fam == "strawderman":
        reports.append(conditions.check_strawderman_sqrt(p["a"], k, u_grid))
        reports.append(conditions.check_sqrt_superharmonic(
            marginals.marginal_strawderman(p["a"], k), u_grid))
    elif fam == "whittaker":
        reports.append(conditions.check_spherical_minimax_bound(
            priors.power_exp_profile(p["gamma"], k), k, u_grid))
        rep = conditions.check_sqrt_superharmonic(profile_for(spec, quad), u_grid)
        rep.extra["formal_marginal"] = True
        reports.append(rep)
    elif fam == "bessel_F":
        reports.append(conditions.check_spherical_minimax_bound(
            priors.inverse_square_profile(p["b"], k, p["A1"], p["A2"]), k, u_grid))
        rep = conditions.check_sqrt_superharmonic(profile_for(spec, quad), u_grid)
        rep.extra["formal_marginal"] = True
        reports.append(rep)
    elif fam == "flat":
        reports.append(conditions.check_sqrt_superharmonic(
            marginals.flat_profile(k), u_grid))
    elif fam == "custom_phi_spherical":
        phi, b = parse_phi_tokens(p["phi"])
        c1, c2 = p.get("c1", 1.0), p.get("c2", 0.0)
        sol = priors.construct_spherical(phi, k, c1=c1, c2=c2, u_grid=u_grid,
                                         phi_series=b)
        reports.append(conditions.check_spherical_minimax_bound(sol.F, k, u_grid))

        def S(u):
            return c1 * np.asarray(sol.z1.eval(u)) + c2 * np.asarray(sol.z2.eval(u))

        def S1(u):
            return c1 * np.asarray(sol.z1.deriv1(u)) + c2 * np.asarray(sol.z2.deriv1(u))

        def S2(u):
            return c1 * np.asarray(sol.z1.deriv2(u)) + c2 * np.asarray(sol.z2.deriv2(u))

        # the Gaussian factors of h and F cancel: the formal marginal is S^2
        ell = ScalarFn(eval=lambda u: S(u) ** 2,
                       deriv1=lambda u: 2.0 * S(u) * S1(u),
                       deriv2=lambda u: 2.0 * (S1(u) ** 2 + S(u) * S2(u)),
                       support=(0.0, math.inf), nonneg=True, label="S^2")
        rep = conditions.check_sqrt_superharmonic(
            marginals.MarginalProfile(k=k, ell=ell, route="formal_power_law"), u_grid)
        rep.extra["formal_marginal"] = True
        reports.append(rep)
    elif fam == "custom_phi_mixture":
        phi, _ = parse_phi_tokens(p["phi"])
        G = priors.construct_G_mixture(phi, a=p.get("a", 1.0),
                                       b=_parse_anchor(p.get("b", "inf")),
                                       quad=quad, k=k)
        reports.append(conditions.check_laplace_mixture_bound(G, k, s_grid))
        reports.append(conditions.check_sqrt_superharmonic(
            _g_profile(G, k, "constructed_mixture"), u_grid))
    return reports


def _parse_anchor(v):
    if isinstance(v, str) and v.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(v)


def _aggregate_exit(reports: Sequence[conditions.ConditionReport]) -> int:
    verdicts = [r.verdict for r in reports]
    if any(v == conditions.FAILS for v in verdicts):
        return _EXIT_FAILS
    if all(v == conditions.HOLDS for v in verdicts) and verdicts:
        return _EXIT_OK
    return _EXIT_INCONCLUSIVE


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _write_manifest(cfg: RunConfig, exit_code: int, outputs: List[str]):
    manifest = {
        "tool": "bayesminimax",
        "version": __version__,
        "resolved_config": cfg.resolved(),
        "outputs": outputs,
        "exit_code": exit_code,
    }
    _atomic_write(os.path.join(cfg.out_dir, "manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _table_csv(header: Sequence[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v)
            else:
                cells.append(repr(float(np.asarray(v).reshape(-1)[0])))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_verify(cfg: RunConfig) -> int:
    spec = priors.prior_from_spec(cfg.prior_spec)
    reports = checkers_for(spec, cfg)
    code = _aggregate_exit(reports)
    doc = {
        "family": spec.family,
        "k": spec.k,
        "params": spec.params,
        "reports": [r.to_dict() for r in reports],
        "aggregate": {0: "HOLDS", 4: "FAILS", 5: "INCONCLUSIVE"}[code],
    }
    path = os.path.join(cfg.out_dir, "verify_report.json")
    _atomic_write(path, json.dumps(doc, indent=2) + "\n")
    _write_manifest(cfg, code, [path])
    print(f"verify[{spec.family}]: {doc['aggregate']}"
          + "".join(f"\n  {r.condition_id}: {r.verdict}" for r in reports))
    return code


def cmd_construct(cfg: RunConfig) -> int:
    spec = priors.prior_from_spec(cfg.prior_spec)
    if spec.family not in ("custom_phi_spherical", "custom_phi_mixture"):
        raise DomainError("construct requires family custom_phi_spherical or "
                          "custom_phi_mixture")
    u_grid = cfg.grid()
    outputs = []
    warnings: List[str] = []
    if spec.family == "custom_phi_spherical":
        phi, b = parse_phi_tokens(spec.params["phi"])
        c1 = spec.params.get("c1", 1.0)
        c2 = spec.params.get("c2", 0.0)
        sol = priors.construct_spherical(phi, spec.k, c1=c1, c2=c2,
                                         u_grid=u_grid, phi_series=b)
        report = conditions.check_spherical_minimax_bound(sol.F, spec.k, u_grid)
        table = _table_csv(
            ["u", "F", "dF", "d2F", "z1", "z2"],
            [(u, sol.F.eval(u), sol.F.deriv1(u), sol.F.deriv2(u),
              float(np.atleast_1d(sol.z1.eval(u))[0]),
              float(np.atleast_1d(sol.z2.eval(u))[0])) for u in u_grid])
        fpath = os.path.join(cfg.out_dir, "profile_table.csv")
        _atomic_write(fpath, table)
        outputs.append(fpath)
        recovery = {"available": False,
                    "reason": "closed-form recovery only for the pure "
                              "inverse-square forcing with a single root"}
        pure_inv_sq = (b[1] == b[2] == b[3] == 0.0 and b[0] < 0.0)
        single = (c2 == 0.0) or (c1 == 0.0)
        if pure_inv_sq and single:
            rho = sol.rho1 if c2 == 0.0 else sol.rho2
            gamma = 2.0 * rho + (spec.k - 1.0) / 2.0
            if gamma + (spec.k + 1.0) / 2.0 > 0:
                lam = priors.whittaker_radial(gamma, spec.k)
                ltab = _table_csv(["r", "lambda_unnormalized"],
                                  [(r, float(np.atleast_1d(lam.lam.eval(r))[0]))
                                   for r in u_grid])
                lpath = os.path.join(cfg.out_dir, "radial_density_table.csv")
                _atomic_write(lpath, ltab)
                outputs.append(lpath)
                recovery = {"available": True, "gamma": gamma,
                            "proper": lam.proper,
                            "note": "defined up to positive scale"}
            else:
                recovery = {"available": False,
                            "reason": f"gamma={gamma:.6g} violates "
                                      "gamma + (k+1)/2 > 0"}
        properness = {"proper": recovery.get("proper", "unknown")}
        extra = {"rho1": sol.rho1, "rho2": sol.rho2, "b_coeffs": sol.b_coeffs}
    else:
        phi, b = parse_phi_tokens(spec.params["phi"])
        a = spec.params.get("a", 1.0)
        banchor = _parse_anchor(spec.params.get("b", "inf"))
        G = priors.construct_G_mixture(phi, a=a, b=banchor, quad=cfg.quad, k=spec.k)
        s_grid = 0.5 * u_grid ** 2
        report = conditions.check_laplace_mixture_bound(G, spec.k, s_grid)
        table = _table_csv(["s", "G", "dG", "d2G"],
                           [(s, float(np.atleast_1d(G.eval(s))[0]),
                             float(np.atleast_1d(G.deriv1(s))[0]),
                             float(np.atleast_1d(G.deriv2(s))[0])) for s in s_grid])
        fpath = os.path.join(cfg.out_dir, "transform_table.csv")
        _atomic_write(fpath, table)
        outputs.append(fpath)
        boundary = (b[0] == b[2] == b[3] == 0.0 and abs(b[1] - spec.k) < 1e-12)
        if boundary:
            warnings.append(
                "boundary forcing phi(s) = k/s: margins sit at zero and the "
                "matching kernel is supported on all of (0, inf), so this "
                "cannot arise from a proper mixture; the associated mixing "
                "density (v+1)^{1-k/2} is recovered by the classical "
                "identification and is itself proper and minimax")
            md = priors.monomial_mixing(spec.k - 3, spec.k)
            htab = _table_csv(["v", "h"],
                              [(v, float(np.atleast_1d(md.h.eval(v))[0]))
                               for v in u_grid])
            hpath = os.path.join(cfg.out_dir, "mixing_density_table.csv")
            _atomic_write(hpath, htab)
            outputs.append(hpath)
            recovery = {"available": True, "form": "(v+1)^{1-k/2}",
                        "caveat": "formal inverse: kernel not (0,1)-supported"}
        else:
            recovery = {"available": False,
                        "reason": "numerical inverse Laplace transforms are "
                                  "out of scope; only the boundary family has "
                                  "a closed-form kernel"}
        properness = {"proper": "see recovery"}
        extra = {"b_coeffs": b, "a": a, "anchor_b": repr(banchor)}

    code = _EXIT_OK if report.verdict != conditions.FAILS else _EXIT_FAILS
    doc = {
        "family": spec.family,
        "k": spec.k,
        "condition_report": report.to_dict(),
        "recovery": recovery,
        "properness": properness,
        "warnings": warnings,
        "extra": extra,
    }
    rpath = os.path.join(cfg.out_dir, "construct_report.json")
    _atomic_write(rpath, json.dumps(doc, indent=2) + "\n")
    outputs.append(rpath)
    _write_manifest(cfg, code, outputs)
    print(f"construct[{spec.family}]: {report.verdict}"
          + (f" ({len(warnings)} warning(s))" if warnings else ""))
    return code


def cmd_risk(cfg: RunConfig) -> int:
    spec = priors.prior_from_spec(cfg.prior_spec)
    profile = profile_for(spec, cfg.quad)
    reports = estimators.risk_curve(profile, cfg.theta_norms, cfg.n_samples,
                                    cfg.seed, k=cfg.k)
    exceeded = [r for r in reports
                if r.mc_risk > r.baseline_k + 3.0 * r.mc_stderr]
    code = _EXIT_RISK_EXCEEDED if exceeded else _EXIT_OK
    csv_text = estimators.risk_reports_to_csv(reports)
    cpath = os.path.join(cfg.out_dir, "risk_curve.csv")
    _atomic_write(cpath, csv_text)
    long_rows = []
    for r in reports:
        for q in ("mc_risk", "mc_stderr", "sure_mean", "sure_stderr"):
            long_rows.append((r.theta_norm, q, getattr(r, q)))
    lpath = os.path.join(cfg.out_dir, "risk_long.csv")
    _atomic_write(lpath, _table_csv(["theta_norm", "quantity", "value"], long_rows))
    jpath = os.path.join(cfg.out_dir, "risk_report.json")
    _atomic_write(jpath, estimators.risk_reports_to_json(reports, indent=2) + "\n")
    _write_manifest(cfg, code, [cpath, lpath, jpath])
    for r in reports:
        flag = " EXCEEDS" if r in exceeded else ""
        print(f"risk |theta|={r.theta_norm:g}: {r.mc_risk:.4f} +- "
              f"{r.mc_stderr:.4f} (SURE {r.sure_mean:.4f}){flag}")
    return code


def _transform_input(cfg: RunConfig):
    """Resolve the function f and order nu for the transform command."""
    ps = cfg.prior_spec
    fam = ps.get("family")
    params = dict(ps.get("params") or {})
    k = cfg.k
    nu = float(cfg.transform_block.get("nu", (k - 2.0) / 2.0))
    if fam == "gaussian_bessel":
        alpha = float(params.get("alpha", 1.0))

        def log_f(x):
            x = np.asarray(x, dtype=float)
            with np.errstate(divide="ignore"):
                return (nu + 0.5) * np.log(x) - alpha * x * x

        f = ScalarFn(eval=lambda x: np.exp(log_f(x)), support=(0.0, math.inf),
                     label="gaussian_bessel_kernel", log_eval=log_f, nonneg=True)
        closed = {"alpha": alpha}
        return f, nu, closed
    if fam == "zero":
        f = ScalarFn(eval=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                     support=(0.0, math.inf), label="zero", nonneg=True)
        return f, nu, None
    spec = priors.prior_from_spec(ps)
    if spec.family == "strawderman":
        prior = priors.strawderman_radial(spec.params["a"], spec.k, cfg.quad)
    elif spec.family == "whittaker":
        prior = priors.whittaker_radial(spec.params["gamma"], spec.k)
    else:
        raise DomainError(f"transform input not defined for family {spec.family!r}")
    lam = prior.lam
    kk = spec.k

    def log_f(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(all="ignore"):
            out = 0.5 * (1.0 - kk) * np.log(r) - 0.5 * r * r + lam.log_abs(r)
        return np.where(np.isnan(out), -np.inf, out)

    f = ScalarFn(eval=lambda r: np.exp(log_f(r)), support=(0.0, math.inf),
                 label=f"transform_weight[{spec.family}]", log_eval=log_f,
                 nonneg=True)
    return f, nu, None


def cmd_transform(cfg: RunConfig) -> int:
    f, nu, _ = _transform_input(cfg)
    kind = cfg.transform_block.get("kind", "i")
    grid = cfg.grid()
    values = []
    for y in grid:
        if kind == "i":
            values.append(transforms.i_transform(f, nu, float(y), cfg.quad))
        elif kind == "k":
            values.append(transforms.k_transform(f, nu, float(y), cfg.quad))
        else:
            raise DomainError(f"transform kind must be i or k, got {kind!r}")
    tpath = os.path.join(cfg.out_dir, "transform_table.csv")
    _atomic_write(tpath, _table_csv(["y", "value"], zip(grid, values)))
    outputs = [tpath]
    code = _EXIT_OK

    target = cfg.transform_block.get("consistency_target")
    if target:
        if target == "power_exp":
            gamma = float(cfg.transform_block.get(
                "gamma", cfg.prior_spec.get("params", {}).get("gamma", 1.0)))
            F_target = priors.power_exp_profile(gamma, cfg.k)
        elif target == "ell_over_h":
            spec = priors.prior_from_spec(cfg.prior_spec)
            prof = profile_for(spec, cfg.quad)
            logA = (math.lgamma(0.5 * cfg.k) - math.log(2.0)
                    - 0.5 * cfg.k * math.log(math.pi))

            def F_t(u):
                u = np.asarray(u, dtype=float)
                h = np.exp(logA + 0.5 * (1.0 - cfg.k) * np.log(u) - 0.5 * u * u)
                return np.asarray(prof.ell.eval(u), dtype=float) / h

            F_target = ScalarFn(eval=F_t, support=(0.0, math.inf),
                                label="ell_over_h", nonneg=True)
        else:
            raise DomainError(f"unknown consistency target {target!r}")
        prop_tol = float(cfg.transform_block.get("prop_tol", 1e-4))
        lam_like = ScalarFn(
            eval=lambda r: np.asarray(f.eval(r), dtype=float)
            * np.exp(0.5 * (cfg.k - 1.0) * np.log(np.asarray(r, dtype=float))
                     + 0.5 * np.asarray(r, dtype=float) ** 2),
            support=f.support,
            log_eval=lambda r: (f.log_abs(r)
                                + 0.5 * (cfg.k - 1.0) * np.log(np.asarray(r, dtype=float))
                                + 0.5 * np.asarray(r, dtype=float) ** 2),
            nonneg=True, label="lambda_candidate")
        report = transforms.i_transform_consistency(
            lam_like, F_target, nu, list(grid), cfg.quad, prop_tol=prop_tol)
        rpath = os.path.join(cfg.out_dir, "consistency_report.json")
        _atomic_write(rpath, report.to_json(indent=2) + "\n")
        outputs.append(rpath)
        if "divergence" in report.extra:
            code = _EXIT_CONSTRUCTION
        elif report.verdict == conditions.FAILS:
            code = _EXIT_FAILS
        print(f"transform consistency: {report.verdict} "
              f"{report.extra.get('divergence', '')}".rstrip())
    _write_manifest(cfg, code, outputs)
    return code


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bayesminimax",
        description="Construct and verify Bayes minimax shrinkage priors for "
                    "a multivariate normal mean.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the Monte Carlo seed")
    parser.add_argument("--grid", default=None, help="lo,hi,n,log|lin")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args)
    except (DomainError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG

    handler = {"construct": cmd_construct, "verify": cmd_verify,
               "risk": cmd_risk, "transform": cmd_transform}[cfg.command]
    try:
        return handler(cfg)
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (ConstructionError, TransformDivergenceError) as exc:
        print(f"construction error: {exc}", file=sys.stderr)
        _write_manifest(cfg, _EXIT_CONSTRUCTION, [])
        return _EXIT_CONSTRUCTION
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return _EXIT_CONSTRUCTION


if __name__ == "__main__":
    sys.exit(main())
