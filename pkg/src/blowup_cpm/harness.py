"""Experiment configuration and the study drivers behind the command line."""

from __future__ import annotations

import dataclasses
import math
import os
import typing
from dataclasses import dataclass, field

import numpy as np

from . import cpm_solver as cpm
from .closest_point import cp_nearest_param, cp_two_stage, in_band, jacobian_check, write_cp_dump
from .errors import ConfigError, CpmError, InfeasibleRunError
from .spectral import (cusp_initial_theta, epsilon_study, loglog_slope, solve_reference)
from .varieties import catalogue, tangent_projector


@dataclass
class ExperimentConfig:
    variety: str = "cusp"
    eps_list: tuple = (0.5, 0.05)
    h_list: tuple = (0.1, 0.05, 0.025, 0.0125)
    scheme: str = "implicit"
    mu: float = 1.0
    t_final: float = 0.1
    t_final_list: tuple = (0.1, 0.01, 0.001, 0.0001)
    n_theta: int = 2048
    output: str = "results"
    seed: int = 0
    exclude_first: int = 6
    eps_study_list: tuple = tuple(2.0 ** -j for j in range(1, 15))
    explicit_step_guard: int = cpm.EXPLICIT_STEP_GUARD
    linear_solver: str = "direct"
    radius_factor: float = 0.0          # 0 selects half the cell diagonal
    n_samples: int = 1000
    log_every: int = 1
    lattice_theta: int = 64
    lattice_alpha: int = 32

    def validate(self):
        for name in ("eps_list", "h_list", "t_final_list", "eps_study_list"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} must be non-empty")
        if self.scheme not in ("explicit", "implicit"):
            raise ConfigError(f"scheme must be explicit or implicit, got {self.scheme!r}")
        if self.linear_solver not in ("direct", "iterative"):
            raise ConfigError("linear_solver must be direct or iterative")
        if any(not e > 0 for e in self.eps_list):
            raise ConfigError("eps values must be positive")
        if self.t_final < 0 or any(t <= 0 for t in self.t_final_list):
            raise ConfigError("final times must be positive")
        for h in self.h_list:
            try:
                cpm.GridSpec.cube(cpm.CUSP_BOX, h)
            except CpmError as exc:
                raise ConfigError(f"h = {h} not representable on the box: {exc}") from exc
        return self


def _convert(value, tp):
    origin = typing.get_origin(tp) or tp
    if tp in (tuple, "tuple") or origin is tuple:
        return tuple(float(v) for v in value.split(",") if v.strip())
    if tp in (int, "int"):
        return int(float(value))
    if tp in (float, "float"):
        return float(value)
    return value.strip()


def apply_settings(cfg, pairs):
    fields = {f.name: f for f in dataclasses.fields(cfg)}
    for key, value in pairs:
        key = key.strip()
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(cfg, key, _convert(value.strip(), fields[key].type))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return cfg


def parse_config_text(text):
    pairs = []
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value'")
        k, v = line.split("=", 1)
        pairs.append((k, v))
    return pairs


def load_config(path=None, overrides=()):
    cfg = ExperimentConfig()
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                apply_settings(cfg, parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    pairs = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        pairs.append(tuple(item.split("=", 1)))
    return apply_settings(cfg, pairs).validate()


def _out(cfg, name):
    os.makedirs(cfg.output, exist_ok=True)
    return os.path.join(cfg.output, name)


def _fmt(v):
    if isinstance(v, str):
        return v
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.10g}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------------------
# convergence study


@dataclass
class ConvergenceRecord:
    scheme: str
    eps: float
    h: float
    tau: float
    t_final: float
    linf_error: float
    observed_order: float = float("nan")
    reason: str = ""


@dataclass
class ConvergenceReport:
    records: list = field(default_factory=list)

    def orders(self, eps):
        rows = [r for r in self.records if r.eps == eps]
        return [r.observed_order for r in rows[1:]]

    def error(self, eps, h):
        for r in self.records:
            if r.eps == eps and r.h == h:
                return r.linf_error
        return float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("scheme,eps,h,tau,t_final,linf_error,observed_order,reason\n")
            for r in self.records:
                fh.write(",".join(_fmt(v) for v in (r.scheme, r.eps, r.h, r.tau, r.t_final,
                                                      r.linf_error, r.observed_order,
                                                      r.reason.replace(",", ";"))) + "\n")


def converge(cfg, grids=None, log=print):
    """Closest point runs against the Fourier reference for every ``(eps, h)`` cell."""
    theta = np.linspace(-np.pi, np.pi, cfg.n_theta, endpoint=False)
    grids = {} if grids is None else grids
    report = ConvergenceReport()
    rf = cfg.radius_factor or None
    for eps in cfg.eps_list:
        ref = None
        prev = None
        for h in cfg.h_list:
            rec = ConvergenceRecord(cfg.scheme, eps, h, float("nan"), cfg.t_final, float("nan"))
            try:
                steps, tau = cpm.plan_steps(cfg.scheme, eps, h, cfg.t_final, cfg.explicit_step_guard)
                rec.tau = tau
                if ref is None:
                    ref = solve_reference(catalogue("cusp", eps), cusp_initial_theta, cfg.mu,
                                          cfg.t_final).evaluate(cfg.t_final, theta)
                if h not in grids:
                    grids[h] = cpm.cusp_band(h, radius_factor=rf, sample_theta=cfg.n_theta)
                g = grids[h]
                ops = cpm.assemble(g, eps, cfg.mu)
                res = cpm.run(ops, cpm.initial_state(g), cfg.scheme, cfg.t_final, h,
                              method=cfg.linear_solver, guard=cfg.explicit_step_guard)
                rec.linf_error = float(np.max(np.abs(cpm.sample_on_curve(g, res.state, theta) - ref)))
            except InfeasibleRunError as exc:
                rec.reason = f"infeasible: {exc}"
            except CpmError as exc:
                rec.reason = f"{exc.code}: {exc}"
            if prev is not None and abs(prev.h / h - 2.0) < 1e-9 and prev.linf_error > 0 \
                    and rec.linf_error > 0:
                rec.observed_order = math.log2(prev.linf_error / rec.linf_error)
            report.records.append(rec)
            if log:
                log(f"{rec.scheme} eps={eps:g} h={h:g} err={rec.linf_error:.4e} "
                    f"order={rec.observed_order:.3f} {rec.reason}")
            prev = rec
    return report


def cmd_converge(cfg):
    rep = converge(cfg)
    rep.write_csv(_out(cfg, "converge.csv"))
    return rep


# ---------------------------------------------------------------------------
# epsilon study


def write_eps_csv(path, result):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("eps,t_final,linf_diff\n")
        for e, d in zip(result.eps, result.linf_diff):
            fh.write(f"{e:.17g},{result.t_final:.17g},{d:.17g}\n")


def cmd_eps_study(cfg, log=print):
    if len(cfg.eps_study_list) - cfg.exclude_first < 3:
        raise ConfigError("fewer than 3 points in the fit window")
    out = {}
    for tf in cfg.t_final_list:
        r = epsilon_study(cfg.variety, cusp_initial_theta, cfg.mu, tf, list(cfg.eps_study_list),
                          cfg.exclude_first, cfg.n_theta)
        write_eps_csv(_out(cfg, f"eps_study_t{tf:g}.csv"), r)
        out[tf] = r
        if log:
            log(f"t_final={tf:g} slope={r.slope:.4f}")
    return out


# ---------------------------------------------------------------------------
# closest point audit


def cp_check(cfg):
    rng = np.random.default_rng(cfg.seed)
    entry = catalogue("cusp", 1.0)
    theta = rng.uniform(-np.pi, np.pi, cfg.n_samples)
    base = entry.gamma(theta)
    x = base + rng.uniform(-0.1, 0.1, base.shape)
    x = x[in_band(x)]
    res = cp_two_stage(x, raise_on_error=False)
    again = cp_two_stage(res.point, raise_on_error=False)
    retract = np.all(np.abs(again.point - res.point) < 1e-10, axis=1) & res.converged
    return x, res, float(np.mean(retract))


def cmd_cp_check(cfg, log=print):
    x, res, frac = cp_check(cfg)
    write_cp_dump(_out(cfg, "cp_check.csv"), x, res)
    if log:
        log(f"retraction pass {100 * frac:.1f}% over {len(x)} band samples")
    return frac


# ---------------------------------------------------------------------------
# single solve and surface demo


def cmd_solve(cfg, log=print):
    eps, h = cfg.eps_list[0], cfg.h_list[0]
    g = cpm.cusp_band(h, radius_factor=cfg.radius_factor or None, sample_theta=cfg.n_theta)
    ops = cpm.assemble(g, eps, cfg.mu)
    w0 = cpm.initial_state(g)
    res = cpm.run(ops, w0, cfg.scheme, cfg.t_final, h, log_every=cfg.log_every,
                  method=cfg.linear_solver, guard=cfg.explicit_step_guard)
    cpm.write_run_log(_out(cfg, "solve_log.csv"), res)
    cpm.write_state(_out(cfg, "solve_state.csv"), g, res.state)
    if log:
        log(f"{cfg.scheme} eps={eps:g} h={h:g} steps={res.steps} band={g.n_active}")
    return g, w0, res


def cmd_surface_demo(cfg, log=print):
    from .surface5d import run_demo, write_demo_csv
    eps = cfg.eps_list[0]
    r = run_demo(eps=eps, t_final=cfg.t_final, mu=cfg.mu,
                 lattice=(cfg.lattice_theta, cfg.lattice_alpha))
    write_demo_csv(_out(cfg, "surface_demo.csv"), r)
    if log:
        log(f"surface demo eps={eps:g} steps={r.steps} active={r.n_active} "
            f"active_fraction={100 * r.active_fraction:.3f}% seed_fraction={100 * r.band_fraction:.3f}% "
            f"alpha_residual={r.alpha_symmetry_residual():.3e}")
    return r
