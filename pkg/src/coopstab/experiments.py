"""Config-driven experiment runner behind the ``coopstab`` command.

A config is a flat YAML mapping. Unknown keys are errors. Each mode writes
comma-separated tables with a header row, a ``<mode>.meta.json`` sidecar
holding the resolved config and seeds, and (unless ``plots: false``) PNG
figures next to the tables. Nothing time- or host-dependent is recorded, so
reruns with the same config reproduce every file byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import __version__, plotting, presets, sim
from .phy import SlotGeometry, scenario_links
from .rates import EnergyModel, InfeasiblePrimary, ScenarioParams, bound_rates
from .region import max_primary_rate, sweep_envelope
from .sim import DATA_QUEUES, empirical_rate_check, ratio_estimate, run
from .validation import check_inside, check_outside, sample_points

MODES = ("bounds", "inner-envelope", "outer-envelope", "simulate", "validate",
         "fig1", "fig2", "fig3", "fig4")

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2

OUTAGE_KEYS = ("p_out_ps_pd", "p_out_ps_ss", "p_out_ss_sd", "p_out_ss_pd")
PHY_KEYS = ("packet_bits", "slot_seconds", "sensing_seconds", "bandwidth_hz",
            "energy_per_packet", "noise_power", "primary_power",
            "gain_ps_pd", "gain_ps_ss", "gain_ss_sd", "gain_ss_pd")
TRAFFIC_KEYS = ("lambda_p", "lambda_s", "lambda_e", "f", "beta", "energy_model")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    out: Path = Path("results")
    seed: int = 0
    f_step: float = 1e-3
    lambda_p_points: int = 200
    horizon: int = 10**6
    burn_in: int = 10**5
    replications: int = 1
    validate_points: int = 10
    force_f: Optional[float] = None
    plots: bool = True
    trace: bool = False
    r_min: float = presets.FIG4_R_RANGE[0]
    r_max: float = presets.FIG4_R_RANGE[1]
    r_points: int = 300
    scenario: Optional[ScenarioParams] = None
    source: dict = field(default_factory=dict)  # raw scenario keys, for the sidecar

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        self.out = Path(self.out)
        if not 0 < self.f_step <= 0.01:
            raise ConfigError("f_step must lie in (0, 0.01]")
        for name in ("lambda_p_points", "horizon", "replications", "validate_points", "r_points"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.lambda_p_points < 2 or self.r_points < 2:
            raise ConfigError("grids need at least two points")
        if not 0 <= self.burn_in < self.horizon:
            raise ConfigError("need 0 <= burn_in < horizon")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.force_f is not None and not 0 <= self.force_f <= 1:
            raise ConfigError("force_f must lie in [0, 1]")
        if not 0 < self.r_min < self.r_max:
            raise ConfigError("need 0 < r_min < r_max")

    @property
    def f_values(self):
        return None if self.force_f is None else [self.force_f]

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
             if f.name not in ("scenario", "source")}
        d["out"] = str(self.out)
        d["scenario"] = None if self.scenario is None else {
            **dataclasses.asdict(self.scenario),
            "energy_model": self.scenario.energy_model.value}
        d["scenario_source"] = self.source
        return d


_SCALARS = {f.name: f for f in dataclasses.fields(ExperimentConfig)
            if f.name not in ("scenario", "source")}
_CASTS = {"seed": int, "lambda_p_points": int, "horizon": int, "burn_in": int,
          "replications": int, "validate_points": int, "r_points": int,
          "f_step": float, "r_min": float, "r_max": float, "force_f": float,
          "mode": str, "out": str}


def _scenario(raw: dict) -> Optional[ScenarioParams]:
    has_out = [k for k in OUTAGE_KEYS if k in raw]
    has_phy = [k for k in PHY_KEYS if k in raw]
    if has_out and has_phy:
        raise ConfigError("give either outage probabilities or PHY parameters, not both")
    traffic = {k: raw[k] for k in TRAFFIC_KEYS if k in raw}
    if not has_out and not has_phy:
        if traffic:
            raise ConfigError("traffic keys given without link outages or PHY parameters")
        return None
    try:
        if has_out:
            missing = set(OUTAGE_KEYS) - set(has_out)
            if missing:
                raise ConfigError(f"missing outage keys: {sorted(missing)}")
            return ScenarioParams(**{k: raw[k] for k in OUTAGE_KEYS}, **traffic)
        missing = set(PHY_KEYS) - set(has_phy)
        if missing:
            raise ConfigError(f"missing PHY keys: {sorted(missing)}")
        geom = SlotGeometry(
            packet_bits=raw["packet_bits"], slot_seconds=raw["slot_seconds"],
            sensing_seconds=raw["sensing_seconds"], bandwidth_hz=raw["bandwidth_hz"],
            energy_per_packet=raw["energy_per_packet"], noise_power=raw["noise_power"],
            mean_gain={k: raw[f"gain_{k}"] for k in ("ps_pd", "ps_ss", "ss_sd", "ss_pd")})
        links = scenario_links(geom, raw["primary_power"])
        return ScenarioParams.from_outages(links, **traffic)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def build_config(raw: dict) -> ExperimentConfig:
    """Validate a flat mapping of config keys into an :class:`ExperimentConfig`."""
    known = set(_SCALARS) | set(OUTAGE_KEYS) | set(PHY_KEYS) | set(TRAFFIC_KEYS)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "mode" not in raw or raw["mode"] is None:
        raise ConfigError("no mode given")
    kw = {}
    for k, v in raw.items():
        if k not in _SCALARS:
            continue
        if k in _CASTS and v is not None:
            try:
                if _CASTS[k] is int and (isinstance(v, bool) or float(v) != int(float(v))):
                    raise ValueError
                v = _CASTS[k](float(v)) if _CASTS[k] is int else _CASTS[k](v)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {k}: {raw[k]!r}") from None
        elif k in ("plots", "trace") and not isinstance(v, bool):
            raise ConfigError(f"{k} must be true or false")
        kw[k] = v
    source = {k: raw[k] for k in raw if k not in _SCALARS}
    return ExperimentConfig(**kw, scenario=_scenario(raw), source=source)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a flat key-value mapping")
    nested = [k for k, v in raw.items() if isinstance(v, (dict, list))]
    if nested:
        raise ConfigError(f"config must be flat; nested values under {nested}")
    return raw


@dataclass
class ExperimentResult:
    files: list
    status: int
    summary: dict


def _fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    if hasattr(x, "value"):
        return str(x.value)
    return str(x)


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    return path


ENVELOPE_HEADER = ("curve", "energy_model", "side", "lambda_e", "lambda_p",
                   "lambda_s_max", "f_opt", "beta_opt", "feasible")


def _envelope_rows(curve, base, env):
    for p in env:
        yield (curve, base.energy_model, env.side, base.lambda_e, p.lambda_p,
               p.lambda_s_max, p.f_opt, p.beta_opt, p.feasible)


def _need_scenario(cfg):
    if cfg.scenario is None:
        raise ConfigError(f"mode {cfg.mode} needs a scenario (outage probabilities or PHY keys)")
    return cfg.scenario


def _sweep(cfg, base, side):
    return sweep_envelope(base, side, cfg.lambda_p_points, cfg.f_step, cfg.f_values)


def _envelope_family(cfg, name, runs, title):
    """Sweep every ``(label, base, side)`` and emit one table and one figure."""
    rows, curves, envs = [], [], {}
    for label, base, side in runs:
        env = _sweep(cfg, base, side)
        envs[label] = env
        rows.extend(_envelope_rows(label, base, env))
        curves.append((label, side, env.lambda_p, env.lambda_s))
    files = [_write_csv(cfg.out / f"{name}.csv", ENVELOPE_HEADER, rows)]
    if cfg.plots:
        files.append(plotting.plot_envelopes(curves, cfg.out / f"{name}.png", title))
    summary = {label: {"max_feasible_lambda_p": e.max_feasible_lambda_p,
                       "max_lambda_s": float(e.lambda_s.max())}
               for label, e in envs.items()}
    return files, summary, envs


def _mode_bounds(cfg):
    base = _need_scenario(cfg)
    path = cfg.out / "bounds.csv"
    try:
        b = bound_rates(base)
    except InfeasiblePrimary as exc:
        return [_write_csv(path, ("quantity", "inner", "outer"), [])], {
            "infeasible_primary": str(exc)}, EXIT_OK
    rows = [(k, v.inner, v.outer) for k, v in b.as_dict().items()]
    return [_write_csv(path, ("quantity", "inner", "outer"), rows)], {
        "inner_feasible": b.inner_feasible}, EXIT_OK


def _mode_envelope(cfg, side):
    base = _need_scenario(cfg)
    files, summary, _ = _envelope_family(
        cfg, f"{side}-envelope", [(f"{base.energy_model.value} {side}", base, side)],
        f"{side} envelope")
    return files, summary, EXIT_OK


def _mode_fig1(cfg):
    runs = [(f"{m.value} {side}", presets.FIG1.replace(energy_model=m), side)
            for m in EnergyModel for side in ("inner", "outer")]
    files, summary, envs = _envelope_family(cfg, "fig1", runs, "Fig. 1 preset")
    gap = np.abs(envs["md1_unity outer"].lambda_s - envs["coupled inner"].lambda_s)
    summary["max_gap_md1_outer_vs_coupled_inner"] = float(gap.max())
    return files, summary, EXIT_OK


def _mode_fig2(cfg):
    runs = [(f"{m.value} inner le={le}", presets.FIG2.replace(lambda_e=le, energy_model=m), "inner")
            for le in presets.FIG2_LAMBDA_E for m in EnergyModel]
    files, summary, _ = _envelope_family(cfg, "fig2", runs, "Fig. 2 preset")
    return files, summary, EXIT_OK


def _mode_fig3(cfg):
    runs = [(f"{side} le={le}", presets.FIG3.replace(lambda_e=le), side)
            for side in ("inner", "outer") for le in presets.FIG3_LAMBDA_E]
    files, summary, _ = _envelope_family(cfg, "fig3", runs, "Fig. 3 preset")
    return files, summary, EXIT_OK


def _mode_fig4(cfg):
    r = presets.fig4_r_grid(cfg.r_min, cfg.r_max, cfg.r_points)
    files, summary = [], {}
    header = ("gamma_ps_pd", "R", "mu_p_inner", "mu_p_outer", "mu_p_nc",
              "f_inner", "f_outer", "inner_stable", "outer_stable")
    for g in presets.FIG4_GAMMA_PS_PD:
        pts = max_primary_rate(presets.fig4_snr(g), presets.FIG4_SENSING_FRACTION, r,
                               presets.FIG4_LAMBDA_P, presets.FIG4_LAMBDA_E,
                               cfg.f_step, f_values=cfg.f_values)
        rows = [(g, p.spectral_efficiency, p.inner, p.outer, p.non_cooperative,
                 p.f_inner, p.f_outer, p.inner_stable, p.outer_stable) for p in pts]
        stem = f"fig4_gamma_{g:g}"
        files.append(_write_csv(cfg.out / f"{stem}.csv", header, rows))
        if cfg.plots:
            files.append(plotting.plot_primary_rate(
                r, [p.inner for p in pts], [p.outer for p in pts],
                [p.non_cooperative for p in pts], cfg.out / f"{stem}.png",
                f"gamma_ps,pd = {g:g}"))
        summary[stem] = {"mu_p_outer_at_r_min": pts[0].outer,
                         "mu_p_inner_at_r_min": pts[0].inner,
                         "mu_p_nc_at_r_min": pts[0].non_cooperative}
    return files, summary, EXIT_OK


def _mode_simulate(cfg):
    base = _need_scenario(cfg)
    try:
        bounds = bound_rates(base)
    except InfeasiblePrimary:
        bounds = None
    reports = []
    for k in range(cfg.replications):
        trace = cfg.out / "trace.csv" if cfg.trace and k == 0 else None
        reports.append(run(base, cfg.horizon, cfg.burn_in, cfg.seed + k, trace_path=trace))
    rate_rows, verdict_rows = [], []
    for k, rep in enumerate(reports):
        for name, est in {**rep.rates(), **{f"occ_{q}": e for q, e in rep.occupancy.items()}}.items():
            b = getattr(bounds, name, None) if bounds else None
            rate_rows.append((k, rep.seed, name, est.value, est.se,
                              b.inner if b else None, b.outer if b else None))
        ml = rep.mean_lengths
        for q, v in rep.verdict_per_queue.items():
            verdict_rows.append((k, rep.seed, q, v, ml[q]))
    if len(reports) > 1:
        stacked = np.concatenate([r.counts for r in reports])
        for name, (num, den) in _POOLED.items():
            est = ratio_estimate(stacked[:, num], stacked[:, den])
            b = getattr(bounds, name, None) if bounds else None
            rate_rows.append(("pooled", None, name, est.value, est.se,
                              b.inner if b else None, b.outer if b else None))
    files = [
        _write_csv(cfg.out / "simulate_rates.csv",
                   ("replication", "seed", "quantity", "value", "se", "inner", "outer"), rate_rows),
        _write_csv(cfg.out / "simulate_verdicts.csv",
                   ("replication", "seed", "queue", "verdict", "mean_length"), verdict_rows),
    ]
    if cfg.trace:
        files.append(cfg.out / "trace.csv")
    if cfg.plots:
        files.append(plotting.plot_window_means(
            {q: reports[0].window_means(q) for q in DATA_QUEUES},
            cfg.out / "simulate.png", f"seed {reports[0].seed}"))
    summary = {"seeds": [r.seed for r in reports]}
    if bounds is not None and all(v.value == "stable" for v in reports[0].verdict_per_queue.values()):
        summary["rate_check"] = {k: v.value for k, v in empirical_rate_check(reports[0], bounds).items()}
    return files, summary, EXIT_OK


_POOLED = {"mu_p": (sim.C_DEP_P, sim.C_NZ_P), "mu_s": (sim.C_DEP_S, sim.C_NZ_S),
           "mu_ps": (sim.C_DEP_PS, sim.C_NZ_PS), "mu_e": (sim.C_CONS_E, sim.C_NZ_E),
           "lambda_ps": (sim.C_ADMIT, sim.C_SLOTS)}


def _mode_validate(cfg):
    base = _need_scenario(cfg)
    inside, outside = sample_points(base, [base.lambda_e], cfg.validate_points, cfg.seed,
                                    f_grid_step=cfg.f_step)
    results = []
    for i, p in enumerate(inside):
        results.append(check_inside(p, cfg.horizon, cfg.burn_in, cfg.seed + i))
    for i, p in enumerate(outside):
        results.append(check_outside(p, cfg.horizon, cfg.burn_in, cfg.seed + 10_000 + i))
    header = ("kind", "lambda_p", "lambda_s", "f", "beta",
              *(f"verdict_{q}" for q in DATA_QUEUES), "reran", "bounds_check", "passed")
    rows = []
    for r in results:
        checks = None
        if r.rate_checks is not None:
            bad = [k for k, v in {**r.rate_checks, **{f"occ_{k}": v for k, v in r.occupancy_checks.items()}}.items()
                   if v.value != "within"]
            checks = "ok" if not bad else ";".join(bad)
        rows.append((r.kind, r.params.lambda_p, r.params.lambda_s, r.params.f, r.params.beta,
                     *(r.verdicts[q] for q in DATA_QUEUES), r.reran, checks, r.passed))
    files = [_write_csv(cfg.out / "validate.csv", header, rows)]
    if cfg.plots:
        files.append(plotting.plot_validation(
            [(r.params.lambda_p, r.params.lambda_s, r.passed) for r in results if r.kind == "inside"],
            [(r.params.lambda_p, r.params.lambda_s, r.passed) for r in results if r.kind == "outside"],
            cfg.out / "validate.png", "simulation vs. bounds"))
    failed = sum(not r.passed for r in results)
    summary = {"points": len(results), "failed": failed,
               "inconclusive_after_rerun": sum(r.inconclusive for r in results)}
    return files, summary, EXIT_VALIDATION if failed else EXIT_OK


_DISPATCH = {
    "bounds": _mode_bounds,
    "inner-envelope": lambda c: _mode_envelope(c, "inner"),
    "outer-envelope": lambda c: _mode_envelope(c, "outer"),
    "simulate": _mode_simulate,
    "validate": _mode_validate,
    "fig1": _mode_fig1,
    "fig2": _mode_fig2,
    "fig3": _mode_fig3,
    "fig4": _mode_fig4,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc}") from exc
    files, summary, status = _DISPATCH[cfg.mode](cfg)
    meta_path = cfg.out / f"{cfg.mode}.meta.json"
    meta = {
        "package": "coopstab",
        "version": __version__,
        "mode": cfg.mode,
        "config": cfg.as_dict(),
        "outputs": [Path(f).name for f in files],
        "status": status,
        "summary": summary,
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_fmt)
        fh.write("\n")
    return ExperimentResult([*files, meta_path], status, summary)
