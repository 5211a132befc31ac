"""Command-line entry point.

Every command accepts ``--config FILE`` (a flat JSON object) and
``--KEY VALUE`` flags; flags win over the file.  Exit codes: 0 success,
1 usage error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, SrmError
from .experiments import (
    BenchRecord,
    CompressibleConfig,
    Ensemble,
    TrialConfig,
    bench_sensing,
    build_sensing,
    config_hash,
    run_compressible_experiment,
    run_measurement_scaling,
    run_phase_curve,
    trial_seeds,
    write_csv,
    COMPRESSIBLE_COLUMNS,
    SCALING_COLUMNS,
)
from .operator import SrmOperator, compose, make_operator
from .recovery import check_exact_recovery, relative_error, solve_l1, solve_omp
from .transforms import TransformKind, TransformSpec, basis_map, transform_map

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


# ------------------------------------------------------------ value parsing


def _bool(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("1", "true", "yes", "on"):
        return True
    if isinstance(v, str) and v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int(v):
    if isinstance(v, bool):
        raise ValueError(f"not an integer: {v!r}")
    if isinstance(v, float) and not v.is_integer():
        raise ValueError(f"not an integer: {v!r}")
    return int(v)


def _float(v):
    if isinstance(v, bool):
        raise ValueError(f"not a number: {v!r}")
    return float(v)


def _str(v):
    if not isinstance(v, str):
        raise ValueError(f"not a string: {v!r}")
    return v


def _list_of(conv):
    def parse(v):
        if isinstance(v, str):
            items = [s for s in v.split(",") if s.strip()]
        elif isinstance(v, (list, tuple)):
            items = list(v)
        else:
            items = [v]
        return [conv(i.strip() if isinstance(i, str) else i) for i in items]
    return parse


REQUIRED = object()

COMMON = {
    "master_seed": (_int, 0),
    "output": (_str, None),
    "threads": (_int, None),
}

SCHEMAS: dict[str, dict[str, tuple[Callable, object]]] = {
    "sense": {
        "n": (_int, REQUIRED), "m": (_int, REQUIRED), "ensemble": (_str, "wht-l"),
        "input": (_str, REQUIRED), "include_dc": (_bool, False),
    },
    "reconstruct": {
        "input": (_str, REQUIRED), "operator": (_str, None),
        "n": (_int, None), "m": (_int, None), "ensemble": (_str, "wht-l"), "include_dc": (_bool, False),
        "psi": (_str, "identity"), "solver": (_str, "l1"), "k_max": (_int, None),
        "tau_rel": (_float, 1e-4), "tol": (_float, 1e-8), "max_iter": (_int, 5000),
        "truth": (_str, None), "rel_tol": (_float, 1e-3),
    },
    "coherence": {
        "n": (_int, REQUIRED), "f": (_str, "wht"), "block": (_int, None), "psi": (_str, "identity"),
        "randomizer": (_str, "none"), "support": (_list_of(_int), None),
        "ns": (_list_of(_int), None), "seeds": (_int, 50),
    },
    "qq": {
        "n": (_int, 256), "m": (_int, 128), "f": (_str, "dct"), "psi": (_str, "db8"),
        "randomizer": (_str, "local"), "seeds": (_int, 10),
    },
    "phase": {
        "n": (_int, 256), "m": (_int, 128), "psi": (_str, "idct"), "ensemble": (_str, "wht256-l"),
        "k": (_list_of(_int), [10, 20, 30, 40, 50, 60]), "trials": (_int, 200),
        "rel_tol": (_float, 1e-3), "include_dc": (_bool, False),
        "tol": (_float, 1e-8), "max_iter": (_int, 5000),
    },
    "mstar": {
        "n": (_int, 256), "psi": (_str, "idct"), "ensemble": (_str, "wht256-l"),
        "k": (_list_of(_int), [5, 10, 15, 20]), "p_star": (_float, 0.9), "trials": (_int, 100),
        "resolution": (_int, 4), "rel_tol": (_float, 1e-3),
    },
    "compressible": {
        "n": (_int, 4096), "rates": (_list_of(_float), [0.15, 0.25, 0.35, 0.5]),
        "ensembles": (_list_of(_str), ["dct-l", "wht32-g"]), "psi": (_str, "db8"),
        "decay": (_float, 1.5), "tau_rel": (_float, 1e-6), "max_iter": (_int, 2000),
    },
    "bench": {
        "sizes": (_list_of(_int), [256, 512, 1024, 2048, 4096, 8192]), "m_ratio": (_float, 0.25),
        "reps": (_int, 20), "ensemble": (_str, "wht-l"),
    },
    "selftest": {},
}


@dataclass
class RunConfig:
    command: str
    parameters: dict
    output_path: str | None = None
    master_seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)

    def resolved(self) -> dict:
        d = dict(self.parameters)
        d["command"] = self.command
        d["master_seed"] = self.master_seed
        return d


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="srmcs", description="Structurally random matrix compressive sensing toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None)
        for key in {**COMMON, **schema}:
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return p


def usage() -> str:
    return _build_parser().format_help()


def parse_config(argv) -> RunConfig:
    """Validated :class:`RunConfig` from CLI flags and an optional JSON file."""
    argv = list(argv)
    if not argv:
        raise UsageError("no command given")
    ns = _build_parser().parse_args(argv)
    if ns.command is None:
        raise UsageError("no command given")
    schema = {**COMMON, **SCHEMAS[ns.command]}
    raw: dict = {}
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config file {ns.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a flat JSON object")
        for key, val in data.items():
            if key not in schema:
                raise UsageError(f"unknown key {key!r} for command {ns.command!r}")
            if isinstance(val, dict):
                raise UsageError(f"key {key!r}: nested objects are not allowed")
            raw[key] = val
    for key in schema:
        v = getattr(ns, key)
        if v is not None:
            raw[key] = v

    params = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                params[key] = conv(raw[key])
            except (TypeError, ValueError) as exc:
                raise UsageError(f"key {key!r}: {exc}") from None
        elif default is REQUIRED:
            raise UsageError(f"missing required key {key!r} for command {ns.command!r}")
        else:
            params[key] = default

    n, m = params.get("n"), params.get("m")
    if n is not None and n < 1:
        raise UsageError("n must be positive")
    if n is not None and m is not None:
        if m > n:
            raise UsageError(f"m exceeds n (m={m}, n={n})")
        if m < 1:
            raise UsageError("m must be positive")
    for key in ("ensemble",):
        if key in params and params[key] is not None:
            try:
                Ensemble.parse(params[key])
            except ConfigurationError as exc:
                raise UsageError(f"key {key!r}: {exc}") from None

    master_seed = params.pop("master_seed")
    output = params.pop("output")
    threads = params.pop("threads") or os.cpu_count() or 1
    if master_seed < 0 or master_seed >= 1 << 64:
        raise UsageError("key 'master_seed': must be a 64-bit unsigned integer")
    return RunConfig(ns.command, params, output, master_seed, threads)


# ---------------------------------------------------------------- commands


def read_vector(path) -> np.ndarray:
    vals = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            s = line.strip()
            if s and not s.startswith("#"):
                vals.append(float(s))
    return np.array(vals, dtype=float)


def vector_text(v) -> str:
    return "".join(f"{float(x)!r}\n" for x in v)


def _emit(cfg: RunConfig, text: str):
    if cfg.output_path:
        with open(cfg.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _sidecar(cfg: RunConfig, payload: dict):
    resolved = cfg.resolved()
    doc = {"config": resolved, "config_hash": config_hash(resolved), **payload}
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if cfg.output_path:
        with open(cfg.output_path + ".json", "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)


def _operator_for(cfg: RunConfig, n: int, m: int, ensemble: str, include_dc: bool):
    seeds = trial_seeds(cfg.master_seed, 0)
    return build_sensing(ensemble, n, m, seeds, include_dc)


def cmd_sense(cfg: RunConfig) -> int:
    p = cfg.parameters
    x = read_vector(p["input"])
    if len(x) != p["n"]:
        raise ConfigurationError(f"input vector has {len(x)} entries, expected n={p['n']}")
    if Ensemble.parse(p["ensemble"]).kind == "gaussian":
        raise ConfigurationError("sense needs a structured ensemble (wht*/dct*)")
    op = _operator_for(cfg, p["n"], p["m"], p["ensemble"], p["include_dc"])
    _emit(cfg, vector_text(op.forward(x)))
    _sidecar(cfg, {"operator": op.to_dict()})
    return EXIT_OK


def cmd_reconstruct(cfg: RunConfig) -> int:
    p = cfg.parameters
    y = read_vector(p["input"])
    if p["operator"]:
        with open(p["operator"], encoding="utf-8") as fh:
            doc = json.load(fh)
        op = SrmOperator.from_dict(doc.get("operator", doc))
    else:
        if p["n"] is None:
            raise ConfigurationError("reconstruct needs --operator or --n/--m")
        op = _operator_for(cfg, p["n"], p["m"] or len(y), p["ensemble"], p["include_dc"])
    if len(y) != op.m:
        raise ConfigurationError(f"measurement file has {len(y)} entries, operator expects {op.m}")
    psi = basis_map(p["psi"], op.n)
    A = compose(op, psi)
    if p["solver"] == "omp":
        res = solve_omp(A, y, p["k_max"] or op.m // 2)
    elif p["solver"] == "l1":
        res = solve_l1(A, y, tol=p["tol"], max_iter=p["max_iter"], tau_rel=p["tau_rel"])
    else:
        raise ConfigurationError(f"unknown solver {p['solver']!r}")
    x_hat = psi.forward(res.alpha_hat)
    _emit(cfg, vector_text(x_hat))
    payload = {"result": res.to_dict()}
    if p["truth"]:
        x_true = read_vector(p["truth"])
        payload["result"]["rel_error"] = relative_error(x_hat, x_true)
        payload["result"]["exact"] = check_exact_recovery(x_hat, x_true, p["rel_tol"])
    _sidecar(cfg, payload)
    return EXIT_OK if res.converged or p["solver"] == "omp" else EXIT_NUMERIC


def _fr_map(kind: str, n: int, block: int, randomizer: str, seed: int):
    from .randomize import RandomizerSpec, apply_randomizer, apply_randomizer_adjoint, build_randomizer
    from .transforms import LinearMap

    F = transform_map(TransformSpec(TransformKind(kind), block, n))
    if randomizer == "none":
        return F
    r = build_randomizer(RandomizerSpec(randomizer, seed, n))
    R = LinearMap(lambda v: apply_randomizer(r, v), lambda v: apply_randomizer_adjoint(r, v), n, n)
    return F @ R


def cmd_coherence(cfg: RunConfig) -> int:
    from .analysis import ScalingConfig, coherence_scaling_check, cumulative_coherence, heterogeneity, mutual_coherence

    p = cfg.parameters
    if p["ns"]:
        rand = ("local", "global") if p["randomizer"] == "none" else (p["randomizer"],)
        sc = ScalingConfig(tuple(p["ns"]), p["block"], p["f"], rand, p["psi"], p["seeds"], cfg.master_seed)
        rows, meta = coherence_scaling_check(sc)
        resolved = cfg.resolved()
        resolved["meta"] = json.dumps(meta, sort_keys=True)
        cols = ("n", "b", "randomizer", "mu", "normalized_stat")
        _emit(cfg, write_csv(None, cols, ([r[c] for c in cols] for r in rows), resolved))
        return EXIT_OK
    n = p["n"]
    block = p["block"] or n
    A = _fr_map(p["f"], n, block, p["randomizer"], trial_seeds(cfg.master_seed, 0)["randomizer"])
    psi = basis_map(p["psi"], n)
    rep = mutual_coherence(A, psi, block_size=block)
    mu_c = cumulative_coherence(A, psi, p["support"]) if p["support"] else ""
    rho = heterogeneity(psi).rho_psi
    cols = ("mu", "mu_n", "mu_c", "n", "b", "rho_psi")
    _emit(cfg, write_csv(None, cols, [(rep.mu, rep.mu_n, mu_c, n, block, rho)], cfg.resolved()))
    return EXIT_OK


def cmd_qq(cfg: RunConfig) -> int:
    from .analysis import normality_report

    p = cfg.parameters
    seeds = trial_seeds(cfg.master_seed, 0)
    op = make_operator(p["n"], p["m"], p["f"], None, p["randomizer"], seeds["randomizer"], seeds["subsample"])
    rep = normality_report(op, basis_map(p["psi"], p["n"]), p["seeds"], master_seed=cfg.master_seed)
    resolved = cfg.resolved()
    text = write_csv(None, ("theoretical", "empirical"), rep.qq_pairs.tolist(), resolved)
    text = text.replace("\n", f"\n# ks_distance={rep.ks_distance!r}\n# sigma2_hat={rep.sigma2_hat!r}\n", 1)
    _emit(cfg, text)
    return EXIT_OK


def _trial_cfg(cfg: RunConfig, **kw) -> TrialConfig:
    p = cfg.parameters
    return TrialConfig(
        n=p["n"], m=kw.get("m", p.get("m")), k=0, ensemble=p["ensemble"], psi=p["psi"],
        trials=p["trials"], master_seed=cfg.master_seed, rel_tol=p["rel_tol"],
        include_dc=p.get("include_dc", False), tol=p.get("tol", 1e-8), max_iter=p.get("max_iter", 5000),
    )


def cmd_phase(cfg: RunConfig) -> int:
    tc = _trial_cfg(cfg)
    text = None
    if cfg.output_path:
        run_phase_curve(tc, cfg.parameters["k"], cfg.threads, cfg.output_path, cfg.resolved())
    else:
        curve = run_phase_curve(tc, cfg.parameters["k"], cfg.threads)
        text = curve.to_csv(None, cfg.resolved())
        sys.stdout.write(text)
    return EXIT_OK


def cmd_mstar(cfg: RunConfig) -> int:
    p = cfg.parameters
    tc = _trial_cfg(cfg, m=p["n"])
    rows = run_measurement_scaling(tc, p["k"], p["p_star"], p["resolution"], cfg.threads)
    _emit(cfg, write_csv(None, SCALING_COLUMNS, rows, cfg.resolved()))
    return EXIT_OK


def cmd_compressible(cfg: RunConfig) -> int:
    p = cfg.parameters
    cc = CompressibleConfig(n=p["n"], rates=tuple(p["rates"]), ensembles=tuple(p["ensembles"]), psi=p["psi"],
                            decay=p["decay"], master_seed=cfg.master_seed, tau_rel=p["tau_rel"],
                            max_iter=p["max_iter"])
    rows = run_compressible_experiment(cc)
    _emit(cfg, write_csv(None, COMPRESSIBLE_COLUMNS, rows, cfg.resolved()))
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    p = cfg.parameters
    recs = bench_sensing(p["sizes"], p["m_ratio"], p["reps"], p["ensemble"], seed=cfg.master_seed)
    _emit(cfg, write_csv(None, BenchRecord.COLUMNS, (r.row() for r in recs), cfg.resolved()))
    return EXIT_OK


def cmd_selftest(cfg: RunConfig) -> int:
    from .selftest import run_selftest

    passed, failed, lines = run_selftest()
    text = "".join(line + "\n" for line in lines) + f"passed={passed} failed={failed}\n"
    _emit(cfg, text)
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


COMMANDS = {
    "sense": cmd_sense,
    "reconstruct": cmd_reconstruct,
    "coherence": cmd_coherence,
    "qq": cmd_qq,
    "phase": cmd_phase,
    "mstar": cmd_mstar,
    "compressible": cmd_compressible,
    "bench": cmd_bench,
    "selftest": cmd_selftest,
}


def run(config: RunConfig) -> int:
    """Dispatch a validated config; returns the process exit code."""
    try:
        return COMMANDS[config.command](config)
    except (ConfigurationError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (SrmError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        if not argv:
            sys.stderr.write(usage())
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
