"""Command-line front end: ``mmeqd pdf|roc|bounds|design|simulate|curves|trace``.

Every command writes CSV (``#`` metadata lines, a header row, 12 significant
digits). Values may be preloaded from a ``key = value`` file given with
``--config``; explicit flags win. Failures exit nonzero with one line
``error: <category>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .block_detector import design_threshold, pd, pfa, roc
from .distributions import DistParams, SeriesTruncation, choose_truncation, pdf_h0, pdf_h1
from .errors import ConfigError, DomainError, MmeqdError
from .harness import (ALGORITHMS, CUSUM, DEFAULT_MAX_BLOCKS, DEFAULT_SAMPLER, DEFAULT_SEEDS,
                      FULL_SEEDS, GLR, SEED_SCHEME, Scenario, estimate_tau, metadata,
                      performance_curves, run_trials, trace_pair)
from .numerics import QuadratureSpec
from .quickest import GRID_QD_DB, GRID_RUNTIME_DB, BoundConstants, db_grid, parse_grid
from .report import write_csv, write_metadata
from .signal_model import H0, H1, PSK_ORDERS, ModelConfig

log = logging.getLogger("mmeqd")

COMMANDS = ("pdf", "roc", "bounds", "design", "simulate", "curves", "trace")

# Built-in values used when neither a flag nor the config file sets a key.
DEFAULTS: Dict[str, object] = {
    "n": 500,
    "snr_db": None,
    "seed": 0,
    "out": "-",
    "seeds": DEFAULT_SEEDS,
    "full": False,
    "threshold": None,
    "grid_db": None,
    "horizon": None,
    "max_blocks": DEFAULT_MAX_BLOCKS,
    "table1_override": None,
    "tau_grid": "1:3:0.001",
    "pfa": None,
    "target_pfa": None,
    "algorithm": CUSUM,
    "hypothesis": "both",
    "change_block": None,
    "blocks": 100,
    "trial": 0,
    "sampler": DEFAULT_SAMPLER,
    "psk_order": 4,
    "bin_width": QuadratureSpec().bin_width,
    "tail_tol": QuadratureSpec().tail_mass_tol,
}


# Keys recorded in each command's metadata header.
COMMAND_KEYS = {
    "pdf": ("n", "snr_db", "tau_grid", "table1_override", "bin_width", "tail_tol"),
    "roc": ("n", "snr_db", "pfa", "table1_override", "bin_width", "tail_tol"),
    "bounds": ("n", "snr_db", "threshold", "table1_override", "bin_width", "tail_tol"),
    "design": ("n", "snr_db", "target_pfa", "table1_override", "bin_width", "tail_tol"),
    "trace": ("n", "snr_db", "threshold", "grid_db", "seed", "trial", "blocks", "sampler",
              "psk_order", "table1_override", "bin_width", "tail_tol"),
}

# Flags whose values may start with a minus sign (negative dB values).
_SIGNED_FLAGS = ("--snr-db", "--grid-db", "--threshold", "--tau-grid")


class UsageError(MmeqdError):
    category = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    # every flag defaults to None so config-file values can be told apart
    p.add_argument("--n", type=int, help="samples per block N")
    p.add_argument("--snr-db", help="SNR in dB; comma-separated where a list is accepted")
    p.add_argument("--seed", type=int, help="experiment seed (stream id)")
    p.add_argument("--out", help="output CSV path, '-' for stdout")
    p.add_argument("--config", help="key = value file preloading any flag")
    p.add_argument("--seeds", type=int, help="Monte-Carlo trials (default 200)")
    p.add_argument("--full", action="store_const", const=True,
                   help=f"use {FULL_SEEDS} trials")
    p.add_argument("--threshold", help="h; a list or START:STOP:STEP for bounds")
    p.add_argument("--grid-db", help="GLR candidate grid START:STOP:STEP in dB")
    p.add_argument("--horizon", help="run-times in samples, comma-separated")
    p.add_argument("--max-blocks", type=int, help="censoring horizon in blocks")
    p.add_argument("--table1-override", type=int, metavar="J",
                   help="fixed series truncation J_s (skips verification)")
    p.add_argument("--sampler", choices=("wishart", "explicit"))
    p.add_argument("--psk-order", type=int, choices=PSK_ORDERS)
    p.add_argument("--bin-width", type=float, help="quadrature bin width")
    p.add_argument("--tail-tol", type=float, help="quadrature tail-mass tolerance")
    p.add_argument("-v", "--verbose", action="store_const", const=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmeqd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mmeqd {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("pdf", help="f0 and f1 on a tau grid")
    _common(p)
    p.add_argument("--tau-grid", help="START:STOP:STEP (default 1:3:0.001)")

    p = sub.add_parser("roc", help="analytic ROC of the block detector")
    _common(p)
    p.add_argument("--pfa", help="target false-alarm rates, comma-separated")

    p = sub.add_parser("bounds", help="CUSUM delay and false-alarm bounds")
    _common(p)

    p = sub.add_parser("design", help="threshold for a target false-alarm rate")
    _common(p)
    p.add_argument("--target-pfa", type=float)

    for name, help_text in (("simulate", "per-trial quickest-detection outcomes"),
                            ("curves", "P_fa and P_d versus run-time"),
                            ("trace", "CUSUM and GLR statistics block by block")):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        p.add_argument("--algorithm", choices=ALGORITHMS)
        if name == "simulate":
            p.add_argument("--hypothesis", choices=("H0", "H1", "both"))
        if name == "trace":
            p.add_argument("--blocks", type=int)
            p.add_argument("--trial", type=int)
            p.add_argument("--change-block", help="first signal block, or inf")
    return parser


def load_config(path: str) -> Dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment; dashes in keys
    are read as underscores."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from exc
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{num}: unknown key {key!r}")
        out[key] = value
    return out


_CASTS = {"n": int, "seed": int, "seeds": int, "max_blocks": int, "table1_override": int,
          "target_pfa": float, "blocks": int, "trial": int, "psk_order": int,
          "bin_width": float, "tail_tol": float,
          "full": lambda s: s.strip().lower() in ("1", "true", "yes", "on")}


def resolve(args: argparse.Namespace) -> Dict[str, object]:
    """Merge flags over config-file values over built-in defaults."""
    file_values = load_config(args.config) if getattr(args, "config", None) else {}
    cfg = {}
    for key, default in DEFAULTS.items():
        value = getattr(args, key, None)
        if value is None and key in file_values:
            raw = file_values[key]
            try:
                value = _CASTS.get(key, str)(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        cfg[key] = default if value is None else value
    cfg["command"] = args.command
    return cfg


# --- value parsing --------------------------------------------------------------

def _floats(text, what: str) -> List[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise DomainError(f"{what} must be comma-separated numbers, got {text!r}") from exc


def _range_or_list(text, what: str) -> np.ndarray:
    if ":" in str(text):
        start, stop, step = parse_grid(str(text))
        return db_grid(start, stop, step)
    return np.asarray(_floats(text, what))


def _snr_list(cfg) -> List[float]:
    if cfg["snr_db"] is None:
        return []
    vals = _floats(cfg["snr_db"], "--snr-db")
    if any(not math.isfinite(v) for v in vals):
        raise DomainError("--snr-db values must be finite")
    return vals


def _one_snr(cfg, required: bool = True) -> Optional[float]:
    vals = _snr_list(cfg)
    if not vals:
        if required:
            raise DomainError("--snr-db is required")
        return None
    if len(vals) != 1:
        raise DomainError("this command takes a single --snr-db value")
    return vals[0]


def _spec(cfg) -> QuadratureSpec:
    return QuadratureSpec(bin_width=float(cfg["bin_width"]), tail_mass_tol=float(cfg["tail_tol"]))


def _check_n(cfg) -> int:
    n = int(cfg["n"])
    if n < 2:
        raise DomainError("--n must be >= 2")
    return n


def _trunc(cfg, params: DistParams, spec: QuadratureSpec) -> SeriesTruncation:
    j = cfg["table1_override"]
    if j is not None:
        if int(j) < 1:
            raise DomainError("--table1-override must be >= 1")
        return SeriesTruncation(int(j))
    return choose_truncation(params, spec)


def _seeds(cfg) -> int:
    s = FULL_SEEDS if cfg["full"] else int(cfg["seeds"])
    if s < 1:
        raise DomainError("--seeds must be >= 1")
    return s


def _grid(cfg, default) -> tuple:
    text = cfg["grid_db"]
    return parse_grid(str(text)) if text is not None else tuple(default)


def _meta(cfg, **extra) -> dict:
    meta = {k: cfg[k] for k in COMMAND_KEYS[cfg["command"]] if cfg[k] is not None}
    meta["command"] = cfg["command"]
    if "seed" in meta:
        meta["seed_scheme"] = SEED_SCHEME
    meta.update(extra)
    return meta


# --- commands ---------------------------------------------------------------------

def cmd_pdf(cfg) -> None:
    n = _check_n(cfg)
    spec = _spec(cfg)
    start, stop, step = parse_grid(str(cfg["tau_grid"]))
    if start < 1:
        raise DomainError("tau grid must start at >= 1")
    tau = db_grid(start, stop, step)
    snr_db = _one_snr(cfg, required=False)
    f0 = pdf_h0(tau, n)
    if snr_db is None:
        rows = zip(tau.tolist(), np.atleast_1d(f0).tolist())
        write_csv(cfg["out"], ["tau", "f0"], rows, _meta(cfg))
        return
    params = DistParams.from_db(n, snr_db)
    trunc = _trunc(cfg, params, spec)
    f1 = pdf_h1(tau, params, trunc)
    rows = zip(tau.tolist(), np.atleast_1d(f0).tolist(), np.atleast_1d(f1).tolist())
    write_csv(cfg["out"], ["tau", "f0", "f1"], rows, _meta(cfg, j_s=trunc.j_s))


def cmd_roc(cfg) -> None:
    n = _check_n(cfg)
    snrs = _snr_list(cfg)
    if not snrs:
        raise DomainError("--snr-db is required")
    targets = None if cfg["pfa"] is None else sorted(_floats(cfg["pfa"], "--pfa"))
    spec = _spec(cfg)
    rows = []
    used = []
    for snr_db in sorted(snrs):
        params = DistParams.from_db(n, snr_db)
        trunc = _trunc(cfg, params, spec)
        used.append(trunc.j_s)
        pts = roc(n, params.alpha, pfa_grid=targets, trunc=trunc)
        for pt in sorted(pts, key=lambda q: (q.p_fa, -q.h)):
            rows.append((pt.h, pt.p_fa, pt.p_d, snr_db, n))
    write_csv(cfg["out"], ["h", "pfa", "pd", "snr_db", "n"], rows, _meta(cfg, j_s=used))


def cmd_bounds(cfg) -> None:
    n = _check_n(cfg)
    snr_db = _one_snr(cfg)
    spec = _spec(cfg)
    hs = _range_or_list(cfg["threshold"] or "5:60:5", "--threshold")
    params = DistParams.from_db(n, snr_db)
    trunc = _trunc(cfg, params, spec)
    consts = BoundConstants.compute(params, trunc, spec)
    rows = []
    for h in hs:
        b = consts.bounds(float(h))
        rows.append((float(h), b.tau_d_upper, b.tau_fa_lower, b.tau_fa_simple, n, snr_db))
    meta = _meta(cfg, j_s=trunc.j_s, e_l_f0=consts.e_l_f0, e_l_f1=consts.e_l_f1,
                 gamma_f0=consts.gamma_f0, gamma_f1=consts.gamma_f1, phi=consts.phi,
                 **{k: v for k, v in metadata().items() if k.startswith("gamma_")})
    write_csv(cfg["out"], ["h", "td_upper_blocks", "tfa_lower_blocks", "tfa_simple_blocks",
                           "n", "snr_db"], rows, meta)


def cmd_design(cfg) -> None:
    n = _check_n(cfg)
    target = cfg["target_pfa"]
    if target is None:
        raise DomainError("--target-pfa is required")
    h = design_threshold(n, float(target))
    achieved = pfa(h, n)
    snr_db = _one_snr(cfg, required=False)
    cols = ["n", "target_pfa", "h", "pfa"]
    row = [n, float(target), h, achieved]
    extra = {}
    if snr_db is not None:
        params = DistParams.from_db(n, snr_db)
        trunc = _trunc(cfg, params, _spec(cfg))
        cols += ["snr_db", "pd"]
        row += [snr_db, pd(h, params, trunc)]
        extra["j_s"] = trunc.j_s
    write_csv(cfg["out"], cols, [row], _meta(cfg, **extra))


def _threshold(cfg) -> float:
    if cfg["threshold"] is None:
        raise DomainError("--threshold is required")
    vals = _floats(cfg["threshold"], "--threshold")
    if len(vals) != 1:
        raise DomainError("this command takes a single --threshold value")
    return vals[0]


def _model(cfg, snr_db: Optional[float]) -> ModelConfig:
    return ModelConfig.from_db(_check_n(cfg), snr_db, int(cfg["psk_order"]))


def _sidecar(path, meta) -> None:
    if path not in (None, "-"):
        write_metadata(f"{os.path.splitext(str(path))[0]}.meta.json", meta)


def cmd_simulate(cfg) -> None:
    snr_db = _one_snr(cfg, required=cfg["algorithm"] == CUSUM)
    model = _model(cfg, snr_db)
    h = _threshold(cfg)
    algorithm = cfg["algorithm"]
    grid = _grid(cfg, GRID_QD_DB) if algorithm == GLR else None
    seeds = _seeds(cfg)
    hyps = [H0, H1] if cfg["hypothesis"] == "both" else [cfg["hypothesis"]]
    rows = []
    scenarios = []
    for hyp in hyps:
        sc = Scenario(model, algorithm, h, math.inf if hyp == H0 else 1, int(cfg["max_blocks"]),
                      grid, int(cfg["seed"]), cfg["sampler"], cfg["table1_override"], _spec(cfg))
        scenarios.append(sc)
        recs = run_trials(sc, range(1, seeds + 1))
        for r in recs:
            rows.append((algorithm, model.n, snr_db, h, r.seed, hyp, r.alarm_block, r.censored))
        kind = "false_alarm" if hyp == H0 else "detection"
        try:
            est = estimate_tau(recs, kind)
            log.info("%s %s: mean %.6g blocks, stderr %.3g, %d censored", algorithm, kind,
                     est.mean_blocks, est.std_error, est.censored_count)
        except MmeqdError as exc:
            log.info("%s %s: %s", algorithm, kind, exc)
    meta = metadata(scenarios[0], command="simulate", seeds=seeds, hypotheses=hyps)
    write_csv(cfg["out"], ["algorithm", "n", "snr_db", "h", "seed", "hypothesis",
                           "alarm_block", "censored"], rows, meta)
    _sidecar(cfg["out"], meta)


def cmd_curves(cfg) -> None:
    n = _check_n(cfg)
    snrs = _snr_list(cfg)
    if not snrs:
        raise DomainError("--snr-db is required")
    h = _threshold(cfg)
    algorithm = cfg["algorithm"]
    grid = _grid(cfg, GRID_RUNTIME_DB) if algorithm == GLR else None
    horizons = [int(round(v)) for v in _floats(cfg["horizon"] or str(10 * n), "--horizon")]
    seeds = _seeds(cfg)
    rows = []
    for snr_db in sorted(snrs):
        pts, _ = performance_curves(_model(cfg, snr_db), h, sorted(horizons), seeds, algorithm,
                                    grid, int(cfg["seed"]), cfg["sampler"],
                                    cfg["table1_override"], _spec(cfg))
        rows += [(p.horizon_samples, p.snr_db, p.p_fa, p.p_d, p.n_seeds, p.h) for p in pts]
    sc = Scenario(_model(cfg, snrs[0]), algorithm, h, math.inf, max(horizons) // n, grid,
                  int(cfg["seed"]), cfg["sampler"], cfg["table1_override"], _spec(cfg))
    meta = metadata(sc, command="curves", seeds=seeds, snr_db=sorted(snrs),
                    horizons=sorted(horizons))
    write_csv(cfg["out"], ["horizon_samples", "snr_db", "p_fa", "p_d", "n_seeds", "h"],
              rows, meta)
    _sidecar(cfg["out"], meta)


def cmd_trace(cfg) -> None:
    snr_db = _one_snr(cfg)
    model = _model(cfg, snr_db)
    h = math.inf if cfg["threshold"] is None else _threshold(cfg)
    grid = _grid(cfg, GRID_QD_DB)
    kc_text = cfg["change_block"]
    kc = 1.0 if kc_text is None else float(kc_text)
    blocks = int(cfg["blocks"])
    if blocks < 0:
        raise DomainError("--blocks must be >= 0")
    pair = trace_pair(int(cfg["seed"]), model, h, grid, blocks, kc, int(cfg["trial"]),
                      cfg["sampler"], cfg["table1_override"], _spec(cfg))
    cols = ["k", "tau", "g", "alarmed", "alpha_hat_db", "m_star"]
    out = cfg["out"]
    for name, trace in ((CUSUM, pair.cusum), (GLR, pair.glr)):
        rows = [(r.k, r.tau, r.g, r.alarmed, r.alpha_hat_db, r.m_star) for r in trace]
        meta = _meta(cfg, algorithm=name, glr_grid_db=grid, change_block=kc)
        path = out if out == "-" else f"{os.path.splitext(str(out))[0]}.{name}.csv"
        write_csv(path, cols, rows, meta)


HANDLERS = {"pdf": cmd_pdf, "roc": cmd_roc, "bounds": cmd_bounds, "design": cmd_design,
            "simulate": cmd_simulate, "curves": cmd_curves, "trace": cmd_trace}


def _join_signed(argv: Sequence[str]) -> List[str]:
    # "--snr-db -15,-10" -> "--snr-db=-15,-10" so argparse does not read a flag
    out: List[str] = []
    it = iter(argv)
    for tok in it:
        if tok in _SIGNED_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        argv = sys.argv[1:] if argv is None else list(argv)
        args = build_parser().parse_args(_join_signed(argv))
        cfg = resolve(args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        HANDLERS[args.command](cfg)
    except MmeqdError as exc:
        print(f"error: {exc.category}: {_one_line(exc)}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {_one_line(exc)}", file=sys.stderr)
        return 2
    return 0


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
