"""Command-line front end: ``cr-henkin <command> --config FILE``.

Exit codes: 0 all thresholds met, 1 a threshold failed, 2 configuration or
usage error, 3 numerical, data or precondition error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import _accel, studies
from .config import ExperimentConfig, build_domain, compile_h, load_config, parse_config
from .errors import ConfigError, CRError
from .grids import build_boundary_grid, export_grid_csv
from .kernels import export_samples_csv
from .lelong import Divisor, load_divisor

log = logging.getLogger("cr_henkin")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class Report:
    """Summary lines, echoed to stdout and written to ``<command>_summary.txt``."""

    def __init__(self, out: Path, command: str):
        self.out, self.command, self.lines = out, command, []

    def __call__(self, msg: str = ""):
        self.lines.append(msg)
        print(msg)

    def verdict(self, ok: bool) -> int:
        self(f"verdict: {'PASS' if ok else 'FAIL'}")
        (self.out / f"{self.command}_summary.txt").write_text("\n".join(self.lines) + "\n")
        return EXIT_PASS if ok else EXIT_FAIL


def _rng(cfg: ExperimentConfig) -> np.random.Generator:
    return np.random.default_rng(cfg.seed)


def _g(x: float) -> str:
    return f"{x:.4g}"


# ------------------------------------------------------------------ commands

def cmd_verify_dbar(cfg: ExperimentConfig, out: Path, args) -> int:
    dom = build_domain(cfg)
    g, d = cfg["grids"], cfg["dbar"]
    st = studies.dbar_study(dom, g["resolutions"], d["forms"], d["points"], d["depth"],
                            d["fd_step"], _rng(cfg), d["tolerance"], d["fraction"],
                            g["volume_resolutions"], g["volume_radial"])
    studies.write_csv(out / "verify_dbar_points.csv", st.rows_header, st.rows())
    studies.write_csv(out / "verify_dbar_summary.csv", st.summary_header, st.summary())
    rep = Report(out, "verify_dbar")
    rep(f"domain {dom.name}: dbar residuals, tolerance {_g(d['tolerance'])}")
    for row, lv in zip(st.summary(), st.levels):
        rep(f"  {row[1]:8s} n={row[2]:3d}  max {_g(row[3])}  median {_g(row[4])}  "
            f"within tol {row[5]:.3f}  ({lv.seconds:.0f}s)")
    for f in st.forms:
        rep(f"  {f}: decreasing {st.decreasing(f)}, passed {st.form_passed(f)}")
    return rep.verdict(st.passed)


def cmd_verify_dbarb(cfg: ExperimentConfig, out: Path, args) -> int:
    dom = build_domain(cfg)
    res, b = cfg["grids"]["resolutions"], cfg["dbarb"]
    rng = _rng(cfg)
    rep = Report(out, "verify_dbarb")
    if b["incompatible"]:
        studies.check_incompatible(dom, res[-1])       # raises DataError
        rep("incompatible form accepted by the gate")
        return rep.verdict(False)
    top = tuple(res[-2:])
    st = studies.norm_study(dom, top, b["eps"], b["p"], b["forms"], b["degree"], rng,
                            b["eval_resolution"], b["eval_points"], change=b["change"],
                            zero=b["zero_form"])
    studies.write_csv(out / "verify_dbarb_ratios.csv", st.rows_header, st.rows())
    studies.write_csv(out / "verify_dbarb_summary.csv", st.summary_header, st.summary())
    rep(f"domain {dom.name}: Shaw solution norm ratios over {st.eps_ratios.shape[1]} forms")
    for row in st.summary():
        rep(f"  n={row[0]:3d} {row[1]:9s} {_g(row[2]):>6s}  max {_g(row[3])}  median {_g(row[4])}")
    ch = st.changes()
    if len(ch):
        rep(f"  largest change between n={top[0]} and n={top[-1]}: {_g(float(ch.max()))} "
            f"(limit {_g(b['change'])})")
    if not b["zero_form"]:
        e = min(b["eps"])
        if b["residual_points"] > 0:
            tp = studies.tangential_probe(dom, res[-1], b["residual_points"], e, rng)
            studies.write_csv(out / "verify_dbarb_tangential.csv", studies.POINT_HEADER,
                              studies.point_rows(tp.points, tp.values, tp.residuals, e, res[-1]))
            rep(f"  tangential residual of T_b(dbar_b zb1): median {_g(float(np.median(tp.residuals)))}"
                f"  max {_g(float(tp.residuals.max()))}")
        if b["lambda_curves"] > 0:
            lam = studies.lambda_probe(dom, res[-1], e, b["lambda_curves"], rng)
            rep(f"  Lambda^f probe of T_b(dbar_b zb1): {_g(lam)}")
    return rep.verdict(st.passed)


def cmd_lemma_scan(cfg: ExperimentConfig, out: Path, args) -> int:
    dom = build_domain(cfg)
    lm = cfg["lemma"]
    rng = _rng(cfg)
    rep = Report(out, "lemma_scan")
    ok = True
    for which in lm["which"]:
        st = studies.lemma_study(dom, which, lm["samples"], lm["k"], rng, lm["factor"])
        export_samples_csv(st.batch, out / f"lemma{which}_samples.csv")
        rep(f"lemma {which} on {dom.name}: min ratio {_g(st.min_ratio)} over {len(st.batch)} pairs,"
            f" {_g(st.min_ratio_double)} over {len(st.batch2)}")
        ok &= st.passed
    return rep.verdict(ok)


def cmd_type_report(cfg: ExperimentConfig, out: Path, args) -> int:
    t = cfg["type"]
    rows = studies.type_report(t["exponential"], t["monomial"], t["d"], t["s"])
    studies.write_csv(out / "type_report.csv", studies.TYPE_HEADER, (r.row() for r in rows))
    rep = Report(out, "type_report")
    for r in rows:
        val = "divergent" if r.divergent else _g(r.value)
        rep(f"  {r.kind:16s} {_g(r.param):>5s} d={_g(r.d):5s} {val:>10s}  expected {_g(r.expected)}"
            f"  {'ok' if r.ok else 'MISMATCH'}")
    return rep.verdict(all(r.ok for r in rows))


def cmd_nevanlinna(cfg: ExperimentConfig, out: Path, args) -> int:
    dom = build_domain(cfg)
    nv = cfg["nevanlinna"]
    expr = args.h if getattr(args, "h", None) else nv["h"]
    try:
        h = compile_h(expr)
    except ValueError as exc:
        raise ConfigError(str(exc), cfg.line_of("nevanlinna", "h"), "nevanlinna.h") from exc
    path = args.divisor if getattr(args, "divisor", None) else nv["divisor"]
    divisor = load_divisor(cfg.relative(path), dom) if path else Divisor(())
    rep_ = studies.nevanlinna_study(
        h, divisor, dom, epsilon=nv["epsilon"], s_list=nv["levels"],
        resolution=nv["resolution"], vresolution=nv["volume_resolution"],
        level_resolution=nv["level_resolution"], threshold=nv["threshold"],
        blaschke_budget=nv["blaschke_budget"], rng=_rng(cfg))
    studies.write_csv(out / "nevanlinna.csv", studies.NEVANLINNA_HEADER,
                      studies.nevanlinna_rows(rep_))
    rep = Report(out, "nevanlinna")
    rep(f"h = {expr} on {dom.name}; Blaschke sum {_g(rep_.blaschke)}, type integral "
        f"{_g(rep_.type_integral)}, mollifier eps {_g(rep_.epsilon)}")
    for s, iu, il, g in studies.nevanlinna_rows(rep_):
        rep(f"  s={_g(s):6s} int|U| {_g(iu):>10s}  int|log|h|| {_g(il):>10s}  sup|g| {_g(g)}")
    rep(f"  max/min {_g(rep_.ratio)} (threshold {_g(rep_.threshold)})")
    return rep.verdict(rep_.bounded)


def cmd_grid_export(cfg: ExperimentConfig, out: Path, args) -> int:
    dom = build_domain(cfg)
    ge = cfg["grid_export"]
    G = build_boundary_grid(dom, eps=ge["eps"], resolution=ge["resolution"])
    export_grid_csv(G, out / "grid.csv")
    rep = Report(out, "grid_export")
    rep(f"{dom.name}: {G.size} nodes on rho = {_g(-G.level)}, area {_g(G.area)}")
    return rep.verdict(True)


COMMANDS = {
    "verify-dbar": cmd_verify_dbar,
    "verify-dbarb": cmd_verify_dbarb,
    "lemma-scan": cmd_lemma_scan,
    "type-report": cmd_type_report,
    "nevanlinna": cmd_nevanlinna,
    "grid-export": cmd_grid_export,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cr-henkin",
                                 description="Integral-formula experiments for dbar, dbar_b and "
                                             "the Poincare-Lelong equation on model domains.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI experiment file (defaults if omitted)")
        p.add_argument("--seed", type=int, help="overrides [run] seed")
        p.add_argument("--threads", type=int, help="overrides [run] threads")
        p.add_argument("--out", type=Path, help="output directory (overrides [run] out)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "nevanlinna":
            p.add_argument("--divisor", help="divisor file (overrides [nevanlinna] divisor)")
            p.add_argument("--h", help="holomorphic function (overrides [nevanlinna] h)")
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else parse_config("")
        run = cfg["run"]
        if args.seed is not None:
            run["seed"] = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("threads must be positive", None, "--threads")
            run["threads"] = args.threads
        out = args.out if args.out is not None else cfg.relative(run["out"])
        out.mkdir(parents=True, exist_ok=True)
        _accel.set_threads(run["threads"])
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        where = f"{args.config}: " if args.config else ""
        print(f"config error: {where}{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CRError as exc:
        print(f"numeric error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
