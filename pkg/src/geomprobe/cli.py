"""geomprobe command line.

Exit codes: 0 ok, 1 usage, 2 bad input, 3 numerical failure, 4 infeasible prior.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import circlefit, constructs, nullmodel, report
from .geometry import TargetConstant
from .stats import Weighting
from .survey import SOURCES, Measurement, SurveyError, load_site, sun_temple

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC, EXIT_PRIOR = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--site", help="survey file (default: shipped Sun Temple survey)")
    p.add_argument("--source", choices=("aerial", "ground", "both"), default="both")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--out", help="output path (default: stdout)")
    return p


def build_parser():
    common = _common()
    parser = _Parser(prog="geomprobe", description="Geometric construct and base-unit tests for site surveys.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="fit circles to digitized rim points")
    p.add_argument("--points", required=True)
    p.add_argument("--scale-px", type=float, required=True)
    p.add_argument("--scale-cm", type=float, required=True)
    p.add_argument("--scale-sigma-cm", type=float, default=0.0)
    p.add_argument("--trim", type=int, default=0, help="drop this many worst points per pass")

    p = sub.add_parser("test", parents=[common], help="test a single hypothesis")
    p.add_argument("--hypothesis", help="catalog id")
    p.add_argument("--catalog", help="catalog override file")
    p.add_argument("--numerator")
    p.add_argument("--denominator")
    p.add_argument("--target", help='e.g. "16/3", "sqrt2", "phi"')

    p = sub.add_parser("battery", parents=[common], help="run the full hypothesis catalog")
    p.add_argument("--catalog", help="catalog override file")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("unit", parents=[common], help="module width X and base unit L")
    p.add_argument("--weighting", choices=[w.value for w in Weighting], default="unweighted")
    p.add_argument("--ddof", type=int, choices=(0, 1), default=0)

    p = sub.add_parser("quantogram", parents=[common], help="cosine quantogram scan")
    p.add_argument("--lengths", help="file with one length (cm) per line; default: unit terms of the site")
    p.add_argument("--q-min", type=float, default=10.0)
    p.add_argument("--q-max", type=float, default=60.0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--null-sims", type=int, default=0)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo null model")
    p.add_argument("--prior", help="prior JSON (default: built-in prior)")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--workers", type=int, default=1)
    rule = p.add_mutually_exclusive_group()
    rule.add_argument("--z", type=float, help="hit when |measured - target|/sigma <= z (default 2)")
    rule.add_argument("--p-threshold", type=float, help="hit when p >= threshold")

    p = sub.add_parser("render", parents=[common], help="SVG construct overlay")
    p.add_argument("--constructs", default=",".join(report.LAYERS))
    p.add_argument("--px-per-m", type=float, default=10.0)
    return parser


def _site(args):
    return load_site(args.site) if args.site else sun_temple()


def _sources(args):
    return SOURCES if args.source == "both" else (args.source,)


def _emit(text, args):
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _catalog(args):
    if getattr(args, "catalog", None):
        return constructs.load_catalog(args.catalog)
    return constructs.builtin_catalog()


def cmd_fit(args):
    scale = circlefit.calibrate_scale(args.scale_px, Measurement(args.scale_cm, args.scale_sigma_cm))
    result = circlefit.fit_points_file(args.points, scale, trim=args.trim)
    result = {"scale_cm_per_px": {"value": scale.value, "sigma": scale.sigma}, "features": result}
    _emit(json.dumps(result, indent=2, sort_keys=True) + "\n", args)


def cmd_test(args):
    site = _site(args)
    if args.hypothesis:
        matches = [h for h in _catalog(args) if h.id == args.hypothesis]
        if not matches:
            raise UsageError(f"unknown hypothesis {args.hypothesis!r}")
        h = matches[0]
    elif args.numerator and args.denominator and args.target:
        h = constructs.Hypothesis("adhoc", f"{args.numerator} / {args.denominator}", "ratio",
                                  (args.numerator, args.denominator), TargetConstant.parse(args.target))
    else:
        raise UsageError("give --hypothesis, or --numerator, --denominator and --target")
    lines = []
    for s in _sources(args):
        o = constructs.evaluate_hypothesis(site, h, s)
        if o.result is None:
            lines.append(f"{h.id} {s}: skipped ({o.skipped})")
            continue
        r = o.result
        target = "" if r.target is None else f" vs {r.target}"
        lines.append(f"{h.id} {s}: {r.observed.value:.6g} ± {r.observed.sigma:.3g}{target}  "
                     f"chi2={r.chi2:.4f} dof={r.dof} p={r.p:.4f} ({report.rnd(r.p, 2)})")
    _emit("\n".join(lines) + "\n", args)


def cmd_battery(args):
    site = _site(args)
    battery = constructs.run_battery(site, _catalog(args), args.alpha, _sources(args), args.workers)
    units = [constructs.estimate_unit(site, s) for s in _sources(args) if _unit_ok(site, s)]
    _emit(report.emit_tables(site, battery, units, args.format), args)


def _unit_ok(site, source):
    return sum(site.has(t.key, source) for t in constructs.UNIT_TERMS) >= 2


def cmd_unit(args):
    site = _site(args)
    units = [constructs.estimate_unit(site, s, args.weighting, args.ddof) for s in _sources(args)]
    _emit(report.emit_tables(site, None, units, args.format), args)


def cmd_quantogram(args):
    if args.lengths:
        lengths = [float(x) for x in Path(args.lengths).read_text(encoding="utf-8").split()]
        label = args.lengths
    else:
        source = "aerial" if args.source == "both" else args.source
        est = constructs.estimate_unit(_site(args), source)
        lengths = [t.value.value for t in est.terms]
        label = f"unit terms ({source})"
    qg = constructs.quantogram_scan(lengths, args.q_min, args.q_max, args.steps)
    lines = [f"# quantogram of {len(lengths)} lengths from {label}",
             f"# q_best,{qg.q_best:.6f}", f"# score_best,{qg.score_best:.6f}"]
    if args.null_sims:
        peaks = constructs.quantogram_null(lengths, args.q_min, args.q_max, args.steps, args.null_sims,
                                           seed=args.seed)
        lines.append(f"# null_peak_p,{(peaks >= qg.score_best).mean():.6f}")
    lines.append("q,score")
    lines += [f"{q:.6f},{s:.6f}" for q, s in zip(qg.q, qg.scores)]
    _emit("\n".join(lines) + "\n", args)


def cmd_simulate(args):
    prior = nullmodel.load_prior(args.prior) if args.prior else nullmodel.NullPrior()
    if args.p_threshold is not None:
        rule = nullmodel.HitRule(args.p_threshold)
    else:
        rule = nullmodel.HitRule.within_sigma(2.0 if args.z is None else args.z)
    rep = nullmodel.estimate_fpr(prior, constructs.builtin_catalog(), args.trials, args.seed, rule,
                                 workers=args.workers)
    _emit(rep.to_csv(), args)
    if args.out:
        print(f"observed hits {rep.observed_hits}; P(hits >= observed) = {rep.tail_probability:.6g} "
              f"[{rep.ci[0]:.6g}, {rep.ci[1]:.6g}]")


def cmd_render(args):
    layers = tuple(x for x in args.constructs.split(",") if x)
    source = "aerial" if args.source == "both" else args.source
    svg, _ = report.render_overlay(_site(args), layers, source=source, px_per_m=args.px_per_m)
    _emit(svg, args)


COMMANDS = {"fit": cmd_fit, "test": cmd_test, "battery": cmd_battery, "unit": cmd_unit,
            "quantogram": cmd_quantogram, "simulate": cmd_simulate, "render": cmd_render}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="geomprobe: %(levelname)s: %(message)s", level=logging.WARNING)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"geomprobe: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except nullmodel.InfeasiblePriorError as exc:
        print(f"geomprobe: infeasible prior: {exc}", file=sys.stderr)
        return EXIT_PRIOR
    except circlefit.ConvergenceError as exc:
        print(f"geomprobe: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SurveyError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"geomprobe: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
