"""Command line front end.

    tanfix run --config exp.toml [--out trace.csv] [--seed N] [--jobs N] [--trace-intermediates]
    tanfix verify space --config exp.toml
    tanfix verify mapping --config exp.toml
    tanfix center TRACE.csv --config exp.toml

Exit codes: 0 ok, 1 verification violations, 2 configuration error,
3 runtime domain violation.
"""

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from tanfix import config as cfgmod
from tanfix.analysis import asymptotic_center, classify, delta_converged
from tanfix.axioms import check_uc_inequality, check_w_axioms
from tanfix.errors import ConfigError, DomainError
from tanfix.iteration import run
from tanfix.mappings import DEFECT_TOL, estimate_constants, tan_defect
from tanfix.spaces import DISK, make_rng
from tanfix.tracefile import read_trace, write_trace

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_DOMAIN = 0, 1, 2, 3

log = logging.getLogger("tanfix")


def _out(lines, path=None):
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if path is not None:
        Path(path).write_text(text)


def _run_one(config_path, out, seed, trace_intermediates):
    settings = cfgmod.load(config_path)
    exp = cfgmod.build_experiment(settings, seed=seed, trace_intermediates=trace_intermediates or None)
    it = exp.iteration
    trace_path = out or settings.get("output.trace", str(Path(config_path).with_suffix(".csv")), "str")
    summary_path = settings.get("output.summary", str(Path(trace_path).with_suffix(".summary.txt")), "str")

    trace = run(it)
    write_trace(trace_path, trace, exp.space)

    lines = [f"config: {config_path}", f"trace: {trace_path}", f"steps: {len(trace)}",
             f"stop_reason: {trace.stop_reason}", f"final point: {trace.last.coords}"]
    opts = exp.analysis_options()
    try:
        rep = classify(exp.space, trace, it.K, opts["subsequences"], opts["delta_tol"], opts["strong_tol"],
                       seqs=[T.seq for T in it.family], reference=it.reference, search=opts["search"])
        lines += list(rep.lines())
    except ConfigError as err:
        lines.append(f"classification: undetermined ({err})")
    return lines, summary_path


def cmd_run(args):
    paths = args.config
    if len(paths) > 1 and args.out:
        raise ConfigError("--out needs a single --config", key="--out")
    jobs = max(1, args.jobs)
    if jobs == 1 or len(paths) == 1:
        results = [_run_one(p, args.out, args.seed, args.trace_intermediates) for p in paths]
    else:
        with ProcessPoolExecutor(jobs) as pool:
            futs = [pool.submit(_run_one, p, None, args.seed, args.trace_intermediates) for p in paths]
            results = [f.result() for f in futs]
    for lines, summary in results:
        _out(lines, summary)
    return EXIT_OK


def cmd_verify(args):
    settings = cfgmod.load(args.config[0])
    seed = args.seed if args.seed is not None else settings.get("verify.seed", 1, "int")
    if args.target == "space":
        return _verify_space(settings, seed, args.out)
    return _verify_mapping(settings, seed, args.out)


def _verify_space(settings, seed, out):
    exp = cfgmod.build_experiment(settings, with_iteration=False)
    n = settings.get("verify.samples", 10_000, "int")
    if n < 1:
        raise ConfigError("must be >= 1", key="verify.samples")
    w = check_w_axioms(exp.space, n, seed)
    uc = check_uc_inequality(exp.space, n, seed)
    lines = list(w.lines()) + list(uc.lines())
    ok = w.passed
    if exp.space.point_kind == DISK:
        # eps^2/8 is a working value on the disk: reported, not enforced
        lines.append("note: uniform convexity on poincare_disk is informational")
    else:
        ok = ok and uc.passed
    lines.append("result: " + ("pass" if ok else "FAIL"))
    _out(lines, out)
    return EXIT_OK if ok else EXIT_VIOLATION


def _verify_mapping(settings, seed, out):
    exp = cfgmod.build_experiment(settings, with_iteration=False)
    family = cfgmod.build_family(settings, exp.space, validate=False)
    if not family:
        raise ConfigError("at least one mapping is required", key="mapping.1.kind")
    n_max = settings.get("verify.n_max", 20, "int")
    pairs = settings.get("verify.pairs", 1000, "int")
    radius = settings.get("verify.radius", 1.0, "float")
    if n_max < 1 or pairs < 1:
        raise ConfigError("verify.n_max and verify.pairs must be >= 1", key="verify")
    ok = True
    lines = []
    for i, T in enumerate(family, 1):
        tag = f"mapping {i} ({T.kind}{'' if T.verified else ', unverified'})"
        rng = make_rng([seed, i])
        pts = [(exp.space.sample(rng, T.domain, radius), exp.space.sample(rng, T.domain, radius))
               for _ in range(pairs)]
        if T.self_map:
            escaped = sum(not T.domain.contains(T._map(x), 1e-12) for x, _ in pts)
            lines.append(f"{tag} self-map check: {escaped} of {pairs} images outside the domain")
            ok = ok and escaped == 0
        worst_all = float("-inf")
        for n in range(1, n_max + 1):
            worst = max(tan_defect(T, x, y, n) for x, y in pts)
            worst_all = max(worst_all, worst)
            mark = "ok" if worst <= DEFECT_TOL else "VIOLATED"
            lines.append(f"{tag} n={n}: max TAN defect {worst:.6e} {mark}")
        ok = ok and worst_all <= DEFECT_TOL
        probs = T.seq.problems(max(1000, n_max))
        for p in probs:
            lines.append(f"{tag} sequences: {p}")
        ok = ok and not probs
        if T.domain.bounded:
            est = estimate_constants(T, n_max, min(pairs, 500), seed)
            lines.append(f"{tag} estimated L_n: " + " ".join(f"{v:.4g}" for v in est.lipschitz))
    lines.append("result: " + ("pass" if ok else "FAIL"))
    _out(lines, out)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_center(args):
    settings = cfgmod.load(args.config[0])
    exp = cfgmod.build_experiment(settings, with_iteration=False)
    trace = read_trace(args.trace, exp.space)
    opts = exp.analysis_options()
    c = asymptotic_center(exp.space, trace.points, exp.K, opts["tail"], **opts["search"])
    agree, centers = delta_converged(exp.space, trace, exp.K, opts["subsequences"], opts["delta_tol"],
                                     opts["search"])
    lines = [f"center: {list(c.center.coords)}", f"radius: {c.radius!r}", f"converged: {c.converged}",
             f"search_evals: {c.search_evals}"]
    lines += [f"subsequence {i} center: {list(s.center.coords)}" for i, s in enumerate(centers, 1)]
    lines.append(f"delta: {agree}")
    _out(lines, args.out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="tanfix", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", action="append", required=True, help="experiment config file")
        sp.add_argument("--out", help="output path (trace CSV for run, report otherwise)")
        sp.add_argument("--seed", type=int, help="override the sampling/schedule seed")
        sp.add_argument("--jobs", type=int, default=1, help="parallel workers for several --config files")
        sp.add_argument("--trace-intermediates", action="store_true", help="record y_1n..y_(m-1)n")

    sp = sub.add_parser("run", help="run the iteration and write a trace CSV")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("verify", help="check space axioms or mapping constants")
    sp.add_argument("target", choices=("space", "mapping"))
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("center", help="asymptotic center and delta verdict of a stored trace")
    sp.add_argument("trace")
    common(sp)
    sp.set_defaults(func=cmd_center)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        log.error("configuration error: %s", err)
        return EXIT_CONFIG
    except DomainError as err:
        log.error("domain violation: %s", err)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
