"""Benchmark runner: seeded experiment batches, machine-readable run records,
scheme comparisons, and the feasibility-drift demonstration, exposed both as
functions and through the ``stiefel-bench`` command line."""

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .manifold import random_stiefel
from .problems import (
    LowRankCorrProblem,
    FixedEntrySet,
    TraceEigenProblem,
    ex3_matrix,
    gen_ex2,
    gen_ex3,
    heterogeneous_problem,
    load_matrix,
    modified_pca_init,
    sample_fixed_entries,
)
from .auglag import AugLagConfig, auglag_solve
from .retractions import GTAU_SENSITIVE, RetractionScheme, SCHEME_KINDS
from .solver import SolverConfig, solve

__all__ = [
    "RunRecord",
    "RECORD_FIELDS",
    "ENV_OUT_DIR",
    "run_experiment",
    "compare_schemes",
    "drift_demo",
    "aggregate_records",
    "write_records",
    "read_records",
    "main",
]

ENV_OUT_DIR = "STIEFELBB_OUT_DIR"

RECORD_FIELDS = (
    "problem_id",
    "n",
    "p",
    "scheme",
    "rho",
    "gtau",
    "seed",
    "stop_reason",
    "f_initial",
    "f_final",
    "residual",
    "feasi",
    "nfge",
    "iters",
    "wall_ms",
)

CLI_SCHEMES = ("new", "polar", "qr", "gp", "wenyin", "geodesic", "lowrank")

PROBLEM_IDS = ("eigen", "balogh", "ex2", "ex3", "nlcm", "ex10")
_PROBLEM_ALIASES = {"heterogeneous": "balogh"}


@dataclass
class RunRecord:
    """One solve, serialized losslessly as JSONL or CSV.

    `residual` is the problem's natural reported residual: the final ||D||_F
    for plain manifold problems, the correlation residual ||H o (V^T V -
    C)||_F for the low-rank correlation family.
    """

    problem_id: str
    n: int
    p: int
    scheme: str
    rho: float
    gtau: str
    seed: int
    stop_reason: str
    f_initial: float
    f_final: float
    residual: float
    feasi: float
    nfge: float
    iters: float
    wall_ms: float

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in RECORD_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        kw = dict(d)
        for key in ("n", "p", "seed"):
            kw[key] = int(kw[key])
        for key in ("rho", "f_initial", "f_final", "residual", "feasi", "wall_ms"):
            kw[key] = float(kw[key])
        for key in ("nfge", "iters"):
            v = float(kw[key])
            kw[key] = int(v) if v.is_integer() else v
        return cls(**kw)


def _csv_cell(v):
    return repr(v) if isinstance(v, float) else str(v)


def write_records(records: Sequence[RunRecord], stream, fmt="jsonl"):
    """Serialize records (one per line for jsonl; header + rows for csv)."""
    if fmt == "jsonl":
        for r in records:
            stream.write(json.dumps(r.to_dict()) + "\n")
    elif fmt == "csv":
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_csv_cell(getattr(r, f)) for f in RECORD_FIELDS])
    else:
        raise ValueError(f"unknown format {fmt!r}, expected 'jsonl' or 'csv'")


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            return text


def read_records(stream, fmt="jsonl") -> List[RunRecord]:
    """Parse records previously produced by write_records."""
    if isinstance(stream, str):
        with open(stream, "r", encoding="utf-8") as fh:
            return read_records(fh, fmt)
    if fmt == "jsonl":
        return [
            RunRecord.from_dict(json.loads(line))
            for line in stream
            if line.strip()
        ]
    if fmt == "csv":
        reader = csv.DictReader(stream)
        return [
            RunRecord.from_dict({k: _parse_cell(v) for k, v in row.items()})
            for row in reader
        ]
    raise ValueError(f"unknown format {fmt!r}")


def aggregate_records(records: Sequence[RunRecord]) -> List[RunRecord]:
    """Arithmetic means per (problem, n, p, scheme, rho, gtau) group, in
    first-seen order; aggregates carry an 'a.' prefix, seed -1, and
    stop_reason 'mean'."""
    groups = {}
    for r in records:
        key = (r.problem_id, r.n, r.p, r.scheme, r.rho, r.gtau)
        groups.setdefault(key, []).append(r)
    out = []
    for (pid, n, p, scheme, rho, gtau), rs in groups.items():
        m = len(rs)

        def mean(field):
            val = sum(float(getattr(r, field)) for r in rs) / m
            return int(val) if val.is_integer() else val

        out.append(
            RunRecord(
                problem_id="a." + pid,
                n=n,
                p=p,
                scheme=scheme,
                rho=rho,
                gtau=gtau,
                seed=-1,
                stop_reason="mean",
                f_initial=float(mean("f_initial")),
                f_final=float(mean("f_final")),
                residual=float(mean("residual")),
                feasi=float(mean("feasi")),
                nfge=mean("nfge"),
                iters=mean("iters"),
                wall_ms=float(mean("wall_ms")),
            )
        )
    return out


def _tridiag(n):
    """Symmetric tridiagonal (2, -1) matrix; its top eigenvalues cluster, so
    BB iterations keep moving for a long time — ideal for drift studies."""
    a = np.zeros((n, n))
    np.fill_diagonal(a, 2.0)
    idx = np.arange(n - 1)
    a[idx, idx + 1] = -1.0
    a[idx + 1, idx] = -1.0
    return a


def drift_demo(n, p, steps, controlled, seed=0) -> List[float]:
    """Feasibility error per iteration over a fixed-length run of the new
    scheme (controlled W-hat vs plain W) on a clustered-spectrum symmetric
    problem. Returns one value per completed iteration (empty for steps=0)."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    prob = TraceEigenProblem(_tridiag(n), p)
    x0 = random_stiefel(n, p, seed)
    cfg = SolverConfig(
        scheme=RetractionScheme("new", "linear", feasibility_control=bool(controlled)),
        max_iter=steps,
        check_convergence=False,
        track_feasibility=True,
        seed=seed,
    )
    rep = solve(prob, x0, cfg)
    return rep.feasibility_trace[1:]


def compare_schemes(problem, configs, seeds, x0=None) -> List[dict]:
    """Paired scheme comparison: every configuration solves the same problem
    from the same per-seed starts; the last configuration is the baseline of
    the saved-ratio statistic 100 (a.nfe - a.nfe_base) / a.nfe_base."""
    configs = list(configs)
    if len(configs) < 2:
        raise ValueError("need at least two configurations to compare")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    rows = []
    for cfg in configs:
        nfes, finals, its = [], [], []
        for s in seeds:
            rep = solve(problem, x0, replace(cfg, seed=int(s)))
            nfes.append(rep.nfge)
            finals.append(rep.f_final)
            its.append(rep.iters)
        m = float(len(seeds))
        rows.append(
            {
                "scheme": cfg.scheme.kind,
                "rho": cfg.rho,
                "gtau": cfg.scheme.gtau,
                "a_nfe": sum(nfes) / m,
                "a_f_final": sum(finals) / m,
                "a_iters": sum(its) / m,
            }
        )
    base = rows[-1]["a_nfe"]
    for row in rows:
        row["a_s_ratio"] = 100.0 * (row["a_nfe"] - base) / base
    return rows


# ----------------------------------------------------------------------------
# experiment assembly


@dataclass
class _Task:
    problem_id: str
    problem: object
    x0: Optional[np.ndarray]
    n: int
    p: int
    seed: int
    cfg: SolverConfig
    fes: Optional[FixedEntrySet] = None
    auglag_cfg: Optional[AugLagConfig] = None
    is_corr: bool = False


def _solver_config(args, seed) -> SolverConfig:
    scheme = RetractionScheme(
        kind=args.scheme,
        gtau=args.gtau or "linear",
        feasibility_control=not args.uncontrolled,
    )
    kw = {}
    if args.eps is not None:
        kw["eps"] = args.eps
    if args.eps_x is not None:
        kw["eps_x"] = args.eps_x
    if args.eps_f is not None:
        kw["eps_f"] = args.eps_f
    if args.max_iter is not None:
        kw["max_iter"] = args.max_iter
    return SolverConfig(rho=args.rho, scheme=scheme, seed=seed, **kw)


def _resolve_problem_id(args) -> str:
    positional = getattr(args, "problem_pos", None)
    flagged = args.problem
    if positional and flagged and positional != flagged:
        raise SystemExit(
            f"error: conflicting problem ids {positional!r} and {flagged!r}"
        )
    pid = positional or flagged
    if pid is None:
        raise SystemExit("error: no problem selected (pass an id or --problem)")
    pid = _PROBLEM_ALIASES.get(pid, pid)
    if pid not in PROBLEM_IDS:
        raise SystemExit(
            f"error: unknown problem {pid!r}; choose from {', '.join(PROBLEM_IDS)}"
        )
    return pid


def _parse_ranks(args, default):
    if args.ranks is not None and args.p is not None:
        raise SystemExit("error: pass either --ranks or --p, not both")
    if args.ranks is not None:
        try:
            ranks = [int(t) for t in str(args.ranks).split(",") if t.strip()]
        except ValueError:
            raise SystemExit(f"error: bad --ranks value {args.ranks!r}") from None
        if not ranks:
            raise SystemExit("error: empty --ranks list")
        return ranks
    if args.p is not None:
        return [int(args.p)]
    return [default]


def build_tasks(args) -> List[_Task]:
    """Expand the parsed flags into one task per (problem, rank, repetition)."""
    pid = _resolve_problem_id(args)
    if args.gtau is not None and args.scheme not in GTAU_SENSITIVE:
        print(
            f"warning: --gtau is ignored by scheme {args.scheme!r}",
            file=sys.stderr,
        )
    fes = None
    if args.fixed_entries:
        fes = FixedEntrySet.from_text(args.fixed_entries)

    tasks: List[_Task] = []
    base_seed = args.seed

    def corr_tasks(problem_for_rank, default_n, default_rank):
        n = args.n or default_n
        ranks = _parse_ranks(args, default_rank)
        for r in ranks:
            prob = problem_for_rank(n, r)
            pca = modified_pca_init(prob.c, r) if args.init == "pca" else None
            for rep in range(args.repeat):
                seed = base_seed + rep
                task = _Task(
                    problem_id=pid,
                    problem=prob,
                    x0=pca,
                    n=prob.n,
                    p=r,
                    seed=seed,
                    cfg=_solver_config(args, seed),
                    is_corr=True,
                )
                if fes is not None or pid == "ex10":
                    task.fes = (
                        fes
                        if fes is not None
                        else sample_fixed_entries(prob.n, n_e=3, seed=base_seed)
                    )
                    task.auglag_cfg = AugLagConfig(
                        rho=args.rho,
                        scheme=task.cfg.scheme,
                        seed=seed,
                    )
                tasks.append(task)

    if pid == "eigen":
        n = args.n or 100
        if args.matrix_file:
            a = load_matrix(args.matrix_file)
            a = 0.5 * (a + a.T)
            n = a.shape[0]
        else:
            rng = np.random.default_rng(base_seed)
            a = rng.standard_normal((n, n))
            a = (a + a.T) / (2.0 * np.sqrt(n))
        for p in _parse_ranks(args, 4):
            prob = TraceEigenProblem(a, p)
            for rep in range(args.repeat):
                seed = base_seed + rep
                tasks.append(
                    _Task(pid, prob, None, n, p, seed, _solver_config(args, seed))
                )
    elif pid == "balogh":
        n = args.n or 100
        for p in _parse_ranks(args, 5):
            shared = (
                heterogeneous_problem(n, p, "minus-one")
                if args.l_mode == "minus-one"
                else None
            )
            for rep in range(args.repeat):
                seed = base_seed + rep
                prob = shared or heterogeneous_problem(
                    n, p, "random", seed=100000 + seed
                )
                tasks.append(
                    _Task(pid, prob, None, n, p, seed, _solver_config(args, seed))
                )
    elif pid == "ex2":
        corr_tasks(lambda n, r: gen_ex2(n, r), 500, 5)
    elif pid == "ex3":
        corr_tasks(
            lambda n, r: gen_ex3(n, weighted=args.weighted, seed=base_seed, r=r),
            500,
            5,
        )
    elif pid == "nlcm":
        if not args.matrix_file:
            raise SystemExit("error: problem 'nlcm' needs --matrix-file")
        c = load_matrix(args.matrix_file)
        corr_tasks(lambda n, r: LowRankCorrProblem(c, r, name="nlcm"), c.shape[0], 5)
    elif pid == "ex10":
        corr_tasks(
            lambda n, r: LowRankCorrProblem(ex3_matrix(n), r, name="ex10"), 200, 10
        )
    return tasks


def _sphere_feasibility(v) -> float:
    return float(np.linalg.norm(np.einsum("ij,ij->j", v, v) - 1.0))


def _run_task(task: _Task) -> RunRecord:
    if task.fes is not None:
        t0 = time.perf_counter()
        alr = auglag_solve(task.problem, task.fes, task.auglag_cfg, v0=task.x0)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        return RunRecord(
            problem_id=task.problem_id,
            n=task.n,
            p=task.p,
            scheme=task.cfg.scheme.kind,
            rho=task.cfg.rho,
            gtau=task.cfg.scheme.gtau,
            seed=task.seed,
            stop_reason=alr.stop_reason,
            f_initial=alr.f_initial,
            f_final=alr.theta_final,
            residual=alr.nlcmres_final,
            feasi=_sphere_feasibility(alr.v_final),
            nfge=alr.nfge_total,
            iters=alr.iters_total,
            wall_ms=wall_ms,
        )
    rep = solve(task.problem, task.x0, task.cfg)
    residual = (
        task.problem.nlcmres(rep.x_final) if task.is_corr else rep.residual_final
    )
    return RunRecord(
        problem_id=task.problem_id,
        n=task.n,
        p=task.p,
        scheme=task.cfg.scheme.kind,
        rho=task.cfg.rho,
        gtau=task.cfg.scheme.gtau,
        seed=task.seed,
        stop_reason=rep.stop_reason,
        f_initial=rep.f_initial,
        f_final=rep.f_final,
        residual=residual,
        feasi=rep.feasi,
        nfge=rep.nfge,
        iters=rep.iters,
        wall_ms=rep.wall_time * 1000.0,
    )


def run_experiment(args) -> List[RunRecord]:
    """Execute all tasks for the parsed flags; records in task order followed
    by the aggregate rows."""
    tasks = build_tasks(args)
    jobs = max(1, int(args.jobs or 1))
    if jobs == 1 or len(tasks) <= 1:
        records = [_run_task(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_task, tasks))
    return records + aggregate_records(records)


# ----------------------------------------------------------------------------
# command line


def _add_common_flags(p):
    p.add_argument("--problem", choices=PROBLEM_IDS + tuple(_PROBLEM_ALIASES))
    p.add_argument("--ranks", help="comma list of ranks / column counts, e.g. 5,20,50")
    p.add_argument("--n", type=int, help="problem dimension")
    p.add_argument("--p", type=int, help="single rank / column count")
    p.add_argument("--eps", type=float, help="relative residual tolerance")
    p.add_argument("--eps-x", dest="eps_x", type=float, help="iterate-change tolerance")
    p.add_argument("--eps-f", dest="eps_f", type=float, help="value-change tolerance")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeat", type=int, default=1, help="repetitions (seed, seed+1, ...)")
    p.add_argument("--jobs", type=int, default=1, help="parallel solves")
    p.add_argument("--matrix-file", dest="matrix_file",
                   help="MatrixMarket/.npy/text matrix for 'eigen' or 'nlcm'")
    p.add_argument("--fixed-entries", dest="fixed_entries",
                   help="triplet file 'i j q' of prescribed entries (runs the outer loop)")
    p.add_argument("--weighted", action="store_true",
                   help="random symmetric weights for the long-range instance")
    p.add_argument("--l-mode", dest="l_mode", choices=("minus-one", "random"),
                   default="minus-one", help="planted-value mode for 'balogh'")
    p.add_argument("--init", choices=("pca", "random"), default="pca",
                   help="start for correlation problems")
    p.add_argument("--uncontrolled", action="store_true",
                   help="disable the drift-safe W-hat construction")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="stiefel-bench",
        description="Benchmark runner for feasible BB optimization over "
        "orthogonality constraints.",
    )
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="solve a problem batch and emit run records")
    run.add_argument("problem_pos", nargs="?", metavar="PROBLEM",
                     help=f"problem id: {', '.join(PROBLEM_IDS)}")
    run.add_argument("--scheme", choices=CLI_SCHEMES, default="new")
    run.add_argument("--rho", type=float, default=0.25,
                     help="descent-direction parameter (0.25 Euclidean, 0.5 canonical)")
    run.add_argument("--gtau", choices=("linear", "expdamped"))
    run.add_argument("--config", help="JSON file of flag defaults")
    _add_common_flags(run)

    comp = sub.add_parser("compare", help="paired comparison across configurations")
    comp.add_argument("problem_pos", nargs="?", metavar="PROBLEM")
    comp.add_argument("--scheme", default="new",
                      help="comma list of scheme kinds (baseline last)")
    comp.add_argument("--rho", default="0.25",
                      help="comma list of descent-direction parameters")
    comp.add_argument("--gtau", help="comma list of g(tau) names")
    comp.add_argument("--config", help="JSON file of flag defaults")
    _add_common_flags(comp)

    drift = sub.add_parser("drift", help="feasibility drift: controlled vs plain W")
    drift.add_argument("--n", type=int, default=2000)
    drift.add_argument("--p", type=int, default=6)
    drift.add_argument("--steps", type=int, default=2000)
    drift.add_argument("--seed", type=int, default=0)
    drift.add_argument("--out", help="output path (stdout when omitted)")
    parser.subcommands = {"run": run, "compare": comp, "drift": drift}
    return parser


def _open_out(args, default_name):
    out = getattr(args, "out", None)
    env = os.environ.get(ENV_OUT_DIR)
    if out is None:
        if not env:
            return sys.stdout, False
        path = os.path.join(env, default_name)
    elif not os.path.isabs(out) and env:
        path = os.path.join(env, out)
    else:
        path = out
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    return open(path, "w", encoding="utf-8"), True


def _apply_config_file(parser, argv):
    """Pre-scan for --config and install its JSON contents as defaults on the
    active subcommand's parser (subparser defaults would otherwise win)."""
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
        else:
            continue
        with open(path, "r", encoding="utf-8") as fh:
            defaults = json.load(fh)
        if not isinstance(defaults, dict):
            raise SystemExit(f"error: {path} must hold a JSON object")
        target = parser.subcommands.get(argv[0], parser) if argv else parser
        target.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
        return


def _cmd_run(args) -> int:
    records = run_experiment(args)
    stream, close = _open_out(args, f"stiefelbb-run.{args.format}")
    try:
        write_records(records, stream, args.format)
    finally:
        if close:
            stream.close()
    singles = [r for r in records if not r.problem_id.startswith("a.")]
    fails = sum(1 for r in singles if r.stop_reason == "LineSearchFail")
    print(
        f"{len(singles)} solve(s), {fails} line-search failure(s)",
        file=sys.stderr,
    )
    return 0 if fails == 0 else 1


def _cmd_compare(args) -> int:
    kinds = [t for t in str(args.scheme).split(",") if t.strip()]
    for k in kinds:
        if k not in CLI_SCHEMES:
            raise SystemExit(f"error: unknown scheme {k!r}")
    rhos = [float(t) for t in str(args.rho).split(",") if str(t).strip()] if isinstance(
        args.rho, str
    ) else [args.rho]
    gtaus = (
        [t for t in str(args.gtau).split(",") if t.strip()] if args.gtau else ["linear"]
    )
    for g in gtaus:
        if g not in ("linear", "expdamped"):
            raise SystemExit(f"error: unknown gtau {g!r}")
    extra = {}
    if args.eps is not None:
        extra["eps"] = args.eps
    if args.eps_x is not None:
        extra["eps_x"] = args.eps_x
    if args.eps_f is not None:
        extra["eps_f"] = args.eps_f
    if args.max_iter is not None:
        extra["max_iter"] = args.max_iter
    configs = []
    for k in kinds:
        for rho in rhos:
            for g in gtaus:
                configs.append(
                    SolverConfig(
                        rho=rho,
                        scheme=RetractionScheme(
                            k, g, feasibility_control=not args.uncontrolled
                        ),
                        **extra,
                    )
                )
    if len(configs) < 2:
        raise SystemExit(
            "error: need >= 2 configurations (comma lists of --scheme/--rho/--gtau)"
        )

    # reuse the run-task builder for the problem instance (first rank only)
    args.ranks = None if args.p is not None else args.ranks
    base_args = argparse.Namespace(**vars(args))
    base_args.scheme = kinds[0]
    base_args.rho = rhos[0]
    base_args.gtau = None
    base_args.repeat = 1
    tasks = build_tasks(base_args)
    task = tasks[0]
    seeds = [args.seed + i for i in range(args.repeat)]
    rows = compare_schemes(task.problem, configs, seeds, x0=task.x0)

    stream, close = _open_out(args, "stiefelbb-compare.jsonl")
    try:
        for row in rows:
            stream.write(json.dumps(row) + "\n")
    finally:
        if close:
            stream.close()
    hdr = f"{'scheme':>9} {'rho':>6} {'gtau':>9} {'a.nfe':>10} {'a.s.ratio':>10}"
    print(hdr, file=sys.stderr)
    for row in rows:
        print(
            f"{row['scheme']:>9} {row['rho']:>6.3g} {row['gtau']:>9} "
            f"{row['a_nfe']:>10.1f} {row['a_s_ratio']:>10.2f}",
            file=sys.stderr,
        )
    return 0


def _cmd_drift(args) -> int:
    controlled = drift_demo(args.n, args.p, args.steps, True, seed=args.seed)
    plain = drift_demo(args.n, args.p, args.steps, False, seed=args.seed)
    stream, close = _open_out(args, "stiefelbb-drift.tsv")
    try:
        stream.write("# iter\tcontrolled\tuncontrolled\n")
        for k in range(max(len(controlled), len(plain))):
            c = f"{controlled[k]:.6e}" if k < len(controlled) else ""
            u = f"{plain[k]:.6e}" if k < len(plain) else ""
            stream.write(f"{k + 1}\t{c}\t{u}\n")
    finally:
        if close:
            stream.close()
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] not in ("run", "compare", "drift") and not argv[0].startswith(
        "-"
    ):
        argv = ["run"] + argv
    parser = _build_parser()
    _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 0
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "compare":
        return _cmd_compare(args)
    return _cmd_drift(args)


if __name__ == "__main__":
    sys.exit(main())
